#include "vidrest/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "vidrest/latentwarp.hpp"
#include "vidrest/metrics.hpp"

namespace vidrest {

const char* to_string(MergeMode mode) noexcept { return mode == MergeMode::Flow ? "flow" : "cosine"; }

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error(ErrorKind::Config, "bad value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
    T out{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) bad_value(key, value, expected);
    return out;
}

int parse_int(const std::string& key, const std::string& value) { return parse_number<int>(key, value, "an integer"); }

double parse_real(const std::string& key, const std::string& value) {
    const double v = parse_number<double>(key, value, "a number");
    if (!std::isfinite(v)) bad_value(key, value, "a finite number");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "true or false");
}

MergeMode parse_mode(const std::string& key, const std::string& value) {
    if (value == "flow") return MergeMode::Flow;
    if (value == "cosine") return MergeMode::Cosine;
    bad_value(key, value, "flow or cosine");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string num(double v) { return nlohmann::json(v).dump(); }

} // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"batch_size", "frames per batch, 1..64 (default 8)"},
        {"steps", "sampling steps, 1..1000 (default 50)"},
        {"seed", "seed for noise, keyframes and denoiser weights (default 0)"},
        {"hlw_until", "latent warping runs while step/steps < this, in [0, 1] (default 0.2)"},
        {"tome.i_beg", "step where merge-ratio annealing starts (default 60% of steps)"},
        {"tome.i_end", "step where the merge ratio reaches 0 for delta = 1 (default steps)"},
        {"tome.delta", "annealing speed, > 0 (default 1)"},
        {"tome.r", "base merge ratio in [0, 1] (default 0.8)"},
        {"tome.R", "spatial weighting radius in token units squared, > 0 (default 4)"},
        {"tome.start", "first step with token merging (default 0)"},
        {"tome.stop", "first step without token merging (default steps)"},
        {"tome.down_mode", "down-block correspondence: flow or cosine (default flow)"},
        {"tome.up_mode", "up-block correspondence: flow or cosine (default cosine)"},
        {"tome.down_spatial", "spatial weighting in cosine down blocks (default false)"},
        {"tome.up_spatial", "spatial weighting in cosine up blocks (default true)"},
        {"flow.block", "block-matching patch size, >= 1 (default 7)"},
        {"flow.search", "block-matching search radius in pixels, >= 0 (default 4)"},
        {"flow.tau_occ", "occlusion threshold on the forward-backward confidence, in (0, 1] (default 0.368)"},
        {"latent_scale", "frame-to-latent downsampling factor, >= 1 (default 4)"},
    };
    return keys;
}

void apply_setting(Config& c, const std::string& key, const std::string& value) {
    if (key == "batch_size") c.batch_size = parse_int(key, value);
    else if (key == "steps") c.steps = parse_int(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value, "a non-negative integer");
    else if (key == "hlw_until") c.hlw_until = parse_real(key, value);
    else if (key == "tome.i_beg") c.tome_i_beg = parse_int(key, value);
    else if (key == "tome.i_end") c.tome_i_end = parse_int(key, value);
    else if (key == "tome.delta") c.tome_delta = parse_real(key, value);
    else if (key == "tome.r") c.tome_r = parse_real(key, value);
    else if (key == "tome.R") c.tome_R = parse_real(key, value);
    else if (key == "tome.start") c.tome_start = parse_int(key, value);
    else if (key == "tome.stop") c.tome_stop = parse_int(key, value);
    else if (key == "tome.down_mode") c.down_mode = parse_mode(key, value);
    else if (key == "tome.up_mode") c.up_mode = parse_mode(key, value);
    else if (key == "tome.down_spatial") c.down_spatial = parse_bool(key, value);
    else if (key == "tome.up_spatial") c.up_spatial = parse_bool(key, value);
    else if (key == "flow.block") c.flow_block = parse_int(key, value);
    else if (key == "flow.search") c.flow_search = parse_int(key, value);
    else if (key == "flow.tau_occ") c.flow_tau_occ = parse_real(key, value);
    else if (key == "latent_scale") c.latent_scale = parse_int(key, value);
    else throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
}

Config parse_config(const std::string& text, Config base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": empty key or value");
        }
        apply_setting(base, key, value);
    }
    return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

AnnealParams Config::anneal() const {
    AnnealParams a;
    a.ratio = tome_r;
    a.delta = tome_delta;
    a.begin = tome_i_beg.value_or(static_cast<int>(std::floor(0.6 * steps)));
    a.end = tome_i_end.value_or(steps);
    return a;
}

void Config::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
    if (batch_size < 1 || batch_size > 64) fail("batch_size must be in [1, 64]");
    if (steps < 1 || steps > kScheduleLength) fail("steps must be in [1, " + std::to_string(kScheduleLength) + "]");
    if (!(hlw_until >= 0.0 && hlw_until <= 1.0)) fail("hlw_until must be in [0, 1]");
    if (!(tome_r >= 0.0 && tome_r <= 1.0)) fail("tome.r must be in [0, 1]");
    if (!(tome_delta > 0.0)) fail("tome.delta must be > 0");
    if (!(tome_R > 0.0)) fail("tome.R must be > 0");
    const AnnealParams a = anneal();
    if (a.begin < 0 || a.begin >= a.end || a.end > steps) fail("need 0 <= tome.i_beg < tome.i_end <= steps");
    if (tome_start < 0 || tome_start > tome_end_step() || tome_end_step() > steps) {
        fail("need 0 <= tome.start <= tome.stop <= steps");
    }
    if (flow_block < 1) fail("flow.block must be >= 1");
    if (flow_search < 0) fail("flow.search must be >= 0");
    if (!(flow_tau_occ > 0.0 && flow_tau_occ <= 1.0)) fail("flow.tau_occ must be in (0, 1]");
    if (latent_scale < 1) fail("latent_scale must be >= 1");
}

std::vector<std::pair<std::string, std::string>> config_echo(const Config& c) {
    const AnnealParams a = c.anneal();
    return {
        {"batch_size", std::to_string(c.batch_size)},
        {"steps", std::to_string(c.steps)},
        {"seed", std::to_string(c.seed)},
        {"hlw_until", num(c.hlw_until)},
        {"tome.i_beg", std::to_string(a.begin)},
        {"tome.i_end", std::to_string(a.end)},
        {"tome.delta", num(c.tome_delta)},
        {"tome.r", num(c.tome_r)},
        {"tome.R", num(c.tome_R)},
        {"tome.start", std::to_string(c.tome_start)},
        {"tome.stop", std::to_string(c.tome_end_step())},
        {"tome.down_mode", to_string(c.down_mode)},
        {"tome.up_mode", to_string(c.up_mode)},
        {"tome.down_spatial", c.down_spatial ? "true" : "false"},
        {"tome.up_spatial", c.up_spatial ? "true" : "false"},
        {"flow.block", std::to_string(c.flow_block)},
        {"flow.search", std::to_string(c.flow_search)},
        {"flow.tau_occ", num(c.flow_tau_occ)},
        {"latent_scale", std::to_string(c.latent_scale)},
    };
}

BatchPlan plan_batches(int n, int batch_size, std::uint64_t seed) {
    if (n < 1 || batch_size < 1) throw Error(ErrorKind::Parameter, "plan needs n >= 1 and B >= 1");
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.seed = seed;
    std::mt19937_64 rng(seed);
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        std::uniform_int_distribution<int> pick(0, end - begin - 1);
        plan.batches.emplace_back(begin, end);
        plan.keyframe_of.push_back(begin + pick(rng));
    }
    return plan;
}

FlowBank::FlowBank(const FrameSequence& lq, const BatchPlan& plan, const FlowParams& params)
    : plan_(plan), params_(params), height_(lq.height()), width_(lq.width()) {
    lq.validate();
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const auto [begin, end] = plan.batches[b];
        if (begin < 0 || end > static_cast<int>(lq.size())) throw Error(ErrorKind::Index, "plan exceeds the video");
        const int key = plan.keyframe_of[b];
        if (b > 0) add(lq, key, plan.keyframe_of[b - 1]);
        for (int i = begin; i < end; ++i) {
            if (i != key) add(lq, i, key);
        }
    }
    for (int t = 1; t < static_cast<int>(lq.size()); ++t) add(lq, t, t - 1);
}

void FlowBank::add(const FrameSequence& lq, int ref, int other) {
    if (has(ref, other)) return;
    PairFlow p;
    p.flow = estimate_flow(lq.frames[ref], lq.frames[other], params_.block, params_.search);
    const FlowField back = estimate_flow(lq.frames[other], lq.frames[ref], params_.block, params_.search);
    p.confidence = fb_confidence(p.flow, back);
    p.mask = threshold_confidence(p.confidence, params_.tau_occ);
    pairs_.emplace(std::make_pair(ref, other), std::move(p));
}

const PairFlow& FlowBank::pair(int ref, int other) const {
    const auto it = pairs_.find({ref, other});
    if (it == pairs_.end()) {
        throw Error(ErrorKind::Index, "no flow for frame pair (" + std::to_string(ref) + ", " +
                                          std::to_string(other) + ")");
    }
    return it->second;
}

const PairFlow& FlowBank::at(int ref, int other, int h, int w) const {
    const PairFlow& full = pair(ref, other);
    if (h == height_ && w == width_) return full;
    const auto key = std::make_tuple(ref, other, h, w);
    auto it = resampled_.find(key);
    if (it == resampled_.end()) {
        PairFlow p{resample_flow(full.flow, h, w), resample_confidence(full.confidence, h, w),
                   resample_mask(full.mask, h, w)};
        it = resampled_.emplace(key, std::move(p)).first;
    }
    return it->second;
}

FlowBank precompute_flows(const FrameSequence& lq, const BatchPlan& plan, const FlowParams& params) {
    return FlowBank(lq, plan, params);
}

LatentGrid encode_frame(const Frame& frame, int latent_scale) { return area_downsample(frame, latent_scale); }

Frame decode_latent(const LatentGrid& latent, int height, int width) {
    Frame out = resize_bilinear(latent, height, width);
    for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

LatentGrid frame_noise(std::uint64_t seed, int frame_index, int h, int w, int c) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(frame_index), 0x6e6f6973u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentGrid g(h, w, c);
    for (double& v : g.values()) v = normal(rng);
    return g;
}

ToyDenoiser make_denoiser(const Config& config) { return ToyDenoiser(config.seed ^ 0x9e3779b97f4a7c15ull, config.denoiser); }

namespace {

struct Prepared {
    NoiseSchedule sched;
    std::vector<int> ts;
    std::vector<LatentGrid> cond;
    std::vector<LatentGrid> x_T;
};

Prepared prepare(const FrameSequence& seq, const Config& config) {
    config.validate();
    seq.validate();
    if (seq.empty()) throw Error(ErrorKind::Shape, "cannot restore an empty video");
    Prepared p;
    p.sched = make_schedule(kScheduleLength, kBetaStart, kBetaEnd);
    p.ts = sampling_timesteps(kScheduleLength, config.steps);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        LatentGrid c = encode_frame(seq.frames[i], config.latent_scale);
        const LatentGrid eps = frame_noise(config.seed, static_cast<int>(i), c.height(), c.width(), c.channels());
        p.x_T.push_back(forward_diffuse(c, kScheduleLength - 1, eps, p.sched));
        p.cond.push_back(std::move(c));
    }
    return p;
}

RestoreResult finish(const FrameSequence& seq, std::vector<LatentGrid> latents, HookCounters counters) {
    RestoreResult r;
    r.frames.frame_rate = seq.frame_rate;
    for (const auto& l : latents) r.frames.frames.push_back(decode_latent(l, seq.height(), seq.width()));
    r.latents = std::move(latents);
    r.counters = counters;
    return r;
}

} // namespace

RestoreResult restore(const FrameSequence& seq, const Config& config, const FlowBank* bank) {
    Prepared p = prepare(seq, config);
    const int n = static_cast<int>(seq.size());
    const BatchPlan plan = plan_batches(n, config.batch_size, config.seed);
    const int steps = config.steps;

    bool any_hlw = false, any_tome = false;
    for (int k = 0; k < steps; ++k) {
        any_hlw = any_hlw || config.hlw_active(k);
        any_tome = any_tome || config.tome_active(k);
    }
    const bool flow_merge =
        any_tome && (config.down_mode == MergeMode::Flow || config.up_mode == MergeMode::Flow);

    FlowBank own;
    if (bank) {
        const FlowParams fp = config.flow_params();
        if (bank->plan() != plan || bank->params().block != fp.block || bank->params().search != fp.search ||
            bank->params().tau_occ != fp.tau_occ) {
            throw Error(ErrorKind::Config, "shared flow bank was built for a different plan or flow parameters");
        }
    } else if (any_hlw || flow_merge) {
        own = FlowBank(seq, plan, config.flow_params());
        bank = &own;
    }

    const ToyDenoiser denoiser = make_denoiser(config);
    const AnnealParams anneal = config.anneal();
    HookCounters counters;
    std::vector<LatentGrid> out(n);

    std::vector<std::optional<LatentGrid>> prev_key(steps);
    int prev_key_frame = -1;

    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const auto [begin, end] = plan.batches[b];
        const int key = plan.keyframe_of[b];
        const int key_local = key - begin;
        const int size = end - begin;
        std::vector<LatentGrid> x(p.x_T.begin() + begin, p.x_T.begin() + end);
        const std::span<const LatentGrid> cond(p.cond.data() + begin, size);
        std::vector<std::optional<LatentGrid>> cur_key(steps);

        for (int k = 0; k < steps; ++k) {
            HookSet hooks;
            if (config.hlw_active(k)) {
                hooks.latent_hook = [&](int step, int, std::vector<LatentGrid> x0) {
                    ++counters.latent_calls;
                    const int h = x0[0].height();
                    const int w = x0[0].width();
                    if (prev_key_frame >= 0 && prev_key[step]) {
                        const PairFlow& pf = bank->at(key, prev_key_frame, h, w);
                        std::vector<LatentGrid> chain{*prev_key[step], x0[key_local]};
                        x0[key_local] = warp_keyframe_chain(std::move(chain), std::span(&pf.flow, 1),
                                                            std::span(&pf.mask, 1))[1];
                    }
                    cur_key[step] = x0[key_local];
                    std::vector<FlowField> flows;
                    std::vector<OcclusionMask> masks;
                    for (int i = begin; i < end; ++i) {
                        if (i == key) continue;
                        const PairFlow& pf = bank->at(i, key, h, w);
                        flows.push_back(pf.flow);
                        masks.push_back(pf.mask);
                    }
                    return propagate_to_batch(std::move(x0), key_local, flows, masks);
                };
            }
            if (config.tome_active(k) && size >= 2) {
                const double ratio = anneal_ratio(k, anneal);
                hooks.attention_hook = [&, ratio](const AttentionSite& site, int, const TokenChunk& chunk,
                                                  const AttentionFn& attend) {
                    ++counters.attention_calls;
                    const bool down = site.kind == BlockKind::Down;
                    MergePassOptions opts;
                    opts.mode = down ? config.down_mode : config.up_mode;
                    opts.ratio = ratio;
                    if (opts.mode == MergeMode::Cosine && (down ? config.down_spatial : config.up_spatial)) {
                        opts.spatial_radius = config.tome_R;
                    }
                    std::vector<FlowField> flows;
                    std::vector<ConfidenceMap> confs;
                    if (opts.mode == MergeMode::Flow) {
                        const ChunkLayout& l = chunk.layout;
                        for (int s = 0; s < l.frames - 1; ++s) {
                            const PairFlow& pf = bank->at(begin + l.source_frame(s), key, l.content_height,
                                                          l.content_width);
                            flows.push_back(pf.flow);
                            confs.push_back(pf.confidence);
                        }
                    }
                    return hybrid_merge_pass(chunk, opts, flows, confs, attend);
                };
            }
            const int t_prev = k + 1 < steps ? p.ts[k + 1] : -1;
            x = denoise_step(x, cond, k, p.ts[k], t_prev, denoiser, hooks, p.sched, key_local);
        }
        for (int i = 0; i < size; ++i) out[begin + i] = std::move(x[i]);
        prev_key = std::move(cur_key);
        prev_key_frame = key;
    }
    return finish(seq, std::move(out), counters);
}

RestoreResult restore_per_frame(const FrameSequence& seq, const Config& config) {
    Prepared p = prepare(seq, config);
    const ToyDenoiser denoiser = make_denoiser(config);
    std::vector<LatentGrid> out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        auto x = sample({p.x_T[i]}, std::span(&p.cond[i], 1), denoiser, {}, p.sched, config.steps, 0);
        out.push_back(std::move(x[0]));
    }
    return finish(seq, std::move(out), {});
}

std::vector<Variant> ablation_variants(const Config& base) {
    std::vector<Variant> v;
    auto corr = [&](const char* name, MergeMode down, MergeMode up, bool spatial) {
        Config c = base;
        c.down_mode = down;
        c.up_mode = up;
        c.down_spatial = false;
        c.up_spatial = spatial;
        v.push_back({"correspondence", name, c});
    };
    corr("flow_flow", MergeMode::Flow, MergeMode::Flow, false);
    corr("cos_cos", MergeMode::Cosine, MergeMode::Cosine, false);
    corr("cos_flow", MergeMode::Cosine, MergeMode::Flow, false);
    corr("flow_cos", MergeMode::Flow, MergeMode::Cosine, false);
    corr("flow_cos_spatial", MergeMode::Flow, MergeMode::Cosine, true);

    const int s = base.steps;
    const int third = s / 3;
    auto stage = [&](const char* name, double hlw_until, int tome_start, int tome_stop) {
        Config c = base;
        c.hlw_until = hlw_until;
        c.tome_start = tome_start;
        c.tome_stop = tome_stop;
        v.push_back({"stage", name, c});
    };
    stage("none", 0.0, 0, 0);
    stage("hlw_early_tome_early", 1.0 / 3.0, 0, third);
    stage("hlw_early_mid_tome_all", 2.0 / 3.0, 0, s);
    stage("hlw_all_tome_all", 1.0, 0, s);
    stage("hlw_early_tome_all", 1.0 / 3.0, 0, s);
    return v;
}

std::vector<VariantResult> ablate(const FrameSequence& seq, const Config& base, const FrameSequence* guide,
                                  const FrameSequence* ref) {
    base.validate();
    seq.validate();
    const auto variants = ablation_variants(base);
    const BatchPlan plan = plan_batches(static_cast<int>(seq.size()), base.batch_size, base.seed);
    const FlowBank bank(seq, plan, base.flow_params());
    const ConsistencyFlows cf = consistency_flows(guide ? *guide : seq, base.flow_params());

    std::vector<VariantResult> results;
    for (const auto& v : variants) {
        const RestoreResult r = restore(seq, v.config, &bank);
        MetricsReport report = measure(r.frames, ref, cf);
        report.metadata = config_echo(v.config);
        results.push_back({v, std::move(report)});
    }
    return results;
}

nlohmann::ordered_json ablation_to_json(const std::vector<VariantResult>& results) {
    nlohmann::ordered_json j;
    j["correspondence"] = nlohmann::ordered_json::array();
    j["stage"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json row;
        row["name"] = r.variant.name;
        row["down"] = to_string(r.variant.config.down_mode);
        row["up"] = to_string(r.variant.config.up_mode);
        row["up_spatial"] = r.variant.config.up_spatial;
        row["hlw_until"] = r.variant.config.hlw_until;
        row["tome_start"] = r.variant.config.tome_start;
        row["tome_stop"] = r.variant.config.tome_end_step();
        const nlohmann::ordered_json m = report_to_json(r.report);
        row["e_warp_mean"] = m["e_warp"]["mean"];
        row["e_warp_mean_x1e3"] = m["e_warp"]["mean_x1e3"];
        row["e_inter_mean"] = m["e_inter"]["mean"];
        row["psnr_mean"] = m["psnr"]["mean"];
        row["ssim_mean"] = m["ssim"]["mean"];
        j[r.variant.group].push_back(row);
    }
    return j;
}

} // namespace vidrest
