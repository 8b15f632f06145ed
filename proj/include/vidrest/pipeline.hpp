#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "vidrest/flow.hpp"
#include "vidrest/grid.hpp"
#include "vidrest/report.hpp"
#include "vidrest/tokenmerge.hpp"
#include "vidrest/toydiff.hpp"

namespace vidrest {

inline constexpr int kScheduleLength = 1000;
inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;

struct Config {
    int batch_size = 8;
    int steps = 50;
    std::uint64_t seed = 0;
    double hlw_until = 0.2;
    // Anneal window; unset means 60% / 100% of the step count.
    std::optional<int> tome_i_beg;
    std::optional<int> tome_i_end;
    double tome_delta = 1.0;
    double tome_r = 0.8;
    double tome_R = 4.0;
    // Steps [tome_start, tome_stop) run merging; unset stop means all steps.
    int tome_start = 0;
    std::optional<int> tome_stop;
    MergeMode down_mode = MergeMode::Flow;
    MergeMode up_mode = MergeMode::Cosine;
    bool down_spatial = false;
    bool up_spatial = true;
    int flow_block = 7;
    int flow_search = 4;
    double flow_tau_occ = kDefaultTauOcc;
    int latent_scale = 4;
    // Toy model constants; not settable from config files.
    DenoiserConfig denoiser;

    // Throws Config on any inconsistency.
    void validate() const;

    FlowParams flow_params() const { return {flow_block, flow_search, flow_tau_occ}; }
    AnnealParams anneal() const;
    int tome_end_step() const { return tome_stop.value_or(steps); }
    bool hlw_active(int step) const { return static_cast<double>(step) / steps < hlw_until; }
    bool tome_active(int step) const { return step >= tome_start && step < tome_end_step(); }
};

struct ConfigKey {
    const char* name;
    const char* help;
};

// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Sets one key from its textual value. Throws Config for unknown keys or
// unparsable values.
void apply_setting(Config& config, const std::string& key, const std::string& value);

// `key = value` lines; '#' starts a comment; blank lines ignored.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});

std::vector<std::pair<std::string, std::string>> config_echo(const Config& config);

struct BatchPlan {
    int batch_size = 1;
    std::vector<std::pair<int, int>> batches; // [begin, end) frame ranges
    std::vector<int> keyframe_of;             // absolute frame index per batch
    std::uint64_t seed = 0;

    friend bool operator==(const BatchPlan&, const BatchPlan&) = default;
};

BatchPlan plan_batches(int n, int batch_size, std::uint64_t seed);

struct PairFlow {
    FlowField flow; // on `ref`'s grid, pointing into `other`
    ConfidenceMap confidence;
    OcclusionMask mask;
};

// Flows for the (ref, other) pairs the pipeline and metrics need: each
// keyframe to the previous keyframe, each batch member to its keyframe, and
// each frame to its predecessor. Resampled copies are cached per resolution.
class FlowBank {
public:
    FlowBank() = default;
    FlowBank(const FrameSequence& lq, const BatchPlan& plan, const FlowParams& params);

    bool has(int ref, int other) const { return pairs_.count({ref, other}) != 0; }
    const PairFlow& pair(int ref, int other) const;
    // Flow rescaled to (h, w), confidence bilinearly, mask nearest.
    const PairFlow& at(int ref, int other, int h, int w) const;

    const BatchPlan& plan() const noexcept { return plan_; }
    const FlowParams& params() const noexcept { return params_; }
    std::size_t pair_count() const noexcept { return pairs_.size(); }

private:
    void add(const FrameSequence& lq, int ref, int other);

    BatchPlan plan_;
    FlowParams params_;
    int height_ = 0;
    int width_ = 0;
    std::map<std::pair<int, int>, PairFlow> pairs_;
    mutable std::map<std::tuple<int, int, int, int>, PairFlow> resampled_;
};

FlowBank precompute_flows(const FrameSequence& lq, const BatchPlan& plan, const FlowParams& params);

struct HookCounters {
    long latent_calls = 0;
    long attention_calls = 0;
};

struct RestoreResult {
    FrameSequence frames;
    std::vector<LatentGrid> latents; // final clean latents, one per frame
    HookCounters counters;
};

// Encode = area downsample by latent_scale; decode = bilinear upsample + clamp.
LatentGrid encode_frame(const Frame& frame, int latent_scale);
Frame decode_latent(const LatentGrid& latent, int height, int width);

// Seeded standard-normal noise for one frame index.
LatentGrid frame_noise(std::uint64_t seed, int frame_index, int h, int w, int c);

ToyDenoiser make_denoiser(const Config& config);

// `bank` may be shared across runs with the same plan and flow params;
// otherwise flows are computed when a mechanism needs them.
RestoreResult restore(const FrameSequence& seq, const Config& config, const FlowBank* bank = nullptr);

// Every frame sampled alone with no hooks.
RestoreResult restore_per_frame(const FrameSequence& seq, const Config& config);

struct Variant {
    std::string group; // "correspondence" or "stage"
    std::string name;
    Config config;
};

std::vector<Variant> ablation_variants(const Config& base);

struct VariantResult {
    Variant variant;
    MetricsReport report;
};

// Runs every variant; consistency flows come from `guide` when given,
// otherwise from the input.
std::vector<VariantResult> ablate(const FrameSequence& seq, const Config& base, const FrameSequence* guide = nullptr,
                                  const FrameSequence* ref = nullptr);

nlohmann::ordered_json ablation_to_json(const std::vector<VariantResult>& results);

const char* to_string(MergeMode mode) noexcept;

} // namespace vidrest
