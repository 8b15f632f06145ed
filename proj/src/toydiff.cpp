#include "vidrest/toydiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "vidrest/latentwarp.hpp"

namespace vidrest {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw Error(ErrorKind::Parameter, "schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw Error(ErrorKind::Parameter, "betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.alphas.resize(T);
    s.abars.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alphas[t] = 1.0 - beta;
        prod *= s.alphas[t];
        s.abars[t] = prod;
    }
    return s;
}

LatentGrid forward_diffuse(const LatentGrid& x0, int t, const LatentGrid& eps, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.length()) {
        throw Error(ErrorKind::Index, "timestep " + std::to_string(t) + " outside [0, " +
                                          std::to_string(sched.length()) + ")");
    }
    if (!x0.same_shape(eps)) throw Error(ErrorKind::Shape, "noise shape differs from latent shape");
    const double a = std::sqrt(sched.abars[t]);
    const double n = std::sqrt(1.0 - sched.abars[t]);
    LatentGrid out(x0.height(), x0.width(), x0.channels());
    auto xv = x0.values();
    auto ev = eps.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = a * xv[i] + n * ev[i];
    return out;
}

std::vector<int> sampling_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) {
        throw Error(ErrorKind::Parameter, "sampling steps must be in [1, " + std::to_string(T) + "]");
    }
    std::vector<int> ts(steps);
    if (steps == 1) {
        ts[0] = T - 1;
        return ts;
    }
    for (int k = 0; k < steps; ++k) {
        ts[k] = static_cast<int>(std::floor(static_cast<double>(T - 1) * (steps - 1 - k) / (steps - 1) + 0.5));
    }
    return ts;
}

TokenMatrix frame_masked_attention(const TokenMatrix& rows, std::span<const std::uint64_t> frame_masks) {
    if (frame_masks.size() != static_cast<std::size_t>(rows.rows)) {
        throw Error(ErrorKind::Shape, "one frame mask per token row required");
    }
    const int c = rows.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    std::map<std::uint64_t, std::vector<int>> keys_for;
    for (std::uint64_t m : frame_masks) {
        if (m == 0) throw Error(ErrorKind::Parameter, "token row without a frame");
        if (keys_for.count(m)) continue;
        std::vector<int> keys;
        for (int j = 0; j < rows.rows; ++j) {
            if (frame_masks[j] & m) keys.push_back(j);
        }
        keys_for.emplace(m, std::move(keys));
    }

    TokenMatrix out(rows.rows, c);
    std::vector<double> logits;
    for (int i = 0; i < rows.rows; ++i) {
        const auto& keys = keys_for.at(frame_masks[i]);
        const double* q = rows.row(i);
        logits.resize(keys.size());
        double mx = -INFINITY;
        for (std::size_t n = 0; n < keys.size(); ++n) {
            const double* k = rows.row(keys[n]);
            logits[n] = std::inner_product(q, q + c, k, 0.0) * scale;
            mx = std::max(mx, logits[n]);
        }
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            sum += l;
        }
        double* o = out.row(i);
        for (std::size_t n = 0; n < keys.size(); ++n) {
            const double* v = rows.row(keys[n]);
            const double wgt = logits[n] / sum;
            for (int ch = 0; ch < c; ++ch) o[ch] += wgt * v[ch];
        }
    }
    return out;
}

TokenChunk default_attention(const TokenChunk& chunk) {
    auto [content, pad] = strip_padding(chunk);
    const ChunkLayout& l = content.layout;
    TokenMatrix rows(l.slot_count(), l.channels);
    rows.data = content.tokens;
    std::vector<std::uint64_t> masks(rows.rows);
    for (int i = 0; i < rows.rows; ++i) masks[i] = std::uint64_t{1} << (i / l.tokens_per_frame());
    content.tokens = frame_masked_attention(rows, masks).data;
    return restore_padding(content, pad);
}

ToyDenoiser::Dense ToyDenoiser::make_dense(int in, int out, double scale, double bias_scale, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Dense d{in, out, std::vector<double>(static_cast<std::size_t>(in) * out), std::vector<double>(out)};
    for (double& w : d.w) w = normal(rng) * scale;
    for (double& b : d.b) b = normal(rng) * bias_scale;
    return d;
}

void ToyDenoiser::apply(const Dense& d, const double* x, double* y) {
    for (int o = 0; o < d.out; ++o) y[o] = d.b[o];
    for (int i = 0; i < d.in; ++i) {
        const double xi = x[i];
        const double* row = d.w.data() + static_cast<std::size_t>(i) * d.out;
        for (int o = 0; o < d.out; ++o) y[o] += xi * row[o];
    }
}

ToyDenoiser::ToyDenoiser(std::uint64_t seed, DenoiserConfig config) : config_(config) {
    const int lc = config_.latent_channels;
    const int f = config_.features;
    if (lc < 1 || f < 2 || f % 2 != 0 || config_.pos_freqs < 0 || config_.pad_multiple < 2 ||
        config_.pad_multiple % 2 != 0) {
        throw Error(ErrorKind::Parameter, "denoiser needs latent channels >= 1, even features >= 2, even pad multiple");
    }
    if (!(config_.prior_std > 0.0)) throw Error(ErrorKind::Parameter, "prior_std must be > 0");
    std::mt19937_64 rng(seed);
    const double inv_f = 1.0 / std::sqrt(static_cast<double>(f));
    embed_ = make_dense(2 * lc, f, 1.0 / std::sqrt(2.0 * lc), 0.1, rng);
    time_ = make_dense(f, f, inv_f, 0.0, rng);
    for (auto& p : proj_) {
        p = make_dense(lc + f, f, config_.gain * 1.0 / std::sqrt(static_cast<double>(lc + f)), 0.0, rng);
    }
    head_ = make_dense(f, lc, inv_f, 0.1, rng);
}

std::vector<double> ToyDenoiser::weights() const {
    std::vector<double> all;
    auto add = [&](const Dense& d) {
        all.insert(all.end(), d.w.begin(), d.w.end());
        all.insert(all.end(), d.b.begin(), d.b.end());
    };
    add(embed_);
    add(time_);
    for (const auto& p : proj_) add(p);
    add(head_);
    return all;
}

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// cos/sin codes of x and y at periods 4, 8, 16, ... token cells.
void positional_code(int y, int x, int freqs, double scale, double* out) {
    for (int q = 0; q < freqs; ++q) {
        const double w = std::numbers::pi / std::ldexp(2.0, q);
        out[4 * q + 0] = scale * std::cos(w * x);
        out[4 * q + 1] = scale * std::sin(w * x);
        out[4 * q + 2] = scale * std::cos(w * y);
        out[4 * q + 3] = scale * std::sin(w * y);
    }
}

} // namespace

std::vector<LatentGrid> ToyDenoiser::predict_noise(std::span<const LatentGrid> x_t, std::span<const LatentGrid> cond,
                                                   int t, double abar, int step_index, int target_index,
                                                   const AttentionHook& hook) const {
    const int lc = config_.latent_channels;
    const int nf = config_.features;
    const int np = 4 * config_.pos_freqs;
    const int c = config_.channels();
    const int fo = lc + np; // offset of the feature channels
    if (x_t.empty() || x_t.size() != cond.size()) {
        throw Error(ErrorKind::Shape, "denoiser needs matching non-empty latent and condition batches");
    }
    if (x_t.size() > 64) throw Error(ErrorKind::Shape, "batch larger than 64 frames");
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        if (!x_t[i].same_shape(x_t[0]) || !cond[i].same_shape(x_t[0]) || x_t[0].channels() != lc) {
            throw Error(ErrorKind::Shape, "batch latent " + std::to_string(i) + " has shape " +
                                              x_t[i].shape_string() + ", expected " + x_t[0].shape_string() +
                                              " with " + std::to_string(lc) + " channels");
        }
    }
    if (!(abar > 0.0 && abar < 1.0)) throw Error(ErrorKind::Parameter, "abar must be in (0, 1) for noise prediction");

    const int frames = static_cast<int>(x_t.size());
    const int h = x_t[0].height();
    const int w = x_t[0].width();
    const int pm = config_.pad_multiple;

    ChunkLayout l0{frames, round_up(h, pm), round_up(w, pm), c, h, w, target_index};
    ChunkLayout l1{frames, l0.height / 2, l0.width / 2, c, (h + 1) / 2, (w + 1) / 2, target_index};
    l0.validate();

    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    const double prior = config_.prior_std * config_.prior_std;
    const double gain = abar * prior / (abar * prior + 1.0 - abar);

    std::vector<double> temb(nf), sinus(nf);
    for (int k = 0; k < nf / 2; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / (nf / 2));
        sinus[2 * k] = std::sin(t * freq);
        sinus[2 * k + 1] = std::cos(t * freq);
    }
    apply(time_, sinus.data(), temb.data());

    TokenChunk e(l0);
    std::vector<double> in(2 * lc);
    for (int f = 0; f < frames; ++f) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double* tok = e.token(f, y * l0.width + x);
                for (int k = 0; k < lc; ++k) {
                    const double xt = x_t[f].at(y, x, k);
                    const double cd = cond[f].at(y, x, k);
                    tok[k] = (1.0 - gain) * cd + gain * xt / sa;
                    in[k] = xt;
                    in[lc + k] = cd;
                }
                apply(embed_, in.data(), tok + fo);
                for (int k = 0; k < nf; ++k) tok[fo + k] += temb[k];
            }
        }
    }

    const AttentionFn attend = [](const TokenMatrix& rows, std::span<const std::uint64_t> masks) {
        return frame_masked_attention(rows, masks);
    };
    std::vector<double> sf(lc + nf);
    auto block = [&](TokenChunk hin, int index, BlockKind kind, int level) {
        const ChunkLayout& l = hin.layout;
        TokenChunk y(l);
        for (int f = 0; f < frames; ++f) {
            for (int yy = 0; yy < l.height; ++yy) {
                for (int xx = 0; xx < l.width; ++xx) {
                    double* src = hin.token(f, yy * l.width + xx);
                    positional_code(yy, xx, config_.pos_freqs, config_.pos_scale, src + lc);
                    double* dst = y.token(f, yy * l.width + xx);
                    for (int k = 0; k < lc; ++k) dst[k] = config_.signal_scale * src[k];
                    std::copy_n(src + lc, np, dst + lc);
                    std::copy_n(src, lc, sf.data());
                    std::copy_n(src + fo, nf, sf.data() + lc);
                    apply(proj_[index], sf.data(), dst + fo);
                }
            }
        }
        TokenChunk att;
        if (hook) {
            att = hook(AttentionSite{kind, index, level}, step_index, y, attend);
            if (att.layout != y.layout || att.tokens.size() != y.tokens.size()) {
                throw Error(ErrorKind::Shape, "attention hook changed the token layout");
            }
        } else {
            att = default_attention(y);
        }
        const std::size_t slots = l.slot_count();
        for (std::size_t s = 0; s < slots; ++s) {
            double* o = hin.tokens.data() + s * c;
            const double* a = att.tokens.data() + s * c;
            for (int k = 0; k < lc; ++k) o[k] = a[k] / config_.signal_scale;
            for (int k = fo; k < c; ++k) o[k] += a[k];
        }
        return hin;
    };

    const TokenChunk h1 = block(e, 0, BlockKind::Down, 0);

    TokenChunk pooled(l1);
    for (int f = 0; f < frames; ++f) {
        for (int y = 0; y < l1.content_height; ++y) {
            for (int x = 0; x < l1.content_width; ++x) {
                double* dst = pooled.token(f, y * l1.width + x);
                int n = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        if (!l0.in_content(2 * y + dy, 2 * x + dx)) continue;
                        const double* src = h1.token(f, (2 * y + dy) * l0.width + 2 * x + dx);
                        for (int k = 0; k < c; ++k) dst[k] += src[k];
                        ++n;
                    }
                }
                for (int k = 0; k < c; ++k) dst[k] /= n;
            }
        }
    }

    const TokenChunk h2 = block(pooled, 1, BlockKind::Down, 1);
    const TokenChunk u1 = block(h2, 2, BlockKind::Up, 1);

    TokenChunk up = h1;
    for (int f = 0; f < frames; ++f) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double* dst = up.token(f, y * l0.width + x);
                const double* src = u1.token(f, (y / 2) * l1.width + x / 2);
                for (int k = 0; k < lc; ++k) dst[k] = 0.5 * (dst[k] + src[k]);
                for (int k = fo; k < c; ++k) dst[k] += src[k];
            }
        }
    }
    const TokenChunk u2 = block(up, 3, BlockKind::Up, 0);

    std::vector<LatentGrid> eps;
    eps.reserve(frames);
    std::vector<double> d(lc);
    for (int f = 0; f < frames; ++f) {
        LatentGrid out(h, w, lc);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double* tok = u2.token(f, y * l0.width + x);
                apply(head_, tok + fo, d.data());
                for (int k = 0; k < lc; ++k) {
                    const double x0 = tok[k] + config_.detail * std::tanh(d[k]);
                    out.at(y, x, k) = (x_t[f].at(y, x, k) - sa * x0) / sn;
                }
            }
        }
        eps.push_back(std::move(out));
    }
    return eps;
}

std::vector<LatentGrid> denoise_step(const std::vector<LatentGrid>& x_t, std::span<const LatentGrid> cond,
                                     int step_index, int t, int t_prev, const ToyDenoiser& denoiser,
                                     const HookSet& hooks, const NoiseSchedule& sched, int target_index) {
    if (t < 0 || t >= sched.length() || t_prev >= sched.length() || (t_prev >= 0 && t_prev >= t)) {
        throw Error(ErrorKind::Index, "invalid timestep pair " + std::to_string(t) + " -> " + std::to_string(t_prev));
    }
    const double abar = sched.abars[t];
    const auto eps = denoiser.predict_noise(x_t, cond, t, abar, step_index, target_index, hooks.attention_hook);

    std::vector<LatentGrid> x0;
    x0.reserve(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) x0.push_back(predict_x0(x_t[i], eps[i], abar));
    if (hooks.latent_hook) {
        x0 = hooks.latent_hook(step_index, t, std::move(x0));
        if (x0.size() != x_t.size()) throw Error(ErrorKind::Shape, "latent hook changed the batch size");
        for (std::size_t i = 0; i < x0.size(); ++i) {
            if (!x0[i].same_shape(x_t[i])) {
                throw Error(ErrorKind::Shape, "latent hook returned " + x0[i].shape_string() + ", expected " +
                                                  x_t[i].shape_string());
            }
        }
    }

    const double ap = t_prev < 0 ? 1.0 : sched.abars[t_prev];
    const double a = std::sqrt(ap);
    const double n = std::sqrt(1.0 - ap);
    std::vector<LatentGrid> out;
    out.reserve(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        LatentGrid next(x0[i].height(), x0[i].width(), x0[i].channels());
        auto xv = x0[i].values();
        auto ev = eps[i].values();
        auto nv = next.values();
        for (std::size_t j = 0; j < nv.size(); ++j) nv[j] = a * xv[j] + n * ev[j];
        out.push_back(std::move(next));
    }
    return out;
}

std::vector<LatentGrid> sample(std::vector<LatentGrid> x_T, std::span<const LatentGrid> cond,
                               const ToyDenoiser& denoiser, const HookSet& hooks, const NoiseSchedule& sched,
                               int steps, int target_index) {
    const auto ts = sampling_timesteps(sched.length(), steps);
    for (int k = 0; k < steps; ++k) {
        const int t_prev = k + 1 < steps ? ts[k + 1] : -1;
        x_T = denoise_step(x_T, cond, k, ts[k], t_prev, denoiser, hooks, sched, target_index);
    }
    return x_T;
}

} // namespace vidrest
