#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "vidrest/grid.hpp"
#include "vidrest/tokenmerge.hpp"

namespace vidrest {

struct NoiseSchedule {
    std::vector<double> alphas;
    std::vector<double> abars; // cumulative products of alphas

    int length() const noexcept { return static_cast<int>(alphas.size()); }
};

// Linearly spaced betas, alpha = 1 - beta, abar = running product.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. Throws Index for t outside [0, T).
LatentGrid forward_diffuse(const LatentGrid& x0, int t, const LatentGrid& eps, const NoiseSchedule& sched);

// Descending, evenly strided subset of [0, T) with `steps` entries, starting at T-1.
std::vector<int> sampling_timesteps(int T, int steps);

enum class BlockKind { Down, Up };

struct AttentionSite {
    BlockKind kind = BlockKind::Down;
    int block = 0; // 0..3 in execution order
    int level = 0; // 0 = latent resolution, 1 = half resolution
};

// Replaces the predicted clean latents of the whole batch at one step.
using LatentHook = std::function<std::vector<LatentGrid>(int step_index, int t, std::vector<LatentGrid> x0)>;
// Wraps one self-attention call. Must return a chunk with the input's layout.
using AttentionHook =
    std::function<TokenChunk(const AttentionSite& site, int step_index, const TokenChunk& chunk, const AttentionFn& attend)>;

struct HookSet {
    LatentHook latent_hook;
    AttentionHook attention_hook;
};

// softmax(q k^T / sqrt(C)) v with q = k = v = the rows; row i only sees rows
// sharing a frame bit with it. Each row's result depends only on its key rows
// in order, so per-frame attention is reproduced bit-for-bit by any superset
// chunk with singleton masks.
TokenMatrix frame_masked_attention(const TokenMatrix& rows, std::span<const std::uint64_t> frame_masks);

// Per-frame attention over the content tokens; padding rows pass through.
TokenChunk default_attention(const TokenChunk& chunk);

struct DenoiserConfig {
    int latent_channels = 3;
    int features = 12;      // free feature channels per token
    int pos_freqs = 4;      // positional frequencies per axis (cos + sin each)
    int pad_multiple = 4;   // latents are zero-padded up to a multiple of this
    double detail = 0.05;   // amplitude of the hallucinated detail term
    double prior_std = 0.1; // spread of the clean-latent prior around the network mean
    double pos_scale = 2.9; // positional part of the attention logits
    double signal_scale = 1.0;
    double gain = 1.0; // scale of the block projections

    int channels() const noexcept { return latent_channels + 4 * pos_freqs + features; }
};

// Untrained stand-in for an LQ-conditioned restoration UNet: two down blocks
// and two up blocks at latent and half resolution, each a token projection,
// a hookable self-attention and a residual add. A token is
// [signal | positional code | features]. The signal starts as the Wiener
// blend of the condition and x_t / sqrt(abar) and is replaced by its
// attention average in every block, so attention acts as a local non-local-
// means filter. The prediction is x0 = signal + detail * tanh(head(features)).
class ToyDenoiser {
public:
    explicit ToyDenoiser(std::uint64_t seed, DenoiserConfig config = {});

    std::vector<LatentGrid> predict_noise(std::span<const LatentGrid> x_t, std::span<const LatentGrid> cond, int t,
                                          double abar, int step_index, int target_index,
                                          const AttentionHook& hook) const;

    const DenoiserConfig& config() const noexcept { return config_; }
    std::vector<double> weights() const;

    struct Dense {
        int in = 0;
        int out = 0;
        std::vector<double> w; // in x out
        std::vector<double> b; // out
    };

private:
    static Dense make_dense(int in, int out, double scale, double bias_scale, std::mt19937_64& rng);
    static void apply(const Dense& d, const double* x, double* y);

    DenoiserConfig config_;
    Dense embed_;
    Dense time_;
    Dense proj_[4];
    Dense head_;
};

// One DDIM (eta = 0) step over a batch: predict noise, form x0, let the latent
// hook replace it, then x_prev = sqrt(abar_prev) x0 + sqrt(1 - abar_prev) eps.
// t_prev < 0 means the final step (abar_prev = 1).
std::vector<LatentGrid> denoise_step(const std::vector<LatentGrid>& x_t, std::span<const LatentGrid> cond,
                                     int step_index, int t, int t_prev, const ToyDenoiser& denoiser,
                                     const HookSet& hooks, const NoiseSchedule& sched, int target_index);

std::vector<LatentGrid> sample(std::vector<LatentGrid> x_T, std::span<const LatentGrid> cond,
                               const ToyDenoiser& denoiser, const HookSet& hooks, const NoiseSchedule& sched,
                               int steps, int target_index);

} // namespace vidrest
