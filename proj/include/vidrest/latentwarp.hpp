#pragma once

#include <span>
#include <vector>

#include "vidrest/grid.hpp"

namespace vidrest {

// x0 = (x_t - sqrt(1 - abar) * eps) / sqrt(abar). Throws Parameter unless
// abar is in (0, 1].
LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double abar);

// out = M * own + (1 - M) * warp(source, flow), elementwise. The mask may be
// soft (values in [0, 1]); 1 keeps the frame's own latent.
LatentGrid blend_warped(const LatentGrid& own, const LatentGrid& source, const FlowField& flow, const Grid& mask);

// Sequential keyframe chain: keyframe i takes warped content from the already
// updated keyframe i-1. flows[i-1] / masks[i-1] belong to the pair
// (i-1 -> i) and live on keyframe i's grid.
std::vector<LatentGrid> warp_keyframe_chain(std::vector<LatentGrid> keyframes, std::span<const FlowField> flows,
                                            std::span<const OcclusionMask> masks);

// Star propagation from batch[key_index] to every other member. flows/masks
// hold one entry per non-key member in batch order, each on that member's grid.
std::vector<LatentGrid> propagate_to_batch(std::vector<LatentGrid> batch, int key_index,
                                           std::span<const FlowField> flows, std::span<const OcclusionMask> masks);

} // namespace vidrest
