#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vidrest/flow.hpp"
#include "vidrest/grid.hpp"
#include "vidrest/report.hpp"

namespace vidrest {

// Peak 1.0. Identical frames give +inf.
double psnr(const Frame& a, const Frame& b);

// Mean local SSIM over non-overlapping 8x8 windows (partial windows at the
// right/bottom edge included). Luminance is the channel mean; k1 = 0.01,
// k2 = 0.03, population statistics.
double ssim(const Frame& a, const Frame& b);

struct SequenceError {
    std::vector<double> values;
    double mean = 0.0;
};

// flows[t-1] / masks[t-1] live on frame t's grid and point into frame t-1.
// Per pair: mean over unoccluded pixels (weight 1 - mask) of the squared RGB
// distance between frame t and warp(frame t-1). A fully occluded pair scores 0.
SequenceError warping_error(const FrameSequence& seq, std::span<const FlowField> flows,
                            std::span<const OcclusionMask> masks);

// Triple centred on frame t = i + 1. to_prev[i] lives on frame t+1's grid and
// points into frame t-1; to_next[i] lives on frame t-1's grid and points into
// frame t+1. Halving them gives the mid-point fields used to pull frame t-1
// and frame t+1 onto frame t. Error is RMS x 255 over pixels at least
// `border` away from the edges. Throws Length when there are fewer than 3 frames.
SequenceError interpolation_error(const FrameSequence& seq, std::span<const FlowField> to_prev,
                                  std::span<const FlowField> to_next, int border = 0);

// Everything the consistency metrics need, estimated from a guide sequence.
struct ConsistencyFlows {
    std::vector<FlowField> warp_flows;
    std::vector<OcclusionMask> warp_masks;
    std::vector<FlowField> to_prev;
    std::vector<FlowField> to_next;
};

ConsistencyFlows consistency_flows(const FrameSequence& guide, const FlowParams& params);

// Consistency metrics of `seq` (E_inter skipped below 3 frames); PSNR/SSIM
// only when a reference is given.
MetricsReport measure(const FrameSequence& seq, const FrameSequence* ref, const ConsistencyFlows& flows);

} // namespace vidrest
