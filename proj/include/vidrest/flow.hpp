#pragma once

#include "vidrest/grid.hpp"

namespace vidrest {

// e^-1: a forward-backward residual of one pixel sits exactly on the threshold.
inline constexpr double kDefaultTauOcc = 0.368;

struct FlowParams {
    int block = 7;
    int search = 4;
    double tau_occ = kDefaultTauOcc;
};

// Exhaustive block matching. The result is defined on `src`'s grid and points
// into `dst`: src(p) ~ dst(p + f(p)), so warp(dst, f) aligns dst onto src.
// Cost is the SSD over a block x block patch with clamped borders; ties go to
// the smallest displacement magnitude, then raster order (dy, then dx).
FlowField estimate_flow(const Frame& src, const Frame& dst, int block, int search);

// Bilinear sample with coordinates clamped to the valid rectangle.
double sample_bilinear(const Grid& grid, double y, double x, int channel) noexcept;

// Backward warp: out(p) = grid(p + flow(p)).
Grid warp(const Grid& grid, const FlowField& flow);

// sigma(p) = exp(-|fwd(p) + bwd(p + fwd(p))|^2), bwd sampled bilinearly.
// Underflow is clamped to the smallest positive double so values stay in (0, 1].
ConfidenceMap fb_confidence(const FlowField& fwd, const FlowField& bwd);

// 1 where confidence < tau_occ.
OcclusionMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tau_occ);
OcclusionMask threshold_confidence(const ConfidenceMap& confidence, double tau_occ);

// Half-pixel-centred bilinear resampling; displacements rescaled by w2/w, h2/h.
FlowField resample_flow(const FlowField& flow, int h2, int w2);
// Nearest-neighbour, so the mask stays binary.
OcclusionMask resample_mask(const OcclusionMask& mask, int h2, int w2);
ConfidenceMap resample_confidence(const ConfidenceMap& confidence, int h2, int w2);

// Same sampling grid as resample_flow, values untouched.
Grid resize_bilinear(const Grid& grid, int h2, int w2);
// Mean over factor x factor cells; partial cells at the border average what exists.
Grid area_downsample(const Grid& grid, int factor);

} // namespace vidrest
