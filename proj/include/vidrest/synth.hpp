#pragma once

#include <cstdint>

#include "vidrest/grid.hpp"

namespace vidrest {

struct DemoParams {
    int frames = 24;
    int height = 48;
    int width = 64;
    double shift_x = 0.8; // pixels per frame
    double shift_y = 0.5;
    double rotate_deg = 0.3; // degrees per frame, about the frame centre
    int downscale = 4;
    double noise_sigma = 0.04;
};

// Procedural colour texture (Gaussian blobs over gratings) moving by a
// constant translation plus rotation, sampled analytically per frame.
FrameSequence synth_video(std::uint64_t seed, const DemoParams& params = {});

// Area downsample by `downscale`, add seeded per-frame Gaussian noise, clamp,
// then bilinear upsample back to the original size.
FrameSequence degrade(const FrameSequence& hq, std::uint64_t seed, const DemoParams& params = {});

} // namespace vidrest
