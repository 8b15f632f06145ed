#include "vidrest/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "vidrest/flow.hpp"

namespace vidrest {

namespace {

struct Blob {
    double x, y, radius;
    double color[3];
};

struct Grating {
    double kx, ky, phase;
    double weight[3];
};

struct Texture {
    std::vector<Blob> blobs;
    std::vector<Grating> gratings;
    double base[3];

    double eval(double x, double y, int k) const {
        double v = base[k];
        for (const auto& g : gratings) v += g.weight[k] * std::sin(g.kx * x + g.ky * y + g.phase);
        for (const auto& b : blobs) {
            const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
            v += b.color[k] * std::exp(-d2 / (2.0 * b.radius * b.radius));
        }
        return std::clamp(v, 0.0, 1.0);
    }
};

Texture make_texture(std::uint64_t seed, double extent) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Texture t;
    for (double& b : t.base) b = 0.35 + 0.3 * u(rng);
    for (int i = 0; i < 5; ++i) {
        Grating g;
        const double freq = 0.25 + 0.6 * u(rng);
        const double angle = std::numbers::pi * u(rng);
        g.kx = freq * std::cos(angle);
        g.ky = freq * std::sin(angle);
        g.phase = 2.0 * std::numbers::pi * u(rng);
        for (double& w : g.weight) w = 0.05 + 0.08 * u(rng);
        t.gratings.push_back(g);
    }
    for (int i = 0; i < 40; ++i) {
        Blob b;
        b.x = (u(rng) - 0.5) * 2.0 * extent;
        b.y = (u(rng) - 0.5) * 2.0 * extent;
        b.radius = 1.5 + 4.0 * u(rng);
        for (double& c : b.color) c = (u(rng) - 0.5) * 0.8;
        t.blobs.push_back(b);
    }
    return t;
}

} // namespace

FrameSequence synth_video(std::uint64_t seed, const DemoParams& p) {
    const double extent = std::max(p.height, p.width) + p.frames * (std::abs(p.shift_x) + std::abs(p.shift_y));
    const Texture tex = make_texture(seed, extent);
    const double cy = 0.5 * (p.height - 1);
    const double cx = 0.5 * (p.width - 1);
    FrameSequence seq;
    for (int f = 0; f < p.frames; ++f) {
        const double theta = p.rotate_deg * f * std::numbers::pi / 180.0;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        Frame frame(p.height, p.width, 3);
        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) {
                // Content at texture point q appears at R(theta) q + shift * f.
                const double dx = x - cx - p.shift_x * f;
                const double dy = y - cy - p.shift_y * f;
                const double tx = c * dx + s * dy;
                const double ty = -s * dx + c * dy;
                for (int k = 0; k < 3; ++k) frame.at(y, x, k) = tex.eval(tx, ty, k);
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

FrameSequence degrade(const FrameSequence& hq, std::uint64_t seed, const DemoParams& p) {
    hq.validate();
    FrameSequence out;
    out.frame_rate = hq.frame_rate;
    for (std::size_t i = 0; i < hq.size(); ++i) {
        Grid small = area_downsample(hq.frames[i], p.downscale);
        std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(i), 0x64656772u};
        std::mt19937_64 rng(ss);
        std::normal_distribution<double> noise(0.0, p.noise_sigma);
        for (double& v : small.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
        Frame up = resize_bilinear(small, hq.height(), hq.width());
        for (double& v : up.values()) v = std::clamp(v, 0.0, 1.0);
        out.frames.push_back(std::move(up));
    }
    return out;
}

} // namespace vidrest
