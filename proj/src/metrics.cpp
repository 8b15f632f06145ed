#include "vidrest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vidrest {

namespace {

void check_same(const Frame& a, const Frame& b, const char* what) {
    if (!a.same_shape(b) || a.empty()) {
        throw Error(ErrorKind::Shape, std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

double mean_or_zero(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

FlowField halved(const FlowField& f) {
    FlowField out = f;
    for (double& v : out.values()) v *= 0.5;
    return out;
}

} // namespace

double psnr(const Frame& a, const Frame& b) {
    check_same(a, b, "psnr");
    auto av = a.values();
    auto bv = b.values();
    double se = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) se += (av[i] - bv[i]) * (av[i] - bv[i]);
    const double mse = se / static_cast<double>(av.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Frame& a, const Frame& b) {
    check_same(a, b, "ssim");
    constexpr int win = 8;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int h = a.height();
    const int w = a.width();
    const int ch = a.channels();
    auto lum = [&](const Frame& f, int y, int x) {
        double s = 0.0;
        for (int k = 0; k < ch; ++k) s += f.at(y, x, k);
        return s / ch;
    };
    double total = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 < h; y0 += win) {
        for (int x0 = 0; x0 < w; x0 += win) {
            const int y1 = std::min(h, y0 + win);
            const int x1 = std::min(w, x0 + win);
            const double n = static_cast<double>((y1 - y0) * (x1 - x0));
            double ma = 0.0, mb = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    ma += lum(a, y, x);
                    mb += lum(b, y, x);
                }
            }
            ma /= n;
            mb /= n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double da = lum(a, y, x) - ma;
                    const double db = lum(b, y, x) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / windows;
}

SequenceError warping_error(const FrameSequence& seq, std::span<const FlowField> flows,
                            std::span<const OcclusionMask> masks) {
    const std::size_t n = seq.size();
    if (n == 0 || flows.size() != n - 1 || masks.size() != n - 1) {
        throw Error(ErrorKind::Config, "warping error needs one flow and mask per adjacent pair");
    }
    SequenceError out;
    for (std::size_t t = 1; t < n; ++t) {
        const Frame& cur = seq.frames[t];
        const FlowField& f = flows[t - 1];
        const OcclusionMask& m = masks[t - 1];
        if (!cur.same_extent(f) || !cur.same_extent(m) || !cur.same_shape(seq.frames[t - 1])) {
            throw Error(ErrorKind::Shape, "warping error: flow/mask resolution differs from the frames");
        }
        const Grid warped = warp(seq.frames[t - 1], f);
        double num = 0.0, den = 0.0;
        for (int y = 0; y < cur.height(); ++y) {
            for (int x = 0; x < cur.width(); ++x) {
                const double wgt = 1.0 - m.at(y, x);
                if (wgt <= 0.0) continue;
                double d2 = 0.0;
                for (int k = 0; k < cur.channels(); ++k) {
                    const double d = cur.at(y, x, k) - warped.at(y, x, k);
                    d2 += d * d;
                }
                num += wgt * d2;
                den += wgt;
            }
        }
        out.values.push_back(den > 0.0 ? num / den : 0.0);
    }
    out.mean = mean_or_zero(out.values);
    return out;
}

SequenceError interpolation_error(const FrameSequence& seq, std::span<const FlowField> to_prev,
                                  std::span<const FlowField> to_next, int border) {
    const std::size_t n = seq.size();
    if (n < 3) throw Error(ErrorKind::Length, "sequence too short for interpolation error (needs 3 frames)");
    if (to_prev.size() != n - 2 || to_next.size() != n - 2) {
        throw Error(ErrorKind::Config, "interpolation error needs one flow pair per interior frame");
    }
    if (border < 0) throw Error(ErrorKind::Parameter, "border must be >= 0");
    SequenceError out;
    for (std::size_t i = 0; i + 2 < n; ++i) {
        const Frame& prev = seq.frames[i];
        const Frame& mid = seq.frames[i + 1];
        const Frame& next = seq.frames[i + 2];
        if (!mid.same_extent(to_prev[i]) || !mid.same_extent(to_next[i])) {
            throw Error(ErrorKind::Shape, "interpolation error: flow resolution differs from the frames");
        }
        const Grid a = warp(prev, halved(to_prev[i]));
        const Grid b = warp(next, halved(to_next[i]));
        double se = 0.0;
        std::size_t count = 0;
        for (int y = border; y < mid.height() - border; ++y) {
            for (int x = border; x < mid.width() - border; ++x) {
                for (int k = 0; k < mid.channels(); ++k) {
                    const double d = 0.5 * (a.at(y, x, k) + b.at(y, x, k)) - mid.at(y, x, k);
                    se += d * d;
                    ++count;
                }
            }
        }
        out.values.push_back(count ? 255.0 * std::sqrt(se / static_cast<double>(count)) : 0.0);
    }
    out.mean = mean_or_zero(out.values);
    return out;
}

ConsistencyFlows consistency_flows(const FrameSequence& guide, const FlowParams& params) {
    guide.validate();
    ConsistencyFlows cf;
    const auto& f = guide.frames;
    for (std::size_t t = 1; t < f.size(); ++t) {
        FlowField fwd = estimate_flow(f[t], f[t - 1], params.block, params.search);
        const FlowField bwd = estimate_flow(f[t - 1], f[t], params.block, params.search);
        cf.warp_masks.push_back(occlusion_mask(fwd, bwd, params.tau_occ));
        cf.warp_flows.push_back(std::move(fwd));
    }
    for (std::size_t t = 1; t + 1 < f.size(); ++t) {
        cf.to_prev.push_back(estimate_flow(f[t + 1], f[t - 1], params.block, 2 * params.search));
        cf.to_next.push_back(estimate_flow(f[t - 1], f[t + 1], params.block, 2 * params.search));
    }
    return cf;
}

MetricsReport measure(const FrameSequence& seq, const FrameSequence* ref, const ConsistencyFlows& flows) {
    seq.validate();
    MetricsReport r;
    if (ref) {
        if (ref->size() != seq.size()) throw Error(ErrorKind::Shape, "reference has a different frame count");
        for (std::size_t i = 0; i < seq.size(); ++i) {
            r.psnr.push_back(psnr(seq.frames[i], ref->frames[i]));
            r.ssim.push_back(ssim(seq.frames[i], ref->frames[i]));
        }
    }
    if (seq.size() >= 2) r.e_warp = warping_error(seq, flows.warp_flows, flows.warp_masks).values;
    if (seq.size() >= 3) r.e_inter = interpolation_error(seq, flows.to_prev, flows.to_next).values;
    return r;
}

} // namespace vidrest
