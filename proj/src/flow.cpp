#include "vidrest/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace vidrest {

namespace {

struct Displacement {
    int dx;
    int dy;
};

std::vector<Displacement> candidates_in_tie_order(int search) {
    std::vector<Displacement> out;
    for (int dy = -search; dy <= search; ++dy) {
        for (int dx = -search; dx <= search; ++dx) out.push_back({dx, dy});
    }
    std::stable_sort(out.begin(), out.end(), [](const Displacement& a, const Displacement& b) {
        return a.dx * a.dx + a.dy * a.dy < b.dx * b.dx + b.dy * b.dy;
    });
    return out;
}

void require_resample_size(int h2, int w2) {
    if (h2 < 1 || w2 < 1) throw Error(ErrorKind::Parameter, "resample target must be at least 1x1");
}

double source_coord(int dst, int src_extent, int dst_extent) {
    return (dst + 0.5) * static_cast<double>(src_extent) / dst_extent - 0.5;
}

} // namespace

FlowField estimate_flow(const Frame& src, const Frame& dst, int block, int search) {
    if (!src.same_shape(dst)) {
        throw Error(ErrorKind::Shape, "estimate_flow: " + src.shape_string() + " vs " + dst.shape_string());
    }
    if (block < 1) throw Error(ErrorKind::Parameter, "block must be >= 1");
    if (search < 0) throw Error(ErrorKind::Parameter, "search must be >= 0");

    const int h = src.height(), w = src.width(), c = src.channels();
    const int lo = -(block / 2);
    // Extended domain covering every patch sample.
    const int eh = h + block - 1, ew = w + block - 1;

    FlowField flow(h, w);
    std::vector<double> best(static_cast<std::size_t>(h) * w, std::numeric_limits<double>::infinity());
    std::vector<double> diff(static_cast<std::size_t>(eh) * ew);
    std::vector<double> cols(static_cast<std::size_t>(h) * ew);

    for (const auto [dx, dy] : candidates_in_tie_order(search)) {
        for (int ey = 0; ey < eh; ++ey) {
            const int ry = ey + lo;
            const int sy = std::clamp(ry, 0, h - 1);
            const int ty = std::clamp(ry + dy, 0, h - 1);
            for (int ex = 0; ex < ew; ++ex) {
                const int rx = ex + lo;
                const int sx = std::clamp(rx, 0, w - 1);
                const int tx = std::clamp(rx + dx, 0, w - 1);
                double acc = 0.0;
                for (int k = 0; k < c; ++k) {
                    const double d = src.at(sy, sx, k) - dst.at(ty, tx, k);
                    acc += d * d;
                }
                diff[static_cast<std::size_t>(ey) * ew + ex] = acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int ex = 0; ex < ew; ++ex) {
                double acc = 0.0;
                for (int q = 0; q < block; ++q) acc += diff[static_cast<std::size_t>(y + q) * ew + ex];
                cols[static_cast<std::size_t>(y) * ew + ex] = acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int q = 0; q < block; ++q) acc += cols[static_cast<std::size_t>(y) * ew + x + q];
                double& b = best[static_cast<std::size_t>(y) * w + x];
                if (acc < b) {
                    b = acc;
                    flow.u(y, x) = dx;
                    flow.v(y, x) = dy;
                }
            }
        }
    }
    return flow;
}

double sample_bilinear(const Grid& g, double y, double x, int k) noexcept {
    const int h = g.height(), w = g.width();
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    const double top = (1.0 - fx) * g.at(y0, x0, k) + fx * g.at(y0, x1, k);
    const double bot = (1.0 - fx) * g.at(y1, x0, k) + fx * g.at(y1, x1, k);
    return (1.0 - fy) * top + fy * bot;
}

Grid warp(const Grid& grid, const FlowField& flow) {
    if (!grid.same_extent(flow)) {
        throw Error(ErrorKind::Shape, "warp: grid " + grid.shape_string() + " vs flow " + flow.shape_string());
    }
    Grid out(grid.height(), grid.width(), grid.channels());
    for (int y = 0; y < grid.height(); ++y) {
        for (int x = 0; x < grid.width(); ++x) {
            const double sy = y + flow.v(y, x);
            const double sx = x + flow.u(y, x);
            for (int k = 0; k < grid.channels(); ++k) out.at(y, x, k) = sample_bilinear(grid, sy, sx, k);
        }
    }
    return out;
}

ConfidenceMap fb_confidence(const FlowField& fwd, const FlowField& bwd) {
    if (!fwd.same_shape(bwd)) {
        throw Error(ErrorKind::Shape, "fb_confidence: " + fwd.shape_string() + " vs " + bwd.shape_string());
    }
    ConfidenceMap conf(fwd.height(), fwd.width());
    for (int y = 0; y < fwd.height(); ++y) {
        for (int x = 0; x < fwd.width(); ++x) {
            const double u = fwd.u(y, x), v = fwd.v(y, x);
            const double ru = u + sample_bilinear(bwd, y + v, x + u, 0);
            const double rv = v + sample_bilinear(bwd, y + v, x + u, 1);
            conf.at(y, x) = std::max(std::exp(-(ru * ru + rv * rv)), std::numeric_limits<double>::min());
        }
    }
    return conf;
}

OcclusionMask threshold_confidence(const ConfidenceMap& confidence, double tau_occ) {
    if (!(tau_occ > 0.0 && tau_occ <= 1.0)) throw Error(ErrorKind::Parameter, "tau_occ must be in (0, 1]");
    OcclusionMask mask(confidence.height(), confidence.width());
    for (int y = 0; y < confidence.height(); ++y) {
        for (int x = 0; x < confidence.width(); ++x) mask.at(y, x) = confidence.at(y, x) < tau_occ ? 1.0 : 0.0;
    }
    return mask;
}

OcclusionMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tau_occ) {
    return threshold_confidence(fb_confidence(fwd, bwd), tau_occ);
}

Grid resize_bilinear(const Grid& grid, int h2, int w2) {
    require_resample_size(h2, w2);
    Grid out(h2, w2, grid.channels());
    for (int y = 0; y < h2; ++y) {
        const double sy = source_coord(y, grid.height(), h2);
        for (int x = 0; x < w2; ++x) {
            const double sx = source_coord(x, grid.width(), w2);
            for (int k = 0; k < grid.channels(); ++k) out.at(y, x, k) = sample_bilinear(grid, sy, sx, k);
        }
    }
    return out;
}

FlowField resample_flow(const FlowField& flow, int h2, int w2) {
    FlowField out(resize_bilinear(flow, h2, w2));
    const double su = static_cast<double>(w2) / flow.width();
    const double sv = static_cast<double>(h2) / flow.height();
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            out.u(y, x) *= su;
            out.v(y, x) *= sv;
        }
    }
    return out;
}

OcclusionMask resample_mask(const OcclusionMask& mask, int h2, int w2) {
    require_resample_size(h2, w2);
    OcclusionMask out(h2, w2);
    for (int y = 0; y < h2; ++y) {
        const int sy = std::min(static_cast<int>(std::floor((y + 0.5) * mask.height() / h2)), mask.height() - 1);
        for (int x = 0; x < w2; ++x) {
            const int sx = std::min(static_cast<int>(std::floor((x + 0.5) * mask.width() / w2)), mask.width() - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

ConfidenceMap resample_confidence(const ConfidenceMap& confidence, int h2, int w2) {
    Grid g = resize_bilinear(confidence, h2, w2);
    ConfidenceMap out(h2, w2);
    std::copy(g.values().begin(), g.values().end(), out.values().begin());
    return out;
}

Grid area_downsample(const Grid& grid, int factor) {
    if (factor < 1) throw Error(ErrorKind::Parameter, "downsample factor must be >= 1");
    const int h2 = (grid.height() + factor - 1) / factor;
    const int w2 = (grid.width() + factor - 1) / factor;
    Grid out(h2, w2, grid.channels());
    for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
            const int y1 = std::min((y + 1) * factor, grid.height());
            const int x1 = std::min((x + 1) * factor, grid.width());
            const double n = static_cast<double>((y1 - y * factor) * (x1 - x * factor));
            for (int k = 0; k < grid.channels(); ++k) {
                double acc = 0.0;
                for (int yy = y * factor; yy < y1; ++yy) {
                    for (int xx = x * factor; xx < x1; ++xx) acc += grid.at(yy, xx, k);
                }
                out.at(y, x, k) = acc / n;
            }
        }
    }
    return out;
}

} // namespace vidrest
