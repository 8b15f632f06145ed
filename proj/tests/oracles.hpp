#pragma once

// Straight scalar-loop reference implementations, written from the textbook
// definitions and sharing no code with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "vidrest/grid.hpp"
#include "vidrest/tokenmerge.hpp"

namespace oracle {

using vidrest::FlowField;
using vidrest::Grid;

inline Grid random_grid(std::mt19937_64& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Grid g(h, w, c);
    for (double& v : g.values()) v = u(rng);
    return g;
}

inline FlowField random_flow(std::mt19937_64& rng, int h, int w, double mag) {
    return FlowField(random_grid(rng, h, w, 2, -mag, mag));
}

inline double bilinear(const Grid& g, double y, double x, int k) {
    const double ymax = g.height() - 1, xmax = g.width() - 1;
    y = y < 0 ? 0 : (y > ymax ? ymax : y);
    x = x < 0 ? 0 : (x > xmax ? xmax : x);
    const int y0 = (int)std::floor(y), x0 = (int)std::floor(x);
    const int y1 = y0 + 1 < g.height() ? y0 + 1 : y0;
    const int x1 = x0 + 1 < g.width() ? x0 + 1 : x0;
    const double wy = y - y0, wx = x - x0;
    return g.at(y0, x0, k) * (1 - wy) * (1 - wx) + g.at(y0, x1, k) * (1 - wy) * wx +
           g.at(y1, x0, k) * wy * (1 - wx) + g.at(y1, x1, k) * wy * wx;
}

inline Grid warp(const Grid& g, const FlowField& f) {
    Grid out(g.height(), g.width(), g.channels());
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            for (int k = 0; k < g.channels(); ++k)
                out.at(y, x, k) = bilinear(g, y + f.at(y, x, 1), x + f.at(y, x, 0), k);
    return out;
}

inline Grid fb_confidence(const FlowField& fwd, const FlowField& bwd) {
    Grid out(fwd.height(), fwd.width(), 1);
    for (int y = 0; y < fwd.height(); ++y) {
        for (int x = 0; x < fwd.width(); ++x) {
            const double u = fwd.at(y, x, 0), v = fwd.at(y, x, 1);
            const double ru = u + bilinear(bwd, y + v, x + u, 0);
            const double rv = v + bilinear(bwd, y + v, x + u, 1);
            out.at(y, x) = std::exp(-(ru * ru + rv * rv));
        }
    }
    return out;
}

// Exhaustive SSD block matching, direct per-pixel loops.
inline FlowField block_match(const Grid& src, const Grid& dst, int block, int search) {
    const int h = src.height(), w = src.width(), c = src.channels();
    auto cl = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    FlowField f(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            int bm = 0, bdx = 0, bdy = 0;
            for (int dy = -search; dy <= search; ++dy) {
                for (int dx = -search; dx <= search; ++dx) {
                    double cost = 0;
                    for (int q = 0; q < block; ++q)
                        for (int p = 0; p < block; ++p) {
                            const int ry = y - block / 2 + q, rx = x - block / 2 + p;
                            for (int k = 0; k < c; ++k) {
                                const double d = src.at(cl(ry, h), cl(rx, w), k) -
                                                 dst.at(cl(ry + dy, h), cl(rx + dx, w), k);
                                cost += d * d;
                            }
                        }
                    const int m = dx * dx + dy * dy;
                    const bool better = cost < best - 1e-12 ||
                                        (std::abs(cost - best) <= 1e-12 &&
                                         (m < bm || (m == bm && (dy < bdy || (dy == bdy && dx < bdx)))));
                    if (better) {
                        best = cost;
                        bm = m;
                        bdx = dx;
                        bdy = dy;
                    }
                }
            }
            f.at(y, x, 0) = bdx;
            f.at(y, x, 1) = bdy;
        }
    }
    return f;
}

inline double cosine(const double* a, const double* b, int c) {
    double ab = 0, aa = 0, bb = 0;
    for (int k = 0; k < c; ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0 || bb == 0) return 0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Per source token (frame-order over non-target frames, then raster):
// argmax over target positions of cosine * exp(-floor(d2 / R)), R <= 0 meaning
// no weighting. Returns (target, score).
inline std::vector<std::pair<int, double>> cosine_match(const vidrest::TokenChunk& chunk, double R) {
    const auto& l = chunk.layout;
    std::vector<std::pair<int, double>> out;
    for (int f = 0; f < l.frames; ++f) {
        if (f == l.target_index) continue;
        for (int p = 0; p < l.tokens_per_frame(); ++p) {
            int best = -1;
            double bs = 0;
            for (int q = 0; q < l.tokens_per_frame(); ++q) {
                double s = cosine(chunk.token(f, p), chunk.token(l.target_index, q), l.channels);
                if (R > 0) {
                    const double dx = p % l.width - q % l.width, dy = p / l.width - q / l.width;
                    s *= std::exp(-std::floor((dx * dx + dy * dy) / R));
                }
                if (best < 0 || s > bs) {
                    best = q;
                    bs = s;
                }
            }
            out.push_back({best, bs});
        }
    }
    return out;
}

// Flow correspondence: (target or -1, criterion).
inline std::vector<std::pair<int, double>> flow_match(const vidrest::ChunkLayout& l, const std::vector<FlowField>& flows,
                                                      const std::vector<vidrest::ConfidenceMap>& conf) {
    std::vector<std::pair<int, double>> out;
    for (int b = 0; b < l.frames - 1; ++b) {
        for (int y = 0; y < l.height; ++y) {
            for (int x = 0; x < l.width; ++x) {
                const bool inside = y < l.content_height && x < l.content_width;
                const double px = x + flows[b].at(y, x, 0), py = y + flows[b].at(y, x, 1);
                const int tx = (int)std::lround(std::floor(px + 0.5));
                const int ty = (int)std::lround(std::floor(py + 0.5));
                if (inside && tx >= 0 && ty >= 0 && tx < l.content_width && ty < l.content_height)
                    out.push_back({ty * l.width + tx, conf[b].at(y, x)});
                else
                    out.push_back({-1, 0.0});
            }
        }
    }
    return out;
}

// E_warp for one pair; mask 1 = excluded.
inline double warp_error_pair(const Grid& prev, const Grid& cur, const FlowField& f, const Grid& mask) {
    double num = 0, den = 0;
    for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x) {
            if (mask.at(y, x) >= 1.0) continue;
            double d2 = 0;
            for (int k = 0; k < cur.channels(); ++k) {
                const double d = cur.at(y, x, k) - bilinear(prev, y + f.at(y, x, 1), x + f.at(y, x, 0), k);
                d2 += d * d;
            }
            num += d2;
            den += 1;
        }
    return den > 0 ? num / den : 0.0;
}

inline double inter_error_triple(const Grid& prev, const Grid& mid, const Grid& next, const FlowField& to_prev,
                                 const FlowField& to_next) {
    double se = 0;
    long n = 0;
    for (int y = 0; y < mid.height(); ++y)
        for (int x = 0; x < mid.width(); ++x)
            for (int k = 0; k < mid.channels(); ++k) {
                const double a = bilinear(prev, y + 0.5 * to_prev.at(y, x, 1), x + 0.5 * to_prev.at(y, x, 0), k);
                const double b = bilinear(next, y + 0.5 * to_next.at(y, x, 1), x + 0.5 * to_next.at(y, x, 0), k);
                const double d = (a + b) / 2 - mid.at(y, x, k);
                se += d * d;
                ++n;
            }
    return 255.0 * std::sqrt(se / n);
}

inline vidrest::TokenChunk random_chunk(std::mt19937_64& rng, int frames, int h, int w, int c, int ch, int cw,
                                        int target) {
    vidrest::ChunkLayout l{frames, h, w, c, ch, cw, target};
    vidrest::TokenChunk chunk(l);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : chunk.tokens) v = n(rng);
    return chunk;
}

} // namespace oracle
