#include "vidrest/tokenmerge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace vidrest {

TokenMatrix::TokenMatrix(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

void ChunkLayout::validate() const {
    if (frames < 1 || frames > 64) throw Error(ErrorKind::Shape, "chunk needs 1..64 frames");
    if (height < 1 || width < 1 || channels < 1) throw Error(ErrorKind::Shape, "empty token layout");
    if (content_height < 1 || content_width < 1 || content_height > height || content_width > width) {
        throw Error(ErrorKind::Shape, "content extent must lie inside the token layout");
    }
    if (target_index < 0 || target_index >= frames) throw Error(ErrorKind::Index, "target index out of range");
}

TokenChunk::TokenChunk(const ChunkLayout& l, double fill)
    : layout(l), tokens(static_cast<std::size_t>(l.slot_count()) * l.channels, fill) {}

void TokenChunk::validate() const {
    layout.validate();
    if (tokens.size() != static_cast<std::size_t>(layout.slot_count()) * layout.channels) {
        throw Error(ErrorKind::Shape, "token count does not match layout");
    }
}

SrcTarSplit split_src_tar(const TokenChunk& chunk) {
    chunk.validate();
    const ChunkLayout& l = chunk.layout;
    if (l.frames < 2) throw Error(ErrorKind::Parameter, "nothing to merge: chunk has a single frame");
    const int a = l.tokens_per_frame();
    const int c = l.channels;

    SrcTarSplit s{l, TokenMatrix(l.source_count(), c), TokenMatrix(a, c)};
    for (int b = 0; b < l.frames - 1; ++b) {
        const int f = l.source_frame(b);
        for (int p = 0; p < a; ++p) std::copy_n(chunk.token(f, p), c, s.src.row(b * a + p));
    }
    for (int p = 0; p < a; ++p) std::copy_n(chunk.token(l.target_index, p), c, s.tar.row(p));
    return s;
}

ScoreMatrix cosine_scores(const TokenMatrix& src, const TokenMatrix& tar) {
    if (src.cols != tar.cols) throw Error(ErrorKind::Shape, "source and target channel counts differ");
    if (src.cols < 1) throw Error(ErrorKind::Shape, "tokens need at least one channel");
    auto norms = [](const TokenMatrix& m) {
        std::vector<double> n(m.rows);
        for (int i = 0; i < m.rows; ++i) {
            const double* r = m.row(i);
            n[i] = std::sqrt(std::inner_product(r, r + m.cols, r, 0.0));
        }
        return n;
    };
    const auto ns = norms(src);
    const auto nt = norms(tar);

    ScoreMatrix s{src.rows, tar.rows, std::vector<double>(static_cast<std::size_t>(src.rows) * tar.rows, 0.0)};
    for (int i = 0; i < src.rows; ++i) {
        if (ns[i] == 0.0) continue;
        const double* a = src.row(i);
        for (int j = 0; j < tar.rows; ++j) {
            if (nt[j] == 0.0) continue;
            const double* b = tar.row(j);
            s.at(i, j) = std::inner_product(a, a + src.cols, b, 0.0) / (ns[i] * nt[j]);
        }
    }
    return s;
}

std::vector<TokenPos> target_positions(const ChunkLayout& l) {
    std::vector<TokenPos> out;
    out.reserve(l.tokens_per_frame());
    for (int y = 0; y < l.height; ++y) {
        for (int x = 0; x < l.width; ++x) out.push_back({static_cast<double>(x), static_cast<double>(y)});
    }
    return out;
}

std::vector<TokenPos> source_positions(const ChunkLayout& l) {
    const auto per_frame = target_positions(l);
    std::vector<TokenPos> out;
    out.reserve(static_cast<std::size_t>(l.source_count()));
    for (int b = 0; b < l.frames - 1; ++b) out.insert(out.end(), per_frame.begin(), per_frame.end());
    return out;
}

ScoreMatrix spatial_weight(const ScoreMatrix& scores, std::span<const TokenPos> src_pos,
                           std::span<const TokenPos> tar_pos, double radius) {
    if (!(radius > 0.0)) throw Error(ErrorKind::Parameter, "spatial radius R must be > 0");
    if (src_pos.size() != static_cast<std::size_t>(scores.rows) ||
        tar_pos.size() != static_cast<std::size_t>(scores.cols)) {
        throw Error(ErrorKind::Shape, "position count does not match score matrix");
    }
    ScoreMatrix out = scores;
    for (int i = 0; i < scores.rows; ++i) {
        for (int j = 0; j < scores.cols; ++j) {
            const double dx = src_pos[i].x - tar_pos[j].x;
            const double dy = src_pos[i].y - tar_pos[j].y;
            const double tau = std::floor((dx * dx + dy * dy) / radius);
            out.at(i, j) = scores.at(i, j) * std::exp(-tau);
        }
    }
    return out;
}

Correspondence cosine_correspondence(const ScoreMatrix& scores) {
    Correspondence corr(scores.rows);
    if (scores.cols == 0) return corr;
    for (int i = 0; i < scores.rows; ++i) {
        int best = 0;
        for (int j = 1; j < scores.cols; ++j) {
            if (scores.at(i, j) > scores.at(i, best)) best = j;
        }
        corr[i] = {best, scores.at(i, best)};
    }
    return corr;
}

Correspondence flow_correspondence(const ChunkLayout& l, std::span<const FlowField> flows,
                                   std::span<const ConfidenceMap> confidences) {
    l.validate();
    if (flows.size() != static_cast<std::size_t>(l.frames - 1) || confidences.size() != flows.size()) {
        throw Error(ErrorKind::Config, "flow correspondence needs one flow and confidence per source frame");
    }
    for (std::size_t b = 0; b < flows.size(); ++b) {
        if (flows[b].height() != l.height || flows[b].width() != l.width ||
            !confidences[b].same_extent(flows[b])) {
            throw Error(ErrorKind::Shape, "flow for source block " + std::to_string(b) + " is " +
                                              flows[b].shape_string() + ", layout is " +
                                              std::to_string(l.height) + "x" + std::to_string(l.width));
        }
    }
    const int a = l.tokens_per_frame();
    Correspondence corr(static_cast<std::size_t>(l.source_count()));
    for (int b = 0; b < l.frames - 1; ++b) {
        for (int y = 0; y < l.height; ++y) {
            for (int x = 0; x < l.width; ++x) {
                Match& m = corr[static_cast<std::size_t>(b) * a + y * l.width + x];
                if (!l.in_content(y, x)) continue;
                const int tx = static_cast<int>(std::floor(x + flows[b].u(y, x) + 0.5));
                const int ty = static_cast<int>(std::floor(y + flows[b].v(y, x) + 0.5));
                if (!l.in_content(ty, tx)) continue;
                m = {ty * l.width + tx, confidences[b].at(y, x)};
            }
        }
    }
    return corr;
}

MergeSet select_top_r(const Correspondence& corr, double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorKind::Parameter, "merge ratio must be in [0, 1]");
    const auto n = static_cast<double>(corr.size());
    // Guard so that e.g. (2/3) * 3 counts as 2.
    const auto k = static_cast<std::size_t>(std::floor(ratio * n + 1e-9));
    std::vector<int> valid;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        if (corr[i].valid()) valid.push_back(static_cast<int>(i));
    }
    const std::size_t take = std::min(k, valid.size());
    std::partial_sort(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(take), valid.end(),
                      [&](int a, int b) {
                          if (corr[a].criterion != corr[b].criterion) return corr[a].criterion > corr[b].criterion;
                          return a < b;
                      });
    valid.resize(take);
    std::sort(valid.begin(), valid.end());
    MergeSet out;
    out.reserve(take);
    for (int i : valid) out.push_back({i, corr[i].target});
    return out;
}

std::vector<std::uint64_t> MergeRecord::frame_masks() const {
    const int a = layout.tokens_per_frame();
    std::vector<std::uint64_t> masks(groups.size(), 0);
    for (std::size_t r = 0; r < groups.size(); ++r) {
        for (int slot : groups[r]) masks[r] |= std::uint64_t{1} << (slot / a);
    }
    return masks;
}

MergeResult merge(const SrcTarSplit& split, const MergeSet& selected) {
    const ChunkLayout& l = split.layout;
    const int a = l.tokens_per_frame();
    const int c = l.channels;
    const int n_src = split.src.rows;

    std::vector<std::vector<int>> members(a); // source rows per target
    std::vector<char> taken(n_src, 0);
    for (const auto& [s, t] : selected) {
        if (s < 0 || s >= n_src || t < 0 || t >= a) throw Error(ErrorKind::Index, "merge pair out of range");
        if (taken[s]) throw Error(ErrorKind::Parameter, "source selected twice");
        taken[s] = 1;
        members[t].push_back(s);
    }
    for (auto& m : members) std::sort(m.begin(), m.end());

    MergeResult out;
    out.record.layout = l;
    const int k = a + n_src - static_cast<int>(selected.size());
    out.merged = TokenMatrix(k, c);
    out.record.groups.reserve(k);

    int row = 0;
    for (int t = 0; t < a; ++t, ++row) {
        std::vector<int> group{split.target_slot(t)};
        double* dst = out.merged.row(row);
        std::copy_n(split.tar.row(t), c, dst);
        for (int s : members[t]) {
            group.push_back(split.source_slot(s));
            const double* v = split.src.row(s);
            for (int ch = 0; ch < c; ++ch) dst[ch] += v[ch];
        }
        if (!members[t].empty()) {
            const double n = static_cast<double>(members[t].size() + 1);
            for (int ch = 0; ch < c; ++ch) dst[ch] /= n;
        }
        out.record.groups.push_back(std::move(group));
    }
    for (int s = 0; s < n_src; ++s) {
        if (taken[s]) continue;
        std::copy_n(split.src.row(s), c, out.merged.row(row++));
        out.record.groups.push_back({split.source_slot(s)});
    }
    return out;
}

TokenChunk unmerge(const TokenMatrix& attended, const MergeRecord& record) {
    const ChunkLayout& l = record.layout;
    if (attended.rows != record.merged_rows() || attended.cols != l.channels) {
        throw Error(ErrorKind::Shape, "attended tokens (" + std::to_string(attended.rows) + "x" +
                                          std::to_string(attended.cols) + ") do not match merge record (" +
                                          std::to_string(record.merged_rows()) + "x" +
                                          std::to_string(l.channels) + ")");
    }
    const int a = l.tokens_per_frame();
    TokenChunk out(l);
    for (int r = 0; r < attended.rows; ++r) {
        for (int slot : record.groups[r]) std::copy_n(attended.row(r), l.channels, out.token(slot / a, slot % a));
    }
    return out;
}

std::pair<TokenChunk, PadSpec> strip_padding(const TokenChunk& chunk) {
    chunk.validate();
    const ChunkLayout& l = chunk.layout;
    ChunkLayout inner = l;
    inner.height = l.content_height;
    inner.width = l.content_width;

    TokenChunk content(inner);
    PadSpec pad{l, {}};
    for (int f = 0; f < l.frames; ++f) {
        for (int y = 0; y < l.height; ++y) {
            for (int x = 0; x < l.width; ++x) {
                const double* src = chunk.token(f, y * l.width + x);
                if (l.in_content(y, x)) {
                    std::copy_n(src, l.channels, content.token(f, y * inner.width + x));
                } else {
                    pad.padding.insert(pad.padding.end(), src, src + l.channels);
                }
            }
        }
    }
    return {std::move(content), std::move(pad)};
}

TokenChunk restore_padding(const TokenChunk& content, const PadSpec& pad) {
    const ChunkLayout& l = pad.original;
    const ChunkLayout& in = content.layout;
    const std::size_t pad_slots =
        static_cast<std::size_t>(l.frames) * (l.tokens_per_frame() - l.content_height * l.content_width);
    if (in.frames != l.frames || in.channels != l.channels || in.height != l.content_height ||
        in.width != l.content_width || pad.padding.size() != pad_slots * l.channels ||
        content.tokens.size() != static_cast<std::size_t>(in.slot_count()) * in.channels) {
        throw Error(ErrorKind::Shape, "pad spec does not match the content chunk");
    }
    TokenChunk out(l);
    std::size_t next = 0;
    for (int f = 0; f < l.frames; ++f) {
        for (int y = 0; y < l.height; ++y) {
            for (int x = 0; x < l.width; ++x) {
                double* dst = out.token(f, y * l.width + x);
                if (l.in_content(y, x)) {
                    std::copy_n(content.token(f, y * in.width + x), l.channels, dst);
                } else {
                    std::copy_n(pad.padding.data() + next, l.channels, dst);
                    next += l.channels;
                }
            }
        }
    }
    return out;
}

void AnnealParams::validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorKind::Parameter, "anneal ratio r must be in [0, 1]");
    if (!(delta > 0.0)) throw Error(ErrorKind::Parameter, "anneal delta must be > 0");
    if (begin >= end) throw Error(ErrorKind::Parameter, "anneal needs i_beg < i_end");
}

double anneal_ratio(int step, const AnnealParams& p) {
    p.validate();
    const double progress = p.delta * (step - p.begin) / static_cast<double>(p.end - p.begin);
    const double clamped = std::clamp(progress, 0.0, 1.0);
    if (clamped >= 1.0) return 0.0;
    return p.ratio * std::cos(std::numbers::pi / 2.0 * clamped);
}

TokenChunk hybrid_merge_pass(const TokenChunk& chunk, const MergePassOptions& options,
                             std::span<const FlowField> flows, std::span<const ConfidenceMap> confidences,
                             const AttentionFn& attention) {
    auto [content, pad] = strip_padding(chunk);
    const SrcTarSplit split = split_src_tar(content);

    Correspondence corr;
    if (options.mode == MergeMode::Flow) {
        corr = flow_correspondence(content.layout, flows, confidences);
    } else {
        ScoreMatrix scores = cosine_scores(split.src, split.tar);
        if (options.spatial_radius) {
            const auto sp = source_positions(content.layout);
            const auto tp = target_positions(content.layout);
            scores = spatial_weight(scores, sp, tp, *options.spatial_radius);
        }
        corr = cosine_correspondence(scores);
    }

    const MergeSet selected = select_top_r(corr, options.ratio);
    const MergeResult merged = merge(split, selected);
    const auto masks = merged.record.frame_masks();
    const TokenMatrix attended = attention(merged.merged, masks);
    return restore_padding(unmerge(attended, merged.record), pad);
}

} // namespace vidrest
