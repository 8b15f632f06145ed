#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vidrest/grid.hpp"

namespace vidrest {

// Row-major (rows x cols) matrix of token vectors.
struct TokenMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    TokenMatrix() = default;
    TokenMatrix(int r, int c, double fill = 0.0);

    double* row(int i) noexcept { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const noexcept { return data.data() + static_cast<std::size_t>(i) * cols; }

    friend bool operator==(const TokenMatrix&, const TokenMatrix&) = default;
};

// Shape of a token chunk: `frames` frames of height x width tokens with
// `channels` features each. Content is the unpadded top-left extent.
struct ChunkLayout {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    int content_height = 0;
    int content_width = 0;
    int target_index = 0;

    int tokens_per_frame() const noexcept { return height * width; }
    int slot_count() const noexcept { return frames * tokens_per_frame(); }
    int source_count() const noexcept { return (frames - 1) * tokens_per_frame(); }
    bool has_padding() const noexcept { return content_height < height || content_width < width; }
    bool in_content(int y, int x) const noexcept {
        return y >= 0 && x >= 0 && y < content_height && x < content_width;
    }
    // Frame index of the b-th source block (all frames but the target, in order).
    int source_frame(int block) const noexcept { return block < target_index ? block : block + 1; }

    void validate() const;

    friend bool operator==(const ChunkLayout&, const ChunkLayout&) = default;
};

// Tokens of a batch entering one self-attention layer, (B, A, C) row-major.
struct TokenChunk {
    ChunkLayout layout;
    std::vector<double> tokens;

    TokenChunk() = default;
    explicit TokenChunk(const ChunkLayout& l, double fill = 0.0);

    double* token(int frame, int position) noexcept {
        return tokens.data() + (static_cast<std::size_t>(frame) * layout.tokens_per_frame() + position) * layout.channels;
    }
    const double* token(int frame, int position) const noexcept {
        return tokens.data() + (static_cast<std::size_t>(frame) * layout.tokens_per_frame() + position) * layout.channels;
    }

    void validate() const;

    friend bool operator==(const TokenChunk&, const TokenChunk&) = default;
};

struct SrcTarSplit {
    ChunkLayout layout;
    TokenMatrix src; // (B-1)*A x C, source frames in frame order
    TokenMatrix tar; // A x C, the target frame

    // Global slot (frame * A + position) of source row i.
    int source_slot(int i) const noexcept {
        const int a = layout.tokens_per_frame();
        return layout.source_frame(i / a) * a + i % a;
    }
    int target_slot(int j) const noexcept { return layout.target_index * layout.tokens_per_frame() + j; }
};

// Throws Parameter ("nothing to merge") when B < 2.
SrcTarSplit split_src_tar(const TokenChunk& chunk);

struct ScoreMatrix {
    int rows = 0; // sources
    int cols = 0; // targets
    std::vector<double> data;

    double& at(int i, int j) noexcept { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const noexcept { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// Cosine similarity of every source row against every target row. A zero
// vector scores 0 against everything.
ScoreMatrix cosine_scores(const TokenMatrix& src, const TokenMatrix& tar);

struct TokenPos {
    double x = 0.0;
    double y = 0.0;
};

// Token-grid coordinates of the source rows / target rows of a split.
std::vector<TokenPos> source_positions(const ChunkLayout& layout);
std::vector<TokenPos> target_positions(const ChunkLayout& layout);

// s'_ij = s_ij * exp(-floor(|X(i) - X(j)|^2 / R)).
ScoreMatrix spatial_weight(const ScoreMatrix& scores, std::span<const TokenPos> src_pos,
                           std::span<const TokenPos> tar_pos, double radius);

inline constexpr int kInvalidTarget = -1;

struct Match {
    int target = kInvalidTarget;
    double criterion = 0.0;

    bool valid() const noexcept { return target != kInvalidTarget; }
};

using Correspondence = std::vector<Match>;

// Row-wise argmax, ties to the smallest target index.
Correspondence cosine_correspondence(const ScoreMatrix& scores);

// Source token at X maps to round(X + f(X)) in the target frame with the
// forward-backward confidence at X as criterion. `flows` / `confidences` hold
// one entry per source frame (frame order, target skipped) at the layout's
// resolution, each defined on the source grid and pointing into the target.
Correspondence flow_correspondence(const ChunkLayout& layout, std::span<const FlowField> flows,
                                   std::span<const ConfidenceMap> confidences);

struct MergePair {
    int source = 0; // source row
    int target = 0; // target row
};

using MergeSet = std::vector<MergePair>;

// floor(ratio * N_src) valid pairs with the largest criterion, ties to the
// smaller source index. Returned in ascending source order.
MergeSet select_top_r(const Correspondence& corr, double ratio);

struct MergeRecord {
    ChunkLayout layout;
    // One entry per merged row, listing the global slots it stands for. Target
    // rows come first (their target slot leads the list), then surviving
    // sources in slot order.
    std::vector<std::vector<int>> groups;

    int merged_rows() const noexcept { return static_cast<int>(groups.size()); }
    // Bit f set when the row holds a slot of frame f.
    std::vector<std::uint64_t> frame_masks() const;
};

struct MergeResult {
    TokenMatrix merged;
    MergeRecord record;
};

// Each group's token is the mean of its members.
MergeResult merge(const SrcTarSplit& split, const MergeSet& selected);

// Writes each group's row back to all of its slots. Throws Shape on a row
// count mismatch.
TokenChunk unmerge(const TokenMatrix& attended, const MergeRecord& record);

struct PadSpec {
    ChunkLayout original;
    std::vector<double> padding; // tokens of padding slots, in slot order
};

std::pair<TokenChunk, PadSpec> strip_padding(const TokenChunk& chunk);
TokenChunk restore_padding(const TokenChunk& content, const PadSpec& pad);

struct AnnealParams {
    double ratio = 0.8; // r
    double delta = 1.0;
    int begin = 0; // i_beg
    int end = 1;   // i_end

    void validate() const;
};

// r * cos(pi/2 * clamp(delta * (i - i_beg) / (i_end - i_beg), 0, 1)).
double anneal_ratio(int step, const AnnealParams& params);

enum class MergeMode { Flow, Cosine };

// Self-attention over merged rows; frame_masks[i] says which frames row i
// belongs to.
using AttentionFn =
    std::function<TokenMatrix(const TokenMatrix& tokens, std::span<const std::uint64_t> frame_masks)>;

struct MergePassOptions {
    MergeMode mode = MergeMode::Cosine;
    double ratio = 0.0;                   // r_i, already annealed
    std::optional<double> spatial_radius; // R; cosine mode only, nullopt = unweighted
};

// strip padding -> split -> correspond -> select -> merge -> attention ->
// unmerge -> restore padding. Flow mode needs one flow/confidence per source
// frame at the content resolution.
TokenChunk hybrid_merge_pass(const TokenChunk& chunk, const MergePassOptions& options,
                             std::span<const FlowField> flows, std::span<const ConfidenceMap> confidences,
                             const AttentionFn& attention);

} // namespace vidrest
