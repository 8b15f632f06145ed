#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "vidrest/tokenmerge.hpp"

using namespace vidrest;

namespace {

TokenMatrix identity_attention(const TokenMatrix& t, std::span<const std::uint64_t>) { return t; }

TokenMatrix matrix_of(std::vector<std::vector<double>> rows) {
    TokenMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m.row(i)[j] = rows[i][j];
    return m;
}

Correspondence corr_of(std::vector<double> criteria) {
    Correspondence c;
    for (double v : criteria) c.push_back({0, v});
    return c;
}

} // namespace

TEST_CASE("split separates the target frame from sources in frame order") {
    std::mt19937_64 rng(1);
    const TokenChunk chunk = oracle::random_chunk(rng, 3, 2, 2, 5, 2, 2, 1);
    const SrcTarSplit s = split_src_tar(chunk);
    CHECK(s.src.rows == 8);
    CHECK(s.tar.rows == 4);
    for (int i = 0; i < 8; ++i) {
        const int slot = s.source_slot(i);
        for (int k = 0; k < 5; ++k) CHECK(s.src.row(i)[k] == chunk.token(slot / 4, slot % 4)[k]);
    }
    CHECK(s.source_slot(0) == 0);
    CHECK(s.source_slot(4) == 8);
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 5; ++k) CHECK(s.tar.row(j)[k] == chunk.token(1, j)[k]);

    const TokenChunk tiny = oracle::random_chunk(rng, 2, 1, 1, 3, 1, 1, 0);
    CHECK(split_src_tar(tiny).src.rows == 1);
    const TokenChunk single = oracle::random_chunk(rng, 1, 2, 2, 3, 2, 2, 0);
    CHECK_THROWS_WITH_AS(split_src_tar(single), doctest::Contains("nothing to merge"), Error);
}

TEST_CASE("cosine scores") {
    const TokenMatrix src = matrix_of({{2, 4, 6}, {1, 0, 0}, {0, 0, 0}});
    const TokenMatrix tar = matrix_of({{1, 2, 3}, {0, 1, 0}});
    const ScoreMatrix s = cosine_scores(src, tar);
    CHECK(s.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.at(1, 1) == 0.0);
    CHECK(s.at(2, 0) == 0.0);
    CHECK(s.at(2, 1) == 0.0);

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        TokenMatrix a(3, 7), b(4, 7);
        for (double& v : a.data) v = std::normal_distribution<double>()(rng);
        for (double& v : b.data) v = std::normal_distribution<double>()(rng);
        const ScoreMatrix m = cosine_scores(a, b);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) CHECK(std::abs(m.at(i, j) - oracle::cosine(a.row(i), b.row(j), 7)) <= 1e-12);
    }
}

TEST_CASE("spatial weight floors the distance bucket") {
    ScoreMatrix s{3, 1, {0.8, 0.8, 0.8}};
    const std::vector<TokenPos> src{{0, 0}, {2, 0}, {3, 1}};
    const std::vector<TokenPos> tar{{0, 0}};
    const ScoreMatrix w = spatial_weight(s, src, tar, 4.0);
    CHECK(w.at(0, 0) == 0.8);
    CHECK(w.at(1, 0) == 0.8 * std::exp(-1.0));
    CHECK(w.at(2, 0) == 0.8 * std::exp(-2.0));
    CHECK_THROWS_AS(spatial_weight(s, src, tar, 0.0), Error);
}

TEST_CASE("cosine correspondence takes the first maximum") {
    const ScoreMatrix s{2, 3, {0.1, 0.9, 0.3, 0.5, 0.5, 0.5}};
    const Correspondence c = cosine_correspondence(s);
    CHECK(c[0].target == 1);
    CHECK(c[0].criterion == 0.9);
    CHECK(c[1].target == 0);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const TokenChunk chunk = oracle::random_chunk(rng, 3, 3, 4, 4, 3, 4, trial % 3);
        const SrcTarSplit split = split_src_tar(chunk);
        for (double R : {0.0, 1.0, 4.0}) {
            ScoreMatrix scores = cosine_scores(split.src, split.tar);
            if (R > 0)
                scores = spatial_weight(scores, source_positions(chunk.layout), target_positions(chunk.layout), R);
            const Correspondence got = cosine_correspondence(scores);
            const auto want = oracle::cosine_match(chunk, R);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].target == want[i].first);
                CHECK(std::abs(got[i].criterion - want[i].second) <= 1e-12);
            }
        }
    }
}

TEST_CASE("constant scores with a tight radius pick the co-located target") {
    const ChunkLayout l{2, 16, 16, 1, 16, 16, 1};
    const auto sp = source_positions(l);
    const auto tp = target_positions(l);
    ScoreMatrix s{256, 256, std::vector<double>(256 * 256, 0.5)};
    for (double R : {0.5, 1.0}) {
        const Correspondence c = cosine_correspondence(spatial_weight(s, sp, tp, R));
        for (int i = 0; i < 256; ++i) CHECK(c[i].target == i);
    }
}

TEST_CASE("flow correspondence rounds and invalidates out-of-content targets") {
    const ChunkLayout l{2, 2, 2, 1, 2, 2, 1};
    std::vector<FlowField> zero{FlowField(2, 2)};
    std::vector<ConfidenceMap> ones{ConfidenceMap(2, 2)};
    const Correspondence z = flow_correspondence(l, zero, ones);
    for (int i = 0; i < 4; ++i) {
        CHECK(z[i].target == i);
        CHECK(z[i].criterion == 1.0);
    }
    FlowField right(2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) right.u(y, x) = 1.0;
    std::vector<FlowField> flows{right};
    const Correspondence r = flow_correspondence(l, flows, ones);
    CHECK(r[0].target == 1);
    CHECK_FALSE(r[1].valid());
    CHECK(r[1].criterion == 0.0);
    CHECK(r[2].target == 3);
    CHECK_FALSE(r[3].valid());

    CHECK_THROWS_AS(flow_correspondence(l, std::span<const FlowField>{}, std::span<const ConfidenceMap>{}), Error);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const ChunkLayout pl{3, 5, 6, 2, 4, 5, trial % 3};
        std::vector<FlowField> fl;
        std::vector<ConfidenceMap> cf;
        for (int b = 0; b < 2; ++b) {
            fl.push_back(oracle::random_flow(rng, 5, 6, 3.0));
            ConfidenceMap c(5, 6);
            for (double& v : c.values()) v = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
            cf.push_back(c);
        }
        const Correspondence got = flow_correspondence(pl, fl, cf);
        const auto want = oracle::flow_match(pl, fl, cf);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].target == want[i].first);
            CHECK(got[i].criterion == want[i].second);
        }
    }
}

TEST_CASE("top-r selection") {
    CHECK(select_top_r(corr_of({0.9, 0.5, 0.9}), 0.0).empty());
    const MergeSet all = select_top_r(corr_of({0.9, 0.5, 0.9}), 1.0);
    CHECK(all.size() == 3);
    const MergeSet two = select_top_r(corr_of({0.9, 0.5, 0.9}), 2.0 / 3.0);
    REQUIRE(two.size() == 2);
    CHECK(two[0].source == 0);
    CHECK(two[1].source == 2);

    Correspondence with_invalid = corr_of({0.9, 0.5, 0.9});
    with_invalid[0] = Match{};
    CHECK(select_top_r(with_invalid, 1.0).size() == 2);
    CHECK_THROWS_AS(select_top_r(with_invalid, 1.5), Error);

    std::mt19937_64 rng(5);
    Correspondence random;
    for (int i = 0; i < 40; ++i) random.push_back({i % 3, std::uniform_real_distribution<double>()(rng)});
    std::size_t last = 0;
    for (double r = 0.0; r <= 1.0; r += 0.05) {
        const std::size_t n = select_top_r(random, r).size();
        CHECK(n >= last);
        last = n;
    }
}

TEST_CASE("merge takes group means and unmerge writes them back") {
    std::mt19937_64 rng(6);
    const TokenChunk chunk = oracle::random_chunk(rng, 3, 2, 3, 4, 2, 3, 2);
    const SrcTarSplit split = split_src_tar(chunk);

    const MergeResult none = merge(split, {});
    CHECK(none.merged.rows == 6 + 12);
    CHECK(unmerge(none.merged, none.record) == chunk);

    for (int trial = 0; trial < 20; ++trial) {
        const TokenChunk c = oracle::random_chunk(rng, 4, 3, 3, 5, 3, 3, trial % 4);
        const SrcTarSplit sp = split_src_tar(c);
        const Correspondence corr = cosine_correspondence(cosine_scores(sp.src, sp.tar));
        const MergeSet sel = select_top_r(corr, 0.5);
        const MergeResult m = merge(sp, sel);
        CHECK(m.merged.rows == 9 + 27 - static_cast<int>(sel.size()));

        // Slot-partition oracle: every slot belongs to exactly one group.
        std::map<int, int> owner;
        for (int r = 0; r < m.record.merged_rows(); ++r)
            for (int slot : m.record.groups[r]) {
                CHECK(owner.count(slot) == 0);
                owner[slot] = r;
            }
        CHECK(owner.size() == 36u);
        for (int r = 0; r < m.record.merged_rows(); ++r) {
            const auto& g = m.record.groups[r];
            for (int k = 0; k < 5; ++k) {
                double sum = 0;
                for (int slot : g) sum += c.token(slot / 9, slot % 9)[k];
                CHECK(std::abs(m.merged.row(r)[k] - sum / g.size()) <= 1e-12);
            }
        }
        const TokenChunk back = unmerge(m.merged, m.record);
        for (int r = 0; r < m.record.merged_rows(); ++r)
            for (int slot : m.record.groups[r])
                for (int k = 0; k < 5; ++k) CHECK(back.token(slot / 9, slot % 9)[k] == m.merged.row(r)[k]);
    }
    CHECK_THROWS_AS(unmerge(TokenMatrix(3, 4), none.record), Error);
}

TEST_CASE("merging a source into an identical target drops one row") {
    ChunkLayout l{2, 1, 2, 2, 1, 2, 1};
    TokenChunk c(l);
    c.tokens = {1, 2, 3, 4, 1, 2, 5, 6};
    const SrcTarSplit s = split_src_tar(c);
    const MergeResult m = merge(s, {{0, 0}});
    CHECK(m.merged.rows == 3);
    CHECK(m.merged.row(0)[0] == 1.0);
    CHECK(m.merged.row(0)[1] == 2.0);
    const auto masks = m.record.frame_masks();
    CHECK(masks[0] == 3u);
    CHECK(masks[1] == 2u);
    CHECK(masks[2] == 1u);
    CHECK(unmerge(m.merged, m.record) == c);
}

TEST_CASE("padding strip and restore") {
    std::mt19937_64 rng(7);
    const TokenChunk padded = oracle::random_chunk(rng, 2, 4, 4, 3, 3, 4, 0);
    auto [content, pad] = strip_padding(padded);
    CHECK(content.layout.tokens_per_frame() == 12);
    CHECK(pad.padding.size() == 2u * 4u * 3u);
    CHECK(restore_padding(content, pad) == padded);

    const TokenChunk plain = oracle::random_chunk(rng, 2, 3, 3, 2, 3, 3, 1);
    auto [same, none] = strip_padding(plain);
    CHECK(same == plain);
    CHECK(none.padding.empty());
    CHECK_THROWS_AS(restore_padding(plain, pad), Error);
}

TEST_CASE("anneal schedule") {
    const AnnealParams p{0.8, 1.0, 10, 20};
    CHECK(anneal_ratio(0, p) == 0.8);
    CHECK(anneal_ratio(10, p) == 0.8);
    CHECK(anneal_ratio(20, p) == 0.0);
    CHECK(anneal_ratio(25, p) == 0.0);
    CHECK(std::abs(anneal_ratio(15, p) - 0.8 * std::cos(std::numbers::pi / 4)) <= 1e-12);
    double last = 1.0;
    for (int i = 0; i < 30; ++i) {
        const double r = anneal_ratio(i, AnnealParams{0.8, 2.0, 5, 25});
        CHECK(r <= last);
        CHECK(r >= 0.0);
        CHECK(r <= 0.8);
        last = r;
    }
    CHECK_THROWS_AS(anneal_ratio(0, AnnealParams{0.8, 1.0, 5, 5}), Error);
    CHECK_THROWS_AS(anneal_ratio(0, AnnealParams{1.2, 1.0, 0, 5}), Error);
    CHECK_THROWS_AS(anneal_ratio(0, AnnealParams{0.5, 0.0, 0, 5}), Error);
}

TEST_CASE("hybrid merge pass preserves input under identity attention") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const int frames = 2 + trial % 3;
        const TokenChunk chunk = oracle::random_chunk(rng, frames, 4, 5, 3, 3, 4, trial % frames);
        std::vector<FlowField> flows(frames - 1, FlowField(3, 4));
        std::vector<ConfidenceMap> conf(frames - 1, ConfidenceMap(3, 4));
        for (MergeMode mode : {MergeMode::Flow, MergeMode::Cosine}) {
            MergePassOptions opt{mode, 0.0, 4.0};
            CHECK(hybrid_merge_pass(chunk, opt, flows, conf, identity_attention) == chunk);
            opt.ratio = 0.7;
            const TokenChunk out = hybrid_merge_pass(chunk, opt, flows, conf, identity_attention);
            CHECK(out.layout == chunk.layout);
            CHECK(out.tokens.size() == chunk.tokens.size());
        }
    }

    // Identical frames merged fully reproduce themselves.
    TokenChunk twin = oracle::random_chunk(rng, 2, 3, 3, 4, 3, 3, 0);
    std::copy_n(twin.token(0, 0), 9 * 4, twin.token(1, 0));
    const MergePassOptions full{MergeMode::Cosine, 1.0, std::nullopt};
    const TokenChunk out = hybrid_merge_pass(twin, full, {}, {}, identity_attention);
    for (std::size_t i = 0; i < out.tokens.size(); ++i) CHECK(out.tokens[i] == doctest::Approx(twin.tokens[i]));
}

TEST_CASE("padding never joins a merge group") {
    std::mt19937_64 rng(9);
    const TokenChunk chunk = oracle::random_chunk(rng, 3, 4, 4, 3, 3, 3, 1);
    bool seen = false;
    auto attention = [&](const TokenMatrix& t, std::span<const std::uint64_t> masks) {
        seen = true;
        CHECK(t.rows <= 3 * 9);
        CHECK(masks.size() == static_cast<std::size_t>(t.rows));
        return t;
    };
    const TokenChunk out = hybrid_merge_pass(chunk, {MergeMode::Cosine, 1.0, 4.0}, {}, {}, attention);
    CHECK(seen);
    for (int f = 0; f < 3; ++f)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                if (y >= 3 || x >= 3)
                    for (int k = 0; k < 3; ++k) CHECK(out.token(f, y * 4 + x)[k] == chunk.token(f, y * 4 + x)[k]);
}
