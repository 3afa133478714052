#include <gtest/gtest.h>

#include "helpers.hpp"
#include "loopperf/datagen.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/featurize.hpp"

using namespace loopperf;
using lpt::acc;
using lpt::loop;
using lpt::node;
using lpt::stmt;

namespace {

const std::vector<std::string> kIt2{"i0", "i1"};

// B[i0,i1] = A[i0, i0+i1, i1-2] * 2
Program diagonal_access_program() {
    return lpt::finish({"m",
                        {},
                        {loop("i0", 0, 64,
                              {node(loop("i1", 0, 32,
                                         {node(stmt("S", acc("B", {"i0", "i1"}, kIt2),
                                                    {acc("A", {"i0", "i0+i1", "i1-2"}, kIt2)}))}))})}});
}

double at(const ComputationVector& v, int i) { return v.values[static_cast<std::size_t>(i)]; }

}  // namespace

TEST(Featurize, TotalDim) {
    FeatureConfig c;
    EXPECT_EQ(total_dim(c), 307);
    c.max_accesses = 1;
    EXPECT_EQ(total_dim(c), 207);
    const auto lay = segment_layout(FeatureConfig{});
    EXPECT_EQ(lay.domain.size, 16);
    EXPECT_EQ(lay.access.size, 121);
    EXPECT_EQ(lay.ops.size, 112);
    EXPECT_EQ(lay.sched.size, 48);
    EXPECT_EQ(lay.tags.size, 10);
}

TEST(Featurize, AccessMatrixGolden) {
    const FeatureConfig c;
    const auto lay = segment_layout(c);
    const auto v = featurize_statement(diagonal_access_program(), "S", {}, c);
    const int block = lay.access.offset + lay.access_block;  // block 0 is the write
    const std::int64_t expect[3][3] = {{1, 0, 0}, {1, 1, 0}, {0, 1, -2}};
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < c.max_depth + 1; ++col) {
            const double stored = at(v, block + r * (c.max_depth + 1) + col);
            const double want = r < 3 && col < 3 ? static_cast<double>(expect[r][col]) : 0.0;
            EXPECT_DOUBLE_EQ(stored * c.matrix_scale, want) << r << "," << col;
            EXPECT_DOUBLE_EQ(stored, want / c.matrix_scale);
        }
}

TEST(Featurize, EmptySequenceHasIdentityScheduleAndNoTags) {
    const FeatureConfig c;
    const auto lay = segment_layout(c);
    const auto v = featurize_statement(diagonal_access_program(), "S", {}, c);
    for (int r = 0; r < c.max_depth; ++r)
        for (int col = 0; col < c.max_depth; ++col) {
            const double want = r == col && r < 2 ? 1.0 / c.matrix_scale : 0.0;
            EXPECT_DOUBLE_EQ(at(v, lay.sched.offset + r * c.max_depth + col), want);
        }
    for (int i = lay.tags.offset; i < lay.tags.end(); ++i) EXPECT_EQ(at(v, i), 0.0);
    for (int i = lay.sched.offset + c.max_depth * c.max_depth; i < lay.sched.end(); ++i) EXPECT_EQ(at(v, i), 0.0);
}

TEST(Featurize, DomainSegment) {
    const FeatureConfig c;
    const auto v = featurize_statement(diagonal_access_program(), "S", {}, c);
    EXPECT_DOUBLE_EQ(at(v, 0), 0.0);
    EXPECT_DOUBLE_EQ(at(v, 1), 64.0 / 1024);
    EXPECT_DOUBLE_EQ(at(v, 2), 6.0 / 10);
    EXPECT_DOUBLE_EQ(at(v, 3), 1.0);
    EXPECT_DOUBLE_EQ(at(v, 6), 5.0 / 10);
    for (int i = 8; i < 16; ++i) EXPECT_EQ(at(v, i), c.pad_value);
}

TEST(Featurize, CapacityErrorOnTooManyReads) {
    std::vector<AccessRelation> reads;
    for (int r = 0; r < 7; ++r) reads.push_back(acc("A" + std::to_string(r), {"i0"}, {"i0"}));
    const Program p = lpt::finish({"wide", {}, {loop("i0", 0, 16, {node(stmt("S", acc("B", {"i0"}, {"i0"}), reads))})}});
    ASSERT_TRUE(validate(p).empty());
    try {
        featurize_statement(p, "S", {}, FeatureConfig{});
        FAIL() << "expected CapacityError";
    } catch (const CapacityError& e) {
        EXPECT_NE(std::string(e.what()).find("S"), std::string::npos);
    }
}

TEST(Featurize, ScheduleBlockMatchesComposeSchedule) {
    GenConfig g;
    g.seed = 31;
    const FeatureConfig c;
    const auto lay = segment_layout(c);
    for (std::uint64_t i = 0; i < 40; ++i) {
        const Program p = gen_program(g, i);
        for (const auto& seq : sample_sequences(p, g, i))
            for (const auto& site : statement_sites(p)) {
                const auto v = featurize_statement(p, site.statement->id, seq, c);
                const int d = site.depth();
                const IntMatrix m = compose_schedule(in_scope(seq, d), d);
                for (int r = 0; r < c.max_depth; ++r)
                    for (int col = 0; col < c.max_depth; ++col) {
                        const double want = r < d && col < d ? static_cast<double>(m(r, col)) : 0.0;
                        ASSERT_DOUBLE_EQ(at(v, lay.sched.offset + r * c.max_depth + col) * c.matrix_scale, want);
                    }
            }
    }
}

TEST(Featurize, UnrollFactorOnlyTouchesTags) {
    const FeatureConfig c;
    const auto lay = segment_layout(c);
    const Program p = lpt::perfect_nest({64, 32});
    const auto a = featurize_statement(p, "S", TransformationSequence{Interchange{0, 1}, Unroll{1, 2}}, c);
    const auto b = featurize_statement(p, "S", TransformationSequence{Interchange{0, 1}, Unroll{1, 16}}, c);
    bool differs = false;
    for (int i = 0; i < lay.total; ++i) {
        if (i >= lay.tags.offset && i < lay.tags.end()) {
            differs = differs || at(a, i) != at(b, i);
            continue;
        }
        EXPECT_EQ(at(a, i), at(b, i)) << "index " << i;
    }
    EXPECT_TRUE(differs);
}

TEST(Featurize, DeterministicAndPaddingNeutral) {
    GenConfig g;
    g.seed = 32;
    const FeatureConfig c;
    const auto lay = segment_layout(c);
    for (std::uint64_t i = 0; i < 30; ++i) {
        const Program p = gen_program(g, i);
        for (const auto& site : statement_sites(p)) {
            const auto v1 = featurize_statement(p, site.statement->id, {}, c);
            const auto v2 = featurize_statement(p, site.statement->id, {}, c);
            ASSERT_EQ(v1.values, v2.values);
            ASSERT_EQ(static_cast<int>(v1.values.size()), total_dim(c));
            for (int l = site.depth(); l < c.max_depth; ++l)
                for (int k = 0; k < 4; ++k) EXPECT_EQ(at(v1, lay.domain.offset + 4 * l + k), c.pad_value);
            const int used = 1 + static_cast<int>(site.statement->reads.size());
            for (int b = used; b < c.max_accesses; ++b)
                for (int k = 0; k < lay.access_block; ++k)
                    EXPECT_EQ(at(v1, lay.access.offset + b * lay.access_block + k), c.pad_value);
            EXPECT_DOUBLE_EQ(at(v1, lay.access.offset + c.max_accesses * lay.access_block),
                             static_cast<double>(used) / c.max_accesses);
        }
    }
}

TEST(Featurize, ProgramTreeShapes) {
    const FeatureConfig c;
    const auto t1 = featurize_program(lpt::perfect_nest({8, 8}), {}, c);
    ASSERT_EQ(t1.nodes.size(), 3u);  // root, i0, i1
    EXPECT_EQ(t1.leaves.size(), 1u);
    EXPECT_EQ(t1.nodes[2].children.size(), 1u);
    EXPECT_TRUE(t1.nodes[2].children[0].is_leaf);

    // Statements at different depths: i0 { i1 { S0 } S1 }
    const std::vector<std::string> o{"i0"};
    const Program fig = lpt::finish(
        {"fig",
         {},
         {loop("i0", 0, 32,
               {node(loop("i1", 0, 16, {node(stmt("S0", acc("B", {"i0", "i1"}, kIt2), {acc("A", {"i1"}, kIt2)}))})),
                node(stmt("S1", acc("C", {"i0"}, o), {acc("B", {"i0", "0"}, o)}))})}});
    const auto t2 = featurize_program(fig, {}, c);
    ASSERT_EQ(t2.nodes.size(), 3u);
    ASSERT_EQ(t2.nodes[1].children.size(), 2u);
    EXPECT_FALSE(t2.nodes[1].children[0].is_leaf);
    EXPECT_TRUE(t2.nodes[1].children[1].is_leaf);
    EXPECT_EQ(t2.leaf_statements, (std::vector<std::string>{"S0", "S1"}));
    EXPECT_EQ(t2.nodes[1].trip, 32);
    EXPECT_EQ(t2.nodes[2].level, 1);

    Program two = lpt::perfect_nest({8});
    two.root_loops.push_back(two.root_loops[0]);
    std::get<Statement>(two.root_loops[1].body[0].node).id = "S2";
    const auto t3 = featurize_program(two, {}, c);
    EXPECT_EQ(t3.nodes[0].children.size(), 2u);
    EXPECT_EQ(t3.leaves.size(), 2u);
}
