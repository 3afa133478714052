#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "loopperf/datagen.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/transform.hpp"

using namespace loopperf;
using lpt::acc;
using lpt::loop;
using lpt::node;
using lpt::stmt;

namespace {

IntMatrix mat(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
    IntMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (auto v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

// Test-side oracle: apply an affine transform directly to an iteration point.
std::vector<std::int64_t> apply_point(const Transformation& t, std::vector<std::int64_t> x) {
    if (auto* i = std::get_if<Interchange>(&t)) std::swap(x[static_cast<std::size_t>(i->a)], x[static_cast<std::size_t>(i->b)]);
    if (auto* r = std::get_if<Reversal>(&t)) x[static_cast<std::size_t>(r->level)] = -x[static_cast<std::size_t>(r->level)];
    if (auto* s = std::get_if<Skewing>(&t))
        x[static_cast<std::size_t>(s->a)] =
            s->factor_a * x[static_cast<std::size_t>(s->a)] + s->factor_b * x[static_cast<std::size_t>(s->b)];
    return x;
}

IntMatrix matrix_by_points(std::span<const Transformation> seq, int depth) {
    IntMatrix m(depth, depth);
    for (int c = 0; c < depth; ++c) {
        std::vector<std::int64_t> e(static_cast<std::size_t>(depth), 0);
        e[static_cast<std::size_t>(c)] = 1;
        for (const auto& t : seq) e = apply_point(t, e);
        for (int r = 0; r < depth; ++r) m(r, c) = e[static_cast<std::size_t>(r)];
    }
    return m;
}

std::vector<std::int64_t> trips_of(const std::vector<EffectiveLoop>& loops) {
    std::vector<std::int64_t> t;
    for (const auto& l : loops) t.push_back(l.trip);
    return t;
}

bool mentions(const std::optional<Violation>& v, std::string_view text) {
    return v && v->what.find(text) != std::string::npos;
}

Transformation random_affine(Rng& rng, int depth) {
    switch (uniform_int(rng, 0, 2)) {
        case 0: {
            const int a = uniform_int(rng, 0, depth - 2);
            return Interchange{a, uniform_int(rng, a + 1, depth - 1)};
        }
        case 1: return Reversal{uniform_int(rng, 0, depth - 1)};
        default: {
            const int a = uniform_int(rng, 0, depth - 2);
            return Skewing{a, uniform_int(rng, a + 1, depth - 1), 1, uniform_int(rng, 1, kMaxSkewFactor)};
        }
    }
}

Transformation formal_inverse(const Transformation& t) {
    if (auto* s = std::get_if<Skewing>(&t)) return Skewing{s->a, s->b, 1, -s->factor_b};
    return t;
}

}  // namespace

TEST(Transform, AffineMatrices) {
    EXPECT_EQ(affine_matrix(Interchange{0, 1}, 2), mat({{0, 1}, {1, 0}}));
    EXPECT_EQ(affine_matrix(Reversal{0}, 2), mat({{-1, 0}, {0, 1}}));
    EXPECT_EQ(affine_matrix(Skewing{0, 1, 1, 1}, 2), mat({{1, 1}, {0, 1}}));
    const Transformation skew = Skewing{0, 1, 1, 1};
    EXPECT_EQ(affine_matrix(skew, 2), matrix_by_points(std::span(&skew, 1), 2));
}

TEST(Transform, AffineMatrixErrors) {
    EXPECT_THROW(affine_matrix(Parallelize{0}, 2), ContractError);
    EXPECT_THROW(affine_matrix(Tile{0, 1, 8, 8}, 2), ContractError);
    EXPECT_THROW(affine_matrix(Interchange{0, 2}, 2), BoundsError);
    EXPECT_THROW(affine_matrix(Reversal{3}, 2), BoundsError);
}

TEST(Transform, ComposeSchedule) {
    EXPECT_EQ(compose_schedule({}, 3), IntMatrix(IntMatrix::Identity(3, 3)));
    const TransformationSequence twice{Interchange{0, 1}, Interchange{0, 1}};
    EXPECT_EQ(compose_schedule(twice, 2), IntMatrix(IntMatrix::Identity(2, 2)));
    const TransformationSequence rs{Reversal{0}, Skewing{0, 1, 1, 2}};
    EXPECT_EQ(compose_schedule(rs, 2), mat({{-1, 2}, {0, 1}}));
    EXPECT_EQ(compose_schedule(rs, 2), matrix_by_points(rs, 2));
    const TransformationSequence tagged{Interchange{0, 1}, Parallelize{0}, Unroll{1, 4}};
    EXPECT_EQ(compose_schedule(tagged, 2), mat({{0, 1}, {1, 0}}));
}

TEST(Transform, ComposeMatchesPointOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const int depth = uniform_int(rng, 2, 4);
        TransformationSequence seq;
        for (int k = uniform_int(rng, 0, 4); k > 0; --k) seq.push_back(random_affine(rng, depth));
        EXPECT_EQ(compose_schedule(seq, depth), matrix_by_points(seq, depth));
    }
}

TEST(Transform, AffineMatricesAreUnimodular) {
    Rng rng(22);
    for (int trial = 0; trial < 300; ++trial) {
        const int depth = uniform_int(rng, 2, 4);
        const IntMatrix m = affine_matrix(random_affine(rng, depth), depth);
        EXPECT_EQ(std::abs(determinant(m)), 1);
        EXPECT_EQ(IntMatrix(m * unimodular_inverse(m)), IntMatrix(IntMatrix::Identity(depth, depth)));
    }
    EXPECT_THROW(unimodular_inverse(mat({{2, 0}, {0, 1}})), ContractError);
    EXPECT_EQ(determinant(mat({{2, 3, 1}, {4, 1, 5}, {0, 2, 7}})), -82);
}

TEST(Transform, SequenceThenFormalInverseIsIdentity) {
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const int depth = uniform_int(rng, 2, 4);
        TransformationSequence seq;
        for (int k = uniform_int(rng, 1, 4); k > 0; --k) seq.push_back(random_affine(rng, depth));
        TransformationSequence full = seq;
        for (auto it = seq.rbegin(); it != seq.rend(); ++it) full.push_back(formal_inverse(*it));
        EXPECT_EQ(compose_schedule(full, depth), IntMatrix(IntMatrix::Identity(depth, depth)));
    }
}

TEST(Transform, EffectiveLoopStructureExamples) {
    const std::vector<std::int64_t> t2{64, 32};
    EXPECT_EQ(trips_of(effective_loop_structure(t2, TransformationSequence{Interchange{0, 1}})),
              (std::vector<std::int64_t>{32, 64}));
    const auto tiled = effective_loop_structure(t2, TransformationSequence{Tile{0, 1, 8, 8}});
    EXPECT_EQ(trips_of(tiled), (std::vector<std::int64_t>{8, 4, 8, 8}));
    EXPECT_EQ(tiled[0].role, EffectiveLoop::Role::TileOuter);
    EXPECT_EQ(tiled[3].role, EffectiveLoop::Role::TileInner);

    const std::vector<std::int64_t> t1{64};
    const auto unrolled = effective_loop_structure(t1, TransformationSequence{Unroll{0, 4}});
    ASSERT_EQ(unrolled.size(), 1u);
    EXPECT_EQ(unrolled[0].trip, 16);
    EXPECT_EQ(unrolled[0].unroll, 4);
    EXPECT_EQ(unrolled[0].iterations(), 64);

    const auto rev = effective_loop_structure(t2, TransformationSequence{Reversal{1}, Skewing{0, 1, 1, 3}});
    EXPECT_EQ(trips_of(rev), t2);
    EXPECT_THROW(effective_loop_structure(t1, TransformationSequence{Interchange{0, 1}}), BoundsError);
}

TEST(Transform, EffectiveStructurePreservesIterationsWithinSlack) {
    Rng rng(24);
    const std::vector<std::int64_t> choices{8, 16, 32, 64, 128};
    for (int trial = 0; trial < 300; ++trial) {
        const int depth = uniform_int(rng, 2, 4);
        std::vector<std::int64_t> trips;
        for (int k = 0; k < depth; ++k) trips.push_back(choices[static_cast<std::size_t>(uniform_int(rng, 0, 4))]);
        TransformationSequence seq;
        if (coin(rng, 0.5)) seq.push_back(random_affine(rng, depth));
        const int a = uniform_int(rng, 0, depth - 2);
        seq.push_back(Tile{a, a + 1, kTileSizes[uniform_int(rng, 0, 4)], kTileSizes[uniform_int(rng, 0, 4)]});
        if (coin(rng, 0.5)) seq.push_back(Unroll{uniform_int(rng, 0, depth - 1), kUnrollFactors[uniform_int(rng, 0, 3)]});
        if (applicable(seq, lpt::perfect_nest(trips))) continue;
        const auto loops = effective_loop_structure(trips, seq);
        double before = 1, after = 1;
        for (auto t : trips) before *= static_cast<double>(t);
        for (const auto& l : loops) after *= static_cast<double>(l.iterations());
        EXPECT_GE(after, before);
        EXPECT_LE(after, before * (1 + 1.0 / 2) * (1 + 1.0 / 2));
    }
}

TEST(Transform, ApplicabilityExamples) {
    const Program p = lpt::perfect_nest({64, 32});
    EXPECT_FALSE(applicable(TransformationSequence{Unroll{0, 4}}, p, "S"));
    const auto dup = applicable(TransformationSequence{Tile{0, 1, 8, 8}, Tile{0, 1, 4, 4}}, p, "S");
    EXPECT_TRUE(mentions(dup, "duplicate tile"));
    EXPECT_TRUE(mentions(applicable(TransformationSequence{Parallelize{0}, Interchange{0, 1}}, p, "S"),
                         "affine transformation after loop tag"));
    EXPECT_TRUE(mentions(applicable(TransformationSequence{Skewing{0, 1, 2, 1}}, p, "S"), "non-unimodular"));
    EXPECT_TRUE(applicable(TransformationSequence{Interchange{0, 2}}, p, "S").has_value());
    EXPECT_TRUE(applicable(TransformationSequence{Unroll{0, 4}}, p, "missing").has_value());
}

TEST(Transform, ParallelDependenceRuleFires) {
    const std::vector<std::string> it{"i0"};
    auto program = [&](const std::string& read_index) {
        return lpt::finish({"dep",
                            {},
                            {loop("i0", 0, 64,
                                  {node(stmt("S0", acc("A", {"i0"}, it), {acc("B", {"i0"}, it)})),
                                   node(stmt("S1", acc("C", {"i0"}, it), {acc("A", {read_index}, it)}))})}});
    };
    const TransformationSequence par{Parallelize{0}};
    EXPECT_TRUE(mentions(applicable(par, program("i0+1")), "loop-carried dependence"));
    EXPECT_TRUE(mentions(applicable(par, program("i0+1"), "S1"), "loop-carried dependence"));
    EXPECT_FALSE(applicable(par, program("i0")));
}

TEST(Transform, ParallelWriteRace) {
    const std::vector<std::string> it{"i0", "i1"};
    const Program p = lpt::finish(
        {"race", {}, {loop("i0", 0, 16, {node(loop("i1", 0, 16, {node(stmt("S", acc("A", {"i1"}, it), {acc("B", {"i0", "i1"}, it)}))}))})}});
    EXPECT_TRUE(mentions(applicable(TransformationSequence{Parallelize{0}}, p), "write race"));
    EXPECT_FALSE(applicable(TransformationSequence{Parallelize{1}}, p));
    EXPECT_FALSE(applicable(TransformationSequence{Interchange{0, 1}, Parallelize{0}}, p));
}

TEST(Transform, EnumeratedExtensionsAreApplicable) {
    GenConfig cfg;
    cfg.seed = 9;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const Program p = gen_program(cfg, i);
        TransformationSequence seq;
        Rng rng(i);
        for (int step = 0; step < 4; ++step) {
            const auto ext = enumerate_extensions(p, seq);
            for (const auto& t : ext) {
                auto next = seq;
                next.push_back(t);
                EXPECT_FALSE(applicable(next, p)) << p.id;
            }
            if (ext.empty()) break;
            seq.push_back(ext[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(ext.size()) - 1))]);
        }
    }
}
