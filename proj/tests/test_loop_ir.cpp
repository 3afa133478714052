#include <gtest/gtest.h>

#include "helpers.hpp"
#include "loopperf/datagen.hpp"
#include "loopperf/errors.hpp"

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

// i0 { i1 { S0 } S1 }
Program two_level() {
    const std::vector<std::string> outer{"i0"}, inner{"i0", "i1"};
    return lpt::finish({"two",
                        {},
                        {loop("i0", 0, 64,
                              {node(loop("i1", 0, 32, {node(stmt("S0", acc("B", {"i0", "i1"}, inner),
                                                                     {acc("A", {"i1", "i0"}, inner)}))})),
                               node(stmt("S1", acc("C", {"i0"}, outer), {acc("B", {"i0", "3"}, outer)}))})}});
}

}  // namespace

TEST(LoopIr, LoopDepth) {
    const Program p = two_level();
    EXPECT_EQ(loop_depth(p, "S0"), 2);
    EXPECT_EQ(loop_depth(p, "S1"), 1);
    EXPECT_THROW(loop_depth(p, "nope"), LookupError);
}

TEST(LoopIr, AccessMatrixGolden) {
    const std::vector<std::string> it{"i0", "i1"};
    const std::vector<IndexExpr> idx{parse_index("i0", it), parse_index("i0+i1", it), parse_index("i1-2", it)};
    EXPECT_EQ(access_matrix(idx, 2), mat({{1, 0, 0}, {1, 1, 0}, {0, 1, -2}}));
}

TEST(LoopIr, AccessMatrixTrivialRows) {
    const std::vector<std::string> it{"i0"};
    EXPECT_EQ(access_matrix(std::vector{parse_index("i0", it)}, 1), mat({{1, 0}}));
    EXPECT_EQ(access_matrix(std::vector{parse_index("5", it)}, 1), mat({{0, 5}}));
}

TEST(LoopIr, AccessMatrixRejectsNonAffine) {
    const std::vector<std::string> it{"i0", "i1"};
    EXPECT_THROW(access_matrix(std::vector{parse_index("i0*i1", it)}, 2), FeaturizationError);
    EXPECT_THROW(access_matrix(std::vector{IndexExpr::iter(2)}, 2), BoundsError);
    EXPECT_THROW(parse_index("k+1", it), FeaturizationError);
    EXPECT_THROW(parse_index("i0+", it), FeaturizationError);
}

TEST(LoopIr, ParseIndexArithmetic) {
    const std::vector<std::string> it{"i0", "i1", "i2"};
    const auto m = access_matrix(std::vector{parse_index("2*(i0-i2)+3*i1-(4-i2)", it)}, 3);
    EXPECT_EQ(m, mat({{2, 3, -1, -4}}));
}

TEST(LoopIr, AccessMatrixIsLinear) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int depth = uniform_int(rng, 1, 4);
        auto random_expr = [&] {
            IndexExpr e = IndexExpr::constant(uniform_int(rng, -5, 5));
            for (int l = 0; l < depth; ++l)
                e = e + IndexExpr::constant(uniform_int(rng, -3, 3)) * IndexExpr::iter(l);
            return e;
        };
        const IndexExpr a = random_expr(), b = random_expr();
        const IntMatrix sum = access_matrix(std::vector{a + b}, depth);
        const IntMatrix ma = access_matrix(std::vector{a}, depth), mb = access_matrix(std::vector{b}, depth);
        EXPECT_EQ(sum, IntMatrix(ma + mb));
    }
}

TEST(LoopIr, IndexExpressionRoundTrip) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const int depth = uniform_int(rng, 1, 4), rows = uniform_int(rng, 1, 4);
        IntMatrix m(rows, depth + 1);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = uniform_int(rng, -6, 6);
        EXPECT_EQ(access_matrix(index_expressions(m), depth), m);
    }
}

TEST(LoopIr, IterationDomain) {
    const Program p = two_level();
    EXPECT_EQ(iteration_domain(p, "S0"), (std::vector<Bounds>{{0, 64}, {0, 32}}));
    EXPECT_EQ(iteration_domain(p, "S1"), (std::vector<Bounds>{{0, 64}}));
    const Program deep = lpt::perfect_nest({8, 16, 32});
    EXPECT_EQ(iteration_domain(deep, "S"), (std::vector<Bounds>{{0, 8}, {0, 16}, {0, 32}}));
}

TEST(LoopIr, ValidateWellFormed) { EXPECT_TRUE(validate(two_level()).empty()); }

TEST(LoopIr, ValidateWrongColumnCount) {
    Program p = two_level();
    auto& s1 = std::get<Statement>(p.root_loops[0].body[1].node);
    s1.reads[0].matrix = mat({{1, 0, 0}, {0, 0, 3}});
    const auto v = validate(p);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].where, "two/S1/read0");
    EXPECT_NE(v[0].what.find("columns"), std::string::npos);
}

TEST(LoopIr, ValidateDuplicateIterator) {
    Program p = two_level();
    std::get<LoopNode>(p.root_loops[0].body[0].node).iterator = "i0";
    const auto v = validate(p);
    EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const Violation& x) {
        return x.what.find("duplicate iterator") != std::string::npos;
    }));
}

TEST(LoopIr, ValidateCatchesOtherDefects) {
    Program p = two_level();
    p.root_loops[0].upper = 1;  // trip 1
    auto& s1 = std::get<Statement>(p.root_loops[0].body[1].node);
    s1.write.buffer = "Z";
    s1.expr = Expr::binary(OpKind::Div, Expr::access(0), Expr::constant_leaf(0));
    const auto v = validate(p);
    auto has = [&](std::string_view text) {
        return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.what.find(text) != std::string::npos; });
    };
    EXPECT_TRUE(has("trip count"));
    EXPECT_TRUE(has("undeclared buffer"));
    EXPECT_TRUE(has("division by constant zero"));
}

TEST(LoopIr, ValidProgramsSupportDownstreamLookups) {
    GenConfig cfg;
    cfg.seed = 5;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const Program p = gen_program(cfg, i);
        ASSERT_TRUE(validate(p).empty());
        for (const auto& site : statement_sites(p)) {
            EXPECT_NO_THROW(loop_depth(p, site.statement->id));
            EXPECT_NO_THROW(iteration_domain(p, site.statement->id));
        }
    }
}

TEST(LoopIr, OpNamesRoundTrip) {
    for (auto k : {OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div, OpKind::Min, OpKind::Max,
                   OpKind::LeafAccess, OpKind::LeafConst})
        EXPECT_EQ(op_from_name(op_name(k)), k);
    EXPECT_THROW(op_from_name("POW"), FormatError);
}
