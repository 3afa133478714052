#include <gtest/gtest.h>

#include "helpers.hpp"
#include "loopperf/datagen.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/oracle.hpp"

using namespace loopperf;
using lpt::acc;
using lpt::loop;
using lpt::node;

namespace {

// B[i0] = A[i0] + 1 over [0,64): one op, two stride-1 accesses.
Program golden_program() {
    const std::vector<std::string> it{"i0"};
    Statement s{"S", acc("B", {"i0"}, it), {acc("A", {"i0"}, it)},
                Expr::binary(OpKind::Add, Expr::access(0), Expr::constant_leaf(1))};
    return lpt::finish({"g", {}, {loop("i0", 0, 64, {node(std::move(s))})}});
}

// Doubles the op count of every statement by chaining constant additions.
Program double_ops(Program p) {
    std::function<void(LoopNode&)> walk = [&](LoopNode& l) {
        for (auto& b : l.body) {
            if (b.is_loop()) {
                walk(std::get<LoopNode>(b.node));
                continue;
            }
            auto& s = std::get<Statement>(b.node);
            const int n = count_ops(s.expr);
            for (int k = 0; k < n; ++k)
                s.expr = Expr::binary(OpKind::Add, std::move(s.expr), Expr::constant_leaf(1));
        }
    };
    for (auto& l : p.root_loops) walk(l);
    return p;
}

}  // namespace

TEST(Oracle, EmptySequenceIsWorkTimesMem) {
    const Program p = golden_program();
    const MachineConfig m;
    const auto c = statement_cost(p, "S", {}, m);
    EXPECT_DOUBLE_EQ(c.work, 64.0);
    EXPECT_DOUBLE_EQ(c.mem, 1.25);
    EXPECT_EQ(c.locality, 1.0);
    EXPECT_EQ(c.unroll_gain, 1.0);
    EXPECT_EQ(c.parallel_gain, 1.0);
    EXPECT_DOUBLE_EQ(oracle_cost(p, {}, m), 80.0);
}

TEST(Oracle, ParallelGolden) {
    const Program p = golden_program();
    const MachineConfig m;
    const TransformationSequence par{Parallelize{0}};
    EXPECT_NEAR(oracle_cost(p, par, m), 64.0 * 1.25 / (8 * 0.9), 1e-12);
    EXPECT_NEAR(oracle_cost(p, par, m), 100.0 / 9.0, 1e-12);
    EXPECT_NEAR(speedup(p, par, m), 7.2, 1e-12);
    EXPECT_EQ(speedup(p, {}, m), 1.0);
}

TEST(Oracle, InterchangeToStride16Increases) {
    const std::vector<std::string> it{"i0", "i1"};
    const Program p = lpt::finish(
        {"s16",
         {},
         {loop("i0", 0, 64,
               {node(loop("i1", 0, 64, {node(lpt::stmt("S", acc("B", {"i0", "i1"}, it), {acc("A", {"16*i0+i1"}, it)}))}))})}});
    const MachineConfig m;
    const TransformationSequence swap{Interchange{0, 1}};
    EXPECT_GT(oracle_cost(p, swap, m), oracle_cost(p, {}, m));
    EXPECT_DOUBLE_EQ(statement_cost(p, "S", swap, m).mem, (5.0 + 1.0) / 2);
}

TEST(Oracle, TileUnrollComponents) {
    const Program p = lpt::perfect_nest({64, 64});
    const MachineConfig m;
    const auto c = statement_cost(p, "S", TransformationSequence{Tile{0, 1, 8, 8}, Unroll{1, 4}}, m);
    EXPECT_DOUBLE_EQ(c.work, 64.0 * 64);
    EXPECT_DOUBLE_EQ(c.locality, 0.8);
    EXPECT_DOUBLE_EQ(c.unroll_gain, 0.9);
    const auto u16 = statement_cost(lpt::perfect_nest({64}), "S", TransformationSequence{Unroll{0, 16}}, m);
    EXPECT_DOUBLE_EQ(u16.unroll_gain, 0.8);
}

TEST(Oracle, RejectsInapplicable) {
    EXPECT_THROW(oracle_cost(golden_program(), TransformationSequence{Interchange{0, 1}}, MachineConfig{}),
                 ContractError);
    MachineConfig bad;
    bad.parallel_efficiency = 1.5;
    EXPECT_THROW(bad.check(), ContractError);
}

TEST(Oracle, ParallelizeNeverIncreasesCost) {
    GenConfig g;
    g.seed = 41;
    const MachineConfig m;
    int checked = 0;
    for (std::uint64_t i = 0; i < 150; ++i) {
        const Program p = gen_program(g, i);
        for (const auto& seq : sample_sequences(p, g, i)) {
            if (std::any_of(seq.begin(), seq.end(), [](const auto& t) { return std::holds_alternative<Parallelize>(t); }))
                continue;
            auto with = seq;
            with.push_back(Parallelize{0});
            if (applicable(with, p)) continue;
            // The invariant assumes the parallel loop keeps at least two iterations.
            bool short_loop = false;
            for (const auto& site : statement_sites(p)) {
                const auto loops =
                    effective_loop_structure(trip_counts(site), in_scope(with, site.depth()));
                short_loop = short_loop || loops[0].trip < 2;
            }
            if (short_loop) continue;
            EXPECT_LE(oracle_cost(p, with, m), oracle_cost(p, seq, m));
            ++checked;
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(Oracle, ScaleCovariance) {
    GenConfig g;
    g.seed = 42;
    const MachineConfig m;
    for (std::uint64_t i = 0; i < 60; ++i) {
        const Program p = gen_program(g, i);
        const Program p2 = double_ops(p);
        for (const auto& seq : sample_sequences(p, g, i)) {
            EXPECT_DOUBLE_EQ(oracle_cost(p2, seq, m), 2 * oracle_cost(p, seq, m));
            EXPECT_NEAR(speedup(p2, seq, m), speedup(p, seq, m), 1e-12 * speedup(p, seq, m));
        }
    }
}

TEST(Oracle, LabelsDeterministicAndPositive) {
    GenConfig g;
    g.seed = 43;
    const MachineConfig m;
    for (std::uint64_t i = 0; i < 40; ++i) {
        const Program p = gen_program(g, i);
        for (const auto& seq : sample_sequences(p, g, i)) {
            const double s = speedup(p, seq, m);
            EXPECT_GT(s, 0);
            EXPECT_EQ(s, speedup(p, seq, m));
        }
    }
}
