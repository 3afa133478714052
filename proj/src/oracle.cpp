#include "loopperf/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "loopperf/errors.hpp"

namespace loopperf {

namespace {

constexpr double kStridePenaltyPerUnit = 0.25;
constexpr double kUnrollGainPerDoubling = 0.05;

StatementCost cost_of_site(const StatementSite& site, std::span<const Transformation> full,
                           const MachineConfig& m) {
    const Statement& s = *site.statement;
    const int depth = site.depth();
    const auto sequence = in_scope(full, depth);
    const auto trips = trip_counts(site);
    const auto loops = effective_loop_structure(trips, sequence);

    StatementCost c;
    c.work = count_ops(s.expr);
    for (const auto& l : loops) c.work *= static_cast<double>(l.iterations());

    const IntMatrix inv = unimodular_inverse(compose_schedule(sequence, depth));
    const Tile* tile = nullptr;
    for (const auto& t : sequence)
        if (const auto* x = std::get_if<Tile>(&t)) tile = x;

    double penalty_sum = 0;
    int n_access = 0;
    bool tiled_reuse = false;
    auto visit = [&](const AccessRelation& a) {
        const IntMatrix moved = a.matrix.leftCols(depth) * inv;
        const double stride = static_cast<double>(std::llabs(moved(moved.rows() - 1, depth - 1)));
        penalty_sum += stride == 0 ? 1.0
                                   : 1.0 + kStridePenaltyPerUnit * std::min(m.stride_cap, stride);
        ++n_access;
        if (tile != nullptr) {
            for (int dim : {tile->a, tile->b}) {
                if (dim == depth - 1) continue;
                if (!moved.col(dim).isZero()) tiled_reuse = true;
            }
        }
    };
    visit(s.write);
    for (const auto& r : s.reads) visit(r);
    c.mem = penalty_sum / n_access;
    if (tiled_reuse) c.locality = m.tile_locality;

    for (const auto& l : loops) {
        if (l.unroll > 1)
            c.unroll_gain = std::max(m.unroll_cap, 1.0 - kUnrollGainPerDoubling *
                                                             std::log2(static_cast<double>(l.unroll)));
        if (l.parallel)
            c.parallel_gain =
                1.0 / (static_cast<double>(std::min<std::int64_t>(m.cores, l.trip)) *
                       m.parallel_efficiency);
    }
    return c;
}

}  // namespace

void MachineConfig::check() const {
    if (cores < 1) throw ContractError("machine: cores must be >= 1");
    if (!(parallel_efficiency > 0 && parallel_efficiency <= 1))
        throw ContractError("machine: parallel efficiency must be in (0,1]");
    if (!(tile_locality > 0 && tile_locality <= 1))
        throw ContractError("machine: tile locality must be in (0,1]");
    if (!(unroll_cap > 0 && unroll_cap <= 1))
        throw ContractError("machine: unroll cap must be in (0,1]");
    if (!(stride_cap > 0)) throw ContractError("machine: stride cap must be positive");
}

StatementCost statement_cost(const Program& program, std::string_view statement_id,
                             std::span<const Transformation> sequence,
                             const MachineConfig& machine) {
    machine.check();
    return cost_of_site(find_statement(program, statement_id), sequence, machine);
}

double oracle_cost(const Program& program, std::span<const Transformation> sequence,
                   const MachineConfig& machine) {
    machine.check();
    if (auto v = applicable(sequence, program))
        throw ContractError("oracle_cost: inapplicable sequence: " + v->where + ": " + v->what);
    double total = 0;
    for (const auto& site : statement_sites(program))
        total += cost_of_site(site, sequence, machine).total();
    return total;
}

double speedup(const Program& program, std::span<const Transformation> sequence,
               const MachineConfig& machine) {
    const double base = oracle_cost(program, {}, machine);
    return base / oracle_cost(program, sequence, machine);
}

}  // namespace loopperf
