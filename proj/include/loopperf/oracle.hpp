#pragma once

// Deterministic analytic machine model that stands in for measured run times.

#include <span>
#include <string_view>

#include "loopperf/loop_ir.hpp"
#include "loopperf/transform.hpp"

namespace loopperf {

struct MachineConfig {
    int cores = 8;
    double parallel_efficiency = 0.9;
    double stride_cap = 16.0;
    double tile_locality = 0.8;
    double unroll_cap = 0.7;

    void check() const;
    bool operator==(const MachineConfig&) const = default;
};

// Per-statement breakdown; cost = work * mem * locality * unroll_gain * parallel_gain.
struct StatementCost {
    double work = 0;
    double mem = 1;
    double locality = 1;
    double unroll_gain = 1;
    double parallel_gain = 1;

    double total() const { return work * mem * locality * unroll_gain * parallel_gain; }
};

StatementCost statement_cost(const Program& program, std::string_view statement_id,
                             std::span<const Transformation> sequence,
                             const MachineConfig& machine);

// Abstract time units. Throws ContractError when the sequence is not applicable.
double oracle_cost(const Program& program, std::span<const Transformation> sequence,
                   const MachineConfig& machine);

double speedup(const Program& program, std::span<const Transformation> sequence,
               const MachineConfig& machine);

}  // namespace loopperf
