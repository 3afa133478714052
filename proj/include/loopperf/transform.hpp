#pragma once

// Loop transformations, schedule matrices and structural applicability.
//
// Levels are 0-based, outermost first, and refer to the statement's schedule
// space. Affine transforms (interchange, reversal, skewing) act in sequence
// order; loop tags (parallelize, tile, unroll) must follow every affine
// transform and address positions of the final schedule.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "loopperf/loop_ir.hpp"

namespace loopperf {

inline constexpr std::size_t kMaxTransforms = 4;
inline constexpr int kTileSizes[] = {2, 4, 8, 16, 32};
inline constexpr int kUnrollFactors[] = {2, 4, 8, 16};
inline constexpr int kMaxSkewFactor = 4;

struct Interchange {
    int a = 0, b = 1;
    bool operator==(const Interchange&) const = default;
};
struct Reversal {
    int level = 0;
    bool operator==(const Reversal&) const = default;
};
// new_i[a] = factor_a * i[a] + factor_b * i[b]
struct Skewing {
    int a = 0, b = 1;
    std::int64_t factor_a = 1, factor_b = 1;
    bool operator==(const Skewing&) const = default;
};
struct Parallelize {
    int level = 0;
    bool operator==(const Parallelize&) const = default;
};
struct Tile {
    int a = 0, b = 1;
    int size_a = 8, size_b = 8;
    bool operator==(const Tile&) const = default;
};
struct Unroll {
    int level = 0;
    int factor = 4;
    bool operator==(const Unroll&) const = default;
};

using Transformation = std::variant<Interchange, Reversal, Skewing, Parallelize, Tile, Unroll>;
using TransformationSequence = std::vector<Transformation>;

inline constexpr int kTransformKinds = static_cast<int>(std::variant_size_v<Transformation>);

bool is_affine(const Transformation& t);
std::string_view kind_name(const Transformation& t);
int max_level(const Transformation& t);

IntMatrix affine_matrix(const Transformation& t, int depth);
IntMatrix compose_schedule(std::span<const Transformation> sequence, int depth);

std::int64_t determinant(const IntMatrix& m);
// Exact integer inverse; throws ContractError when det != +-1.
IntMatrix unimodular_inverse(const IntMatrix& m);

// Transforms whose levels all fall inside a statement of the given depth.
TransformationSequence in_scope(std::span<const Transformation> sequence, int depth);

struct EffectiveLoop {
    enum class Role { Plain, TileOuter, TileInner };
    int dim = 0;  // schedule dimension this loop iterates
    std::int64_t trip = 0;
    int unroll = 1;
    bool parallel = false;
    Role role = Role::Plain;

    std::int64_t iterations() const { return trip * unroll; }
    bool operator==(const EffectiveLoop&) const = default;
};

// Post-transformation loops, outermost first.
std::vector<EffectiveLoop> effective_loop_structure(std::span<const std::int64_t> trips,
                                                    std::span<const Transformation> sequence);
std::vector<EffectiveLoop> effective_loop_structure(const Program& program,
                                                    std::string_view statement_id,
                                                    std::span<const Transformation> sequence);

// Checks the sequence against one statement (all levels must be in range).
std::optional<Violation> applicable(std::span<const Transformation> sequence,
                                    const Program& program, std::string_view statement_id);
// Program-wide: every statement sees its in-scope part of the sequence.
std::optional<Violation> applicable(std::span<const Transformation> sequence,
                                    const Program& program);

// Structurally plausible next transformations, before applicability checks.
std::vector<Transformation> candidate_transformations(const Program& program,
                                                     std::span<const Transformation> sequence);

// Every t such that sequence + [t] is applicable to the program.
std::vector<Transformation> enumerate_extensions(const Program& program,
                                                 std::span<const Transformation> sequence);

}  // namespace loopperf
