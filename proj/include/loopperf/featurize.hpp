#pragma once

// Fixed-length computation vectors and AST-shaped trees of them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loopperf/loop_ir.hpp"
#include "loopperf/transform.hpp"

namespace loopperf {

struct FeatureConfig {
    int max_depth = 4;
    int max_accesses = 6;
    int max_ops = 16;
    int max_xforms = 4;
    int op_kinds = 7;  // ADD SUB MUL DIV MIN MAX CONST_LEAF; access leaves are implicit
    int access_rows = kMaxBufferDims;
    double pad_value = 0.0;

    // Fixed normalizers.
    double bound_scale = 1024.0;
    double log_trip_scale = 10.0;
    double matrix_scale = 4.0;
    double tile_scale = 32.0;
    double unroll_log_scale = 4.0;

    void check() const;  // ContractError on non-positive sizes
    bool operator==(const FeatureConfig&) const = default;
};

struct Segment {
    int offset = 0;
    int size = 0;
    int end() const { return offset + size; }
};

struct SegmentLayout {
    Segment domain;
    Segment access;  // max_accesses blocks of access_block floats, then the count scalar
    Segment ops;
    Segment sched;   // max_depth^2 matrix, then max_xforms rows of (kinds + 2)
    Segment tags;    // parallel flag per level, tile (flag, level, size_a, size_b), unroll (flag, log2)
    int access_block = 0;
    int total = 0;
};

SegmentLayout segment_layout(const FeatureConfig& config);
int total_dim(const FeatureConfig& config);

struct ComputationVector {
    std::vector<double> values;
};

ComputationVector featurize_statement(const Program& program, std::string_view statement_id,
                                      std::span<const Transformation> sequence,
                                      const FeatureConfig& config);

// Flat AST: node 0 is the virtual root; children are loops or leaves (indices
// into ProgramTree::leaves) in program order. Parents precede children.
struct TreeNode {
    struct Child {
        bool is_leaf = false;
        int index = 0;
    };
    std::int64_t trip = 0;  // 0 for the virtual root
    int level = -1;         // -1 for the virtual root
    std::vector<Child> children;
};

struct ProgramTree {
    std::vector<TreeNode> nodes;
    std::vector<ComputationVector> leaves;
    std::vector<std::string> leaf_statements;
};

ProgramTree featurize_program(const Program& program, std::span<const Transformation> sequence,
                              const FeatureConfig& config);

}  // namespace loopperf
