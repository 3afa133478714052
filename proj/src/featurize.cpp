#include "loopperf/featurize.hpp"

#include <cmath>

#include "loopperf/errors.hpp"

namespace loopperf {

namespace {

int op_slot(OpKind k) {
    switch (k) {
        case OpKind::Add: return 0;
        case OpKind::Sub: return 1;
        case OpKind::Mul: return 2;
        case OpKind::Div: return 3;
        case OpKind::Min: return 4;
        case OpKind::Max: return 5;
        case OpKind::LeafConst: return 6;
        case OpKind::LeafAccess: break;
    }
    return -1;
}

// Level and partner slot of the per-transform rows. Factors and sizes stay out
// of these rows; they live in the schedule matrix and the tags.
std::pair<int, int> transform_levels(const Transformation& t) {
    if (const auto* x = std::get_if<Interchange>(&t)) return {x->a, x->b};
    if (const auto* x = std::get_if<Reversal>(&t)) return {x->level, -1};
    if (const auto* x = std::get_if<Skewing>(&t)) return {x->a, x->b};
    if (const auto* x = std::get_if<Parallelize>(&t)) return {x->level, -1};
    if (const auto* x = std::get_if<Tile>(&t)) return {x->a, x->b};
    if (const auto* x = std::get_if<Unroll>(&t)) return {x->level, -1};
    return {-1, -1};
}

void build_tree(const LoopNode& loop, int level, int parent, ProgramTree& tree,
                const Program& program, std::span<const Transformation> sequence,
                const FeatureConfig& config) {
    const int me = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({loop.trip_count(), level, {}});
    tree.nodes[static_cast<std::size_t>(parent)].children.push_back({false, me});
    for (const auto& item : loop.body) {
        if (item.is_loop()) {
            build_tree(item.loop(), level + 1, me, tree, program, sequence, config);
            continue;
        }
        const auto& s = item.statement();
        const int leaf = static_cast<int>(tree.leaves.size());
        tree.leaves.push_back(featurize_statement(program, s.id, sequence, config));
        tree.leaf_statements.push_back(s.id);
        tree.nodes[static_cast<std::size_t>(me)].children.push_back({true, leaf});
    }
}

}  // namespace

void FeatureConfig::check() const {
    if (max_depth <= 0 || max_accesses <= 0 || max_ops <= 0 || max_xforms <= 0 ||
        access_rows <= 0)
        throw ContractError("feature config sizes must be positive");
    if (op_kinds != 7) throw ContractError("op_kinds must be 7");
    if (bound_scale <= 0 || log_trip_scale <= 0 || matrix_scale <= 0 || tile_scale <= 0 ||
        unroll_log_scale <= 0)
        throw ContractError("feature normalizers must be positive");
}

SegmentLayout segment_layout(const FeatureConfig& c) {
    c.check();
    SegmentLayout l;
    int at = 0;
    auto take = [&](int n) {
        Segment s{at, n};
        at += n;
        return s;
    };
    l.access_block = c.access_rows * (c.max_depth + 1);
    l.domain = take(c.max_depth * 4);
    l.access = take(c.max_accesses * l.access_block + 1);
    l.ops = take(c.max_ops * c.op_kinds);
    l.sched = take(c.max_depth * c.max_depth + c.max_xforms * (kTransformKinds + 2));
    l.tags = take(c.max_depth + 4 + 2);
    l.total = at;
    return l;
}

int total_dim(const FeatureConfig& config) { return segment_layout(config).total; }

ComputationVector featurize_statement(const Program& program, std::string_view statement_id,
                                      std::span<const Transformation> full_sequence,
                                      const FeatureConfig& c) {
    const SegmentLayout lay = segment_layout(c);
    const StatementSite site = find_statement(program, statement_id);
    const Statement& s = *site.statement;
    const int depth = site.depth();
    if (depth > c.max_depth)
        throw CapacityError("statement " + s.id + ": depth " + std::to_string(depth) +
                            " exceeds max_depth " + std::to_string(c.max_depth));
    const auto sequence = in_scope(full_sequence, depth);
    if (static_cast<int>(sequence.size()) > c.max_xforms)
        throw CapacityError("statement " + s.id + ": more than " + std::to_string(c.max_xforms) +
                            " transformations");

    ComputationVector v;
    v.values.assign(static_cast<std::size_t>(lay.total), c.pad_value);
    auto at = [&](int i) -> double& { return v.values[static_cast<std::size_t>(i)]; };

    // Iteration domain.
    for (int l = 0; l < depth; ++l) {
        const LoopNode& loop = *site.loops[static_cast<std::size_t>(l)];
        const int base = lay.domain.offset + 4 * l;
        at(base + 0) = static_cast<double>(loop.lower) / c.bound_scale;
        at(base + 1) = static_cast<double>(loop.upper) / c.bound_scale;
        at(base + 2) = std::log2(static_cast<double>(loop.trip_count())) / c.log_trip_scale;
        at(base + 3) = 1.0;
    }

    // Accesses: write first, then reads.
    std::vector<const AccessRelation*> accesses{&s.write};
    for (const auto& r : s.reads) accesses.push_back(&r);
    if (static_cast<int>(accesses.size()) > c.max_accesses)
        throw CapacityError("statement " + s.id + ": " + std::to_string(accesses.size()) +
                            " accesses exceed max_accesses " + std::to_string(c.max_accesses));
    for (std::size_t i = 0; i < accesses.size(); ++i) {
        const IntMatrix& m = accesses[i]->matrix;
        if (m.rows() > c.access_rows || m.cols() > c.max_depth + 1)
            throw CapacityError("statement " + s.id + ": access matrix too large");
        const int base = lay.access.offset + static_cast<int>(i) * lay.access_block;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index col = 0; col < m.cols(); ++col)
                at(base + static_cast<int>(r) * (c.max_depth + 1) + static_cast<int>(col)) =
                    static_cast<double>(m(r, col)) / c.matrix_scale;
    }
    at(lay.access.end() - 1) =
        static_cast<double>(accesses.size()) / static_cast<double>(c.max_accesses);

    // Operations, post-order, access leaves omitted.
    int row = 0;
    for (OpKind k : post_order(s.expr)) {
        const int slot = op_slot(k);
        if (slot < 0) continue;
        if (row >= c.max_ops)
            throw CapacityError("statement " + s.id + ": more than " + std::to_string(c.max_ops) +
                                " operation rows");
        at(lay.ops.offset + row * c.op_kinds + slot) = 1.0;
        ++row;
    }

    // Schedule matrix and per-transform rows.
    const IntMatrix sched = compose_schedule(sequence, depth);
    for (int r = 0; r < depth; ++r)
        for (int col = 0; col < depth; ++col)
            at(lay.sched.offset + r * c.max_depth + col) =
                static_cast<double>(sched(r, col)) / c.matrix_scale;
    const int rows_base = lay.sched.offset + c.max_depth * c.max_depth;
    const double md = static_cast<double>(c.max_depth);
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        const int base = rows_base + static_cast<int>(i) * (kTransformKinds + 2);
        at(base + static_cast<int>(sequence[i].index())) = 1.0;
        const auto [first, second] = transform_levels(sequence[i]);
        at(base + kTransformKinds) = (first + 1) / md;
        at(base + kTransformKinds + 1) = second < 0 ? 0.0 : (second + 1) / md;
    }

    // Loop tags.
    const int tags = lay.tags.offset;
    for (const auto& t : sequence) {
        if (const auto* p = std::get_if<Parallelize>(&t)) {
            at(tags + p->level) = 1.0;
        } else if (const auto* x = std::get_if<Tile>(&t)) {
            at(tags + c.max_depth + 0) = 1.0;
            at(tags + c.max_depth + 1) = (x->a + 1) / md;
            at(tags + c.max_depth + 2) = x->size_a / c.tile_scale;
            at(tags + c.max_depth + 3) = x->size_b / c.tile_scale;
        } else if (const auto* u = std::get_if<Unroll>(&t)) {
            at(tags + c.max_depth + 4) = 1.0;
            at(tags + c.max_depth + 5) = std::log2(static_cast<double>(u->factor)) /
                                         c.unroll_log_scale;
        }
    }
    return v;
}

ProgramTree featurize_program(const Program& program, std::span<const Transformation> sequence,
                              const FeatureConfig& config) {
    ProgramTree tree;
    tree.nodes.push_back({0, -1, {}});
    for (const auto& root : program.root_loops)
        build_tree(root, 0, 0, tree, program, sequence, config);
    return tree;
}

}  // namespace loopperf
