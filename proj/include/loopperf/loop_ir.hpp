#pragma once

// Miniature loop-nest IR: rectangular loops over statements with affine
// array accesses.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace loopperf {

inline constexpr int kMaxDepth = 4;
inline constexpr int kMaxOps = 16;
inline constexpr int kMaxBufferDims = 4;

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct BufferDecl {
    std::string name;
    std::vector<std::int64_t> extents;  // one per dimension

    int dims() const { return static_cast<int>(extents.size()); }
    bool operator==(const BufferDecl&) const = default;
};

// k x (n+1) matrix: row r holds the iterator coefficients of index r, the last
// column holds its constant.
struct AccessRelation {
    std::string buffer;
    IntMatrix matrix;

    int rows() const { return static_cast<int>(matrix.rows()); }
    int depth() const { return static_cast<int>(matrix.cols()) - 1; }
    bool operator==(const AccessRelation& o) const {
        return buffer == o.buffer && matrix.rows() == o.matrix.rows() &&
               matrix.cols() == o.matrix.cols() && matrix == o.matrix;
    }
};

enum class OpKind { Add, Sub, Mul, Div, Min, Max, LeafAccess, LeafConst };

std::string_view op_name(OpKind k);
OpKind op_from_name(std::string_view name);
inline bool is_leaf(OpKind k) { return k == OpKind::LeafAccess || k == OpKind::LeafConst; }

// Right-hand side of a statement. Binary nodes have two children, leaves none.
struct Expr {
    OpKind kind = OpKind::LeafConst;
    std::vector<Expr> children;
    int read_index = -1;   // LeafAccess: index into Statement::reads
    double constant = 0;   // LeafConst

    static Expr access(int read_index);
    static Expr constant_leaf(double value);
    static Expr binary(OpKind kind, Expr lhs, Expr rhs);

    bool operator==(const Expr&) const = default;
};

// Number of binary operation nodes.
int count_ops(const Expr& e);
// Number of constant leaves.
int count_const_leaves(const Expr& e);
// Node kinds in post-order.
std::vector<OpKind> post_order(const Expr& e);

struct Statement {
    std::string id;
    AccessRelation write;
    std::vector<AccessRelation> reads;
    Expr expr;

    bool operator==(const Statement&) const = default;
};

struct BodyNode;

struct LoopNode {
    std::string iterator;
    std::int64_t lower = 0;
    std::int64_t upper = 0;  // exclusive
    std::vector<BodyNode> body;

    std::int64_t trip_count() const { return upper - lower; }
    bool operator==(const LoopNode&) const;
};

struct BodyNode {
    std::variant<LoopNode, Statement> node;

    bool is_loop() const { return std::holds_alternative<LoopNode>(node); }
    const LoopNode& loop() const { return std::get<LoopNode>(node); }
    const Statement& statement() const { return std::get<Statement>(node); }
    bool operator==(const BodyNode&) const = default;
};

inline bool LoopNode::operator==(const LoopNode& o) const {
    return iterator == o.iterator && lower == o.lower && upper == o.upper && body == o.body;
}

struct Program {
    std::string id;
    std::vector<BufferDecl> buffers;
    std::vector<LoopNode> root_loops;

    const BufferDecl* find_buffer(std::string_view name) const;
    bool operator==(const Program&) const = default;
};

// A statement together with its enclosing loops, outermost first.
struct StatementSite {
    const Statement* statement = nullptr;
    std::vector<const LoopNode*> loops;

    int depth() const { return static_cast<int>(loops.size()); }
};

// All statements in program (source) order.
std::vector<StatementSite> statement_sites(const Program& program);
// Throws LookupError when the id is unknown.
StatementSite find_statement(const Program& program, std::string_view statement_id);

int loop_depth(const Program& program, std::string_view statement_id);

struct Bounds {
    std::int64_t lower;
    std::int64_t upper;
    bool operator==(const Bounds&) const = default;
};
std::vector<Bounds> iteration_domain(const Program& program, std::string_view statement_id);
std::vector<std::int64_t> trip_counts(const StatementSite& site);

// ---------------------------------------------------------------------------
// Index expressions

// Index expression over loop iterators (by level). May be non-affine; the
// access_matrix conversion rejects those.
struct IndexExpr {
    enum class Kind { Iter, Const, Add, Sub, Mul, Neg };
    Kind kind = Kind::Const;
    int level = 0;
    std::int64_t value = 0;
    std::vector<IndexExpr> operands;

    static IndexExpr iter(int level);
    static IndexExpr constant(std::int64_t v);
    friend IndexExpr operator+(IndexExpr a, IndexExpr b);
    friend IndexExpr operator-(IndexExpr a, IndexExpr b);
    friend IndexExpr operator*(IndexExpr a, IndexExpr b);
};

// Parses e.g. "i0+2*i1-3" given the enclosing iterator names.
IndexExpr parse_index(std::string_view text, std::span<const std::string> iterators);

// Throws FeaturizationError for non-affine indices, BoundsError for iterators
// beyond depth.
IntMatrix access_matrix(std::span<const IndexExpr> indices, int depth);

// Inverse of access_matrix: one affine expression per row.
std::vector<IndexExpr> index_expressions(const IntMatrix& matrix);

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string where;  // program/statement/access path
    std::string what;
    bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate(const Program& program);

}  // namespace loopperf
