#include "loopperf/loop_ir.hpp"

#include <cctype>
#include <map>
#include <set>

#include "loopperf/errors.hpp"

namespace loopperf {

namespace {

constexpr std::pair<OpKind, std::string_view> kOpNames[] = {
    {OpKind::Add, "ADD"},   {OpKind::Sub, "SUB"},       {OpKind::Mul, "MUL"},
    {OpKind::Div, "DIV"},   {OpKind::Min, "MIN"},       {OpKind::Max, "MAX"},
    {OpKind::LeafAccess, "LEAF_ACCESS"}, {OpKind::LeafConst, "LEAF_CONST"},
};

void collect_sites(const LoopNode& loop, std::vector<const LoopNode*>& stack,
                   std::vector<StatementSite>& out) {
    stack.push_back(&loop);
    for (const auto& child : loop.body) {
        if (child.is_loop()) {
            collect_sites(child.loop(), stack, out);
        } else {
            out.push_back({&child.statement(), stack});
        }
    }
    stack.pop_back();
}

void post_order_into(const Expr& e, std::vector<OpKind>& out) {
    for (const auto& c : e.children) post_order_into(c, out);
    out.push_back(e.kind);
}

}  // namespace

std::string_view op_name(OpKind k) {
    for (const auto& [kind, name] : kOpNames)
        if (kind == k) return name;
    return "?";
}

OpKind op_from_name(std::string_view name) {
    for (const auto& [kind, n] : kOpNames)
        if (n == name) return kind;
    throw FormatError("unknown op kind '" + std::string(name) + "'");
}

Expr Expr::access(int read_index) {
    Expr e;
    e.kind = OpKind::LeafAccess;
    e.read_index = read_index;
    return e;
}

Expr Expr::constant_leaf(double value) {
    Expr e;
    e.kind = OpKind::LeafConst;
    e.constant = value;
    return e;
}

Expr Expr::binary(OpKind kind, Expr lhs, Expr rhs) {
    if (is_leaf(kind)) throw ContractError("binary node with leaf kind");
    Expr e;
    e.kind = kind;
    e.children.push_back(std::move(lhs));
    e.children.push_back(std::move(rhs));
    return e;
}

int count_ops(const Expr& e) {
    int n = is_leaf(e.kind) ? 0 : 1;
    for (const auto& c : e.children) n += count_ops(c);
    return n;
}

int count_const_leaves(const Expr& e) {
    int n = e.kind == OpKind::LeafConst ? 1 : 0;
    for (const auto& c : e.children) n += count_const_leaves(c);
    return n;
}

std::vector<OpKind> post_order(const Expr& e) {
    std::vector<OpKind> out;
    post_order_into(e, out);
    return out;
}

const BufferDecl* Program::find_buffer(std::string_view name) const {
    for (const auto& b : buffers)
        if (b.name == name) return &b;
    return nullptr;
}

std::vector<StatementSite> statement_sites(const Program& program) {
    std::vector<StatementSite> out;
    std::vector<const LoopNode*> stack;
    for (const auto& root : program.root_loops) collect_sites(root, stack, out);
    return out;
}

StatementSite find_statement(const Program& program, std::string_view statement_id) {
    for (auto& site : statement_sites(program))
        if (site.statement->id == statement_id) return site;
    throw LookupError("statement '" + std::string(statement_id) + "' not in program '" +
                      program.id + "'");
}

int loop_depth(const Program& program, std::string_view statement_id) {
    return find_statement(program, statement_id).depth();
}

std::vector<Bounds> iteration_domain(const Program& program, std::string_view statement_id) {
    std::vector<Bounds> out;
    for (const auto* loop : find_statement(program, statement_id).loops)
        out.push_back({loop->lower, loop->upper});
    return out;
}

std::vector<std::int64_t> trip_counts(const StatementSite& site) {
    std::vector<std::int64_t> out;
    out.reserve(site.loops.size());
    for (const auto* loop : site.loops) out.push_back(loop->trip_count());
    return out;
}

// ---------------------------------------------------------------------------

IndexExpr IndexExpr::iter(int level) {
    IndexExpr e;
    e.kind = Kind::Iter;
    e.level = level;
    return e;
}

IndexExpr IndexExpr::constant(std::int64_t v) {
    IndexExpr e;
    e.kind = Kind::Const;
    e.value = v;
    return e;
}

static IndexExpr make_binary(IndexExpr::Kind kind, IndexExpr a, IndexExpr b) {
    IndexExpr e;
    e.kind = kind;
    e.operands.push_back(std::move(a));
    e.operands.push_back(std::move(b));
    return e;
}

IndexExpr operator+(IndexExpr a, IndexExpr b) {
    return make_binary(IndexExpr::Kind::Add, std::move(a), std::move(b));
}
IndexExpr operator-(IndexExpr a, IndexExpr b) {
    return make_binary(IndexExpr::Kind::Sub, std::move(a), std::move(b));
}
IndexExpr operator*(IndexExpr a, IndexExpr b) {
    return make_binary(IndexExpr::Kind::Mul, std::move(a), std::move(b));
}

namespace {

class IndexParser {
public:
    IndexParser(std::string_view text, std::span<const std::string> iterators)
        : text_(text), iterators_(iterators) {}

    IndexExpr parse() {
        IndexExpr e = sum();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing input");
        return e;
    }

private:
    IndexExpr sum() {
        IndexExpr lhs = product();
        for (;;) {
            skip_ws();
            if (eat('+')) {
                lhs = std::move(lhs) + product();
            } else if (eat('-')) {
                lhs = std::move(lhs) - product();
            } else {
                return lhs;
            }
        }
    }

    IndexExpr product() {
        IndexExpr lhs = unary();
        for (;;) {
            skip_ws();
            if (!eat('*')) return lhs;
            lhs = std::move(lhs) * unary();
        }
    }

    IndexExpr unary() {
        skip_ws();
        if (eat('-')) {
            IndexExpr e;
            e.kind = IndexExpr::Kind::Neg;
            e.operands.push_back(unary());
            return e;
        }
        if (eat('(')) {
            IndexExpr e = sum();
            skip_ws();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            std::int64_t v = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                v = v * 10 + (text_[pos_++] - '0');
            return IndexExpr::constant(v);
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (start == pos_) fail("expected operand");
        std::string_view name = text_.substr(start, pos_ - start);
        for (std::size_t l = 0; l < iterators_.size(); ++l)
            if (iterators_[l] == name) return IndexExpr::iter(static_cast<int>(l));
        throw FeaturizationError("unknown iterator '" + std::string(name) + "' in index '" +
                                 std::string(text_) + "'");
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const char* what) const {
        throw FeaturizationError(std::string(what) + " at offset " + std::to_string(pos_) +
                                 " in index '" + std::string(text_) + "'");
    }

    std::string_view text_;
    std::span<const std::string> iterators_;
    std::size_t pos_ = 0;
};

// Linear form: coefficient per level plus constant (last slot).
using Linear = std::vector<std::int64_t>;

bool is_constant(const Linear& f) {
    for (std::size_t i = 0; i + 1 < f.size(); ++i)
        if (f[i] != 0) return false;
    return true;
}

Linear linearize(const IndexExpr& e, int depth) {
    Linear out(static_cast<std::size_t>(depth) + 1, 0);
    switch (e.kind) {
        case IndexExpr::Kind::Iter:
            if (e.level < 0 || e.level >= depth)
                throw BoundsError("iterator level " + std::to_string(e.level) +
                                  " outside depth " + std::to_string(depth));
            out[static_cast<std::size_t>(e.level)] = 1;
            return out;
        case IndexExpr::Kind::Const:
            out.back() = e.value;
            return out;
        case IndexExpr::Kind::Neg: {
            Linear a = linearize(e.operands.at(0), depth);
            for (auto& v : a) v = -v;
            return a;
        }
        case IndexExpr::Kind::Add:
        case IndexExpr::Kind::Sub: {
            Linear a = linearize(e.operands.at(0), depth);
            Linear b = linearize(e.operands.at(1), depth);
            const std::int64_t sign = e.kind == IndexExpr::Kind::Add ? 1 : -1;
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += sign * b[i];
            return a;
        }
        case IndexExpr::Kind::Mul: {
            Linear a = linearize(e.operands.at(0), depth);
            Linear b = linearize(e.operands.at(1), depth);
            if (!is_constant(a) && !is_constant(b))
                throw FeaturizationError("non-affine index: product of iterators");
            const bool a_const = is_constant(a);
            const std::int64_t k = a_const ? a.back() : b.back();
            Linear r = a_const ? b : a;
            for (auto& v : r) v *= k;
            return r;
        }
    }
    return out;
}

}  // namespace

IndexExpr parse_index(std::string_view text, std::span<const std::string> iterators) {
    return IndexParser(text, iterators).parse();
}

IntMatrix access_matrix(std::span<const IndexExpr> indices, int depth) {
    if (depth < 0) throw ContractError("negative depth");
    IntMatrix m = IntMatrix::Zero(static_cast<Eigen::Index>(indices.size()), depth + 1);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        Linear f = linearize(indices[r], depth);
        for (int c = 0; c <= depth; ++c)
            m(static_cast<Eigen::Index>(r), c) = f[static_cast<std::size_t>(c)];
    }
    return m;
}

std::vector<IndexExpr> index_expressions(const IntMatrix& matrix) {
    std::vector<IndexExpr> out;
    const int depth = static_cast<int>(matrix.cols()) - 1;
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        IndexExpr e = IndexExpr::constant(matrix(r, depth));
        for (int c = 0; c < depth; ++c) {
            if (matrix(r, c) == 0) continue;
            e = std::move(e) + IndexExpr::constant(matrix(r, c)) * IndexExpr::iter(c);
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Validator {
    const Program& program;
    std::vector<Violation> out;
    std::set<std::string> statement_ids;

    void add(std::string where, std::string what) {
        out.push_back({std::move(where), std::move(what)});
    }

    void check_access(const std::string& where, const AccessRelation& a, int depth) {
        const BufferDecl* buf = program.find_buffer(a.buffer);
        if (buf == nullptr) {
            add(where, "undeclared buffer '" + a.buffer + "'");
        } else if (buf->dims() != a.rows()) {
            add(where, "buffer '" + a.buffer + "' has " + std::to_string(buf->dims()) +
                           " dims but access has " + std::to_string(a.rows()) + " rows");
        }
        if (a.matrix.cols() != depth + 1)
            add(where, "access matrix has " + std::to_string(a.matrix.cols()) +
                           " columns, expected depth+1 = " + std::to_string(depth + 1));
    }

    void check_expr(const std::string& where, const Expr& e, std::size_t n_reads) {
        if (is_leaf(e.kind)) {
            if (!e.children.empty()) add(where, "leaf with children");
            if (e.kind == OpKind::LeafAccess &&
                (e.read_index < 0 || static_cast<std::size_t>(e.read_index) >= n_reads))
                add(where, "leaf references read #" + std::to_string(e.read_index));
            return;
        }
        if (e.children.size() != 2) {
            add(where, std::string(op_name(e.kind)) + " needs 2 children");
            return;
        }
        if (e.kind == OpKind::Div && e.children[1].kind == OpKind::LeafConst &&
            e.children[1].constant == 0)
            add(where, "division by constant zero");
        if (e.kind == OpKind::Div && !is_leaf(e.children[1].kind))
            add(where, "DIV denominator must be an access or constant");
        for (const auto& c : e.children) check_expr(where, c, n_reads);
    }

    void visit(const LoopNode& loop, std::vector<std::string>& path) {
        const std::string where = program.id + "/" + loop.iterator;
        for (const auto& it : path)
            if (it == loop.iterator) add(where, "duplicate iterator '" + it + "' on path");
        if (loop.upper - loop.lower < 2)
            add(where, "trip count " + std::to_string(loop.upper - loop.lower) + " < 2");
        if (loop.body.empty()) add(where, "empty loop body");
        path.push_back(loop.iterator);
        if (static_cast<int>(path.size()) > kMaxDepth)
            add(where, "nesting depth exceeds " + std::to_string(kMaxDepth));
        const int depth = static_cast<int>(path.size());
        for (const auto& child : loop.body) {
            if (child.is_loop()) {
                visit(child.loop(), path);
                continue;
            }
            const Statement& s = child.statement();
            const std::string swhere = program.id + "/" + s.id;
            if (!statement_ids.insert(s.id).second) add(swhere, "duplicate statement id");
            check_access(swhere + "/write", s.write, depth);
            for (std::size_t r = 0; r < s.reads.size(); ++r)
                check_access(swhere + "/read" + std::to_string(r), s.reads[r], depth);
            const int ops = count_ops(s.expr);
            if (ops < 1 || ops > kMaxOps)
                add(swhere, "expression has " + std::to_string(ops) + " ops, allowed 1.." +
                                std::to_string(kMaxOps));
            check_expr(swhere, s.expr, s.reads.size());
        }
        path.pop_back();
    }
};

}  // namespace

std::vector<Violation> validate(const Program& program) {
    Validator v{program, {}, {}};
    if (program.root_loops.empty()) v.add(program.id, "program has no loops");
    std::set<std::string> names;
    for (const auto& b : program.buffers) {
        if (!names.insert(b.name).second) v.add(program.id + "/" + b.name, "duplicate buffer");
        if (b.dims() < 1 || b.dims() > kMaxBufferDims)
            v.add(program.id + "/" + b.name, "buffer dims must be in 1.." +
                                                 std::to_string(kMaxBufferDims));
        for (auto e : b.extents)
            if (e <= 0) v.add(program.id + "/" + b.name, "non-positive extent");
    }
    std::vector<std::string> path;
    for (const auto& root : program.root_loops) v.visit(root, path);
    return v.out;
}

}  // namespace loopperf
