#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "loopperf/loop_ir.hpp"

namespace lpt {

using namespace loopperf;

inline AccessRelation acc(const std::string& buffer, const std::vector<std::string>& idx,
                          const std::vector<std::string>& iters) {
    std::vector<IndexExpr> e;
    for (const auto& s : idx) e.push_back(parse_index(s, iters));
    return {buffer, access_matrix(e, static_cast<int>(iters.size()))};
}

inline BodyNode node(LoopNode l) { return {std::move(l)}; }
inline BodyNode node(Statement s) { return {std::move(s)}; }

inline LoopNode loop(std::string it, std::int64_t lo, std::int64_t hi, std::vector<BodyNode> body) {
    return {std::move(it), lo, hi, std::move(body)};
}

// reads[0] + reads[1] + ... ; a single read becomes read * 2.
inline Expr sum_reads(int n) {
    if (n == 1) return Expr::binary(OpKind::Mul, Expr::access(0), Expr::constant_leaf(2));
    Expr e = Expr::access(0);
    for (int r = 1; r < n; ++r) e = Expr::binary(OpKind::Add, std::move(e), Expr::access(r));
    return e;
}

inline Statement stmt(std::string id, AccessRelation write, std::vector<AccessRelation> reads) {
    Expr e = sum_reads(static_cast<int>(reads.size()));
    return {std::move(id), std::move(write), std::move(reads), std::move(e)};
}

// Declares every referenced buffer with generous extents.
inline Program finish(Program p) {
    std::vector<std::pair<std::string, int>> seen;
    auto note = [&](const AccessRelation& a) {
        for (const auto& [n, d] : seen)
            if (n == a.buffer) return;
        seen.emplace_back(a.buffer, a.rows());
    };
    for (const auto& site : statement_sites(p)) {
        note(site.statement->write);
        for (const auto& r : site.statement->reads) note(r);
    }
    for (const auto& [n, d] : seen) p.buffers.push_back({n, std::vector<std::int64_t>(static_cast<std::size_t>(d), 4096)});
    return p;
}

// One statement `S` writing B[iters...] and reading A[iters...] in a perfect nest.
inline Program perfect_nest(const std::vector<std::int64_t>& trips) {
    std::vector<std::string> it;
    for (std::size_t k = 0; k < trips.size(); ++k) it.push_back("i" + std::to_string(k));
    std::vector<BodyNode> body{node(stmt("S", acc("B", it, it), {acc("A", it, it)}))};
    for (std::size_t k = trips.size(); k-- > 0;) body = {node(loop(it[k], 0, trips[k], std::move(body)))};
    Program p{"nest", {}, {}};
    p.root_loops.push_back(std::move(std::get<LoopNode>(body[0].node)));
    return finish(std::move(p));
}

}  // namespace lpt
