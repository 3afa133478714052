#include "loopperf/transform.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

#include "loopperf/errors.hpp"

namespace loopperf {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_level(int level, int depth, const char* what) {
    if (level < 0 || level >= depth)
        throw BoundsError(std::string(what) + " level " + std::to_string(level) +
                          " out of range for depth " + std::to_string(depth));
}

std::string level_msg(int level, int depth) {
    return "level " + std::to_string(level) + " out of range for depth " + std::to_string(depth);
}

// Trip counts permuted into schedule order by the affine part.
std::vector<std::int64_t> schedule_trips(std::span<const std::int64_t> trips,
                                         std::span<const Transformation> sequence) {
    std::vector<std::int64_t> out(trips.begin(), trips.end());
    const int depth = static_cast<int>(out.size());
    for (const auto& t : sequence) {
        if (const auto* x = std::get_if<Interchange>(&t)) {
            require_level(x->a, depth, "interchange");
            require_level(x->b, depth, "interchange");
            std::swap(out[static_cast<std::size_t>(x->a)], out[static_cast<std::size_t>(x->b)]);
        }
    }
    return out;
}

template <class T>
const T* find_tag(std::span<const Transformation> sequence) {
    for (const auto& t : sequence)
        if (const auto* x = std::get_if<T>(&t)) return x;
    return nullptr;
}

// Index of the effective loop a tag on `level` lands on.
std::size_t effective_index(int level, const Tile* tile, bool inner) {
    if (tile == nullptr || level < tile->a) return static_cast<std::size_t>(level);
    if (level == tile->a) return static_cast<std::size_t>(tile->a + (inner ? 2 : 0));
    if (level == tile->b) return static_cast<std::size_t>(tile->a + (inner ? 3 : 1));
    return static_cast<std::size_t>(level + 2);
}

// Access matrix with iterator columns padded to kMaxDepth and the constant last.
IntMatrix canonical(const IntMatrix& m) {
    const int depth = static_cast<int>(m.cols()) - 1;
    IntMatrix out = IntMatrix::Zero(m.rows(), kMaxDepth + 1);
    out.leftCols(depth) = m.leftCols(depth);
    out.col(kMaxDepth) = m.col(depth);
    return out;
}

std::optional<Violation> check_order(std::span<const Transformation> sequence,
                                     const std::string& where) {
    auto fail = [&](std::string what) { return Violation{where, std::move(what)}; };
    if (sequence.size() > kMaxTransforms)
        return fail("sequence longer than " + std::to_string(kMaxTransforms));

    int n_par = 0, n_tile = 0, n_unroll = 0;
    bool seen_tag = false;
    for (const auto& t : sequence) {
        if (is_affine(t) && seen_tag) return fail("affine transformation after loop tag");
        seen_tag = seen_tag || !is_affine(t);
        n_par += std::holds_alternative<Parallelize>(t);
        n_tile += std::holds_alternative<Tile>(t);
        n_unroll += std::holds_alternative<Unroll>(t);
    }
    if (n_par > 1) return fail("duplicate parallelize");
    if (n_tile > 1) return fail("duplicate tile");
    if (n_unroll > 1) return fail("duplicate unroll");
    return std::nullopt;
}

std::optional<Violation> check_structure(std::span<const Transformation> sequence,
                                         std::span<const std::int64_t> trips,
                                         const std::string& where) {
    const int depth = static_cast<int>(trips.size());
    auto fail = [&](std::string what) { return Violation{where, std::move(what)}; };
    if (auto v = check_order(sequence, where)) return v;

    for (const auto& t : sequence) {
        const int top = max_level(t);
        if (top >= depth) return fail(std::string(kind_name(t)) + " " + level_msg(top, depth));
        std::optional<std::string> bad = std::visit(
            overloaded{
                [](const Interchange& x) -> std::optional<std::string> {
                    if (x.a < 0 || x.b < 0) return "negative level";
                    if (x.a == x.b) return "degenerate interchange";
                    return std::nullopt;
                },
                [](const Reversal& x) -> std::optional<std::string> {
                    if (x.level < 0) return "negative level";
                    return std::nullopt;
                },
                [](const Skewing& x) -> std::optional<std::string> {
                    if (x.a < 0 || x.b < 0) return "negative level";
                    if (x.a >= x.b) return "skewing requires a < b";
                    if (x.factor_a != 1) return "non-unimodular skew (factor_a != 1)";
                    if (x.factor_b < 1 || x.factor_b > kMaxSkewFactor)
                        return "skew factor outside [1," + std::to_string(kMaxSkewFactor) + "]";
                    return std::nullopt;
                },
                [](const Parallelize& x) -> std::optional<std::string> {
                    if (x.level < 0) return "negative level";
                    return std::nullopt;
                },
                [](const Tile& x) -> std::optional<std::string> {
                    if (x.a < 0) return "negative level";
                    if (x.b != x.a + 1) return "tile requires level_b = level_a + 1";
                    auto ok = [](int s) {
                        return std::find(std::begin(kTileSizes), std::end(kTileSizes), s) !=
                               std::end(kTileSizes);
                    };
                    if (!ok(x.size_a) || !ok(x.size_b)) return "tile size not in {2,4,8,16,32}";
                    return std::nullopt;
                },
                [](const Unroll& x) -> std::optional<std::string> {
                    if (x.level < 0) return "negative level";
                    if (std::find(std::begin(kUnrollFactors), std::end(kUnrollFactors),
                                  x.factor) == std::end(kUnrollFactors))
                        return "unroll factor not in {2,4,8,16}";
                    return std::nullopt;
                },
            },
            t);
        if (bad) return fail(std::string(kind_name(t)) + ": " + *bad);
    }

    const auto strips = schedule_trips(trips, sequence);
    const Tile* tile = find_tag<Tile>(sequence);
    if (tile != nullptr) {
        if (tile->size_a > strips[static_cast<std::size_t>(tile->a)] ||
            tile->size_b > strips[static_cast<std::size_t>(tile->b)])
            return fail("tile size exceeds trip count");
    }
    const auto* par = find_tag<Parallelize>(sequence);
    const auto* unroll = find_tag<Unroll>(sequence);
    if (unroll != nullptr) {
        std::int64_t trip = strips[static_cast<std::size_t>(unroll->level)];
        if (tile != nullptr && unroll->level == tile->a) trip = tile->size_a;
        if (tile != nullptr && unroll->level == tile->b) trip = tile->size_b;
        if (unroll->factor > trip) return fail("unroll factor exceeds trip count");
        if (par != nullptr && effective_index(par->level, tile, false) ==
                                  effective_index(unroll->level, tile, true))
            return fail("parallelize and unroll on the same loop");
    }
    return std::nullopt;
}

// Conservative same-buffer rule for parallelizing `level` of the statement at
// `site`: considers every statement sharing that loop.
std::optional<Violation> check_parallel(std::span<const Transformation> sequence,
                                        const Program& program, const StatementSite& site,
                                        int level) {
    const LoopNode* loop = site.loops[static_cast<std::size_t>(level)];
    std::vector<StatementSite> group;
    for (auto& other : statement_sites(program))
        if (other.depth() > level && other.loops[static_cast<std::size_t>(level)] == loop)
            group.push_back(std::move(other));

    const std::string where = program.id + "/" + site.statement->id;
    for (const auto& w : group) {
        const int depth = w.depth();
        const auto local = in_scope(sequence, depth);
        const IntMatrix inv = unimodular_inverse(compose_schedule(local, depth));
        const IntMatrix& a = w.statement->write.matrix;
        const IntMatrix moved = a.leftCols(depth) * inv;
        if (moved.col(level).isZero())
            return Violation{where, "parallel write race on buffer '" +
                                        w.statement->write.buffer + "' (written by " +
                                        w.statement->id + ")"};
        const IntMatrix wcanon = canonical(a);
        for (const auto& r : group) {
            for (const auto& read : r.statement->reads) {
                if (read.buffer != w.statement->write.buffer) continue;
                const IntMatrix rcanon = canonical(read.matrix);
                if (rcanon.rows() != wcanon.rows() || rcanon != wcanon)
                    return Violation{where, "loop-carried dependence on buffer '" + read.buffer +
                                                "' between " + w.statement->id + " and " +
                                                r.statement->id};
            }
        }
    }
    return std::nullopt;
}

// `sequence` is the full program sequence; the site sees its in-scope part.
std::optional<Violation> check_site(std::span<const Transformation> sequence,
                                    const Program& program, const StatementSite& site,
                                    bool strict) {
    const auto trips = trip_counts(site);
    const std::string where = program.id + "/" + site.statement->id;
    const auto local = strict ? TransformationSequence(sequence.begin(), sequence.end())
                              : in_scope(sequence, site.depth());
    if (auto v = check_structure(local, trips, where)) return v;
    if (const auto* par = find_tag<Parallelize>(local))
        return check_parallel(sequence, program, site, par->level);
    return std::nullopt;
}

}  // namespace

bool is_affine(const Transformation& t) {
    return std::holds_alternative<Interchange>(t) || std::holds_alternative<Reversal>(t) ||
           std::holds_alternative<Skewing>(t);
}

std::string_view kind_name(const Transformation& t) {
    return std::visit(overloaded{
                          [](const Interchange&) { return std::string_view("Interchange"); },
                          [](const Reversal&) { return std::string_view("Reversal"); },
                          [](const Skewing&) { return std::string_view("Skewing"); },
                          [](const Parallelize&) { return std::string_view("Parallelize"); },
                          [](const Tile&) { return std::string_view("Tile"); },
                          [](const Unroll&) { return std::string_view("Unroll"); },
                      },
                      t);
}

int max_level(const Transformation& t) {
    return std::visit(overloaded{
                          [](const Interchange& x) { return std::max(x.a, x.b); },
                          [](const Reversal& x) { return x.level; },
                          [](const Skewing& x) { return std::max(x.a, x.b); },
                          [](const Parallelize& x) { return x.level; },
                          [](const Tile& x) { return std::max(x.a, x.b); },
                          [](const Unroll& x) { return x.level; },
                      },
                      t);
}

IntMatrix affine_matrix(const Transformation& t, int depth) {
    IntMatrix m = IntMatrix::Identity(depth, depth);
    if (const auto* x = std::get_if<Interchange>(&t)) {
        require_level(x->a, depth, "interchange");
        require_level(x->b, depth, "interchange");
        m.row(x->a).swap(m.row(x->b));
    } else if (const auto* x = std::get_if<Reversal>(&t)) {
        require_level(x->level, depth, "reversal");
        m(x->level, x->level) = -1;
    } else if (const auto* x = std::get_if<Skewing>(&t)) {
        require_level(x->a, depth, "skewing");
        require_level(x->b, depth, "skewing");
        if (x->a == x->b) throw ContractError("skewing a level against itself");
        m.row(x->a).setZero();
        m(x->a, x->a) = x->factor_a;
        m(x->a, x->b) = x->factor_b;
    } else {
        throw ContractError("affine_matrix: " + std::string(kind_name(t)) + " is not affine");
    }
    return m;
}

IntMatrix compose_schedule(std::span<const Transformation> sequence, int depth) {
    IntMatrix m = IntMatrix::Identity(depth, depth);
    for (const auto& t : sequence)
        if (is_affine(t)) m = affine_matrix(t, depth) * m;
    return m;
}

std::int64_t determinant(const IntMatrix& input) {
    if (input.rows() != input.cols()) throw ContractError("determinant of non-square matrix");
    const Eigen::Index n = input.rows();
    if (n == 0) return 1;
    // Bareiss fraction-free elimination.
    IntMatrix m = input;
    std::int64_t sign = 1, prev = 1;
    for (Eigen::Index k = 0; k < n - 1; ++k) {
        if (m(k, k) == 0) {
            Eigen::Index p = k + 1;
            while (p < n && m(p, k) == 0) ++p;
            if (p == n) return 0;
            m.row(k).swap(m.row(p));
            sign = -sign;
        }
        for (Eigen::Index i = k + 1; i < n; ++i)
            for (Eigen::Index j = k + 1; j < n; ++j)
                m(i, j) = (m(i, j) * m(k, k) - m(i, k) * m(k, j)) / prev;
        prev = m(k, k);
    }
    return sign * m(n - 1, n - 1);
}

IntMatrix unimodular_inverse(const IntMatrix& m) {
    const std::int64_t det = determinant(m);
    if (det != 1 && det != -1)
        throw ContractError("matrix is not unimodular (det " + std::to_string(det) + ")");
    const Eigen::Index n = m.rows();
    IntMatrix inv(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            IntMatrix minor(n - 1, n - 1);
            for (Eigen::Index r = 0, mr = 0; r < n; ++r) {
                if (r == j) continue;
                for (Eigen::Index c = 0, mc = 0; c < n; ++c) {
                    if (c == i) continue;
                    minor(mr, mc++) = m(r, c);
                }
                ++mr;
            }
            const std::int64_t cof = ((i + j) % 2 == 0 ? 1 : -1) * determinant(minor);
            inv(i, j) = cof * det;  // det = +-1, so dividing equals multiplying
        }
    }
    return inv;
}

TransformationSequence in_scope(std::span<const Transformation> sequence, int depth) {
    TransformationSequence out;
    for (const auto& t : sequence)
        if (max_level(t) < depth) out.push_back(t);
    return out;
}

std::vector<EffectiveLoop> effective_loop_structure(std::span<const std::int64_t> trips,
                                                    std::span<const Transformation> sequence) {
    const int depth = static_cast<int>(trips.size());
    for (const auto& t : sequence) require_level(max_level(t), depth, kind_name(t).data());
    const auto strips = schedule_trips(trips, sequence);

    std::vector<EffectiveLoop> loops;
    const Tile* tile = find_tag<Tile>(sequence);
    for (int d = 0; d < depth; ++d) {
        const std::int64_t trip = strips[static_cast<std::size_t>(d)];
        if (tile != nullptr && d == tile->a) {
            const std::int64_t ta = trip;
            const std::int64_t tb = strips[static_cast<std::size_t>(tile->b)];
            const std::int64_t sa = tile->size_a, sb = tile->size_b;
            loops.push_back({tile->a, (ta + sa - 1) / sa, 1, false, EffectiveLoop::Role::TileOuter});
            loops.push_back({tile->b, (tb + sb - 1) / sb, 1, false, EffectiveLoop::Role::TileOuter});
            loops.push_back({tile->a, sa, 1, false, EffectiveLoop::Role::TileInner});
            loops.push_back({tile->b, sb, 1, false, EffectiveLoop::Role::TileInner});
            ++d;
            continue;
        }
        loops.push_back({d, trip, 1, false, EffectiveLoop::Role::Plain});
    }
    if (const auto* p = find_tag<Parallelize>(sequence))
        loops[effective_index(p->level, tile, false)].parallel = true;
    if (const auto* u = find_tag<Unroll>(sequence)) {
        auto& l = loops[effective_index(u->level, tile, true)];
        l.trip = (l.trip + u->factor - 1) / u->factor;
        l.unroll = u->factor;
    }
    return loops;
}

std::vector<EffectiveLoop> effective_loop_structure(const Program& program,
                                                    std::string_view statement_id,
                                                    std::span<const Transformation> sequence) {
    const auto site = find_statement(program, statement_id);
    const auto trips = trip_counts(site);
    return effective_loop_structure(trips, sequence);
}

std::optional<Violation> applicable(std::span<const Transformation> sequence,
                                    const Program& program, std::string_view statement_id) {
    StatementSite site;
    try {
        site = find_statement(program, statement_id);
    } catch (const LookupError& e) {
        return Violation{program.id, e.what()};
    }
    return check_site(sequence, program, site, true);
}

std::optional<Violation> applicable(std::span<const Transformation> sequence,
                                    const Program& program) {
    const auto sites = statement_sites(program);
    int max_depth = 0;
    for (const auto& s : sites) max_depth = std::max(max_depth, s.depth());
    if (auto v = check_order(sequence, program.id)) return v;
    for (const auto& t : sequence)
        if (max_level(t) >= max_depth)
            return Violation{program.id, std::string(kind_name(t)) + " " +
                                             level_msg(max_level(t), max_depth) +
                                             " (no statement in scope)"};
    for (const auto& s : sites) {
        if (auto v = check_site(sequence, program, s, false)) return v;
    }
    return std::nullopt;
}

std::vector<Transformation> candidate_transformations(const Program& program,
                                                     std::span<const Transformation> sequence) {
    std::vector<Transformation> candidates;
    if (sequence.size() >= kMaxTransforms) return candidates;
    int depth = 0;
    for (const auto& s : statement_sites(program)) depth = std::max(depth, s.depth());

    bool has_tag = false, has_par = false, has_tile = false, has_unroll = false;
    for (const auto& t : sequence) {
        has_tag = has_tag || !is_affine(t);
        has_par = has_par || std::holds_alternative<Parallelize>(t);
        has_tile = has_tile || std::holds_alternative<Tile>(t);
        has_unroll = has_unroll || std::holds_alternative<Unroll>(t);
    }

    if (!has_tag) {
        for (int a = 0; a < depth; ++a)
            for (int b = a + 1; b < depth; ++b) candidates.push_back(Interchange{a, b});
        for (int l = 0; l < depth; ++l) candidates.push_back(Reversal{l});
        for (int a = 0; a < depth; ++a)
            for (int b = a + 1; b < depth; ++b)
                for (int f = 1; f <= kMaxSkewFactor; ++f) candidates.push_back(Skewing{a, b, 1, f});
    }
    if (!has_par)
        for (int l = 0; l < depth; ++l) candidates.push_back(Parallelize{l});
    if (!has_tile)
        for (int a = 0; a + 1 < depth; ++a)
            for (int sa : kTileSizes)
                for (int sb : kTileSizes) candidates.push_back(Tile{a, a + 1, sa, sb});
    if (!has_unroll)
        for (int l = 0; l < depth; ++l)
            for (int f : kUnrollFactors) candidates.push_back(Unroll{l, f});
    return candidates;
}

std::vector<Transformation> enumerate_extensions(const Program& program,
                                                 std::span<const Transformation> sequence) {
    std::vector<Transformation> out;
    const auto candidates = candidate_transformations(program, sequence);
    TransformationSequence trial(sequence.begin(), sequence.end());
    trial.emplace_back();
    for (const auto& c : candidates) {
        trial.back() = c;
        if (!applicable(trial, program)) out.push_back(c);
    }
    return out;
}

}  // namespace loopperf
