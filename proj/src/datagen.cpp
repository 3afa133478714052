#include "loopperf/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "loopperf/errors.hpp"
#include "loopperf/serialize.hpp"

namespace loopperf {

namespace {

constexpr OpKind kBinaryOps[] = {OpKind::Add, OpKind::Sub, OpKind::Mul,
                                 OpKind::Div, OpKind::Min, OpKind::Max};
constexpr std::uint64_t kSequenceStream = 1;
constexpr std::uint64_t kSplitStream = 0x5b117;

class ProgramBuilder {
public:
    ProgramBuilder(Rng& rng, const GenConfig& cfg) : rng_(rng), cfg_(cfg) {}

    Program build(std::string id) {
        program_.id = std::move(id);
        const int depth = uniform_int(rng_, cfg_.min_loops, cfg_.max_loops);
        const int n_stmt = uniform_int(rng_, cfg_.min_statements, cfg_.max_statements);
        std::vector<std::pair<int, int>> nests;  // (depth, statements)
        if (n_stmt >= 2 && coin(rng_, 0.25)) {
            const int first = uniform_int(rng_, 1, n_stmt - 1);
            nests.emplace_back(depth, first);
            nests.emplace_back(uniform_int(rng_, cfg_.min_loops, depth), n_stmt - first);
        } else {
            nests.emplace_back(depth, n_stmt);
        }
        for (auto [d, m] : nests) {
            // Placement: the first statement sits in the innermost loop.
            std::vector<std::pair<int, bool>> slots;  // (loop level 1..d, before child loop)
            slots.emplace_back(d, true);
            for (int i = 1; i < m; ++i) slots.emplace_back(uniform_int(rng_, 1, d), coin(rng_, 0.5));
            std::vector<std::int64_t> lows, trips;
            for (int l = 0; l < d; ++l) {
                lows.push_back(coin(rng_, 0.15) ? uniform_int(rng_, 1, 3) : 0);
                trips.push_back(cfg_.trip_choices[static_cast<std::size_t>(
                    uniform_int(rng_, 0, static_cast<int>(cfg_.trip_choices.size()) - 1))]);
            }
            program_.root_loops.push_back(make_loop(0, d, slots, lows, trips));
        }
        compute_extents();
        return std::move(program_);
    }

private:
    LoopNode make_loop(int level, int depth, const std::vector<std::pair<int, bool>>& slots,
                       const std::vector<std::int64_t>& lows,
                       const std::vector<std::int64_t>& trips) {
        LoopNode loop;
        loop.iterator = "i" + std::to_string(level);
        loop.lower = lows[static_cast<std::size_t>(level)];
        loop.upper = loop.lower + trips[static_cast<std::size_t>(level)];
        const int here = level + 1;
        const bool innermost = here == depth;
        for (const auto& [slot_level, before] : slots)
            if (slot_level == here && (before || innermost))
                loop.body.push_back({make_statement(here)});
        if (!innermost) loop.body.push_back({make_loop(level + 1, depth, slots, lows, trips)});
        if (!innermost)
            for (const auto& [slot_level, before] : slots)
                if (slot_level == here && !before) loop.body.push_back({make_statement(here)});
        return loop;
    }

    std::string new_buffer(int dims) {
        std::string name = "b" + std::to_string(program_.buffers.size());
        program_.buffers.push_back({name, std::vector<std::int64_t>(static_cast<std::size_t>(dims), 1)});
        return name;
    }

    IntMatrix write_matrix(int dims, int depth) {
        std::vector<int> levels(static_cast<std::size_t>(depth));
        for (int l = 0; l < depth; ++l) levels[static_cast<std::size_t>(l)] = l;
        std::shuffle(levels.begin(), levels.end(), rng_);
        levels.resize(static_cast<std::size_t>(dims));
        std::sort(levels.begin(), levels.end());
        IntMatrix m = IntMatrix::Zero(dims, depth + 1);
        for (int r = 0; r < dims; ++r) m(r, levels[static_cast<std::size_t>(r)]) = 1;
        return m;
    }

    IntMatrix read_matrix(int dims, int depth) {
        IntMatrix m = IntMatrix::Zero(dims, depth + 1);
        for (int r = 0; r < dims; ++r) {
            const bool last = r == dims - 1;
            const int lvl = last && coin(rng_, 0.5) ? depth - 1 : uniform_int(rng_, 0, depth - 1);
            const double u = uniform01(rng_);
            if (u < 0.65) {
                m(r, lvl) = 1;
            } else if (u < 0.75) {
                constexpr int kCoeffs[] = {2, 4, 8, 16};
                m(r, lvl) = kCoeffs[uniform_int(rng_, 0, 3)];
            } else if (u < 0.9 && depth >= 2) {
                int other = uniform_int(rng_, 0, depth - 2);
                if (other >= lvl) ++other;
                m(r, lvl) = 1;
                m(r, other) = 1;
            } else {
                m(r, depth) = uniform_int(rng_, 0, 3);
                continue;
            }
            if (coin(rng_, 0.25)) m(r, depth) = uniform_int(rng_, -2, 2);
        }
        return m;
    }

    Statement make_statement(int depth) {
        Statement s;
        s.id = "s" + std::to_string(n_statements_++);

        const int wdims = uniform_int(rng_, 1, std::min(kMaxBufferDims, depth));
        if (!written_.empty() && coin(rng_, 0.15)) {
            const auto& name = written_[static_cast<std::size_t>(
                uniform_int(rng_, 0, static_cast<int>(written_.size()) - 1))];
            const int dims = program_.find_buffer(name)->dims();
            if (dims <= depth) s.write = {name, write_matrix(dims, depth)};
        }
        if (s.write.buffer.empty()) {
            s.write = {new_buffer(wdims), write_matrix(wdims, depth)};
            written_.push_back(s.write.buffer);
        }

        const int n_ops = uniform_int(rng_, 1, 6);
        const int n_reads = uniform_int(rng_, 1, std::min(5, n_ops + 1));
        for (int r = 0; r < n_reads; ++r) {
            std::string name;
            const double u = uniform01(rng_);
            if (u < 0.25 && !written_.empty()) {
                name = written_[static_cast<std::size_t>(
                    uniform_int(rng_, 0, static_cast<int>(written_.size()) - 1))];
            } else if (u < 0.5 && !inputs_.empty()) {
                name = inputs_[static_cast<std::size_t>(
                    uniform_int(rng_, 0, static_cast<int>(inputs_.size()) - 1))];
            } else {
                name = new_buffer(uniform_int(rng_, 1, std::min(kMaxBufferDims, depth + 1)));
                inputs_.push_back(name);
            }
            const int dims = program_.find_buffer(name)->dims();
            s.reads.push_back({name, read_matrix(dims, depth)});
        }

        std::vector<Expr> leaves;
        for (int r = 0; r < n_reads; ++r) leaves.push_back(Expr::access(r));
        while (static_cast<int>(leaves.size()) < n_ops + 1)
            leaves.push_back(Expr::constant_leaf(uniform_int(rng_, 1, 9)));
        std::shuffle(leaves.begin(), leaves.end(), rng_);
        while (leaves.size() > 1) {
            const auto i = static_cast<std::size_t>(
                uniform_int(rng_, 0, static_cast<int>(leaves.size()) - 2));
            OpKind k = kBinaryOps[uniform_int(rng_, 0, 5)];
            if (k == OpKind::Div && !is_leaf(leaves[i + 1].kind)) k = OpKind::Mul;
            Expr node = Expr::binary(k, std::move(leaves[i]), std::move(leaves[i + 1]));
            leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            leaves[i] = std::move(node);
        }
        s.expr = std::move(leaves.front());
        return s;
    }

    void compute_extents() {
        for (const auto& site : statement_sites(program_)) {
            auto visit = [&](const AccessRelation& a) {
                BufferDecl* buf = nullptr;
                for (auto& b : program_.buffers)
                    if (b.name == a.buffer) buf = &b;
                const int depth = a.depth();
                for (int r = 0; r < a.rows(); ++r) {
                    std::int64_t hi = a.matrix(r, depth);
                    for (int l = 0; l < depth; ++l) {
                        const auto* loop = site.loops[static_cast<std::size_t>(l)];
                        const std::int64_t c = a.matrix(r, l);
                        hi += std::max(c * loop->lower, c * (loop->upper - 1));
                    }
                    auto& ext = buf->extents[static_cast<std::size_t>(r)];
                    ext = std::max(ext, hi + 1);
                }
            };
            visit(site.statement->write);
            for (const auto& r : site.statement->reads) visit(r);
        }
    }

    Rng& rng_;
    const GenConfig& cfg_;
    Program program_;
    int n_statements_ = 0;
    std::vector<std::string> written_;
    std::vector<std::string> inputs_;
};

std::optional<Transformation> pick_next(const Program& program,
                                        const TransformationSequence& sequence, Rng& rng) {
    std::vector<std::vector<Transformation>> buckets(kTransformKinds);
    for (auto& c : candidate_transformations(program, sequence))
        buckets[c.index()].push_back(std::move(c));
    std::vector<std::size_t> kinds;
    for (std::size_t k = 0; k < buckets.size(); ++k)
        if (!buckets[k].empty()) kinds.push_back(k);
    std::shuffle(kinds.begin(), kinds.end(), rng);
    TransformationSequence trial = sequence;
    trial.emplace_back();
    for (auto k : kinds) {
        auto& bucket = buckets[k];
        std::shuffle(bucket.begin(), bucket.end(), rng);
        for (const auto& c : bucket) {
            trial.back() = c;
            if (!applicable(trial, program)) return c;
        }
    }
    return std::nullopt;
}

}  // namespace

void GenConfig::check() const {
    if (n_programs < 0) throw ContractError("gen: n_programs must be >= 0");
    if (min_loops < 1 || max_loops > kMaxDepth || min_loops > max_loops)
        throw ContractError("gen: loop range must lie in [1, " + std::to_string(kMaxDepth) + "]");
    if (min_statements < 1 || max_statements > 3 || min_statements > max_statements)
        throw ContractError("gen: statement range must lie in [1, 3]");
    if (trip_choices.empty()) throw ContractError("gen: no trip choices");
    for (auto t : trip_choices)
        if (t < 2) throw ContractError("gen: trip counts must be >= 2");
    if (min_sequences < 1 || max_sequences > 32 || min_sequences > max_sequences)
        throw ContractError("gen: sequence range must lie in [1, 32]");
}

Program gen_program(Rng& rng, const GenConfig& config, std::string id) {
    config.check();
    return ProgramBuilder(rng, config).build(std::move(id));
}

Program gen_program(const GenConfig& config, std::uint64_t index) {
    const std::uint64_t global = config.first_index + index;
    Rng rng(derive_seed(config.seed, global));
    return gen_program(rng, config, config.id_prefix + std::to_string(global));
}

std::vector<TransformationSequence> sample_sequences(const Program& program, Rng& rng,
                                                     const GenConfig& config) {
    config.check();
    const int target = uniform_int(rng, config.min_sequences, config.max_sequences);
    std::vector<TransformationSequence> out{{}};
    std::set<std::string> seen{sequence_key({})};
    for (int attempt = 0; static_cast<int>(out.size()) < target && attempt < 20 * target;
         ++attempt) {
        const int length = uniform_int(rng, 1, static_cast<int>(kMaxTransforms));
        TransformationSequence seq;
        while (static_cast<int>(seq.size()) < length) {
            auto next = pick_next(program, seq, rng);
            if (!next) break;
            seq.push_back(*next);
        }
        if (seq.empty()) continue;
        if (seen.insert(sequence_key(seq)).second) out.push_back(std::move(seq));
    }
    return out;
}

std::vector<TransformationSequence> sample_sequences(const Program& program,
                                                     const GenConfig& config, std::uint64_t index) {
    Rng rng(derive_seed(config.seed, config.first_index + index, kSequenceStream));
    return sample_sequences(program, rng, config);
}

LabeledDataset build_labeled_dataset(const GenConfig& config, const MachineConfig& machine) {
    config.check();
    machine.check();
    LabeledDataset ds;
    const auto n = static_cast<std::size_t>(config.n_programs);
    for (std::size_t i = 0; i < n; ++i) ds.programs.push_back(gen_program(config, i));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng split_rng(derive_seed(config.seed, kSplitStream, config.first_index));
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 7.0));
    const auto n_test = n_valid;
    const std::size_t n_train = n - n_valid - n_test;
    std::vector<int> split_of(n);
    for (std::size_t k = 0; k < n; ++k) split_of[order[k]] = k < n_train ? 0 : (k < n_train + n_valid ? 1 : 2);

    for (std::size_t i = 0; i < n; ++i) {
        const Program& p = ds.programs[i];
        auto& dest = split_of[i] == 0 ? ds.train : (split_of[i] == 1 ? ds.valid : ds.test);
        for (auto& seq : sample_sequences(p, config, i)) {
            const double s = speedup(p, seq, machine);
            dest.push_back({static_cast<int>(i), std::move(seq), s});
        }
    }
    return ds;
}

VectorDataset build_pretrain_dataset(const GenConfig& config, const FeatureConfig& features) {
    config.check();
    const int dim = total_dim(features);
    std::vector<Program> programs;
    std::vector<std::vector<TransformationSequence>> sequences;
    std::size_t upper = 0;
    for (int i = 0; i < config.n_programs; ++i) {
        programs.push_back(gen_program(config, static_cast<std::uint64_t>(i)));
        sequences.push_back(sample_sequences(programs.back(), config, static_cast<std::uint64_t>(i)));
        upper += statement_sites(programs.back()).size() * sequences.back().size();
    }

    VectorDataset ds;
    ds.config = features;
    ds.vectors.resize(dim, static_cast<Eigen::Index>(upper));
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < programs.size(); ++i) {
        const auto sites = statement_sites(programs[i]);
        for (const auto& seq : sequences[i]) {
            for (const auto& site : sites) {
                try {
                    auto v = featurize_statement(programs[i], site.statement->id, seq, features);
                    ds.vectors.col(col++) = Eigen::Map<const Eigen::VectorXd>(v.values.data(), dim);
                    ds.program_ids.push_back(programs[i].id);
                    ds.statement_ids.push_back(site.statement->id);
                    ds.sequences.push_back(seq);
                } catch (const CapacityError&) {
                    ++ds.skipped;
                }
            }
        }
    }
    ds.vectors.conservativeResize(dim, col);
    return ds;
}

std::vector<std::size_t> subsample_fraction(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractError("fraction must be in [0,1]");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, 0xf2ac));
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    return perm;
}

}  // namespace loopperf
