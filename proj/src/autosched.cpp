#include "loopperf/autosched.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "loopperf/csv.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/serialize.hpp"

namespace loopperf {

void SearchConfig::check() const {
    if (beam_width < 0) throw ContractError("search: beam_width must be >= 1 (0 = unbounded)");
    if (max_depth < 1) throw ContractError("search: max_depth must be >= 1");
}

OracleEvaluator::OracleEvaluator(MachineConfig machine, std::string name)
    : machine_(machine), name_(std::move(name)) {
    machine_.check();
}

std::vector<double> OracleEvaluator::score(const Program& program,
                                           std::span<const TransformationSequence> candidates) const {
    std::vector<double> out;
    out.reserve(candidates.size());
    const double base = oracle_cost(program, {}, machine_);
    for (const auto& c : candidates) out.push_back(base / oracle_cost(program, c, machine_));
    return out;
}

ModelEvaluator::ModelEvaluator(std::shared_ptr<const PerfModel> model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {
    if (!model_) throw ContractError("model evaluator: null model");
}

std::vector<double> ModelEvaluator::score(const Program& program,
                                          std::span<const TransformationSequence> candidates) const {
    std::vector<ProgramTree> trees;
    trees.reserve(candidates.size());
    for (const auto& c : candidates) trees.push_back(featurize_program(program, c, model_->features()));
    std::vector<const ProgramTree*> ptrs;
    for (const auto& t : trees) ptrs.push_back(&t);
    const Eigen::VectorXd p = model_->predict_batch(ptrs);
    return {p.data(), p.data() + p.size()};
}

namespace {

struct Node {
    TransformationSequence seq;
    std::string key;
    double score = 0;
};

bool better(const Node& a, const Node& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
}

Json trace_line(int level, const std::vector<Node>& beam) {
    Json kept = Json::array();
    for (const auto& n : beam) kept.push_back({{"sequence", sequence_to_json(n.seq)}, {"score", n.score}});
    return {{"level", level}, {"beam", kept}};
}

}  // namespace

SearchResult search(const Program& program, const Evaluator& evaluator, const SearchConfig& cfg,
                    std::ostream* trace) {
    cfg.check();
    if (auto v = validate(program); !v.empty())
        throw ContractError("search: invalid program: " + v[0].where + ": " + v[0].what);

    SearchResult res;
    const TransformationSequence empty;
    Node root{empty, sequence_key(empty), evaluator.score(program, std::span(&empty, 1))[0]};
    res.evaluations = 1;
    Node best = root;
    std::vector<Node> beam{root};
    if (trace != nullptr) *trace << trace_line(0, beam).dump() << '\n';

    for (int level = 1; level <= cfg.max_depth; ++level) {
        std::vector<TransformationSequence> seqs;
        for (const auto& n : beam)
            for (const auto& t : enumerate_extensions(program, n.seq)) {
                auto s = n.seq;
                s.push_back(t);
                seqs.push_back(std::move(s));
            }
        if (seqs.empty()) break;
        const auto scores = evaluator.score(program, seqs);
        res.evaluations += seqs.size();
        std::vector<Node> next;
        next.reserve(seqs.size());
        for (std::size_t k = 0; k < seqs.size(); ++k) {
            std::string key = sequence_key(seqs[k]);
            next.push_back({std::move(seqs[k]), std::move(key), scores[k]});
        }
        std::sort(next.begin(), next.end(), better);
        if (cfg.beam_width > 0 && next.size() > static_cast<std::size_t>(cfg.beam_width))
            next.resize(static_cast<std::size_t>(cfg.beam_width));
        if (better(next.front(), best)) best = next.front();
        beam = std::move(next);
        res.levels = level;
        if (trace != nullptr) *trace << trace_line(level, beam).dump() << '\n';
    }
    res.best = std::move(best.seq);
    res.score = best.score;
    return res;
}

std::vector<TransformationSequence> all_sequences(const Program& program, int max_length) {
    std::vector<TransformationSequence> out{{}};
    for (std::size_t at = 0; at < out.size(); ++at) {
        if (static_cast<int>(out[at].size()) >= max_length) continue;
        for (const auto& t : enumerate_extensions(program, out[at])) {
            auto s = out[at];
            s.push_back(t);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<BenchmarkRow> benchmark_models(const std::vector<Program>& programs,
                                           std::span<const Evaluator* const> evaluators,
                                           const MachineConfig& machine, const SearchConfig& cfg) {
    std::vector<BenchmarkRow> rows;
    for (const auto& p : programs)
        for (const auto* e : evaluators) {
            auto r = search(p, *e, cfg);
            const double truth = speedup(p, r.best, machine);
            rows.push_back({p.id, e->name(), std::move(r.best), truth});
        }
    return rows;
}

double geometric_mean(std::span<const double> values) {
    if (values.empty()) throw ContractError("geometric mean of nothing");
    double s = 0;
    for (double v : values) {
        if (!(v > 0)) throw ContractError("geometric mean needs positive values");
        s += std::log(v);
    }
    return std::exp(s / static_cast<double>(values.size()));
}

BenchmarkSummary summarize_benchmark(const std::vector<BenchmarkRow>& rows) {
    std::vector<std::string> names;
    std::map<std::string, std::map<std::string, double>> by_eval;  // evaluator -> program -> speedup
    for (const auto& r : rows) {
        if (std::find(names.begin(), names.end(), r.evaluator) == names.end()) names.push_back(r.evaluator);
        by_eval[r.evaluator][r.program_id] = r.true_speedup;
    }
    BenchmarkSummary s;
    for (const auto& n : names) {
        std::vector<double> v;
        for (const auto& [pid, x] : by_eval[n]) v.push_back(x);
        s.geomeans.emplace_back(n, geometric_mean(v));
    }
    for (const auto& a : names)
        for (const auto& b : names) {
            if (a == b) continue;
            BenchmarkRatio r{a, b, 0, 0};
            std::vector<double> ratios;
            for (const auto& [pid, x] : by_eval[a]) {
                const auto it = by_eval[b].find(pid);
                if (it == by_eval[b].end()) continue;
                r.wins += x > it->second;
                ratios.push_back(x / it->second);
            }
            if (!ratios.empty()) r.geomean_ratio = geometric_mean(ratios);
            s.ratios.push_back(r);
        }
    return s;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
    std::string out = "program_id,evaluator,chosen_sequence,true_speedup\n";
    for (const auto& r : rows)
        out += csv_field(r.program_id) + "," + csv_field(r.evaluator) + "," + csv_field(sequence_key(r.chosen)) +
               "," + fmt_double(r.true_speedup) + "\n";
    return out;
}

std::string benchmark_summary_csv(const BenchmarkSummary& s) {
    std::string out = "kind,a,b,wins,value\n";
    for (const auto& [n, g] : s.geomeans) out += "geomean," + csv_field(n) + ",,," + fmt_double(g) + "\n";
    for (const auto& r : s.ratios)
        out += "ratio," + csv_field(r.a) + "," + csv_field(r.b) + "," + std::to_string(r.wins) + "," +
               fmt_double(r.geomean_ratio) + "\n";
    return out;
}

std::string TimingReport::ratio_text() const { return fmt_fixed(ratio, 2); }

TimingReport timing_probe(const std::vector<Program>& programs, const Evaluator& first,
                          const Evaluator& second, int repeats) {
    if (repeats < 1) throw ContractError("timing probe: repeats must be >= 1");
    using Clock = std::chrono::steady_clock;
    std::vector<std::vector<TransformationSequence>> candidates;
    std::size_t count = 0;
    for (const auto& p : programs) {
        auto c = all_sequences(p, 1);
        count += c.size();
        candidates.push_back(std::move(c));
    }
    if (count == 0) throw ContractError("timing probe: no candidates");
    double t1 = 0, t2 = 0;
    // Interleaved so drift in machine load hits both evaluators alike.
    for (int r = 0; r < repeats; ++r)
        for (std::size_t i = 0; i < programs.size(); ++i) {
            auto a = Clock::now();
            first.score(programs[i], candidates[i]);
            auto b = Clock::now();
            second.score(programs[i], candidates[i]);
            auto c = Clock::now();
            t1 += std::chrono::duration<double>(b - a).count();
            t2 += std::chrono::duration<double>(c - b).count();
        }
    const double n = static_cast<double>(count) * repeats;
    TimingReport rep;
    rep.seconds_per_candidate = {{first.name(), t1 / n}, {second.name(), t2 / n}};
    rep.ratio = t2 / t1;
    return rep;
}

}  // namespace loopperf
