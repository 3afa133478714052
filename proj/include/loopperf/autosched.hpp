#pragma once

// Level-by-level beam search over transformation sequences, and the harness
// that scores the sequences chosen by different evaluators with the oracle.

#include <chrono>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "loopperf/oracle.hpp"
#include "loopperf/perfmodel.hpp"

namespace loopperf {

struct SearchConfig {
    int beam_width = 8;  // 0 = unbounded (exhaustive up to max_depth)
    int max_depth = 4;

    void check() const;
};

// Scores candidate sequences of one program; higher is better.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> score(const Program& program,
                                      std::span<const TransformationSequence> candidates) const = 0;
};

class OracleEvaluator final : public Evaluator {
public:
    explicit OracleEvaluator(MachineConfig machine, std::string name = "oracle");
    std::string name() const override { return name_; }
    std::vector<double> score(const Program& program,
                              std::span<const TransformationSequence> candidates) const override;

private:
    MachineConfig machine_;
    std::string name_;
};

// Sees only the model; it has no route to the oracle.
class ModelEvaluator final : public Evaluator {
public:
    ModelEvaluator(std::shared_ptr<const PerfModel> model, std::string name);
    std::string name() const override { return name_; }
    std::vector<double> score(const Program& program,
                              std::span<const TransformationSequence> candidates) const override;

private:
    std::shared_ptr<const PerfModel> model_;
    std::string name_;
};

struct SearchResult {
    TransformationSequence best;
    double score = 0;
    int levels = 0;                // levels expanded
    std::size_t evaluations = 0;   // candidates scored, root included
};

// Root = empty sequence. Each level extends every beam member by every
// applicable transformation and keeps the top beam_width by score, ties
// broken by sequence_key. Returns the best node seen at any level. With
// `trace`, writes one JSON line per level.
SearchResult search(const Program& program, const Evaluator& evaluator, const SearchConfig& config,
                    std::ostream* trace = nullptr);

// Every applicable sequence of length <= max_length, empty one first.
std::vector<TransformationSequence> all_sequences(const Program& program, int max_length);

struct BenchmarkRow {
    std::string program_id;
    std::string evaluator;
    TransformationSequence chosen;
    double true_speedup = 0;
};

struct BenchmarkRatio {
    std::string a, b;
    int wins = 0;  // programs where a's true speedup > b's
    double geomean_ratio = 0;
};

struct BenchmarkSummary {
    std::vector<std::pair<std::string, double>> geomeans;
    std::vector<BenchmarkRatio> ratios;  // every ordered pair
};

std::vector<BenchmarkRow> benchmark_models(const std::vector<Program>& programs,
                                           std::span<const Evaluator* const> evaluators,
                                           const MachineConfig& machine, const SearchConfig& config);
BenchmarkSummary summarize_benchmark(const std::vector<BenchmarkRow>& rows);
double geometric_mean(std::span<const double> values);

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);
std::string benchmark_summary_csv(const BenchmarkSummary& summary);

struct TimingReport {
    std::vector<std::pair<std::string, double>> seconds_per_candidate;
    double ratio = 0;  // second evaluator / first
    std::string ratio_text() const;
};

// Times scoring of every level-1 candidate of each program, `repeats` times.
TimingReport timing_probe(const std::vector<Program>& programs, const Evaluator& first,
                          const Evaluator& second, int repeats = 3);

}  // namespace loopperf
