#pragma once

// Random program / transformation generation and dataset assembly.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loopperf/featurize.hpp"
#include "loopperf/loop_ir.hpp"
#include "loopperf/oracle.hpp"
#include "loopperf/rng.hpp"
#include "loopperf/transform.hpp"

namespace loopperf {

// Index offset for the unlabeled pretraining pool, disjoint from labeled programs.
inline constexpr std::uint64_t kUnlabeledFirstIndex = 1'000'000'000;

struct GenConfig {
    std::uint64_t seed = 0;
    int n_programs = 100;
    int min_loops = 1;
    int max_loops = kMaxDepth;
    int min_statements = 1;
    int max_statements = 3;
    std::vector<std::int64_t> trip_choices{8, 16, 32, 64, 128};
    int min_sequences = 1;
    int max_sequences = 32;
    // Program i uses stream (seed, first_index + i) and id id_prefix + (first_index + i).
    std::uint64_t first_index = 0;
    std::string id_prefix = "p";

    void check() const;
};

Program gen_program(Rng& rng, const GenConfig& config, std::string id);
Program gen_program(const GenConfig& config, std::uint64_t index);

// Empty sequence first, no duplicates, every entry applicable.
std::vector<TransformationSequence> sample_sequences(const Program& program, Rng& rng,
                                                     const GenConfig& config);
std::vector<TransformationSequence> sample_sequences(const Program& program,
                                                     const GenConfig& config, std::uint64_t index);

struct LabeledSample {
    int program = 0;  // index into LabeledDataset::programs
    TransformationSequence sequence;
    double speedup = 1.0;
};

struct LabeledDataset {
    std::vector<Program> programs;
    std::vector<LabeledSample> train, valid, test;
};

// Programs are split 5:1:1 (train:valid:test) by program.
LabeledDataset build_labeled_dataset(const GenConfig& config, const MachineConfig& machine);

// Unlabeled statement vectors; one column per (statement, sequence).
struct VectorDataset {
    FeatureConfig config;
    Eigen::MatrixXd vectors;  // total_dim x N
    std::vector<std::string> program_ids;
    std::vector<std::string> statement_ids;
    std::vector<TransformationSequence> sequences;
    std::size_t skipped = 0;

    std::size_t size() const { return static_cast<std::size_t>(vectors.cols()); }
};

VectorDataset build_pretrain_dataset(const GenConfig& config, const FeatureConfig& features);

// floor(fraction * n) sorted indices; nested in `fraction` for a fixed seed.
std::vector<std::size_t> subsample_fraction(std::size_t n, double fraction, std::uint64_t seed);

}  // namespace loopperf
