#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "loopperf/serialize.hpp"

namespace loopperf::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Bad flag values; reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenOptions {
    std::uint64_t seed = 0;
    int n_programs = 2000;
    int n_pretrain_programs = 6500;  // unlabeled pool; 0 skips the vector file
    int max_sequences = 32;
    std::string out_dir;
};

struct PretrainOptions {
    std::string data_dir;
    std::string variant = "segmented";
    int embedding_dim = 128;
    int epochs = 6;
    int batch_size = 128;
    double lr = 1e-3;
    double valid_fraction = 0.05;
    std::uint64_t seed = 0;
    std::string out_dir;
};

struct TrainOptions {
    std::string data_dir;
    std::string frontend = "baseline";  // baseline | encoder
    std::string pretrained;             // encoder without it = random init
    double fraction = 1.0;
    std::uint64_t seed = 0;
    int max_epochs = 100;
    int patience = 5;
    int batch_size = 32;
    double lr = 1e-3;
    double encoder_lr_scale = 0.2;
    std::size_t max_valid = 0;
    std::string out_dir;
};

struct EvalOptions {
    std::string model;
    std::string data_dir;
    std::string split = "test";
};

struct SearchOptions {
    std::string data_dir;
    std::string model;  // empty = oracle
    std::string split = "test";
    std::string program_id;  // empty = first `limit` programs of the split
    int limit = 25;
    int beam = 8;
    int depth = 4;
    bool trace = false;
    std::string out_dir;
};

struct ExperimentOptions {
    std::string data_dir;
    std::string pretrained;
    std::vector<double> fractions{0.025, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<std::string> variants{"baseline", "encoder_pretrained", "encoder_random"};
    int max_epochs = 100;
    int min_epochs = 8;
    std::size_t sample_budget = 300000;
    int patience = 5;
    int batch_size = 32;
    double lr = 1e-3;
    std::size_t max_valid = 2000;
    double bench_fraction = 0.05;
    int bench_programs = 25;
    int beam = 8;
    int depth = 4;
    int timing_programs = 10;
    std::string out_dir;
};

// Each command checks its outputs do not exist (unless `force`), runs,
// writes outputs and a manifest atomically, then re-reads every output to
// confirm its checksum. Progress goes to `log`.
void run_gen(const GenOptions& o, bool force, std::ostream& log);
void run_pretrain(const PretrainOptions& o, bool force, std::ostream& log);
void run_train(const TrainOptions& o, bool force, std::ostream& log);
double run_eval(const EvalOptions& o, std::ostream& log);
void run_search(const SearchOptions& o, bool force, std::ostream& log);
void run_experiment(const ExperimentOptions& o, bool force, std::ostream& log);

// Re-executes a manifest; `out_dir` (if non-empty) overrides the recorded
// one. With `verify`, deterministic outputs must match the recorded checksums.
void run_rerun(const std::string& manifest, const std::string& out_dir, bool force, bool verify,
               std::ostream& log);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace loopperf::cli
