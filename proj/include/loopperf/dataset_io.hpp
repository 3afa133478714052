#pragma once

// JSON Lines files for programs, labeled splits and statement vectors.

#include <filesystem>
#include <string>
#include <vector>

#include "loopperf/datagen.hpp"
#include "loopperf/serialize.hpp"

namespace loopperf {

std::string programs_to_jsonl(const std::vector<Program>& programs);
std::vector<Program> programs_from_jsonl(const std::string& text);

// One {program_id, sequence, speedup} record per line.
std::string samples_to_jsonl(const std::vector<Program>& programs, const std::vector<LabeledSample>& samples);
// Resolves program ids against `programs`; LookupError on unknown ids.
std::vector<LabeledSample> samples_from_jsonl(const std::string& text, const std::vector<Program>& programs);

// First line: {kind, feature_config, total_dim, count, skipped}; then one
// {program_id, statement_id, sequence, vector} record per line.
std::string vectors_to_jsonl(const VectorDataset& data);
// FormatError when a vector length differs from the header's total_dim, or
// the header disagrees with its own feature config.
VectorDataset vectors_from_jsonl(const std::string& text);

// The layout written by `gen`.
struct DataDir {
    static constexpr const char* kPrograms = "programs.jsonl";
    static constexpr const char* kTrain = "train.jsonl";
    static constexpr const char* kValid = "valid.jsonl";
    static constexpr const char* kTest = "test.jsonl";
    static constexpr const char* kVectors = "pretrain_vectors.jsonl";
};

LabeledDataset load_labeled_dir(const std::filesystem::path& dir);

}  // namespace loopperf
