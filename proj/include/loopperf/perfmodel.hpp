#pragma once

// AST-structured speedup predictor: statement vectors -> frontend embeddings;
// each loop runs an LSTM over its children (program order), each child
// concatenated with the loop's descriptor; a virtual root aggregates the root
// loops; an MLP head maps the root state to softplus(r) + 0.01.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopperf/autoencoder.hpp"
#include "loopperf/datagen.hpp"
#include "loopperf/featurize.hpp"
#include "loopperf/serialize.hpp"
#include "loopperf/tensornet.hpp"

namespace loopperf {

enum class Frontend { Baseline, EncoderPretrained, EncoderRandom };

std::string_view frontend_name(Frontend f);
Frontend frontend_from_name(std::string_view name);

struct ModelArch {
    Frontend frontend = Frontend::Baseline;
    EncoderArch encoder;  // CompEmbed for the baseline
    int lstm_hidden = 128;
    std::vector<int> head{64};

    void check() const;
    bool operator==(const ModelArch&) const = default;
};

ModelArch baseline_arch(int embedding_dim = 128);
ModelArch encoder_model_arch(const EncoderArch& encoder, bool pretrained);

Json model_arch_to_json(const ModelArch& a);
ModelArch model_arch_from_json(const Json& j);

inline constexpr double kPredictionFloor = 0.01;

class PerfModel {
public:
    PerfModel(const FeatureConfig& features, const ModelArch& arch, std::uint64_t seed);

    const FeatureConfig& features() const { return features_; }
    const ModelArch& arch() const { return arch_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    const Encoder& encoder() const { return encoder_; }

    // Copies encoder weights from an autoencoder checkpoint. FormatError
    // naming the mismatch on differing feature config or encoder arch.
    void load_pretrained_encoder(const std::filesystem::path& path);

    double predict(const ProgramTree& tree) const;
    Eigen::VectorXd predict_batch(std::span<const ProgramTree* const> trees) const;

    // Leaf embeddings of all trees, concatenated in tree order.
    Eigen::MatrixXd embed_leaves(std::span<const ProgramTree* const> trees) const;
    Eigen::VectorXd predict_from_embeddings(std::span<const ProgramTree* const> trees,
                                            const Eigen::Ref<const Eigen::MatrixXd>& embeddings) const;

    // Mean MAPE (fraction) of the batch; accumulates gradients when asked.
    // With `embeddings` given, the frontend is skipped (it must be frozen).
    double mape_batch(std::span<const ProgramTree* const> trees, std::span<const double> targets,
                      bool accumulate, const Eigen::MatrixXd* embeddings = nullptr);

    Json meta() const;
    void save(const std::filesystem::path& path) const;
    static PerfModel load(const std::filesystem::path& path);

private:
    struct Trace;
    Eigen::VectorXd run(std::span<const ProgramTree* const> trees,
                        const Eigen::Ref<const Eigen::MatrixXd>& embeddings, Trace* trace) const;
    Eigen::MatrixXd backprop(const Trace& trace, const Eigen::Ref<const Eigen::VectorXd>& dpred) const;
    Eigen::MatrixXd leaf_matrix(std::span<const ProgramTree* const> trees) const;

    FeatureConfig features_;
    ModelArch arch_;
    ParameterStore store_;
    Encoder encoder_;
    LstmCell lstm_;
    Mlp head_;
};

// Featurized labeled samples.
struct SampleSet {
    std::vector<ProgramTree> trees;
    std::vector<double> speedups;
    std::vector<std::string> program_ids;

    std::size_t size() const { return trees.size(); }
    SampleSet subset(std::span<const std::size_t> indices) const;
};

SampleSet featurize_samples(const std::vector<Program>& programs,
                            std::span<const LabeledSample> samples, const FeatureConfig& features);

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 5;
    double encoder_lr_scale = 0.2;
    std::uint64_t seed = 0;
    std::size_t max_valid = 0;  // 0 = whole validation set

    void check() const;
};

struct TrainLogRow {
    int epoch = 0;
    int phase = 1;
    double train_mape = 0;  // percent
    double valid_mape = 0;  // percent
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    int best_epoch = 0;
    double best_valid_mape = 0;
    int unfreeze_epoch = 0;  // epoch after which the encoder was unfrozen; 0 = never
};

// Called after every epoch with the model and that epoch's log row.
using EpochHook = std::function<void(const PerfModel&, const TrainLogRow&)>;

// EncoderPretrained: encoder frozen until the validation no-improvement streak
// reaches `patience`, then trainable at lr * encoder_lr_scale until a second
// expiry or max_epochs. Other frontends train everything in one phase with
// early stopping on `patience`. Leaves the model at its best-validation state.
TrainResult train(PerfModel& model, const SampleSet& train_set, const SampleSet& valid_set,
                  const TrainConfig& config, const EpochHook& hook = {});

std::string train_log_csv(const std::vector<TrainLogRow>& rows);

// MAPE in percent.
double evaluate(const PerfModel& model, const SampleSet& set);
double mape_percent(std::span<const double> predictions, std::span<const double> targets);

struct ExperimentConfig {
    std::vector<double> fractions{0.025, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<Frontend> variants{Frontend::Baseline, Frontend::EncoderPretrained,
                                   Frontend::EncoderRandom};
    TrainConfig train;
    // Per-run epoch cap: clamp(sample_budget / n_train, min_epochs, train.max_epochs).
    std::size_t sample_budget = 300000;
    int min_epochs = 8;
    std::filesystem::path pretrained;  // required for EncoderPretrained
    EncoderArch encoder;               // used when no checkpoint is given
};

struct ExperimentRow {
    Frontend variant = Frontend::Baseline;
    double fraction = 0;
    std::uint64_t seed = 0;
    double test_mape = 0;
};

struct ExperimentCell {
    Frontend variant = Frontend::Baseline;
    double fraction = 0;
    double mean = 0;
    double spread = 0;  // max - min over seeds
};

int experiment_epochs(const ExperimentConfig& config, std::size_t n_train);

// Trains one model on the nested subsample for (fraction, seed). Returns it
// so callers can reuse it (e.g. for search).
PerfModel train_on_fraction(Frontend variant, double fraction, std::uint64_t seed,
                            const SampleSet& train_set, const SampleSet& valid_set,
                            const FeatureConfig& features, const ExperimentConfig& config);

using ExperimentHook = std::function<void(const ExperimentRow&, const PerfModel&)>;

std::vector<ExperimentRow> data_efficiency_experiment(const SampleSet& train_set,
                                                      const SampleSet& valid_set,
                                                      const SampleSet& test_set,
                                                      const FeatureConfig& features,
                                                      const ExperimentConfig& config,
                                                      const ExperimentHook& hook = {});

std::vector<ExperimentCell> experiment_cells(const std::vector<ExperimentRow>& rows);
std::string experiment_csv(const std::vector<ExperimentRow>& rows);
std::string experiment_means_csv(const std::vector<ExperimentCell>& cells);

}  // namespace loopperf
