#pragma once

// Statement encoders (segment-wise, plain MLP, comp-embed stack), the MLP
// decoder, and reconstruction pre-training.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "loopperf/datagen.hpp"
#include "loopperf/featurize.hpp"
#include "loopperf/serialize.hpp"
#include "loopperf/tensornet.hpp"

namespace loopperf {

enum class EncoderVariant { Segmented, PlainMlp, CompEmbed };

std::string_view encoder_variant_name(EncoderVariant v);
EncoderVariant encoder_variant_from_name(std::string_view name);

struct EncoderArch {
    EncoderVariant variant = EncoderVariant::Segmented;
    int embedding_dim = 128;
    // Segmented: per-segment widths, then the trunk over their concatenation.
    int domain_width = 32;
    int access_width = 16;  // shared across access blocks
    int ops_width = 64;
    int sched_width = 32;
    int tags_width = 16;
    std::vector<int> trunk{512, 512};
    // CompEmbed hidden widths.
    std::vector<int> comp_embed{384, 256};

    void check() const;
    bool operator==(const EncoderArch&) const = default;
};

Json encoder_arch_to_json(const EncoderArch& a);
EncoderArch encoder_arch_from_json(const Json& j);

class Encoder {
public:
    Encoder() = default;
    // Parameters are created under `prefix`/...
    Encoder(ParameterStore& store, const std::string& prefix, const EncoderArch& arch,
            const FeatureConfig& features, Rng& rng);

    const EncoderArch& arch() const { return arch_; }
    int input_dim() const { return layout_.total; }
    int output_dim() const { return arch_.embedding_dim; }

    struct Trace {
        Mlp::Trace domain, access, ops, sched, tags, trunk;
    };

    // x: total_dim x B -> embedding_dim x B.
    Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Trace* trace = nullptr) const;
    // Parameter gradients only.
    void backward(const Trace& trace, const Eigen::Ref<const Eigen::MatrixXd>& dy) const;

private:
    EncoderArch arch_;
    SegmentLayout layout_;
    FeatureConfig features_;
    Mlp domain_, access_, ops_, sched_, tags_, trunk_;
};

struct AutoencoderArch {
    EncoderArch encoder;
    std::vector<int> decoder_hidden{512, 512};
    bool operator==(const AutoencoderArch&) const = default;
};

Json autoencoder_arch_to_json(const AutoencoderArch& a);
AutoencoderArch autoencoder_arch_from_json(const Json& j);

class Autoencoder {
public:
    Autoencoder(const FeatureConfig& features, const AutoencoderArch& arch, std::uint64_t seed);

    const FeatureConfig& features() const { return features_; }
    const AutoencoderArch& arch() const { return arch_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    const Encoder& encoder() const { return encoder_; }

    Eigen::MatrixXd encode(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::MatrixXd decode(const Eigen::Ref<const Eigen::MatrixXd>& z) const;
    Eigen::MatrixXd reconstruct(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

    // Mean squared reconstruction error; accumulates gradients when asked.
    double reconstruction_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, bool accumulate);

    Json meta() const;
    void save(const std::filesystem::path& path) const;
    static Autoencoder load(const std::filesystem::path& path);

private:
    FeatureConfig features_;
    AutoencoderArch arch_;
    ParameterStore store_;
    Encoder encoder_;
    Mlp decoder_;
};

struct PretrainConfig {
    int epochs = 10;
    int batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double valid_fraction = 0.05;  // of programs, by id hash
};

struct PretrainLogRow {
    int epoch = 0;
    double train_mse = 0;
    double valid_mse = 0;
};

struct PretrainResult {
    std::vector<PretrainLogRow> log;
    int best_epoch = 0;
    double best_valid_mse = 0;
    std::size_t n_train = 0, n_valid = 0;
};

// Deterministic program-level split; true means validation.
bool in_validation_split(std::string_view program_id, double fraction);

// Trains on reconstruction MSE and leaves the model at its best-validation
// parameters. Refuses a dataset whose feature config differs from the model's.
PretrainResult pretrain(Autoencoder& model, const VectorDataset& data, const PretrainConfig& config);

std::string pretrain_log_csv(const std::vector<PretrainLogRow>& rows);

// Mean squared error over columns, evaluated in chunks.
double mean_reconstruction_mse(const Autoencoder& model, const Eigen::Ref<const Eigen::MatrixXd>& x);

}  // namespace loopperf
