#include "loopperf/autoencoder.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "loopperf/checkpoint.hpp"
#include "loopperf/csv.hpp"
#include "loopperf/errors.hpp"

namespace loopperf {

std::string_view encoder_variant_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::Segmented: return "segmented";
        case EncoderVariant::PlainMlp: return "plain_mlp";
        case EncoderVariant::CompEmbed: return "comp_embed";
    }
    return "?";
}

EncoderVariant encoder_variant_from_name(std::string_view name) {
    for (auto v : {EncoderVariant::Segmented, EncoderVariant::PlainMlp, EncoderVariant::CompEmbed})
        if (encoder_variant_name(v) == name) return v;
    throw FormatError("unknown encoder variant '" + std::string(name) + "'");
}

void EncoderArch::check() const {
    auto positive = [](int v) { return v > 0; };
    if (embedding_dim <= 0 || domain_width <= 0 || access_width <= 0 || ops_width <= 0 ||
        sched_width <= 0 || tags_width <= 0 || !std::all_of(trunk.begin(), trunk.end(), positive) ||
        !std::all_of(comp_embed.begin(), comp_embed.end(), positive))
        throw ContractError("encoder widths must be positive");
}

Json encoder_arch_to_json(const EncoderArch& a) {
    return Json{{"variant", encoder_variant_name(a.variant)},
                {"embedding_dim", a.embedding_dim},
                {"domain_width", a.domain_width},
                {"access_width", a.access_width},
                {"ops_width", a.ops_width},
                {"sched_width", a.sched_width},
                {"tags_width", a.tags_width},
                {"trunk", a.trunk},
                {"comp_embed", a.comp_embed}};
}

EncoderArch encoder_arch_from_json(const Json& j) {
    EncoderArch a;
    a.variant = encoder_variant_from_name(j.at("variant").get<std::string>());
    a.embedding_dim = j.at("embedding_dim").get<int>();
    a.domain_width = j.at("domain_width").get<int>();
    a.access_width = j.at("access_width").get<int>();
    a.ops_width = j.at("ops_width").get<int>();
    a.sched_width = j.at("sched_width").get<int>();
    a.tags_width = j.at("tags_width").get<int>();
    a.trunk = j.at("trunk").get<std::vector<int>>();
    a.comp_embed = j.at("comp_embed").get<std::vector<int>>();
    a.check();
    return a;
}

// ---------------------------------------------------------------------------

Encoder::Encoder(ParameterStore& store, const std::string& prefix, const EncoderArch& arch,
                 const FeatureConfig& features, Rng& rng)
    : arch_(arch), layout_(segment_layout(features)), features_(features) {
    arch.check();
    const auto tanh = Activation::Tanh;
    auto widths = [&](int in, const std::vector<int>& hidden) {
        std::vector<int> w{in};
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(arch.embedding_dim);
        return w;
    };
    switch (arch.variant) {
        case EncoderVariant::Segmented: {
            domain_ = Mlp(store, prefix + "/domain", {layout_.domain.size, arch.domain_width}, tanh, tanh, rng);
            access_ = Mlp(store, prefix + "/access", {layout_.access_block, arch.access_width}, tanh, tanh, rng);
            ops_ = Mlp(store, prefix + "/ops", {layout_.ops.size, arch.ops_width}, tanh, tanh, rng);
            sched_ = Mlp(store, prefix + "/sched", {layout_.sched.size, arch.sched_width}, tanh, tanh, rng);
            tags_ = Mlp(store, prefix + "/tags", {layout_.tags.size, arch.tags_width}, tanh, tanh, rng);
            const int concat = arch.domain_width + features.max_accesses * arch.access_width + 1 +
                               arch.ops_width + arch.sched_width + arch.tags_width;
            trunk_ = Mlp(store, prefix + "/trunk", widths(concat, arch.trunk), tanh, tanh, rng);
            break;
        }
        case EncoderVariant::PlainMlp:
            trunk_ = Mlp(store, prefix + "/trunk", widths(layout_.total, arch.trunk), tanh, tanh, rng);
            break;
        case EncoderVariant::CompEmbed:
            trunk_ = Mlp(store, prefix + "/trunk", widths(layout_.total, arch.comp_embed), tanh, tanh, rng);
            break;
    }
}

Eigen::MatrixXd Encoder::forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Trace* trace) const {
    if (x.rows() != layout_.total)
        throw ContractError("encoder: input length " + std::to_string(x.rows()) + ", expected " +
                            std::to_string(layout_.total));
    if (arch_.variant != EncoderVariant::Segmented)
        return trunk_.forward(x, trace ? &trace->trunk : nullptr);

    const Eigen::Index B = x.cols();
    const int blocks = features_.max_accesses, bw = layout_.access_block;
    Eigen::MatrixXd cat(trunk_.in(), B);
    int row = 0;
    auto part = [&](const Mlp& m, const Segment& seg, Mlp::Trace* t) {
        cat.middleRows(row, m.out()) = m.forward(x.middleRows(seg.offset, seg.size), t);
        row += m.out();
    };
    part(domain_, layout_.domain, trace ? &trace->domain : nullptr);

    Eigen::MatrixXd acc(bw, blocks * B);
    for (int k = 0; k < blocks; ++k)
        acc.middleCols(k * B, B) = x.middleRows(layout_.access.offset + k * bw, bw);
    const Eigen::MatrixXd acc_out = access_.forward(acc, trace ? &trace->access : nullptr);
    for (int k = 0; k < blocks; ++k)
        cat.middleRows(row + k * access_.out(), access_.out()) = acc_out.middleCols(k * B, B);
    row += blocks * access_.out();
    cat.row(row++) = x.row(layout_.access.offset + blocks * bw);

    part(ops_, layout_.ops, trace ? &trace->ops : nullptr);
    part(sched_, layout_.sched, trace ? &trace->sched : nullptr);
    part(tags_, layout_.tags, trace ? &trace->tags : nullptr);
    return trunk_.forward(cat, trace ? &trace->trunk : nullptr);
}

void Encoder::backward(const Trace& tr, const Eigen::Ref<const Eigen::MatrixXd>& dy) const {
    if (arch_.variant != EncoderVariant::Segmented) {
        trunk_.backward(tr.trunk, dy, false);
        return;
    }
    const Eigen::MatrixXd dcat = trunk_.backward(tr.trunk, dy, true);
    const Eigen::Index B = dy.cols();
    const int blocks = features_.max_accesses;
    int row = 0;
    domain_.backward(tr.domain, dcat.middleRows(row, domain_.out()), false);
    row += domain_.out();
    Eigen::MatrixXd dacc(access_.out(), blocks * B);
    for (int k = 0; k < blocks; ++k)
        dacc.middleCols(k * B, B) = dcat.middleRows(row + k * access_.out(), access_.out());
    access_.backward(tr.access, dacc, false);
    row += blocks * access_.out() + 1;
    ops_.backward(tr.ops, dcat.middleRows(row, ops_.out()), false);
    row += ops_.out();
    sched_.backward(tr.sched, dcat.middleRows(row, sched_.out()), false);
    row += sched_.out();
    tags_.backward(tr.tags, dcat.middleRows(row, tags_.out()), false);
}

// ---------------------------------------------------------------------------

Json autoencoder_arch_to_json(const AutoencoderArch& a) {
    return Json{{"encoder", encoder_arch_to_json(a.encoder)}, {"decoder_hidden", a.decoder_hidden}};
}

AutoencoderArch autoencoder_arch_from_json(const Json& j) {
    AutoencoderArch a;
    a.encoder = encoder_arch_from_json(j.at("encoder"));
    a.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    return a;
}

Autoencoder::Autoencoder(const FeatureConfig& features, const AutoencoderArch& arch,
                         std::uint64_t seed)
    : features_(features), arch_(arch) {
    features.check();
    const int dim = total_dim(features);
    if (arch.encoder.embedding_dim >= dim)
        throw ContractError("embedding_dim " + std::to_string(arch.encoder.embedding_dim) +
                            " must be below total_dim " + std::to_string(dim));
    Rng rng(derive_seed(seed, 0xAE));
    encoder_ = Encoder(store_, "encoder", arch.encoder, features, rng);
    std::vector<int> widths{arch.encoder.embedding_dim};
    widths.insert(widths.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
    widths.push_back(dim);
    decoder_ = Mlp(store_, "decoder", widths, Activation::Tanh, Activation::Identity, rng);
}

Eigen::MatrixXd Autoencoder::encode(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    return encoder_.forward(x);
}

Eigen::MatrixXd Autoencoder::decode(const Eigen::Ref<const Eigen::MatrixXd>& z) const {
    return decoder_.forward(z);
}

Eigen::MatrixXd Autoencoder::reconstruct(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    return decoder_.forward(encoder_.forward(x));
}

double Autoencoder::reconstruction_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, bool accumulate) {
    if (!accumulate) return mse_loss(reconstruct(x), x).value;
    Encoder::Trace et;
    Mlp::Trace dt;
    const Eigen::MatrixXd y = decoder_.forward(encoder_.forward(x, &et), &dt);
    const LossResult loss = mse_loss(y, x);
    encoder_.backward(et, decoder_.backward(dt, loss.grad, true));
    return loss.value;
}

Json Autoencoder::meta() const {
    return Json{{"kind", "autoencoder"},
                {"arch", autoencoder_arch_to_json(arch_)},
                {"feature_config", feature_config_to_json(features_)},
                {"total_dim", total_dim(features_)}};
}

void Autoencoder::save(const std::filesystem::path& path) const { save_checkpoint(path, store_, meta()); }

Autoencoder Autoencoder::load(const std::filesystem::path& path) {
    const Json meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "autoencoder")
        throw FormatError("'" + path.string() + "' is not an autoencoder checkpoint");
    const FeatureConfig features = feature_config_from_json(meta.at("feature_config"));
    if (meta.at("total_dim").get<int>() != total_dim(features))
        throw FormatError("checkpoint total_dim disagrees with its feature config");
    Autoencoder model(features, autoencoder_arch_from_json(meta.at("arch")), 0);
    load_checkpoint(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------

bool in_validation_split(std::string_view program_id, double fraction) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : program_id) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return static_cast<double>(splitmix64(h) % 1000000) < fraction * 1e6;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& src, std::span<const std::size_t> cols) {
    Eigen::MatrixXd out(src.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
        out.col(static_cast<Eigen::Index>(k)) = src.col(static_cast<Eigen::Index>(cols[k]));
    return out;
}

double chunked_mse(const Autoencoder& model, const Eigen::MatrixXd& src,
                   const std::vector<std::size_t>& cols) {
    constexpr std::size_t kChunk = 1024;
    double sum = 0;
    for (std::size_t at = 0; at < cols.size(); at += kChunk) {
        const std::size_t n = std::min(kChunk, cols.size() - at);
        const Eigen::MatrixXd x = gather(src, std::span(cols).subspan(at, n));
        sum += (model.reconstruct(x) - x).squaredNorm();
    }
    return sum / (static_cast<double>(cols.size()) * static_cast<double>(src.rows()));
}

}  // namespace

double mean_reconstruction_mse(const Autoencoder& model, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    if (x.cols() == 0) throw ContractError("empty input");
    const Eigen::MatrixXd copy = x;
    std::vector<std::size_t> cols(static_cast<std::size_t>(x.cols()));
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return chunked_mse(model, copy, cols);
}

PretrainResult pretrain(Autoencoder& model, const VectorDataset& data, const PretrainConfig& cfg) {
    if (data.vectors.rows() != total_dim(model.features()) || !(data.config == model.features()))
        throw ContractError("pretrain: dataset total_dim " + std::to_string(data.vectors.rows()) +
                            " does not match model total_dim " +
                            std::to_string(total_dim(model.features())));
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0))
        throw ContractError("pretrain: epochs, batch_size and lr must be positive");

    std::vector<std::size_t> train, valid;
    for (std::size_t j = 0; j < data.size(); ++j)
        (in_validation_split(data.program_ids[j], cfg.valid_fraction) ? valid : train).push_back(j);
    if (train.empty() || valid.empty()) throw ContractError("pretrain: empty train or valid split");

    PretrainResult res;
    res.n_train = train.size();
    res.n_valid = valid.size();
    res.best_valid_mse = std::numeric_limits<double>::infinity();
    auto best = model.store().snapshot();
    const AdamConfig adam{cfg.lr};
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 0x5072, static_cast<std::uint64_t>(epoch)));
        std::shuffle(train.begin(), train.end(), rng);
        double sum = 0;
        for (std::size_t at = 0; at < train.size(); at += bs) {
            const std::size_t n = std::min(bs, train.size() - at);
            const Eigen::MatrixXd x = gather(data.vectors, std::span(train).subspan(at, n));
            model.store().zero_grad();
            sum += model.reconstruction_loss(x, true) * static_cast<double>(n);
            adam_step(model.store(), adam);
        }
        PretrainLogRow row{epoch, sum / static_cast<double>(train.size()),
                           chunked_mse(model, data.vectors, valid)};
        res.log.push_back(row);
        if (row.valid_mse < res.best_valid_mse) {
            res.best_valid_mse = row.valid_mse;
            res.best_epoch = epoch;
            best = model.store().snapshot();
        }
    }
    model.store().restore(best);
    return res;
}

std::string pretrain_log_csv(const std::vector<PretrainLogRow>& rows) {
    std::string out = "epoch,train_mse,valid_mse\n";
    for (const auto& r : rows)
        out += std::to_string(r.epoch) + "," + fmt_double(r.train_mse) + "," + fmt_double(r.valid_mse) + "\n";
    return out;
}

}  // namespace loopperf
