#include "loopperf/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

#include "loopperf/checkpoint.hpp"
#include "loopperf/csv.hpp"
#include "loopperf/errors.hpp"

namespace loopperf {

std::string_view frontend_name(Frontend f) {
    switch (f) {
        case Frontend::Baseline: return "baseline";
        case Frontend::EncoderPretrained: return "encoder_pretrained";
        case Frontend::EncoderRandom: return "encoder_random";
    }
    return "?";
}

Frontend frontend_from_name(std::string_view name) {
    for (auto f : {Frontend::Baseline, Frontend::EncoderPretrained, Frontend::EncoderRandom})
        if (frontend_name(f) == name) return f;
    throw FormatError("unknown frontend '" + std::string(name) + "'");
}

void ModelArch::check() const {
    encoder.check();
    if (frontend == Frontend::Baseline && encoder.variant != EncoderVariant::CompEmbed)
        throw ContractError("baseline frontend uses the comp_embed stack");
    if (lstm_hidden != encoder.embedding_dim)
        throw ContractError("lstm_hidden must equal embedding_dim (loop and statement embeddings share the LSTM input)");
    if (std::any_of(head.begin(), head.end(), [](int w) { return w <= 0; }))
        throw ContractError("head widths must be positive");
}

ModelArch baseline_arch(int embedding_dim) {
    ModelArch a;
    a.frontend = Frontend::Baseline;
    a.encoder.variant = EncoderVariant::CompEmbed;
    a.encoder.embedding_dim = embedding_dim;
    a.lstm_hidden = embedding_dim;
    return a;
}

ModelArch encoder_model_arch(const EncoderArch& encoder, bool pretrained) {
    ModelArch a;
    a.frontend = pretrained ? Frontend::EncoderPretrained : Frontend::EncoderRandom;
    a.encoder = encoder;
    a.lstm_hidden = encoder.embedding_dim;
    return a;
}

Json model_arch_to_json(const ModelArch& a) {
    return Json{{"frontend", frontend_name(a.frontend)},
                {"encoder", encoder_arch_to_json(a.encoder)},
                {"lstm_hidden", a.lstm_hidden},
                {"head", a.head}};
}

ModelArch model_arch_from_json(const Json& j) {
    ModelArch a;
    a.frontend = frontend_from_name(j.at("frontend").get<std::string>());
    a.encoder = encoder_arch_from_json(j.at("encoder"));
    a.lstm_hidden = j.at("lstm_hidden").get<int>();
    a.head = j.at("head").get<std::vector<int>>();
    a.check();
    return a;
}

// ---------------------------------------------------------------------------

struct PerfModel::Trace {
    struct Group {
        std::vector<std::pair<int, int>> nodes;  // (tree, node)
        LstmCell::Trace lstm;
        Eigen::MatrixXd out;
    };
    bool keep = false;
    std::span<const ProgramTree* const> trees;
    std::vector<Group> groups;
    std::vector<std::vector<std::pair<int, int>>> where;  // [tree][node] -> (group, column)
    std::vector<int> leaf_offset;
    Mlp::Trace head;
    Eigen::VectorXd raw;
    int leaves = 0;
};

PerfModel::PerfModel(const FeatureConfig& features, const ModelArch& arch, std::uint64_t seed)
    : features_(features), arch_(arch) {
    features.check();
    arch.check();
    Rng rng(derive_seed(seed, 0x9E5F));
    encoder_ = Encoder(store_, "encoder", arch.encoder, features, rng);
    lstm_ = LstmCell(store_, "lstm", arch.encoder.embedding_dim + 2, arch.lstm_hidden, rng);
    std::vector<int> widths{arch.lstm_hidden};
    widths.insert(widths.end(), arch.head.begin(), arch.head.end());
    widths.push_back(1);
    head_ = Mlp(store_, "head", widths, Activation::Tanh, Activation::Identity, rng);
}

void PerfModel::load_pretrained_encoder(const std::filesystem::path& path) {
    const Json meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "autoencoder")
        throw FormatError("'" + path.string() + "' is not a pretrain checkpoint");
    const FeatureConfig theirs = feature_config_from_json(meta.at("feature_config"));
    if (!(theirs == features_))
        throw FormatError("pretrain checkpoint feature config mismatch: total_dim " +
                          std::to_string(total_dim(theirs)) + " vs model " +
                          std::to_string(total_dim(features_)));
    const EncoderArch arch = encoder_arch_from_json(meta.at("arch").at("encoder"));
    if (!(arch == arch_.encoder))
        throw FormatError("pretrain checkpoint encoder arch mismatch: " +
                          encoder_arch_to_json(arch).dump() + " vs model " +
                          encoder_arch_to_json(arch_.encoder).dump());
    load_checkpoint(path, store_, "encoder/");
}

Eigen::MatrixXd PerfModel::leaf_matrix(std::span<const ProgramTree* const> trees) const {
    const int dim = encoder_.input_dim();
    Eigen::Index n = 0;
    for (const auto* t : trees) n += static_cast<Eigen::Index>(t->leaves.size());
    Eigen::MatrixXd x(dim, n);
    Eigen::Index col = 0;
    for (const auto* t : trees)
        for (const auto& leaf : t->leaves) {
            if (static_cast<int>(leaf.values.size()) != dim)
                throw ContractError("perfmodel: leaf vector length " +
                                    std::to_string(leaf.values.size()) + ", expected " +
                                    std::to_string(dim));
            x.col(col++) = Eigen::Map<const Eigen::VectorXd>(leaf.values.data(), dim);
        }
    return x;
}

Eigen::MatrixXd PerfModel::embed_leaves(std::span<const ProgramTree* const> trees) const {
    return encoder_.forward(leaf_matrix(trees));
}

Eigen::VectorXd PerfModel::run(std::span<const ProgramTree* const> trees,
                               const Eigen::Ref<const Eigen::MatrixXd>& emb, Trace* tr) const {
    const int B = static_cast<int>(trees.size());
    if (B == 0) throw ContractError("perfmodel: empty batch");
    const int E = arch_.encoder.embedding_dim;
    tr->trees = trees;
    tr->leaf_offset.assign(static_cast<std::size_t>(B), 0);
    int leaves = 0;
    for (int b = 0; b < B; ++b) {
        tr->leaf_offset[static_cast<std::size_t>(b)] = leaves;
        leaves += static_cast<int>(trees[static_cast<std::size_t>(b)]->leaves.size());
    }
    if (emb.rows() != E || emb.cols() != leaves)
        throw ContractError("perfmodel: embedding matrix shape mismatch");
    tr->leaves = leaves;

    // Height of each node: 1 + tallest loop child. Parents precede children.
    std::vector<std::vector<int>> height(static_cast<std::size_t>(B));
    int max_height = 0;
    for (int b = 0; b < B; ++b) {
        const auto& nodes = trees[static_cast<std::size_t>(b)]->nodes;
        if (nodes.empty() || nodes[0].children.empty())
            throw ContractError("perfmodel: tree without loops");
        auto& h = height[static_cast<std::size_t>(b)];
        h.assign(nodes.size(), 1);
        for (std::size_t n = nodes.size(); n-- > 0;)
            for (const auto& c : nodes[n].children)
                if (!c.is_leaf) h[n] = std::max(h[n], h[static_cast<std::size_t>(c.index)] + 1);
        max_height = std::max(max_height, h[0]);
    }

    tr->where.assign(static_cast<std::size_t>(B), {});
    for (int b = 0; b < B; ++b)
        tr->where[static_cast<std::size_t>(b)].assign(trees[static_cast<std::size_t>(b)]->nodes.size(), {-1, -1});
    tr->groups.clear();

    const double md = static_cast<double>(features_.max_depth);
    for (int level = 1; level <= max_height; ++level) {
        Trace::Group g;
        for (int b = 0; b < B; ++b) {
            const auto& h = height[static_cast<std::size_t>(b)];
            for (std::size_t n = 0; n < h.size(); ++n)
                if (h[n] == level) g.nodes.emplace_back(b, static_cast<int>(n));
        }
        if (g.nodes.empty()) continue;
        const auto N = static_cast<Eigen::Index>(g.nodes.size());
        std::vector<int> lengths;
        Eigen::Index T = 0;
        for (auto [b, n] : g.nodes) {
            const auto& node = trees[static_cast<std::size_t>(b)]->nodes[static_cast<std::size_t>(n)];
            lengths.push_back(static_cast<int>(node.children.size()));
            T = std::max<Eigen::Index>(T, lengths.back());
        }
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(E + 2, T * N);
        for (Eigen::Index col = 0; col < N; ++col) {
            const auto [b, n] = g.nodes[static_cast<std::size_t>(col)];
            const auto& node = trees[static_cast<std::size_t>(b)]->nodes[static_cast<std::size_t>(n)];
            const double d0 = node.level < 0 ? 0.0
                                             : std::log2(static_cast<double>(node.trip)) / features_.log_trip_scale;
            const double d1 = node.level / md;
            for (std::size_t t = 0; t < node.children.size(); ++t) {
                const auto& c = node.children[t];
                const Eigen::Index at = static_cast<Eigen::Index>(t) * N + col;
                if (c.is_leaf) {
                    x.col(at).head(E) = emb.col(tr->leaf_offset[static_cast<std::size_t>(b)] + c.index);
                } else {
                    const auto [gi, gc] = tr->where[static_cast<std::size_t>(b)][static_cast<std::size_t>(c.index)];
                    x.col(at).head(E) = tr->groups[static_cast<std::size_t>(gi)].out.col(gc);
                }
                x(E, at) = d0;
                x(E + 1, at) = d1;
            }
        }
        g.out = lstm_.forward_batch(x, lengths, tr->keep ? &g.lstm : nullptr);
        const int gi = static_cast<int>(tr->groups.size());
        for (Eigen::Index col = 0; col < N; ++col) {
            const auto [b, n] = g.nodes[static_cast<std::size_t>(col)];
            tr->where[static_cast<std::size_t>(b)][static_cast<std::size_t>(n)] = {gi, static_cast<int>(col)};
        }
        tr->groups.push_back(std::move(g));
    }

    Eigen::MatrixXd roots(arch_.lstm_hidden, B);
    for (int b = 0; b < B; ++b) {
        const auto [gi, gc] = tr->where[static_cast<std::size_t>(b)][0];
        roots.col(b) = tr->groups[static_cast<std::size_t>(gi)].out.col(gc);
    }
    tr->raw = head_.forward(roots, tr->keep ? &tr->head : nullptr).row(0).transpose();
    return tr->raw.unaryExpr([](double r) {
        const double sp = r > 0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
        return sp + kPredictionFloor;
    });
}

Eigen::MatrixXd PerfModel::backprop(const Trace& tr, const Eigen::Ref<const Eigen::VectorXd>& dpred) const {
    const Eigen::Index B = tr.raw.size();
    Eigen::MatrixXd draw(1, B);
    for (Eigen::Index b = 0; b < B; ++b) draw(0, b) = dpred(b) / (1.0 + std::exp(-tr.raw(b)));
    const Eigen::MatrixXd droots = head_.backward(tr.head, draw, true);

    std::vector<Eigen::MatrixXd> dout;
    for (const auto& g : tr.groups)
        dout.push_back(Eigen::MatrixXd::Zero(arch_.lstm_hidden, static_cast<Eigen::Index>(g.nodes.size())));
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto [gi, gc] = tr.where[static_cast<std::size_t>(b)][0];
        dout[static_cast<std::size_t>(gi)].col(gc) += droots.col(b);
    }

    const int E = arch_.encoder.embedding_dim;
    Eigen::MatrixXd demb = Eigen::MatrixXd::Zero(E, tr.leaves);
    for (std::size_t gi = tr.groups.size(); gi-- > 0;) {
        const auto& g = tr.groups[gi];
        const Eigen::MatrixXd dx = lstm_.backward_batch(g.lstm, dout[gi]);
        const auto N = static_cast<Eigen::Index>(g.nodes.size());
        for (Eigen::Index col = 0; col < N; ++col) {
            const auto [b, n] = g.nodes[static_cast<std::size_t>(col)];
            const auto& node = tr.trees[static_cast<std::size_t>(b)]->nodes[static_cast<std::size_t>(n)];
            for (std::size_t t = 0; t < node.children.size(); ++t) {
                const auto& c = node.children[t];
                const auto src = dx.col(static_cast<Eigen::Index>(t) * N + col).head(E);
                if (c.is_leaf) {
                    demb.col(tr.leaf_offset[static_cast<std::size_t>(b)] + c.index) += src;
                } else {
                    const auto [ci, cc] = tr.where[static_cast<std::size_t>(b)][static_cast<std::size_t>(c.index)];
                    dout[static_cast<std::size_t>(ci)].col(cc) += src;
                }
            }
        }
    }
    return demb;
}

namespace {

std::vector<const ProgramTree*> one(const ProgramTree& t) { return {&t}; }

bool any_trainable(ParameterStore& store, std::string_view prefix) {
    for (auto* p : store.with_prefix(prefix))
        if (!p->frozen) return true;
    return false;
}

}  // namespace

double PerfModel::predict(const ProgramTree& tree) const { return predict_batch(one(tree))(0); }

Eigen::VectorXd PerfModel::predict_batch(std::span<const ProgramTree* const> trees) const {
    return predict_from_embeddings(trees, embed_leaves(trees));
}

Eigen::VectorXd PerfModel::predict_from_embeddings(std::span<const ProgramTree* const> trees,
                                                   const Eigen::Ref<const Eigen::MatrixXd>& embeddings) const {
    Trace tr;
    return run(trees, embeddings, &tr);
}

double PerfModel::mape_batch(std::span<const ProgramTree* const> trees, std::span<const double> targets,
                             bool accumulate, const Eigen::MatrixXd* embeddings) {
    if (targets.size() != trees.size()) throw ContractError("perfmodel: target count mismatch");
    const Eigen::Map<const Eigen::VectorXd> target(targets.data(), static_cast<Eigen::Index>(targets.size()));
    const bool train_frontend = accumulate && any_trainable(store_, "encoder/");
    if (embeddings != nullptr && train_frontend)
        throw ContractError("perfmodel: cached embeddings require a frozen encoder");

    Encoder::Trace et;
    Eigen::MatrixXd computed;
    if (embeddings == nullptr) computed = encoder_.forward(leaf_matrix(trees), train_frontend ? &et : nullptr);
    const Eigen::MatrixXd& emb = embeddings != nullptr ? *embeddings : computed;

    Trace tr;
    tr.keep = accumulate;
    const Eigen::VectorXd pred = run(trees, emb, &tr);
    const LossResult loss = mape_loss(pred, target);
    if (accumulate) {
        const Eigen::MatrixXd demb = backprop(tr, loss.grad.col(0));
        if (train_frontend) encoder_.backward(et, demb);
    }
    return loss.value;
}

Json PerfModel::meta() const {
    return Json{{"kind", "perfmodel"},
                {"arch", model_arch_to_json(arch_)},
                {"feature_config", feature_config_to_json(features_)},
                {"total_dim", total_dim(features_)}};
}

void PerfModel::save(const std::filesystem::path& path) const { save_checkpoint(path, store_, meta()); }

PerfModel PerfModel::load(const std::filesystem::path& path) {
    const Json meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "perfmodel")
        throw FormatError("'" + path.string() + "' is not a model checkpoint");
    const FeatureConfig features = feature_config_from_json(meta.at("feature_config"));
    if (meta.at("total_dim").get<int>() != total_dim(features))
        throw FormatError("checkpoint total_dim disagrees with its feature config");
    PerfModel model(features, model_arch_from_json(meta.at("arch")), 0);
    load_checkpoint(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------

SampleSet SampleSet::subset(std::span<const std::size_t> indices) const {
    SampleSet out;
    for (auto i : indices) {
        out.trees.push_back(trees.at(i));
        out.speedups.push_back(speedups.at(i));
        out.program_ids.push_back(program_ids.at(i));
    }
    return out;
}

SampleSet featurize_samples(const std::vector<Program>& programs, std::span<const LabeledSample> samples,
                            const FeatureConfig& features) {
    SampleSet out;
    out.trees.reserve(samples.size());
    for (const auto& s : samples) {
        const Program& p = programs.at(static_cast<std::size_t>(s.program));
        out.trees.push_back(featurize_program(p, s.sequence, features));
        out.speedups.push_back(s.speedup);
        out.program_ids.push_back(p.id);
    }
    return out;
}

void TrainConfig::check() const {
    if (!(lr > 0) || batch_size < 1 || max_epochs < 1)
        throw ContractError("train config: lr, batch_size and max_epochs must be positive");
    if (patience < 1) throw ContractError("train config: patience must be at least 1");
    if (!(encoder_lr_scale > 0 && encoder_lr_scale <= 1))
        throw ContractError("train config: encoder_lr_scale must be in (0, 1]");
}

double mape_percent(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) throw ContractError("mape: size mismatch or empty");
    double sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(target[i] > 0)) throw ContractError("mape: non-positive target");
        sum += std::abs(target[i] - pred[i]) / target[i];
    }
    return 100.0 * sum / static_cast<double>(pred.size());
}

namespace {

constexpr std::size_t kEvalChunk = 512;

std::vector<const ProgramTree*> pointers(const SampleSet& set, std::span<const std::size_t> idx) {
    std::vector<const ProgramTree*> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(&set.trees[i]);
    return out;
}

// Leaf embedding columns of each sample in a cached matrix.
struct EmbeddingCache {
    Eigen::MatrixXd emb;
    std::vector<Eigen::Index> offset;  // per sample, plus end

    Eigen::MatrixXd gather(std::span<const std::size_t> idx) const {
        Eigen::Index n = 0;
        for (auto i : idx) n += offset[i + 1] - offset[i];
        Eigen::MatrixXd out(emb.rows(), n);
        Eigen::Index at = 0;
        for (auto i : idx) {
            const Eigen::Index k = offset[i + 1] - offset[i];
            out.middleCols(at, k) = emb.middleCols(offset[i], k);
            at += k;
        }
        return out;
    }
};

EmbeddingCache build_cache(const PerfModel& model, const SampleSet& set, std::span<const std::size_t> idx) {
    EmbeddingCache c;
    c.offset.push_back(0);
    for (auto i : idx) c.offset.push_back(c.offset.back() + static_cast<Eigen::Index>(set.trees[i].leaves.size()));
    c.emb.resize(model.arch().encoder.embedding_dim, c.offset.back());
    for (std::size_t at = 0; at < idx.size(); at += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, idx.size() - at);
        const auto ptrs = pointers(set, idx.subspan(at, n));
        c.emb.middleCols(c.offset[at], c.offset[at + n] - c.offset[at]) = model.embed_leaves(ptrs);
    }
    return c;
}

// Cache is indexed by position within `idx` when given.
double evaluate_indices(const PerfModel& model, const SampleSet& set, std::span<const std::size_t> idx,
                        const EmbeddingCache* cache) {
    std::vector<double> pred, target;
    std::vector<std::size_t> local(idx.size());
    std::iota(local.begin(), local.end(), std::size_t{0});
    for (std::size_t at = 0; at < idx.size(); at += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, idx.size() - at);
        const auto ptrs = pointers(set, idx.subspan(at, n));
        const Eigen::VectorXd p = cache != nullptr
                                      ? model.predict_from_embeddings(ptrs, cache->gather(std::span(local).subspan(at, n)))
                                      : model.predict_batch(ptrs);
        for (std::size_t k = 0; k < n; ++k) {
            pred.push_back(p(static_cast<Eigen::Index>(k)));
            target.push_back(set.speedups[idx[at + k]]);
        }
    }
    return mape_percent(pred, target);
}

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

double evaluate(const PerfModel& model, const SampleSet& set) {
    const auto idx = iota_n(set.size());
    return evaluate_indices(model, set, idx, nullptr);
}

TrainResult train(PerfModel& model, const SampleSet& train_set, const SampleSet& valid_set,
                  const TrainConfig& cfg, const EpochHook& hook) {
    cfg.check();
    if (train_set.size() == 0 || valid_set.size() == 0) throw ContractError("train: empty train or valid set");
    for (const auto& t : train_set.trees)
        for (const auto& leaf : t.leaves)
            if (static_cast<int>(leaf.values.size()) != total_dim(model.features()))
                throw ContractError("train: sample vector length does not match model total_dim");

    auto& store = model.store();
    const bool two_phase = model.arch().frontend == Frontend::EncoderPretrained;
    store.set_frozen("encoder/", two_phase);
    store.set_lr_scale("encoder/", 1.0);
    int phase = 1;

    std::vector<std::size_t> valid_idx = iota_n(valid_set.size());
    if (cfg.max_valid > 0 && valid_idx.size() > cfg.max_valid) {
        Rng vr(0x76616C6964ULL);
        std::shuffle(valid_idx.begin(), valid_idx.end(), vr);
        valid_idx.resize(cfg.max_valid);
        std::sort(valid_idx.begin(), valid_idx.end());
    }
    const auto train_all = iota_n(train_set.size());

    std::optional<EmbeddingCache> train_cache, valid_cache;
    if (two_phase) {
        train_cache = build_cache(model, train_set, train_all);
        valid_cache = build_cache(model, valid_set, valid_idx);
    }

    TrainResult res;
    res.best_valid_mape = std::numeric_limits<double>::infinity();
    auto best = store.snapshot();
    int streak = 0;
    const AdamConfig adam{cfg.lr};
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> order = train_all;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 0x7472, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0;
        for (std::size_t at = 0; at < order.size(); at += bs) {
            const std::size_t n = std::min(bs, order.size() - at);
            const auto batch = std::span(order).subspan(at, n);
            const auto ptrs = pointers(train_set, batch);
            std::vector<double> targets;
            for (auto i : batch) targets.push_back(train_set.speedups[i]);
            store.zero_grad();
            if (train_cache) {
                const Eigen::MatrixXd emb = train_cache->gather(batch);
                sum += model.mape_batch(ptrs, targets, true, &emb) * static_cast<double>(n);
            } else {
                sum += model.mape_batch(ptrs, targets, true) * static_cast<double>(n);
            }
            adam_step(store, adam);
        }
        TrainLogRow row{epoch, phase, 100.0 * sum / static_cast<double>(order.size()),
                        evaluate_indices(model, valid_set, valid_idx, valid_cache ? &*valid_cache : nullptr)};
        res.log.push_back(row);
        if (hook) hook(model, row);

        if (row.valid_mape < res.best_valid_mape) {
            res.best_valid_mape = row.valid_mape;
            res.best_epoch = epoch;
            best = store.snapshot();
            streak = 0;
        } else if (++streak >= cfg.patience) {
            if (!two_phase || phase == 2) break;
            store.set_frozen("encoder/", false);
            store.set_lr_scale("encoder/", cfg.encoder_lr_scale);
            phase = 2;
            streak = 0;
            res.unfreeze_epoch = epoch;
            train_cache.reset();
            valid_cache.reset();
        }
    }
    store.restore(best);
    return res;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
    std::string out = "epoch,phase,train_mape,valid_mape\n";
    for (const auto& r : rows)
        out += std::to_string(r.epoch) + "," + std::to_string(r.phase) + "," + fmt_double(r.train_mape) + "," +
               fmt_double(r.valid_mape) + "\n";
    return out;
}

// ---------------------------------------------------------------------------

int experiment_epochs(const ExperimentConfig& cfg, std::size_t n_train) {
    if (n_train == 0) throw ContractError("experiment: empty training subsample");
    const std::size_t by_budget = (cfg.sample_budget + n_train - 1) / n_train;
    const auto cap = static_cast<std::size_t>(cfg.train.max_epochs);
    return static_cast<int>(std::clamp<std::size_t>(by_budget, static_cast<std::size_t>(cfg.min_epochs), cap));
}

PerfModel train_on_fraction(Frontend variant, double fraction, std::uint64_t seed, const SampleSet& train_set,
                            const SampleSet& valid_set, const FeatureConfig& features,
                            const ExperimentConfig& cfg) {
    const auto idx = subsample_fraction(train_set.size(), fraction, seed);
    if (idx.empty()) throw ContractError("experiment: fraction leaves no training samples");
    const SampleSet sub = train_set.subset(idx);

    // All variants share the checkpoint's embedding width, so the tree LSTM is the same size.
    EncoderArch enc = cfg.encoder;
    if (!cfg.pretrained.empty())
        enc = encoder_arch_from_json(read_checkpoint_meta(cfg.pretrained).at("arch").at("encoder"));
    if (variant == Frontend::EncoderPretrained && cfg.pretrained.empty())
        throw ContractError("experiment: encoder_pretrained needs a pretrain checkpoint");
    const ModelArch arch = variant == Frontend::Baseline
                               ? baseline_arch(enc.embedding_dim)
                               : encoder_model_arch(enc, variant == Frontend::EncoderPretrained);
    const auto vi = static_cast<std::uint64_t>(variant);
    PerfModel model(features, arch, derive_seed(seed, 0x6D6F64, vi));
    if (variant == Frontend::EncoderPretrained) model.load_pretrained_encoder(cfg.pretrained);

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, 0x72756E, vi);
    tc.max_epochs = experiment_epochs(cfg, sub.size());
    train(model, sub, valid_set, tc);
    return model;
}

std::vector<ExperimentRow> data_efficiency_experiment(const SampleSet& train_set, const SampleSet& valid_set,
                                                      const SampleSet& test_set, const FeatureConfig& features,
                                                      const ExperimentConfig& cfg, const ExperimentHook& hook) {
    if (cfg.fractions.empty() || cfg.seeds.empty() || cfg.variants.empty())
        throw ContractError("experiment: fractions, seeds and variants must be non-empty");
    for (double f : cfg.fractions)
        if (!(f > 0 && f <= 1)) throw ContractError("experiment: fractions must be in (0, 1]");
    std::vector<ExperimentRow> rows;
    for (auto variant : cfg.variants)
        for (double f : cfg.fractions)
            for (auto seed : cfg.seeds) {
                const PerfModel model = train_on_fraction(variant, f, seed, train_set, valid_set, features, cfg);
                rows.push_back({variant, f, seed, evaluate(model, test_set)});
                if (hook) hook(rows.back(), model);
            }
    return rows;
}

std::vector<ExperimentCell> experiment_cells(const std::vector<ExperimentRow>& rows) {
    std::map<std::pair<int, double>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{static_cast<int>(r.variant), r.fraction}].push_back(r.test_mape);
    std::vector<ExperimentCell> out;
    for (const auto& [key, v] : groups) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        out.push_back({static_cast<Frontend>(key.first), key.second,
                       std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()), *hi - *lo});
    }
    return out;
}

std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
    std::string out = "variant,fraction,seed,test_mape\n";
    for (const auto& r : rows)
        out += std::string(frontend_name(r.variant)) + "," + fmt_double(r.fraction) + "," + std::to_string(r.seed) +
               "," + fmt_double(r.test_mape) + "\n";
    return out;
}

std::string experiment_means_csv(const std::vector<ExperimentCell>& cells) {
    std::string out = "variant,fraction,mean_test_mape,seed_spread\n";
    for (const auto& c : cells)
        out += std::string(frontend_name(c.variant)) + "," + fmt_double(c.fraction) + "," + fmt_double(c.mean) +
               "," + fmt_double(c.spread) + "\n";
    return out;
}

}  // namespace loopperf
