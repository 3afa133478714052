#include <gtest/gtest.h>

#include <filesystem>

#include "helpers.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/perfmodel.hpp"

using namespace loopperf;
using lpt::acc;
using lpt::loop;
using lpt::node;

namespace {

EncoderArch small_encoder(EncoderVariant v = EncoderVariant::Segmented) {
    EncoderArch e;
    e.variant = v;
    e.embedding_dim = 12;
    e.trunk = {24, 16};
    e.comp_embed = {20, 16};
    e.domain_width = 6;
    e.access_width = 4;
    e.ops_width = 6;
    e.sched_width = 6;
    e.tags_width = 4;
    return e;
}

ModelArch small_arch(Frontend f) {
    ModelArch a = f == Frontend::Baseline ? baseline_arch(12)
                                          : encoder_model_arch(small_encoder(), f == Frontend::EncoderPretrained);
    if (f == Frontend::Baseline) a.encoder.comp_embed = {20, 16};
    a.head = {8};
    return a;
}

// for i0 { for i1 { S0 } ; S1 }
Program two_statement_program() {
    const std::vector<std::string> it2{"i0", "i1"}, it1{"i0"};
    Statement s0 = lpt::stmt("S0", acc("B", {"i0", "i1"}, it2), {acc("A", {"i1", "i0"}, it2)});
    Statement s1 = lpt::stmt("S1", acc("C", {"i0"}, it1), {acc("B", {"i0", "3"}, it1), acc("C", {"i0"}, it1)});
    return lpt::finish({"two", {}, {loop("i0", 0, 32, {node(loop("i1", 0, 16, {node(std::move(s0))})), node(std::move(s1))})}});
}

struct Data {
    std::vector<Program> programs;
    SampleSet train, valid, test;
};

const Data& small_data() {
    static const Data d = [] {
        GenConfig g;
        g.seed = 88;
        g.n_programs = 70;
        const auto ds = build_labeled_dataset(g, MachineConfig{});
        const FeatureConfig f;
        return Data{ds.programs, featurize_samples(ds.programs, ds.train, f),
                    featurize_samples(ds.programs, ds.valid, f), featurize_samples(ds.programs, ds.test, f)};
    }();
    return d;
}

std::vector<const ProgramTree*> ptrs(const SampleSet& s) {
    std::vector<const ProgramTree*> out;
    for (const auto& t : s.trees) out.push_back(&t);
    return out;
}

AlignedVector concat_prefix(const ParameterStore& s, std::string_view prefix) {
    AlignedVector out;
    for (const auto* p : s.all())
        if (p->name.starts_with(prefix)) out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    return out;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("loopperf_pm_" + name);
}

}  // namespace

TEST(PerfModel, ArchContracts) {
    EXPECT_NO_THROW(baseline_arch().check());
    ModelArch bad = baseline_arch();
    bad.encoder.variant = EncoderVariant::Segmented;
    EXPECT_THROW(bad.check(), ContractError);
    ModelArch width = encoder_model_arch(EncoderArch{}, true);
    width.lstm_hidden = 64;
    EXPECT_THROW(width.check(), ContractError);
    const ModelArch a = encoder_model_arch(EncoderArch{}, false);
    EXPECT_TRUE(model_arch_from_json(model_arch_to_json(a)) == a);
}

TEST(PerfModel, PredictionsPositiveAndFinite) {
    const FeatureConfig f;
    const auto& d = small_data();
    for (Frontend fr : {Frontend::Baseline, Frontend::EncoderPretrained, Frontend::EncoderRandom}) {
        PerfModel m(f, small_arch(fr), 1);
        const auto p = m.predict_batch(ptrs(d.test));
        EXPECT_TRUE(p.allFinite());
        EXPECT_GT(p.minCoeff(), kPredictionFloor - 1e-15);
        EXPECT_DOUBLE_EQ(p(0), m.predict(d.test.trees[0]));
    }
}

TEST(PerfModel, SiblingOrderMatters) {
    const FeatureConfig f;
    const Program p = two_statement_program();
    ProgramTree tree = featurize_program(p, {}, f);
    PerfModel m(f, small_arch(Frontend::EncoderRandom), 2);
    const double before = m.predict(tree);
    auto& root_loop = tree.nodes[1];
    ASSERT_EQ(root_loop.children.size(), 2u);
    std::swap(root_loop.children[0], root_loop.children[1]);
    EXPECT_NE(m.predict(tree), before);
}

TEST(PerfModel, DeepTreeEvaluates) {
    const FeatureConfig f;
    const std::vector<std::string> it{"i0", "i1", "i2", "i3"};
    const std::vector<std::string> it3{"i0", "i1", "i2"};
    Program p = lpt::finish(
        {"deep",
         {},
         {loop("i0", 0, 8,
               {node(loop("i1", 0, 8,
                          {node(loop("i2", 0, 8,
                                     {node(loop("i3", 0, 8, {node(lpt::stmt("S0", acc("A", it, it), {acc("B", it, it)}))})),
                                      node(lpt::stmt("S1", acc("C", it3, it3), {acc("A", {"i0", "i1", "i2", "0"}, it3)}))}))}))}),
          loop("j0", 0, 16, {node(lpt::stmt("S2", acc("D", {"j0"}, {"j0"}), {acc("D", {"j0"}, {"j0"})}))})}});
    ASSERT_TRUE(validate(p).empty());
    PerfModel m(f, small_arch(Frontend::Baseline), 3);
    EXPECT_TRUE(std::isfinite(m.predict(featurize_program(p, {}, f))));
}

TEST(PerfModel, FullModelGradient) {
    const FeatureConfig f;
    const Program p = two_statement_program();
    const std::vector<ProgramTree> trees{featurize_program(p, {}, f),
                                         featurize_program(p, TransformationSequence{Interchange{0, 1}}, f)};
    const std::vector<const ProgramTree*> tp{&trees[0], &trees[1]};
    const std::vector<double> targets{5.0, 0.1};  // both terms away from the kink
    for (Frontend fr : {Frontend::Baseline, Frontend::EncoderRandom}) {
        for (std::uint64_t seed : {4u, 5u}) {
            PerfModel m(f, small_arch(fr), seed);
            auto loss = [&](bool backward) {
                if (backward) m.store().zero_grad();
                return m.mape_batch(tp, targets, backward);
            };
            const auto params = m.store().all();
            const auto rep = grad_check(loss, params, 1e-5, 1e-4, 16, seed);
            EXPECT_TRUE(rep.passed) << frontend_name(fr) << " " << rep.max_rel_error << " at " << rep.worst_parameter;
        }
    }
}

TEST(PerfModel, CachedEmbeddingsNeedFrozenEncoder) {
    const FeatureConfig f;
    const auto& d = small_data();
    PerfModel m(f, small_arch(Frontend::EncoderRandom), 6);
    const auto tp = ptrs(d.test);
    const Eigen::MatrixXd emb = m.embed_leaves(tp);
    std::vector<double> y(d.test.speedups);
    EXPECT_THROW(m.mape_batch(tp, y, true, &emb), ContractError);
    m.store().set_frozen("encoder/", true);
    const double cached = m.mape_batch(tp, y, false, &emb);
    EXPECT_NEAR(cached, m.mape_batch(tp, y, false), 1e-12);
    EXPECT_TRUE(m.predict_from_embeddings(tp, emb).isApprox(m.predict_batch(tp), 1e-12));
}

TEST(PerfModel, CheckpointRoundTrip) {
    const FeatureConfig f;
    const auto& d = small_data();
    const auto path = temp_path("model.ckpt");
    PerfModel m(f, small_arch(Frontend::EncoderRandom), 7);
    m.save(path);
    const PerfModel back = PerfModel::load(path);
    EXPECT_TRUE(back.arch() == m.arch());
    EXPECT_TRUE(back.predict_batch(ptrs(d.test)) == m.predict_batch(ptrs(d.test)));
    std::filesystem::remove(path);
}

TEST(PerfModel, PretrainedEncoderMustMatch) {
    const FeatureConfig f;
    const auto path = temp_path("ae.ckpt");
    AutoencoderArch aa;
    aa.encoder = small_encoder();
    Autoencoder ae(f, aa, 8);
    ae.save(path);

    PerfModel ok(f, small_arch(Frontend::EncoderPretrained), 9);
    ok.load_pretrained_encoder(path);
    EXPECT_EQ(concat_prefix(ok.store(), "encoder/"), concat_prefix(ae.store(), "encoder/"));

    ModelArch other = small_arch(Frontend::EncoderPretrained);
    other.encoder.ops_width = 7;
    PerfModel wrong(f, other, 9);
    EXPECT_THROW(wrong.load_pretrained_encoder(path), FormatError);

    FeatureConfig f2;
    f2.max_ops = 8;
    PerfModel wrong_features(f2, small_arch(Frontend::EncoderPretrained), 9);
    EXPECT_THROW(wrong_features.load_pretrained_encoder(path), FormatError);
    std::filesystem::remove(path);
}

TEST(Train, FreezeThenUnfreezeContract) {
    const FeatureConfig f;
    const auto& d = small_data();
    PerfModel m(f, small_arch(Frontend::EncoderPretrained), 10);
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.patience = 2;
    cfg.max_epochs = 30;
    cfg.batch_size = static_cast<int>(d.train.size());  // one optimizer step per epoch
    cfg.seed = 10;

    std::vector<AlignedVector> enc_after, all_after;
    std::vector<std::int64_t> enc_steps;
    const auto res = train(m, d.train, d.valid, cfg, [&](const PerfModel& pm, const TrainLogRow&) {
        enc_after.push_back(concat_prefix(pm.store(), "encoder/"));
        all_after.push_back(concat_prefix(pm.store(), ""));
        enc_steps.push_back(pm.store().at("encoder/trunk/0/W").adam_steps);
    });
    ASSERT_GT(res.unfreeze_epoch, 0) << "no plateau within max_epochs";
    const int u = res.unfreeze_epoch;

    // Streak recomputed from the log.
    double best = std::numeric_limits<double>::infinity();
    int streak = 0, expected = 0;
    for (const auto& row : res.log) {
        if (row.valid_mape < best) {
            best = row.valid_mape;
            streak = 0;
        } else if (++streak == cfg.patience) {
            expected = row.epoch;
            break;
        }
    }
    EXPECT_EQ(u, expected);
    for (const auto& row : res.log) EXPECT_EQ(row.phase, row.epoch <= u ? 1 : 2);

    for (int e = 0; e < u; ++e) {
        EXPECT_EQ(enc_after[e], enc_after[0]);
        EXPECT_EQ(enc_steps[e], 0);
    }
    ASSERT_GT(static_cast<int>(enc_after.size()), u);
    EXPECT_EQ(enc_steps[u], 1);

    // First encoder step after unfreezing: |delta| = 0.2 lr |g| / (|g| + eps).
    const auto& before = enc_after[u - 1];
    const auto& after = enc_after[u];
    int moved = 0;
    for (std::size_t k = 0; k < before.size(); ++k) {
        const double delta = std::abs(after[k] - before[k]);
        if (delta == 0) continue;
        ++moved;
        EXPECT_LE(delta, 0.2 * cfg.lr * (1 + 1e-9));
        EXPECT_GT(delta, 0.2 * cfg.lr * 1e-3);
    }
    EXPECT_GT(moved, 0);
    for (auto* p : m.store().with_prefix("encoder/")) EXPECT_DOUBLE_EQ(p->lr_scale, 0.2);

    // The best-validation epoch is what remains.
    EXPECT_EQ(concat_prefix(m.store(), ""), all_after[res.best_epoch - 1]);
    EXPECT_EQ(train_log_csv(res.log).substr(0, 34), "epoch,phase,train_mape,valid_mape\n");
}

TEST(Train, BaselineIsSinglePhase) {
    const FeatureConfig f;
    const auto& d = small_data();
    PerfModel m(f, small_arch(Frontend::Baseline), 11);
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.patience = 2;
    cfg.max_epochs = 25;
    cfg.seed = 11;
    const auto res = train(m, d.train, d.valid, cfg);
    EXPECT_EQ(res.unfreeze_epoch, 0);
    for (const auto& row : res.log) EXPECT_EQ(row.phase, 1);
    EXPECT_LT(res.best_valid_mape, res.log[0].valid_mape + 1e-12);
}

TEST(Train, ConfigContracts) {
    TrainConfig c;
    c.patience = 0;
    EXPECT_THROW(c.check(), ContractError);
    c = {};
    c.encoder_lr_scale = 1.5;
    EXPECT_THROW(c.check(), ContractError);
}

TEST(Evaluate, MetricExamples) {
    const std::vector<double> a{2.0, 2.0, 2.0};
    EXPECT_DOUBLE_EQ(mape_percent(a, a), 0.0);
    const std::vector<double> ones{1.0, 1.0, 1.0};
    EXPECT_DOUBLE_EQ(mape_percent(ones, a), 50.0);
}

TEST(Evaluate, OrderInvariantAndWeightedUnion) {
    const FeatureConfig f;
    const auto& d = small_data();
    PerfModel m(f, small_arch(Frontend::Baseline), 12);
    const std::size_t n = d.test.size();
    std::vector<std::size_t> all(n), rev(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::reverse_copy(all.begin(), all.end(), rev.begin());
    const double full = evaluate(m, d.test);
    EXPECT_NEAR(evaluate(m, d.test.subset(rev)), full, 1e-10);

    const std::vector<std::size_t> lo(all.begin(), all.begin() + n / 3), hi(all.begin() + n / 3, all.end());
    const double weighted = (evaluate(m, d.test.subset(lo)) * static_cast<double>(lo.size()) +
                             evaluate(m, d.test.subset(hi)) * static_cast<double>(hi.size())) /
                            static_cast<double>(n);
    EXPECT_NEAR(weighted, full, 1e-10);
}

TEST(Experiment, EpochBudgetAndTables) {
    ExperimentConfig c;
    c.sample_budget = 1000;
    c.min_epochs = 3;
    c.train.max_epochs = 50;
    EXPECT_EQ(experiment_epochs(c, 10), 50);
    EXPECT_EQ(experiment_epochs(c, 100), 10);
    EXPECT_EQ(experiment_epochs(c, 10000), 3);

    const std::vector<ExperimentRow> rows{{Frontend::Baseline, 0.1, 0, 20.0},
                                          {Frontend::Baseline, 0.1, 1, 22.0},
                                          {Frontend::EncoderPretrained, 0.1, 0, 18.0}};
    const auto cells = experiment_cells(rows);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_DOUBLE_EQ(cells[0].mean, 21.0);
    EXPECT_DOUBLE_EQ(cells[0].spread, 2.0);
    EXPECT_EQ(experiment_csv(rows).substr(0, 32), "variant,fraction,seed,test_mape\n");
    EXPECT_NE(experiment_means_csv(cells).find("encoder_pretrained,0.1,18,0"), std::string::npos);
}

TEST(Experiment, RunsAndIsDeterministic) {
    const FeatureConfig f;
    const auto& d = small_data();
    const auto ckpt = temp_path("exp_ae.ckpt");
    AutoencoderArch aa;
    aa.encoder = small_encoder();
    Autoencoder(f, aa, 13).save(ckpt);
    ExperimentConfig c;
    c.fractions = {0.5, 1.0};
    c.seeds = {0};
    c.train.max_epochs = 4;
    c.min_epochs = 2;
    c.sample_budget = 0;
    c.pretrained = ckpt;
    const auto a = data_efficiency_experiment(d.train, d.valid, d.test, f, c);
    const auto b = data_efficiency_experiment(d.train, d.valid, d.test, f, c);
    ASSERT_EQ(a.size(), 6u);
    EXPECT_EQ(experiment_csv(a), experiment_csv(b));
    c.pretrained.clear();
    c.variants = {Frontend::EncoderPretrained};
    EXPECT_THROW(data_efficiency_experiment(d.train, d.valid, d.test, f, c), ContractError);
    std::filesystem::remove(ckpt);
}
