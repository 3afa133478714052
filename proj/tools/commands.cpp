#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "loopperf/autosched.hpp"
#include "loopperf/checkpoint.hpp"
#include "loopperf/csv.hpp"
#include "loopperf/dataset_io.hpp"
#include "loopperf/errors.hpp"
#include "loopperf/fileio.hpp"

namespace loopperf::cli {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenOptions, seed, n_programs, n_pretrain_programs, max_sequences,
                                                out_dir)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PretrainOptions, data_dir, variant, embedding_dim, epochs,
                                                batch_size, lr, valid_fraction, seed, out_dir)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainOptions, data_dir, frontend, pretrained, fraction, seed,
                                                max_epochs, patience, batch_size, lr, encoder_lr_scale, max_valid,
                                                out_dir)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SearchOptions, data_dir, model, split, program_id, limit, beam,
                                                depth, trace, out_dir)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentOptions, data_dir, pretrained, fractions, seeds,
                                                variants, max_epochs, min_epochs, sample_budget, patience,
                                                batch_size, lr, max_valid, bench_fraction, bench_programs, beam,
                                                depth, timing_programs, out_dir)

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Collects outputs of one command, then writes them with a manifest.
class Run {
public:
    Run(std::string command, const fs::path& out_dir, bool force) : command_(std::move(command)), dir_(out_dir), force_(force) {
        if (dir_.empty()) throw UsageError("--out-dir is required");
    }

    // Fails before any work is done when an output already exists.
    void expect(std::initializer_list<std::string> names) {
        for (const auto& n : names) {
            const auto p = dir_ / n;
            if (!force_ && fs::exists(p)) throw ContractError("refusing to overwrite " + p.string() + " (use --force)");
        }
        const auto m = manifest_path();
        if (!force_ && fs::exists(m)) throw ContractError("refusing to overwrite " + m.string() + " (use --force)");
    }

    void add(const std::string& name, std::string bytes, bool deterministic = true) {
        outputs_.push_back({name, std::move(bytes), deterministic});
    }
    void add_checkpoint(const std::string& name, const std::function<void(const fs::path&)>& save) {
        const auto p = dir_ / name;
        save(p);
        add(name, read_file(p));
    }
    const fs::path& dir() const { return dir_; }

    void commit(const Json& config, std::uint64_t seed, const std::vector<std::string>& inputs, std::ostream& log) {
        Json outs = Json::array();
        for (const auto& o : outputs_) {
            write_file_atomic(dir_ / o.name, o.bytes);
            outs.push_back({{"path", o.name}, {"fnv1a64", hex(fnv1a64(o.bytes))}, {"deterministic", o.deterministic}});
        }
        for (const auto& o : outputs_)
            if (fnv1a64(read_file(dir_ / o.name)) != fnv1a64(o.bytes))
                throw FormatError("output " + (dir_ / o.name).string() + " failed read-back verification");
        const Json manifest{{"command", command_},
                            {"tool_version", kToolVersion},
                            {"config", config},
                            {"seed", seed},
                            {"inputs", inputs},
                            {"outputs", outs},
                            {"wall_time_s", std::chrono::duration<double>(Clock::now() - start_).count()}};
        write_file_atomic(manifest_path(), manifest.dump(2) + "\n");
        for (const auto& o : outputs_) log << "wrote " << (dir_ / o.name).string() << "\n";
        log << "wrote " << manifest_path().string() << "\n";
    }

private:
    fs::path manifest_path() const { return dir_ / ("manifest_" + command_ + ".json"); }

    struct Output {
        std::string name, bytes;
        bool deterministic;
    };
    std::string command_;
    fs::path dir_;
    bool force_;
    std::vector<Output> outputs_;
    Clock::time_point start_ = Clock::now();
};

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
}

struct Splits {
    LabeledDataset data;
    SampleSet train, valid, test;
};

Splits load_splits(const std::string& dir, const FeatureConfig& f) {
    require(!dir.empty(), "--data-dir is required");
    Splits s;
    s.data = load_labeled_dir(dir);
    s.train = featurize_samples(s.data.programs, s.data.train, f);
    s.valid = featurize_samples(s.data.programs, s.data.valid, f);
    s.test = featurize_samples(s.data.programs, s.data.test, f);
    return s;
}

const std::vector<LabeledSample>& split_of(const LabeledDataset& d, const std::string& name) {
    if (name == "train") return d.train;
    if (name == "valid") return d.valid;
    if (name == "test") return d.test;
    throw UsageError("--split must be train, valid or test");
}

// Programs of a split in first-appearance order.
std::vector<Program> split_programs(const LabeledDataset& d, const std::string& split, std::size_t limit) {
    std::vector<Program> out;
    std::set<int> seen;
    for (const auto& s : split_of(d, split)) {
        if (out.size() >= limit) break;
        if (seen.insert(s.program).second) out.push_back(d.programs[static_cast<std::size_t>(s.program)]);
    }
    return out;
}

FeatureConfig checkpoint_features(const std::string& path) {
    return feature_config_from_json(read_checkpoint_meta(path).at("feature_config"));
}

}  // namespace

void run_gen(const GenOptions& o, bool force, std::ostream& log) {
    require(o.n_programs >= 1, "--n-programs must be >= 1");
    require(o.n_pretrain_programs >= 0, "--n-pretrain-programs must be >= 0");
    require(o.max_sequences >= 1, "--max-sequences must be >= 1");
    Run run("gen", o.out_dir, force);
    run.expect({DataDir::kPrograms, DataDir::kTrain, DataDir::kValid, DataDir::kTest, DataDir::kVectors});

    GenConfig g;
    g.seed = o.seed;
    g.n_programs = o.n_programs;
    g.max_sequences = o.max_sequences;
    const auto ds = build_labeled_dataset(g, MachineConfig{});
    auto count_programs = [](const std::vector<LabeledSample>& v) {
        std::set<int> s;
        for (const auto& x : v) s.insert(x.program);
        return s.size();
    };
    log << "programs train/valid/test: " << count_programs(ds.train) << "/" << count_programs(ds.valid) << "/"
        << count_programs(ds.test) << "\n";
    log << "samples train/valid/test: " << ds.train.size() << "/" << ds.valid.size() << "/" << ds.test.size() << "\n";
    run.add(DataDir::kPrograms, programs_to_jsonl(ds.programs));
    run.add(DataDir::kTrain, samples_to_jsonl(ds.programs, ds.train));
    run.add(DataDir::kValid, samples_to_jsonl(ds.programs, ds.valid));
    run.add(DataDir::kTest, samples_to_jsonl(ds.programs, ds.test));

    if (o.n_pretrain_programs > 0) {
        GenConfig u = g;
        u.n_programs = o.n_pretrain_programs;
        u.first_index = kUnlabeledFirstIndex;
        u.id_prefix = "u";
        const auto vectors = build_pretrain_dataset(u, FeatureConfig{});
        log << "pretrain vectors: " << vectors.size() << " (skipped " << vectors.skipped << ")\n";
        run.add(DataDir::kVectors, vectors_to_jsonl(vectors));
    }
    run.commit(o, o.seed, {}, log);
}

void run_pretrain(const PretrainOptions& o, bool force, std::ostream& log) {
    require(!o.data_dir.empty(), "--data-dir is required");
    Run run("pretrain", o.out_dir, force);
    run.expect({"autoencoder.ckpt", "pretrain_log.csv"});
    const auto input = (fs::path(o.data_dir) / DataDir::kVectors).string();
    const auto data = vectors_from_jsonl(read_file(input));
    AutoencoderArch arch;
    arch.encoder.variant = encoder_variant_from_name(o.variant);
    arch.encoder.embedding_dim = o.embedding_dim;
    Autoencoder model(data.config, arch, o.seed);
    PretrainConfig pc;
    pc.epochs = o.epochs;
    pc.batch_size = o.batch_size;
    pc.lr = o.lr;
    pc.seed = o.seed;
    pc.valid_fraction = o.valid_fraction;
    log << "pretraining " << o.variant << " on " << data.size() << " vectors\n";
    const auto res = pretrain(model, data, pc);
    for (const auto& r : res.log)
        log << "epoch " << r.epoch << " train_mse " << fmt_double(r.train_mse) << " valid_mse " << fmt_double(r.valid_mse)
            << "\n";
    log << "best valid MSE " << fmt_double(res.best_valid_mse) << " at epoch " << res.best_epoch << "\n";
    run.add_checkpoint("autoencoder.ckpt", [&](const fs::path& p) { model.save(p); });
    run.add("pretrain_log.csv", pretrain_log_csv(res.log));
    run.commit(o, o.seed, {input}, log);
}

void run_train(const TrainOptions& o, bool force, std::ostream& log) {
    require(o.frontend == "baseline" || o.frontend == "encoder", "--frontend must be baseline or encoder");
    require(o.fraction > 0 && o.fraction <= 1, "--fraction must be in (0, 1]");
    require(o.frontend == "encoder" || o.pretrained.empty(), "--pretrained needs --frontend encoder");
    Run run("train", o.out_dir, force);
    run.expect({"model.ckpt", "train_log.csv"});

    const FeatureConfig f = o.pretrained.empty() ? FeatureConfig{} : checkpoint_features(o.pretrained);
    const auto s = load_splits(o.data_dir, f);
    Frontend fr = Frontend::Baseline;
    ModelArch arch = baseline_arch();
    if (o.frontend == "encoder") {
        fr = o.pretrained.empty() ? Frontend::EncoderRandom : Frontend::EncoderPretrained;
        const EncoderArch enc = o.pretrained.empty()
                                    ? EncoderArch{}
                                    : encoder_arch_from_json(read_checkpoint_meta(o.pretrained).at("arch").at("encoder"));
        arch = encoder_model_arch(enc, fr == Frontend::EncoderPretrained);
    }
    const auto vi = static_cast<std::uint64_t>(fr);
    PerfModel model(f, arch, derive_seed(o.seed, 0x6D6F64, vi));
    if (fr == Frontend::EncoderPretrained) model.load_pretrained_encoder(o.pretrained);

    const auto idx = subsample_fraction(s.train.size(), o.fraction, o.seed);
    require(!idx.empty(), "--fraction leaves no training samples");
    const SampleSet sub = s.train.subset(idx);
    TrainConfig tc;
    tc.lr = o.lr;
    tc.batch_size = o.batch_size;
    tc.max_epochs = o.max_epochs;
    tc.patience = o.patience;
    tc.encoder_lr_scale = o.encoder_lr_scale;
    tc.seed = derive_seed(o.seed, 0x72756E, vi);
    tc.max_valid = o.max_valid;
    log << "training " << frontend_name(fr) << " on " << sub.size() << " samples\n";
    const auto res = train(model, sub, s.valid, tc, [&](const PerfModel&, const TrainLogRow& r) {
        log << "epoch " << r.epoch << " phase " << r.phase << " train_mape " << fmt_fixed(r.train_mape, 3)
            << " valid_mape " << fmt_fixed(r.valid_mape, 3) << std::endl;
    });
    log << "best valid MAPE " << fmt_fixed(res.best_valid_mape, 3) << "% at epoch " << res.best_epoch;
    if (res.unfreeze_epoch > 0) log << ", encoder unfrozen after epoch " << res.unfreeze_epoch;
    log << "\n";
    run.add_checkpoint("model.ckpt", [&](const fs::path& p) { model.save(p); });
    run.add("train_log.csv", train_log_csv(res.log));
    std::vector<std::string> inputs{o.data_dir};
    if (!o.pretrained.empty()) inputs.push_back(o.pretrained);
    run.commit(o, o.seed, inputs, log);
}

double run_eval(const EvalOptions& o, std::ostream& log) {
    require(!o.model.empty(), "--model is required");
    require(!o.data_dir.empty(), "--data-dir is required");
    const PerfModel model = PerfModel::load(o.model);
    const auto data = load_labeled_dir(o.data_dir);
    const auto set = featurize_samples(data.programs, split_of(data, o.split), model.features());
    if (set.size() == 0) throw ContractError("eval: split '" + o.split + "' is empty");
    const double mape = evaluate(model, set);
    log << "MAPE: " << fmt_fixed(mape, 2) << "%\n";
    return mape;
}

void run_search(const SearchOptions& o, bool force, std::ostream& log) {
    require(!o.data_dir.empty(), "--data-dir is required");
    require(o.limit >= 1, "--limit must be >= 1");
    Run run("search", o.out_dir, force);
    if (o.trace)
        run.expect({"search.csv", "search_trace.jsonl"});
    else
        run.expect({"search.csv"});
    const SearchConfig cfg{o.beam, o.depth};
    cfg.check();

    const auto data = load_labeled_dir(o.data_dir);
    std::vector<Program> programs;
    if (!o.program_id.empty()) {
        for (const auto& p : data.programs)
            if (p.id == o.program_id) programs.push_back(p);
        if (programs.empty()) throw LookupError("no program '" + o.program_id + "' in " + o.data_dir);
    } else {
        programs = split_programs(data, o.split, static_cast<std::size_t>(o.limit));
    }

    const MachineConfig machine;
    std::unique_ptr<Evaluator> eval;
    if (o.model.empty())
        eval = std::make_unique<OracleEvaluator>(machine);
    else
        eval = std::make_unique<ModelEvaluator>(std::make_shared<const PerfModel>(PerfModel::load(o.model)), "model");

    std::string csv = "program_id,evaluator,chosen_sequence,predicted_score,true_speedup\n";
    std::string trace;
    for (const auto& p : programs) {
        std::ostringstream t;
        const auto r = search(p, *eval, cfg, o.trace ? &t : nullptr);
        const double truth = speedup(p, r.best, machine);
        csv += csv_field(p.id) + "," + eval->name() + "," + csv_field(sequence_key(r.best)) + "," +
               fmt_double(r.score) + "," + fmt_double(truth) + "\n";
        log << p.id << ": " << sequence_key(r.best) << " true speedup " << fmt_fixed(truth, 3) << "\n";
        std::istringstream lines(t.str());
        for (std::string line; std::getline(lines, line);) {
            Json j = Json::parse(line);
            j["program_id"] = p.id;
            trace += j.dump() + "\n";
        }
    }
    run.add("search.csv", csv);
    if (o.trace) run.add("search_trace.jsonl", trace);
    std::vector<std::string> inputs{o.data_dir};
    if (!o.model.empty()) inputs.push_back(o.model);
    run.commit(o, 0, inputs, log);
}

void run_experiment(const ExperimentOptions& o, bool force, std::ostream& log) {
    require(!o.fractions.empty() && !o.seeds.empty() && !o.variants.empty(),
            "--fractions, --seeds and --variants must be non-empty");
    require(o.bench_fraction > 0 && o.bench_fraction <= 1, "--bench-fraction must be in (0, 1]");
    std::vector<Frontend> variants;
    for (const auto& v : o.variants) variants.push_back(frontend_from_name(v));
    const bool has_pretrained = std::count(variants.begin(), variants.end(), Frontend::EncoderPretrained) > 0;
    require(!has_pretrained || !o.pretrained.empty(), "encoder_pretrained needs --pretrained");

    Run run("experiment", o.out_dir, force);
    run.expect({"experiment.csv", "experiment_means.csv", "bench_baseline.ckpt", "bench_encoder.ckpt",
                "benchmark.csv", "benchmark_summary.csv", "timing.csv"});

    const FeatureConfig f = o.pretrained.empty() ? FeatureConfig{} : checkpoint_features(o.pretrained);
    const auto s = load_splits(o.data_dir, f);
    log << "samples train/valid/test: " << s.train.size() << "/" << s.valid.size() << "/" << s.test.size() << "\n";

    ExperimentConfig ec;
    ec.fractions = o.fractions;
    ec.seeds = o.seeds;
    ec.variants = variants;
    ec.train.lr = o.lr;
    ec.train.batch_size = o.batch_size;
    ec.train.max_epochs = o.max_epochs;
    ec.train.patience = o.patience;
    ec.train.max_valid = o.max_valid;
    ec.sample_budget = o.sample_budget;
    ec.min_epochs = o.min_epochs;
    ec.pretrained = o.pretrained;

    // The search benchmark uses the first seed's baseline and encoder models.
    const Frontend bench_encoder = has_pretrained ? Frontend::EncoderPretrained : Frontend::EncoderRandom;
    std::map<Frontend, std::string> bench_names{{Frontend::Baseline, "bench_baseline.ckpt"},
                                                {bench_encoder, "bench_encoder.ckpt"}};
    std::set<Frontend> benched;
    auto keep = [&](Frontend v, const PerfModel& m) {
        run.add_checkpoint(bench_names.at(v), [&](const fs::path& p) { m.save(p); });
        benched.insert(v);
    };
    const auto rows = data_efficiency_experiment(
        s.train, s.valid, s.test, f, ec, [&](const ExperimentRow& r, const PerfModel& m) {
            log << frontend_name(r.variant) << " fraction " << fmt_double(r.fraction) << " seed " << r.seed
                << " test MAPE " << fmt_fixed(r.test_mape, 3) << std::endl;
            if (r.seed == o.seeds.front() && r.fraction == o.bench_fraction && bench_names.count(r.variant))
                keep(r.variant, m);
        });
    run.add("experiment.csv", experiment_csv(rows));
    run.add("experiment_means.csv", experiment_means_csv(experiment_cells(rows)));

    for (const auto& [v, name] : bench_names)
        if (!benched.count(v))
            keep(v, train_on_fraction(v, o.bench_fraction, o.seeds.front(), s.train, s.valid, f, ec));

    const MachineConfig machine;
    auto baseline = std::make_shared<const PerfModel>(PerfModel::load(run.dir() / "bench_baseline.ckpt"));
    auto encoder = std::make_shared<const PerfModel>(PerfModel::load(run.dir() / "bench_encoder.ckpt"));
    const OracleEvaluator oracle(machine);
    const ModelEvaluator base_eval(baseline, "baseline");
    const ModelEvaluator enc_eval(encoder, std::string(frontend_name(bench_encoder)));
    const std::vector<const Evaluator*> evals{&oracle, &base_eval, &enc_eval};
    const auto programs = split_programs(s.data, "test", static_cast<std::size_t>(o.bench_programs));
    const auto bench = benchmark_models(programs, evals, machine, SearchConfig{o.beam, o.depth});
    const auto summary = summarize_benchmark(bench);
    for (const auto& [n, g] : summary.geomeans) log << "geomean true speedup " << n << ": " << fmt_fixed(g, 3) << "\n";
    run.add("benchmark.csv", benchmark_csv(bench));
    run.add("benchmark_summary.csv", benchmark_summary_csv(summary));

    const auto timing_set = split_programs(s.data, "test", static_cast<std::size_t>(o.timing_programs));
    const auto timing = timing_probe(timing_set, base_eval, enc_eval);
    std::string tcsv = "evaluator,seconds_per_candidate\n";
    for (const auto& [n, t] : timing.seconds_per_candidate) tcsv += n + "," + fmt_double(t) + "\n";
    tcsv += "ratio," + timing.ratio_text() + "\n";
    log << "evaluation latency ratio " << timing.ratio_text() << "\n";
    run.add("timing.csv", tcsv, false);

    std::vector<std::string> inputs{o.data_dir};
    if (!o.pretrained.empty()) inputs.push_back(o.pretrained);
    run.commit(o, o.seeds.front(), inputs, log);
}

void run_rerun(const std::string& manifest, const std::string& out_dir, bool force, bool verify, std::ostream& log) {
    const Json m = Json::parse(read_file(manifest));
    const auto command = m.at("command").get<std::string>();
    if (m.at("tool_version").get<std::string>() != kToolVersion)
        throw FormatError("manifest tool version " + m.at("tool_version").get<std::string>() + ", this is " +
                          kToolVersion);
    Json config = m.at("config");
    if (!out_dir.empty()) config["out_dir"] = out_dir;
    const fs::path dir = config.at("out_dir").get<std::string>();

    if (command == "gen")
        run_gen(config.get<GenOptions>(), force, log);
    else if (command == "pretrain")
        run_pretrain(config.get<PretrainOptions>(), force, log);
    else if (command == "train")
        run_train(config.get<TrainOptions>(), force, log);
    else if (command == "search")
        run_search(config.get<SearchOptions>(), force, log);
    else if (command == "experiment")
        run_experiment(config.get<ExperimentOptions>(), force, log);
    else
        throw FormatError("manifest: unknown command '" + command + "'");

    if (!verify) return;
    for (const auto& o : m.at("outputs")) {
        if (!o.at("deterministic").get<bool>()) continue;
        const auto path = dir / o.at("path").get<std::string>();
        if (hex(fnv1a64(read_file(path))) != o.at("fnv1a64").get<std::string>())
            throw FormatError("rerun output " + path.string() + " differs from the manifest checksum");
    }
    log << "rerun verified: deterministic outputs match the manifest\n";
}

}  // namespace loopperf::cli
