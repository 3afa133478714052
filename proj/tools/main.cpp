#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "loopperf/errors.hpp"

using namespace loopperf::cli;

namespace {

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

CLI::Validator bound(bool strict) {
    return CLI::Validator(
        [strict](std::string& in) -> std::string {
            double v = 0;
            if (!CLI::detail::lexical_cast(in, v)) return "Value " + in + " is not a number";
            if (strict ? v > 0 : v >= 0) return {};
            return "Value " + in + (strict ? " must be positive" : " must not be negative");
        },
        strict ? "POSITIVE" : "NONNEGATIVE");
}

const CLI::Validator kPositive = bound(true);
const CLI::Validator kNonNegative = bound(false);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Loop-nest performance modeling with pretrained statement embeddings"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    bool force = false;

    GenOptions gen;
    auto* g = app.add_subcommand("gen", "Generate programs, labeled splits and pretraining vectors");
    g->add_option("--seed", gen.seed);
    g->add_option("--n-programs", gen.n_programs, "Labeled programs")->check(kPositive);
    g->add_option("--n-pretrain-programs", gen.n_pretrain_programs, "Unlabeled programs (0 = none)")
        ->check(kNonNegative);
    g->add_option("--max-sequences", gen.max_sequences)->check(kPositive);
    g->add_option("--out-dir", gen.out_dir)->required();
    g->add_flag("--force", force);

    PretrainOptions pre;
    auto* p = app.add_subcommand("pretrain", "Pretrain the autoencoder on statement vectors");
    p->add_option("--data-dir", pre.data_dir)->required();
    p->add_option("--variant", pre.variant)->check(CLI::IsMember({"segmented", "plain_mlp", "comp_embed"}));
    p->add_option("--embedding-dim", pre.embedding_dim)->check(kPositive);
    p->add_option("--epochs", pre.epochs)->check(kPositive);
    p->add_option("--batch-size", pre.batch_size)->check(kPositive);
    p->add_option("--lr", pre.lr)->check(kPositive);
    p->add_option("--valid-fraction", pre.valid_fraction)->check(CLI::Range(0.0, 1.0));
    p->add_option("--seed", pre.seed);
    p->add_option("--out-dir", pre.out_dir)->required();
    p->add_flag("--force", force);

    TrainOptions tr;
    auto* t = app.add_subcommand("train", "Train the speedup model");
    t->add_option("--data-dir", tr.data_dir)->required();
    t->add_option("--frontend", tr.frontend)->check(CLI::IsMember({"baseline", "encoder"}));
    t->add_option("--pretrained", tr.pretrained, "Autoencoder checkpoint (encoder frontend)");
    t->add_option("--fraction", tr.fraction)->check(CLI::Range(0.0, 1.0));
    t->add_option("--seed", tr.seed);
    t->add_option("--epochs", tr.max_epochs, "Maximum epochs")->check(kPositive);
    t->add_option("--patience", tr.patience)->check(kPositive);
    t->add_option("--batch-size", tr.batch_size)->check(kPositive);
    t->add_option("--lr", tr.lr)->check(kPositive);
    t->add_option("--encoder-lr-scale", tr.encoder_lr_scale)->check(CLI::Range(0.0, 1.0));
    t->add_option("--max-valid", tr.max_valid, "Validation samples used per epoch (0 = all)");
    t->add_option("--out-dir", tr.out_dir)->required();
    t->add_flag("--force", force);

    EvalOptions ev;
    auto* e = app.add_subcommand("eval", "Report MAPE of a trained model on a split");
    e->add_option("--model", ev.model)->required();
    e->add_option("--data-dir", ev.data_dir)->required();
    e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "valid", "test"}));

    SearchOptions se;
    auto* s = app.add_subcommand("search", "Beam search for transformation sequences");
    s->add_option("--data-dir", se.data_dir)->required();
    s->add_option("--model", se.model, "Model checkpoint (default: oracle)");
    s->add_option("--split", se.split)->check(CLI::IsMember({"train", "valid", "test"}));
    s->add_option("--program-id", se.program_id);
    s->add_option("--limit", se.limit)->check(kPositive);
    s->add_option("--beam", se.beam, "Beam width (0 = unbounded)")->check(kNonNegative);
    s->add_option("--depth", se.depth)->check(kPositive);
    s->add_flag("--trace", se.trace, "Write search_trace.jsonl");
    s->add_option("--out-dir", se.out_dir)->required();
    s->add_flag("--force", force);

    ExperimentOptions ex;
    auto* x = app.add_subcommand("experiment", "Data-efficiency experiment and model-guided search benchmark");
    x->add_option("--data-dir", ex.data_dir)->required();
    x->add_option("--pretrained", ex.pretrained);
    x->add_option("--fractions", ex.fractions)->delimiter(',');
    x->add_option("--seeds", ex.seeds)->delimiter(',');
    x->add_option("--variants", ex.variants)->delimiter(',');
    x->add_option("--epochs", ex.max_epochs, "Maximum epochs per run")->check(kPositive);
    x->add_option("--min-epochs", ex.min_epochs)->check(kPositive);
    x->add_option("--sample-budget", ex.sample_budget, "Training samples per run before the epoch cap");
    x->add_option("--patience", ex.patience)->check(kPositive);
    x->add_option("--batch-size", ex.batch_size)->check(kPositive);
    x->add_option("--lr", ex.lr)->check(kPositive);
    x->add_option("--max-valid", ex.max_valid);
    x->add_option("--bench-fraction", ex.bench_fraction);
    x->add_option("--bench-programs", ex.bench_programs)->check(kPositive);
    x->add_option("--beam", ex.beam)->check(kNonNegative);
    x->add_option("--depth", ex.depth)->check(kPositive);
    x->add_option("--timing-programs", ex.timing_programs)->check(kPositive);
    x->add_option("--out-dir", ex.out_dir)->required();
    x->add_flag("--force", force);

    std::string manifest, rerun_dir;
    bool verify = false;
    auto* r = app.add_subcommand("rerun", "Re-execute a command from its manifest");
    r->add_option("--manifest", manifest)->required();
    r->add_option("--out-dir", rerun_dir, "Write outputs here instead of the recorded directory");
    r->add_flag("--verify", verify, "Require deterministic outputs to match the manifest checksums");
    r->add_flag("--force", force);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForVersion& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << "error: usage: " << one_line(err.what()) << "\n";
        return 2;
    }

    try {
        if (*g) run_gen(gen, force, std::cout);
        else if (*p) run_pretrain(pre, force, std::cout);
        else if (*t) run_train(tr, force, std::cout);
        else if (*e) run_eval(ev, std::cout);
        else if (*s) run_search(se, force, std::cout);
        else if (*x) run_experiment(ex, force, std::cout);
        else if (*r) run_rerun(manifest, rerun_dir, force, verify, std::cout);
    } catch (const UsageError& err) {
        std::cerr << "error: usage: " << one_line(err.what()) << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << one_line(err.what()) << "\n";
        return 1;
    }
    return 0;
}
