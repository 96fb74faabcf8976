#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "cli_commands.hpp"

using namespace bsdh::cli;

namespace {

void add_data_options(CLI::App* app, DataOptions& d) {
    app->add_option("--data", d.data, "\"mnist\" or a .b2f file")->capture_default_str();
    app->add_option("--mnist-dir", d.mnist_dir, "directory holding the MNIST IDX files")->capture_default_str();
    app->add_flag("--raw-pixels", d.raw_pixels, "keep MNIST pixels in 0..255");
    app->add_option("--train-size", d.train_size, "training samples (0: 2000 for MNIST, 80% otherwise)");
    app->add_option("--query-size", d.query_size, "query samples (0: 400 for MNIST, 20% otherwise)");
    app->add_option("--split-seed", d.split_seed, "seed of the train/query split")->capture_default_str();
}

void add_model_options(CLI::App* app, ModelOptions& m, bool grid) {
    app->add_option("--method", m.method, "bsdh, bpbc or lsh")->capture_default_str();
    if (!grid) {
        app->add_option("--bits", m.bits, "code length")->capture_default_str();
        app->add_option("--c1", m.c1, "rows of the projected feature")->capture_default_str();
        app->add_option("--c2", m.c2, "columns of the projected feature")->capture_default_str();
        app->add_option("--lambda", m.lambda, "regularizer on W")->capture_default_str();
        app->add_option("--mu", m.mu, "weight of the quantization term")->capture_default_str();
    }
    app->add_option("--t1", m.t1, "bilinear projection rounds")->capture_default_str();
    app->add_option("--t2", m.t2, "outer iterations")->capture_default_str();
    app->add_option("--tol", m.tol, "relative objective change for convergence")->capture_default_str();
    app->add_option("--max-sweeps", m.max_sweeps, "code sweeps per outer iteration")->capture_default_str();
    app->add_flag("--center", m.center, "centre projected features before fitting U");
    app->add_option("--seed", m.seed, "training seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bilinear supervised discrete hashing"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "write a synthetic multi-label dataset");
    s->add_option("--n", synth.n, "samples")->capture_default_str();
    s->add_option("--d1", synth.d1, "feature rows")->capture_default_str();
    s->add_option("--d2", synth.d2, "feature columns")->capture_default_str();
    s->add_option("--labels", synth.labels, "label count")->capture_default_str();
    s->add_option("--labels-per-sample", synth.labels_per_sample, "labels per sample")->capture_default_str();
    s->add_option("--noise", synth.noise, "noise standard deviation")->capture_default_str();
    s->add_option("--seed", synth.seed, "seed")->capture_default_str();
    s->add_option("--out", synth.out, "output .b2f file")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a hashing model and encode the training set");
    add_data_options(t, train.data);
    add_model_options(t, train.model, false);
    t->add_option("--out", train.out, "run directory")->required();

    EncodeArgs enc;
    auto* e = app.add_subcommand("encode", "encode samples with a trained run");
    e->add_option("--run", enc.run, "run directory")->required();
    e->add_option("--set", enc.set, "query, train or all")->capture_default_str();
    e->add_option("--input", enc.input, "encode this .b2f file instead");
    e->add_option("--out", enc.out, "output codes file");

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "retrieval metrics of a run");
    v->add_option("--run", ev.run, "run directory")->required();
    v->add_option("--k", ev.k_grid, "precision/recall cut-offs")->delimiter(',');
    v->add_option("--db-index", ev.db_index, "file with a permutation of the database");
    v->add_option("--out", ev.out, "output directory (default: the run)");
    v->add_option("--workers", ev.workers, "query threads (BSDH_WORKERS overrides)");

    SweepArgs sw;
    auto* g = app.add_subcommand("sweep", "grid search over hyper-parameters");
    add_data_options(g, sw.data);
    add_model_options(g, sw.model, true);
    g->add_option("--lambda", sw.lambdas, "lambda values")->delimiter(',');
    g->add_option("--mu", sw.mus, "mu values")->delimiter(',');
    g->add_option("--c1", sw.c1s, "c1 values")->delimiter(',');
    g->add_option("--c2", sw.c2s, "c2 values")->delimiter(',');
    g->add_option("--bits", sw.bits, "code lengths")->delimiter(',');
    g->add_option("--repeats", sw.repeats, "seeds per cell, MAP averaged")->capture_default_str();
    g->add_option("--workers", sw.workers, "parallel cells (BSDH_WORKERS overrides)");
    g->add_option("--out", sw.out, "sweep directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed()) return cmd_synth(synth);
        if (t->parsed()) return cmd_train(train);
        if (e->parsed()) return cmd_encode(enc);
        if (v->parsed()) return cmd_eval(ev);
        if (g->parsed()) return cmd_sweep(sw);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 1;
}
