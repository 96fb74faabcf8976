#include "cli_commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "bsdh/baselines.hpp"
#include "bsdh/encoder.hpp"
#include "bsdh/error.hpp"
#include "bsdh/io.hpp"
#include "bsdh/retrieval.hpp"
#include "bsdh/trainer.hpp"

namespace bsdh::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "manifest.txt";
constexpr const char* kModelName = "model.bsdh";
constexpr const char* kTrainCodesName = "train_codes.bsdc";

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Data

struct LoadedData {
    Dataset all;
    Split split;
    Dataset train;
    Dataset query;
};

Dataset load_source(const DataOptions& opts) {
    const auto scale = opts.raw_pixels ? PixelScale::Raw : PixelScale::UnitInterval;
    if (opts.data == "mnist") {
        const fs::path dir = opts.mnist_dir;
        auto pick = [&](const std::string& stem) {
            const fs::path gz = dir / (stem + ".gz");
            return fs::exists(gz) ? gz : dir / stem;
        };
        return load_idx(pick("images-idx3-ubyte"), pick("labels-idx1-ubyte"), scale);
    }
    if (opts.raw_pixels) throw InvalidValueError("--raw-pixels only applies to MNIST input");
    return load_b2f(opts.data);
}

LoadedData load_data(DataOptions& opts) {
    LoadedData d{load_source(opts), {}, {}, {}};
    const Index n = d.all.x.n();
    if (opts.train_size == 0 && opts.query_size == 0) {
        if (opts.data == "mnist") {
            opts.train_size = std::min<Index>(2000, n - std::min<Index>(400, n / 5));
            opts.query_size = std::min<Index>(400, n / 5);
        } else {
            opts.query_size = std::max<Index>(1, n / 5);
            opts.train_size = n - opts.query_size;
        }
    } else if (opts.train_size == 0) {
        opts.train_size = n - opts.query_size;
    } else if (opts.query_size == 0) {
        opts.query_size = n - opts.train_size;
    }
    d.split = seeded_split(n, opts.train_size, opts.query_size, opts.split_seed);
    d.train = subset(d.all, d.split.train);
    d.query = subset(d.all, d.split.query);
    return d;
}

void record_data(Manifest& m, const DataOptions& opts) {
    m.set("data", opts.data == "mnist" ? opts.data : fs::absolute(opts.data).string());
    if (opts.data == "mnist") m.set("mnist_dir", fs::absolute(opts.mnist_dir).string());
    m.set("raw_pixels", std::string(opts.raw_pixels ? "1" : "0"));
    m.set("train_size", static_cast<std::int64_t>(opts.train_size));
    m.set("query_size", static_cast<std::int64_t>(opts.query_size));
    m.set("split_seed", opts.split_seed);
}

DataOptions data_from_manifest(const Manifest& m) {
    DataOptions opts;
    opts.data = m.get("data");
    if (m.has("mnist_dir")) opts.mnist_dir = m.get("mnist_dir");
    opts.raw_pixels = m.get("raw_pixels") == "1";
    opts.train_size = m.get_int("train_size");
    opts.query_size = m.get_int("query_size");
    opts.split_seed = m.get_uint("split_seed");
    return opts;
}

// ---------------------------------------------------------------------------
// Methods

void validate_model_options(const ModelOptions& o) {
    if (o.method != "bsdh" && o.method != "bpbc" && o.method != "lsh") {
        throw InvalidValueError("unknown method '" + o.method + "' (expected bsdh, bpbc or lsh)");
    }
    if (o.bits < 1) throw InvalidValueError("--bits must be at least 1, got " + std::to_string(o.bits));
    if (o.method != "bsdh") return;
    TrainConfig cfg;
    cfg.lambda = o.lambda;
    cfg.mu = o.mu;
    cfg.bits = o.bits;
    cfg.max_iterations = o.t2;
    cfg.tol = o.tol;
    cfg.max_sweeps = o.max_sweeps;
    cfg.validate();
    if (o.c1 < 1 || o.c2 < 1) throw InvalidValueError("--c1 and --c2 must be at least 1");
    if (o.t1 < 1) throw InvalidValueError("--t1 must be at least 1");
}

void validate_against_data(const ModelOptions& o, const Dataset& train) {
    if (o.method == "bsdh" && (o.c1 > train.x.d1() || o.c2 > train.x.d2())) {
        throw ShapeError("transition sizes " + std::to_string(o.c1) + "x" + std::to_string(o.c2) +
                         " exceed the " + std::to_string(train.x.d1()) + "x" + std::to_string(train.x.d2()) +
                         " input");
    }
    if (o.method == "bpbc") (void)bpbc_shape_for_bits(o.bits, train.x.d1(), train.x.d2());
}

struct Trained {
    CodeMatrix codes;
    std::optional<TrainResult> bsdh;
};

TrainConfig train_config(const ModelOptions& o) {
    TrainConfig cfg;
    cfg.lambda = o.lambda;
    cfg.mu = o.mu;
    cfg.bits = o.bits;
    cfg.max_iterations = o.t2;
    cfg.tol = o.tol;
    cfg.seed = o.seed;
    cfg.max_sweeps = o.max_sweeps;
    cfg.center_features = o.center;
    return cfg;
}

BilinearFitOptions projection_options(const ModelOptions& o) {
    BilinearFitOptions p;
    p.c1 = o.c1;
    p.c2 = o.c2;
    p.rounds = o.t1;
    return p;
}

BpbcModel bpbc_model(const ModelOptions& o, Index d1, Index d2) {
    const auto [k1, k2] = bpbc_shape_for_bits(o.bits, d1, d2);
    return make_bpbc(d1, d2, k1, k2, o.seed);
}

TrainResult train_model(const Dataset& train, const ModelOptions& o) {
    return bsdh::train(train.x, train.y, train_config(o), projection_options(o));
}

Trained fit_method(const ModelOptions& o, const Dataset& train) {
    if (o.method == "bsdh") {
        TrainResult r = train_model(train, o);
        CodeMatrix codes = r.codes;
        return {std::move(codes), std::move(r)};
    }
    if (o.method == "bpbc") return {bpbc_encode(train.x, bpbc_model(o, train.x.d1(), train.x.d2())), std::nullopt};
    return {lsh_encode(train.x, make_lsh(o.bits, train.x.d1(), train.x.d2(), o.seed)), std::nullopt};
}

void record_model(Manifest& m, const ModelOptions& o) {
    m.set("method", o.method);
    m.set("bits", static_cast<std::int64_t>(o.bits));
    m.set("seed", o.seed);
    if (o.method == "bsdh") {
        m.set("c1", static_cast<std::int64_t>(o.c1));
        m.set("c2", static_cast<std::int64_t>(o.c2));
        m.set("lambda", o.lambda);
        m.set("mu", o.mu);
        m.set("t1", static_cast<std::int64_t>(o.t1));
        m.set("t2", static_cast<std::int64_t>(o.t2));
        m.set("tol", o.tol);
        m.set("max_sweeps", static_cast<std::int64_t>(o.max_sweeps));
        m.set("center_features", std::string(o.center ? "1" : "0"));
    }
}

ModelOptions model_from_manifest(const Manifest& m) {
    ModelOptions o;
    o.method = m.get("method");
    o.bits = m.get_int("bits");
    o.seed = m.get_uint("seed");
    if (o.method == "bsdh") {
        o.c1 = m.get_int("c1");
        o.c2 = m.get_int("c2");
        o.lambda = m.get_double("lambda");
        o.mu = m.get_double("mu");
        o.t1 = static_cast<int>(m.get_int("t1"));
        o.t2 = static_cast<int>(m.get_int("t2"));
        o.tol = m.get_double("tol");
        o.max_sweeps = static_cast<int>(m.get_int("max_sweeps"));
        o.center = m.get("center_features") == "1";
    }
    return o;
}

// Codes for new samples from a finished run.
CodeMatrix encode_for_run(const fs::path& run, const ModelOptions& o, const FeatureTensor& x) {
    if (o.method == "bsdh") return encode(x, load_model(run / kModelName));
    if (o.method == "bpbc") return bpbc_encode(x, bpbc_model(o, x.d1(), x.d2()));
    return lsh_encode(x, make_lsh(o.bits, x.d1(), x.d2(), o.seed));
}

std::string trace_csv(const TrainResult& r) {
    std::ostringstream out;
    out << "iteration,objective\n0," << num(r.initial_objective) << '\n';
    for (std::size_t i = 0; i < r.model.objective_trace.size(); ++i) {
        out << i + 1 << ',' << num(r.model.objective_trace[i]) << '\n';
    }
    return out.str();
}

Manifest load_run_manifest(const fs::path& run) {
    const fs::path p = run / kManifestName;
    if (!fs::exists(p)) throw Error("no run manifest at " + p.string() + " (run `bsdh train` first)");
    return Manifest::load(p);
}

double query_map(const CodeMatrix& queries, const LabelMatrix& query_labels, const CodeMatrix& database,
                 const LabelMatrix& database_labels, int workers) {
    return mean_average_precision(pack_codes(queries), query_labels, pack_codes(database), database_labels, workers);
}

}  // namespace

int resolve_workers(int fallback) {
    if (const char* env = std::getenv("BSDH_WORKERS")) {
        int v = 0;
        const std::string_view s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1) {
            throw InvalidValueError("BSDH_WORKERS must be a positive integer, got '" + std::string(env) + "'");
        }
        return v;
    }
    if (fallback > 0) return fallback;
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------------------

int cmd_synth(const SynthArgs& args) {
    if (args.out.empty()) throw InvalidValueError("--out is required");
    SynthOptions o;
    o.n = args.n;
    o.d1 = args.d1;
    o.d2 = args.d2;
    o.labels = args.labels;
    o.labels_per_sample = args.labels_per_sample;
    o.noise = args.noise;
    o.seed = args.seed;
    const Dataset d = synth_multilabel(o);
    save_b2f(d, args.out);
    std::cout << "wrote " << args.out << ": n=" << d.x.n() << " " << d.x.d1() << "x" << d.x.d2() << " l=" << d.y.l()
              << '\n';
    return 0;
}

int cmd_train(const TrainArgs& args_in) {
    TrainArgs args = args_in;
    if (args.out.empty()) throw InvalidValueError("--out is required");
    validate_model_options(args.model);
    const LoadedData data = load_data(args.data);
    validate_against_data(args.model, data.train);

    const fs::path out = args.out;
    fs::create_directories(out);
    const Trained t = fit_method(args.model, data.train);

    Manifest m;
    m.set("command", std::string("train"));
    m.set("model_format_version", static_cast<std::int64_t>(kModelFormatVersion));
    m.set("codes_format_version", static_cast<std::int64_t>(kCodesFormatVersion));
    record_data(m, args.data);
    record_model(m, args.model);
    m.set("split_train_file", std::string("split_train.txt"));
    m.set("split_query_file", std::string("split_query.txt"));

    write_file_atomic(out / "split_train.txt", format_indices(data.split.train));
    write_file_atomic(out / "split_query.txt", format_indices(data.split.query));
    save_codes(pack_codes(t.codes), out / kTrainCodesName);
    if (t.bsdh) {
        save_model(t.bsdh->model, out / kModelName);
        write_file_atomic(out / "trace.csv", trace_csv(*t.bsdh));
        m.set("iterations", static_cast<std::int64_t>(t.bsdh->iterations));
        m.set("converged", std::string(t.bsdh->converged ? "1" : "0"));
        m.set("final_objective", t.bsdh->model.objective_trace.back());
    }
    if (args.model.method == "bpbc") {
        const auto [k1, k2] = bpbc_shape_for_bits(args.model.bits, data.train.x.d1(), data.train.x.d2());
        m.set("bpbc_k1", static_cast<std::int64_t>(k1));
        m.set("bpbc_k2", static_cast<std::int64_t>(k2));
    }
    m.save(out / kManifestName);

    std::cout << "trained " << args.model.method << " (" << args.model.bits << " bits) on " << data.train.x.n()
              << " samples";
    if (t.bsdh) {
        std::cout << ": " << t.bsdh->iterations << " iterations, objective " << t.bsdh->initial_objective << " -> "
                  << t.bsdh->model.objective_trace.back() << (t.bsdh->converged ? " (converged)" : "");
    }
    std::cout << "\nartifacts in " << out.string() << '\n';
    return 0;
}

int cmd_encode(const EncodeArgs& args) {
    if (args.run.empty()) throw InvalidValueError("--run is required");
    const fs::path run = args.run;
    const Manifest m = load_run_manifest(run);
    const ModelOptions model = model_from_manifest(m);

    FeatureTensor x;
    std::string label;
    if (!args.input.empty()) {
        x = load_b2f(args.input).x;
        label = fs::path(args.input).stem().string();
    } else {
        DataOptions d = data_from_manifest(m);
        const LoadedData data = load_data(d);
        if (args.set == "query") {
            x = data.query.x;
        } else if (args.set == "train") {
            x = data.train.x;
        } else if (args.set == "all") {
            x = data.all.x;
        } else {
            throw InvalidValueError("--set must be query, train or all");
        }
        label = args.set;
    }
    const fs::path out = args.out.empty() ? run / (label + "_codes.bsdc") : fs::path(args.out);
    const CodeMatrix codes = encode_for_run(run, model, x);
    save_codes(pack_codes(codes), out);
    std::cout << "encoded " << codes.n() << " samples to " << out.string() << '\n';
    return 0;
}

int cmd_eval(const EvalArgs& args) {
    if (args.run.empty()) throw InvalidValueError("--run is required");
    const fs::path run = args.run;
    const Manifest m = load_run_manifest(run);
    const ModelOptions model = model_from_manifest(m);
    DataOptions d = data_from_manifest(m);
    const LoadedData data = load_data(d);

    const fs::path train_codes = run / kTrainCodesName;
    if (!fs::exists(train_codes)) throw Error("missing database codes " + train_codes.string());
    PackedCodes database = load_codes(train_codes);
    LabelMatrix database_labels = data.train.y;
    if (database.n() != database_labels.n()) {
        throw ShapeError("database codes hold " + std::to_string(database.n()) + " samples but the split has " +
                         std::to_string(database_labels.n()));
    }

    const fs::path query_codes = run / "query_codes.bsdc";
    const PackedCodes queries = fs::exists(query_codes) ? load_codes(query_codes)
                                                        : pack_codes(encode_for_run(run, model, data.query.x));
    if (queries.n() != data.query.y.n()) throw ShapeError("query codes do not match the recorded query split");

    RetrievalOptions opts;
    opts.k_grid = args.k_grid.empty() ? default_k_grid() : args.k_grid;
    opts.pr_curve = true;
    opts.workers = resolve_workers(args.workers);
    if (!args.db_index.empty()) {
        const std::vector<Index> perm = parse_indices(read_file(args.db_index));
        std::vector<Index> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        std::vector<Index> expected(static_cast<std::size_t>(database.n()));
        std::iota(expected.begin(), expected.end(), Index{0});
        if (sorted != expected) throw InvalidValueError("--db-index must be a permutation of 0.." +
                                                        std::to_string(database.n() - 1));
        database = database.subset(perm);
        database_labels = database_labels.subset(perm);
        opts.tie_keys = perm;
    }

    const RetrievalReport report = evaluate_retrieval(queries, data.query.y, database, database_labels, opts);
    const fs::path out = args.out.empty() ? run : fs::path(args.out);
    fs::create_directories(out);
    write_file_atomic(out / "metrics.csv", format_metrics_csv(metric_rows(model.method, model.bits, report)));
    write_file_atomic(out / "pr_query.csv", format_pr_csv(report.mean_pr_curve));

    std::printf("%s %ld bits: MAP %.4f over %ld queries", model.method.c_str(), static_cast<long>(model.bits),
                report.map, static_cast<long>(report.valid_queries));
    if (!report.excluded_queries.empty()) {
        std::printf(" (%zu without relevant items excluded)", report.excluded_queries.size());
    }
    std::printf("\n");
    return 0;
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct Cell {
    double lambda;
    double mu;
    Index c1;
    Index c2;
    Index bits;

    std::string key() const {
        return "lambda" + num(lambda) + "_mu" + num(mu) + "_c" + std::to_string(c1) + "x" + std::to_string(c2) +
               "_b" + std::to_string(bits);
    }
};

struct CellResult {
    double map = std::nan("");
    std::string status;
};

std::string sanitize(std::string s) {
    for (char& ch : s) {
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '|') ch = ' ';
    }
    return s;
}

CellResult run_cell(const Cell& cell, const ModelOptions& base, int repeats, const LoadedData& data) {
    CellResult r;
    try {
        ModelOptions o = base;
        o.lambda = cell.lambda;
        o.mu = cell.mu;
        o.c1 = cell.c1;
        o.c2 = cell.c2;
        o.bits = cell.bits;
        validate_model_options(o);
        validate_against_data(o, data.train);
        double total = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            o.seed = repeats == 1 ? base.seed : derive_seed(base.seed, static_cast<std::uint64_t>(rep));
            const Trained t = fit_method(o, data.train);
            CodeMatrix queries;
            if (t.bsdh) {
                queries = encode(data.query.x, t.bsdh->model);
            } else if (o.method == "bpbc") {
                queries = bpbc_encode(data.query.x, bpbc_model(o, data.query.x.d1(), data.query.x.d2()));
            } else {
                queries = lsh_encode(data.query.x, make_lsh(o.bits, data.query.x.d1(), data.query.x.d2(), o.seed));
            }
            total += query_map(queries, data.query.y, t.codes, data.train.y, 1);
        }
        r.map = total / repeats;
        r.status = "ok";
    } catch (const std::exception& e) {
        r.status = "error: " + sanitize(e.what());
    }
    return r;
}

void save_done(const fs::path& path, const std::map<std::string, CellResult>& done) {
    Manifest m;
    for (const auto& [key, r] : done) m.set(key, num(r.map) + "|" + r.status);
    m.save(path);
}

std::map<std::string, CellResult> load_done(const fs::path& path) {
    std::map<std::string, CellResult> done;
    if (!fs::exists(path)) return done;
    const Manifest saved = Manifest::load(path);
    for (const auto& [key, value] : saved.entries()) {
        const auto bar = value.find('|');
        if (bar == std::string::npos) throw FormatError("sweep progress file " + path.string() + ": bad entry", 0);
        CellResult r;
        const std::string map_text = value.substr(0, bar);
        double v = 0.0;
        const auto res = std::from_chars(map_text.data(), map_text.data() + map_text.size(), v);
        r.map = res.ec == std::errc() ? v : std::nan("");
        r.status = value.substr(bar + 1);
        done[key] = r;
    }
    return done;
}

}  // namespace

int cmd_sweep(const SweepArgs& args_in) {
    SweepArgs args = args_in;
    if (args.out.empty()) throw InvalidValueError("--out is required");
    if (args.repeats < 1) throw InvalidValueError("--repeats must be at least 1");
    auto or_default = [](auto grid, auto value) {
        if (grid.empty()) grid.push_back(value);
        return grid;
    };
    const auto lambdas = or_default(args.lambdas, args.model.lambda);
    const auto mus = or_default(args.mus, args.model.mu);
    const auto c1s = or_default(args.c1s, args.model.c1);
    const auto c2s = or_default(args.c2s, args.model.c2);
    const auto bits = or_default(args.bits, args.model.bits);

    std::vector<Cell> cells;
    for (double l : lambdas)
        for (double m : mus)
            for (Index a : c1s)
                for (Index b : c2s)
                    for (Index c : bits) cells.push_back({l, m, a, b, c});

    // Fail fast on settings that are wrong for every cell.
    ModelOptions probe = args.model;
    probe.bits = std::max<Index>(1, probe.bits);
    validate_model_options(probe);

    const LoadedData data = load_data(args.data);
    const fs::path out = args.out;
    fs::create_directories(out);
    const fs::path done_path = out / "sweep_progress.txt";

    Manifest m;
    m.set("command", std::string("sweep"));
    record_data(m, args.data);
    record_model(m, args.model);
    m.set("repeats", static_cast<std::int64_t>(args.repeats));
    m.set("cells", static_cast<std::int64_t>(cells.size()));
    const fs::path manifest_path = out / kManifestName;
    if (fs::exists(manifest_path)) {
        // Resuming is only valid for the same data and base settings.
        const Manifest previous = Manifest::load(manifest_path);
        for (const auto& [k, v] : m.entries()) {
            if (k == "cells") continue;
            if (!previous.has(k) || previous.get(k) != v) {
                throw InvalidValueError("existing sweep in " + out.string() + " was run with " + k + "=" +
                                        (previous.has(k) ? previous.get(k) : std::string("<unset>")) +
                                        "; use a fresh --out directory");
            }
        }
    }
    m.save(manifest_path);

    std::map<std::string, CellResult> done = load_done(done_path);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!done.count(cells[i].key())) todo.push_back(i);
    }
    std::cout << cells.size() << " cells, " << cells.size() - todo.size() << " already done\n";

    std::mutex lock;
    std::atomic<std::size_t> next{0};
    const int workers = std::clamp(resolve_workers(args.workers), 1, static_cast<int>(std::max<std::size_t>(1, todo.size())));
    auto work = [&] {
        for (std::size_t t = next++; t < todo.size(); t = next++) {
            const Cell& cell = cells[todo[t]];
            const CellResult r = run_cell(cell, args.model, args.repeats, data);
            std::lock_guard<std::mutex> guard(lock);
            done[cell.key()] = r;
            save_done(done_path, done);
            std::printf("  %s: %s\n", cell.key().c_str(),
                        r.status == "ok" ? ("MAP " + num(r.map)).c_str() : r.status.c_str());
            std::fflush(stdout);
        }
    };
    {
        std::vector<std::jthread> pool;
        for (int w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }

    std::ostringstream csv;
    csv << "lambda,mu,c1,c2,bits,map,status\n";
    int failures = 0;
    for (const Cell& cell : cells) {
        const CellResult& r = done.at(cell.key());
        if (r.status != "ok") ++failures;
        csv << num(cell.lambda) << ',' << num(cell.mu) << ',' << cell.c1 << ',' << cell.c2 << ',' << cell.bits << ','
            << (r.status == "ok" ? num(r.map) : std::string()) << ',' << r.status << '\n';
    }
    write_file_atomic(out / "sweep.csv", csv.str());
    std::cout << "wrote " << (out / "sweep.csv").string();
    if (failures > 0) std::cout << " (" << failures << " cells failed)";
    std::cout << '\n';
    return 0;
}

}  // namespace bsdh::cli
