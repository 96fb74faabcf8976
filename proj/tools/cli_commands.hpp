#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bsdh/types.hpp"

namespace bsdh::cli {

struct DataOptions {
    std::string data = "mnist";  // "mnist" or a .b2f path
    std::string mnist_dir = "data/mnist5k";
    bool raw_pixels = false;
    Index train_size = 0;  // 0: 2000 for MNIST, 80% for B2F
    Index query_size = 0;  // 0: 400 for MNIST, 20% for B2F
    std::uint64_t split_seed = 0;
};

struct ModelOptions {
    std::string method = "bsdh";
    Index bits = 32;
    Index c1 = 14;
    Index c2 = 14;
    double lambda = 1e-5;
    double mu = 1e-1;
    int t1 = 5;
    int t2 = 10;
    double tol = 1e-5;
    int max_sweeps = 3;
    bool center = false;
    std::uint64_t seed = 0;
};

struct SynthArgs {
    Index n = 1000;
    Index d1 = 8;
    Index d2 = 8;
    Index labels = 4;
    Index labels_per_sample = 1;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainArgs {
    DataOptions data;
    ModelOptions model;
    std::string out;
};

struct EncodeArgs {
    std::string run;
    std::string set = "query";  // query | train | all
    std::string input;          // optional .b2f to encode instead of a recorded split
    std::string out;            // default <run>/<set>_codes.bsdc
};

struct EvalArgs {
    std::string run;
    std::vector<Index> k_grid;
    std::string db_index;  // optional permutation of the database
    std::string out;       // default <run>
    int workers = 0;
};

struct SweepArgs {
    DataOptions data;
    ModelOptions model;
    std::vector<double> lambdas;
    std::vector<double> mus;
    std::vector<Index> c1s;
    std::vector<Index> c2s;
    std::vector<Index> bits;
    int repeats = 1;
    int workers = 0;
    std::string out;
};

// Each returns the process exit code; errors propagate as exceptions.
int cmd_synth(const SynthArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_encode(const EncodeArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_sweep(const SweepArgs& args);

// Worker count from BSDH_WORKERS, else `fallback`, else hardware concurrency.
int resolve_workers(int fallback);

}  // namespace bsdh::cli
