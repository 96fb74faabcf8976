#pragma once

// Discrete alternating optimization of
//
//   min_{B,W,U}  ||Y - W'B||^2 + lambda ||W||^2 + mu ||B - U H||^2,  B in {-1,+1}^{c x n}
//
// W and U have closed forms; B is updated one row (one bit across all
// samples) at a time, each row being the exact minimizer with the others
// fixed.

#include <cstdint>
#include <functional>
#include <vector>

#include "bsdh/bilinear.hpp"
#include "bsdh/types.hpp"

namespace bsdh {

struct TrainConfig {
    double lambda = 1e-5;
    double mu = 1e-1;
    Index bits = 32;
    int max_iterations = 10;  // t2
    double tol = 1e-5;        // relative objective change
    std::uint64_t seed = 0;
    int max_sweeps = 3;       // DCC sweeps per outer iteration
    double u_relative_ridge = 1e-8;
    bool center_features = false;

    void validate() const;
};

// Full objective. B, W, U, H are c x n, c x l, c x (c1*c2), (c1*c2) x n.
double objective_value(const Matrix& y, const Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h,
                       double lambda, double mu);

// The part of the objective that depends on B once tr(B'B) = cn is dropped:
// ||W'B||^2 - 2 tr(B'WY) - 2 mu tr(H'U'B).
double code_objective(const Matrix& y, const Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h,
                      double mu);

// W = (BB' + lambda I)^-1 B Y'. Throws NumericalError if the system is singular.
Matrix update_w(const Matrix& b, const Matrix& y, double lambda);

// U = B H' (HH' + eps I)^-1 with eps = relative_ridge * trace(HH') / dim.
Matrix update_u(const Matrix& b, const Matrix& h, double relative_ridge = 1e-8);

// M = Y'W' + mu H'U' (n x c): column r is the linear coefficient of code row r.
Matrix dcc_linear_term(const Matrix& y, const Matrix& w, const Matrix& u, const Matrix& h, double mu);

// Optimal code row r given every other row:
// z = sign(m' - v' W_rest' B_rest), v' = row r of W, m = column r of M.
Eigen::RowVectorXd update_b_row(const Matrix& b, const Matrix& w, const Matrix& m, Index row);

struct DccResult {
    int sweeps = 0;
    Index flipped_bits = 0;
};

// Cyclic row sweeps (rows 0..c-1) until a sweep changes nothing or max_sweeps
// is reached. b is updated in place and stays exactly +-1 throughout.
// on_row, if set, runs after every row update.
DccResult update_b(Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h, const Matrix& y, double mu,
                   int max_sweeps, const std::function<void(Index row)>& on_row = {});

enum class TrainStep { UpdateW, UpdateU, UpdateBRow };

struct TrainProgress {
    TrainStep step;
    int iteration;  // 1-based outer iteration
    Index row;      // for UpdateBRow
    const Matrix& b;
    const Matrix& w;
    const Matrix& u;
    const Matrix& h;
};

using TrainObserver = std::function<void(const TrainProgress&)>;

struct TrainResult {
    BilinearModel model;
    CodeMatrix codes;
    Matrix h;  // projected (and centred, if configured) training features
    BilinearFit bilinear;
    double initial_objective = 0.0;  // W = 0, U = 0, random B
    int iterations = 0;
    bool converged = false;
};

// Seeded uniform {-1,+1} initial codes.
Matrix random_codes(Index bits, Index n, std::uint64_t seed);

TrainResult train(const FeatureTensor& x, const LabelMatrix& y, const TrainConfig& config,
                  const BilinearFitOptions& projection, const TrainObserver& observer = {});

}  // namespace bsdh
