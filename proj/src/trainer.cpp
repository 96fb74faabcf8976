#include "bsdh/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bsdh/error.hpp"

namespace bsdh {

namespace {

// Below this reciprocal condition number a normal-equation solve is treated as singular.
constexpr double kSingularRcond = 1e-14;

void require_cols(const Matrix& a, const char* a_name, const Matrix& b, const char* b_name) {
    if (a.cols() != b.cols()) {
        throw ShapeError(std::string(a_name) + " has " + std::to_string(a.cols()) + " columns but " + b_name +
                         " has " + std::to_string(b.cols()));
    }
}

void check_objective_shapes(const Matrix& y, const Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h) {
    require_cols(b, "B", y, "Y");
    require_cols(b, "B", h, "H");
    if (w.rows() != b.rows() || w.cols() != y.rows()) {
        throw ShapeError("W must be " + std::to_string(b.rows()) + "x" + std::to_string(y.rows()) + ", got " +
                         std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    }
    if (u.rows() != b.rows() || u.cols() != h.rows()) {
        throw ShapeError("U must be " + std::to_string(b.rows()) + "x" + std::to_string(h.rows()) + ", got " +
                         std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
    }
}

// One row of the DCC update using G = WW' and T = M' (c x n).
void solve_row(Matrix& b, const Matrix& gram, const Matrix& target, Index row, Eigen::RowVectorXd& z) {
    // v' W_rest' B_rest = G(row, :) B - G(row, row) B(row, :)
    z.noalias() = gram.row(row) * b;
    z -= gram(row, row) * b.row(row);
    z = target.row(row) - z;
    for (Index j = 0; j < z.size(); ++j) z(j) = z(j) >= 0.0 ? 1.0 : -1.0;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidValueError("lambda must be finite and >= 0");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidValueError("mu must be finite and >= 0");
    if (bits < 1) throw InvalidValueError("code length must be at least 1 bit, got " + std::to_string(bits));
    if (max_iterations < 1) throw InvalidValueError("at least one outer iteration required");
    if (!(tol >= 0.0)) throw InvalidValueError("tolerance must be >= 0");
    if (max_sweeps < 1) throw InvalidValueError("at least one DCC sweep required");
    if (!(u_relative_ridge >= 0.0)) throw InvalidValueError("U ridge must be >= 0");
}

double objective_value(const Matrix& y, const Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h,
                       double lambda, double mu) {
    check_objective_shapes(y, b, w, u, h);
    const double fit = (y - w.transpose() * b).squaredNorm();
    const double reg = lambda * w.squaredNorm();
    const double quant = mu * (b - u * h).squaredNorm();
    return fit + reg + quant;
}

double code_objective(const Matrix& y, const Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h,
                      double mu) {
    check_objective_shapes(y, b, w, u, h);
    const Matrix target = w * y + mu * (u * h);
    return (w.transpose() * b).squaredNorm() - 2.0 * b.cwiseProduct(target).sum();
}

Matrix update_w(const Matrix& b, const Matrix& y, double lambda) {
    require_cols(b, "B", y, "Y");
    const Index c = b.rows();
    Matrix system = b * b.transpose();
    system.diagonal().array() += lambda;
    const Eigen::LLT<Matrix> chol(system);
    if (chol.info() != Eigen::Success || chol.rcond() < kSingularRcond) {
        throw NumericalError("update_w: BB' + lambda*I is singular (lambda = " + std::to_string(lambda) +
                             ", c = " + std::to_string(c) + ", n = " + std::to_string(b.cols()) +
                             "); use lambda > 0");
    }
    return chol.solve(b * y.transpose());
}

Matrix update_u(const Matrix& b, const Matrix& h, double relative_ridge) {
    require_cols(b, "B", h, "H");
    const Index dim = h.rows();
    Matrix gram = h * h.transpose();
    const double scale = gram.trace() / static_cast<double>(dim);
    const double eps = relative_ridge * (scale > 0.0 ? scale : 1.0);
    gram.diagonal().array() += eps;
    const Eigen::LLT<Matrix> chol(gram);
    if (chol.info() != Eigen::Success || chol.rcond() < kSingularRcond) {
        throw NumericalError("update_u: HH' + eps*I is singular (eps = " + std::to_string(eps) +
                             ", dim = " + std::to_string(dim) + ", n = " + std::to_string(h.cols()) + ")");
    }
    // (HH' + eps I) U' = H B'
    return chol.solve(h * b.transpose()).transpose();
}

Matrix dcc_linear_term(const Matrix& y, const Matrix& w, const Matrix& u, const Matrix& h, double mu) {
    if (w.cols() != y.rows() || u.cols() != h.rows() || w.rows() != u.rows() || y.cols() != h.cols()) {
        throw ShapeError("dcc_linear_term: inconsistent shapes");
    }
    return y.transpose() * w.transpose() + mu * (h.transpose() * u.transpose());
}

Eigen::RowVectorXd update_b_row(const Matrix& b, const Matrix& w, const Matrix& m, Index row) {
    if (row < 0 || row >= b.rows()) {
        throw ShapeError("update_b_row: row " + std::to_string(row) + " outside [0, " + std::to_string(b.rows()) +
                         ")");
    }
    if (w.rows() != b.rows() || m.rows() != b.cols() || m.cols() != b.rows()) {
        throw ShapeError("update_b_row: inconsistent shapes");
    }
    Matrix work = b;
    const Matrix gram = w * w.transpose();
    const Matrix target = m.transpose();
    Eigen::RowVectorXd z(b.cols());
    solve_row(work, gram, target, row, z);
    return z;
}

DccResult update_b(Matrix& b, const Matrix& w, const Matrix& u, const Matrix& h, const Matrix& y, double mu,
                   int max_sweeps, const std::function<void(Index row)>& on_row) {
    check_objective_shapes(y, b, w, u, h);
    const Matrix gram = w * w.transpose();
    const Matrix target = w * y + mu * (u * h);  // M'
    DccResult result;
    Eigen::RowVectorXd z(b.cols());
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        ++result.sweeps;
        Index flipped = 0;
        for (Index row = 0; row < b.rows(); ++row) {
            solve_row(b, gram, target, row, z);
            flipped += (b.row(row).array() != z.array()).count();
            b.row(row) = z;
            if (on_row) on_row(row);
        }
        result.flipped_bits += flipped;
        if (flipped == 0) break;
    }
    return result;
}

Matrix random_codes(Index bits, Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix b(bits, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < bits; ++i) b(i, j) = (rng() >> 63) ? 1.0 : -1.0;
    }
    return b;
}

TrainResult train(const FeatureTensor& x, const LabelMatrix& labels, const TrainConfig& config,
                  const BilinearFitOptions& projection, const TrainObserver& observer) {
    config.validate();
    if (config.lambda == 0.0 && config.bits > x.n()) {
        throw InvalidValueError("lambda must be > 0 when the code length exceeds the sample count");
    }

    TrainResult result;
    result.bilinear = fit_bilinear(x, labels, projection);
    const Matrix& q1 = result.bilinear.q1;
    const Matrix& q2 = result.bilinear.q2;

    Matrix h = project_features(x, q1, q2);
    Vector feature_mean = Vector::Zero(h.rows());
    if (config.center_features) {
        feature_mean = h.rowwise().mean();
        h.colwise() -= feature_mean;
    }

    const Matrix& y = labels.dense();
    Matrix b = random_codes(config.bits, x.n(), config.seed);
    Matrix w = Matrix::Zero(config.bits, y.rows());
    Matrix u = Matrix::Zero(config.bits, h.rows());

    auto notify = [&](TrainStep step, int iteration, Index row) {
        if (observer) observer(TrainProgress{step, iteration, row, b, w, u, h});
    };

    std::vector<double> trace;
    double previous = objective_value(y, b, w, u, h, config.lambda, config.mu);
    result.initial_objective = previous;
    for (int it = 1; it <= config.max_iterations; ++it) {
        w = update_w(b, y, config.lambda);
        notify(TrainStep::UpdateW, it, -1);
        u = update_u(b, h, config.u_relative_ridge);
        notify(TrainStep::UpdateU, it, -1);
        update_b(b, w, u, h, y, config.mu, config.max_sweeps,
                 [&](Index row) { notify(TrainStep::UpdateBRow, it, row); });

        const double current = objective_value(y, b, w, u, h, config.lambda, config.mu);
        if (!std::isfinite(current)) {
            throw NumericalError("train: objective became non-finite at iteration " + std::to_string(it) +
                                 " (previous value " + std::to_string(previous) + ")");
        }
        trace.push_back(current);
        result.iterations = it;
        const double change = std::abs(previous - current);
        if (change <= config.tol * std::abs(previous) || (previous == 0.0 && current == 0.0)) {
            result.converged = true;
            break;
        }
        previous = current;
    }

    BilinearModel& model = result.model;
    model.q1 = q1;
    model.q2 = q2;
    model.u = u;
    model.w = w;
    model.feature_mean = feature_mean;
    model.hyper = HyperParams{config.lambda, config.mu,     q1.cols(),      q2.cols(),
                              config.bits,   projection.rounds, config.max_iterations, config.tol,
                              config.seed,   config.center_features};
    model.objective_trace = std::move(trace);
    result.codes = CodeMatrix(b);
    result.h = std::move(h);
    return result;
}

}  // namespace bsdh
