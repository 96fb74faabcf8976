#include "bsdh/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bsdh/error.hpp"

namespace bsdh {

namespace {

constexpr double kCanonicalZero = 1e-12;

void check_pair(const FeatureTensor& x, const LabelMatrix& y) {
    if (x.n() != y.n()) {
        throw ShapeError("feature tensor has " + std::to_string(x.n()) + " samples but label matrix has " +
                         std::to_string(y.n()));
    }
}

void check_stats(const ClassStatistics& stats, const FeatureTensor& x, const LabelMatrix& y) {
    check_pair(x, y);
    if (static_cast<Index>(stats.class_means.size()) != y.l() || stats.global_mean.rows() != x.d1() ||
        stats.global_mean.cols() != x.d2()) {
        throw ShapeError("class statistics do not match the dataset");
    }
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Flip v so its first entry with |.| > kCanonicalZero is positive.
void canonicalize_sign(Eigen::Ref<Vector> v) {
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > kCanonicalZero) {
            if (v(i) < 0) v = -v;
            return;
        }
    }
}

bool lexicographically_greater(const Vector& a, const Vector& b) {
    for (Index i = 0; i < a.size(); ++i) {
        if (a(i) != b(i)) return a(i) > b(i);
    }
    return false;
}

// Shared body of the two scatter builders. `side` maps a centred sample D to
// the factor F with F F' being its scatter contribution.
template <typename SideFn>
ScatterPair accumulate_scatter(const ClassStatistics& stats, const FeatureTensor& x, const LabelMatrix& y,
                               Index dim, SideFn side) {
    Matrix sb = Matrix::Zero(dim, dim);
    Matrix sw = Matrix::Zero(dim, dim);
    const Matrix& labels = y.dense();
    for (Index c = 0; c < y.l(); ++c) {
        const Index count = stats.class_counts[static_cast<std::size_t>(c)];
        if (count == 0) continue;
        const Matrix& mean = stats.class_means[static_cast<std::size_t>(c)];
        const Matrix fb = side(mean - stats.global_mean);
        sb.selfadjointView<Eigen::Lower>().rankUpdate(fb, static_cast<double>(count));
        for (Index j = 0; j < x.n(); ++j) {
            if (labels(c, j) == 0.0) continue;
            const Matrix fw = side(x.sample(j) - mean);
            sw.selfadjointView<Eigen::Lower>().rankUpdate(fw);
        }
    }
    sb = sb.selfadjointView<Eigen::Lower>();
    sw = sw.selfadjointView<Eigen::Lower>();
    return {std::move(sb), std::move(sw)};
}

}  // namespace

ClassStatistics compute_class_statistics(const FeatureTensor& x, const LabelMatrix& y) {
    check_pair(x, y);
    ClassStatistics stats;
    const Index l = y.l();
    stats.class_counts.assign(static_cast<std::size_t>(l), 0);
    stats.class_means.assign(static_cast<std::size_t>(l), Matrix::Zero(x.d1(), x.d2()));
    stats.global_mean = Matrix::Zero(x.d1(), x.d2());

    const Matrix& labels = y.dense();
    for (Index j = 0; j < x.n(); ++j) {
        const auto sample = x.sample(j);
        stats.global_mean += sample;
        for (Index c = 0; c < l; ++c) {
            if (labels(c, j) != 0.0) {
                stats.class_means[static_cast<std::size_t>(c)] += sample;
                ++stats.class_counts[static_cast<std::size_t>(c)];
            }
        }
    }
    stats.global_mean /= static_cast<double>(x.n());
    for (Index c = 0; c < l; ++c) {
        const auto k = static_cast<std::size_t>(c);
        if (stats.class_counts[k] == 0) {
            stats.empty_classes.push_back(c);
        } else {
            stats.class_means[k] /= static_cast<double>(stats.class_counts[k]);
        }
    }
    return stats;
}

ScatterPair scatter_for_q1(const ClassStatistics& stats, const FeatureTensor& x, const LabelMatrix& y,
                           const Matrix& q2) {
    check_stats(stats, x, y);
    if (q2.rows() != x.d2()) {
        throw ShapeError("scatter_for_q1: Q2 has " + std::to_string(q2.rows()) + " rows, expected d2 = " +
                         std::to_string(x.d2()));
    }
    return accumulate_scatter(stats, x, y, x.d1(), [&](const Matrix& d) -> Matrix { return d * q2; });
}

ScatterPair scatter_for_q2(const ClassStatistics& stats, const FeatureTensor& x, const LabelMatrix& y,
                           const Matrix& q1) {
    check_stats(stats, x, y);
    if (q1.rows() != x.d1()) {
        throw ShapeError("scatter_for_q2: Q1 has " + std::to_string(q1.rows()) + " rows, expected d1 = " +
                         std::to_string(x.d1()));
    }
    return accumulate_scatter(stats, x, y, x.d2(),
                              [&](const Matrix& d) -> Matrix { return d.transpose() * q1; });
}

DiscriminantDirections top_discriminant_directions(const ScatterPair& scatter, Index k, double eps) {
    const Index dim = scatter.between.rows();
    if (scatter.between.cols() != dim || scatter.within.rows() != dim || scatter.within.cols() != dim) {
        throw ShapeError("top_discriminant_directions: scatter matrices must be square and of equal size");
    }
    if (k < 1 || k > dim) {
        throw ShapeError("top_discriminant_directions: requested " + std::to_string(k) +
                         " directions from a " + std::to_string(dim) + "-dimensional problem");
    }
    if (!(eps >= 0.0) || !std::isfinite(eps)) {
        throw InvalidValueError("top_discriminant_directions: ridge must be finite and >= 0");
    }

    const Matrix metric = symmetrized(scatter.within) + eps * Matrix::Identity(dim, dim);
    const Eigen::LLT<Matrix> chol(metric);
    if (chol.info() != Eigen::Success) {
        throw NumericalError("top_discriminant_directions: Sw + eps*I is not positive definite (eps = " +
                             std::to_string(eps) + ", trace(Sw) = " +
                             std::to_string(scatter.within.trace()) +
                             ", min diag = " + std::to_string(metric.diagonal().minCoeff()) + ")");
    }
    const auto lower = chol.matrixL();
    // C = L^-1 Sb L^-T
    const Matrix half = lower.solve(symmetrized(scatter.between));
    const Matrix reduced = symmetrized(lower.solve(half.transpose()));

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("top_discriminant_directions: symmetric eigensolver did not converge (dim = " +
                             std::to_string(dim) + ", rcond(Sw + eps*I) = " + std::to_string(chol.rcond()) +
                             ")");
    }

    Matrix vectors = chol.matrixU().solve(eig.eigenvectors());
    const Vector& values = eig.eigenvalues();
    for (Index j = 0; j < dim; ++j) canonicalize_sign(vectors.col(j));

    std::vector<Index> order(static_cast<std::size_t>(dim));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) > values(b); });

    // Within runs of numerically equal eigenvalues, order by canonical form.
    const double tie_tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start + 1;
        while (end < order.size() && values(order[start]) - values(order[end]) <= tie_tol) ++end;
        std::sort(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end),
                  [&](Index a, Index b) {
                      return lexicographically_greater(vectors.col(a), vectors.col(b));
                  });
        start = end;
    }

    DiscriminantDirections out{Matrix(dim, k), Vector(k)};
    for (Index j = 0; j < k; ++j) {
        out.directions.col(j) = vectors.col(order[static_cast<std::size_t>(j)]);
        out.eigenvalues(j) = values(order[static_cast<std::size_t>(j)]);
    }
    return out;
}

double within_scatter_ridge(const Matrix& within, double relative_ridge) {
    const double scale = within.trace() / static_cast<double>(within.rows());
    return scale > 0.0 ? relative_ridge * scale : relative_ridge;
}

double trace_ratio(const ScatterPair& scatter, const Matrix& q) {
    const double num = (q.transpose() * scatter.between * q).trace();
    const double den = (q.transpose() * scatter.within * q).trace();
    if (den <= 0.0) return std::numeric_limits<double>::infinity();
    return num / den;
}

BilinearFit fit_bilinear(const FeatureTensor& x, const LabelMatrix& y, const BilinearFitOptions& opts) {
    check_pair(x, y);
    if (opts.c1 < 1 || opts.c1 > x.d1() || opts.c2 < 1 || opts.c2 > x.d2()) {
        throw ShapeError("fit_bilinear: transition sizes (" + std::to_string(opts.c1) + ", " +
                         std::to_string(opts.c2) + ") must lie within the input size (" +
                         std::to_string(x.d1()) + ", " + std::to_string(x.d2()) + ")");
    }
    if (opts.rounds < 1) throw InvalidValueError("fit_bilinear: at least one round required");
    if (!(opts.relative_ridge > 0.0)) throw InvalidValueError("fit_bilinear: relative ridge must be > 0");

    const ClassStatistics stats = compute_class_statistics(x, y);

    BilinearFit fit;
    fit.empty_classes = stats.empty_classes;
    fit.q2 = Matrix::Identity(x.d2(), opts.c2);
    for (int round = 0; round < opts.rounds; ++round) {
        const ScatterPair s1 = scatter_for_q1(stats, x, y, fit.q2);
        const double eps1 = within_scatter_ridge(s1.within, opts.relative_ridge);
        fit.q1 = top_discriminant_directions(s1, opts.c1, eps1).directions;
        fit.q1_metric = s1.within + eps1 * Matrix::Identity(x.d1(), x.d1());

        const ScatterPair s2 = scatter_for_q2(stats, x, y, fit.q1);
        const double eps2 = within_scatter_ridge(s2.within, opts.relative_ridge);
        fit.q2 = top_discriminant_directions(s2, opts.c2, eps2).directions;
        fit.q2_metric = s2.within + eps2 * Matrix::Identity(x.d2(), x.d2());

        fit.trace_ratios.push_back(trace_ratio(s2, fit.q2));
        fit.rounds_run = round + 1;

        if (opts.early_stop_tol > 0.0 && fit.trace_ratios.size() >= 2) {
            const double prev = fit.trace_ratios[fit.trace_ratios.size() - 2];
            const double cur = fit.trace_ratios.back();
            if (std::isfinite(prev) && std::abs(cur - prev) <= opts.early_stop_tol * std::abs(prev)) break;
        }
    }
    return fit;
}

Matrix project_features(const FeatureTensor& x, const Matrix& q1, const Matrix& q2) {
    if (q1.rows() != x.d1() || q2.rows() != x.d2()) {
        throw ShapeError("project_features: projections are " + std::to_string(q1.rows()) + "x" +
                         std::to_string(q1.cols()) + " and " + std::to_string(q2.rows()) + "x" +
                         std::to_string(q2.cols()) + " but samples are " + std::to_string(x.d1()) + "x" +
                         std::to_string(x.d2()));
    }
    const Index c1 = q1.cols();
    const Index c2 = q2.cols();
    Matrix h(c1 * c2, x.n());
    const Matrix q1t = q1.transpose();
    Matrix projected(c1, c2);
    for (Index i = 0; i < x.n(); ++i) {
        projected.noalias() = q1t * x.sample(i) * q2;
        h.col(i) = Eigen::Map<const Vector>(projected.data(), c1 * c2);
    }
    return h;
}

}  // namespace bsdh
