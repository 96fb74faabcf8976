#pragma once

// Bilinear discriminant projection.
//
// For a fixed right projection Q2 the between/within-class scatter of the
// projected samples Q1' X Q2 reduces to
//
//   Sb = sum_i a_i (M_i - M_0) Q2 Q2' (M_i - M_0)'
//   Sw = sum_i sum_{X_j in class i} (X_j - M_i) Q2 Q2' (X_j - M_i)'
//
// and Q1 is taken as the top generalized eigenvectors of Sb q = v (Sw + eps I) q.
// The roles of the two sides swap for Q2. fit_bilinear alternates the two
// solves starting from Q2 = I[:, :c2].

#include <string>
#include <vector>

#include "bsdh/types.hpp"

namespace bsdh {

struct ClassStatistics {
    std::vector<Matrix> class_means;  // l matrices, d1 x d2 (zero for empty classes)
    Matrix global_mean;               // d1 x d2
    std::vector<Index> class_counts;  // a_i
    std::vector<Index> empty_classes; // excluded from scatter sums
};

// Multi-label samples contribute to every class they carry.
ClassStatistics compute_class_statistics(const FeatureTensor& x, const LabelMatrix& y);

struct ScatterPair {
    Matrix between;  // Sb
    Matrix within;   // Sw
};

// d1 x d1 scatter for solving Q1 given Q2 (d2 x c2).
ScatterPair scatter_for_q1(const ClassStatistics& stats, const FeatureTensor& x,
                           const LabelMatrix& y, const Matrix& q2);

// d2 x d2 scatter for solving Q2 given Q1 (d1 x c1).
ScatterPair scatter_for_q2(const ClassStatistics& stats, const FeatureTensor& x,
                           const LabelMatrix& y, const Matrix& q1);

struct DiscriminantDirections {
    Matrix directions;   // dim x k, orthonormal under (Sw + eps I)
    Vector eigenvalues;  // k, descending
};

// Top-k solutions of Sb q = v (Sw + eps I) q via Cholesky of Sw + eps I and a
// symmetric eigensolve. Each direction's first component with |.| > 1e-12 is
// positive; equal eigenvalues are ordered by that canonical form.
DiscriminantDirections top_discriminant_directions(const ScatterPair& scatter, Index k, double eps);

// eps = relative_ridge * trace(Sw) / dim, or relative_ridge itself when Sw is zero.
double within_scatter_ridge(const Matrix& within, double relative_ridge);

// tr(Q' Sb Q) / tr(Q' Sw Q); +inf when the denominator vanishes.
double trace_ratio(const ScatterPair& scatter, const Matrix& q);

struct BilinearFitOptions {
    Index c1 = 0;
    Index c2 = 0;
    int rounds = 5;  // t1
    double relative_ridge = 1e-6;
    double early_stop_tol = 1e-5;  // on the trace ratio; <= 0 disables
};

struct BilinearFit {
    Matrix q1;
    Matrix q2;
    std::vector<double> trace_ratios;  // after each round
    int rounds_run = 0;
    // The regularized within-class metrics of the final Q1 and Q2 solves.
    Matrix q1_metric;
    Matrix q2_metric;
    std::vector<Index> empty_classes;
};

BilinearFit fit_bilinear(const FeatureTensor& x, const LabelMatrix& y, const BilinearFitOptions& opts);

// (c1*c2) x n matrix whose column i is vec(Q1' X_i Q2).
Matrix project_features(const FeatureTensor& x, const Matrix& q1, const Matrix& q2);

}  // namespace bsdh
