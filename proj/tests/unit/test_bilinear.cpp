#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>
#include <random>

#include "bsdh/bilinear.hpp"
#include "bsdh/error.hpp"
#include "bsdh/io.hpp"
#include "support/oracles.hpp"

using namespace bsdh;

namespace {

Dataset small_data(std::uint64_t seed, Index n = 60, Index d1 = 6, Index d2 = 5, Index labels = 3,
                   Index per_sample = 1, double noise = 0.3) {
    SynthOptions o;
    o.n = n;
    o.d1 = d1;
    o.d2 = d2;
    o.labels = labels;
    o.labels_per_sample = per_sample;
    o.noise = noise;
    o.seed = seed;
    return synth_multilabel(o);
}

}  // namespace

TEST_CASE("class statistics match naive loops, including multi-label samples") {
    for (Index per : {1, 2}) {
        const Dataset d = small_data(3 + static_cast<std::uint64_t>(per), 40, 4, 3, 4, per);
        const ClassStatistics st = compute_class_statistics(d.x, d.y);
        const oracle::NaiveStats naive = oracle::naive_class_statistics(d.x, d.y);
        for (Index k = 0; k < d.y.l(); ++k) {
            CHECK(st.class_counts[static_cast<std::size_t>(k)] == naive.counts[static_cast<std::size_t>(k)]);
            for (Index r = 0; r < 4; ++r)
                for (Index c = 0; c < 3; ++c)
                    CHECK(st.class_means[static_cast<std::size_t>(k)](r, c) ==
                          doctest::Approx(naive.class_means[static_cast<std::size_t>(k)][r][c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("scatter matrices match the entrywise definition") {
    std::mt19937_64 rng(17);
    for (Index per : {1, 2}) {
        const Dataset d = small_data(21 + static_cast<std::uint64_t>(per), 30, 5, 4, 3, per);
        const ClassStatistics st = compute_class_statistics(d.x, d.y);
        const Matrix q2 = oracle::random_matrix(4, 2, rng);
        const Matrix q1 = oracle::random_matrix(5, 3, rng);

        const ScatterPair s1 = scatter_for_q1(st, d.x, d.y, q2);
        const auto [sb1, sw1] = oracle::naive_scatter(d.x, d.y, q2, false);
        CHECK((s1.between - sb1).norm() <= 1e-10 * (1.0 + sb1.norm()));
        CHECK((s1.within - sw1).norm() <= 1e-10 * (1.0 + sw1.norm()));

        const ScatterPair s2 = scatter_for_q2(st, d.x, d.y, q1);
        const auto [sb2, sw2] = oracle::naive_scatter(d.x, d.y, q1, true);
        CHECK((s2.between - sb2).norm() <= 1e-10 * (1.0 + sb2.norm()));
        CHECK((s2.within - sw2).norm() <= 1e-10 * (1.0 + sw2.norm()));
    }
}

TEST_CASE("empty classes are skipped") {
    Dataset d = small_data(5, 30, 4, 4, 3);
    Matrix y = Matrix::Zero(4, d.y.n());
    y.topRows(3) = d.y.dense();
    const LabelMatrix padded(y);
    const ClassStatistics st = compute_class_statistics(d.x, padded);
    REQUIRE(st.empty_classes.size() == 1);
    CHECK(st.empty_classes[0] == 3);
    const ScatterPair a = scatter_for_q1(st, d.x, padded, Matrix::Identity(4, 4));
    const ScatterPair b = scatter_for_q1(compute_class_statistics(d.x, d.y), d.x, d.y, Matrix::Identity(4, 4));
    CHECK((a.between - b.between).norm() <= 1e-12);
}

TEST_CASE("discriminant directions solve the generalized eigenproblem") {
    std::mt19937_64 rng(23);
    for (Index dim : {3, 6, 10}) {
        ScatterPair s;
        const Matrix a = oracle::random_matrix(dim, 2, rng);
        s.between = a * a.transpose();
        s.within = oracle::random_spd(dim, rng);
        const double eps = within_scatter_ridge(s.within, 1e-6);
        const Matrix metric = s.within + eps * Matrix::Identity(dim, dim);
        const DiscriminantDirections dd = top_discriminant_directions(s, dim, eps);

        for (Index i = 0; i < dim; ++i) {
            const Vector q = dd.directions.col(i);
            CHECK((s.between * q - dd.eigenvalues(i) * metric * q).norm() <= 1e-9 * (1.0 + s.between.norm()));
            if (i > 0) CHECK(dd.eigenvalues(i) <= dd.eigenvalues(i - 1) + 1e-12);
        }
        const Matrix gram = dd.directions.transpose() * metric * dd.directions;
        CHECK((gram - Matrix::Identity(dim, dim)).norm() <= 1e-9);

        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ref(s.between, metric);
        Vector expected = ref.eigenvalues().reverse();
        CHECK((dd.eigenvalues - expected).norm() <= 1e-9 * (1.0 + expected.norm()));
    }
}

TEST_CASE("direction signs are canonical") {
    std::mt19937_64 rng(29);
    ScatterPair s;
    const Matrix a = oracle::random_matrix(5, 5, rng);
    s.between = a * a.transpose();
    s.within = Matrix::Identity(5, 5);
    const DiscriminantDirections dd = top_discriminant_directions(s, 5, 0.0);
    for (Index i = 0; i < 5; ++i) {
        Index first = 0;
        while (std::abs(dd.directions(first, i)) <= 1e-12) ++first;
        CHECK(dd.directions(first, i) > 0.0);
    }
    // repeated solves agree bit for bit
    const DiscriminantDirections again = top_discriminant_directions(s, 5, 0.0);
    CHECK((again.directions - dd.directions).norm() == 0.0);
}

TEST_CASE("degenerate eigenvalues are ordered deterministically") {
    ScatterPair s;
    s.between = Matrix::Identity(4, 4);
    s.within = Matrix::Identity(4, 4);
    const DiscriminantDirections dd = top_discriminant_directions(s, 4, 0.0);
    CHECK((dd.directions.transpose() * dd.directions - Matrix::Identity(4, 4)).norm() <= 1e-12);
    for (Index i = 0; i < 4; ++i) CHECK(dd.eigenvalues(i) == doctest::Approx(1.0));
    const DiscriminantDirections again = top_discriminant_directions(s, 4, 0.0);
    CHECK(again.directions == dd.directions);
}

TEST_CASE("singular within-class scatter without ridge is reported") {
    ScatterPair s;
    s.between = Matrix::Identity(3, 3);
    s.within = Matrix::Zero(3, 3);
    CHECK_THROWS_AS(top_discriminant_directions(s, 2, 0.0), NumericalError);
    CHECK_NOTHROW(top_discriminant_directions(s, 2, within_scatter_ridge(s.within, 1e-6)));
    CHECK_THROWS_AS(top_discriminant_directions(s, 4, 1.0), ShapeError);
    CHECK_THROWS_AS(top_discriminant_directions(s, 2, -1.0), InvalidValueError);
}

TEST_CASE("ridge scales with the trace") {
    const Matrix w = 4.0 * Matrix::Identity(3, 3);
    CHECK(within_scatter_ridge(w, 1e-6) == doctest::Approx(4e-6));
    CHECK(within_scatter_ridge(Matrix::Zero(3, 3), 1e-6) == doctest::Approx(1e-6));
}

TEST_CASE("fit_bilinear produces well-shaped projections and a discriminative subspace") {
    const Dataset d = small_data(31, 90, 6, 5, 3, 1, 0.2);
    BilinearFitOptions o;
    o.c1 = 3;
    o.c2 = 2;
    const BilinearFit fit = fit_bilinear(d.x, d.y, o);
    CHECK(fit.q1.rows() == 6);
    CHECK(fit.q1.cols() == 3);
    CHECK(fit.q2.rows() == 5);
    CHECK(fit.q2.cols() == 2);
    CHECK(fit.rounds_run >= 1);
    CHECK(fit.rounds_run <= 5);
    CHECK(static_cast<int>(fit.trace_ratios.size()) == fit.rounds_run);
    for (double r : fit.trace_ratios) CHECK(std::isfinite(r));

    // orthonormal under the regularized within-class metrics
    const Matrix g1 = fit.q1.transpose() * fit.q1_metric * fit.q1;
    const Matrix g2 = fit.q2.transpose() * fit.q2_metric * fit.q2;
    CHECK((g1 - Matrix::Identity(3, 3)).norm() <= 1e-8);
    CHECK((g2 - Matrix::Identity(2, 2)).norm() <= 1e-8);

    const Matrix h = project_features(d.x, fit.q1, fit.q2);
    CHECK(h.rows() == 6);
    CHECK(h.cols() == 90);
    const Matrix direct = fit.q1.transpose() * Matrix(d.x.sample(7)) * fit.q2;
    CHECK((h.col(7) - vectorize(direct)).norm() <= 1e-12);

    // with full-size Q1 the projected between-class energy dominates the within-class energy
    BilinearFitOptions full = o;
    full.c1 = 6;
    full.c2 = 5;
    const BilinearFit ff = fit_bilinear(d.x, d.y, full);
    const ClassStatistics st = compute_class_statistics(d.x, d.y);
    const ScatterPair s = scatter_for_q1(st, d.x, d.y, ff.q2);
    CHECK(trace_ratio(s, ff.q1) >= 1.0);
}

TEST_CASE("fit_bilinear is deterministic and validates options") {
    const Dataset d = small_data(37);
    BilinearFitOptions o;
    o.c1 = 2;
    o.c2 = 2;
    const BilinearFit a = fit_bilinear(d.x, d.y, o);
    const BilinearFit b = fit_bilinear(d.x, d.y, o);
    CHECK(a.q1 == b.q1);
    CHECK(a.q2 == b.q2);

    o.c1 = 7;
    CHECK_THROWS_AS(fit_bilinear(d.x, d.y, o), ShapeError);
    o.c1 = 0;
    CHECK_THROWS_AS(fit_bilinear(d.x, d.y, o), ShapeError);
    o.c1 = 2;
    o.rounds = 0;
    CHECK_THROWS_AS(fit_bilinear(d.x, d.y, o), InvalidValueError);
}

TEST_CASE("trace ratio of a zero within-class scatter is infinite") {
    ScatterPair s;
    s.between = Matrix::Identity(2, 2);
    s.within = Matrix::Zero(2, 2);
    CHECK(std::isinf(trace_ratio(s, Matrix::Identity(2, 1))));
}

TEST_CASE("class means of tiny hand-made sets") {
    std::vector<Matrix> samples = {Matrix::Constant(1, 1, 0.0), Matrix::Constant(1, 1, 2.0)};
    const LabelMatrix one = LabelMatrix::from_class_ids(std::vector<int>{0, 0}, 1);
    const ClassStatistics st = compute_class_statistics(FeatureTensor(samples), one);
    CHECK(st.class_means[0](0, 0) == 1.0);
    CHECK(st.global_mean(0, 0) == 1.0);

    // one sample per class: the means are the samples, no within-class scatter
    std::mt19937_64 rng(4);
    const FeatureTensor x(3, 2, oracle::random_matrix(6, 3, rng));
    const LabelMatrix each = LabelMatrix::from_class_ids(std::vector<int>{0, 1, 2}, 3);
    const ClassStatistics s3 = compute_class_statistics(x, each);
    for (Index k = 0; k < 3; ++k) CHECK(s3.class_means[static_cast<std::size_t>(k)] == Matrix(x.sample(k)));
    CHECK(scatter_for_q1(s3, x, each, Matrix::Identity(2, 2)).within.norm() == 0.0);
}

TEST_CASE("single class and identical samples give zero scatter") {
    const Dataset d = small_data(8, 20, 4, 3, 1);
    const ClassStatistics st = compute_class_statistics(d.x, d.y);
    CHECK(scatter_for_q1(st, d.x, d.y, Matrix::Identity(3, 3)).between.norm() <= 1e-12);
    CHECK(scatter_for_q2(st, d.x, d.y, Matrix::Identity(4, 4)).between.norm() <= 1e-12);

    std::mt19937_64 rng(6);
    const Matrix one = oracle::random_matrix(12, 1, rng);
    const FeatureTensor same(4, 3, one.replicate(1, 6));
    const LabelMatrix y = LabelMatrix::from_class_ids(std::vector<int>{0, 1, 0, 1, 0, 1}, 2);
    const ClassStatistics s2 = compute_class_statistics(same, y);
    CHECK(scatter_for_q1(s2, same, y, Matrix::Identity(3, 3)).within.norm() <= 1e-12);
    CHECK(scatter_for_q2(s2, same, y, Matrix::Identity(4, 4)).within.norm() <= 1e-12);
}

TEST_CASE("scatter for Q2 equals scatter for Q1 on transposed samples") {
    const Dataset d = small_data(12, 24, 4, 4, 3);
    std::vector<Matrix> transposed;
    for (Index j = 0; j < d.x.n(); ++j) transposed.push_back(d.x.sample(j).transpose());
    const FeatureTensor xt(transposed);
    std::mt19937_64 rng(13);
    const Matrix q = oracle::random_matrix(4, 2, rng);
    const ScatterPair a = scatter_for_q2(compute_class_statistics(d.x, d.y), d.x, d.y, q);
    const ScatterPair b = scatter_for_q1(compute_class_statistics(xt, d.y), xt, d.y, q);
    CHECK((a.between - b.between).norm() <= 1e-10 * (1.0 + a.between.norm()));
    CHECK((a.within - b.within).norm() <= 1e-10 * (1.0 + a.within.norm()));
}

TEST_CASE("diagonal generalized eigenproblem") {
    ScatterPair s;
    s.between = Vector(Eigen::Vector2d(3.0, 1.0)).asDiagonal();
    s.within = Matrix::Identity(2, 2);
    const DiscriminantDirections dd = top_discriminant_directions(s, 1, 0.0);
    CHECK(dd.eigenvalues(0) == doctest::Approx(3.0));
    CHECK(std::abs(dd.directions(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(dd.directions(1, 0)) <= 1e-12);
}

TEST_CASE("zero between-class scatter yields a deterministic basis") {
    std::mt19937_64 rng(15);
    ScatterPair s;
    s.between = Matrix::Zero(4, 4);
    s.within = oracle::random_spd(4, rng);
    const DiscriminantDirections a = top_discriminant_directions(s, 2, 0.0);
    const DiscriminantDirections b = top_discriminant_directions(s, 2, 0.0);
    CHECK(a.eigenvalues.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a.directions == b.directions);
    CHECK((a.directions.transpose() * s.within * a.directions - Matrix::Identity(2, 2)).norm() <= 1e-10);

    // single-class data has zero between-class scatter; fitting still succeeds and repeats
    const Dataset d = small_data(9, 20, 4, 3, 1);
    BilinearFitOptions o;
    o.c1 = 2;
    o.c2 = 2;
    const BilinearFit f = fit_bilinear(d.x, d.y, o);
    CHECK(f.q1.allFinite());
    CHECK(f.q1 == fit_bilinear(d.x, d.y, o).q1);
    CHECK(f.q2 == fit_bilinear(d.x, d.y, o).q2);
}

TEST_CASE("directions beat random orthonormal candidates on the regularized trace") {
    std::mt19937_64 rng(19);
    for (int inst = 0; inst < 5; ++inst) {
        const Dataset d = small_data(30 + static_cast<std::uint64_t>(inst), 40, 6, 5, 4);
        const ScatterPair s =
            scatter_for_q1(compute_class_statistics(d.x, d.y), d.x, d.y, oracle::random_matrix(5, 3, rng));
        const double eps = within_scatter_ridge(s.within, 1e-6);
        const Matrix q = top_discriminant_directions(s, 2, eps).directions;
        auto score = [&](const Matrix& m) {
            const Matrix w = m.transpose() * s.within * m + eps * Matrix::Identity(2, 2);
            return (w.inverse() * (m.transpose() * s.between * m)).trace();
        };
        const double best = score(q);
        for (int t = 0; t < 100; ++t) {
            const Matrix g = oracle::random_matrix(6, 2, rng);
            const Matrix cand = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(6, 2);
            CHECK(score(cand) <= best * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("projected features of identity, zero and random projections") {
    std::mt19937_64 rng(23);
    const FeatureTensor x(3, 4, oracle::random_matrix(12, 5, rng));
    CHECK((project_features(x, Matrix::Identity(3, 3), Matrix::Identity(4, 4)) - x.vectorized()).norm() == 0.0);

    Matrix zeroed = x.vectorized();
    zeroed.col(2).setZero();
    const Matrix q1 = oracle::random_matrix(3, 2, rng), q2 = oracle::random_matrix(4, 3, rng);
    const Matrix h = project_features(FeatureTensor(3, 4, zeroed), q1, q2);
    CHECK(h.col(2).norm() == 0.0);
    for (Index j = 0; j < 5; ++j) {
        if (j == 2) continue;
        const auto s = oracle::plain_sample(FeatureTensor(3, 4, zeroed), j);
        for (Index b = 0; b < 3; ++b)
            for (Index a = 0; a < 2; ++a) {
                double v = 0.0;
                for (Index r = 0; r < 3; ++r)
                    for (Index c = 0; c < 4; ++c)
                        v += q1(r, a) * s[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * q2(c, b);
                CHECK(std::abs(h(a + 2 * b, j) - v) <= 1e-12);
            }
    }
}

TEST_CASE("MNIST projections are orthonormal under the regularized metric") {
    const Dataset all = load_idx(std::string(BSDH_MNIST_DIR) + "/images-idx3-ubyte.gz",
                                 std::string(BSDH_MNIST_DIR) + "/labels-idx1-ubyte.gz");
    std::vector<Index> first(300);
    std::iota(first.begin(), first.end(), Index{0});
    const Dataset d = subset(all, first);
    BilinearFitOptions o;
    o.c1 = 14;
    o.c2 = 14;
    o.rounds = 3;
    const BilinearFit f = fit_bilinear(d.x, d.y, o);
    CHECK((f.q1.transpose() * f.q1_metric * f.q1 - Matrix::Identity(14, 14)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((f.q2.transpose() * f.q2_metric * f.q2 - Matrix::Identity(14, 14)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("class counts weight the means into the global mean") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset d = small_data(50 + seed, 33, 4, 3, 5);
        const ClassStatistics st = compute_class_statistics(d.x, d.y);
        Matrix weighted = Matrix::Zero(4, 3);
        for (std::size_t k = 0; k < st.class_means.size(); ++k) {
            weighted += static_cast<double>(st.class_counts[k]) * st.class_means[k];
            if (d.y.dense().row(static_cast<Index>(k)).sum() > 0.0) CHECK(st.class_counts[k] >= 1);
        }
        CHECK((weighted - 33.0 * st.global_mean).norm() <= 1e-10 * (1.0 + weighted.norm()));
    }
}

TEST_CASE("scatter matrices are symmetric positive semidefinite") {
    std::mt19937_64 rng(27);
    for (int t = 0; t < 10; ++t) {
        const Dataset d = small_data(60 + static_cast<std::uint64_t>(t), 25, 5, 4, 3, 1 + t % 2);
        const ClassStatistics st = compute_class_statistics(d.x, d.y);
        for (const ScatterPair& s : {scatter_for_q1(st, d.x, d.y, oracle::random_matrix(4, 2, rng)),
                                     scatter_for_q2(st, d.x, d.y, oracle::random_matrix(5, 3, rng))}) {
            for (const Matrix* m : {&s.between, &s.within}) {
                CHECK((*m - m->transpose()).norm() <= 1e-10 * (1.0 + m->norm()));
                const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(*m).eigenvalues();
                CHECK(ev.minCoeff() >= -1e-10 * std::max(1.0, ev.maxCoeff()));
            }
        }
    }
}

TEST_CASE("full-size invertible projections keep samples distinct") {
    std::mt19937_64 rng(29);
    const FeatureTensor x(4, 3, oracle::random_matrix(12, 20, rng));
    const Matrix h = project_features(x, oracle::random_matrix(4, 4, rng), oracle::random_matrix(3, 3, rng));
    for (Index a = 0; a < 20; ++a)
        for (Index b = a + 1; b < 20; ++b) CHECK((h.col(a) - h.col(b)).norm() > 1e-9);
}
