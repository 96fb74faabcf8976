#include "bsdh/baselines.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bsdh/error.hpp"

namespace bsdh {

namespace {

Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

}  // namespace

Matrix random_orthonormal(Index d, Index k, std::uint64_t seed) {
    if (d < 1 || k < 1 || k > d) {
        throw ShapeError("random_orthonormal: need 1 <= k <= d, got d = " + std::to_string(d) +
                         ", k = " + std::to_string(k));
    }
    const Matrix g = gaussian_matrix(d, k, seed);
    const Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, k);
    const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Index j = 0; j < k; ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

BpbcModel make_bpbc(Index d1, Index d2, Index k1, Index k2, std::uint64_t seed) {
    return {random_orthonormal(d1, k1, derive_seed(seed, 0)), random_orthonormal(d2, k2, derive_seed(seed, 1))};
}

CodeMatrix bpbc_encode(const FeatureTensor& x, const BpbcModel& model) {
    if (model.r1.rows() != x.d1() || model.r2.rows() != x.d2()) {
        throw ShapeError("bpbc_encode: rotations do not match " + std::to_string(x.d1()) + "x" +
                         std::to_string(x.d2()) + " inputs");
    }
    const Index k1 = model.r1.cols();
    const Index k2 = model.r2.cols();
    Matrix out(k1 * k2, x.n());
    Matrix rotated(k1, k2);
    for (Index i = 0; i < x.n(); ++i) {
        rotated.noalias() = model.r1.transpose() * x.sample(i) * model.r2;
        out.col(i) = vectorize(sign(rotated));
    }
    return CodeMatrix(out);
}

double bpbc_objective(const FeatureTensor& x, const CodeMatrix& codes, const Matrix& r1, const Matrix& r2) {
    if (r1.rows() != x.d1() || r2.rows() != x.d2() || codes.n() != x.n() ||
        codes.bits() != r1.cols() * r2.cols()) {
        throw ShapeError("bpbc_objective: inconsistent shapes");
    }
    const Matrix b = codes.as_real();
    double total = 0.0;
    for (Index i = 0; i < x.n(); ++i) {
        const Matrix bi = unvectorize(b.col(i), r1.cols(), r2.cols());
        // tr(B R2' X' R1) = <B, R1' X R2>
        total += bi.cwiseProduct(r1.transpose() * x.sample(i) * r2).sum();
    }
    return total;
}

LshModel make_lsh(Index bits, Index d1, Index d2, std::uint64_t seed) {
    if (bits < 1 || d1 < 1 || d2 < 1) throw ShapeError("make_lsh: sizes must be positive");
    return {gaussian_matrix(bits, d1 * d2, seed), seed};
}

CodeMatrix lsh_encode(const FeatureTensor& x, const LshModel& model) {
    if (model.projection.cols() != x.d1() * x.d2()) {
        throw ShapeError("lsh_encode: projection expects " + std::to_string(model.projection.cols()) +
                         " features, got " + std::to_string(x.d1() * x.d2()));
    }
    return CodeMatrix(sign(model.projection * x.vectorized()));
}

std::pair<Index, Index> bpbc_shape_for_bits(Index bits, Index d1, Index d2) {
    if (bits < 1) throw InvalidValueError("bpbc: code length must be positive");
    for (auto k2 = static_cast<Index>(std::sqrt(static_cast<double>(bits))); k2 >= 1; --k2) {
        if (bits % k2 != 0) continue;
        const Index k1 = bits / k2;
        if (k1 <= d1 && k2 <= d2) return {k1, k2};
        if (k2 <= d1 && k1 <= d2) return {k2, k1};
    }
    throw InvalidValueError("bpbc: " + std::to_string(bits) + " bits cannot be laid out as k1 x k2 with k1 <= " +
                            std::to_string(d1) + ", k2 <= " + std::to_string(d2));
}

}  // namespace bsdh
