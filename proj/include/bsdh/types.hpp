#pragma once

// Core containers shared by every module: matrix-form features, label
// matrices, {-1,+1} code matrices and their bit-packed form, and the trained
// bilinear hashing model.
//
// Storage conventions
//   - All real arithmetic is double precision, column-major (Eigen default).
//   - Codes are c x n with one sample per column.
//   - vec() stacks columns: vec(M)[i + j*rows] = M(i, j).

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bsdh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// +1 for x >= 0, -1 otherwise. Throws InvalidValueError on NaN/Inf.
int sign(double x);

// Elementwise sign() into a real matrix of exact +-1 values.
Matrix sign(const Matrix& m);

// Column-major stacking of an r x c matrix into an (r*c)-vector.
Vector vectorize(const Matrix& m);
Matrix unvectorize(const Vector& v, Index rows, Index cols);

// Independent child seed for stream `stream` of a master seed (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// n samples of d1 x d2 real matrices, held as a (d1*d2) x n matrix whose
// columns are the vectorized samples.
class FeatureTensor {
public:
    FeatureTensor() = default;
    FeatureTensor(Index d1, Index d2, Matrix vectorized_samples);
    explicit FeatureTensor(const std::vector<Matrix>& samples);

    Index n() const { return data_.cols(); }
    Index d1() const { return d1_; }
    Index d2() const { return d2_; }

    Eigen::Map<const Matrix> sample(Index i) const;
    const Matrix& vectorized() const { return data_; }

    FeatureTensor subset(std::span<const Index> indices) const;

private:
    Index d1_ = 0;
    Index d2_ = 0;
    Matrix data_;
};

// l x n matrix of {0,1}; every sample carries at least one label.
class LabelMatrix {
public:
    LabelMatrix() = default;
    explicit LabelMatrix(Matrix data);

    // One-hot matrix from class ids in [0, num_classes).
    static LabelMatrix from_class_ids(std::span<const int> ids, Index num_classes);

    Index l() const { return data_.rows(); }
    Index n() const { return data_.cols(); }
    const Matrix& dense() const { return data_; }

    // True when samples i (of this) and j (of other) share at least one label.
    bool shares_label(Index i, const LabelMatrix& other, Index j) const;

    LabelMatrix subset(std::span<const Index> indices) const;

private:
    Matrix data_;
};

using CodeStorage = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic>;

// c x n matrix over {-1,+1}.
class CodeMatrix {
public:
    CodeMatrix() = default;
    // Throws InvalidValueError unless every entry is exactly -1 or +1.
    explicit CodeMatrix(const Matrix& values);
    explicit CodeMatrix(CodeStorage values);

    Index bits() const { return data_.rows(); }
    Index n() const { return data_.cols(); }
    std::int8_t operator()(Index bit, Index sample) const { return data_(bit, sample); }

    const CodeStorage& storage() const { return data_; }
    Matrix as_real() const { return data_.cast<double>(); }

    bool operator==(const CodeMatrix& other) const { return data_ == other.data_; }

private:
    CodeStorage data_;
};

// Bit-packed codes: +1 -> 1, -1 -> 0, code bit b of a sample lives in bit
// (b % 64) of word (b / 64). Padding bits are zero.
class PackedCodes {
public:
    PackedCodes() = default;
    PackedCodes(Index bits, Index n, std::vector<std::uint64_t> words);

    Index bits() const { return bits_; }
    Index n() const { return n_; }
    Index words_per_code() const { return words_per_code_; }

    std::span<const std::uint64_t> code(Index i) const {
        return {words_.data() + i * words_per_code_, static_cast<std::size_t>(words_per_code_)};
    }
    const std::vector<std::uint64_t>& words() const { return words_; }

    PackedCodes subset(std::span<const Index> indices) const;

    bool operator==(const PackedCodes& other) const = default;

private:
    Index bits_ = 0;
    Index n_ = 0;
    Index words_per_code_ = 0;
    std::vector<std::uint64_t> words_;
};

PackedCodes pack_codes(const CodeMatrix& codes);
CodeMatrix unpack_codes(const PackedCodes& packed);

struct HyperParams {
    double lambda = 1e-5;
    double mu = 1e-1;
    Index c1 = 0;
    Index c2 = 0;
    Index bits = 0;
    int t1 = 5;
    int t2 = 10;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    bool center_features = false;
};

// Learned projections: X -> sign(U * (vec(Q1' X Q2) - feature_mean)).
struct BilinearModel {
    Matrix q1;  // d1 x c1
    Matrix q2;  // d2 x c2
    Matrix u;   // c x (c1*c2)
    Matrix w;   // c x l
    Vector feature_mean;  // c1*c2; zero unless hyper.center_features
    HyperParams hyper;
    std::vector<double> objective_trace;

    Index d1() const { return q1.rows(); }
    Index d2() const { return q2.rows(); }
    Index bits() const { return u.rows(); }

    // Throws ShapeError when the matrices disagree with each other or hyper.
    void validate() const;
};

}  // namespace bsdh
