#include "bsdh/types.hpp"

#include <cmath>
#include <string>

#include "bsdh/error.hpp"

namespace bsdh {

namespace {

std::string shape_str(Index r, Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

int sign(double x) {
    if (!std::isfinite(x)) {
        throw InvalidValueError("sign: non-finite input " + std::to_string(x));
    }
    return x >= 0.0 ? 1 : -1;
}

Matrix sign(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) {
            out(i, j) = sign(m(i, j));
        }
    }
    return out;
}

Vector vectorize(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unvectorize(const Vector& v, Index rows, Index cols) {
    if (rows * cols != v.size()) {
        throw ShapeError("unvectorize: cannot reshape " + std::to_string(v.size()) +
                         " entries into " + shape_str(rows, cols));
    }
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// FeatureTensor

FeatureTensor::FeatureTensor(Index d1, Index d2, Matrix vectorized_samples)
    : d1_(d1), d2_(d2), data_(std::move(vectorized_samples)) {
    if (d1 < 1 || d2 < 1) {
        throw ShapeError("FeatureTensor: sample size must be at least 1x1, got " + shape_str(d1, d2));
    }
    if (data_.rows() != d1 * d2) {
        throw ShapeError("FeatureTensor: expected " + std::to_string(d1 * d2) + " rows, got " +
                         std::to_string(data_.rows()));
    }
    if (data_.cols() < 1) {
        throw ShapeError("FeatureTensor: at least one sample required");
    }
    if (!data_.allFinite()) {
        throw InvalidValueError("FeatureTensor: non-finite feature value");
    }
}

FeatureTensor::FeatureTensor(const std::vector<Matrix>& samples) {
    if (samples.empty()) {
        throw ShapeError("FeatureTensor: at least one sample required");
    }
    const Index d1 = samples.front().rows();
    const Index d2 = samples.front().cols();
    Matrix data(d1 * d2, static_cast<Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].rows() != d1 || samples[i].cols() != d2) {
            throw ShapeError("FeatureTensor: sample " + std::to_string(i) + " is " +
                             shape_str(samples[i].rows(), samples[i].cols()) + ", expected " +
                             shape_str(d1, d2));
        }
        data.col(static_cast<Index>(i)) = vectorize(samples[i]);
    }
    *this = FeatureTensor(d1, d2, std::move(data));
}

Eigen::Map<const Matrix> FeatureTensor::sample(Index i) const {
    return {data_.col(i).data(), d1_, d2_};
}

FeatureTensor FeatureTensor::subset(std::span<const Index> indices) const {
    Matrix out(data_.rows(), static_cast<Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || indices[k] >= n()) {
            throw ShapeError("FeatureTensor::subset: index " + std::to_string(indices[k]) +
                             " out of range");
        }
        out.col(static_cast<Index>(k)) = data_.col(indices[k]);
    }
    return {d1_, d2_, std::move(out)};
}

// ---------------------------------------------------------------------------
// LabelMatrix

LabelMatrix::LabelMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
        throw ShapeError("LabelMatrix: empty label matrix");
    }
    for (Index j = 0; j < data_.cols(); ++j) {
        bool any = false;
        for (Index i = 0; i < data_.rows(); ++i) {
            const double v = data_(i, j);
            if (v != 0.0 && v != 1.0) {
                throw InvalidValueError("LabelMatrix: entry (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") is not 0 or 1");
            }
            any = any || v == 1.0;
        }
        if (!any) {
            throw InvalidValueError("LabelMatrix: sample " + std::to_string(j) + " has no label");
        }
    }
}

LabelMatrix LabelMatrix::from_class_ids(std::span<const int> ids, Index num_classes) {
    Matrix y = Matrix::Zero(num_classes, static_cast<Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (ids[j] < 0 || ids[j] >= num_classes) {
            throw InvalidValueError("LabelMatrix: class id " + std::to_string(ids[j]) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
        }
        y(ids[j], static_cast<Index>(j)) = 1.0;
    }
    return LabelMatrix(std::move(y));
}

bool LabelMatrix::shares_label(Index i, const LabelMatrix& other, Index j) const {
    if (l() != other.l()) {
        throw ShapeError("LabelMatrix: label dimensions differ (" + std::to_string(l()) + " vs " +
                         std::to_string(other.l()) + ")");
    }
    for (Index k = 0; k < l(); ++k) {
        if (data_(k, i) != 0.0 && other.data_(k, j) != 0.0) return true;
    }
    return false;
}

LabelMatrix LabelMatrix::subset(std::span<const Index> indices) const {
    Matrix out(l(), static_cast<Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || indices[k] >= n()) {
            throw ShapeError("LabelMatrix::subset: index out of range");
        }
        out.col(static_cast<Index>(k)) = data_.col(indices[k]);
    }
    return LabelMatrix(std::move(out));
}

// ---------------------------------------------------------------------------
// CodeMatrix

CodeMatrix::CodeMatrix(const Matrix& values) : data_(values.rows(), values.cols()) {
    for (Index j = 0; j < values.cols(); ++j) {
        for (Index i = 0; i < values.rows(); ++i) {
            const double v = values(i, j);
            if (v != 1.0 && v != -1.0) {
                throw InvalidValueError("CodeMatrix: entry (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") is not +-1");
            }
            data_(i, j) = static_cast<std::int8_t>(v);
        }
    }
}

CodeMatrix::CodeMatrix(CodeStorage values) : data_(std::move(values)) {
    for (Index k = 0; k < data_.size(); ++k) {
        const auto v = data_.data()[k];
        if (v != 1 && v != -1) {
            throw InvalidValueError("CodeMatrix: entry is not +-1");
        }
    }
}

// ---------------------------------------------------------------------------
// PackedCodes

PackedCodes::PackedCodes(Index bits, Index n, std::vector<std::uint64_t> words)
    : bits_(bits), n_(n), words_per_code_((bits + 63) / 64), words_(std::move(words)) {
    if (bits < 1 || n < 0) {
        throw ShapeError("PackedCodes: invalid shape " + shape_str(bits, n));
    }
    if (static_cast<Index>(words_.size()) != words_per_code_ * n) {
        throw ShapeError("PackedCodes: expected " + std::to_string(words_per_code_ * n) +
                         " words, got " + std::to_string(words_.size()));
    }
    const int tail = static_cast<int>(bits % 64);
    if (tail != 0) {
        const std::uint64_t pad_mask = ~((std::uint64_t{1} << tail) - 1);
        for (Index i = 0; i < n; ++i) {
            if (words_[static_cast<std::size_t>((i + 1) * words_per_code_ - 1)] & pad_mask) {
                throw InvalidValueError("PackedCodes: nonzero padding bits in code " +
                                        std::to_string(i));
            }
        }
    }
}

PackedCodes PackedCodes::subset(std::span<const Index> indices) const {
    std::vector<std::uint64_t> out;
    out.reserve(indices.size() * static_cast<std::size_t>(words_per_code_));
    for (Index i : indices) {
        if (i < 0 || i >= n_) throw ShapeError("PackedCodes::subset: index out of range");
        auto c = code(i);
        out.insert(out.end(), c.begin(), c.end());
    }
    return {bits_, static_cast<Index>(indices.size()), std::move(out)};
}

PackedCodes pack_codes(const CodeMatrix& codes) {
    const Index bits = codes.bits();
    const Index wpc = (bits + 63) / 64;
    std::vector<std::uint64_t> words(static_cast<std::size_t>(wpc * codes.n()), 0);
    for (Index j = 0; j < codes.n(); ++j) {
        std::uint64_t* w = words.data() + j * wpc;
        for (Index b = 0; b < bits; ++b) {
            if (codes(b, j) > 0) w[b / 64] |= std::uint64_t{1} << (b % 64);
        }
    }
    return {bits, codes.n(), std::move(words)};
}

CodeMatrix unpack_codes(const PackedCodes& packed) {
    CodeStorage out(packed.bits(), packed.n());
    for (Index j = 0; j < packed.n(); ++j) {
        auto w = packed.code(j);
        for (Index b = 0; b < packed.bits(); ++b) {
            out(b, j) = ((w[static_cast<std::size_t>(b / 64)] >> (b % 64)) & 1U) ? 1 : -1;
        }
    }
    return CodeMatrix(std::move(out));
}

// ---------------------------------------------------------------------------
// BilinearModel

void BilinearModel::validate() const {
    const Index c1 = q1.cols();
    const Index c2 = q2.cols();
    if (c1 < 1 || c2 < 1 || q1.rows() < c1 || q2.rows() < c2) {
        throw ShapeError("BilinearModel: projections must be tall, got Q1 " +
                         shape_str(q1.rows(), c1) + ", Q2 " + shape_str(q2.rows(), c2));
    }
    if (u.cols() != c1 * c2) {
        throw ShapeError("BilinearModel: U has " + std::to_string(u.cols()) +
                         " columns, expected c1*c2 = " + std::to_string(c1 * c2));
    }
    if (w.rows() != u.rows()) {
        throw ShapeError("BilinearModel: W has " + std::to_string(w.rows()) +
                         " rows but code length is " + std::to_string(u.rows()));
    }
    if (feature_mean.size() != c1 * c2) {
        throw ShapeError("BilinearModel: feature mean has wrong length");
    }
    if (hyper.c1 != c1 || hyper.c2 != c2 || hyper.bits != u.rows()) {
        throw ShapeError("BilinearModel: hyper-parameters disagree with matrix shapes");
    }
}

}  // namespace bsdh
