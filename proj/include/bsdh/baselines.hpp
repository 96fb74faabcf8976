#pragma once

// Reference hashers: bilinear random rotation (BPBC with fixed random
// orthonormal rotations) and Gaussian random-projection LSH.

#include <cstdint>

#include "bsdh/types.hpp"

namespace bsdh {

// d x k matrix with orthonormal columns: QR of a seeded standard-normal
// matrix, with R's diagonal made positive.
Matrix random_orthonormal(Index d, Index k, std::uint64_t seed);

struct BpbcModel {
    Matrix r1;  // d1 x k1
    Matrix r2;  // d2 x k2

    Index bits() const { return r1.cols() * r2.cols(); }
};

// R1, R2 from seeds derived from `seed`. k1 = d1, k2 = d2 gives the
// full-length rotation; smaller values truncate to short codes.
BpbcModel make_bpbc(Index d1, Index d2, Index k1, Index k2, std::uint64_t seed);

// Per sample: vec(sign(R1' X R2)), k1*k2 bits.
CodeMatrix bpbc_encode(const FeatureTensor& x, const BpbcModel& model);

// sum_i tr(B_i R2' X_i' R1), with B_i the k1 x k2 code of sample i
// (column i of `codes`, un-vectorized).
double bpbc_objective(const FeatureTensor& x, const CodeMatrix& codes, const Matrix& r1, const Matrix& r2);

struct LshModel {
    Matrix projection;  // c x (d1*d2), standard normal entries
    std::uint64_t seed = 0;
};

LshModel make_lsh(Index bits, Index d1, Index d2, std::uint64_t seed);

// Per sample: sign(P vec(X)).
CodeMatrix lsh_encode(const FeatureTensor& x, const LshModel& model);

// (k1, k2) for a target code length: the most balanced factorization of
// `bits` with k1 <= d1 and k2 <= d2. Throws if none exists.
std::pair<Index, Index> bpbc_shape_for_bits(Index bits, Index d1, Index d2);

}  // namespace bsdh
