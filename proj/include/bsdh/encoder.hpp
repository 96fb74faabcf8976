#pragma once

#include "bsdh/types.hpp"

namespace bsdh {

// Out-of-sample codes: column j = sign(U (vec(Q1' X_j Q2) - feature_mean)).
CodeMatrix encode(const FeatureTensor& queries, const BilinearModel& model);

// The real-valued relaxation U (vec(Q1' X_j Q2) - feature_mean) before sign.
Matrix relaxed_codes(const FeatureTensor& queries, const BilinearModel& model);

}  // namespace bsdh
