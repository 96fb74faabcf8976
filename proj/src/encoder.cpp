#include "bsdh/encoder.hpp"

#include <string>

#include "bsdh/bilinear.hpp"
#include "bsdh/error.hpp"

namespace bsdh {

Matrix relaxed_codes(const FeatureTensor& queries, const BilinearModel& model) {
    model.validate();
    if (queries.d1() != model.d1() || queries.d2() != model.d2()) {
        throw ShapeError("encode: queries are " + std::to_string(queries.d1()) + "x" +
                         std::to_string(queries.d2()) + " but the model expects " + std::to_string(model.d1()) +
                         "x" + std::to_string(model.d2()));
    }
    Matrix h = project_features(queries, model.q1, model.q2);
    h.colwise() -= model.feature_mean;
    return model.u * h;
}

CodeMatrix encode(const FeatureTensor& queries, const BilinearModel& model) {
    return CodeMatrix(sign(relaxed_codes(queries, model)));
}

}  // namespace bsdh
