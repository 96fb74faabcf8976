#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "bsdh/baselines.hpp"
#include "bsdh/encoder.hpp"
#include "bsdh/error.hpp"
#include "bsdh/io.hpp"
#include "bsdh/retrieval.hpp"
#include "bsdh/trainer.hpp"

namespace py = pybind11;
using namespace bsdh;

namespace {

using FeatureArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using CodeArray = py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>;

// (n, d1, d2) array, each sample row-major, to the column-stacked tensor.
FeatureTensor to_features(const FeatureArray& x) {
    if (x.ndim() != 3) throw ShapeError("features must have shape (n, d1, d2)");
    const Index n = x.shape(0), d1 = x.shape(1), d2 = x.shape(2);
    Matrix v(d1 * d2, n);
    auto a = x.unchecked<3>();
    for (Index j = 0; j < n; ++j)
        for (Index c = 0; c < d2; ++c)
            for (Index r = 0; r < d1; ++r) v(r + c * d1, j) = a(j, r, c);
    return FeatureTensor(d1, d2, std::move(v));
}

FeatureArray from_features(const FeatureTensor& x) {
    FeatureArray out({x.n(), x.d1(), x.d2()});
    auto a = out.mutable_unchecked<3>();
    for (Index j = 0; j < x.n(); ++j) {
        const auto s = x.sample(j);
        for (Index r = 0; r < x.d1(); ++r)
            for (Index c = 0; c < x.d2(); ++c) a(j, r, c) = s(r, c);
    }
    return out;
}

CodeMatrix to_codes(const CodeArray& b) {
    if (b.ndim() != 2) throw ShapeError("codes must have shape (bits, n)");
    CodeStorage s(b.shape(0), b.shape(1));
    auto a = b.unchecked<2>();
    for (Index j = 0; j < s.cols(); ++j)
        for (Index k = 0; k < s.rows(); ++k) s(k, j) = a(k, j);
    return CodeMatrix(std::move(s));
}

CodeArray from_codes(const CodeMatrix& b) {
    CodeArray out({b.bits(), b.n()});
    auto a = out.mutable_unchecked<2>();
    for (Index j = 0; j < b.n(); ++j)
        for (Index k = 0; k < b.bits(); ++k) a(k, j) = b(k, j);
    return out;
}

py::tuple dataset_tuple(const Dataset& d) { return py::make_tuple(from_features(d.x), d.y.dense()); }

Dataset to_dataset(const FeatureArray& x, const Matrix& y) { return {to_features(x), LabelMatrix(y)}; }

py::dict report_dict(const RetrievalReport& r) {
    py::dict d;
    d["map"] = r.map;
    d["valid_queries"] = r.valid_queries;
    d["excluded_queries"] = r.excluded_queries;
    d["average_precisions"] = r.average_precisions;
    d["k_grid"] = r.k_grid;
    d["precision_at"] = r.precision_at;
    d["recall_at"] = r.recall_at;
    py::list curve;
    for (const PrPoint& p : r.mean_pr_curve) curve.append(py::make_tuple(p.k, p.recall, p.precision));
    d["pr_curve"] = curve;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bilinear supervised discrete hashing: training, encoding and retrieval evaluation.";

    auto base = py::register_exception<Error>(m, "BsdhError", PyExc_RuntimeError);
    py::register_exception<InvalidValueError>(m, "InvalidValueError", base);
    py::register_exception<ShapeError>(m, "ShapeError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<NumericalError>(m, "NumericalError", base);
    py::register_exception<NoRelevantItemsError>(m, "NoRelevantItemsError", base);

    py::class_<HyperParams>(m, "HyperParams")
        .def_readonly("lambda_", &HyperParams::lambda)
        .def_readonly("mu", &HyperParams::mu)
        .def_readonly("c1", &HyperParams::c1)
        .def_readonly("c2", &HyperParams::c2)
        .def_readonly("bits", &HyperParams::bits)
        .def_readonly("t1", &HyperParams::t1)
        .def_readonly("t2", &HyperParams::t2)
        .def_readonly("tol", &HyperParams::tol)
        .def_readonly("seed", &HyperParams::seed)
        .def_readonly("center_features", &HyperParams::center_features);

    py::class_<BilinearModel>(m, "Model")
        .def_readonly("q1", &BilinearModel::q1)
        .def_readonly("q2", &BilinearModel::q2)
        .def_readonly("u", &BilinearModel::u)
        .def_readonly("w", &BilinearModel::w)
        .def_readonly("feature_mean", &BilinearModel::feature_mean)
        .def_readonly("hyper", &BilinearModel::hyper)
        .def_readonly("objective_trace", &BilinearModel::objective_trace)
        .def_property_readonly("bits", &BilinearModel::bits)
        .def("save", [](const BilinearModel& model, const std::filesystem::path& path) { save_model(model, path); })
        .def_static("load", &load_model, py::arg("path"));

    py::class_<PackedCodes>(m, "PackedCodes")
        .def_property_readonly("bits", &PackedCodes::bits)
        .def_property_readonly("n", &PackedCodes::n)
        .def_property_readonly("words",
                               [](const PackedCodes& p) {
                                   py::array_t<std::uint64_t> out({p.n(), p.words_per_code()});
                                   if (!p.words().empty()) {
                                       std::memcpy(out.mutable_data(), p.words().data(),
                                                   p.words().size() * sizeof(std::uint64_t));
                                   }
                                   return out;
                               })
        .def("subset", [](const PackedCodes& p, const std::vector<Index>& idx) { return p.subset(idx); })
        .def("save", [](const PackedCodes& p, const std::filesystem::path& path) { save_codes(p, path); })
        .def_static("load", &load_codes, py::arg("path"))
        .def("__eq__", [](const PackedCodes& a, const PackedCodes& b) { return a == b; });

    m.def(
        "train",
        [](const FeatureArray& x, const Matrix& y, Index bits, Index c1, Index c2, double lambda_, double mu, int t1,
           int t2, double tol, std::uint64_t seed, int max_sweeps, bool center) {
            TrainConfig cfg;
            cfg.bits = bits;
            cfg.lambda = lambda_;
            cfg.mu = mu;
            cfg.max_iterations = t2;
            cfg.tol = tol;
            cfg.seed = seed;
            cfg.max_sweeps = max_sweeps;
            cfg.center_features = center;
            BilinearFitOptions proj;
            proj.c1 = c1;
            proj.c2 = c2;
            proj.rounds = t1;
            const FeatureTensor features = to_features(x);
            const LabelMatrix labels(y);
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(features, labels, cfg, proj);
            }
            return py::make_tuple(r.model, from_codes(r.codes), r.iterations, r.converged);
        },
        py::arg("x"), py::arg("y"), py::arg("bits") = 32, py::arg("c1") = 14, py::arg("c2") = 14,
        py::arg("lambda_") = 1e-5, py::arg("mu") = 1e-1, py::arg("t1") = 5, py::arg("t2") = 10, py::arg("tol") = 1e-5,
        py::arg("seed") = 0, py::arg("max_sweeps") = 3, py::arg("center") = false,
        "Train on x (n, d1, d2) with labels y (l, n). Returns (model, codes, iterations, converged).");

    m.def("encode", [](const FeatureArray& x, const BilinearModel& model) { return from_codes(encode(to_features(x), model)); },
          py::arg("x"), py::arg("model"), "Codes (bits, n) in {-1, +1} for samples x (n, d1, d2).");

    m.def("lsh_encode",
          [](const FeatureArray& x, Index bits, std::uint64_t seed) {
              const FeatureTensor f = to_features(x);
              return from_codes(lsh_encode(f, make_lsh(bits, f.d1(), f.d2(), seed)));
          },
          py::arg("x"), py::arg("bits"), py::arg("seed") = 0);

    m.def("bpbc_encode",
          [](const FeatureArray& x, Index bits, std::uint64_t seed) {
              const FeatureTensor f = to_features(x);
              const auto [k1, k2] = bpbc_shape_for_bits(bits, f.d1(), f.d2());
              return from_codes(bpbc_encode(f, make_bpbc(f.d1(), f.d2(), k1, k2, seed)));
          },
          py::arg("x"), py::arg("bits"), py::arg("seed") = 0);

    m.def("pack_codes", [](const CodeArray& b) { return pack_codes(to_codes(b)); }, py::arg("codes"));
    m.def("unpack_codes", [](const PackedCodes& p) { return from_codes(unpack_codes(p)); }, py::arg("packed"));
    m.def("hamming_distance",
          [](const PackedCodes& a, Index i, const PackedCodes& b, Index j) {
              if (a.bits() != b.bits()) throw ShapeError("code lengths differ");
              if (i < 0 || i >= a.n() || j < 0 || j >= b.n()) throw ShapeError("sample index out of range");
              return hamming_distance(a.code(i), b.code(j), a.bits());
          },
          py::arg("a"), py::arg("i"), py::arg("b"), py::arg("j"));

    m.def("mean_average_precision",
          [](const PackedCodes& q, const Matrix& qy, const PackedCodes& db, const Matrix& dy, int workers) {
              const LabelMatrix ql(qy), dl(dy);
              py::gil_scoped_release release;
              return mean_average_precision(q, ql, db, dl, workers);
          },
          py::arg("queries"), py::arg("query_labels"), py::arg("database"), py::arg("database_labels"),
          py::arg("workers") = 1);

    m.def("evaluate_retrieval",
          [](const PackedCodes& q, const Matrix& qy, const PackedCodes& db, const Matrix& dy,
             std::vector<Index> k_grid, bool pr_curve, int workers) {
              RetrievalOptions opts;
              opts.k_grid = k_grid.empty() ? default_k_grid() : std::move(k_grid);
              opts.pr_curve = pr_curve;
              opts.workers = workers;
              const LabelMatrix ql(qy), dl(dy);
              RetrievalReport r;
              {
                  py::gil_scoped_release release;
                  r = evaluate_retrieval(q, ql, db, dl, opts);
              }
              return report_dict(r);
          },
          py::arg("queries"), py::arg("query_labels"), py::arg("database"), py::arg("database_labels"),
          py::arg("k_grid") = std::vector<Index>{}, py::arg("pr_curve") = false, py::arg("workers") = 1);

    m.def("synth_multilabel",
          [](Index n, Index d1, Index d2, Index labels, Index labels_per_sample, double noise, std::uint64_t seed) {
              SynthOptions o;
              o.n = n;
              o.d1 = d1;
              o.d2 = d2;
              o.labels = labels;
              o.labels_per_sample = labels_per_sample;
              o.noise = noise;
              o.seed = seed;
              return dataset_tuple(synth_multilabel(o));
          },
          py::arg("n") = 100, py::arg("d1") = 8, py::arg("d2") = 8, py::arg("labels") = 4,
          py::arg("labels_per_sample") = 1, py::arg("noise") = 0.1, py::arg("seed") = 0,
          "Returns (x (n, d1, d2), y (l, n)).");

    m.def("load_idx",
          [](const std::filesystem::path& images, const std::filesystem::path& labels, bool raw_pixels) {
              return dataset_tuple(load_idx(images, labels, raw_pixels ? PixelScale::Raw : PixelScale::UnitInterval));
          },
          py::arg("images"), py::arg("labels"), py::arg("raw_pixels") = false);
    m.def("load_b2f", [](const std::filesystem::path& path) { return dataset_tuple(load_b2f(path)); }, py::arg("path"));
    m.def("save_b2f",
          [](const FeatureArray& x, const Matrix& y, const std::filesystem::path& path) {
              save_b2f(to_dataset(x, y), path);
          },
          py::arg("x"), py::arg("y"), py::arg("path"));
    m.def("seeded_split",
          [](Index n, Index n_train, Index n_query, std::uint64_t seed) {
              const Split s = seeded_split(n, n_train, n_query, seed);
              return py::make_tuple(s.train, s.query);
          },
          py::arg("n"), py::arg("n_train"), py::arg("n_query"), py::arg("seed") = 0);
}
