#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <zlib.h>

#include "bsdh/bilinear.hpp"
#include "bsdh/encoder.hpp"
#include "bsdh/error.hpp"
#include "bsdh/io.hpp"
#include "bsdh/trainer.hpp"
#include "support/oracles.hpp"

using namespace bsdh;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("bsdh_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

BilinearModel sample_model(std::mt19937_64& rng) {
    BilinearModel m;
    m.q1 = oracle::random_matrix(5, 3, rng);
    m.q2 = oracle::random_matrix(4, 2, rng);
    m.u = oracle::random_matrix(9, 6, rng);
    m.w = oracle::random_matrix(9, 3, rng);
    m.feature_mean = oracle::random_matrix(6, 1, rng);
    m.hyper = HyperParams{0.25, 0.5, 3, 2, 9, 5, 10, 1e-5, 12345678901ULL, true};
    m.objective_trace = {10.0, 8.5, 8.25};
    return m;
}

void put_be32(std::string& s, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void write_gz(const fs::path& path, const std::string& bytes) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
}

}  // namespace

TEST_CASE("B2F round trip") {
    SynthOptions o;
    o.n = 12;
    o.d1 = 3;
    o.d2 = 4;
    o.labels = 5;
    o.labels_per_sample = 2;
    o.seed = 3;
    const Dataset d = synth_multilabel(o);
    const std::string bytes = serialize_b2f(d);
    CHECK(bytes.size() == 20 + 12 * 12 * 4 + 5 * 12);
    const Dataset back = parse_b2f(bytes);
    CHECK(back.x.d1() == 3);
    CHECK(back.x.d2() == 4);
    CHECK(back.y.dense() == d.y.dense());
    // features are stored as float
    CHECK((back.x.vectorized() - d.x.vectorized().cast<float>().cast<double>()).norm() == 0.0);
    CHECK(serialize_b2f(back) == bytes);

    const fs::path dir = scratch_dir("b2f");
    save_b2f(d, dir / "d.b2f");
    CHECK(load_b2f(dir / "d.b2f").y.dense() == d.y.dense());
    CHECK_FALSE(fs::exists(dir / "d.b2f.tmp"));
}

TEST_CASE("B2F samples are row-major on disk") {
    Matrix s(2, 2);
    s << 1, 2, 3, 4;
    const Dataset d{FeatureTensor(std::vector<Matrix>{s}), LabelMatrix::from_class_ids(std::vector<int>{0}, 1)};
    const std::string bytes = serialize_b2f(d);
    float second = 0.0F;
    std::memcpy(&second, bytes.data() + 20 + 4, 4);
    CHECK(second == 2.0F);
}

TEST_CASE("model round trip preserves every field exactly") {
    std::mt19937_64 rng(4);
    const BilinearModel m = sample_model(rng);
    const BilinearModel back = parse_model(serialize_model(m));
    CHECK(back.q1 == m.q1);
    CHECK(back.q2 == m.q2);
    CHECK(back.u == m.u);
    CHECK(back.w == m.w);
    CHECK(back.feature_mean == m.feature_mean);
    CHECK(back.objective_trace == m.objective_trace);
    CHECK(back.hyper.lambda == m.hyper.lambda);
    CHECK(back.hyper.mu == m.hyper.mu);
    CHECK(back.hyper.tol == m.hyper.tol);
    CHECK(back.hyper.seed == m.hyper.seed);
    CHECK(back.hyper.t1 == m.hyper.t1);
    CHECK(back.hyper.t2 == m.hyper.t2);
    CHECK(back.hyper.center_features == m.hyper.center_features);
    CHECK(serialize_model(back) == serialize_model(m));

    const fs::path dir = scratch_dir("model");
    save_model(m, dir / "m.bsdh");
    CHECK(load_model(dir / "m.bsdh").u == m.u);
}

TEST_CASE("codes round trip") {
    std::mt19937_64 rng(5);
    for (Index bits : {1, 32, 64, 65, 130}) {
        const PackedCodes p = pack_codes(CodeMatrix(oracle::random_signs(bits, 7, rng)));
        const std::string bytes = serialize_codes(p);
        CHECK(bytes.size() == static_cast<std::size_t>(16 + 8 * p.words().size()));
        CHECK(parse_codes(bytes) == p);
    }
}

TEST_CASE("every truncation of a valid file is rejected with a format error") {
    std::mt19937_64 rng(6);
    SynthOptions o;
    o.n = 3;
    o.d1 = 2;
    o.d2 = 2;
    o.labels = 2;
    const std::string b2f = serialize_b2f(synth_multilabel(o));
    const std::string model = serialize_model(sample_model(rng));
    const std::string codes = serialize_codes(pack_codes(CodeMatrix(oracle::random_signs(70, 3, rng))));
    for (std::size_t len = 0; len < b2f.size(); ++len)
        CHECK_THROWS_AS(parse_b2f(std::string_view(b2f).substr(0, len)), FormatError);
    for (std::size_t len = 0; len < model.size(); ++len)
        CHECK_THROWS_AS(parse_model(std::string_view(model).substr(0, len)), FormatError);
    for (std::size_t len = 0; len < codes.size(); ++len)
        CHECK_THROWS_AS(parse_codes(std::string_view(codes).substr(0, len)), FormatError);
    CHECK_THROWS_AS(parse_codes(codes + "x"), FormatError);
    CHECK_THROWS_AS(parse_model(model + std::string(8, '\0')), FormatError);
}

TEST_CASE("random byte flips never crash the parsers") {
    std::mt19937_64 rng(7);
    const std::string model = serialize_model(sample_model(rng));
    const std::string codes = serialize_codes(pack_codes(CodeMatrix(oracle::random_signs(70, 3, rng))));
    SynthOptions o;
    o.n = 4;
    const std::string b2f = serialize_b2f(synth_multilabel(o));
    for (int t = 0; t < 300; ++t) {
        for (const std::string* src : {&model, &codes, &b2f}) {
            std::string s = *src;
            const int flips = 1 + static_cast<int>(rng() % 4);
            for (int f = 0; f < flips; ++f) s[rng() % s.size()] = static_cast<char>(rng() & 0xFF);
            try {
                if (src == &model) (void)parse_model(s);
                if (src == &codes) (void)parse_codes(s);
                if (src == &b2f) (void)parse_b2f(s);
            } catch (const Error&) {
                // rejected cleanly
            }
        }
    }
    CHECK(true);
}

TEST_CASE("format errors report the failing byte offset") {
    std::string bad = "B2F1";
    bad.append(16, '\0');
    try {
        (void)parse_b2f(bad);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 20);
        CHECK(std::string(e.what()).find("byte offset 20") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_codes("XXXX"), FormatError);
}

TEST_CASE("codes with dirty padding bits are rejected") {
    const PackedCodes p = pack_codes(CodeMatrix(Matrix(Matrix::Constant(3, 1, 1.0))));
    std::string bytes = serialize_codes(p);
    bytes[16] = static_cast<char>(0xFF);
    CHECK_THROWS_AS(parse_codes(bytes), Error);
}

TEST_CASE("IDX loader reads plain and gzipped files") {
    const fs::path dir = scratch_dir("idx");
    std::string images, labels;
    put_be32(images, 0x803);
    put_be32(images, 2);
    put_be32(images, 2);
    put_be32(images, 3);
    for (int i = 0; i < 12; ++i) images.push_back(static_cast<char>(i * 20));
    put_be32(labels, 0x801);
    put_be32(labels, 2);
    labels.push_back(7);
    labels.push_back(1);
    write_file_atomic(dir / "img", images);
    write_file_atomic(dir / "lbl", labels);
    write_gz(dir / "img.gz", images);
    write_gz(dir / "lbl.gz", labels);

    for (auto [img, lbl] : {std::pair{"img", "lbl"}, std::pair{"img.gz", "lbl.gz"}}) {
        const Dataset d = load_idx(dir / img, dir / lbl);
        REQUIRE(d.x.n() == 2);
        CHECK(d.x.d1() == 2);
        CHECK(d.x.d2() == 3);
        // row-major pixels: sample 0 row 1 col 0 is byte 3
        CHECK(d.x.sample(0)(1, 0) == doctest::Approx(60.0 / 255.0));
        CHECK(d.x.sample(1)(0, 2) == doctest::Approx(160.0 / 255.0));
        CHECK(d.y.dense()(7, 0) == 1.0);
        CHECK(d.y.dense()(1, 1) == 1.0);
    }
    CHECK(load_idx(dir / "img", dir / "lbl", PixelScale::Raw).x.sample(0)(1, 0) == 60.0);

    write_file_atomic(dir / "short", images.substr(0, images.size() - 1));
    CHECK_THROWS_AS(load_idx(dir / "short", dir / "lbl"), FormatError);
    CHECK_THROWS_AS(load_idx(dir / "lbl", dir / "lbl"), FormatError);
    CHECK_THROWS_AS(load_idx(dir / "missing", dir / "lbl"), Error);
}

TEST_CASE("synthetic data and splits are seeded") {
    SynthOptions o;
    o.n = 50;
    o.labels = 6;
    o.labels_per_sample = 3;
    o.seed = 9;
    const Dataset a = synth_multilabel(o), b = synth_multilabel(o);
    CHECK(a.x.vectorized() == b.x.vectorized());
    for (Index j = 0; j < 50; ++j) CHECK(a.y.dense().col(j).sum() == 3.0);
    o.labels_per_sample = 7;
    CHECK_THROWS_AS(synth_multilabel(o), InvalidValueError);

    const Split s = seeded_split(100, 60, 30, 1);
    CHECK(s.train.size() == 60);
    CHECK(s.query.size() == 30);
    std::set<Index> all(s.train.begin(), s.train.end());
    all.insert(s.query.begin(), s.query.end());
    CHECK(all.size() == 90);
    CHECK(s.train == seeded_split(100, 60, 30, 1).train);
    CHECK(s.train != seeded_split(100, 60, 30, 2).train);
    CHECK_THROWS_AS(seeded_split(10, 8, 3, 0), InvalidValueError);
}

TEST_CASE("manifest round trip") {
    Manifest m;
    m.set("method", std::string("bsdh"));
    m.set("lambda", 1e-5);
    m.set("bits", std::int64_t{32});
    m.set("seed", std::uint64_t{18446744073709551615ULL});
    m.set("method", std::string("lsh"));
    const Manifest back = Manifest::parse(m.to_string());
    CHECK(back.entries().size() == 4);
    CHECK(back.get("method") == "lsh");
    CHECK(back.get_double("lambda") == 1e-5);
    CHECK(back.get_int("bits") == 32);
    CHECK(back.get_uint("seed") == 18446744073709551615ULL);
    CHECK_THROWS_AS((void)back.get("absent"), Error);
    CHECK_THROWS_AS((void)back.get_int("method"), Error);
    CHECK_THROWS_AS(Manifest::parse("novalue\n"), Error);
    CHECK_THROWS_AS(m.set("a=b", std::string("x")), InvalidValueError);

    const std::vector<Index> idx{4, 0, 17};
    CHECK(parse_indices(format_indices(idx)) == idx);
    CHECK_THROWS_AS(parse_indices("1 x"), Error);
    CHECK_THROWS_AS(parse_indices("-1"), Error);
}

TEST_CASE("an all-zero IDX image loads as zero features") {
    const fs::path dir = scratch_dir("idx_zero");
    std::string images, labels;
    put_be32(images, 0x803);
    put_be32(images, 1);
    put_be32(images, 4);
    put_be32(images, 4);
    images.append(16, '\0');
    put_be32(labels, 0x801);
    put_be32(labels, 1);
    labels.push_back(3);
    write_file_atomic(dir / "img", images);
    write_file_atomic(dir / "lbl", labels);
    const Dataset d = load_idx(dir / "img", dir / "lbl");
    CHECK(d.x.vectorized().norm() == 0.0);
    CHECK(d.x.vectorized().size() == 16);
}

TEST_CASE("minimal B2F file with a single scalar feature") {
    Dataset d{FeatureTensor(1, 1, Matrix::Constant(1, 1, 0.75)), LabelMatrix(Matrix::Ones(1, 1))};
    const std::string bytes = serialize_b2f(d);
    CHECK(bytes.size() == 4 + 16 + 4 + 1);
    const Dataset back = parse_b2f(bytes);
    CHECK(back.x.n() == 1);
    CHECK(back.x.d1() == 1);
    CHECK(back.x.d2() == 1);
    CHECK(back.x.vectorized()(0, 0) == 0.75);
    CHECK(back.y.dense()(0, 0) == 1.0);
}

TEST_CASE("noise-free single-label synthetic data has no within-class scatter") {
    SynthOptions o;
    o.n = 30;
    o.d1 = 5;
    o.d2 = 4;
    o.labels = 3;
    o.noise = 0.0;
    o.seed = 2;
    const Dataset d = synth_multilabel(o);
    const ClassStatistics st = compute_class_statistics(d.x, d.y);
    CHECK(scatter_for_q1(st, d.x, d.y, Matrix::Identity(4, 4)).within.norm() <= 1e-12);
    CHECK(scatter_for_q2(st, d.x, d.y, Matrix::Identity(5, 5)).within.norm() <= 1e-12);
}

TEST_CASE("two well-separated synthetic classes are linearly separable") {
    SynthOptions o;
    o.n = 60;
    o.d1 = 4;
    o.d2 = 4;
    o.labels = 2;
    o.noise = 0.05;
    o.seed = 5;
    const Dataset d = synth_multilabel(o);
    Matrix x(17, d.x.n());
    x.topRows(16) = d.x.vectorized();
    x.row(16).setOnes();
    const Matrix t = 2.0 * d.y.dense().row(0).array() - 1.0;
    const Matrix w = (x * x.transpose() + 1e-8 * Matrix::Identity(17, 17)).ldlt().solve(x * t.transpose());
    const Matrix score = w.transpose() * x;
    for (Index j = 0; j < d.x.n(); ++j) CHECK((score(0, j) >= 0.0) == (t(0, j) > 0.0));
}

TEST_CASE("seeded synthetic data reproduces the pinned golden values") {
    std::ifstream in(std::string(BSDH_TEST_DATA_DIR) + "/golden/synth_seed77.txt");
    REQUIRE(in.good());
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') values.push_back(std::stod(line));
    }
    SynthOptions o;
    o.n = 3;
    o.d1 = 2;
    o.d2 = 3;
    o.labels = 4;
    o.labels_per_sample = 2;
    o.noise = 0.3;
    o.seed = 77;
    const Dataset d = synth_multilabel(o);
    REQUIRE(values.size() == 18 + 12);
    for (Index k = 0; k < 18; ++k)
        CHECK(d.x.vectorized().data()[k] == doctest::Approx(values[static_cast<std::size_t>(k)]).epsilon(1e-12));
    for (Index k = 0; k < 12; ++k) CHECK(d.y.dense().data()[k] == values[static_cast<std::size_t>(18 + k)]);
}

TEST_CASE("a trained model survives save, load and save unchanged") {
    SynthOptions o;
    o.n = 50;
    o.d1 = 5;
    o.d2 = 4;
    o.labels = 3;
    o.seed = 6;
    const Dataset d = synth_multilabel(o);
    TrainConfig cfg;
    cfg.bits = 10;
    BilinearFitOptions proj;
    proj.c1 = 3;
    proj.c2 = 2;
    const TrainResult r = train(d.x, d.y, cfg, proj);
    const fs::path dir = scratch_dir("model_trip");
    save_model(r.model, dir / "a.bsdh");
    const BilinearModel back = load_model(dir / "a.bsdh");
    save_model(back, dir / "b.bsdh");
    CHECK(read_file(dir / "a.bsdh") == read_file(dir / "b.bsdh"));
    CHECK(encode(d.x, back) == encode(d.x, r.model));
    const std::string bytes = read_file(dir / "a.bsdh");
    CHECK_THROWS_AS(parse_model(std::string_view(bytes).substr(0, bytes.size() / 2)), FormatError);
}
