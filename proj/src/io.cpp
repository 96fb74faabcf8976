#include "bsdh/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <system_error>

#include <zlib.h>

#include "bsdh/error.hpp"

namespace bsdh {

namespace {

using Wide = unsigned __int128;

class ByteWriter {
public:
    void raw(std::string_view s) { out_.append(s); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void matrix(const Matrix& m) {
        for (Index k = 0; k < m.size(); ++k) f64(m.data()[k]);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string context) : bytes_(bytes), context_(std::move(context)) {}

    std::uint64_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    [[noreturn]] void fail(const std::string& what) const { throw FormatError(context_ + ": " + what, pos_); }

    void need(std::size_t n) const {
        if (remaining() < n) {
            fail("truncated input, needed " + std::to_string(n) + " more bytes but " + std::to_string(remaining()) +
                 " remain");
        }
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<std::uint8_t>(bytes_[pos_++])} << (8 * i);
        return v;
    }
    std::uint32_t u32_be() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_++]);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(bytes_[pos_++])} << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    Matrix matrix(Index rows, Index cols) {
        need(static_cast<std::size_t>(rows * cols) * 8);
        Matrix m(rows, cols);
        for (Index k = 0; k < m.size(); ++k) m.data()[k] = f64();
        return m;
    }
    void expect_end() const {
        if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
    }

private:
    std::string_view bytes_;
    std::string context_;
    std::size_t pos_ = 0;
};

// gzread passes uncompressed files through unchanged.
std::string read_maybe_gzipped(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw Error("cannot open " + path.string());
    std::string out;
    char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
    int errnum = 0;
    const char* msg = gzerror(f, &errnum);
    const std::string message = msg != nullptr ? msg : "";
    gzclose(f);
    if (got < 0 || (errnum != Z_OK && errnum != Z_BUF_ERROR)) {
        throw FormatError(path.string() + ": decompression failed: " + message, out.size());
    }
    return out;
}

std::uint32_t checked_u32(Index v, const char* what) {
    if (v < 0 || v > static_cast<Index>(UINT32_MAX)) {
        throw ShapeError(std::string(what) + " does not fit the file format");
    }
    return static_cast<std::uint32_t>(v);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

}  // namespace

// ---------------------------------------------------------------------------
// IDX

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, PixelScale scale) {
    const std::string img_bytes = read_maybe_gzipped(images);
    ByteReader img(img_bytes, images.string());
    if (img.u32_be() != 0x00000803U) throw FormatError(images.string() + ": bad IDX image magic", 0);
    const std::uint32_t n = img.u32_be();
    const std::uint32_t rows = img.u32_be();
    const std::uint32_t cols = img.u32_be();
    if (n == 0 || rows == 0 || cols == 0) img.fail("empty image set");
    if (Wide{rows} * cols * n > img.remaining()) img.fail("truncated pixel payload");
    const std::size_t pixels = std::size_t{rows} * cols;

    const std::string lbl_bytes = read_maybe_gzipped(labels);
    ByteReader lbl(lbl_bytes, labels.string());
    if (lbl.u32_be() != 0x00000801U) throw FormatError(labels.string() + ": bad IDX label magic", 0);
    const std::uint32_t n_labels = lbl.u32_be();
    if (n_labels != n) {
        lbl.fail("label count " + std::to_string(n_labels) + " does not match image count " + std::to_string(n));
    }
    lbl.need(n);

    const double factor = scale == PixelScale::UnitInterval ? 1.0 / 255.0 : 1.0;
    Matrix data(static_cast<Index>(pixels), n);
    std::vector<int> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto raw = img.raw(pixels);
        // IDX pixels are row-major; the tensor stores column-major samples.
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                data(static_cast<Index>(r + c * rows), i) =
                    factor * static_cast<std::uint8_t>(raw[std::size_t{r} * cols + c]);
            }
        }
        const std::uint8_t label = lbl.u8();
        if (label > 9) lbl.fail("digit label " + std::to_string(label) + " outside 0..9");
        ids[i] = label;
    }
    return {FeatureTensor(rows, cols, std::move(data)), LabelMatrix::from_class_ids(ids, 10)};
}

// ---------------------------------------------------------------------------
// B2F

std::string serialize_b2f(const Dataset& data) {
    const FeatureTensor& x = data.x;
    const Matrix& y = data.y.dense();
    if (x.n() != data.y.n()) throw ShapeError("serialize_b2f: features and labels disagree on n");
    ByteWriter w;
    w.raw("B2F1");
    w.u32(checked_u32(x.n(), "n"));
    w.u32(checked_u32(x.d1(), "d1"));
    w.u32(checked_u32(x.d2(), "d2"));
    w.u32(checked_u32(data.y.l(), "l"));
    for (Index i = 0; i < x.n(); ++i) {
        const auto s = x.sample(i);
        for (Index r = 0; r < x.d1(); ++r) {
            for (Index c = 0; c < x.d2(); ++c) w.f32(static_cast<float>(s(r, c)));
        }
    }
    for (Index k = 0; k < y.rows(); ++k) {
        for (Index j = 0; j < y.cols(); ++j) w.u8(y(k, j) != 0.0 ? 1 : 0);
    }
    return w.take();
}

Dataset parse_b2f(std::string_view bytes) {
    ByteReader r(bytes, "B2F");
    if (r.raw(4) != "B2F1") throw FormatError("B2F: bad magic", 0);
    const std::uint32_t n = r.u32();
    const std::uint32_t d1 = r.u32();
    const std::uint32_t d2 = r.u32();
    const std::uint32_t l = r.u32();
    if (n == 0 || d1 == 0 || d2 == 0 || l == 0) r.fail("zero dimension in header");
    const Wide expected = Wide{n} * d1 * d2 * 4 + Wide{l} * n;
    if (expected != r.remaining()) {
        r.fail("header declares " + (expected > UINT64_MAX ? std::string("more than 2^64") : std::to_string(static_cast<std::uint64_t>(expected))) +
               " payload bytes but " + std::to_string(r.remaining()) + " are present");
    }
    Matrix data(static_cast<Index>(d1) * d2, n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t row = 0; row < d1; ++row) {
            for (std::uint32_t col = 0; col < d2; ++col) {
                const auto at = r.offset();
                const float v = r.f32();
                if (!std::isfinite(v)) throw FormatError("B2F: non-finite feature value", at);
                data(static_cast<Index>(row + col * d1), i) = v;
            }
        }
    }
    Matrix y(l, n);
    for (std::uint32_t k = 0; k < l; ++k) {
        for (std::uint32_t j = 0; j < n; ++j) {
            const auto at = r.offset();
            const std::uint8_t v = r.u8();
            if (v > 1) throw FormatError("B2F: label byte " + std::to_string(v) + " is not 0 or 1", at);
            y(k, j) = v;
        }
    }
    for (std::uint32_t j = 0; j < n; ++j) {
        if (y.col(j).sum() == 0.0) r.fail("sample " + std::to_string(j) + " has no label");
    }
    return {FeatureTensor(d1, d2, std::move(data)), LabelMatrix(std::move(y))};
}

Dataset load_b2f(const std::filesystem::path& path) { return parse_b2f(read_file(path)); }

void save_b2f(const Dataset& data, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_b2f(data));
}

// ---------------------------------------------------------------------------
// Model file

std::string serialize_model(const BilinearModel& model) {
    model.validate();
    ByteWriter w;
    w.raw("BSDH");
    w.u32(kModelFormatVersion);
    w.u32(checked_u32(model.q1.rows(), "d1"));
    w.u32(checked_u32(model.q2.rows(), "d2"));
    w.u32(checked_u32(model.q1.cols(), "c1"));
    w.u32(checked_u32(model.q2.cols(), "c2"));
    w.u32(checked_u32(model.u.rows(), "c"));
    w.u32(checked_u32(model.w.cols(), "l"));
    const HyperParams& hp = model.hyper;
    w.f64(hp.lambda);
    w.f64(hp.mu);
    w.f64(hp.tol);
    w.u32(checked_u32(hp.t1, "t1"));
    w.u32(checked_u32(hp.t2, "t2"));
    w.u64(hp.seed);
    w.u8(hp.center_features ? 1 : 0);
    w.matrix(model.q1);
    w.matrix(model.q2);
    w.matrix(model.u);
    w.matrix(model.w);
    w.matrix(model.feature_mean);
    w.u32(checked_u32(static_cast<Index>(model.objective_trace.size()), "trace length"));
    for (double v : model.objective_trace) w.f64(v);
    return w.take();
}

BilinearModel parse_model(std::string_view bytes) {
    ByteReader r(bytes, "model file");
    if (r.raw(4) != "BSDH") throw FormatError("model file: bad magic", 0);
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
        throw FormatError("model file: unsupported version " + std::to_string(version) + " (expected " +
                              std::to_string(kModelFormatVersion) + ")",
                          4);
    }
    const Index d1 = r.u32();
    const Index d2 = r.u32();
    const Index c1 = r.u32();
    const Index c2 = r.u32();
    const Index c = r.u32();
    const Index l = r.u32();
    if (d1 == 0 || d2 == 0 || c1 == 0 || c2 == 0 || c == 0 || l == 0 || c1 > d1 || c2 > d2) {
        r.fail("inconsistent shape header");
    }
    // Reject headers whose payload cannot fit before allocating anything.
    const Wide matrix_bytes =
        Wide{8} * (Wide(d1) * c1 + Wide(d2) * c2 + Wide(c) * c1 * c2 + Wide(c) * l + Wide(c1) * c2);
    constexpr std::size_t kHyperBytes = 3 * 8 + 2 * 4 + 8 + 1;
    if (matrix_bytes + kHyperBytes + 4 > r.remaining()) {
        r.fail("truncated input: header declares more matrix data than the file holds");
    }

    BilinearModel m;
    HyperParams& hp = m.hyper;
    hp.lambda = r.f64();
    hp.mu = r.f64();
    hp.tol = r.f64();
    hp.t1 = static_cast<int>(r.u32());
    hp.t2 = static_cast<int>(r.u32());
    hp.seed = r.u64();
    const std::uint8_t center = r.u8();
    if (center > 1) r.fail("invalid centering flag");
    hp.center_features = center == 1;
    hp.c1 = c1;
    hp.c2 = c2;
    hp.bits = c;
    m.q1 = r.matrix(d1, c1);
    m.q2 = r.matrix(d2, c2);
    m.u = r.matrix(c, c1 * c2);
    m.w = r.matrix(c, l);
    m.feature_mean = r.matrix(c1 * c2, 1);
    const std::uint32_t trace_len = r.u32();
    r.need(std::size_t{trace_len} * 8);
    m.objective_trace.resize(trace_len);
    for (auto& v : m.objective_trace) v = r.f64();
    r.expect_end();
    m.validate();
    return m;
}

void save_model(const BilinearModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

BilinearModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

// ---------------------------------------------------------------------------
// Codes file

std::string serialize_codes(const PackedCodes& codes) {
    ByteWriter w;
    w.raw("BSDC");
    w.u32(kCodesFormatVersion);
    w.u32(checked_u32(codes.bits(), "bits"));
    w.u32(checked_u32(codes.n(), "n"));
    for (std::uint64_t word : codes.words()) w.u64(word);
    return w.take();
}

PackedCodes parse_codes(std::string_view bytes) {
    ByteReader r(bytes, "codes file");
    if (r.raw(4) != "BSDC") throw FormatError("codes file: bad magic", 0);
    const std::uint32_t version = r.u32();
    if (version != kCodesFormatVersion) {
        throw FormatError("codes file: unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t bits = r.u32();
    const std::uint32_t n = r.u32();
    if (bits == 0) r.fail("zero code length");
    const std::uint64_t words = std::uint64_t{n} * ((std::uint64_t{bits} + 63) / 64);
    if (words * 8 != r.remaining()) {
        r.fail("header declares " + std::to_string(words * 8) + " payload bytes but " +
               std::to_string(r.remaining()) + " are present");
    }
    std::vector<std::uint64_t> data(words);
    for (auto& v : data) v = r.u64();
    try {
        return {bits, n, std::move(data)};
    } catch (const Error& e) {
        throw FormatError(std::string("codes file: ") + e.what(), r.offset());
    }
}

void save_codes(const PackedCodes& codes, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_codes(codes));
}

PackedCodes load_codes(const std::filesystem::path& path) { return parse_codes(read_file(path)); }

// ---------------------------------------------------------------------------
// Synthetic data and splits

Dataset synth_multilabel(const SynthOptions& opts) {
    if (opts.n < 1 || opts.d1 < 1 || opts.d2 < 1 || opts.labels < 1) {
        throw InvalidValueError("synth_multilabel: sizes must be positive");
    }
    if (opts.labels_per_sample < 1 || opts.labels_per_sample > opts.labels) {
        throw InvalidValueError("synth_multilabel: labels per sample must lie in [1, " +
                                std::to_string(opts.labels) + "]");
    }
    if (!(opts.noise >= 0.0) || !std::isfinite(opts.noise)) {
        throw InvalidValueError("synth_multilabel: noise must be finite and >= 0");
    }
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index dim = opts.d1 * opts.d2;

    Matrix prototypes(dim, opts.labels);
    for (Index k = 0; k < prototypes.size(); ++k) prototypes.data()[k] = normal(rng);

    Matrix data(dim, opts.n);
    Matrix y = Matrix::Zero(opts.labels, opts.n);
    std::vector<Index> classes(static_cast<std::size_t>(opts.labels));
    for (Index j = 0; j < opts.n; ++j) {
        std::iota(classes.begin(), classes.end(), Index{0});
        // Partial Fisher-Yates: the first labels_per_sample entries are the draw.
        for (Index t = 0; t < opts.labels_per_sample; ++t) {
            std::uniform_int_distribution<Index> pick(t, opts.labels - 1);
            std::swap(classes[static_cast<std::size_t>(t)], classes[static_cast<std::size_t>(pick(rng))]);
        }
        Vector sample = Vector::Zero(dim);
        for (Index t = 0; t < opts.labels_per_sample; ++t) {
            const Index c = classes[static_cast<std::size_t>(t)];
            sample += prototypes.col(c);
            y(c, j) = 1.0;
        }
        sample /= static_cast<double>(opts.labels_per_sample);
        if (opts.noise > 0.0) {
            for (Index k = 0; k < dim; ++k) sample(k) += opts.noise * normal(rng);
        }
        data.col(j) = sample;
    }
    return {FeatureTensor(opts.d1, opts.d2, std::move(data)), LabelMatrix(std::move(y))};
}

Split seeded_split(Index n, Index n_train, Index n_query, std::uint64_t seed) {
    if (n_train < 1 || n_query < 0 || n_train + n_query > n) {
        throw InvalidValueError("seeded_split: cannot take " + std::to_string(n_train) + " training and " +
                                std::to_string(n_query) + " query samples from " + std::to_string(n));
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(seed);
    // Explicit Fisher-Yates on raw engine output so the split is stable across standard libraries.
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    Split s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.query.assign(perm.begin() + n_train, perm.begin() + n_train + n_query);
    return s;
}

Dataset subset(const Dataset& data, const std::vector<Index>& indices) {
    return {data.x.subset(indices), data.y.subset(indices)};
}

// ---------------------------------------------------------------------------
// Manifest

void Manifest::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
        throw InvalidValueError("manifest: invalid entry '" + key + "'");
    }
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void Manifest::set(const std::string& key, double value) { set(key, format_double(value)); }
void Manifest::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
void Manifest::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

bool Manifest::has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

const std::string& Manifest::get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw Error("manifest: missing key '" + key + "'");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error("manifest: key '" + key + "' has non-numeric value '" + text + "'");
    }
    return value;
}

}  // namespace

double Manifest::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
std::int64_t Manifest::get_int(const std::string& key) const { return parse_number<std::int64_t>(key, get(key)); }
std::uint64_t Manifest::get_uint(const std::string& key) const {
    return parse_number<std::uint64_t>(key, get(key));
}

std::string Manifest::to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

Manifest Manifest::parse(std::string_view text) {
    Manifest m;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw Error("manifest: line " + std::to_string(line_no) + " is not key=value");
        }
        m.set(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void Manifest::save(const std::filesystem::path& path) const { write_file_atomic(path, to_string()); }

std::string format_indices(const std::vector<Index>& indices) {
    std::string out;
    for (Index i : indices) out += std::to_string(i) + "\n";
    return out;
}

std::vector<Index> parse_indices(std::string_view text) {
    std::vector<Index> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) {
        Index v = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v < 0) {
            throw Error("index list: invalid entry '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot rename " + tmp.string() + " to " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace bsdh
