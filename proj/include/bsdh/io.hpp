#pragma once

// Dataset loaders, synthetic data, and the binary/text artifacts written by
// the CLI. All binary formats are little-endian except IDX, which is
// big-endian by definition.
//
// B2F (2D feature container)
//   "B2F1" | u32 n | u32 d1 | u32 d2 | u32 l
//   | n * d1*d2 f32, each sample row-major
//   | l*n u8 labels, row-major (byte k*n + j = Y(k, j))
//
// Model file
//   "BSDH" | u32 version | u32 d1 d2 c1 c2 c l
//   | f64 lambda mu tol | u32 t1 t2 | u64 seed | u8 center
//   | f64 Q1, Q2, U, W, feature_mean (column-major)
//   | u32 trace_len | f64 trace[trace_len]
//
// Codes file
//   "BSDC" | u32 version | u32 bits | u32 n | u64 words[n * ceil(bits/64)]

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bsdh/types.hpp"

namespace bsdh {

struct Dataset {
    FeatureTensor x;
    LabelMatrix y;
};

enum class PixelScale { UnitInterval, Raw };

// MNIST IDX image/label pair. Gzipped files are read transparently. Pixels
// are divided by 255 unless scale is Raw; labels become one-hot over 10 rows.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 PixelScale scale = PixelScale::UnitInterval);

Dataset parse_b2f(std::string_view bytes);
std::string serialize_b2f(const Dataset& data);
Dataset load_b2f(const std::filesystem::path& path);
void save_b2f(const Dataset& data, const std::filesystem::path& path);

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const BilinearModel& model);
BilinearModel parse_model(std::string_view bytes);
void save_model(const BilinearModel& model, const std::filesystem::path& path);
BilinearModel load_model(const std::filesystem::path& path);

inline constexpr std::uint32_t kCodesFormatVersion = 1;

std::string serialize_codes(const PackedCodes& codes);
PackedCodes parse_codes(std::string_view bytes);
void save_codes(const PackedCodes& codes, const std::filesystem::path& path);
PackedCodes load_codes(const std::filesystem::path& path);

struct SynthOptions {
    Index n = 100;
    Index d1 = 8;
    Index d2 = 8;
    Index labels = 4;
    Index labels_per_sample = 1;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

// Per-class standard-normal prototypes; each sample is the mean of the
// prototypes of its labels plus noise * N(0, 1) per entry.
Dataset synth_multilabel(const SynthOptions& opts);

struct Split {
    std::vector<Index> train;
    std::vector<Index> query;
};

// Seeded shuffle of 0..n-1; the first n_train indices train, the next n_query query.
Split seeded_split(Index n, Index n_train, Index n_query, std::uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<Index>& indices);

// Flat "key=value" text file, keys kept in insertion order.
class Manifest {
public:
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, std::uint64_t value);

    bool has(const std::string& key) const;
    // Throws Error when the key is missing.
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_string() const;
    static Manifest parse(std::string_view text);
    static Manifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_indices(const std::vector<Index>& indices);
std::vector<Index> parse_indices(std::string_view text);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace bsdh
