#pragma once

// Hamming ranking over packed codes and the retrieval metrics computed on
// the resulting ranked lists (precision@k, recall@k, AP/MAP, PR curves).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsdh/types.hpp"

namespace bsdh {

// Number of differing bits between two packed codes of `bits` bits.
int hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, Index bits);

struct RankingResult {
    std::vector<Index> order;               // database indices, nearest first
    std::vector<int> distances;             // aligned with order, non-decreasing
    std::vector<std::uint8_t> relevance;    // rel(v_i), aligned with order

    Index size() const { return static_cast<Index>(order.size()); }
    Index relevant_count() const;
};

// Ranks every database item by Hamming distance to query `query_index` of
// `queries`. Ties are broken by ascending tie key; the key defaults to the
// database index. Relevance = shares at least one label with the query.
RankingResult rank_database(const PackedCodes& queries, Index query_index, const LabelMatrix& query_labels,
                            const PackedCodes& database, const LabelMatrix& database_labels,
                            std::span<const Index> tie_keys = {});

double precision_at_k(const RankingResult& result, Index k);
// Throws NoRelevantItemsError when the ranking holds no relevant item.
double recall_at_k(const RankingResult& result, Index k);
// Full-ranking AP: sum_i P_i rel_i / sum_i rel_i.
double average_precision(const RankingResult& result);

struct PrPoint {
    Index k;
    double recall;
    double precision;
};

// One point per cut-off k = 1..n.
std::vector<PrPoint> pr_curve(const RankingResult& result);

struct RetrievalReport {
    double map = 0.0;
    Index valid_queries = 0;
    std::vector<Index> excluded_queries;   // no relevant database item
    std::vector<double> average_precisions;  // per query; NaN when excluded
    std::vector<Index> k_grid;
    std::vector<double> precision_at;      // mean over valid queries, per k_grid entry
    std::vector<double> recall_at;
    std::vector<PrPoint> mean_pr_curve;    // empty unless requested
};

struct RetrievalOptions {
    std::vector<Index> k_grid;  // cut-offs beyond the database size are dropped
    bool pr_curve = false;
    int workers = 1;            // <= 0: hardware concurrency
    std::vector<Index> tie_keys;
};

// Evaluates every query against the database. Queries without any relevant
// item are excluded from all averages. Throws if no query remains.
RetrievalReport evaluate_retrieval(const PackedCodes& queries, const LabelMatrix& query_labels,
                                   const PackedCodes& database, const LabelMatrix& database_labels,
                                   const RetrievalOptions& options = {});

double mean_average_precision(const PackedCodes& queries, const LabelMatrix& query_labels,
                              const PackedCodes& database, const LabelMatrix& database_labels,
                              int workers = 1);

// {1, 5, 10, 50, 100, 500, 1000}
std::vector<Index> default_k_grid();

struct MetricRow {
    std::string method;
    Index code_length;
    std::string metric;
    Index k;  // 0 for MAP
    double value;
};

std::vector<MetricRow> metric_rows(const std::string& method, Index code_length, const RetrievalReport& report);

// "method,code_length,metric,k,value" with one line per row.
std::string format_metrics_csv(const std::vector<MetricRow>& rows);
// "k,recall,precision"
std::string format_pr_csv(const std::vector<PrPoint>& curve);

}  // namespace bsdh
