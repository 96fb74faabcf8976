#include "bsdh/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "bsdh/error.hpp"

namespace bsdh {

int hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, Index bits) {
    const auto words = static_cast<std::size_t>((bits + 63) / 64);
    if (bits < 1 || a.size() != words || b.size() != words) {
        throw ShapeError("hamming_distance: codes of " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " words do not hold " + std::to_string(bits) + " bits");
    }
    int d = 0;
    for (std::size_t i = 0; i < words; ++i) d += std::popcount(a[i] ^ b[i]);
    return d;
}

Index RankingResult::relevant_count() const {
    return static_cast<Index>(std::count(relevance.begin(), relevance.end(), std::uint8_t{1}));
}

RankingResult rank_database(const PackedCodes& queries, Index query_index, const LabelMatrix& query_labels,
                            const PackedCodes& database, const LabelMatrix& database_labels,
                            std::span<const Index> tie_keys) {
    const Index n = database.n();
    if (n == 0) throw ShapeError("rank_database: empty database");
    if (queries.bits() != database.bits()) {
        throw ShapeError("rank_database: query codes have " + std::to_string(queries.bits()) +
                         " bits, database codes " + std::to_string(database.bits()));
    }
    if (database_labels.n() != n || query_labels.n() != queries.n() || query_labels.l() != database_labels.l()) {
        throw ShapeError("rank_database: label matrices do not match the code sets");
    }
    if (query_index < 0 || query_index >= queries.n()) throw ShapeError("rank_database: query index out of range");
    if (!tie_keys.empty() && static_cast<Index>(tie_keys.size()) != n) {
        throw ShapeError("rank_database: one tie key per database item required");
    }

    const auto q = queries.code(query_index);
    std::vector<int> dist(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        dist[static_cast<std::size_t>(i)] = hamming_distance(q, database.code(i), database.bits());
    }

    RankingResult r;
    r.order.resize(static_cast<std::size_t>(n));
    std::iota(r.order.begin(), r.order.end(), Index{0});
    if (tie_keys.empty()) {
        std::stable_sort(r.order.begin(), r.order.end(), [&](Index a, Index b) {
            return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
        });
    } else {
        std::sort(r.order.begin(), r.order.end(), [&](Index a, Index b) {
            const auto da = dist[static_cast<std::size_t>(a)];
            const auto db = dist[static_cast<std::size_t>(b)];
            if (da != db) return da < db;
            return tie_keys[static_cast<std::size_t>(a)] < tie_keys[static_cast<std::size_t>(b)];
        });
    }

    r.distances.reserve(static_cast<std::size_t>(n));
    r.relevance.reserve(static_cast<std::size_t>(n));
    for (Index idx : r.order) {
        r.distances.push_back(dist[static_cast<std::size_t>(idx)]);
        r.relevance.push_back(query_labels.shares_label(query_index, database_labels, idx) ? 1 : 0);
    }
    return r;
}

double precision_at_k(const RankingResult& result, Index k) {
    if (k < 1 || k > result.size()) {
        throw InvalidValueError("precision_at_k: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(result.size()) + "]");
    }
    Index hits = 0;
    for (Index i = 0; i < k; ++i) hits += result.relevance[static_cast<std::size_t>(i)];
    return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_at_k(const RankingResult& result, Index k) {
    if (k < 1 || k > result.size()) {
        throw InvalidValueError("recall_at_k: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(result.size()) + "]");
    }
    const Index total = result.relevant_count();
    if (total == 0) throw NoRelevantItemsError("recall_at_k: query has no relevant database item");
    Index hits = 0;
    for (Index i = 0; i < k; ++i) hits += result.relevance[static_cast<std::size_t>(i)];
    return static_cast<double>(hits) / static_cast<double>(total);
}

double average_precision(const RankingResult& result) {
    Index hits = 0;
    double sum = 0.0;
    for (Index i = 0; i < result.size(); ++i) {
        if (result.relevance[static_cast<std::size_t>(i)]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    if (hits == 0) throw NoRelevantItemsError("average_precision: query has no relevant database item");
    return sum / static_cast<double>(hits);
}

std::vector<PrPoint> pr_curve(const RankingResult& result) {
    const Index total = result.relevant_count();
    if (total == 0) throw NoRelevantItemsError("pr_curve: query has no relevant database item");
    std::vector<PrPoint> curve;
    curve.reserve(result.order.size());
    Index hits = 0;
    for (Index k = 1; k <= result.size(); ++k) {
        hits += result.relevance[static_cast<std::size_t>(k - 1)];
        curve.push_back({k, static_cast<double>(hits) / static_cast<double>(total),
                         static_cast<double>(hits) / static_cast<double>(k)});
    }
    return curve;
}

namespace {

struct QueryMetrics {
    bool valid = false;
    double ap = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<PrPoint> curve;
};

QueryMetrics evaluate_query(const PackedCodes& queries, Index q, const LabelMatrix& query_labels,
                            const PackedCodes& database, const LabelMatrix& database_labels,
                            const std::vector<Index>& k_grid, const RetrievalOptions& options) {
    const RankingResult ranking =
        rank_database(queries, q, query_labels, database, database_labels, options.tie_keys);
    QueryMetrics m;
    if (ranking.relevant_count() == 0) return m;
    m.valid = true;
    m.ap = average_precision(ranking);
    for (Index k : k_grid) {
        m.precision.push_back(precision_at_k(ranking, k));
        m.recall.push_back(recall_at_k(ranking, k));
    }
    if (options.pr_curve) m.curve = pr_curve(ranking);
    return m;
}

}  // namespace

RetrievalReport evaluate_retrieval(const PackedCodes& queries, const LabelMatrix& query_labels,
                                   const PackedCodes& database, const LabelMatrix& database_labels,
                                   const RetrievalOptions& options) {
    const Index nq = queries.n();
    if (nq == 0) throw ShapeError("evaluate_retrieval: no queries");
    if (database.n() == 0) throw ShapeError("evaluate_retrieval: empty database");

    RetrievalReport report;
    for (Index k : options.k_grid) {
        if (k >= 1 && k <= database.n()) report.k_grid.push_back(k);
    }

    std::vector<QueryMetrics> per_query(static_cast<std::size_t>(nq));
    int workers = options.workers > 0 ? options.workers : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, static_cast<int>(std::min<Index>(nq, 256)));
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));
    auto run = [&](int worker) {
        try {
            for (Index q = worker; q < nq; q += workers) {
                per_query[static_cast<std::size_t>(q)] =
                    evaluate_query(queries, q, query_labels, database, database_labels, report.k_grid, options);
            }
        } catch (...) {
            failures[static_cast<std::size_t>(worker)] = std::current_exception();
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(run, t);
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    report.precision_at.assign(report.k_grid.size(), 0.0);
    report.recall_at.assign(report.k_grid.size(), 0.0);
    if (options.pr_curve) {
        report.mean_pr_curve.resize(static_cast<std::size_t>(database.n()));
        for (Index k = 1; k <= database.n(); ++k) report.mean_pr_curve[static_cast<std::size_t>(k - 1)] = {k, 0.0, 0.0};
    }
    double ap_sum = 0.0;
    for (Index q = 0; q < nq; ++q) {
        const QueryMetrics& m = per_query[static_cast<std::size_t>(q)];
        report.average_precisions.push_back(m.ap);
        if (!m.valid) {
            report.excluded_queries.push_back(q);
            continue;
        }
        ++report.valid_queries;
        ap_sum += m.ap;
        for (std::size_t i = 0; i < report.k_grid.size(); ++i) {
            report.precision_at[i] += m.precision[i];
            report.recall_at[i] += m.recall[i];
        }
        for (std::size_t i = 0; i < m.curve.size(); ++i) {
            report.mean_pr_curve[i].recall += m.curve[i].recall;
            report.mean_pr_curve[i].precision += m.curve[i].precision;
        }
    }
    if (report.valid_queries == 0) {
        throw NoRelevantItemsError("evaluate_retrieval: no query has a relevant database item");
    }
    const auto valid = static_cast<double>(report.valid_queries);
    report.map = ap_sum / valid;
    for (auto& v : report.precision_at) v /= valid;
    for (auto& v : report.recall_at) v /= valid;
    for (auto& p : report.mean_pr_curve) {
        p.recall /= valid;
        p.precision /= valid;
    }
    return report;
}

double mean_average_precision(const PackedCodes& queries, const LabelMatrix& query_labels,
                              const PackedCodes& database, const LabelMatrix& database_labels, int workers) {
    RetrievalOptions options;
    options.workers = workers;
    return evaluate_retrieval(queries, query_labels, database, database_labels, options).map;
}

std::vector<Index> default_k_grid() { return {1, 5, 10, 50, 100, 500, 1000}; }

std::vector<MetricRow> metric_rows(const std::string& method, Index code_length, const RetrievalReport& report) {
    std::vector<MetricRow> rows;
    rows.push_back({method, code_length, "map", 0, report.map});
    for (std::size_t i = 0; i < report.k_grid.size(); ++i) {
        rows.push_back({method, code_length, "precision", report.k_grid[i], report.precision_at[i]});
    }
    for (std::size_t i = 0; i < report.k_grid.size(); ++i) {
        rows.push_back({method, code_length, "recall", report.k_grid[i], report.recall_at[i]});
    }
    return rows;
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "method,code_length,metric,k,value\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.code_length << ',' << r.metric << ',' << r.k << ',' << r.value << '\n';
    }
    return out.str();
}

std::string format_pr_csv(const std::vector<PrPoint>& curve) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "k,recall,precision\n";
    for (const auto& p : curve) out << p.k << ',' << p.recall << ',' << p.precision << '\n';
    return out.str();
}

}  // namespace bsdh
