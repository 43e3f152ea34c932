#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdml/record.hpp"
#include "tdml/retrieval.hpp"

namespace tdml {

// Ranked relevance of every candidate for one query (query itself excluded).
struct QueryOutcome {
  std::string query_id;
  std::string query_label;
  std::vector<bool> relevant;  // relevant[r] for the candidate at rank r + 1
  std::size_t ng = 0;          // number of relevant candidates

  static QueryOutcome from_labels(std::string id, std::string label,
                                  std::span<const std::string> ranked_labels);
};

// Cut-off rule for NMRR: K(q) = min(ng_factor * NG(q), gtm_factor * GTM),
// the GTM term dropped when cap_by_gtm is false. Items ranked beyond K(q)
// count as penalty * K(q).
struct NmrrOptions {
  double ng_factor = 4.0;
  double gtm_factor = 2.0;
  bool cap_by_gtm = true;
  double penalty = 1.25;
};

// Relevant items among the first min(k, list length), divided by k.
double precision_at_k(const QueryOutcome& outcome, std::size_t k);

// Mean of i / rank_i over the NG relevant items. Throws UndefinedQueryError
// when NG is 0.
double average_precision(const QueryOutcome& outcome);

double nmrr(const QueryOutcome& outcome, std::size_t gtm, const NmrrOptions& options = {});

inline const std::vector<std::size_t> kDefaultCutoffs = {5, 10, 50, 100, 1000};

struct MetricsReport {
  double anmrr = 0.0;
  double map = 0.0;
  std::map<std::size_t, double> precision_at;
  std::map<std::string, double> per_class_anmrr;
  std::size_t query_count = 0;
  std::size_t gtm = 0;
};

struct EvaluateOptions {
  NmrrOptions nmrr;
  std::optional<std::size_t> gtm;  // defaults to the max NG over the query set
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  unsigned threads = 1;
};

// Ranks every query against the whole index, excluding the index row with
// the query's own id. Results do not depend on the thread count.
MetricsReport evaluate(const EmbeddingIndex& index, std::span<const VectorRecord> queries,
                       const EvaluateOptions& options = {});

// Self-retrieval: every indexed record is a query against all others.
MetricsReport evaluate_self(const EmbeddingIndex& index, const EvaluateOptions& options = {});

// `name value` lines with 4 fractional digits, per-class entries as
// `ANMRR[<label>] value`.
std::string format_report(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);

}  // namespace tdml
