#include "tdml/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "tdml/errors.hpp"

namespace tdml {

QueryOutcome QueryOutcome::from_labels(std::string id, std::string label,
                                       std::span<const std::string> ranked_labels) {
  QueryOutcome out{std::move(id), std::move(label), {}, 0};
  out.relevant.reserve(ranked_labels.size());
  for (const auto& l : ranked_labels) {
    const bool rel = l == out.query_label;
    out.relevant.push_back(rel);
    out.ng += rel ? 1 : 0;
  }
  return out;
}

double precision_at_k(const QueryOutcome& outcome, std::size_t k) {
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  const std::size_t limit = std::min(k, outcome.relevant.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < limit; ++r) hits += outcome.relevant[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double average_precision(const QueryOutcome& outcome) {
  if (outcome.ng == 0) {
    throw UndefinedQueryError("average_precision: query '" + outcome.query_id +
                                  "' has no relevant candidates",
                              {outcome.query_id});
  }
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < outcome.relevant.size(); ++r) {
    if (!outcome.relevant[r]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(outcome.ng);
}

double nmrr(const QueryOutcome& outcome, std::size_t gtm, const NmrrOptions& options) {
  const double ng = static_cast<double>(outcome.ng);
  if (outcome.ng == 0) {
    throw UndefinedQueryError("nmrr: query '" + outcome.query_id + "' has no relevant candidates",
                              {outcome.query_id});
  }
  if (options.cap_by_gtm && gtm < outcome.ng) throw std::invalid_argument("nmrr: GTM < NG");
  double k = options.ng_factor * ng;
  if (options.cap_by_gtm) k = std::min(k, options.gtm_factor * static_cast<double>(gtm));

  double rank_sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < outcome.relevant.size() && found < outcome.ng; ++r) {
    if (!outcome.relevant[r]) continue;
    ++found;
    const double rank = static_cast<double>(r + 1);
    rank_sum += rank <= k ? rank : options.penalty * k;
  }
  const double avr = rank_sum / ng;
  const double mrr = avr - 0.5 - 0.5 * ng;
  return mrr / (options.penalty * k - 0.5 - 0.5 * ng);
}

namespace {

QueryOutcome rank_query(const EmbeddingIndex& index, const VectorRecord& q) {
  const auto exclude = index.find(q.id);
  const auto order = index.rank_all(q.values, exclude);
  QueryOutcome out{q.id, q.label, {}, 0};
  out.relevant.reserve(order.size());
  for (std::size_t i : order) {
    const bool rel = index.labels()[i] == q.label;
    out.relevant.push_back(rel);
    out.ng += rel ? 1 : 0;
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n ? n : 1)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

MetricsReport evaluate(const EmbeddingIndex& index, std::span<const VectorRecord> queries,
                       const EvaluateOptions& options) {
  if (index.size() == 0) throw std::invalid_argument("evaluate: empty index");
  if (queries.empty()) throw std::invalid_argument("evaluate: no queries");

  std::vector<QueryOutcome> outcomes(queries.size());
  parallel_for(queries.size(), options.threads,
               [&](std::size_t i) { outcomes[i] = rank_query(index, queries[i]); });

  std::vector<std::string> undefined;
  std::size_t gtm = 0;
  for (const auto& o : outcomes) {
    if (o.ng == 0) undefined.push_back(o.query_id);
    gtm = std::max(gtm, o.ng);
  }
  if (!undefined.empty()) {
    std::string msg = "evaluate: query class absent from the database for ids:";
    for (const auto& id : undefined) msg += " " + id;
    throw UndefinedQueryError(msg, undefined);
  }
  if (options.gtm) {
    if (*options.gtm < gtm) throw std::invalid_argument("evaluate: GTM override below max NG");
    gtm = *options.gtm;
  }

  std::vector<double> nmrrs(outcomes.size());
  std::vector<double> aps(outcomes.size());
  std::vector<std::vector<double>> precisions(outcomes.size());
  parallel_for(outcomes.size(), options.threads, [&](std::size_t i) {
    nmrrs[i] = nmrr(outcomes[i], gtm, options.nmrr);
    aps[i] = average_precision(outcomes[i]);
    for (std::size_t k : options.cutoffs) precisions[i].push_back(precision_at_k(outcomes[i], k));
  });

  MetricsReport report;
  report.query_count = outcomes.size();
  report.gtm = gtm;
  const double n = static_cast<double>(outcomes.size());
  std::map<std::string, std::pair<double, std::size_t>> per_class;
  std::vector<double> p_sum(options.cutoffs.size(), 0.0);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    report.anmrr += nmrrs[i];
    report.map += aps[i];
    for (std::size_t c = 0; c < p_sum.size(); ++c) p_sum[c] += precisions[i][c];
    auto& pc = per_class[outcomes[i].query_label];
    pc.first += nmrrs[i];
    ++pc.second;
  }
  report.anmrr /= n;
  report.map /= n;
  for (std::size_t c = 0; c < p_sum.size(); ++c)
    report.precision_at[options.cutoffs[c]] = p_sum[c] / n;
  for (const auto& [label, acc] : per_class)
    report.per_class_anmrr[label] = acc.first / static_cast<double>(acc.second);
  return report;
}

MetricsReport evaluate_self(const EmbeddingIndex& index, const EvaluateOptions& options) {
  std::vector<VectorRecord> queries;
  queries.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto row = index.vectors().row(i);
    queries.push_back({index.ids()[i], index.labels()[i], {row.begin(), row.end()}});
  }
  return evaluate(index, queries, options);
}

std::string format_report(const MetricsReport& report) {
  std::string out;
  char buf[64];
  auto line = [&](const std::string& name, double value) {
    std::snprintf(buf, sizeof(buf), " %.4f\n", value);
    out += name + buf;
  };
  line("ANMRR", report.anmrr);
  line("mAP", report.map);
  for (const auto& [k, v] : report.precision_at) line("P@" + std::to_string(k), v);
  for (const auto& [label, v] : report.per_class_anmrr) line("ANMRR[" + label + "]", v);
  return out;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["ANMRR"] = report.anmrr;
  j["mAP"] = report.map;
  for (const auto& [k, v] : report.precision_at) j["P@" + std::to_string(k)] = v;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [label, v] : report.per_class_anmrr) per_class[label] = v;
  j["per_class_ANMRR"] = per_class;
  j["queries"] = report.query_count;
  j["GTM"] = report.gtm;
  return j.dump(2);
}

}  // namespace tdml
