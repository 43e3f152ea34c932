#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "oracles/oracles.hpp"
#include "tdml/retrieval.hpp"

namespace tdml {
namespace {

std::vector<VectorRecord> random_records(std::size_t n, std::size_t dim, std::mt19937_64& rng,
                                         bool unit = false) {
  const Matrix m = unit ? oracle::random_unit_rows(n, dim, rng) : oracle::random_matrix(n, dim, rng);
  std::vector<VectorRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = m.row(i);
    out.push_back({"r" + std::to_string(100 + i), "c" + std::to_string(i % 3), {row.begin(), row.end()}});
  }
  return out;
}

TEST(BuildIndex, Errors) {
  EXPECT_THROW(EmbeddingIndex::build({}), std::invalid_argument);
  const std::vector<VectorRecord> dup{{"a", "x", {1, 2}}, {"a", "y", {3, 4}}};
  try {
    EmbeddingIndex::build(dup);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
  }
  const std::vector<VectorRecord> ragged{{"a", "x", {1, 2}}, {"b", "y", {3}}};
  EXPECT_THROW(EmbeddingIndex::build(ragged), std::invalid_argument);
  const std::vector<VectorRecord> nan{{"a", "x", {1, std::nan("")}}};
  EXPECT_THROW(EmbeddingIndex::build(nan), std::invalid_argument);
}

TEST(BuildIndex, SizeAndLookup) {
  std::mt19937_64 rng(1);
  const auto recs = random_records(7, 3, rng);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  EXPECT_EQ(idx.size(), 7u);
  EXPECT_EQ(idx.dim(), 3u);
  EXPECT_EQ(idx.find("r103"), std::optional<std::size_t>(3));
  EXPECT_FALSE(idx.find("zzz").has_value());
}

TEST(Query, IdentityAndExclusion) {
  std::mt19937_64 rng(2);
  const auto recs = random_records(10, 4, rng);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  const RankedList hit = idx.query(recs[4].values, 3);
  ASSERT_EQ(hit.size(), 3u);
  EXPECT_EQ(hit[0].id, recs[4].id);
  EXPECT_EQ(hit[0].distance, 0.0);
  const RankedList miss = idx.query(recs[4].values, 10, recs[4].id);
  EXPECT_EQ(miss.size(), 9u);
  for (const RankedEntry& e : miss) EXPECT_NE(e.id, recs[4].id);
  EXPECT_THROW(idx.query(std::vector<double>{1.0}, 3), std::invalid_argument);
}

TEST(Query, MatchesFullSortOracle) {
  std::mt19937_64 rng(3);
  const auto recs = random_records(20, 4, rng);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  for (std::size_t q = 0; q < 20; ++q) {
    std::vector<std::pair<double, std::string>> expected;
    for (const auto& r : recs) {
      double d = 0.0;
      for (std::size_t k = 0; k < 4; ++k) d += (r.values[k] - recs[q].values[k]) * (r.values[k] - recs[q].values[k]);
      expected.emplace_back(d, r.id);
    }
    std::sort(expected.begin(), expected.end());
    const RankedList got = idx.query(recs[q].values, 20);
    ASSERT_EQ(got.size(), 20u);
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_EQ(got[i].id, expected[i].second);
      EXPECT_NEAR(got[i].distance, expected[i].first, 1e-12);
    }
    EXPECT_EQ(idx.query(recs[q].values, 20).front().id, got.front().id);  // repeatable
  }
}

TEST(Query, TiesBrokenByAscendingId) {
  // Insertion order deliberately differs from id order.
  const std::vector<VectorRecord> recs{
      {"zeta", "a", {1, 0}}, {"alpha", "b", {0, 1}}, {"mid", "a", {-1, 0}}, {"beta", "b", {0, -1}}};
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  const RankedList got = idx.query(std::vector<double>{0, 0}, 4);
  std::vector<std::string> ids;
  for (const auto& e : got) ids.push_back(e.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"alpha", "beta", "mid", "zeta"}));
}

TEST(Query, InnerProductOrderingOnUnitVectors) {
  std::mt19937_64 rng(4);
  const auto recs = random_records(30, 5, rng, true);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  const Matrix q = oracle::random_unit_rows(1, 5, rng);
  const std::vector<double> qv(q.row(0).begin(), q.row(0).end());
  std::vector<std::size_t> by_dot(30);
  std::iota(by_dot.begin(), by_dot.end(), 0);
  std::sort(by_dot.begin(), by_dot.end(), [&](std::size_t a, std::size_t b) {
    return dot(recs[a].values, qv) > dot(recs[b].values, qv);
  });
  EXPECT_EQ(idx.rank_all(qv), by_dot);
}

TEST(Query, FullQueryIsPermutation) {
  std::mt19937_64 rng(5);
  const auto recs = random_records(15, 3, rng);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  const RankedList all = idx.query(recs[0].values, 100, recs[2].id);
  std::set<std::string> ids;
  for (const auto& e : all) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 14u);
  EXPECT_FALSE(ids.count(recs[2].id));
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LE(all[i - 1].distance, all[i].distance);
}

TEST(Query, RankAllExcludesRow) {
  std::mt19937_64 rng(6);
  const auto recs = random_records(9, 3, rng);
  const EmbeddingIndex idx = EmbeddingIndex::build(recs);
  const auto ranked = idx.rank_all(recs[1].values, 1);
  EXPECT_EQ(ranked.size(), 8u);
  EXPECT_EQ(std::count(ranked.begin(), ranked.end(), 1u), 0);
}

}  // namespace
}  // namespace tdml
