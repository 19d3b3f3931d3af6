// Retrieval evaluation: cosine distance matrix, mAP, CMC and a per viewpoint
// pair mAP breakdown.
//
// Protocol: for each query the gallery is ranked by (distance, gallery index);
// gallery entries with the query's identity AND camera are junk and removed
// before scoring. AP averages precision at each positive; CMC counts the rank
// of the first positive. Queries without any valid positive are skipped and
// counted.
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include "vareid/error.hpp"
#include "vareid/geometry.hpp"

namespace vareid {

struct RetrievalLabels {
  std::vector<int> identity;
  std::vector<int> camera;
  std::vector<int> viewpoint;  // only used by the breakdown

  std::size_t size() const { return identity.size(); }
};

inline Matrix distance_matrix(const std::vector<Vec>& queries, const std::vector<Vec>& gallery) {
  Matrix dist(queries.size(), gallery.size());
  for (const Vec& g : gallery) require_unit(g, "gallery embedding");
  for (std::size_t i = 0; i < queries.size(); ++i) {
    require_unit(queries[i], "query embedding");
    for (std::size_t j = 0; j < gallery.size(); ++j) dist(i, j) = 1.0 - cosine(queries[i], gallery[j]);
  }
  return dist;
}

/// Ranking outcome of a single query.
struct QueryOutcome {
  bool valid = false;  // at least one positive survived filtering
  double average_precision = 0.0;
  std::size_t first_hit = 0;  // 1-based rank in the filtered list
};

enum class GalleryRole { negative, positive, junk };

/// Scores one query given a classifier of each gallery entry's role.
inline QueryOutcome score_query(std::span<const double> distances,
                                const std::function<GalleryRole(std::size_t)>& role) {
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  QueryOutcome out;
  std::size_t rank = 0;
  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t g : order) {
    const GalleryRole r = role(g);
    if (r == GalleryRole::junk) continue;
    ++rank;
    if (r == GalleryRole::positive) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
      if (hits == 1) out.first_hit = rank;
    }
  }
  if (hits > 0) {
    out.valid = true;
    out.average_precision = precision_sum / static_cast<double>(hits);
  }
  return out;
}

inline void check_shapes(const Matrix& dist, const RetrievalLabels& query, const RetrievalLabels& gallery) {
  if (dist.rows != query.size() || dist.cols != gallery.size() || query.camera.size() != query.size() ||
      gallery.camera.size() != gallery.size()) {
    throw Error(ErrorKind::ShapeMismatch, "distance matrix and label arrays disagree");
  }
}

inline std::vector<QueryOutcome> score_queries(const Matrix& dist, const RetrievalLabels& query,
                                               const RetrievalLabels& gallery) {
  check_shapes(dist, query, gallery);
  std::vector<QueryOutcome> out;
  out.reserve(query.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    out.push_back(score_query(dist.row(q), [&](std::size_t g) {
      if (gallery.identity[g] != query.identity[q]) return GalleryRole::negative;
      return gallery.camera[g] == query.camera[q] ? GalleryRole::junk : GalleryRole::positive;
    }));
  }
  return out;
}

struct RetrievalScore {
  double map = 0.0;
  Vec cmc;
  std::size_t n_queries = 0;  // scored queries
  std::size_t n_skipped = 0;  // queries without a valid positive
};

inline RetrievalScore summarize(const std::vector<QueryOutcome>& outcomes, std::size_t max_rank) {
  RetrievalScore s;
  s.cmc.assign(max_rank, 0.0);
  for (const QueryOutcome& o : outcomes) {
    if (!o.valid) {
      ++s.n_skipped;
      continue;
    }
    ++s.n_queries;
    s.map += o.average_precision;
    for (std::size_t r = o.first_hit; r <= max_rank; ++r) s.cmc[r - 1] += 1.0;
  }
  if (s.n_queries == 0) throw Error(ErrorKind::NoValidPositive, "no query has a valid positive in the gallery");
  const double n = static_cast<double>(s.n_queries);
  s.map /= n;
  for (double& c : s.cmc) c /= n;
  return s;
}

inline double mean_ap(const Matrix& dist, const RetrievalLabels& query, const RetrievalLabels& gallery) {
  return summarize(score_queries(dist, query, gallery), 1).map;
}

inline Vec cmc(const Matrix& dist, const RetrievalLabels& query, const RetrievalLabels& gallery,
               std::size_t max_rank) {
  return summarize(score_queries(dist, query, gallery), max_rank).cmc;
}

using ViewPairMap = std::vector<std::vector<std::optional<double>>>;

/// Cell (a, b): mAP over queries of viewpoint a when only viewpoint-b gallery
/// entries count as positives (same-identity entries of other viewpoints are
/// ignored). Cells without any scorable query are empty.
inline ViewPairMap cross_view_breakdown(const Matrix& dist, const RetrievalLabels& query,
                                        const RetrievalLabels& gallery, std::size_t num_viewpoints) {
  check_shapes(dist, query, gallery);
  if (query.viewpoint.size() != query.size() || gallery.viewpoint.size() != gallery.size()) {
    throw Error(ErrorKind::ShapeMismatch, "viewpoint labels missing for breakdown");
  }
  ViewPairMap out(num_viewpoints, std::vector<std::optional<double>>(num_viewpoints));
  for (std::size_t a = 0; a < num_viewpoints; ++a) {
    for (std::size_t b = 0; b < num_viewpoints; ++b) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t q = 0; q < query.size(); ++q) {
        if (query.viewpoint[q] != static_cast<int>(a)) continue;
        const QueryOutcome o = score_query(dist.row(q), [&](std::size_t g) {
          if (gallery.identity[g] != query.identity[q]) return GalleryRole::negative;
          if (gallery.camera[g] == query.camera[q] || gallery.viewpoint[g] != static_cast<int>(b)) {
            return GalleryRole::junk;
          }
          return GalleryRole::positive;
        });
        if (o.valid) {
          sum += o.average_precision;
          ++n;
        }
      }
      if (n > 0) out[a][b] = sum / static_cast<double>(n);
    }
  }
  return out;
}

struct EvalReport {
  double map = 0.0;
  Vec cmc;
  ViewPairMap per_view_pair_map;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;

  double rank(std::size_t k) const { return k >= 1 && k <= cmc.size() ? cmc[k - 1] : 0.0; }
};

inline constexpr std::size_t kDefaultMaxRank = 20;

inline EvalReport evaluate_embeddings(const std::vector<Vec>& queries, const RetrievalLabels& query_labels,
                                      const std::vector<Vec>& gallery, const RetrievalLabels& gallery_labels,
                                      std::size_t num_viewpoints, std::size_t max_rank = kDefaultMaxRank) {
  const Matrix dist = distance_matrix(queries, gallery);
  const RetrievalScore score = summarize(score_queries(dist, query_labels, gallery_labels), max_rank);
  EvalReport r;
  r.map = score.map;
  r.cmc = score.cmc;
  r.n_queries = score.n_queries;
  r.n_skipped = score.n_skipped;
  r.per_view_pair_map = cross_view_breakdown(dist, query_labels, gallery_labels, num_viewpoints);
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& row : r.per_view_pair_map) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& cell : row) jr.push_back(cell ? nlohmann::json(*cell) : nlohmann::json(nullptr));
    pairs.push_back(std::move(jr));
  }
  return nlohmann::json{{"map", r.map},
                        {"cmc", r.cmc},
                        {"per_view_pair_map", std::move(pairs)},
                        {"n_queries", r.n_queries},
                        {"n_skipped", r.n_skipped}};
}

}  // namespace vareid
