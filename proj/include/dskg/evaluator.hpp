#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/data.hpp"
#include "dskg/model.hpp"
#include "dskg/tensor.hpp"

namespace dskg {

struct EnhanceConfig {
  bool enabled = true;
  double alpha = 1.0 / 3.0;

  void validate() const {
    if (enabled && !(alpha > 0.0 && alpha < 1.0)) {
      throw ConfigError("enhancement exponent must lie in (0, 1)");
    }
  }
};

// optimistic: ties never worsen the rank. pessimistic: every tied competitor
// counts as ranked above the gold label.
enum class TieRule { optimistic, pessimistic };

template <typename T>
std::vector<double> softmax(std::span<const T> z) {
  std::vector<double> out(z.size());
  if (z.empty()) return out;
  double m = -std::numeric_limits<double>::infinity();
  for (const auto v : z) m = std::max(m, static_cast<double>(v));
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(static_cast<double>(z[i]) - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

// p(o | s, r) over every entity.
template <typename T>
std::vector<double> entity_scores(const ModelParams<T>& p, EntityId s, RelationId r) {
  const auto fwd = forward_triple<T>(p, s, r);
  const auto z = logits<T>(p, fwd.h_r, LabelKind::entity);
  return softmax<T>(z);
}

// p(r | s) over every relation, reverse relations included.
template <typename T>
std::vector<double> relation_scores(const ModelParams<T>& p, EntityId s) {
  const auto h = forward_entity<T>(p, s);
  const auto z = logits<T>(p, h, LabelKind::relation);
  return softmax<T>(z);
}

// Row e holds relation_scores(e): the batched pass used by enhancement,
// cascade ranks and stage-1 triple prediction.
template <typename T>
Matrix<double> relation_prob_table(const ModelParams<T>& p, std::size_t workers = 1) {
  Matrix<double> table(p.shape.entities, p.shape.relations);
  parallel_for(p.shape.entities, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t e = begin; e < end; ++e) {
      const auto probs = relation_scores<T>(p, static_cast<EntityId>(e));
      std::copy(probs.begin(), probs.end(), table.row(e).begin());
    }
  });
  return table;
}

namespace detail {

inline bool beats(double competitor, double gold, TieRule ties) {
  return ties == TieRule::optimistic ? competitor > gold : competitor >= gold;
}

}  // namespace detail

// 1 + number of labels outside known \ {gold} scored above the gold label.
// `known` must be sorted and contain `gold`.
inline std::size_t filtered_rank(std::span<const double> scores, std::uint32_t gold,
                                 std::span<const std::uint32_t> known,
                                 TieRule ties = TieRule::optimistic) {
  if (gold >= scores.size()) throw RangeError("filtered_rank: gold id out of range");
  if (!std::binary_search(known.begin(), known.end(), gold)) {
    throw Error("filter", "filtered_rank: gold label " + std::to_string(gold) +
                              " missing from the known answers");
  }
  const double g = scores[gold];
  std::size_t rank = 1;
  auto next_known = known.begin();
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    while (next_known != known.end() && *next_known < e) ++next_known;
    if (next_known != known.end() && *next_known == e) continue;
    if (detail::beats(scores[e], g, ties)) ++rank;
  }
  return rank;
}

inline std::size_t unfiltered_rank(std::span<const double> scores, std::uint32_t gold,
                                   TieRule ties = TieRule::optimistic) {
  if (gold >= scores.size()) throw RangeError("unfiltered_rank: gold id out of range");
  const double g = scores[gold];
  std::size_t rank = 1;
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    if (e != gold && detail::beats(scores[e], g, ties)) ++rank;
  }
  return rank;
}

// refined(e) = rev(e)^alpha * p(e)
inline std::vector<double> enhance_scores(std::span<const double> p_orig,
                                          std::span<const double> rev, double alpha) {
  require(p_orig.size() == rev.size(), "enhance_scores: size mismatch");
  std::vector<double> out(p_orig.size());
  for (std::size_t e = 0; e < out.size(); ++e) {
    out[e] = (rev[e] == 0.0 ? 0.0 : std::pow(rev[e], alpha)) * p_orig[e];
  }
  return out;
}

// rev(e) = p(r^- | e) read from the relation probability table.
inline std::vector<double> enhance_scores(std::span<const double> p_orig, RelationId r,
                                          const Matrix<double>& relation_table,
                                          const Vocabulary& vocab, double alpha) {
  require(relation_table.rows() == p_orig.size(), "enhance_scores: table rows mismatch");
  const auto rev_r = vocab.reverse_of(r);
  std::vector<double> rev(p_orig.size());
  for (std::size_t e = 0; e < rev.size(); ++e) rev[e] = relation_table(e, rev_r);
  return enhance_scores(p_orig, rev, alpha);
}

enum class Direction { tail, head };

inline const char* to_string(Direction d) { return d == Direction::tail ? "tail" : "head"; }

struct QueryResult {
  IndexedTriple triple;  // the forward test triple
  Direction direction = Direction::tail;
  EntityId query_entity = 0;
  RelationId query_relation = 0;
  EntityId gold = 0;
  std::size_t rank = 0;           // filtered entity rank
  std::size_t relation_rank = 0;  // unfiltered rank of query_relation given query_entity
  std::size_t cascade_rank() const { return rank * relation_rank; }
};

struct MetricsReport {
  double hits1 = 0;   // percent
  double hits10 = 0;  // percent
  double mrr = 0;     // mean reciprocal rank x 100
  double mr = 0;
  std::size_t count = 0;
};

inline MetricsReport summarize_ranks(std::span<const std::size_t> ranks) {
  MetricsReport m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  double h1 = 0, h10 = 0, rr = 0, r = 0;
  for (const auto k : ranks) {
    if (k <= 1) h1 += 1;
    if (k <= 10) h10 += 1;
    rr += 1.0 / static_cast<double>(k);
    r += static_cast<double>(k);
  }
  const double n = static_cast<double>(ranks.size());
  m.hits1 = 100.0 * h1 / n;
  m.hits10 = 100.0 * h10 / n;
  m.mrr = 100.0 * rr / n;
  m.mr = r / n;
  return m;
}

struct EvalOptions {
  EnhanceConfig enhance;
  TieRule ties = TieRule::optimistic;
  std::size_t workers = 1;
};

// Tail query (s, r, ?) ranks o and head query (o, r^-, ?) ranks s, for every
// triple of `split`. Results are in split order, tail before head.
template <typename T>
std::vector<QueryResult> evaluate_queries(const ModelParams<T>& p, const IndexedDataset& data,
                                          std::span<const IndexedTriple> split,
                                          const EvalOptions& opt,
                                          const Matrix<double>* relation_table = nullptr) {
  opt.enhance.validate();
  const auto& vocab = data.vocab();
  Matrix<double> owned;
  if (!relation_table) {
    owned = relation_prob_table<T>(p, opt.workers);
    relation_table = &owned;
  }
  std::vector<QueryResult> results(2 * split.size());
  parallel_for(split.size(), opt.workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& t = split[i];
      for (int d = 0; d < 2; ++d) {
        QueryResult q;
        q.triple = t;
        q.direction = d == 0 ? Direction::tail : Direction::head;
        q.query_entity = d == 0 ? t.s : t.o;
        q.query_relation = d == 0 ? t.r : vocab.reverse_of(t.r);
        q.gold = d == 0 ? t.o : t.s;
        auto scores = entity_scores<T>(p, q.query_entity, q.query_relation);
        if (opt.enhance.enabled) {
          scores = enhance_scores(scores, q.query_relation, *relation_table, vocab,
                                  opt.enhance.alpha);
        }
        q.rank = filtered_rank(scores, q.gold, data.known_answers(q.query_entity, q.query_relation),
                               opt.ties);
        q.relation_rank =
            unfiltered_rank(relation_table->row(q.query_entity), q.query_relation, opt.ties);
        results[2 * i + d] = q;
      }
    }
  });
  return results;
}

inline MetricsReport entity_metrics(std::span<const QueryResult> queries) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) ranks.push_back(q.rank);
  return summarize_ranks(ranks);
}

inline MetricsReport cascade_metrics(std::span<const QueryResult> queries) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) ranks.push_back(q.cascade_rank());
  return summarize_ranks(ranks);
}

template <typename T>
MetricsReport evaluate_entity_prediction(const ModelParams<T>& p, const IndexedDataset& data,
                                         const EnhanceConfig& enhance,
                                         std::size_t workers = 1) {
  EvalOptions opt;
  opt.enhance = enhance;
  opt.workers = workers;
  return entity_metrics(evaluate_queries<T>(p, data, data.test(), opt));
}

template <typename T>
MetricsReport evaluate_cascade(const ModelParams<T>& p, const IndexedDataset& data,
                               const EnhanceConfig& enhance = {false, 1.0 / 3.0},
                               std::size_t workers = 1) {
  EvalOptions opt;
  opt.enhance = enhance;
  opt.workers = workers;
  return cascade_metrics(evaluate_queries<T>(p, data, data.test(), opt));
}

// "name<TAB>value" lines.
inline void write_metrics_kv(std::ostream& out, const MetricsReport& m) {
  out << std::setprecision(10);
  out << "hits@1\t" << m.hits1 << '\n'
      << "hits@10\t" << m.hits10 << '\n'
      << "mrr\t" << m.mrr << '\n'
      << "mr\t" << m.mr << '\n'
      << "queries\t" << m.count << '\n';
}

struct NamedReport {
  std::string name;
  MetricsReport metrics;
};

inline void write_metrics_table(std::ostream& out, std::span<const NamedReport> reports) {
  out << std::left << std::setw(22) << "variant" << std::right << std::setw(9) << "Hits@1"
      << std::setw(9) << "Hits@10" << std::setw(9) << "MRR" << std::setw(11) << "MR"
      << std::setw(10) << "queries" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& r : reports) {
    out << std::left << std::setw(22) << r.name << std::right << std::setw(9) << r.metrics.hits1
        << std::setw(9) << r.metrics.hits10 << std::setw(9) << r.metrics.mrr << std::setw(11)
        << r.metrics.mr << std::setw(10) << r.metrics.count << '\n';
  }
  out << std::defaultfloat;
}

// s, r, o, direction, rank, relation_rank
inline void write_query_ranks(std::ostream& out, std::span<const QueryResult> queries,
                              const Vocabulary& vocab) {
  for (const auto& q : queries) {
    out << vocab.entities.label(q.triple.s) << '\t' << vocab.relations.label(q.triple.r) << '\t'
        << vocab.entities.label(q.triple.o) << '\t' << to_string(q.direction) << '\t' << q.rank
        << '\t' << q.relation_rank << '\n';
  }
}

}  // namespace dskg
