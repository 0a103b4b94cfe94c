#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/data.hpp"
#include "dskg/evaluator.hpp"
#include "dskg/model.hpp"

namespace dskg {

struct BeamConfig {
  std::size_t pair_window = 100'000;     // W1
  std::size_t triple_window = 1'000'000;  // W2

  void validate() const {
    if (pair_window < 1 || triple_window < 1) throw ConfigError("beam windows must be >= 1");
  }
};

struct PairScore {
  EntityId entity = 0;
  RelationId relation = 0;
  double score = 0;
  bool operator==(const PairScore&) const = default;
};

struct ScoredTriple {
  IndexedTriple triple;
  double score = 0;
  bool operator==(const ScoredTriple&) const = default;
};

// Strict total orders: higher score first, then ids ascending.
struct PairBetter {
  bool operator()(const PairScore& a, const PairScore& b) const {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.entity, a.relation) < std::tie(b.entity, b.relation);
  }
};

struct TripleBetter {
  bool operator()(const ScoredTriple& a, const ScoredTriple& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.triple < b.triple;
  }
};

// Keeps the K best items under `Better`. Because Better is a strict total
// order, merging partial results from any partition gives the same set.
template <typename Item, typename Better>
class BoundedTopK {
 public:
  explicit BoundedTopK(std::size_t k) : k_(k) {}

  // Heap top is the worst retained item.
  void push(const Item& item) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.push_back(item);
      std::push_heap(heap_.begin(), heap_.end(), better_);
    } else if (better_(item, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better_);
      heap_.back() = item;
      std::push_heap(heap_.begin(), heap_.end(), better_);
    }
  }

  bool full() const noexcept { return heap_.size() >= k_; }
  const Item& worst() const { return heap_.front(); }

  void merge(const BoundedTopK& other) {
    for (const auto& item : other.heap_) push(item);
  }

  std::vector<Item> sorted() const {
    auto out = heap_;
    std::sort(out.begin(), out.end(), better_);
    return out;
  }

 private:
  std::size_t k_;
  Better better_;
  std::vector<Item> heap_;
};

// Scores every (entity, relation) pair by p(r | e) and keeps the top W1.
inline std::vector<PairScore> stage1_pairs(const Matrix<double>& relation_table,
                                           std::size_t pair_window, std::size_t workers = 1) {
  const std::size_t n = relation_table.rows();
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<BoundedTopK<PairScore, PairBetter>> partial(workers,
                                                          BoundedTopK<PairScore, PairBetter>(pair_window));
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    for (std::size_t e = begin; e < end; ++e) {
      const auto row = relation_table.row(e);
      for (std::size_t r = 0; r < row.size(); ++r) {
        partial[w].push({static_cast<EntityId>(e), static_cast<RelationId>(r), row[r]});
      }
    }
  });
  for (std::size_t w = 1; w < workers; ++w) partial[0].merge(partial[w]);
  return partial[0].sorted();
}

template <typename T>
std::vector<PairScore> stage1_pairs(const ModelParams<T>& p, const BeamConfig& config,
                                    std::size_t workers = 1) {
  config.validate();
  return stage1_pairs(relation_prob_table<T>(p, workers), config.pair_window, workers);
}

// Completes every pair with every object: score = p(r | s) * p(o | s, r);
// keeps the top W2 sorted descending.
template <typename T>
std::vector<ScoredTriple> stage2_triples(const ModelParams<T>& p, std::span<const PairScore> pairs,
                                         const BeamConfig& config, std::size_t workers = 1) {
  config.validate();
  workers = std::max<std::size_t>(1, std::min(workers, pairs.size()));
  std::vector<BoundedTopK<ScoredTriple, TripleBetter>> partial(
      workers, BoundedTopK<ScoredTriple, TripleBetter>(config.triple_window));
  parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    auto& top = partial[w];
    for (std::size_t i = begin; i < end; ++i) {
      const auto& pair = pairs[i];
      // p(o | s, r) <= 1, so nothing from this pair can enter a full window.
      if (top.full() && pair.score < top.worst().score) continue;
      const auto probs = entity_scores<T>(p, pair.entity, pair.relation);
      for (std::size_t o = 0; o < probs.size(); ++o) {
        top.push({{pair.entity, pair.relation, static_cast<EntityId>(o)}, pair.score * probs[o]});
      }
    }
  });
  for (std::size_t w = 1; w < workers; ++w) partial[0].merge(partial[w]);
  return partial[0].sorted();
}

template <typename T>
std::vector<ScoredTriple> predict_triples(const ModelParams<T>& p, const BeamConfig& config,
                                          std::size_t workers = 1) {
  const auto pairs = stage1_pairs<T>(p, config, workers);
  return stage2_triples<T>(p, pairs, config, workers);
}

// Forward orientation; keeps the first (highest-scored) copy of each fact.
inline std::vector<ScoredTriple> canonicalize_output(std::span<const ScoredTriple> output,
                                                     const Vocabulary& vocab) {
  TripleSet seen(vocab.entity_count(), vocab.relation_count());
  std::vector<ScoredTriple> out;
  out.reserve(output.size());
  for (const auto& st : output) {
    const auto c = canonical_triple(vocab, st.triple);
    if (seen.contains(c)) continue;
    seen.insert(c);
    out.push_back({c, st.score});
  }
  return out;
}

struct CurvePoint {
  std::size_t n = 0;
  std::size_t n_corr = 0;
  std::size_t n_pred = 0;
  std::size_t n_error = 0;
  std::optional<double> precision;  // empty when n_pred + n_error == 0
};

struct PrecisionCurve {
  std::vector<CurvePoint> points;
};

// `count` evenly spaced values in [1, total], always ending at total.
inline std::vector<std::size_t> default_sample_points(std::size_t total, std::size_t count = 1000) {
  std::vector<std::size_t> pts;
  if (total == 0) return pts;
  for (std::size_t i = 1; i <= count; ++i) {
    const std::size_t n = (i * total + count - 1) / count;
    if (n >= 1 && (pts.empty() || n > pts.back())) pts.push_back(n);
  }
  if (pts.empty() || pts.back() != total) pts.push_back(total);
  return pts;
}

// p_n = n_pred / (n_pred + n_error) over the top-n outputs, where
// n_corr counts hits in train ∪ valid ∪ test and n_pred hits in valid ∪ test.
inline PrecisionCurve precision_curve(std::span<const ScoredTriple> output,
                                      const IndexedDataset& data,
                                      std::vector<std::size_t> sample_points = {},
                                      bool canonicalize = true) {
  for (std::size_t i = 1; i < output.size(); ++i) {
    if (output[i].score > output[i - 1].score) {
      throw Error("order", "precision_curve: output is not sorted by descending score");
    }
  }
  std::vector<ScoredTriple> owned;
  std::span<const ScoredTriple> list = output;
  if (canonicalize) {
    owned = canonicalize_output(output, data.vocab());
    list = owned;
  }
  if (sample_points.empty()) sample_points = default_sample_points(list.size());
  std::sort(sample_points.begin(), sample_points.end());
  sample_points.erase(std::unique(sample_points.begin(), sample_points.end()), sample_points.end());

  PrecisionCurve curve;
  std::size_t corr = 0, pred = 0, seen = 0;
  for (const auto n : sample_points) {
    if (n == 0 || n > list.size()) continue;
    for (; seen < n; ++seen) {
      const auto& t = list[seen].triple;
      if (data.correct_set().contains(t)) ++corr;
      if (data.predict_set().contains(t)) ++pred;
    }
    CurvePoint pt{n, corr, pred, n - corr, std::nullopt};
    if (pt.n_pred + pt.n_error > 0) {
      pt.precision = static_cast<double>(pt.n_pred) / static_cast<double>(pt.n_pred + pt.n_error);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

// subject, relation, object, score
inline void write_scored_triples(std::ostream& out, std::span<const ScoredTriple> triples,
                                 const Vocabulary& vocab) {
  out << std::setprecision(10);
  for (const auto& st : triples) {
    out << vocab.entities.label(st.triple.s) << '\t' << vocab.relations.label(st.triple.r) << '\t'
        << vocab.entities.label(st.triple.o) << '\t' << st.score << '\n';
  }
}

// n, n_corr, n_pred, n_error, p_n ("NA" when undefined)
inline void write_curve(std::ostream& out, const PrecisionCurve& curve) {
  out << std::setprecision(10);
  for (const auto& pt : curve.points) {
    out << pt.n << '\t' << pt.n_corr << '\t' << pt.n_pred << '\t' << pt.n_error << '\t';
    if (pt.precision) {
      out << *pt.precision;
    } else {
      out << "NA";
    }
    out << '\n';
  }
}

}  // namespace dskg
