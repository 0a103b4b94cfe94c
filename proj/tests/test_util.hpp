#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <algorithm>
#include <cmath>
#include <random>

#include "dskg/data.hpp"
#include "dskg/toy.hpp"
#include "dskg/evaluator.hpp"
#include "dskg/trainer.hpp"
#include "dskg/triple_predictor.hpp"

namespace dskg::testing {

inline std::vector<RawTriple> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_triples(in);
}

inline IndexedDataset dataset_from(const std::string& train, const std::string& valid,
                                   const std::string& test) {
  const auto tr = parse(train);
  const auto va = parse(valid);
  const auto te = parse(test);
  return index_dataset(tr, va, te);
}

inline IndexedDataset toy_dataset(const ToyKgConfig& cfg) {
  const auto kg = generate_toy_kg(cfg);
  return index_dataset(kg.train, kg.valid, kg.test);
}

struct GradientCheck {
  double max_relative_error = 0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

// Reverse-mode gradient of the mean batch loss against central differences
// over every parameter. Draws (negatives, masks) are held fixed.
inline GradientCheck check_gradients(const ModelParams<double>& p,
                                     const std::vector<IndexedTriple>& batch,
                                     const TrainConfig& config, std::uint64_t seed,
                                     double step = 1e-5) {
  NegativeSamplers samplers(p.shape.entities, p.shape.relations);
  std::vector<ExampleDraw<double>> draws;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    draws.push_back(draw_example<double>(batch[i], p.shape, config, samplers, rng));
  }
  ModelParams<double> grads(p.shape);
  backward<double>(p, batch, draws, config, grads);
  auto loss = [&](const ModelParams<double>& q) {
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      total += triple_loss<double>(q, batch[i], draws[i], config);
    }
    return total / static_cast<double>(batch.size());
  };
  ModelParams<double> work = p;
  auto wt = work.tensors();
  const auto gt = grads.tensors();
  GradientCheck out;
  for (std::size_t ti = 0; ti < wt.size(); ++ti) {
    for (std::size_t j = 0; j < wt[ti].values.size(); ++j) {
      const double saved = wt[ti].values[j];
      wt[ti].values[j] = saved + step;
      const double up = loss(work);
      wt[ti].values[j] = saved - step;
      const double down = loss(work);
      wt[ti].values[j] = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = gt[ti].values[j];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > out.max_relative_error) {
        out.max_relative_error = rel;
        out.worst_tensor = wt[ti].name;
      }
      ++out.checked;
    }
  }
  return out;
}

// Model with every tensor (biases included) drawn uniformly from [-scale, scale].
inline ModelParams<double> random_model(const ModelShape& shape, std::uint64_t seed,
                                        double scale = 0.5) {
  ModelParams<double> p(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& t : p.tensors()) {
    for (auto& v : t.values) v = d(rng);
  }
  return p;
}

// Rank by full descending sort: position of the first entry tied with the
// gold score, after dropping the excluded ids.
inline std::size_t sorted_rank(const std::vector<double>& scores, std::uint32_t gold,
                               const std::vector<std::uint32_t>& excluded) {
  std::vector<std::pair<double, std::uint32_t>> kept;
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    if (e != gold && std::find(excluded.begin(), excluded.end(), e) != excluded.end()) continue;
    kept.emplace_back(scores[e], e);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i].first == scores[gold]) return i + 1;
  }
  return 0;
}

struct OracleQuery {
  std::size_t rank = 0;
  std::size_t relation_rank = 0;
};

// Tail then head query per triple, scored and ranked without the evaluator.
template <typename T>
std::vector<OracleQuery> oracle_queries(const ModelParams<T>& p, const IndexedDataset& data,
                                        std::span<const IndexedTriple> split, bool enhance,
                                        double alpha) {
  const auto& vocab = data.vocab();
  std::vector<std::vector<double>> rel(p.shape.entities);
  for (EntityId e = 0; e < p.shape.entities; ++e) rel[e] = relation_scores<T>(p, e);
  std::vector<OracleQuery> out;
  for (const auto& t : split) {
    for (int d = 0; d < 2; ++d) {
      const EntityId q = d == 0 ? t.s : t.o;
      const RelationId r = d == 0 ? t.r : vocab.reverse_of(t.r);
      const EntityId gold = d == 0 ? t.o : t.s;
      auto scores = entity_scores<T>(p, q, r);
      if (enhance) {
        const RelationId back = vocab.reverse_of(r);
        for (EntityId e = 0; e < scores.size(); ++e) {
          const double rev = rel[e][back];
          scores[e] = rev == 0.0 ? 0.0 : std::pow(rev, alpha) * scores[e];
        }
      }
      std::vector<std::uint32_t> known;
      for (EntityId e = 0; e < p.shape.entities; ++e) {
        if (data.correct_set().contains({q, r, e})) known.push_back(e);
      }
      out.push_back({sorted_rank(scores, gold, known), sorted_rank(rel[q], r, {})});
    }
  }
  return out;
}

// Random graph over `entities` labels; every label shows up in train.
inline IndexedDataset random_dataset(std::size_t entities, std::size_t relations,
                                     std::size_t train, std::size_t test, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto label = [](const char* p, std::size_t i) { return p + std::to_string(i); };
  std::vector<RawTriple> tr, te;
  for (std::size_t i = 0; i < std::max({train, entities, relations}); ++i) {
    tr.push_back({label("e", i % entities), label("r", i % relations), label("e", rng() % entities)});
  }
  for (std::size_t i = 0; i < test; ++i) {
    te.push_back({label("e", rng() % entities), label("r", rng() % relations),
                  label("e", rng() % entities)});
  }
  return index_dataset(tr, {}, te);
}

// Every (s, r, o) scored and fully sorted, optionally restricted to the
// top `pair_window` (s, r) pairs.
inline std::vector<ScoredTriple> brute_force(const ModelParams<double>& p,
                                             std::size_t pair_window, std::size_t triple_window) {
  std::vector<PairScore> pairs;
  for (EntityId s = 0; s < p.shape.entities; ++s) {
    const auto rel = relation_scores<double>(p, s);
    for (RelationId r = 0; r < p.shape.relations; ++r) pairs.push_back({s, r, rel[r]});
  }
  std::sort(pairs.begin(), pairs.end(), PairBetter{});
  pairs.resize(std::min(pairs.size(), pair_window));
  std::vector<ScoredTriple> all;
  for (const auto& pr : pairs) {
    const auto ent = entity_scores<double>(p, pr.entity, pr.relation);
    for (EntityId o = 0; o < p.shape.entities; ++o) {
      all.push_back({{pr.entity, pr.relation, o}, pr.score * ent[o]});
    }
  }
  std::sort(all.begin(), all.end(), TripleBetter{});
  all.resize(std::min(all.size(), triple_window));
  return all;
}

}  // namespace dskg::testing
