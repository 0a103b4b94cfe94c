#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/data.hpp"

namespace dskg {

// Deterministic synthetic KG: `base_relations` random relations, optionally
// one relation composed from the first two, and an exact inverse for each.
// Every fact is stored in both directions (R and R_inv); at most one triple
// of each such pair is held out, so every held-out triple is implied by its
// inverse partner in train.
struct ToyKgConfig {
  std::size_t entities = 200;
  std::size_t base_relations = 3;
  bool compositional = true;
  std::size_t facts_per_relation = 250;
  double valid_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t seed = 7;
};

struct ToyKg {
  std::vector<RawTriple> train;
  std::vector<RawTriple> valid;
  std::vector<RawTriple> test;
};

inline ToyKg generate_toy_kg(const ToyKgConfig& cfg) {
  if (cfg.entities < 2) throw ConfigError("toy KG needs at least 2 entities");
  if (cfg.base_relations < 1) throw ConfigError("toy KG needs at least 1 base relation");
  if (cfg.compositional && cfg.base_relations < 2) {
    throw ConfigError("a compositional relation needs 2 base relations");
  }
  const auto max_facts = cfg.entities * (cfg.entities - 1);
  if (cfg.facts_per_relation > max_facts / 2) throw ConfigError("too many facts per relation");
  if (cfg.valid_fraction < 0 || cfg.test_fraction < 0 ||
      cfg.valid_fraction + cfg.test_fraction > 0.5) {
    throw ConfigError("held-out fractions must be non-negative and sum to at most 0.5");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.entities - 1);
  auto entity = [&](std::size_t i) {
    std::ostringstream s;
    s << "e" << std::setw(4) << std::setfill('0') << i;
    return s.str();
  };

  using Facts = std::vector<std::pair<std::size_t, std::size_t>>;
  std::vector<std::pair<std::string, Facts>> relations;
  for (std::size_t k = 0; k < cfg.base_relations; ++k) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    Facts facts;
    while (facts.size() < cfg.facts_per_relation) {
      const auto s = pick(rng);
      const auto o = pick(rng);
      if (s == o || !seen.insert({s, o}).second) continue;
      facts.emplace_back(s, o);
    }
    relations.emplace_back("r" + std::to_string(k), std::move(facts));
  }
  if (cfg.compositional) {
    std::set<std::pair<std::size_t, std::size_t>> composed;
    for (const auto& [a, b] : relations[0].second) {
      for (const auto& [b2, c] : relations[1].second) {
        if (b == b2 && a != c) composed.insert({a, c});
      }
    }
    Facts facts(composed.begin(), composed.end());
    std::shuffle(facts.begin(), facts.end(), rng);
    if (facts.size() > cfg.facts_per_relation) facts.resize(cfg.facts_per_relation);
    std::sort(facts.begin(), facts.end());
    relations.emplace_back("r0_r1", std::move(facts));
  }

  // Each fact contributes the pair {(s, R, o), (o, R_inv, s)}.
  std::vector<std::pair<RawTriple, RawTriple>> pairs;
  for (const auto& [name, facts] : relations) {
    for (const auto& [s, o] : facts) {
      pairs.push_back({{entity(s), name, entity(o)}, {entity(o), name + "_inv", entity(s)}});
    }
  }
  const std::size_t total = 2 * pairs.size();
  const auto n_valid = static_cast<std::size_t>(cfg.valid_fraction * total + 0.5);
  const auto n_test = static_cast<std::size_t>(cfg.test_fraction * total + 0.5);

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> held(pairs.size(), -1);  // -1 none, else which element
  std::vector<int> split(pairs.size(), 0);  // 1 valid, 2 test
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n_valid + n_test && i < order.size(); ++i) {
    held[order[i]] = coin(rng) ? 1 : 0;
    split[order[i]] = i < n_valid ? 1 : 2;
  }

  ToyKg kg;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const RawTriple* both[2] = {&pairs[i].first, &pairs[i].second};
    for (int e = 0; e < 2; ++e) {
      if (held[i] == e) {
        (split[i] == 1 ? kg.valid : kg.test).push_back(*both[e]);
      } else {
        kg.train.push_back(*both[e]);
      }
    }
  }
  return kg;
}

inline void write_triples(std::ostream& out, const std::vector<RawTriple>& triples) {
  for (const auto& t : triples) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
}

inline void write_toy_kg(const ToyKg& kg, const std::string& dir) {
  for (const auto& [name, split] : {std::pair{"train.txt", &kg.train},
                                    std::pair{"valid.txt", &kg.valid},
                                    std::pair{"test.txt", &kg.test}}) {
    std::ofstream out(dir + "/" + name);
    if (!out) throw Error("io", "cannot write " + dir + "/" + name);
    write_triples(out, *split);
  }
}

}  // namespace dskg
