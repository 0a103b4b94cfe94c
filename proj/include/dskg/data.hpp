#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dskg/common.hpp"

namespace dskg {

struct RawTriple {
  std::string subject;
  std::string relation;
  std::string object;
  bool operator==(const RawTriple&) const = default;
};

// Suffix appended to a relation label to name its reverse relation. It
// contains a control character, which parse_triples never accepts inside a
// field, so it cannot collide with a real label.
inline constexpr std::string_view kReverseMarker = "\x1finv";

namespace detail {

inline bool has_control_char(std::string_view field) {
  return std::any_of(field.begin(), field.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x20 || u == 0x7f;
  });
}

}  // namespace detail

// One triple per line, three tab-separated fields. Blank lines are skipped;
// a trailing '\r' is tolerated.
inline std::vector<RawTriple> parse_triples(std::istream& in,
                                            const std::string& source = "<stream>") {
  std::vector<RawTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 3) {
      throw ParseError(source, line_no, line,
                       "expected 3 tab-separated fields, got " +
                           std::to_string(fields.size()));
    }
    for (const auto f : fields) {
      if (f.empty()) throw ParseError(source, line_no, line, "empty field");
      if (detail::has_control_char(f)) {
        throw ParseError(source, line_no, line, "control character in field");
      }
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]),
                   std::string(fields[2])});
  }
  return out;
}

inline std::vector<RawTriple> read_triples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open triple file: " + path);
  return parse_triples(in, path);
}

// Label <-> id table with per-label training frequency.
class Lexicon {
 public:
  std::uint32_t size() const noexcept {
    return static_cast<std::uint32_t>(labels_.size());
  }
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::uint64_t frequency(std::uint32_t id) const { return freq_.at(id); }
  std::optional<std::uint32_t> find(std::string_view label) const {
    const auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::uint32_t id(std::string_view label) const {
    if (auto found = find(label)) return *found;
    throw RangeError("unknown label: " + std::string(label));
  }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  void add(std::string label, std::uint64_t freq) {
    const auto id = size();
    if (!index_.emplace(label, id).second) {
      throw Error("vocabulary", "duplicate label: " + label);
    }
    labels_.push_back(std::move(label));
    freq_.push_back(freq);
  }

  bool operator==(const Lexicon& o) const {
    return labels_ == o.labels_ && freq_ == o.freq_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Vocabulary {
  Lexicon entities;
  Lexicon relations;             // forward and reverse relations together
  std::vector<RelationId> reverse;  // involution over relation ids
  std::vector<bool> reverse_flag;   // true for r^- relations

  std::uint32_t entity_count() const noexcept { return entities.size(); }
  std::uint32_t relation_count() const noexcept { return relations.size(); }
  std::uint32_t forward_relation_count() const noexcept {
    return relations.size() / 2;
  }
  RelationId reverse_of(RelationId r) const { return reverse.at(r); }
  bool is_reverse(RelationId r) const { return reverse_flag.at(r); }

  bool operator==(const Vocabulary&) const = default;
};

// Frequencies come from `train` only (one subject and one object occurrence
// per triple). Labels that appear only in `extra` (validation/test splits)
// are appended after all training labels with frequency zero. Ids are in
// descending frequency order, ties broken by first appearance; a reverse
// relation first "appears" in the augmented ordering, after every original.
inline Vocabulary build_vocabulary(std::span<const RawTriple> train,
                                   std::span<const RawTriple> extra = {}) {
  if (train.empty()) throw Error("vocabulary", "training set is empty");

  struct Count {
    std::uint64_t freq = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Count> ent, rel;
  std::vector<std::string> ent_order, rel_order;
  std::size_t position = 0;
  auto bump = [&](auto& table, auto& order, const std::string& label,
                  std::uint64_t inc) {
    auto [it, inserted] = table.try_emplace(label, Count{0, position++});
    if (inserted) order.push_back(label);
    it->second.freq += inc;
  };
  for (const auto& t : train) {
    bump(ent, ent_order, t.subject, 1);
    bump(ent, ent_order, t.object, 1);
    bump(rel, rel_order, t.relation, 1);
  }
  for (const auto& t : extra) {
    bump(ent, ent_order, t.subject, 0);
    bump(ent, ent_order, t.object, 0);
    bump(rel, rel_order, t.relation, 0);
  }

  Vocabulary vocab;
  std::stable_sort(ent_order.begin(), ent_order.end(),
                   [&](const std::string& a, const std::string& b) {
                     const auto& ca = ent.at(a);
                     const auto& cb = ent.at(b);
                     if (ca.freq != cb.freq) return ca.freq > cb.freq;
                     return ca.first < cb.first;
                   });
  for (auto& label : ent_order) vocab.entities.add(label, ent.at(label).freq);

  struct RelEntry {
    std::string label;
    std::uint64_t freq;
    std::size_t tie;
    bool reversed;
    std::size_t base;
  };
  std::vector<RelEntry> entries;
  for (std::size_t i = 0; i < rel_order.size(); ++i) {
    const auto& c = rel.at(rel_order[i]);
    entries.push_back({rel_order[i], c.freq, c.first, false, i});
    entries.push_back({rel_order[i] + std::string(kReverseMarker), c.freq,
                       position + c.first, true, i});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const RelEntry& a, const RelEntry& b) {
                     if (a.freq != b.freq) return a.freq > b.freq;
                     return a.tie < b.tie;
                   });
  std::vector<RelationId> forward_id(rel_order.size()), reverse_id(rel_order.size());
  for (std::size_t id = 0; id < entries.size(); ++id) {
    const auto& e = entries[id];
    vocab.relations.add(e.label, e.freq);
    vocab.reverse_flag.push_back(e.reversed);
    (e.reversed ? reverse_id : forward_id)[e.base] = static_cast<RelationId>(id);
  }
  vocab.reverse.resize(entries.size());
  for (std::size_t i = 0; i < rel_order.size(); ++i) {
    vocab.reverse[forward_id[i]] = reverse_id[i];
    vocab.reverse[reverse_id[i]] = forward_id[i];
  }
  return vocab;
}

struct IndexedTriple {
  EntityId s = 0;
  RelationId r = 0;
  EntityId o = 0;
  bool operator==(const IndexedTriple&) const = default;
  auto operator<=>(const IndexedTriple&) const = default;
};

inline IndexedTriple index_triple(const Vocabulary& vocab, const RawTriple& t) {
  return {vocab.entities.id(t.subject), vocab.relations.id(t.relation),
          vocab.entities.id(t.object)};
}

inline RawTriple label_triple(const Vocabulary& vocab, const IndexedTriple& t) {
  return {vocab.entities.label(t.s), vocab.relations.label(t.r),
          vocab.entities.label(t.o)};
}

inline IndexedTriple reverse_triple(const Vocabulary& vocab,
                                    const IndexedTriple& t) {
  return {t.o, vocab.reverse_of(t.r), t.s};
}

// Forward orientation of a triple: (o, r^-, s) becomes (s, r, o).
inline IndexedTriple canonical_triple(const Vocabulary& vocab,
                                      const IndexedTriple& t) {
  return vocab.is_reverse(t.r) ? reverse_triple(vocab, t) : t;
}

// All originals, then all reverses, in input order.
inline std::vector<IndexedTriple> augment_reverse(
    std::span<const IndexedTriple> triples, const Vocabulary& vocab) {
  std::vector<IndexedTriple> out(triples.begin(), triples.end());
  out.reserve(2 * triples.size());
  for (const auto& t : triples) {
    if (t.s >= vocab.entity_count() || t.o >= vocab.entity_count() ||
        t.r >= vocab.relation_count()) {
      throw RangeError("triple id out of vocabulary bounds");
    }
    out.push_back(reverse_triple(vocab, t));
  }
  return out;
}

class TripleSet {
 public:
  TripleSet() = default;
  TripleSet(std::uint64_t entities, std::uint64_t relations)
      : entities_(entities), relations_(relations) {}
  void insert(const IndexedTriple& t) { keys_.insert(key(t)); }
  bool contains(const IndexedTriple& t) const { return keys_.count(key(t)) > 0; }
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::uint64_t key(const IndexedTriple& t) const {
    return (std::uint64_t{t.s} * relations_ + t.r) * entities_ + t.o;
  }
  std::uint64_t entities_ = 0;
  std::uint64_t relations_ = 0;
  std::unordered_set<std::uint64_t> keys_;
};

class IndexedDataset {
 public:
  IndexedDataset() = default;

  // `train` holds forward triples only; the reverse half is added here.
  IndexedDataset(Vocabulary vocab, std::span<const IndexedTriple> train,
                 std::vector<IndexedTriple> valid, std::vector<IndexedTriple> test)
      : vocab_(std::move(vocab)),
        train_(augment_reverse(train, vocab_)),
        train_forward_(train.size()),
        valid_(std::move(valid)),
        test_(std::move(test)) {
    for (const auto* split : {&valid_, &test_}) {
      for (const auto& t : *split) {
        if (t.s >= vocab_.entity_count() || t.o >= vocab_.entity_count() ||
            t.r >= vocab_.relation_count()) {
          throw RangeError("triple id out of vocabulary bounds");
        }
      }
    }
    build_indexes();
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::span<const IndexedTriple> train() const noexcept { return train_; }
  std::span<const IndexedTriple> train_forward() const noexcept {
    return std::span<const IndexedTriple>(train_).first(train_forward_);
  }
  std::span<const IndexedTriple> valid() const noexcept { return valid_; }
  std::span<const IndexedTriple> test() const noexcept { return test_; }

  // Sorted objects o with (s, r, o) in any split, reverse-augmented.
  std::span<const EntityId> known_answers(EntityId s, RelationId r) const {
    const auto it = known_.find(pair_key(s, r));
    if (it == known_.end()) return {};
    return it->second;
  }

  // train ∪ valid ∪ test, both orientations
  const TripleSet& correct_set() const noexcept { return correct_; }
  // valid ∪ test, both orientations
  const TripleSet& predict_set() const noexcept { return predict_; }

 private:
  std::uint64_t pair_key(EntityId s, RelationId r) const {
    return std::uint64_t{s} * vocab_.relation_count() + r;
  }

  void build_indexes() {
    correct_ = TripleSet(vocab_.entity_count(), vocab_.relation_count());
    predict_ = TripleSet(vocab_.entity_count(), vocab_.relation_count());
    auto add = [&](const IndexedTriple& t, bool predictable) {
      known_[pair_key(t.s, t.r)].push_back(t.o);
      correct_.insert(t);
      if (predictable) predict_.insert(t);
    };
    for (const auto& t : train_) add(t, false);
    for (const auto* split : {&valid_, &test_}) {
      for (const auto& t : *split) {
        add(t, true);
        add(reverse_triple(vocab_, t), true);
      }
    }
    for (auto& [key, objects] : known_) {
      std::sort(objects.begin(), objects.end());
      objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
    }
  }

  Vocabulary vocab_;
  std::vector<IndexedTriple> train_;
  std::size_t train_forward_ = 0;
  std::vector<IndexedTriple> valid_;
  std::vector<IndexedTriple> test_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> known_;
  TripleSet correct_;
  TripleSet predict_;
};

// Builds vocabulary over all splits (frequencies from train) and indexes.
inline IndexedDataset index_dataset(std::span<const RawTriple> train,
                                    std::span<const RawTriple> valid,
                                    std::span<const RawTriple> test) {
  std::vector<RawTriple> extra(valid.begin(), valid.end());
  extra.insert(extra.end(), test.begin(), test.end());
  auto vocab = build_vocabulary(train, extra);
  auto index_all = [&](std::span<const RawTriple> raw) {
    std::vector<IndexedTriple> out;
    out.reserve(raw.size());
    for (const auto& t : raw) out.push_back(index_triple(vocab, t));
    return out;
  };
  auto tr = index_all(train);
  auto va = index_all(valid);
  auto te = index_all(test);
  return IndexedDataset(std::move(vocab), tr, std::move(va), std::move(te));
}

// Seed-deterministic shuffled partition of [0, n) into batches.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  }

  std::vector<std::size_t> epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed_, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const {
    const auto order = epoch_order(epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n_; i += batch_size_) {
      const auto end = std::min(n_, i + batch_size_);
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }

  std::size_t batch_count() const noexcept {
    return (n_ + batch_size_ - 1) / batch_size_;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

struct InversePair {
  RelationId train_relation;  // r1
  RelationId test_relation;   // r2
  std::size_t overlap;        // |{(s,o): (s,r1,o) ∈ train, (o,r2,s) ∈ test}|
  std::size_t test_count;     // test triples of r2
  double exposure() const {
    return test_count == 0 ? 0.0 : static_cast<double>(overlap) / test_count;
  }
};

struct InverseAuditReport {
  std::vector<InversePair> pairs;  // overlap > 0 only, highest exposure first
  std::size_t test_total = 0;
  std::size_t exposed_test_triples = 0;  // exposed by at least one pair
  double max_exposure() const {
    double m = 0.0;
    for (const auto& p : pairs) m = std::max(m, p.exposure());
    return m;
  }
  double exposed_fraction() const {
    return test_total == 0 ? 0.0
                           : static_cast<double>(exposed_test_triples) / test_total;
  }
};

// Counts, for ordered forward relation pairs, test triples whose swapped
// (object, subject) pair already occurs in train under another (or the same)
// relation.
inline InverseAuditReport audit_inverse_pairs(const IndexedDataset& data) {
  const auto& vocab = data.vocab();
  const std::uint64_t n_ent = vocab.entity_count();
  std::unordered_map<std::uint64_t, std::vector<RelationId>> train_pairs;
  for (const auto& t : data.train_forward()) {
    train_pairs[std::uint64_t{t.s} * n_ent + t.o].push_back(t.r);
  }
  std::unordered_map<RelationId, std::size_t> test_count;
  std::unordered_map<std::uint64_t, std::size_t> overlap;
  InverseAuditReport report;
  std::unordered_set<std::uint64_t> seen_test;
  for (const auto& t : data.test()) {
    if (vocab.is_reverse(t.r)) continue;
    const std::uint64_t tkey = (std::uint64_t{t.s} * vocab.relation_count() + t.r) * n_ent + t.o;
    if (!seen_test.insert(tkey).second) continue;
    ++report.test_total;
    ++test_count[t.r];
    const auto it = train_pairs.find(std::uint64_t{t.o} * n_ent + t.s);
    if (it == train_pairs.end()) continue;
    std::vector<RelationId> rels = it->second;
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
    ++report.exposed_test_triples;
    for (const auto r1 : rels) {
      ++overlap[std::uint64_t{r1} * vocab.relation_count() + t.r];
    }
  }
  for (const auto& [key, count] : overlap) {
    const auto r1 = static_cast<RelationId>(key / vocab.relation_count());
    const auto r2 = static_cast<RelationId>(key % vocab.relation_count());
    report.pairs.push_back({r1, r2, count, test_count.at(r2)});
  }
  std::sort(report.pairs.begin(), report.pairs.end(),
            [](const InversePair& a, const InversePair& b) {
              if (a.exposure() != b.exposure()) return a.exposure() > b.exposure();
              if (a.overlap != b.overlap) return a.overlap > b.overlap;
              return std::pair(a.train_relation, a.test_relation) <
                     std::pair(b.train_relation, b.test_relation);
            });
  return report;
}

// r1 label, r2 label, overlap, exposure fraction
inline void write_inverse_audit(std::ostream& out, const InverseAuditReport& report,
                                const Vocabulary& vocab) {
  for (const auto& p : report.pairs) {
    out << vocab.relations.label(p.train_relation) << '\t'
        << vocab.relations.label(p.test_relation) << '\t' << p.overlap << '\t'
        << p.exposure() << '\n';
  }
}

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;  // forward relations
  std::size_t train = 0;      // forward triples
  std::size_t valid = 0;
  std::size_t test = 0;
};

inline DatasetStats dataset_stats(const IndexedDataset& d) {
  return {d.vocab().entity_count(), d.vocab().forward_relation_count(),
          d.train_forward().size(), d.valid().size(), d.test().size()};
}

// Cache layout: "DSKGDAT1", u32 version, entity lexicon, relation lexicon
// (label, u64 frequency, u8 reverse flag, u32 reverse id), then the
// forward-train, valid and test splits as u32 triples. Little-endian.
inline constexpr char kDatasetMagic[9] = "DSKGDAT1";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(std::ostream& out, const IndexedDataset& d) {
  using namespace binary;
  out.write(kDatasetMagic, 8);
  write_le<std::uint32_t>(out, kDatasetVersion);
  const auto& v = d.vocab();
  write_le<std::uint32_t>(out, v.entity_count());
  for (std::uint32_t i = 0; i < v.entity_count(); ++i) {
    write_string(out, v.entities.label(i));
    write_le<std::uint64_t>(out, v.entities.frequency(i));
  }
  write_le<std::uint32_t>(out, v.relation_count());
  for (std::uint32_t i = 0; i < v.relation_count(); ++i) {
    write_string(out, v.relations.label(i));
    write_le<std::uint64_t>(out, v.relations.frequency(i));
    write_le<std::uint8_t>(out, v.is_reverse(i) ? 1 : 0);
    write_le<std::uint32_t>(out, v.reverse_of(i));
  }
  auto write_split = [&](std::span<const IndexedTriple> split) {
    write_le<std::uint64_t>(out, split.size());
    for (const auto& t : split) {
      write_le<std::uint32_t>(out, t.s);
      write_le<std::uint32_t>(out, t.r);
      write_le<std::uint32_t>(out, t.o);
    }
  };
  write_split(d.train_forward());
  write_split(d.valid());
  write_split(d.test());
  if (!out) throw Error("io", "failed writing dataset cache");
}

inline IndexedDataset load_dataset(std::istream& in) {
  using namespace binary;
  expect_magic(in, kDatasetMagic);
  const auto version = read_le<std::uint32_t>(in);
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset cache version " + std::to_string(version));
  }
  Vocabulary v;
  const auto n_ent = read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_ent; ++i) {
    auto label = read_string(in);
    v.entities.add(std::move(label), read_le<std::uint64_t>(in));
  }
  const auto n_rel = read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_rel; ++i) {
    auto label = read_string(in);
    v.relations.add(std::move(label), read_le<std::uint64_t>(in));
    v.reverse_flag.push_back(read_le<std::uint8_t>(in) != 0);
    v.reverse.push_back(read_le<std::uint32_t>(in));
  }
  for (std::uint32_t r = 0; r < n_rel; ++r) {
    if (v.reverse[r] >= n_rel || v.reverse[v.reverse[r]] != r || v.reverse[r] == r) {
      throw FormatError("dataset cache has an invalid reverse map");
    }
  }
  auto read_split = [&] {
    const auto n = read_le<std::uint64_t>(in);
    std::vector<IndexedTriple> split;
    split.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      IndexedTriple t;
      t.s = read_le<std::uint32_t>(in);
      t.r = read_le<std::uint32_t>(in);
      t.o = read_le<std::uint32_t>(in);
      split.push_back(t);
    }
    return split;
  };
  auto train = read_split();
  auto valid = read_split();
  auto test = read_split();
  return IndexedDataset(std::move(v), train, std::move(valid), std::move(test));
}

inline void save_dataset_file(const std::string& path, const IndexedDataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write dataset cache: " + path);
  save_dataset(out, d);
}

inline IndexedDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open dataset cache: " + path);
  return load_dataset(in);
}

}  // namespace dskg
