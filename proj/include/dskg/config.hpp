#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/evaluator.hpp"
#include "dskg/toy.hpp"
#include "dskg/trainer.hpp"
#include "dskg/triple_predictor.hpp"

namespace dskg {

enum class Precision { standard, high };

// Everything a command can be configured with. Settings come from, in
// increasing priority: defaults, a key=value file, DSKG_<KEY> environment
// variables, command-line flags.
struct RunConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string dataset_path;     // cached IndexedDataset
  std::string checkpoint_path;
  std::string out_dir = ".";
  std::string arch_name = "dskg";  // dskg | shared | shared-2 | shared-4
  TrainConfig train;
  EnhanceConfig enhance;
  BeamConfig beam;
  std::size_t curve_points = 1000;
  bool canonicalize = true;
  TieRule ties = TieRule::optimistic;
  Precision precision = Precision::standard;
  bool dump_ranks = true;
  ToyKgConfig toy;

  // Applies arch_name to the training architecture and layer count.
  void resolve() {
    if (arch_name == "dskg") {
      train.arch = Architecture::dskg;
    } else if (arch_name == "shared") {
      train.arch = Architecture::shared;
    } else if (arch_name.rfind("shared-", 0) == 0) {
      train.arch = Architecture::shared;
      train.layers = std::stoul(arch_name.substr(7));
    } else {
      throw ConfigError("unknown architecture: " + arch_name);
    }
    train.validation_enhance = enhance;
    train.workers = std::max<std::size_t>(1, train.workers);
    enhance.validate();
    beam.validate();
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("bad integer for " + key + ": " + v);
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

inline bool parse_bool(const std::string& key, std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

inline std::string fmt_double(double d) {
  std::ostringstream s;
  s.precision(17);
  s << d;
  return s.str();
}

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace config_detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto str = [&](const char* name, const char* help, std::string RunConfig::*m) {
      k.push_back({name, help, [m](RunConfig& c, const std::string& v) { c.*m = v; },
                   [m](const RunConfig& c) { return c.*m; }});
    };
    auto size = [&](const char* name, const char* help, auto getter) {
      k.push_back({name, help,
                   [getter, name](RunConfig& c, const std::string& v) {
                     getter(c) = parse_int<std::size_t>(name, v);
                   },
                   [getter](const RunConfig& c) {
                     return std::to_string(getter(const_cast<RunConfig&>(c)));
                   }});
    };
    auto u64 = [&](const char* name, const char* help, auto getter) {
      k.push_back({name, help,
                   [getter, name](RunConfig& c, const std::string& v) {
                     getter(c) = parse_int<std::uint64_t>(name, v);
                   },
                   [getter](const RunConfig& c) {
                     return std::to_string(getter(const_cast<RunConfig&>(c)));
                   }});
    };
    auto dbl = [&](const char* name, const char* help, auto getter) {
      k.push_back({name, help,
                   [getter, name](RunConfig& c, const std::string& v) {
                     getter(c) = parse_double(name, v);
                   },
                   [getter](const RunConfig& c) {
                     return fmt_double(getter(const_cast<RunConfig&>(c)));
                   }});
    };
    auto flag = [&](const char* name, const char* help, auto getter) {
      k.push_back({name, help,
                   [getter, name](RunConfig& c, const std::string& v) {
                     getter(c) = parse_bool(name, v);
                   },
                   [getter](const RunConfig& c) {
                     return fmt_bool(getter(const_cast<RunConfig&>(c)));
                   }});
    };

    str("train", "training triples file", &RunConfig::train_path);
    str("valid", "validation triples file", &RunConfig::valid_path);
    str("test", "test triples file", &RunConfig::test_path);
    str("dataset", "prepared dataset cache", &RunConfig::dataset_path);
    str("checkpoint", "model checkpoint", &RunConfig::checkpoint_path);
    str("out", "output directory", &RunConfig::out_dir);
    str("arch", "dskg | shared | shared-2 | shared-4", &RunConfig::arch_name);
    dbl("lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
    size("batch", "batch size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    size("dim", "embedding size", [](RunConfig& c) -> std::size_t& { return c.train.dim; });
    size("layers", "layers per stack", [](RunConfig& c) -> std::size_t& { return c.train.layers; });
    dbl("keep", "dropout keep probability", [](RunConfig& c) -> double& { return c.train.keep_prob; });
    size("neg_entities", "entity negatives (0 = auto)",
         [](RunConfig& c) -> std::size_t& { return c.train.entity_negatives; });
    size("neg_relations", "relation negatives (0 = auto)",
         [](RunConfig& c) -> std::size_t& { return c.train.relation_negatives; });
    flag("relation_loss", "train the relation loss (off = NR)",
         [](RunConfig& c) -> bool& { return c.train.relation_loss; });
    size("epochs", "epoch cap", [](RunConfig& c) -> std::size_t& { return c.train.max_epochs; });
    size("patience", "early-stop patience",
         [](RunConfig& c) -> std::size_t& { return c.train.patience; });
    size("eval_interval", "epochs between validation passes",
         [](RunConfig& c) -> std::size_t& { return c.train.eval_interval; });
    u64("seed", "random seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    flag("shared_negatives", "one negative set per batch",
         [](RunConfig& c) -> bool& { return c.train.shared_negatives; });
    flag("logq", "log expected-count correction",
         [](RunConfig& c) -> bool& { return c.train.logq_correction; });
    size("workers", "worker threads (1 = deterministic)",
         [](RunConfig& c) -> std::size_t& { return c.train.workers; });
    flag("enhance", "relation-enhanced rescoring (off = NRE)",
         [](RunConfig& c) -> bool& { return c.enhance.enabled; });
    dbl("alpha", "enhancement exponent", [](RunConfig& c) -> double& { return c.enhance.alpha; });
    size("beam_pairs", "stage-1 window", [](RunConfig& c) -> std::size_t& { return c.beam.pair_window; });
    size("beam_triples", "stage-2 window",
         [](RunConfig& c) -> std::size_t& { return c.beam.triple_window; });
    size("curve_points", "precision curve sample count",
         [](RunConfig& c) -> std::size_t& { return c.curve_points; });
    flag("canonicalize", "merge reverse-orientation predictions",
         [](RunConfig& c) -> bool& { return c.canonicalize; });
    flag("dump_ranks", "write per-query ranks", [](RunConfig& c) -> bool& { return c.dump_ranks; });
    k.push_back({"ties", "optimistic | pessimistic",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "optimistic") c.ties = TieRule::optimistic;
                   else if (v == "pessimistic") c.ties = TieRule::pessimistic;
                   else throw ConfigError("bad value for ties: " + v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.ties == TieRule::optimistic ? "optimistic" : "pessimistic");
                 }});
    k.push_back({"precision", "standard | high",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "standard") c.precision = Precision::standard;
                   else if (v == "high") c.precision = Precision::high;
                   else throw ConfigError("bad value for precision: " + v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.precision == Precision::standard ? "standard" : "high");
                 }});
    size("toy_entities", "toy KG entity count",
         [](RunConfig& c) -> std::size_t& { return c.toy.entities; });
    size("toy_relations", "toy KG base relations",
         [](RunConfig& c) -> std::size_t& { return c.toy.base_relations; });
    size("toy_facts", "toy KG facts per relation",
         [](RunConfig& c) -> std::size_t& { return c.toy.facts_per_relation; });
    flag("toy_compositional", "add a composed relation",
         [](RunConfig& c) -> bool& { return c.toy.compositional; });
    dbl("toy_valid", "toy KG validation fraction",
        [](RunConfig& c) -> double& { return c.toy.valid_fraction; });
    dbl("toy_test", "toy KG test fraction", [](RunConfig& c) -> double& { return c.toy.test_fraction; });
    u64("toy_seed", "toy KG seed", [](RunConfig& c) -> std::uint64_t& { return c.toy.seed; });
    return k;
  }();
  return keys;
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key: " + key);
}

// Flat key=value lines; '#' starts a comment.
inline void apply_config_stream(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(cfg, config_detail::trim(line.substr(0, eq)),
                  config_detail::trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  apply_config_stream(cfg, in, path);
}

inline std::string env_name(const std::string& key) {
  std::string out = "DSKG_";
  for (const char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// DSKG_<KEY> variables, looked up through `getenv_fn` for testability.
inline void apply_environment(RunConfig& cfg,
                              const std::function<const char*(const char*)>& getenv_fn =
                                  [](const char* n) { return std::getenv(n); }) {
  for (const auto& k : config_keys()) {
    if (const char* v = getenv_fn(env_name(k.name).c_str())) k.set(cfg, v);
  }
}

inline void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const auto& k : config_keys()) out << k.name << '=' << k.get(cfg) << '\n';
}

}  // namespace dskg
