// Command-line front end: prepare, train, eval, predict-triples,
// audit-inverse, gen-toy.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "dskg/dskg.hpp"

namespace fs = std::filesystem;
using namespace dskg;

namespace {

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError("missing required setting: " + key);
  if (!fs::exists(path)) throw Error("io", "no such file for " + key + ": " + path);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::ofstream open_out(const RunConfig& cfg, const std::string& name) {
  std::ofstream out(out_path(cfg, name), std::ios::binary);
  if (!out) throw Error("io", "cannot write " + out_path(cfg, name));
  return out;
}

void echo_config(const RunConfig& cfg) {
  auto out = open_out(cfg, "config.resolved.txt");
  write_config(out, cfg);
}

IndexedDataset load_data(const RunConfig& cfg) {
  if (!cfg.dataset_path.empty()) {
    require_file("dataset", cfg.dataset_path);
    return load_dataset_file(cfg.dataset_path);
  }
  require_file("train", cfg.train_path);
  require_file("valid", cfg.valid_path);
  require_file("test", cfg.test_path);
  const auto train = read_triples_file(cfg.train_path);
  const auto valid = read_triples_file(cfg.valid_path);
  const auto test = read_triples_file(cfg.test_path);
  return index_dataset(train, valid, test);
}

void print_stats(std::ostream& out, const DatasetStats& s) {
  out << "entities\t" << s.entities << '\n'
      << "relations\t" << s.relations << '\n'
      << "train\t" << s.train << '\n'
      << "valid\t" << s.valid << '\n'
      << "test\t" << s.test << '\n';
}

int cmd_prepare(const RunConfig& cfg) {
  require_file("train", cfg.train_path);
  require_file("valid", cfg.valid_path);
  require_file("test", cfg.test_path);
  const auto data = load_data(cfg);
  save_dataset_file(out_path(cfg, "dataset.bin"), data);
  const auto stats = dataset_stats(data);
  auto out = open_out(cfg, "stats.txt");
  print_stats(out, stats);
  print_stats(std::cout, stats);
  echo_config(cfg);
  return 0;
}

template <typename T>
int cmd_train(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  echo_config(cfg);
  auto log = open_out(cfg, "train.log");
  log << "epoch\tmean_loss\tval_MRR\tval_Hits@10\telapsed_seconds\n";
  const auto result = train<T>(data, cfg.train, {}, &log, [](const EpochLog& e) {
    write_epoch_log(std::cout, e);
  });
  save_checkpoint_file(out_path(cfg, "model.ckpt"), result.best, vocab_fingerprint(data.vocab()));
  std::cout << "best_epoch\t" << (result.best_epoch ? std::to_string(*result.best_epoch) : "NA")
            << '\n';
  return 0;
}

template <typename T>
int cmd_eval(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  require_file("checkpoint", cfg.checkpoint_path);
  const auto params = load_checkpoint_file<T>(cfg.checkpoint_path, data.vocab());
  echo_config(cfg);
  const auto workers = cfg.train.workers;
  const auto table = relation_prob_table<T>(params, workers);

  EvalOptions plain;
  plain.enhance.enabled = false;
  plain.ties = cfg.ties;
  plain.workers = workers;
  EvalOptions enhanced = plain;
  enhanced.enhance = {true, cfg.enhance.alpha};
  const auto q_plain = evaluate_queries<T>(params, data, data.test(), plain, &table);
  const auto q_enh = evaluate_queries<T>(params, data, data.test(), enhanced, &table);

  const std::vector<NamedReport> reports = {
      {"entity_nre", entity_metrics(q_plain)},
      {"entity_enhanced", entity_metrics(q_enh)},
      {"cascade_nre", cascade_metrics(q_plain)},
      {"cascade_enhanced", cascade_metrics(q_enh)},
  };
  for (const auto& r : reports) {
    auto out = open_out(cfg, "metrics_" + r.name + ".txt");
    write_metrics_kv(out, r.metrics);
  }
  {
    auto out = open_out(cfg, "report.txt");
    out << "# filtered entity prediction, tail and head queries, alpha=" << cfg.enhance.alpha
        << '\n';
    write_metrics_table(out, reports);
  }
  write_metrics_table(std::cout, reports);
  if (cfg.dump_ranks) {
    auto a = open_out(cfg, "ranks_nre.tsv");
    write_query_ranks(a, q_plain, data.vocab());
    auto b = open_out(cfg, "ranks_enhanced.tsv");
    write_query_ranks(b, q_enh, data.vocab());
  }
  return 0;
}

template <typename T>
int cmd_predict(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  require_file("checkpoint", cfg.checkpoint_path);
  const auto params = load_checkpoint_file<T>(cfg.checkpoint_path, data.vocab());
  echo_config(cfg);
  const auto output = predict_triples<T>(params, cfg.beam, cfg.train.workers);
  const auto listed =
      cfg.canonicalize ? canonicalize_output(output, data.vocab()) : output;
  {
    auto out = open_out(cfg, "triples.tsv");
    write_scored_triples(out, listed, data.vocab());
  }
  const auto curve = precision_curve(
      listed, data, default_sample_points(listed.size(), cfg.curve_points), false);
  auto out = open_out(cfg, "curve.tsv");
  write_curve(out, curve);
  std::cout << "triples\t" << listed.size() << '\n';
  if (!curve.points.empty()) {
    const auto& last = curve.points.back();
    std::cout << "n_corr\t" << last.n_corr << "\nn_pred\t" << last.n_pred << '\n';
  }
  return 0;
}

int cmd_audit(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto report = audit_inverse_pairs(data);
  auto out = open_out(cfg, "audit.tsv");
  write_inverse_audit(out, report, data.vocab());
  std::cout << "test_triples\t" << report.test_total << '\n'
            << "exposed_triples\t" << report.exposed_test_triples << '\n'
            << "exposed_fraction\t" << report.exposed_fraction() << '\n'
            << "max_pair_exposure\t" << report.max_exposure() << '\n';
  return 0;
}

int cmd_gen_toy(const RunConfig& cfg) {
  const auto kg = generate_toy_kg(cfg.toy);
  write_toy_kg(kg, cfg.out_dir);
  std::cout << "train\t" << kg.train.size() << "\nvalid\t" << kg.valid.size() << "\ntest\t"
            << kg.test.size() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential knowledge-graph completion: train, evaluate, predict triples"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    s->app->add_option("--config", s->config_file, "key=value configuration file");
    for (const auto& k : config_keys()) {
      std::string flag = "--" + k.name;
      std::replace(flag.begin() + 2, flag.end(), '_', '-');
      s->options[k.name] = s->app->add_option(flag, s->values[k.name], k.help);
    }
    subs.push_back(std::move(s));
    return subs.back().get();
  };
  add("prepare", "index triple files into a dataset cache");
  add("train", "train a model");
  add("eval", "filtered entity prediction and cascade metrics");
  add("predict-triples", "two-stage beam search over whole triples");
  add("audit-inverse", "report inverse-pair exposure of the test split");
  add("gen-toy", "write a deterministic synthetic KG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (const auto& s : subs) {
      if (!s->app->parsed()) continue;
      RunConfig cfg;
      if (!s->config_file.empty()) apply_config_file(cfg, s->config_file);
      apply_environment(cfg);
      for (const auto& [key, opt] : s->options) {
        if (opt->count() > 0) apply_setting(cfg, key, s->values.at(key));
      }
      cfg.resolve();
      fs::create_directories(cfg.out_dir);
      const bool high = cfg.precision == Precision::high;
      const auto name = s->app->get_name();
      if (name == "prepare") return cmd_prepare(cfg);
      if (name == "train") return high ? cmd_train<double>(cfg) : cmd_train<float>(cfg);
      if (name == "eval") return high ? cmd_eval<double>(cfg) : cmd_eval<float>(cfg);
      if (name == "predict-triples") {
        return high ? cmd_predict<double>(cfg) : cmd_predict<float>(cfg);
      }
      if (name == "audit-inverse") return cmd_audit(cfg);
      if (name == "gen-toy") return cmd_gen_toy(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error\t" << e.kind() << '\t' << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error\tinternal\t" << one_line(e.what()) << '\n';
    return 2;
  }
  return 0;
}
