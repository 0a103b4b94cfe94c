#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/data.hpp"
#include "dskg/evaluator.hpp"
#include "dskg/model.hpp"
#include "dskg/sampler.hpp"
#include "dskg/tensor.hpp"

namespace dskg {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 2048;
  std::size_t dim = 512;
  std::size_t layers = 2;
  double keep_prob = 0.5;
  std::size_t entity_negatives = 0;    // 0 selects min(512, |E| - 1)
  std::size_t relation_negatives = 0;  // 0 selects min(512, |R'| - 1)
  Architecture arch = Architecture::dskg;
  bool relation_loss = true;  // off: the NR variant
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  std::size_t eval_interval = 1;
  std::uint64_t seed = 1;
  bool shared_negatives = false;  // one negative set per batch and type
  bool logq_correction = false;   // subtract log expected count from logits
  std::size_t workers = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  EnhanceConfig validation_enhance;

  std::size_t resolved_entity_negatives(std::uint32_t entities) const {
    return entity_negatives ? entity_negatives
                            : std::min<std::size_t>(512, entities - 1);
  }
  std::size_t resolved_relation_negatives(std::uint32_t relations) const {
    return relation_negatives ? relation_negatives
                              : std::min<std::size_t>(512, relations - 1);
  }

  ModelShape model_shape(const Vocabulary& v) const {
    return {v.entity_count(), v.relation_count(), dim, layers, arch};
  }

  void validate(const Vocabulary& v) const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (!(keep_prob > 0 && keep_prob <= 1)) throw ConfigError("keep probability must be in (0, 1]");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (eval_interval == 0) throw ConfigError("evaluation interval must be >= 1");
    const auto ne = resolved_entity_negatives(v.entity_count());
    const auto nr = resolved_relation_negatives(v.relation_count());
    if (ne < 1 || ne >= v.entity_count()) throw ConfigError("entity negatives must be in [1, |E|)");
    if (nr < 1 || nr >= v.relation_count()) throw ConfigError("relation negatives must be in [1, |R|)");
    model_shape(v).validate();
    validation_enhance.validate();
  }
};

// Everything random about one training example, drawn up front so the loss
// is a pure function of (params, triple, draw).
template <typename T>
struct ExampleDraw {
  std::vector<std::uint32_t> relation_negatives;
  std::vector<std::uint32_t> entity_negatives;
  DropoutMasks<T> masks;
};

struct NegativeSamplers {
  LogUniformSampler entity;
  LogUniformSampler relation;
  NegativeSamplers(std::uint32_t entities, std::uint32_t relations)
      : entity(entities), relation(relations) {}
};

// Negatives are drawn from the lexicon of the label's own type only.
template <typename Rng>
std::vector<std::uint32_t> type_based_negatives(std::uint32_t label, LabelKind kind,
                                                const TrainConfig& config,
                                                NegativeSamplers& samplers, Rng& rng) {
  auto& sampler = kind == LabelKind::entity ? samplers.entity : samplers.relation;
  const auto count = kind == LabelKind::entity
                         ? config.resolved_entity_negatives(sampler.size())
                         : config.resolved_relation_negatives(sampler.size());
  return sampler.sample(static_cast<std::uint32_t>(count), label, rng);
}

template <typename T, typename Rng>
ExampleDraw<T> draw_example(const IndexedTriple& t, const ModelShape& shape,
                            const TrainConfig& config, NegativeSamplers& samplers, Rng& rng) {
  ExampleDraw<T> d;
  if (config.relation_loss) {
    d.relation_negatives = type_based_negatives(t.r, LabelKind::relation, config, samplers, rng);
  }
  d.entity_negatives = type_based_negatives(t.o, LabelKind::entity, config, samplers, rng);
  d.masks = make_dropout_masks<T>(shape, config.keep_prob, rng);
  return d;
}

// -score[gold] + logsumexp(scores), with max subtraction. When `dscores` is
// given it receives softmax(scores) - onehot(gold).
template <typename T>
T sampled_softmax_loss(std::span<const T> scores, std::size_t gold = 0,
                       std::vector<T>* dscores = nullptr) {
  require(gold < scores.size(), "sampled_softmax_loss: gold position out of range");
  T m = -std::numeric_limits<T>::infinity();
  for (const auto s : scores) {
    if (!std::isfinite(s)) throw NumericError("sampled_softmax_loss: non-finite score");
    m = std::max(m, s);
  }
  T sum{};
  for (const auto s : scores) sum += std::exp(s - m);
  const T loss = m + std::log(sum) - scores[gold];
  if (dscores) {
    dscores->resize(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) {
      (*dscores)[j] = std::exp(scores[j] - m) / sum;
    }
    (*dscores)[gold] -= T{1};
  }
  return loss;
}

namespace detail {

inline std::vector<std::uint32_t> with_gold(std::uint32_t gold,
                                            const std::vector<std::uint32_t>& negatives) {
  std::vector<std::uint32_t> c;
  c.reserve(negatives.size() + 1);
  c.push_back(gold);
  c.insert(c.end(), negatives.begin(), negatives.end());
  return c;
}

// log Q(j), Q(j) = 1 - (1 - P(j))^n: probability label j shows up in n draws.
template <typename T>
void apply_logq(std::vector<T>& z, std::span<const std::uint32_t> cand, std::uint32_t n_labels,
                std::size_t n_draws) {
  const double log_range = std::log(n_labels + 1.0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double pj = std::log((cand[j] + 2.0) / (cand[j] + 1.0)) / log_range;
    const double q = -std::expm1(static_cast<double>(n_draws) * std::log1p(-pj));
    z[j] -= static_cast<T>(std::log(q));
  }
}

template <typename T>
T output_term(const ModelParams<T>& p, std::span<const T> h, LabelKind kind,
              std::uint32_t gold, const std::vector<std::uint32_t>& negatives,
              const TrainConfig& config, T scale, ModelParams<T>* grads, std::vector<T>* dh) {
  const auto cand = with_gold(gold, negatives);
  auto z = logits<T>(p, h, kind, cand);
  if (config.logq_correction) {
    apply_logq(z, cand, kind == LabelKind::entity ? p.shape.entities : p.shape.relations,
               negatives.size());
  }
  std::vector<T> dz;
  const T loss = sampled_softmax_loss<T>(z, 0, grads ? &dz : nullptr);
  if (grads) {
    auto& w = kind == LabelKind::entity ? grads->entity_out_weights : grads->relation_out_weights;
    auto& b = kind == LabelKind::entity ? grads->entity_out_bias : grads->relation_out_bias;
    const auto& pw = kind == LabelKind::entity ? p.entity_out_weights : p.relation_out_weights;
    for (std::size_t j = 0; j < cand.size(); ++j) {
      const T g = scale * dz[j];
      auto wrow = w.row(cand[j]);
      const auto prow = pw.row(cand[j]);
      for (std::size_t i = 0; i < h.size(); ++i) {
        wrow[i] += g * h[i];
        (*dh)[i] += g * prow[i];
      }
      b[cand[j]] += g;
    }
  }
  return loss;
}

}  // namespace detail

template <typename T>
T triple_loss(const ModelParams<T>& p, const IndexedTriple& t, const ExampleDraw<T>& draw,
              const TrainConfig& config) {
  const auto fwd = forward_triple<T>(p, t.s, t.r, &draw.masks);
  T loss{};
  if (config.relation_loss) {
    loss += detail::output_term<T>(p, fwd.h_s, LabelKind::relation, t.r, draw.relation_negatives,
                                   config, T{1}, nullptr, nullptr);
  }
  loss += detail::output_term<T>(p, fwd.h_r, LabelKind::entity, t.o, draw.entity_negatives,
                                 config, T{1}, nullptr, nullptr);
  return loss;
}

// Backpropagates one cell application. dh and dc are gradients w.r.t. the
// cell's output h and c; results go to the cell gradient and dx/dh_prev/dc_prev.
template <typename T>
void lstm_backward(const CellParams<T>& cell, const LstmTrace<T>& tr, std::span<const T> dh,
                   std::span<const T> dc, CellParams<T>& grad, std::vector<T>& dx,
                   std::vector<T>& dh_prev, std::vector<T>& dc_prev) {
  const std::size_t k = cell.dim();
  std::vector<T> dz(4 * k);
  dc_prev.assign(k, T{});
  for (std::size_t j = 0; j < k; ++j) {
    const T dct = dc[j] + dh[j] * tr.o[j] * (T{1} - tr.tanh_c[j] * tr.tanh_c[j]);
    const T d_o = dh[j] * tr.tanh_c[j];
    const T d_i = dct * tr.g[j];
    const T d_g = dct * tr.i[j];
    const T d_f = dct * tr.c_prev[j];
    dc_prev[j] = dct * tr.f[j];
    dz[j] = d_i * tr.i[j] * (T{1} - tr.i[j]);
    dz[k + j] = d_f * tr.f[j] * (T{1} - tr.f[j]);
    dz[2 * k + j] = d_g * (T{1} - tr.g[j] * tr.g[j]);
    dz[3 * k + j] = d_o * tr.o[j] * (T{1} - tr.o[j]);
  }
  outer_add<T>(grad.input_weights, dz, tr.x);
  outer_add<T>(grad.recurrent_weights, dz, tr.h_prev);
  for (std::size_t j = 0; j < 4 * k; ++j) grad.bias[j] += dz[j];
  dx.assign(cell.input_weights.cols(), T{});
  dh_prev.assign(k, T{});
  matvec_transposed_add<T>(cell.input_weights, dz, dx);
  matvec_transposed_add<T>(cell.recurrent_weights, dz, dh_prev);
}

// Adds scale * d(loss)/d(params) into `grads`; returns the unscaled loss.
template <typename T>
T accumulate_triple_gradient(const ModelParams<T>& p, const IndexedTriple& t,
                             const ExampleDraw<T>& draw, const TrainConfig& config, T scale,
                             ModelParams<T>& grads) {
  const std::size_t k = p.shape.dim;
  const std::size_t layers = p.shape.layers;
  ForwardTrace<T> trace;
  const auto fwd = forward_triple<T>(p, t.s, t.r, &draw.masks, &trace);
  std::vector<T> dh_s(k), dh_r(k);
  T loss{};
  if (config.relation_loss) {
    loss += detail::output_term<T>(p, fwd.h_s, LabelKind::relation, t.r, draw.relation_negatives,
                                   config, scale, &grads, &dh_s);
  }
  loss += detail::output_term<T>(p, fwd.h_r, LabelKind::entity, t.o, draw.entity_negatives,
                                 config, scale, &grads, &dh_r);

  const bool drop = draw.masks.enabled();
  std::vector<std::vector<T>> carry_h(layers), carry_c(layers);
  std::vector<T> up = dh_r, dh(k), dx, dhp, dcp;
  const std::vector<T> zero(k);
  for (std::size_t layer = layers; layer-- > 0;) {
    for (std::size_t j = 0; j < k; ++j) {
      dh[j] = drop ? up[j] * draw.masks.relation_step[layer][j] : up[j];
    }
    lstm_backward<T>(p.cell(LabelKind::relation, layer), trace.relation_step[layer], dh, zero,
                     grads.cell(LabelKind::relation, layer), dx, dhp, dcp);
    carry_h[layer] = std::move(dhp);
    carry_c[layer] = std::move(dcp);
    up = std::move(dx);
  }
  auto rrow = grads.relation_embeddings.row(t.r);
  for (std::size_t j = 0; j < k; ++j) rrow[j] += up[j];

  up = dh_s;
  for (std::size_t layer = layers; layer-- > 0;) {
    for (std::size_t j = 0; j < k; ++j) {
      dh[j] = (drop ? up[j] * draw.masks.entity_step[layer][j] : up[j]) + carry_h[layer][j];
    }
    lstm_backward<T>(p.cell(LabelKind::entity, layer), trace.entity_step[layer], dh,
                     carry_c[layer], grads.cell(LabelKind::entity, layer), dx, dhp, dcp);
    up = std::move(dx);
  }
  auto erow = grads.entity_embeddings.row(t.s);
  for (std::size_t j = 0; j < k; ++j) erow[j] += up[j];
  return loss;
}

template <typename T>
void check_finite_gradients(const ModelParams<T>& grads) {
  for (const auto& t : grads.tensors()) {
    for (const auto v : t.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient in " + t.name);
    }
  }
}

// Gradient of the mean batch loss. With several workers each one
// accumulates a contiguous chunk into its own buffer; buffers are summed in
// worker order, so results are reproducible for a fixed worker count.
template <typename T>
T backward(const ModelParams<T>& p, std::span<const IndexedTriple> batch,
           std::span<const ExampleDraw<T>> draws, const TrainConfig& config,
           ModelParams<T>& grads, std::size_t workers = 1) {
  if (batch.empty()) throw Error("trainer", "backward on an empty batch");
  require(draws.size() == batch.size(), "backward: one draw per example required");
  if (!(grads.shape == p.shape)) grads = ModelParams<T>(p.shape);
  grads.set_zero();
  const T scale = T{1} / static_cast<T>(batch.size());
  workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
  std::vector<T> losses(batch.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      losses[i] = accumulate_triple_gradient<T>(p, batch[i], draws[i], config, scale, grads);
    }
  } else {
    std::vector<ModelParams<T>> partial(workers - 1, ModelParams<T>(p.shape));
    parallel_for(batch.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
      auto& g = w == 0 ? grads : partial[w - 1];
      for (std::size_t i = begin; i < end; ++i) {
        losses[i] = accumulate_triple_gradient<T>(p, batch[i], draws[i], config, scale, g);
      }
    });
    auto dst = grads.tensors();
    for (const auto& part : partial) {
      const auto src = part.tensors();
      for (std::size_t ti = 0; ti < dst.size(); ++ti) {
        for (std::size_t j = 0; j < dst[ti].values.size(); ++j) {
          dst[ti].values[j] += src[ti].values[j];
        }
      }
    }
  }
  check_finite_gradients(grads);
  T total{};
  for (const auto l : losses) total += l;
  return total / static_cast<T>(batch.size());
}

template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(const ModelShape& shape, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : m(shape), v(shape), beta1(b1), beta2(b2), epsilon(eps) {}
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
template <typename T>
void adam_step(ModelParams<T>& p, const ModelParams<T>& grads, AdamState<T>& state, double lr) {
  require(p.shape == grads.shape && p.shape == state.m.shape, "adam_step: shape mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto params = p.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto& pt = params[ti].values;
    for (std::size_t j = 0; j < pt.size(); ++j) {
      const T gj = g[ti].values[j];
      T& mj = m[ti].values[j];
      T& vj = v[ti].values[j];
      mj = b1 * mj + (T{1} - b1) * gj;
      vj = b2 * vj + (T{1} - b2) * gj * gj;
      const double m_hat = static_cast<double>(mj) / c1;
      const double v_hat = static_cast<double>(vj) / c2;
      pt[j] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

struct ValidationScore {
  double mrr = 0;     // x 100
  double hits10 = 0;  // percent
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;
  std::optional<ValidationScore> validation;
  double elapsed_seconds = 0;
};

// epoch, mean_loss, val_MRR, val_Hits@10, elapsed_seconds ("NA" when the
// epoch had no validation pass).
inline void write_epoch_log(std::ostream& out, const EpochLog& e) {
  out << e.epoch << '\t' << std::setprecision(8) << e.mean_loss << '\t';
  if (e.validation) {
    out << e.validation->mrr << '\t' << e.validation->hits10;
  } else {
    out << "NA\tNA";
  }
  out << '\t' << std::fixed << std::setprecision(3) << e.elapsed_seconds << std::defaultfloat
      << '\n';
}

template <typename T>
using Validator = std::function<ValidationScore(const ModelParams<T>&)>;

template <typename T>
struct TrainResult {
  ModelParams<T> best;   // best validation MRR (or final params without validation)
  ModelParams<T> final;
  std::vector<EpochLog> log;
  std::size_t evaluations = 0;
  std::optional<std::size_t> best_epoch;
  double best_mrr = -std::numeric_limits<double>::infinity();
};

// Filtered validation MRR and Hits@10 with the configured enhancement.
template <typename T>
Validator<T> validation_scorer(const IndexedDataset& data, const TrainConfig& config) {
  return [&data, config](const ModelParams<T>& p) {
    EvalOptions opt;
    opt.enhance = config.validation_enhance;
    opt.workers = config.workers;
    const auto m = entity_metrics(evaluate_queries<T>(p, data, data.valid(), opt));
    return ValidationScore{m.mrr, m.hits10};
  };
}

// Mean training loss over the whole (augmented) training set with dropout
// off and a fixed negative draw; diagnostic only.
template <typename T>
double mean_train_loss(const ModelParams<T>& p, const IndexedDataset& data,
                       const TrainConfig& config, std::uint64_t seed) {
  NegativeSamplers samplers(p.shape.entities, p.shape.relations);
  TrainConfig eval_config = config;
  eval_config.keep_prob = 1.0;
  double total = 0;
  const auto train = data.train();
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    const auto draw = draw_example<T>(train[i], p.shape, eval_config, samplers, rng);
    total += static_cast<double>(triple_loss<T>(p, train[i], draw, eval_config));
  }
  return train.empty() ? 0.0 : total / static_cast<double>(train.size());
}

// Epochs of shuffled mini-batches with Adam. Every `eval_interval` epochs the
// validator runs; the best-MRR parameters are kept and training stops after
// `patience` consecutive evaluations without strict improvement.
template <typename T>
TrainResult<T> train(const IndexedDataset& data, const TrainConfig& config,
                     Validator<T> validator = {}, std::ostream* log_out = nullptr,
                     std::function<void(const EpochLog&)> on_epoch = {}) {
  const auto& vocab = data.vocab();
  config.validate(vocab);
  const auto shape = config.model_shape(vocab);
  if (!validator && !data.valid().empty()) validator = validation_scorer<T>(data, config);

  TrainResult<T> result;
  ModelParams<T> params = init_params<T>(shape, config.seed);
  result.best = params;
  AdamState<T> adam(shape, config.beta1, config.beta2, config.epsilon);
  ModelParams<T> grads(shape);
  NegativeSamplers samplers(shape.entities, shape.relations);
  const auto train_set = data.train();
  const BatchIterator batches(train_set.size(), config.batch_size, mix_seed(config.seed, 0x5eed));
  const auto start = std::chrono::steady_clock::now();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs && !train_set.empty(); ++epoch) {
    double loss_sum = 0;
    std::size_t position = 0;
    for (const auto& idx : batches.batches(epoch)) {
      std::vector<IndexedTriple> batch;
      std::vector<ExampleDraw<T>> draws;
      batch.reserve(idx.size());
      draws.reserve(idx.size());
      std::vector<std::uint32_t> shared_r, shared_e;
      if (config.shared_negatives) {
        std::mt19937_64 rng(mix_seed(config.seed, epoch, ~std::uint64_t{position}));
        if (config.relation_loss) {
          shared_r = samplers.relation.sample(
              static_cast<std::uint32_t>(config.resolved_relation_negatives(shape.relations)),
              shape.relations, rng);
        }
        shared_e = samplers.entity.sample(
            static_cast<std::uint32_t>(config.resolved_entity_negatives(shape.entities)),
            shape.entities, rng);
      }
      for (const auto i : idx) {
        const auto& t = train_set[i];
        std::mt19937_64 rng(mix_seed(config.seed, epoch, position++));
        batch.push_back(t);
        if (config.shared_negatives) {
          ExampleDraw<T> d;
          for (const auto r : shared_r) if (r != t.r) d.relation_negatives.push_back(r);
          for (const auto e : shared_e) if (e != t.o) d.entity_negatives.push_back(e);
          d.masks = make_dropout_masks<T>(shape, config.keep_prob, rng);
          draws.push_back(std::move(d));
        } else {
          draws.push_back(draw_example<T>(t, shape, config, samplers, rng));
        }
      }
      const T loss = backward<T>(params, batch, draws, config, grads, config.workers);
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      adam_step<T>(params, grads, adam, config.learning_rate);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(train_set.size());
    bool stop = false;
    if (validator && epoch % config.eval_interval == 0) {
      entry.validation = validator(params);
      ++result.evaluations;
      if (entry.validation->mrr > result.best_mrr) {
        result.best_mrr = entry.validation->mrr;
        result.best = params;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        stop = true;
      }
    }
    entry.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log_out) {
      write_epoch_log(*log_out, entry);
      log_out->flush();
    }
    if (on_epoch) on_epoch(entry);
    result.log.push_back(entry);
    if (stop) break;
  }
  if (!result.best_epoch) result.best = params;
  result.final = std::move(params);
  return result;
}

}  // namespace dskg
