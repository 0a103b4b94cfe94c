#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dskg/common.hpp"
#include "dskg/tensor.hpp"

namespace dskg {

// dskg: separate entity and relation cell stacks.
// shared: one stack processes both timesteps (the general multi-layer RNN).
enum class Architecture : std::uint8_t { dskg = 0, shared = 1 };

enum class LabelKind { entity, relation };

struct ModelShape {
  std::uint32_t entities = 0;
  std::uint32_t relations = 0;  // including reverse relations
  std::size_t dim = 0;          // embedding size == hidden size
  std::size_t layers = 0;
  Architecture arch = Architecture::dskg;

  void validate() const {
    if (entities == 0 || relations == 0) throw ShapeError("empty vocabulary");
    if (dim == 0) throw ShapeError("embedding size must be >= 1");
    if (layers < 1 || layers > 4) throw ShapeError("layer count must be in [1, 4]");
  }
  bool operator==(const ModelShape&) const = default;
};

// One LSTM cell. Gate blocks are stacked row-wise in the order
// input, forget, candidate, output; each block has `dim` rows.
template <typename T>
struct CellParams {
  Matrix<T> input_weights;      // 4k x k
  Matrix<T> recurrent_weights;  // 4k x k
  std::vector<T> bias;          // 4k

  explicit CellParams(std::size_t dim = 0)
      : input_weights(4 * dim, dim), recurrent_weights(4 * dim, dim), bias(4 * dim) {}
  std::size_t dim() const noexcept { return bias.size() / 4; }
  bool operator==(const CellParams&) const = default;
};

template <typename T>
struct TensorRef {
  std::string name;
  std::span<T> values;
};

template <typename T>
struct ModelParams {
  ModelShape shape;
  Matrix<T> entity_embeddings;    // |E| x k
  Matrix<T> relation_embeddings;  // |R'| x k
  std::vector<CellParams<T>> entity_cells;    // dskg only
  std::vector<CellParams<T>> relation_cells;  // dskg only
  std::vector<CellParams<T>> shared_cells;    // shared only
  Matrix<T> entity_out_weights;   // |E| x k
  std::vector<T> entity_out_bias;
  Matrix<T> relation_out_weights;  // |R'| x k
  std::vector<T> relation_out_bias;

  ModelParams() = default;

  // Zero-filled parameters (also the layout of a gradient buffer).
  explicit ModelParams(const ModelShape& s)
      : shape(s),
        entity_embeddings(s.entities, s.dim),
        relation_embeddings(s.relations, s.dim),
        entity_out_weights(s.entities, s.dim),
        entity_out_bias(s.entities),
        relation_out_weights(s.relations, s.dim),
        relation_out_bias(s.relations) {
    s.validate();
    if (s.arch == Architecture::dskg) {
      entity_cells.assign(s.layers, CellParams<T>(s.dim));
      relation_cells.assign(s.layers, CellParams<T>(s.dim));
    } else {
      shared_cells.assign(s.layers, CellParams<T>(s.dim));
    }
  }

  const CellParams<T>& cell(LabelKind input, std::size_t layer) const {
    if (shape.arch == Architecture::shared) return shared_cells[layer];
    return input == LabelKind::entity ? entity_cells[layer] : relation_cells[layer];
  }
  CellParams<T>& cell(LabelKind input, std::size_t layer) {
    return const_cast<CellParams<T>&>(std::as_const(*this).cell(input, layer));
  }

  // Every tensor in declared (checkpoint) order.
  std::vector<TensorRef<T>> tensors() { return collect<T>(*this); }
  std::vector<TensorRef<const T>> tensors() const { return collect<const T>(*this); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.values.size();
    return n;
  }

  void set_zero() {
    for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), T{});
  }

  bool operator==(const ModelParams&) const = default;

 private:
  template <typename U, typename Self>
  static std::vector<TensorRef<U>> collect(Self& p) {
    std::vector<TensorRef<U>> out;
    out.push_back({"entity_embeddings", p.entity_embeddings.flat()});
    out.push_back({"relation_embeddings", p.relation_embeddings.flat()});
    auto add_cells = [&](auto& cells, const std::string& prefix) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto base = prefix + "." + std::to_string(i);
        out.push_back({base + ".input_weights", cells[i].input_weights.flat()});
        out.push_back({base + ".recurrent_weights", cells[i].recurrent_weights.flat()});
        out.push_back({base + ".bias", std::span<U>(cells[i].bias)});
      }
    };
    add_cells(p.entity_cells, "entity_cells");
    add_cells(p.relation_cells, "relation_cells");
    add_cells(p.shared_cells, "shared_cells");
    out.push_back({"entity_out_weights", p.entity_out_weights.flat()});
    out.push_back({"entity_out_bias", std::span<U>(p.entity_out_bias)});
    out.push_back({"relation_out_weights", p.relation_out_weights.flat()});
    out.push_back({"relation_out_bias", std::span<U>(p.relation_out_bias)});
    return out;
  }
};

namespace detail {

template <typename T>
void glorot_fill(std::span<T> values, std::size_t fan_in, std::size_t fan_out,
                 std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : values) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// Glorot-uniform weights, zero biases, forget-gate bias 1. Each tensor draws
// from its own stream derived from `seed`.
template <typename T>
ModelParams<T> init_params(const ModelShape& shape, std::uint64_t seed) {
  ModelParams<T> p(shape);
  const std::size_t k = shape.dim;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return mix_seed(seed, ++stream); };
  detail::glorot_fill<T>(p.entity_embeddings.flat(), shape.entities, k, next_seed());
  detail::glorot_fill<T>(p.relation_embeddings.flat(), shape.relations, k, next_seed());
  for (auto* cells : {&p.entity_cells, &p.relation_cells, &p.shared_cells}) {
    for (auto& c : *cells) {
      detail::glorot_fill<T>(c.input_weights.flat(), k, 4 * k, next_seed());
      detail::glorot_fill<T>(c.recurrent_weights.flat(), k, 4 * k, next_seed());
      std::fill(c.bias.begin(), c.bias.end(), T{});
      std::fill(c.bias.begin() + static_cast<std::ptrdiff_t>(k),
                c.bias.begin() + static_cast<std::ptrdiff_t>(2 * k), T{1});
    }
  }
  detail::glorot_fill<T>(p.entity_out_weights.flat(), k, shape.entities, next_seed());
  detail::glorot_fill<T>(p.relation_out_weights.flat(), k, shape.relations, next_seed());
  return p;
}

template <typename T>
struct LstmState {
  std::vector<T> h;
  std::vector<T> c;
};

template <typename T>
LstmState<T> zero_state(std::size_t dim) {
  return {std::vector<T>(dim), std::vector<T>(dim)};
}

// Everything backward needs from one cell application.
template <typename T>
struct LstmTrace {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> i, f, g, o;  // post-activation gates
  std::vector<T> c, tanh_c, h;
};

template <typename T>
LstmState<T> lstm_step(const CellParams<T>& cell, std::span<const T> x,
                       std::span<const T> h, std::span<const T> c,
                       LstmTrace<T>* trace = nullptr) {
  const std::size_t k = cell.dim();
  require(x.size() == cell.input_weights.cols(), "lstm_step: input size mismatch");
  require(h.size() == k && c.size() == k, "lstm_step: state size mismatch");
  std::vector<T> z(cell.bias);
  matvec_add<T>(cell.input_weights, x, z);
  matvec_add<T>(cell.recurrent_weights, h, z);
  LstmState<T> next{std::vector<T>(k), std::vector<T>(k)};
  std::vector<T> ig(k), fg(k), gg(k), og(k), tc(k);
  for (std::size_t j = 0; j < k; ++j) {
    ig[j] = sigmoid(z[j]);
    fg[j] = sigmoid(z[k + j]);
    gg[j] = std::tanh(z[2 * k + j]);
    og[j] = sigmoid(z[3 * k + j]);
    next.c[j] = fg[j] * c[j] + ig[j] * gg[j];
    tc[j] = std::tanh(next.c[j]);
    next.h[j] = og[j] * tc[j];
  }
  if (trace) {
    trace->x.assign(x.begin(), x.end());
    trace->h_prev.assign(h.begin(), h.end());
    trace->c_prev.assign(c.begin(), c.end());
    trace->i = std::move(ig);
    trace->f = std::move(fg);
    trace->g = std::move(gg);
    trace->o = std::move(og);
    trace->c = next.c;
    trace->tanh_c = std::move(tc);
    trace->h = next.h;
  }
  return next;
}

// Per-layer scale vectors (0 or 1/keep) for the upward copy of each layer's
// output at each timestep. Empty means dropout off.
template <typename T>
struct DropoutMasks {
  std::vector<std::vector<T>> entity_step;
  std::vector<std::vector<T>> relation_step;
  bool enabled() const noexcept { return !entity_step.empty(); }
};

template <typename T, typename Rng>
DropoutMasks<T> make_dropout_masks(const ModelShape& shape, double keep, Rng& rng) {
  DropoutMasks<T> m;
  if (keep >= 1.0) return m;
  if (!(keep > 0.0)) throw ConfigError("keep probability must be in (0, 1]");
  std::bernoulli_distribution coin(keep);
  const T scale = static_cast<T>(1.0 / keep);
  for (auto* step : {&m.entity_step, &m.relation_step}) {
    step->assign(shape.layers, std::vector<T>(shape.dim));
    for (auto& layer : *step) {
      for (auto& v : layer) v = coin(rng) ? scale : T{};
    }
  }
  return m;
}

template <typename T>
struct ForwardTrace {
  std::vector<LstmTrace<T>> entity_step;    // one per layer, timestep 1
  std::vector<LstmTrace<T>> relation_step;  // one per layer, timestep 2
};

template <typename T>
struct ForwardOutput {
  std::vector<T> h_s;  // predicts the relation
  std::vector<T> h_r;  // predicts the object
};

namespace detail {

template <typename T>
void check_ids(const ModelShape& shape, EntityId s, RelationId r) {
  if (s >= shape.entities) throw RangeError("entity id out of range: " + std::to_string(s));
  if (r >= shape.relations) throw RangeError("relation id out of range: " + std::to_string(r));
}

// Runs one timestep through the stack. `prev` holds each layer's carried
// state (zero for timestep 1); on return it holds the new unmasked states.
template <typename T>
std::vector<T> run_stack(const ModelParams<T>& p, LabelKind kind, std::span<const T> input,
                         std::vector<LstmState<T>>& prev,
                         const std::vector<std::vector<T>>* masks,
                         std::vector<LstmTrace<T>>* trace) {
  std::vector<T> upward(input.begin(), input.end());
  if (trace) trace->resize(p.shape.layers);
  for (std::size_t layer = 0; layer < p.shape.layers; ++layer) {
    auto& st = prev[layer];
    st = lstm_step<T>(p.cell(kind, layer), upward, st.h, st.c,
                      trace ? &(*trace)[layer] : nullptr);
    upward = st.h;
    if (masks) {
      const auto& m = (*masks)[layer];
      for (std::size_t j = 0; j < upward.size(); ++j) upward[j] *= m[j];
    }
  }
  return upward;
}

}  // namespace detail

// Timestep 1 feeds the subject embedding through the entity stack from a
// zero state; timestep 2 feeds the relation embedding through the relation
// stack, each layer starting from its own timestep-1 (h, c).
template <typename T>
ForwardOutput<T> forward_triple(const ModelParams<T>& p, EntityId s, RelationId r,
                                const DropoutMasks<T>* masks = nullptr,
                                ForwardTrace<T>* trace = nullptr) {
  detail::check_ids<T>(p.shape, s, r);
  const bool drop = masks && masks->enabled();
  std::vector<LstmState<T>> states(p.shape.layers, zero_state<T>(p.shape.dim));
  ForwardOutput<T> out;
  out.h_s = detail::run_stack<T>(p, LabelKind::entity, p.entity_embeddings.row(s), states,
                                 drop ? &masks->entity_step : nullptr,
                                 trace ? &trace->entity_step : nullptr);
  out.h_r = detail::run_stack<T>(p, LabelKind::relation, p.relation_embeddings.row(r),
                                 states, drop ? &masks->relation_step : nullptr,
                                 trace ? &trace->relation_step : nullptr);
  return out;
}

// Convenience form: dropout with keep probability `keep` drawn from `seed`,
// or no dropout when `keep` is empty.
template <typename T>
ForwardOutput<T> forward_triple(const ModelParams<T>& p, EntityId s, RelationId r,
                                std::optional<double> keep, std::uint64_t seed) {
  if (!keep) return forward_triple<T>(p, s, r);
  std::mt19937_64 rng(seed);
  const auto masks = make_dropout_masks<T>(p.shape, *keep, rng);
  return forward_triple<T>(p, s, r, &masks);
}

// Top hidden state after timestep 1 only.
template <typename T>
std::vector<T> forward_entity(const ModelParams<T>& p, EntityId s) {
  if (s >= p.shape.entities) throw RangeError("entity id out of range: " + std::to_string(s));
  std::vector<LstmState<T>> states(p.shape.layers, zero_state<T>(p.shape.dim));
  return detail::run_stack<T>(p, LabelKind::entity, p.entity_embeddings.row(s), states,
                              nullptr, nullptr);
}

template <typename T>
std::pair<const Matrix<T>*, const std::vector<T>*> output_block(const ModelParams<T>& p,
                                                                LabelKind kind) {
  if (kind == LabelKind::entity) return {&p.entity_out_weights, &p.entity_out_bias};
  return {&p.relation_out_weights, &p.relation_out_bias};
}

// score(label) = row(label) . h + bias(label), in candidate order.
template <typename T>
std::vector<T> logits(const ModelParams<T>& p, std::span<const T> h, LabelKind kind,
                      std::span<const std::uint32_t> candidates) {
  require(h.size() == p.shape.dim, "logits: hidden size mismatch");
  const auto [w, b] = output_block(p, kind);
  std::vector<T> out;
  out.reserve(candidates.size());
  for (const auto c : candidates) {
    if (c >= w->rows()) throw RangeError("logits: candidate id out of range: " + std::to_string(c));
    out.push_back(dot<T>(w->row(c), h) + (*b)[c]);
  }
  return out;
}

template <typename T>
std::vector<T> logits(const ModelParams<T>& p, std::span<const T> h, LabelKind kind) {
  require(h.size() == p.shape.dim, "logits: hidden size mismatch");
  const auto [w, b] = output_block(p, kind);
  std::vector<T> out(*b);
  matvec_add<T>(*w, h, out);
  return out;
}

template <typename To, typename From>
ModelParams<To> convert_params(const ModelParams<From>& src) {
  ModelParams<To> dst(src.shape);
  auto s = src.tensors();
  auto d = dst.tensors();
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s[i].values.size(); ++j) {
      d[i].values[j] = static_cast<To>(s[i].values[j]);
    }
  }
  return dst;
}

}  // namespace dskg
