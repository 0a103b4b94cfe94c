#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dskg/trainer.hpp"
#include "test_util.hpp"

using namespace dskg;
using dskg::testing::check_gradients;
using dskg::testing::random_model;

namespace {

std::vector<IndexedTriple> random_batch(const ModelShape& shape, std::size_t n,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<IndexedTriple> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<EntityId>(rng() % shape.entities),
                   static_cast<RelationId>(rng() % shape.relations),
                   static_cast<EntityId>(rng() % shape.entities)});
  }
  return out;
}

TrainConfig grad_config(double keep) {
  TrainConfig c;
  c.keep_prob = keep;
  c.entity_negatives = 3;
  c.relation_negatives = 2;
  return c;
}

}  // namespace

TEST(SampledSoftmaxLoss, EqualScoresGiveLogOfSize) {
  for (const std::size_t m : {1u, 2u, 7u, 513u}) {
    const std::vector<double> z(m, 0.37);
    EXPECT_NEAR(sampled_softmax_loss<double>(z), std::log(static_cast<double>(m)), 1e-12);
  }
}

TEST(SampledSoftmaxLoss, KnownValuesAndGradient) {
  const std::vector<double> z = {2, 1, 0};
  std::vector<double> dz;
  EXPECT_NEAR(sampled_softmax_loss<double>(z, 0, &dz), 0.40761, 1e-5);
  const double sum = std::exp(2.0) + std::exp(1.0) + 1.0;
  EXPECT_NEAR(dz[0], std::exp(2.0) / sum - 1, 1e-12);
  EXPECT_NEAR(dz[2], 1.0 / sum, 1e-12);
  EXPECT_NEAR(sampled_softmax_loss<double>(z, 2), 2.40761, 1e-5);
  const std::vector<double> big = {1000, 0};
  EXPECT_NEAR(sampled_softmax_loss<double>(big), 0.0, 1e-12);
  const std::vector<double> bad = {1, NAN};
  EXPECT_THROW(sampled_softmax_loss<double>(bad), NumericError);
}

TEST(TripleLoss, NoRelationVariantIsEntityTermOnly) {
  const ModelShape shape{6, 4, 4, 1, Architecture::dskg};
  const auto p = random_model(shape, 3);
  const IndexedTriple t{1, 2, 4};
  ExampleDraw<double> d;
  d.entity_negatives = {0, 5};
  d.relation_negatives = {1};
  auto config = grad_config(1.0);
  config.relation_loss = false;
  const auto fwd = forward_triple<double>(p, 1, 2);
  const std::vector<std::uint32_t> cand = {4, 0, 5};
  const auto z = logits<double>(p, fwd.h_r, LabelKind::entity, cand);
  EXPECT_NEAR(triple_loss<double>(p, t, d, config), sampled_softmax_loss<double>(z), 1e-14);
  config.relation_loss = true;
  const std::vector<std::uint32_t> rcand = {2, 1};
  const auto zr = logits<double>(p, fwd.h_s, LabelKind::relation, rcand);
  EXPECT_NEAR(triple_loss<double>(p, t, d, config),
              sampled_softmax_loss<double>(z) + sampled_softmax_loss<double>(zr), 1e-14);
}

TEST(Backward, MatchesFiniteDifferences) {
  const ModelShape shape{6, 4, 4, 1, Architecture::dskg};
  const auto p = random_model(shape, 17);
  const auto batch = random_batch(shape, 3, 2);
  const auto r = check_gradients(p, batch, grad_config(1.0), 5);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_tensor;
  EXPECT_EQ(r.checked, p.parameter_count());
}

TEST(Backward, MatchesFiniteDifferencesWithDropoutAndDepth) {
  const ModelShape shape{6, 4, 3, 2, Architecture::dskg};
  const auto p = random_model(shape, 23);
  const auto r = check_gradients(p, random_batch(shape, 2, 4), grad_config(0.6), 8);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_tensor;
}

TEST(Backward, MatchesFiniteDifferencesSharedAndLogq) {
  const ModelShape shape{6, 4, 3, 2, Architecture::shared};
  const auto p = random_model(shape, 29);
  auto config = grad_config(1.0);
  config.logq_correction = true;
  const auto r = check_gradients(p, random_batch(shape, 2, 6), config, 9);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_tensor;
}

TEST(Backward, WorkerSplitMatchesSerial) {
  const ModelShape shape{6, 4, 4, 1, Architecture::dskg};
  const auto p = random_model(shape, 31);
  const auto batch = random_batch(shape, 7, 1);
  NegativeSamplers samplers(6, 4);
  std::vector<ExampleDraw<double>> draws;
  std::mt19937_64 rng(1);
  for (const auto& t : batch) draws.push_back(draw_example<double>(t, shape, grad_config(0.5), samplers, rng));
  ModelParams<double> g1(shape), g3(shape);
  const double l1 = backward<double>(p, batch, draws, grad_config(0.5), g1, 1);
  const double l3 = backward<double>(p, batch, draws, grad_config(0.5), g3, 3);
  EXPECT_NEAR(l1, l3, 1e-12);
  const auto a = g1.tensors();
  const auto b = g3.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].values.size(); ++j) {
      EXPECT_NEAR(a[i].values[j], b[i].values[j], 1e-12);
    }
  }
}

TEST(LstmBackward, SaturatedInputGateBlocksCandidateGradient) {
  const std::size_t k = 3;
  auto cell = dskg::testing::random_model({2, 2, k, 1, Architecture::shared}, 4).shared_cells[0];
  for (std::size_t j = 0; j < k; ++j) cell.bias[j] = -50;
  LstmTrace<double> tr;
  const std::vector<double> x = {0.2, -0.4, 0.1}, h = {0.3, 0.1, -0.2}, c = {0.5, -0.5, 0.2};
  lstm_step<double>(cell, x, h, c, &tr);
  CellParams<double> grad(k);
  const std::vector<double> dh = {1, -1, 0.5}, dc(k);
  std::vector<double> dx, dhp, dcp;
  lstm_backward<double>(cell, tr, dh, dc, grad, dx, dhp, dcp);
  for (std::size_t row = 0; row < k; ++row) {
    for (std::size_t m = 0; m < k; ++m) {
      EXPECT_LT(std::abs(grad.input_weights(row, m)), 1e-9);
      EXPECT_LT(std::abs(grad.recurrent_weights(row, m)), 1e-9);
    }
  }
}

TEST(AdamStep, ZeroGradientLeavesParameters) {
  const ModelShape shape{3, 2, 2, 1, Architecture::dskg};
  auto p = random_model(shape, 1);
  const auto before = p;
  ModelParams<double> g(shape);
  AdamState<double> st(shape);
  adam_step<double>(p, g, st, 0.01);
  EXPECT_TRUE(p == before);
}

TEST(AdamStep, FirstStepAndConstantGradientMoveByLearningRate) {
  const ModelShape shape{3, 2, 2, 1, Architecture::dskg};
  auto p = random_model(shape, 1);
  const auto before = p;
  ModelParams<double> g(shape);
  g.entity_embeddings(0, 0) = 1.0;
  g.entity_embeddings(1, 1) = -0.25;
  AdamState<double> st(shape);
  const double lr = 0.001;
  adam_step<double>(p, g, st, lr);
  EXPECT_NEAR(p.entity_embeddings(0, 0), before.entity_embeddings(0, 0) - lr / (1 + 1e-8), 1e-15);
  EXPECT_NEAR(p.entity_embeddings(1, 1),
              before.entity_embeddings(1, 1) + lr * 0.25 / (0.25 + 1e-8), 1e-15);
  for (int i = 1; i < 200; ++i) adam_step<double>(p, g, st, lr);
  EXPECT_NEAR(before.entity_embeddings(0, 0) - p.entity_embeddings(0, 0), 200 * lr, 1e-8);
  EXPECT_EQ(st.step, 200u);
}

TEST(DrawExample, NegativesAreTypeBased) {
  const ModelShape shape{300, 6, 4, 1, Architecture::dskg};
  auto config = grad_config(0.5);
  config.entity_negatives = 20;
  config.relation_negatives = 5;
  NegativeSamplers samplers(300, 6);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const IndexedTriple t{static_cast<EntityId>(i % 300), static_cast<RelationId>(i % 6),
                          static_cast<EntityId>((i * 7) % 300)};
    const auto d = draw_example<double>(t, shape, config, samplers, rng);
    ASSERT_EQ(d.relation_negatives.size(), 5u);
    ASSERT_EQ(d.entity_negatives.size(), 20u);
    for (const auto r : d.relation_negatives) {
      EXPECT_LT(r, 6u);
      EXPECT_NE(r, t.r);
    }
    for (const auto e : d.entity_negatives) {
      EXPECT_LT(e, 300u);
      EXPECT_NE(e, t.o);
    }
  }
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 0.001);
  EXPECT_EQ(c.batch_size, 2048u);
  EXPECT_EQ(c.dim, 512u);
  EXPECT_EQ(c.layers, 2u);
  EXPECT_EQ(c.keep_prob, 0.5);
  EXPECT_EQ(c.resolved_entity_negatives(14541), 512u);
  EXPECT_EQ(c.resolved_relation_negatives(36), 35u);
  const auto data = dskg::testing::toy_dataset({});
  auto bad = c;
  bad.keep_prob = 0;
  EXPECT_THROW(bad.validate(data.vocab()), ConfigError);
  bad = c;
  bad.relation_negatives = 16;
  EXPECT_THROW(bad.validate(data.vocab()), ConfigError);
  bad = c;
  bad.learning_rate = -1;
  EXPECT_THROW(bad.validate(data.vocab()), ConfigError);
}

namespace {

TrainConfig small_train_config() {
  TrainConfig c;
  c.dim = 16;
  c.layers = 1;
  c.batch_size = 16;
  c.learning_rate = 0.01;
  c.keep_prob = 1.0;
  c.max_epochs = 60;
  return c;
}

// Every subject and object appears once, so each triple is memorizable.
const IndexedDataset& fifty_triples() {
  static const IndexedDataset d = [] {
    std::string text;
    for (int i = 0; i < 50; ++i) {
      text += "s" + std::to_string(i) + "\tr" + std::to_string(i % 5) + "\to" +
              std::to_string(i) + "\n";
    }
    return dskg::testing::dataset_from(text, "", "");
  }();
  return d;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const auto& data = fifty_triples();
  auto c = small_train_config();
  c.max_epochs = 0;
  const auto r = train<double>(data, c);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(r.final == init_params<double>(c.model_shape(data.vocab()), c.seed));
  EXPECT_TRUE(r.best == r.final);
}

TEST(Train, LossDropsOnTinyGraph) {
  const auto& data = fifty_triples();
  ASSERT_EQ(data.train_forward().size(), 50u);
  auto c = small_train_config();
  c.max_epochs = 200;
  const auto init = init_params<double>(c.model_shape(data.vocab()), c.seed);
  const double before = mean_train_loss<double>(init, data, c, 3);
  const auto r = train<double>(data, c);
  const double after = mean_train_loss<double>(r.final, data, c, 3);
  EXPECT_LT(after, 0.1 * before) << before << " -> " << after;
}

TEST(Train, EarlyStopsAfterPatienceEvaluations) {
  const auto& data = fifty_triples();
  auto c = small_train_config();
  c.max_epochs = 50;
  std::size_t calls = 0;
  Validator<double> frozen = [&](const ModelParams<double>&) {
    ++calls;
    return ValidationScore{10.0, 20.0};
  };
  auto r = train<double>(data, c, frozen);
  EXPECT_EQ(r.evaluations, 4u);
  EXPECT_EQ(calls, 4u);
  EXPECT_EQ(r.log.size(), 4u);
  EXPECT_EQ(r.best_epoch, 1u);

  c.eval_interval = 2;
  r = train<double>(data, c, frozen);
  EXPECT_EQ(r.evaluations, 4u);
  EXPECT_EQ(r.log.size(), 8u);
  EXPECT_FALSE(r.log[0].validation.has_value());
  EXPECT_TRUE(r.log[1].validation.has_value());
}

TEST(Train, KeepsBestParameters) {
  const auto& data = fifty_triples();
  auto c = small_train_config();
  c.max_epochs = 6;
  c.patience = 10;
  std::size_t call = 0;
  Validator<double> peaked = [&](const ModelParams<double>&) {
    ++call;
    return ValidationScore{call == 2 ? 50.0 : 10.0, 0.0};
  };
  const auto r = train<double>(data, c, peaked);
  EXPECT_EQ(r.best_epoch, 2u);
  EXPECT_FALSE(r.best == r.final);
  auto c2 = c;
  c2.max_epochs = 2;
  const auto two = train<double>(data, c2, [](const ModelParams<double>&) {
    return ValidationScore{};
  });
  EXPECT_TRUE(r.best == two.final);
}

TEST(Train, SeedDeterministic) {
  const auto& data = fifty_triples();
  auto c = small_train_config();
  c.max_epochs = 3;
  c.keep_prob = 0.7;
  c.entity_negatives = 5;
  std::ostringstream log;
  const auto a = train<float>(data, c, {}, &log);
  const auto b = train<float>(data, c);
  EXPECT_TRUE(a.final == b.final);
  EXPECT_EQ(a.log.size(), 3u);
  EXPECT_NE(log.str().find("NA\tNA"), std::string::npos);
  c.seed = 2;
  EXPECT_FALSE(train<float>(data, c).final == a.final);
}

TEST(Train, SharedNegativesRuns) {
  const auto& data = fifty_triples();
  auto c = small_train_config();
  c.max_epochs = 2;
  c.shared_negatives = true;
  c.entity_negatives = 8;
  const auto r = train<double>(data, c);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_TRUE(std::isfinite(r.log.back().mean_loss));
}

TEST(EpochLog, Format) {
  std::ostringstream out;
  write_epoch_log(out, {3, 1.5, ValidationScore{33.9, 52.1}, 2.0});
  EXPECT_EQ(out.str(), "3\t1.5\t33.9\t52.1\t2.000\n");
}
