// Trains a small model on a generated graph, reports filtered metrics and
// prints the ten highest-scored new triples.

#include <iostream>

#include "dskg/dskg.hpp"

int main() {
  using namespace dskg;
  const auto kg = generate_toy_kg({});
  const auto data = index_dataset(kg.train, kg.valid, kg.test);
  std::cout << data.vocab().entity_count() << " entities, " << data.train_forward().size()
            << " training triples\n";

  TrainConfig config;
  config.dim = 32;
  config.layers = 1;
  config.batch_size = 64;
  config.learning_rate = 0.01;
  config.max_epochs = 60;
  const auto result = train<float>(data, config, {}, &std::cout);

  const std::vector<NamedReport> reports = {
      {"entity", evaluate_entity_prediction<float>(result.best, data, {false, 1.0 / 3.0})},
      {"entity+enhance", evaluate_entity_prediction<float>(result.best, data, {})},
      {"cascade", evaluate_cascade<float>(result.best, data)},
  };
  write_metrics_table(std::cout, reports);

  const auto triples = canonicalize_output(predict_triples<float>(result.best, {2000, 200}),
                                           data.vocab());
  std::size_t shown = 0;
  for (const auto& st : triples) {
    if (data.correct_set().contains(st.triple) && !data.predict_set().contains(st.triple)) continue;
    const auto t = label_triple(data.vocab(), st.triple);
    std::cout << t.subject << ' ' << t.relation << ' ' << t.object << "  " << st.score
              << (data.predict_set().contains(st.triple) ? "  held-out\n" : "\n");
    if (++shown == 10) break;
  }
}
