// Generates a small corpus, trains a Joint head, scores every train/test
// pair and prints the correlation table.
#include <cstdio>

#include "precedent/analysis.hpp"
#include "precedent/citegraph.hpp"
#include "precedent/synth.hpp"

using namespace precedent;

int main() {
  SynthConfig sc;
  sc.n_train = 120;
  sc.n_test = 20;
  sc.seed = 3;
  const SynthResult synth = generate(sc);
  const Corpus& corpus = synth.corpus;

  ModelConfig mc;
  mc.head = Head::kJoint;
  mc.d1 = sc.d1;
  mc.d2 = 8;
  mc.num_articles = sc.num_articles;
  mc.learning_rate = 0.5;
  mc.max_epochs = 300;
  mc.batch_size = 0;
  mc.dropout_rate = 0.0;
  mc.l2_strength = 1e-3;
  const TrainResult trained = train(corpus, mc);

  std::vector<OutcomeVector> gold;
  for (const auto& c : corpus.test) gold.push_back(c.outcomes);
  const F1Result f1 = micro_f1(predict(trained.params, corpus.test).decoded(), gold);
  std::printf("test micro-F1 %.3f\n", f1.f1);

  const NetworkObjective objective(trained.params, to_dataset(corpus.train, mc.d1), to_dataset(corpus.test, mc.d1),
                                   mc.l2_strength);
  InverseHvpConfig solver;
  solver.method = SolverMethod::kExact;
  const InfluenceMatrix matrix = influence_matrix(objective, solver).matrix;

  const CitationNetwork network = explicit_network(corpus);
  for (Scope scope : {Scope::kCited, Scope::kClaimed}) {
    const Labeling labels = label_corpus(corpus, network, scope);
    const CorrelationInputs in{&labels, nullptr, std::nullopt, ScoreOrientation::kHelpfulness};
    for (const auto& spec : table_specs(scope)) {
      const CorrelationRow row = correlate(matrix, spec, in);
      if (row.rho)
        std::printf("%-8s %-24s rho=%+.4f  positives=%zu\n", to_string(scope).data(), kind_label(spec.kind).c_str(),
                    *row.rho, row.positives);
      else
        std::printf("%-8s %-24s skipped: %s\n", to_string(scope).data(), kind_label(spec.kind).c_str(),
                    row.skip_reason.c_str());
    }
  }
}
