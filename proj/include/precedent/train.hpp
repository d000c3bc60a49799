#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"
#include "precedent/model.hpp"
#include "precedent/rng.hpp"

namespace precedent {

struct Instance {
  std::vector<double> x;
  OutcomeVector y;
};

using Dataset = std::vector<Instance>;

inline Dataset to_dataset(const std::vector<Case>& cases, std::size_t d1) {
  Dataset out;
  out.reserve(cases.size());
  for (const Case& c : cases) {
    if (!c.embedding) throw Error(ErrorCode::kNoRepresentation, "case \"" + c.id + "\" has no embedding");
    if (c.embedding->size() != d1)
      throw Error(ErrorCode::kDimMismatch, "case \"" + c.id + "\" embedding has dimension " +
                                               std::to_string(c.embedding->size()) + ", model expects " + std::to_string(d1));
    out.push_back({*c.embedding, c.outcomes});
  }
  return out;
}

/// Instance weights of the training objective: 1/N each unless overridden.
inline std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0); }

/// sum_n w_n L_n(theta) + lambda ||theta||^2
inline double objective_value(const Layout& layout, std::span<const double> theta, const Dataset& data,
                              std::span<const double> weights, double lambda) {
  double total = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n)
    if (weights[n] != 0.0) total += weights[n] * instance_loss(layout, theta, data[n].x, data[n].y);
  return total + lambda * squared_norm(theta);
}

inline std::vector<double> objective_gradient(const Layout& layout, std::span<const double> theta, const Dataset& data,
                                              std::span<const double> weights, double lambda) {
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t n = 0; n < data.size(); ++n)
    if (weights[n] != 0.0) accumulate_gradient(layout, theta, data[n].x, data[n].y, weights[n], grad);
  for (std::size_t i = 0; i < theta.size(); ++i) grad[i] += 2.0 * lambda * theta[i];
  return grad;
}

inline double mean_loss(const Layout& layout, std::span<const double> theta, const Dataset& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& inst : data) total += instance_loss(layout, theta, inst.x, inst.y);
  return total / static_cast<double>(data.size());
}

/// A learning rate for which full-batch descent on the linear head cannot
/// increase the objective: 1 / L with L bounding the Hessian's spectral norm
/// (logistic curvature <= 1/4, softmax curvature <= 1/2, times max ||x||^2,
/// plus 2 lambda).
inline double convex_learning_rate_bound(const Layout& layout, const Dataset& data, double lambda) {
  double max_sq = 0.0;
  for (const auto& inst : data) max_sq = std::max(max_sq, squared_norm(inst.x));
  const double curvature = layout.head == Head::kSimple ? 0.25 : 0.5;
  return 1.0 / (curvature * max_sq + 2.0 * lambda);
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_objective = 0.0;  // regularised training objective after the epoch
  std::optional<double> validation_loss;
  double gradient_norm = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::string stop_reason;
};

/// Seeded mini-batch gradient descent on the weighted, L2-regularised
/// objective. With a validation set, stops once validation loss has not
/// improved for `patience` epochs and returns the best epoch's parameters.
inline TrainResult train(const Dataset& train_set, const Dataset& validation, const ModelConfig& config,
                         std::span<const double> weights = {}) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorCode::kEmptyTrainSplit, "training split is empty");
  const Layout layout = Layout::of(config);
  std::vector<double> w = weights.empty() ? uniform_weights(train_set.size())
                                          : std::vector<double>(weights.begin(), weights.end());
  if (w.size() != train_set.size()) throw Error(ErrorCode::kLengthMismatch, "one weight per training instance required");
  for (const auto& inst : train_set) {
    if (inst.x.size() != layout.d1) throw Error(ErrorCode::kDimMismatch, "training embedding dimension mismatch");
    if (inst.y.size() != layout.num_articles) throw Error(ErrorCode::kDimMismatch, "training outcome length mismatch");
  }

  ModelParams params = init_params(config);
  std::vector<double>& theta = params.flat;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t n = train_set.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  const bool dropout = layout.has_hidden() && config.dropout_rate > 0.0;
  const double keep = 1.0 - config.dropout_rate;

  TrainResult result;
  std::vector<double> best = theta;
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> grad(theta.size());
  std::vector<double> mask(dropout ? layout.d2 : 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (batch < n) rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double scale = static_cast<double>(n) / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        if (dropout)
          for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        accumulate_gradient(layout, theta, train_set[idx].x, train_set[idx].y, scale * w[idx], grad, mask);
      }
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= config.learning_rate * (grad[i] + 2.0 * config.l2_strength * theta[i]);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_objective = objective_value(layout, theta, train_set, w, config.l2_strength);
    if (!std::isfinite(entry.train_objective))
      throw Error(ErrorCode::kNonFiniteLoss, "training objective became non-finite at epoch " + std::to_string(epoch));
    const auto full_grad = objective_gradient(layout, theta, train_set, w, config.l2_strength);
    entry.gradient_norm = std::sqrt(squared_norm(full_grad));
    if (!validation.empty()) entry.validation_loss = mean_loss(layout, theta, validation);
    result.log.push_back(entry);

    if (entry.validation_loss) {
      if (*entry.validation_loss < best_validation) {
        best_validation = *entry.validation_loss;
        best = theta;
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= config.patience) {
        result.stop_reason = "early_stopping";
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
    if (config.grad_tolerance > 0.0 && entry.gradient_norm <= config.grad_tolerance) {
      result.stop_reason = "converged";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  if (!validation.empty()) theta = best;
  result.params = std::move(params);
  return result;
}

inline TrainResult train(const Corpus& corpus, const ModelConfig& config) {
  return train(to_dataset(corpus.train, config.d1), to_dataset(corpus.validation, config.d1), config);
}

struct Prediction {
  std::string id;
  std::vector<double> probabilities;  // Simple: K values; Joint: K x 3
  OutcomeVector decoded;
};

struct PredictionSet {
  Head head = Head::kSimple;
  std::size_t num_articles = 0;
  std::vector<Prediction> items;

  std::vector<OutcomeVector> decoded() const {
    std::vector<OutcomeVector> out;
    out.reserve(items.size());
    for (const auto& p : items) out.push_back(p.decoded);
    return out;
  }
};

/// Simple head: positive iff p >= threshold; otherwise negative where the
/// gold outcome claims the article and null where it does not.
inline Outcome decode_simple(double p_positive, double threshold, Outcome gold) {
  if (p_positive >= threshold) return Outcome::kPositive;
  return gold == Outcome::kNull ? Outcome::kNull : Outcome::kNegative;
}

/// Joint head: argmax, ties going to the earlier of positive, negative, null.
inline Outcome decode_joint(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < 3; ++j)
    if (p[j] > p[best]) best = j;
  return static_cast<Outcome>(best);
}

inline PredictionSet predict(const ModelParams& params, const std::vector<Case>& cases, double threshold = 0.5) {
  const Layout& layout = params.layout;
  PredictionSet out{layout.head, layout.num_articles, {}};
  out.items.reserve(cases.size());
  for (const Case& c : cases) {
    if (!c.embedding) throw Error(ErrorCode::kNoRepresentation, "case \"" + c.id + "\" has no embedding");
    const Activations act = forward(layout, params.flat, *c.embedding);
    Prediction p{c.id, act.probabilities, OutcomeVector(layout.num_articles, Outcome::kNull)};
    for (std::size_t k = 0; k < layout.num_articles; ++k) {
      if (layout.head == Head::kSimple) {
        const Outcome gold = k < c.outcomes.size() ? c.outcomes[k] : Outcome::kNull;
        p.decoded[k] = decode_simple(act.probabilities[k], threshold, gold);
      } else {
        p.decoded[k] = decode_joint(std::span<const double>(act.probabilities).subspan(k * 3, 3));
      }
    }
    out.items.push_back(std::move(p));
  }
  return out;
}

enum class F1Averaging { kMicro, kMacro };

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  bool degenerate = false;  // no positive in predictions or gold; f1 reported as 0
};

namespace detail {

inline F1Result f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  F1Result r{0.0, 0.0, 0.0, tp, fp, fn, false};
  if (tp + fp + fn == 0) {
    r.degenerate = true;
    return r;
  }
  r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  return r;
}

}  // namespace detail

/// F1 with "positive" as the positive class over (case, article) pairs.
/// Macro averaging takes the mean over articles with any positive support.
inline F1Result f1_score(const std::vector<OutcomeVector>& predictions, const std::vector<OutcomeVector>& gold,
                         F1Averaging averaging = F1Averaging::kMicro) {
  if (predictions.size() != gold.size())
    throw Error(ErrorCode::kLengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                                std::to_string(gold.size()) + " gold cases");
  const std::size_t k_max = gold.empty() ? 0 : gold.front().size();
  std::vector<std::size_t> tp(k_max, 0), fp(k_max, 0), fn(k_max, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predictions[i].size() != gold[i].size() || gold[i].size() != k_max)
      throw Error(ErrorCode::kLengthMismatch, "outcome vector length mismatch at case " + std::to_string(i));
    for (std::size_t k = 0; k < k_max; ++k) {
      const bool p = predictions[i][k] == Outcome::kPositive;
      const bool g = gold[i][k] == Outcome::kPositive;
      tp[k] += p && g;
      fp[k] += p && !g;
      fn[k] += !p && g;
    }
  }
  std::size_t TP = 0, FP = 0, FN = 0;
  for (std::size_t k = 0; k < k_max; ++k) {
    TP += tp[k];
    FP += fp[k];
    FN += fn[k];
  }
  F1Result micro = detail::f1_from_counts(TP, FP, FN);
  if (averaging == F1Averaging::kMicro) return micro;
  double sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t k = 0; k < k_max; ++k) {
    const auto r = detail::f1_from_counts(tp[k], fp[k], fn[k]);
    if (r.degenerate) continue;
    sum += r.f1;
    ++supported;
  }
  micro.f1 = supported ? sum / static_cast<double>(supported) : 0.0;
  micro.degenerate = supported == 0;
  return micro;
}

inline F1Result micro_f1(const std::vector<OutcomeVector>& predictions, const std::vector<OutcomeVector>& gold) {
  return f1_score(predictions, gold, F1Averaging::kMicro);
}

inline nlohmann::ordered_json checkpoint_to_json(const ModelConfig& config, const ModelParams& params) {
  return {{"format", "precedent-model"}, {"version", 1}, {"config", to_json(config)}, {"params", params.flat}};
}

inline std::pair<ModelConfig, ModelParams> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "precedent-model" || j.value("version", 0) != 1)
    throw Error(ErrorCode::kParse, "not a version-1 model checkpoint");
  ModelConfig config = model_config_from_json(j.at("config"));
  std::vector<double> flat;
  try {
    flat = j.at("params").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint params: ") + e.what());
  }
  return {config, unflatten(Layout::of(config), flat)};
}

}  // namespace precedent
