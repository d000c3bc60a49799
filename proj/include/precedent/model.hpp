#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "precedent/corpus.hpp"
#include "precedent/error.hpp"
#include "precedent/rng.hpp"

namespace precedent {

enum class Head {
  kSimple,  // per article: p(positive) vs. negative-or-unclaimed
  kJoint,   // per article: softmax over {positive, negative, null}
};

enum class Architecture {
  kMlp,     // logits_k = W_k relu(W h)
  kLinear,  // logits_k = W_k h; convex in the weights
};

constexpr std::string_view to_string(Head h) { return h == Head::kSimple ? "simple" : "joint"; }
constexpr std::string_view to_string(Architecture a) { return a == Architecture::kMlp ? "mlp" : "linear"; }

inline Head parse_head(std::string_view s) {
  if (s == "simple") return Head::kSimple;
  if (s == "joint") return Head::kJoint;
  throw Error(ErrorCode::kUnknownFlag, "unknown head \"" + std::string(s) + "\" (valid: simple, joint)");
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "mlp") return Architecture::kMlp;
  if (s == "linear") return Architecture::kLinear;
  throw Error(ErrorCode::kUnknownFlag, "unknown architecture \"" + std::string(s) + "\" (valid: mlp, linear)");
}

inline constexpr double kProbabilityFloor = 1e-12;

struct ModelConfig {
  Head head = Head::kSimple;
  Architecture architecture = Architecture::kMlp;
  std::size_t d1 = 64;
  std::size_t d2 = 50;
  std::size_t num_articles = 1;
  double learning_rate = 3e-4;
  double l2_strength = 0.0;
  double dropout_rate = 0.1;
  std::size_t max_epochs = 10;
  std::size_t patience = 1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;  // 0 = full batch
  double grad_tolerance = 0.0;  // stop once the objective's gradient norm falls below; 0 disables

  void validate() const {
    if (d1 == 0 || num_articles == 0 || (architecture == Architecture::kMlp && d2 == 0))
      throw Error(ErrorCode::kInvalidConfig, "model dimensions must be positive");
    if (!(l2_strength >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "l2_strength must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(ErrorCode::kInvalidConfig, "dropout_rate must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidConfig, "learning_rate must be positive");
    if (max_epochs == 0) throw Error(ErrorCode::kInvalidConfig, "max_epochs must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"head", to_string(c.head)},
          {"architecture", to_string(c.architecture)},
          {"d1", c.d1},
          {"d2", c.d2},
          {"num_articles", c.num_articles},
          {"learning_rate", c.learning_rate},
          {"l2_strength", c.l2_strength},
          {"dropout_rate", c.dropout_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"grad_tolerance", c.grad_tolerance}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.head = parse_head(j.at("head").get<std::string>());
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.d1 = j.at("d1").get<std::size_t>();
    c.d2 = j.at("d2").get<std::size_t>();
    c.num_articles = j.at("num_articles").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.l2_strength = j.at("l2_strength").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.grad_tolerance = j.at("grad_tolerance").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("model config: ") + e.what());
  }
  return c;
}

/// Where each weight lives in the flat parameter vector: the shared d2 x d1
/// matrix (MLP only) first, then one classes x in_dim block per article, all
/// row-major.
struct Layout {
  Head head = Head::kSimple;
  Architecture architecture = Architecture::kMlp;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t num_articles = 0;

  static Layout of(const ModelConfig& c) { return {c.head, c.architecture, c.d1, c.d2, c.num_articles}; }

  std::size_t classes() const { return head == Head::kSimple ? 1 : 3; }
  bool has_hidden() const { return architecture == Architecture::kMlp; }
  std::size_t in_dim() const { return has_hidden() ? d2 : d1; }
  std::size_t shared_size() const { return has_hidden() ? d2 * d1 : 0; }
  std::size_t article_size() const { return classes() * in_dim(); }
  std::size_t article_offset(std::size_t k) const { return shared_size() + k * article_size(); }
  std::size_t num_params() const { return shared_size() + num_articles * article_size(); }

  bool operator==(const Layout&) const = default;
};

struct ModelParams {
  Layout layout;
  std::vector<double> flat;

  std::span<const double> shared() const { return {flat.data(), layout.shared_size()}; }
  std::span<const double> article(std::size_t k) const {
    return {flat.data() + layout.article_offset(k), layout.article_size()};
  }
  std::size_t size() const { return flat.size(); }

  bool operator==(const ModelParams&) const = default;
};

inline std::vector<double> flatten(const ModelParams& params) { return params.flat; }

inline ModelParams unflatten(const Layout& layout, std::span<const double> values) {
  if (values.size() != layout.num_params())
    throw Error(ErrorCode::kDimMismatch, "parameter vector of length " + std::to_string(values.size()) +
                                             ", layout expects " + std::to_string(layout.num_params()));
  return {layout, std::vector<double>(values.begin(), values.end())};
}

/// Glorot-uniform initialisation from the config seed.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const Layout layout = Layout::of(config);
  ModelParams params{layout, std::vector<double>(layout.num_params(), 0.0)};
  Rng rng(config.seed);
  const double shared_scale = std::sqrt(6.0 / static_cast<double>(layout.d1 + layout.d2));
  for (std::size_t i = 0; i < layout.shared_size(); ++i) params.flat[i] = rng.uniform(-shared_scale, shared_scale);
  const double head_scale = std::sqrt(6.0 / static_cast<double>(layout.in_dim() + layout.classes()));
  for (std::size_t i = layout.shared_size(); i < layout.num_params(); ++i) params.flat[i] = rng.uniform(-head_scale, head_scale);
  return params;
}

inline ModelParams zero_params(const Layout& layout) { return {layout, std::vector<double>(layout.num_params(), 0.0)}; }

/// Intermediate values of one forward pass. `hidden` is the (masked) ReLU
/// layer for the MLP and the input itself for the linear head.
struct Activations {
  std::vector<double> pre_activation;  // W h, MLP only
  std::vector<double> hidden;
  std::vector<double> logits;          // K x classes
  std::vector<double> probabilities;   // Simple: p(positive) per article; Joint: K x 3 simplex
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void check_input(const Layout& layout, std::span<const double> theta, std::span<const double> x) {
  if (theta.size() != layout.num_params())
    throw Error(ErrorCode::kDimMismatch, "parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                                             std::to_string(layout.num_params()));
  if (x.size() != layout.d1)
    throw Error(ErrorCode::kDimMismatch, "embedding has dimension " + std::to_string(x.size()) + ", expected " +
                                             std::to_string(layout.d1));
}

inline void check_target(const Layout& layout, const OutcomeVector& y) {
  if (y.size() != layout.num_articles)
    throw Error(ErrorCode::kDimMismatch, "outcome vector has " + std::to_string(y.size()) + " articles, expected " +
                                             std::to_string(layout.num_articles));
}

}  // namespace detail

/// `mask`, when given, multiplies the hidden layer (inverted dropout).
inline Activations forward(const Layout& layout, std::span<const double> theta, std::span<const double> x,
                           std::span<const double> mask = {}) {
  detail::check_input(layout, theta, x);
  Activations act;
  if (layout.has_hidden()) {
    act.pre_activation.assign(layout.d2, 0.0);
    act.hidden.assign(layout.d2, 0.0);
    for (std::size_t i = 0; i < layout.d2; ++i) {
      act.pre_activation[i] = detail::dot(theta.subspan(i * layout.d1, layout.d1), x);
      act.hidden[i] = act.pre_activation[i] > 0.0 ? act.pre_activation[i] : 0.0;
      if (!mask.empty()) act.hidden[i] *= mask[i];
    }
  } else {
    act.hidden.assign(x.begin(), x.end());
  }
  const std::size_t c = layout.classes();
  const std::size_t in = layout.in_dim();
  act.logits.assign(layout.num_articles * c, 0.0);
  act.probabilities.assign(layout.num_articles * c, 0.0);
  for (std::size_t k = 0; k < layout.num_articles; ++k) {
    const auto block = theta.subspan(layout.article_offset(k), layout.article_size());
    double* z = act.logits.data() + k * c;
    for (std::size_t j = 0; j < c; ++j) z[j] = detail::dot(block.subspan(j * in, in), act.hidden);
    double* p = act.probabilities.data() + k * c;
    if (layout.head == Head::kSimple) {
      p[0] = detail::sigmoid(z[0]);
    } else {
      const double zmax = std::max({z[0], z[1], z[2]});
      double total = 0.0;
      for (std::size_t j = 0; j < 3; ++j) total += (p[j] = std::exp(z[j] - zmax));
      for (std::size_t j = 0; j < 3; ++j) p[j] /= total;
    }
  }
  return act;
}

namespace detail {

/// Per-article loss with the probability floor applied: returns the loss and
/// whether the floor was active (the loss is then flat in the logits).
inline std::pair<double, bool> article_loss(const Layout& layout, const double* z, Outcome y) {
  static const double kCap = -std::log(kProbabilityFloor);
  double loss = 0.0;
  if (layout.head == Head::kSimple) {
    const double target = y == Outcome::kPositive ? 1.0 : 0.0;
    loss = softplus(z[0]) - target * z[0];
  } else {
    const double zmax = std::max({z[0], z[1], z[2]});
    const double lse = zmax + std::log(std::exp(z[0] - zmax) + std::exp(z[1] - zmax) + std::exp(z[2] - zmax));
    loss = lse - z[static_cast<std::size_t>(y)];
  }
  if (loss > kCap) return {kCap, true};
  return {loss, false};
}

}  // namespace detail

/// Negative log-likelihood of one case, summed over articles. The Simple
/// head scores only "positive vs. the rest", so negative and null targets
/// coincide.
inline double instance_loss(const Layout& layout, std::span<const double> theta, std::span<const double> x,
                            const OutcomeVector& y) {
  detail::check_target(layout, y);
  const Activations act = forward(layout, theta, x);
  double total = 0.0;
  for (std::size_t k = 0; k < layout.num_articles; ++k)
    total += detail::article_loss(layout, act.logits.data() + k * layout.classes(), y[k]).first;
  return total;
}

inline double squared_norm(std::span<const double> theta) { return detail::dot(theta, theta); }

/// `(loss, loss + lambda * ||theta||^2)` for one case.
inline std::pair<double, double> instance_loss_regularized(const Layout& layout, std::span<const double> theta,
                                                           std::span<const double> x, const OutcomeVector& y,
                                                           double lambda) {
  const double loss = instance_loss(layout, theta, x, y);
  return {loss, loss + lambda * squared_norm(theta)};
}

namespace detail {

/// dLoss/dlogits for one article; zero when the floor is active.
inline void logit_gradient(const Layout& layout, const Activations& act, std::size_t k, Outcome y, double* out) {
  const std::size_t c = layout.classes();
  const double* z = act.logits.data() + k * c;
  const double* p = act.probabilities.data() + k * c;
  if (article_loss(layout, z, y).second) {
    std::fill(out, out + c, 0.0);
    return;
  }
  if (layout.head == Head::kSimple) {
    out[0] = p[0] - (y == Outcome::kPositive ? 1.0 : 0.0);
  } else {
    for (std::size_t j = 0; j < 3; ++j) out[j] = p[j] - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0);
  }
}

/// Curvature of the article loss in logit space applied to `dz`.
inline void logit_curvature(const Layout& layout, const Activations& act, std::size_t k, Outcome y, const double* dz,
                            double* out) {
  const std::size_t c = layout.classes();
  const double* z = act.logits.data() + k * c;
  const double* p = act.probabilities.data() + k * c;
  if (article_loss(layout, z, y).second) {
    std::fill(out, out + c, 0.0);
    return;
  }
  if (layout.head == Head::kSimple) {
    out[0] = p[0] * (1.0 - p[0]) * dz[0];
  } else {
    const double mean = p[0] * dz[0] + p[1] * dz[1] + p[2] * dz[2];
    for (std::size_t j = 0; j < 3; ++j) out[j] = p[j] * (dz[j] - mean);
  }
}

}  // namespace detail

/// grad += weight * d(instance loss)/d(theta); backprop through the given
/// dropout mask if any.
inline void accumulate_gradient(const Layout& layout, std::span<const double> theta, std::span<const double> x,
                                const OutcomeVector& y, double weight, std::span<double> grad,
                                std::span<const double> mask = {}) {
  detail::check_target(layout, y);
  const Activations act = forward(layout, theta, x, mask);
  const std::size_t c = layout.classes();
  const std::size_t in = layout.in_dim();
  std::vector<double> d_hidden(layout.has_hidden() ? in : 0, 0.0);
  double dz[3];
  for (std::size_t k = 0; k < layout.num_articles; ++k) {
    detail::logit_gradient(layout, act, k, y[k], dz);
    const std::size_t off = layout.article_offset(k);
    for (std::size_t j = 0; j < c; ++j) {
      if (dz[j] == 0.0) continue;
      const double g = weight * dz[j];
      for (std::size_t i = 0; i < in; ++i) grad[off + j * in + i] += g * act.hidden[i];
      if (layout.has_hidden())
        for (std::size_t i = 0; i < in; ++i) d_hidden[i] += dz[j] * theta[off + j * in + i];
    }
  }
  if (!layout.has_hidden()) return;
  for (std::size_t i = 0; i < layout.d2; ++i) {
    if (act.pre_activation[i] <= 0.0) continue;
    const double d_pre = weight * d_hidden[i] * (mask.empty() ? 1.0 : mask[i]);
    if (d_pre == 0.0) continue;
    for (std::size_t j = 0; j < layout.d1; ++j) grad[i * layout.d1 + j] += d_pre * x[j];
  }
}

/// Gradient of the unregularised instance loss.
inline std::vector<double> instance_gradient(const Layout& layout, std::span<const double> theta,
                                             std::span<const double> x, const OutcomeVector& y) {
  std::vector<double> grad(layout.num_params(), 0.0);
  accumulate_gradient(layout, theta, x, y, 1.0, grad);
  return grad;
}

/// out += weight * (Hessian of the instance loss) * v, by forward-over-reverse
/// differentiation (no dropout). ReLU contributes no curvature of its own.
inline void accumulate_hvp(const Layout& layout, std::span<const double> theta, std::span<const double> x,
                           const OutcomeVector& y, std::span<const double> v, double weight, std::span<double> out) {
  detail::check_target(layout, y);
  const Activations act = forward(layout, theta, x);
  const std::size_t c = layout.classes();
  const std::size_t in = layout.in_dim();
  const bool hidden = layout.has_hidden();

  // Directional derivatives of the forward pass.
  std::vector<double> r_hidden(hidden ? in : 0, 0.0);
  if (hidden) {
    for (std::size_t i = 0; i < layout.d2; ++i)
      if (act.pre_activation[i] > 0.0) r_hidden[i] = detail::dot(v.subspan(i * layout.d1, layout.d1), x);
  }
  std::vector<double> r_d_hidden(hidden ? in : 0, 0.0);
  double dz[3], r_z[3], r_dz[3];
  for (std::size_t k = 0; k < layout.num_articles; ++k) {
    const std::size_t off = layout.article_offset(k);
    for (std::size_t j = 0; j < c; ++j) {
      r_z[j] = detail::dot(v.subspan(off + j * in, in), act.hidden);
      if (hidden) r_z[j] += detail::dot(theta.subspan(off + j * in, in), r_hidden);
    }
    detail::logit_gradient(layout, act, k, y[k], dz);
    detail::logit_curvature(layout, act, k, y[k], r_z, r_dz);
    for (std::size_t j = 0; j < c; ++j) {
      const double* w = theta.data() + off + j * in;
      const double* vw = v.data() + off + j * in;
      for (std::size_t i = 0; i < in; ++i) {
        double r = r_dz[j] * act.hidden[i];
        if (hidden) r += dz[j] * r_hidden[i];
        out[off + j * in + i] += weight * r;
      }
      if (hidden) {
        for (std::size_t i = 0; i < in; ++i) r_d_hidden[i] += r_dz[j] * w[i] + dz[j] * vw[i];
      }
    }
  }
  if (!hidden) return;
  for (std::size_t i = 0; i < layout.d2; ++i) {
    if (act.pre_activation[i] <= 0.0) continue;
    const double r_pre = weight * r_d_hidden[i];
    if (r_pre == 0.0) continue;
    for (std::size_t j = 0; j < layout.d1; ++j) out[i * layout.d1 + j] += r_pre * x[j];
  }
}

}  // namespace precedent
