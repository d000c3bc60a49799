#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "precedent/error.hpp"
#include "precedent/model.hpp"
#include "precedent/rng.hpp"
#include "precedent/train.hpp"

namespace precedent {

/// Anything influence can be computed on: per-instance gradients of the
/// unregularised loss and the Hessian of the regularised training objective.
/// `hvp(v, batch)` restricts the data term to `batch` (empty = all).
template <class O>
concept InfluenceObjective = requires(const O& o, std::size_t i, std::span<const double> v,
                                      std::span<const std::size_t> batch) {
  { o.num_params() } -> std::convertible_to<std::size_t>;
  { o.num_train() } -> std::convertible_to<std::size_t>;
  { o.num_test() } -> std::convertible_to<std::size_t>;
  { o.train_gradient(i) } -> std::convertible_to<std::vector<double>>;
  { o.test_gradient(i) } -> std::convertible_to<std::vector<double>>;
  { o.hvp(v, batch) } -> std::convertible_to<std::vector<double>>;
};

/// The trained network's objective: mean train loss + lambda ||theta||^2,
/// evaluated without dropout.
class NetworkObjective {
 public:
  NetworkObjective(ModelParams params, Dataset train_set, Dataset test_set, double lambda)
      : params_(std::move(params)), train_(std::move(train_set)), test_(std::move(test_set)), lambda_(lambda) {}

  std::size_t num_params() const { return params_.size(); }
  std::size_t num_train() const { return train_.size(); }
  std::size_t num_test() const { return test_.size(); }
  const ModelParams& params() const { return params_; }
  double lambda() const { return lambda_; }

  std::vector<double> train_gradient(std::size_t i) const { return gradient_of(train_.at(i)); }
  std::vector<double> test_gradient(std::size_t i) const { return gradient_of(test_.at(i)); }

  std::vector<double> hvp(std::span<const double> v, std::span<const std::size_t> batch = {}) const {
    if (v.size() != num_params())
      throw Error(ErrorCode::kDimMismatch, "hvp vector has " + std::to_string(v.size()) + " entries, expected " +
                                               std::to_string(num_params()));
    std::vector<double> out(v.size(), 0.0);
    if (batch.empty()) {
      const double w = train_.empty() ? 0.0 : 1.0 / static_cast<double>(train_.size());
      for (const auto& inst : train_) accumulate_hvp(params_.layout, params_.flat, inst.x, inst.y, v, w, out);
    } else {
      const double w = 1.0 / static_cast<double>(batch.size());
      for (std::size_t i : batch)
        accumulate_hvp(params_.layout, params_.flat, train_.at(i).x, train_.at(i).y, v, w, out);
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += 2.0 * lambda_ * v[i];
    return out;
  }

 private:
  std::vector<double> gradient_of(const Instance& inst) const {
    auto g = instance_gradient(params_.layout, params_.flat, inst.x, inst.y);
    for (double gi : g)
      if (!std::isfinite(gi)) throw Error(ErrorCode::kNonFiniteGradient, "instance gradient is not finite");
    return g;
  }

  ModelParams params_;
  Dataset train_;
  Dataset test_;
  double lambda_;
};

enum class SolverMethod { kExact, kCg, kLissa };

inline std::string_view to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::kExact: return "exact";
    case SolverMethod::kCg: return "cg";
    case SolverMethod::kLissa: return "lissa";
  }
  return "?";
}

inline SolverMethod parse_solver(std::string_view s) {
  if (s == "exact" || s == "EXACT") return SolverMethod::kExact;
  if (s == "cg" || s == "CG") return SolverMethod::kCg;
  if (s == "lissa" || s == "LISSA" || s == "LiSSA") return SolverMethod::kLissa;
  throw Error(ErrorCode::kUnknownFlag, "unknown solver \"" + std::string(s) + "\" (valid: exact, cg, lissa)");
}

struct InverseHvpConfig {
  SolverMethod method = SolverMethod::kCg;
  double damping = 0.01;
  double cg_tol = 1e-10;
  std::size_t cg_max_iter = 1000;
  std::size_t lissa_depth = 1000;
  std::size_t lissa_samples = 1;
  double lissa_scale = 10.0;
  std::size_t lissa_batch = 0;  // 0: full-batch HVPs
  double lissa_tol = 1e-2;
  std::uint64_t seed = 0;
  std::size_t exact_param_cap = 5000;

  void validate() const {
    if (!(damping >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "damping must be >= 0");
    if (!(cg_tol > 0.0)) throw Error(ErrorCode::kInvalidConfig, "cg_tol must be > 0");
    if (!(lissa_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "lissa_scale must be > 0");
    if (lissa_samples == 0) throw Error(ErrorCode::kInvalidConfig, "lissa_samples must be >= 1");
  }

  bool operator==(const InverseHvpConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const InverseHvpConfig& c) {
  return {{"method", to_string(c.method)},      {"damping", c.damping},
          {"cg_tol", c.cg_tol},                 {"cg_max_iter", c.cg_max_iter},
          {"lissa_depth", c.lissa_depth},       {"lissa_samples", c.lissa_samples},
          {"lissa_scale", c.lissa_scale},       {"lissa_batch", c.lissa_batch},
          {"lissa_tol", c.lissa_tol},           {"seed", c.seed},
          {"exact_param_cap", c.exact_param_cap}};
}

inline InverseHvpConfig inverse_hvp_config_from_json(const nlohmann::json& j) {
  InverseHvpConfig c;
  try {
    if (j.contains("method")) c.method = parse_solver(j.at("method").get<std::string>());
    c.damping = j.value("damping", c.damping);
    c.cg_tol = j.value("cg_tol", c.cg_tol);
    c.cg_max_iter = j.value("cg_max_iter", c.cg_max_iter);
    c.lissa_depth = j.value("lissa_depth", c.lissa_depth);
    c.lissa_samples = j.value("lissa_samples", c.lissa_samples);
    c.lissa_scale = j.value("lissa_scale", c.lissa_scale);
    c.lissa_batch = j.value("lissa_batch", c.lissa_batch);
    c.lissa_tol = j.value("lissa_tol", c.lissa_tol);
    c.seed = j.value("seed", c.seed);
    c.exact_param_cap = j.value("exact_param_cap", c.exact_param_cap);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("inverse-HVP config: ") + e.what());
  }
  c.validate();
  return c;
}

struct SolveDiagnostics {
  SolverMethod method = SolverMethod::kCg;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||(H + delta I) x - v|| / ||v||
  bool converged = false;
};

inline nlohmann::ordered_json to_json(const SolveDiagnostics& d) {
  return {{"method", to_string(d.method)}, {"iterations", d.iterations}, {"residual", d.residual},
          {"converged", d.converged}};
}

struct SolveResult {
  std::vector<double> x;
  SolveDiagnostics diagnostics;
};

/// Budget exhausted; carries the best iterate.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, SolveResult best)
      : Error(ErrorCode::kNotConverged, what), best_(std::move(best)) {}
  const SolveResult& best() const { return best_; }

 private:
  SolveResult best_;
};

namespace detail {

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

template <InfluenceObjective O>
std::vector<double> damped(const O& obj, std::span<const double> v, double delta,
                           std::span<const std::size_t> batch = {}) {
  auto out = obj.hvp(v, batch);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] += delta * v[i];
  return out;
}

template <InfluenceObjective O>
double relative_residual(const O& obj, std::span<const double> x, std::span<const double> v, double delta) {
  const auto ax = damped(obj, x, delta);
  double r = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) r += (ax[i] - v[i]) * (ax[i] - v[i]);
  const double nv = norm(v);
  return nv == 0.0 ? std::sqrt(r) : std::sqrt(r) / nv;
}

template <InfluenceObjective O>
SolveResult solve_exact(const O& obj, std::span<const double> v, const InverseHvpConfig& config) {
  const std::size_t p = obj.num_params();
  if (p > config.exact_param_cap)
    throw Error(ErrorCode::kGuardViolation, "exact solve needs P <= " + std::to_string(config.exact_param_cap) +
                                                ", model has " + std::to_string(p));
  Eigen::MatrixXd a(p, p);
  std::vector<double> e(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    e[j] = 1.0;
    const auto col = damped(obj, e, config.damping);
    for (std::size_t i = 0; i < p; ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    e[j] = 0.0;
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sym);
  if (static_cast<std::size_t>(qr.rank()) < p)
    throw Error(ErrorCode::kSingularHessian, "damped Hessian has rank " + std::to_string(qr.rank()) + " < " +
                                                 std::to_string(p));
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(p));
  const Eigen::VectorXd sol = qr.solve(rhs);
  SolveResult r{std::vector<double>(sol.data(), sol.data() + p), {SolverMethod::kExact, p, 0.0, true}};
  r.diagnostics.residual = relative_residual(obj, r.x, v, config.damping);
  return r;
}

template <InfluenceObjective O>
SolveResult solve_cg(const O& obj, std::span<const double> v, const InverseHvpConfig& config) {
  const std::size_t p = v.size();
  std::vector<double> x(p, 0.0), r(v.begin(), v.end()), d = r;
  const double nv = norm(v);
  SolveResult out{x, {SolverMethod::kCg, 0, 0.0, true}};
  if (nv == 0.0) return out;
  double rr = dot(r, r);
  const double target = config.cg_tol * nv;
  std::size_t it = 0;
  bool breakdown = false;
  while (std::sqrt(rr) > target && it < config.cg_max_iter) {
    const auto ad = damped(obj, d, config.damping);
    const double curvature = dot(d, ad);
    if (!(curvature > 0.0)) {
      breakdown = true;
      break;
    }
    const double alpha = rr / curvature;
    for (std::size_t i = 0; i < p; ++i) {
      x[i] += alpha * d[i];
      r[i] -= alpha * ad[i];
    }
    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < p; ++i) d[i] = r[i] + beta * d[i];
    ++it;
  }
  out.x = std::move(x);
  out.diagnostics.iterations = it;
  out.diagnostics.residual = relative_residual(obj, out.x, v, config.damping);
  out.diagnostics.converged = !breakdown && std::sqrt(rr) <= target && std::isfinite(out.diagnostics.residual);
  return out;
}

/// h <- v + h - (H + delta I) h / scale, so h / scale -> (H + delta I)^{-1} v
/// when the damped Hessian's spectrum lies in (0, 2 scale).
template <InfluenceObjective O>
SolveResult solve_lissa(const O& obj, std::span<const double> v, const InverseHvpConfig& config) {
  const std::size_t p = v.size();
  Rng rng(config.seed ^ 0x6c15a5eed1ULL);
  std::vector<double> sum(p, 0.0);
  std::vector<std::size_t> batch;
  const std::size_t n = obj.num_train();
  for (std::size_t s = 0; s < config.lissa_samples; ++s) {
    std::vector<double> h(v.begin(), v.end());
    for (std::size_t t = 0; t < config.lissa_depth; ++t) {
      batch.clear();
      if (config.lissa_batch > 0 && config.lissa_batch < n)
        for (std::size_t b = 0; b < config.lissa_batch; ++b) batch.push_back(rng.below(n));
      const auto ah = damped(obj, h, config.damping, batch);
      for (std::size_t i = 0; i < p; ++i) h[i] = v[i] + h[i] - ah[i] / config.lissa_scale;
    }
    for (std::size_t i = 0; i < p; ++i) sum[i] += h[i];
  }
  const double denom = config.lissa_scale * static_cast<double>(config.lissa_samples);
  for (double& xi : sum) xi /= denom;
  SolveResult out{std::move(sum), {SolverMethod::kLissa, config.lissa_depth * config.lissa_samples, 0.0, false}};
  out.diagnostics.residual = relative_residual(obj, out.x, v, config.damping);
  out.diagnostics.converged = std::isfinite(out.diagnostics.residual) && out.diagnostics.residual <= config.lissa_tol;
  return out;
}

}  // namespace detail

/// x with (H + delta I) x ~= v. Unconverged iterative solves are returned
/// with `converged == false`; see `inverse_hvp`.
template <InfluenceObjective O>
SolveResult try_inverse_hvp(const O& obj, std::span<const double> v, const InverseHvpConfig& config) {
  config.validate();
  if (v.size() != obj.num_params())
    throw Error(ErrorCode::kDimMismatch, "inverse-HVP right-hand side has " + std::to_string(v.size()) +
                                             " entries, expected " + std::to_string(obj.num_params()));
  switch (config.method) {
    case SolverMethod::kExact: return detail::solve_exact(obj, v, config);
    case SolverMethod::kCg: return detail::solve_cg(obj, v, config);
    case SolverMethod::kLissa: return detail::solve_lissa(obj, v, config);
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown solver");
}

template <InfluenceObjective O>
SolveResult inverse_hvp(const O& obj, std::span<const double> v, const InverseHvpConfig& config) {
  SolveResult r = try_inverse_hvp(obj, v, config);
  if (!r.diagnostics.converged) {
    std::ostringstream msg;
    msg << to_string(config.method) << " stopped after " << r.diagnostics.iterations
        << " iterations with relative residual " << r.diagnostics.residual;
    throw NotConverged(msg.str(), std::move(r));
  }
  return r;
}

/// iota = -grad L_test^T (H + delta I)^{-1} grad L_train. Negative: upweighting
/// the training case lowers the test loss.
template <InfluenceObjective O>
double influence_score(const O& obj, std::size_t train_index, std::size_t test_index, const InverseHvpConfig& config) {
  const auto s_test = inverse_hvp(obj, obj.test_gradient(test_index), config).x;
  return -detail::dot(s_test, obj.train_gradient(train_index));
}

struct InfluenceMatrix {
  std::size_t n_test = 0;
  std::size_t n_train = 0;
  std::vector<double> values;  // values[test * n_train + train]

  double at(std::size_t test, std::size_t train) const { return values.at(test * n_train + train); }
  std::span<const double> row(std::size_t test) const { return {values.data() + test * n_train, n_train}; }
  const std::vector<double>& flat() const { return values; }
  bool operator==(const InfluenceMatrix&) const = default;
};

struct InfluenceDiagnostics {
  InverseHvpConfig config;
  std::size_t num_params = 0;
  std::vector<SolveDiagnostics> per_test;
};

inline nlohmann::ordered_json to_json(const InfluenceDiagnostics& d) {
  nlohmann::ordered_json per_test = nlohmann::ordered_json::array();
  double worst = 0.0;
  std::size_t iterations = 0;
  for (const auto& s : d.per_test) {
    per_test.push_back(to_json(s));
    worst = std::max(worst, s.residual);
    iterations += s.iterations;
  }
  return {{"solver", to_string(d.config.method)},
          {"damping", d.config.damping},
          {"num_params", d.num_params},
          {"total_iterations", iterations},
          {"max_residual", worst},
          {"config", to_json(d.config)},
          {"per_test", per_test}};
}

struct InfluenceResult {
  InfluenceMatrix matrix;
  InfluenceDiagnostics diagnostics;
};

/// One solve per test case, then a dot product with every train gradient.
template <InfluenceObjective O>
InfluenceResult influence_matrix(const O& obj, const InverseHvpConfig& config) {
  InfluenceResult out;
  out.diagnostics.config = config;
  out.diagnostics.num_params = obj.num_params();
  const std::size_t n_train = obj.num_train();
  const std::size_t n_test = obj.num_test();
  std::vector<std::vector<double>> train_grads;
  train_grads.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) train_grads.push_back(obj.train_gradient(i));
  out.matrix = {n_test, n_train, std::vector<double>(n_test * n_train, 0.0)};
  for (std::size_t t = 0; t < n_test; ++t) {
    const SolveResult s = inverse_hvp(obj, obj.test_gradient(t), config);
    out.diagnostics.per_test.push_back(s.diagnostics);
    for (std::size_t i = 0; i < n_train; ++i) {
      const double v = -detail::dot(s.x, train_grads[i]);
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteGradient, "influence score is not finite");
      out.matrix.values[t * n_train + i] = v;
    }
  }
  return out;
}

inline constexpr char kInfluenceMagic[8] = {'P', 'R', 'E', 'C', 'I', 'N', 'F', '1'};
inline constexpr std::uint32_t kTestMajorOrder = 1;

namespace detail {

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw Error(ErrorCode::kParse, "truncated influence matrix file");
  return value;
}

}  // namespace detail

/// Header: magic, |test|, |train| (u64), order id (u32), config hash (u64);
/// then row-major doubles.
inline void write_influence_binary(std::ostream& os, const InfluenceMatrix& m, std::uint64_t config_hash) {
  os.write(kInfluenceMagic, sizeof kInfluenceMagic);
  detail::write_le<std::uint64_t>(os, m.n_test);
  detail::write_le<std::uint64_t>(os, m.n_train);
  detail::write_le<std::uint32_t>(os, kTestMajorOrder);
  detail::write_le<std::uint64_t>(os, config_hash);
  for (double v : m.values) detail::write_le<double>(os, v);
}

struct LoadedInfluence {
  InfluenceMatrix matrix;
  std::uint64_t config_hash = 0;
};

inline LoadedInfluence read_influence_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kInfluenceMagic, sizeof magic) != 0)
    throw Error(ErrorCode::kParse, "not an influence matrix file");
  LoadedInfluence out;
  out.matrix.n_test = detail::read_le<std::uint64_t>(is);
  out.matrix.n_train = detail::read_le<std::uint64_t>(is);
  if (detail::read_le<std::uint32_t>(is) != kTestMajorOrder)
    throw Error(ErrorCode::kParse, "unsupported influence flattening order");
  out.config_hash = detail::read_le<std::uint64_t>(is);
  out.matrix.values.resize(out.matrix.n_test * out.matrix.n_train);
  for (double& v : out.matrix.values) v = detail::read_le<double>(is);
  return out;
}

inline void write_influence_csv(std::ostream& os, const InfluenceMatrix& m, const std::vector<std::string>& test_ids,
                                const std::vector<std::string>& train_ids) {
  if (test_ids.size() != m.n_test || train_ids.size() != m.n_train)
    throw Error(ErrorCode::kShapeMismatch, "id lists do not match the influence matrix");
  os << "test_id,train_id,influence\n";
  os << std::setprecision(17);
  for (std::size_t t = 0; t < m.n_test; ++t)
    for (std::size_t i = 0; i < m.n_train; ++i) os << test_ids[t] << ',' << train_ids[i] << ',' << m.at(t, i) << '\n';
}

enum class LooWeighting {
  kKeepScale,    // remaining cases keep weight 1/N
  kRenormalize,  // remaining cases get 1/(N-1)
};

struct LooOptions {
  std::size_t max_train = 500;
  std::size_t max_params = 5000;
  LooWeighting weighting = LooWeighting::kKeepScale;
};

/// L_test(theta without z) - L_test(theta*) for every test instance, with the
/// model retrained from the same seed and initialisation. `trained` is
/// theta* from the full training set.
inline std::vector<double> loo_oracle(const Dataset& train_set, const Dataset& test_set, const ModelConfig& config,
                                      const ModelParams& trained, std::size_t removed,
                                      const LooOptions& options = {}) {
  if (train_set.size() > options.max_train)
    throw Error(ErrorCode::kGuardViolation, "leave-one-out is limited to " + std::to_string(options.max_train) +
                                                " training cases");
  if (trained.size() > options.max_params)
    throw Error(ErrorCode::kGuardViolation, "leave-one-out is limited to " + std::to_string(options.max_params) +
                                                " parameters");
  if (removed >= train_set.size()) throw Error(ErrorCode::kIndexOutOfRange, "removed index out of range");
  const double n = static_cast<double>(train_set.size());
  std::vector<double> weights(train_set.size(),
                              options.weighting == LooWeighting::kKeepScale || n < 2.0 ? 1.0 / n : 1.0 / (n - 1.0));
  weights[removed] = 0.0;
  const ModelParams without = train(train_set, {}, config, weights).params;
  std::vector<double> deltas;
  deltas.reserve(test_set.size());
  for (const auto& inst : test_set)
    deltas.push_back(instance_loss(without.layout, without.flat, inst.x, inst.y) -
                     instance_loss(trained.layout, trained.flat, inst.x, inst.y));
  return deltas;
}

}  // namespace precedent
