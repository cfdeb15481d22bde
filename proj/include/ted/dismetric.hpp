#pragma once

// Fixed-factor pair disentanglement score with an L1 multinomial logistic
// probe trained by accelerated proximal gradient.

#include <algorithm>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "ted/envsim.hpp"
#include "ted/error.hpp"
#include "ted/rng.hpp"

namespace ted {

/// Batched encoder: observations as columns in, latents as columns out.
using EncoderFn = std::function<Matrix(const Matrix&)>;

struct MetricConfig {
  std::size_t pairs_per_sample = 32;
  std::size_t total_samples = 2000;
  double train_fraction = 0.8;
  double l1_strength = 1e-3;
  std::size_t probe_iterations = 500;
  /// Permute all labels before the split (chance-level control).
  bool shuffle_labels = false;

  std::size_t train_count() const {
    return static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(total_samples)));
  }

  void validate() const {
    if (pairs_per_sample < 1) throw ConfigError("metric.pairs", "B must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("metric.train_fraction", "must lie in (0, 1)");
    const double t = train_fraction * static_cast<double>(total_samples);
    if (std::abs(t - std::round(t)) > 1e-9) throw ConfigError("metric.train_fraction", "samples x fraction must be integral");
    if (train_count() == 0 || train_count() == total_samples)
      throw ConfigError("metric.samples", "both splits must be nonempty");
  }
};

struct MetricSample {
  Vector z_diff;
  std::size_t fixed_factor = 0;
};

struct FixedFactorPair {
  Observation first;
  Observation second;
  std::vector<Vector> first_factors;   // trajectory, oldest first
  std::vector<Vector> second_factors;
};

namespace detail {

/// Factor trajectory of frame_stack states ending at a uniform draw over the
/// phase ranges, reached by random actions.
inline std::vector<Vector> random_factor_trajectory(const EnvSpec& env, Phase phase, Rng& rng) {
  const auto& f = env.factors;
  const auto ne = static_cast<Eigen::Index>(f.num_episodic());
  const auto nd = static_cast<Eigen::Index>(f.num_dynamic());
  FactorState s;
  s.episodic.resize(ne);
  s.dynamic.resize(nd);
  const auto& er = f.episodic_range(phase);
  for (Eigen::Index i = 0; i < ne; ++i) s.episodic[i] = rng.uniform(er[static_cast<std::size_t>(i)].lo, er[static_cast<std::size_t>(i)].hi);
  for (Eigen::Index i = 0; i < nd; ++i) {
    const auto& b = f.dynamic_bounds()[static_cast<std::size_t>(i)];
    s.dynamic[i] = rng.uniform(b.lo, b.hi);
  }
  const std::size_t len = env.mixer.frame_stack();
  std::vector<Vector> traj(len);
  traj[len - 1] = s.full();
  for (std::size_t j = len - 1; j-- > 0;) {
    s.dynamic = env.move(s.dynamic, rng.index(env.num_actions()));
    traj[j] = s.full();
  }
  return traj;
}

}  // namespace detail

/// Two frame stacks whose factor trajectories agree exactly at index k and
/// are drawn independently elsewhere.
inline FixedFactorPair gen_fixed_factor_pair(const EnvSpec& env, Phase phase, std::size_t k, Rng& rng) {
  const std::size_t K = env.factors.num_factors();
  if (k >= K) throw ShapeError("fixed factor index " + std::to_string(k) + " out of range");
  FixedFactorPair p;
  p.first_factors = detail::random_factor_trajectory(env, phase, rng);
  p.second_factors = detail::random_factor_trajectory(env, phase, rng);
  for (std::size_t j = 0; j < p.first_factors.size(); ++j)
    p.second_factors[j][static_cast<Eigen::Index>(k)] = p.first_factors[j][static_cast<Eigen::Index>(k)];
  p.first.data = render_stack(p.first_factors, env.mixer);
  p.second.data = render_stack(p.second_factors, env.mixer);
  return p;
}

/// Sum over pairs of |z(a) - z(b)|, componentwise.
inline Vector z_diff(const EncoderFn& encoder, const std::vector<std::pair<Vector, Vector>>& pairs) {
  if (pairs.empty()) throw ShapeError("z_diff needs at least one pair");
  const Eigen::Index d = pairs.front().first.size();
  const auto b = static_cast<Eigen::Index>(pairs.size());
  Matrix x(d, 2 * b);
  for (Eigen::Index i = 0; i < b; ++i) {
    x.col(i) = pairs[static_cast<std::size_t>(i)].first;
    x.col(b + i) = pairs[static_cast<std::size_t>(i)].second;
  }
  const Matrix z = encoder(x);
  return (z.leftCols(b) - z.rightCols(b)).cwiseAbs().rowwise().sum();
}

struct ProbeParams {
  Matrix weights;    // classes x features
  Vector intercept;  // classes

  std::size_t predict(const Vector& x) const {
    const Vector s = weights * x + intercept;
    Eigen::Index best;
    s.maxCoeff(&best);
    return static_cast<std::size_t>(best);
  }
};

/// Multinomial logistic regression, objective mean cross-entropy + l1 * |W|_1
/// (intercept unpenalized), by FISTA with step 1/L and a fixed iteration
/// budget. L bounds the gradient Lipschitz constant via the top eigenvalue of
/// the design Gram matrix.
inline ProbeParams train_probe(const std::vector<MetricSample>& samples, std::size_t num_classes, const MetricConfig& cfg) {
  if (samples.empty()) throw DegenerateSplitError("no training samples");
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples) {
    if (s.fixed_factor >= num_classes) throw ShapeError("label out of range");
    ++counts[s.fixed_factor];
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] == 0) throw DegenerateSplitError("class " + std::to_string(c) + " missing from the training split");

  const auto m = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index d = samples.front().z_diff.size();
  const auto k = static_cast<Eigen::Index>(num_classes);
  Matrix x(m, d + 1);  // last column is the intercept
  Matrix y = Matrix::Zero(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    x.row(i).head(d) = samples[static_cast<std::size_t>(i)].z_diff.transpose();
    x(i, d) = 1.0;
    y(i, static_cast<Eigen::Index>(samples[static_cast<std::size_t>(i)].fixed_factor)) = 1.0;
  }

  const Matrix gram = x.transpose() * x / static_cast<double>(m);
  Vector v = Vector::Ones(d + 1).normalized();
  double lambda_max = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector w = gram * v;
    lambda_max = w.norm();
    if (lambda_max == 0.0) break;
    v = w / lambda_max;
  }
  const double lipschitz = std::max(0.5 * lambda_max, 1e-12) * 1.01;
  const double step = 1.0 / lipschitz;

  Matrix theta = Matrix::Zero(d + 1, k);  // features x classes
  Matrix prev = theta;
  Matrix look = theta;
  double t = 1.0;
  auto gradient = [&](const Matrix& th) {
    Matrix s = x * th;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    return Matrix(x.transpose() * (s - y) / static_cast<double>(m));
  };
  const double thresh = step * cfg.l1_strength;
  for (std::size_t it = 0; it < cfg.probe_iterations; ++it) {
    Matrix next = look - step * gradient(look);
    next.topRows(d) = next.topRows(d).unaryExpr([&](double w) {
      return w > thresh ? w - thresh : (w < -thresh ? w + thresh : 0.0);
    });
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    look = next + ((t - 1.0) / t_next) * (next - prev);
    prev = std::move(next);
    t = t_next;
  }
  return {prev.topRows(d).transpose(), prev.row(d).transpose()};
}

struct MetricReport {
  double accuracy = 0.0;
  std::vector<double> per_factor_accuracy;
  std::vector<std::size_t> per_factor_count;
  ProbeParams probe;
  std::size_t samples = 0;
  std::size_t pairs_per_sample = 0;
};

inline MetricReport evaluate_probe(const ProbeParams& probe, const std::vector<MetricSample>& test, std::size_t num_classes) {
  MetricReport r;
  r.per_factor_accuracy.assign(num_classes, 0.0);
  r.per_factor_count.assign(num_classes, 0);
  std::size_t correct = 0;
  std::vector<std::size_t> hits(num_classes, 0);
  for (const auto& s : test) {
    ++r.per_factor_count[s.fixed_factor];
    if (probe.predict(s.z_diff) == s.fixed_factor) {
      ++correct;
      ++hits[s.fixed_factor];
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    r.per_factor_accuracy[c] = r.per_factor_count[c] ? static_cast<double>(hits[c]) / static_cast<double>(r.per_factor_count[c]) : 0.0;
  r.accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
  r.probe = probe;
  return r;
}

/// Metric samples with the fixed factor index drawn uniformly.
inline std::vector<MetricSample> generate_metric_samples(const EncoderFn& encoder, const EnvSpec& env, Phase phase,
                                                         const MetricConfig& cfg, Rng& rng) {
  const std::size_t K = env.factors.num_factors();
  std::vector<MetricSample> out;
  out.reserve(cfg.total_samples);
  std::vector<std::pair<Vector, Vector>> pairs(cfg.pairs_per_sample);
  for (std::size_t i = 0; i < cfg.total_samples; ++i) {
    const std::size_t k = rng.index(K);
    for (auto& pr : pairs) {
      auto p = gen_fixed_factor_pair(env, phase, k, rng);
      pr = {std::move(p.first.data), std::move(p.second.data)};
    }
    out.push_back({z_diff(encoder, pairs), k});
  }
  return out;
}

inline MetricReport disentanglement_score(const EncoderFn& encoder, const EnvSpec& env, Phase phase,
                                          const MetricConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t K = env.factors.num_factors();
  if (K < 2) throw ShapeError("disentanglement score needs at least two factors");
  auto samples = generate_metric_samples(encoder, env, phase, cfg, rng);
  if (cfg.shuffle_labels) {
    std::vector<std::size_t> labels;
    for (const auto& s : samples) labels.push_back(s.fixed_factor);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].fixed_factor = labels[i];
  }
  const std::size_t n_train = cfg.train_count();
  std::vector<MetricSample> train(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<MetricSample> test(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());
  auto probe = train_probe(train, K, cfg);
  auto report = evaluate_probe(probe, test, K);
  report.samples = cfg.total_samples;
  report.pairs_per_sample = cfg.pairs_per_sample;
  return report;
}

/// Pearson correlation; 0 when either side is constant.
inline double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma;
  const Eigen::ArrayXd db = b.array() - mb;
  const double den = std::sqrt(da.square().sum() * db.square().sum());
  return den > 0.0 ? (da * db).sum() / den : 0.0;
}

struct FactorMatch {
  double mean_abs_correlation = 0.0;
  std::vector<std::size_t> latent_for_factor;
  std::vector<double> abs_correlation;
};

/// Greedy one-to-one matching of factors (rows of `factors`) to latent
/// coordinates (rows of `latents`) by descending |Pearson r|.
inline FactorMatch matched_correlation(const Matrix& factors, const Matrix& latents) {
  const Eigen::Index K = factors.rows();
  const Eigen::Index n = latents.rows();
  if (factors.cols() != latents.cols()) throw ShapeError("factor and latent sample counts differ");
  if (n < K) throw ShapeError("fewer latent coordinates than factors");
  Matrix c(K, n);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) = std::abs(pearson(factors.row(i).transpose(), latents.row(j).transpose()));
  FactorMatch out;
  out.latent_for_factor.assign(static_cast<std::size_t>(K), 0);
  out.abs_correlation.assign(static_cast<std::size_t>(K), 0.0);
  std::vector<bool> row_used(static_cast<std::size_t>(K), false), col_used(static_cast<std::size_t>(n), false);
  for (Eigen::Index step = 0; step < K; ++step) {
    double best = -1.0;
    Eigen::Index bi = 0, bj = 0;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (row_used[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < n; ++j)
        if (!col_used[static_cast<std::size_t>(j)] && c(i, j) > best) {
          best = c(i, j);
          bi = i;
          bj = j;
        }
    }
    row_used[static_cast<std::size_t>(bi)] = col_used[static_cast<std::size_t>(bj)] = true;
    out.latent_for_factor[static_cast<std::size_t>(bi)] = static_cast<std::size_t>(bj);
    out.abs_correlation[static_cast<std::size_t>(bi)] = best;
  }
  out.mean_abs_correlation =
      std::accumulate(out.abs_correlation.begin(), out.abs_correlation.end(), 0.0) / static_cast<double>(K);
  return out;
}

}  // namespace ted
