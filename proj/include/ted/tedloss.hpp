#pragma once

// Temporal-pair classifier, weighted cross-entropy loss, and the TED update.

#include <cmath>
#include <span>
#include <vector>

#include "ted/nncore.hpp"
#include "ted/replay.hpp"

namespace ted {

/// Per-coordinate classifier parameters.
///   y = sum_i |k1_i z1_i + k2_i z2_i + b_i| - (kbar_i z1_i + bbar_i)^2 + c
struct ClassifierParams {
  Vector k1, k2, b, kbar, bbar;
  double c = 0.0;

  /// k1 = k2 = 1, everything else 0.
  static ClassifierParams init(Eigen::Index n) {
    return {Vector::Ones(n), Vector::Ones(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), 0.0};
  }
  static ClassifierParams zeros(Eigen::Index n) {
    return {Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), 0.0};
  }

  Eigen::Index dim() const { return k1.size(); }

  std::vector<std::span<double>> spans() {
    auto s = [](Vector& v) { return std::span<double>(v.data(), static_cast<std::size_t>(v.size())); };
    return {s(k1), s(k2), s(b), s(kbar), s(bbar), std::span<double>(&c, 1)};
  }
  std::vector<std::span<const double>> spans() const {
    std::vector<std::span<const double>> out;
    for (auto x : const_cast<ClassifierParams*>(this)->spans()) out.emplace_back(x.data(), x.size());
    return out;
  }
};

inline double classifier_score(const Vector& z1, const Vector& z2, const ClassifierParams& p) {
  if (z1.size() != p.dim() || z2.size() != p.dim()) throw ShapeError("classifier latent dimension mismatch");
  const Eigen::ArrayXd u = p.k1.array() * z1.array() + p.k2.array() * z2.array() + p.b.array();
  const Eigen::ArrayXd m = p.kbar.array() * z1.array() + p.bbar.array();
  return (u.abs() - m.square()).sum() + p.c;
}

/// Ablation: y = w . [z1; z2] + bias.
struct LinearClassifierParams {
  Vector weights;
  double bias = 0.0;

  static LinearClassifierParams init(Eigen::Index n) { return {Vector::Zero(2 * n), 0.0}; }

  std::vector<std::span<double>> spans() {
    return {std::span<double>(weights.data(), static_cast<std::size_t>(weights.size())), std::span<double>(&bias, 1)};
  }
  std::vector<std::span<const double>> spans() const {
    return {std::span<const double>(weights.data(), static_cast<std::size_t>(weights.size())),
            std::span<const double>(&bias, 1)};
  }
};

inline double linear_classifier_score(const Vector& z1, const Vector& z2, const Vector& weights, double bias) {
  if (weights.size() != z1.size() + z2.size()) throw ShapeError("linear classifier weight length mismatch");
  const Eigen::Index n = z1.size();
  return weights.head(n).dot(z1) + weights.tail(z2.size()).dot(z2) + bias;
}

enum class ClassifierVariant { ted, linear };

struct TedConfig {
  double alpha = 1.0;
  double positive_weight = 2.0;
  ClassifierVariant classifier = ClassifierVariant::ted;
  SampleKinds samples;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("ted.alpha", "must be finite and >= 0");
    if (!(positive_weight > 0.0)) throw ConfigError("ted.positive_weight", "must be positive");
    if (!samples.any()) throw ConfigError("ted.samples", "at least one non-temporal sample kind is required");
  }
};

/// Whichever classifier variant is active; only its tensors are exposed.
struct TedClassifier {
  ClassifierVariant variant = ClassifierVariant::ted;
  ClassifierParams ted;
  LinearClassifierParams linear;

  static TedClassifier init(ClassifierVariant v, Eigen::Index n) {
    return {v, ClassifierParams::init(n), LinearClassifierParams::init(n)};
  }

  TedClassifier zeros_like() const {
    return {variant, ClassifierParams::zeros(ted.dim()), {Vector::Zero(linear.weights.size()), 0.0}};
  }

  double score(const Vector& z1, const Vector& z2) const {
    return variant == ClassifierVariant::ted ? classifier_score(z1, z2, ted)
                                             : linear_classifier_score(z1, z2, linear.weights, linear.bias);
  }

  std::vector<std::span<double>> spans() { return variant == ClassifierVariant::ted ? ted.spans() : linear.spans(); }
  std::vector<std::span<const double>> spans() const {
    return variant == ClassifierVariant::ted ? ted.spans() : linear.spans();
  }
};

namespace detail {
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

/// Weighted binary cross-entropy of one score:
///   alpha * (w * l * -log sigma(y) + (1 - l) * -log(1 - sigma(y)))
inline double ted_sample_loss(double y, int label, const TedConfig& cfg) {
  if (!std::isfinite(y)) throw NumericalError("non-finite classifier score");
  return label ? cfg.alpha * cfg.positive_weight * detail::softplus(-y) : cfg.alpha * detail::softplus(y);
}

/// Mean loss over all samples.
inline double ted_loss(const std::vector<PairSample>& samples, const TedClassifier& cls, const TedConfig& cfg) {
  if (samples.empty()) throw ShapeError("ted_loss needs at least one sample");
  double sum = 0.0;
  for (const auto& s : samples) sum += ted_sample_loss(cls.score(s.first, s.second), s.label, cfg);
  return sum / static_cast<double>(samples.size());
}

struct TedLossGrad {
  double loss = 0.0;
  TedClassifier classifier;  // dL/dphi
  Matrix d_anchor;           // dL/dz1 accumulated per batch row (n x N)
};

/// Loss, classifier gradient, and the gradient into each anchor latent. The
/// second pair elements receive no gradient.
inline TedLossGrad ted_loss_grad(const std::vector<PairSample>& samples, const TedClassifier& cls, const TedConfig& cfg,
                                 std::size_t batch_rows) {
  if (samples.empty()) throw ShapeError("ted_loss needs at least one sample");
  const Eigen::Index n = samples.front().first.size();
  TedLossGrad out{0.0, cls.zeros_like(), Matrix::Zero(n, static_cast<Eigen::Index>(batch_rows))};
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    const double y = cls.score(s.first, s.second);
    out.loss += ted_sample_loss(y, s.label, cfg);
    const double dy = inv * (s.label ? -cfg.alpha * cfg.positive_weight * detail::sigmoid(-y)
                                     : cfg.alpha * detail::sigmoid(y));
    auto dz = out.d_anchor.col(static_cast<Eigen::Index>(s.anchor));
    if (cls.variant == ClassifierVariant::ted) {
      const auto& p = cls.ted;
      auto& g = out.classifier.ted;
      const Eigen::ArrayXd u = p.k1.array() * s.first.array() + p.k2.array() * s.second.array() + p.b.array();
      const Eigen::ArrayXd sg = u.sign();
      const Eigen::ArrayXd m = p.kbar.array() * s.first.array() + p.bbar.array();
      g.k1.array() += dy * sg * s.first.array();
      g.k2.array() += dy * sg * s.second.array();
      g.b.array() += dy * sg;
      g.kbar.array() += dy * (-2.0) * m * s.first.array();
      g.bbar.array() += dy * (-2.0) * m;
      g.c += dy;
      dz.array() += dy * (sg * p.k1.array() - 2.0 * m * p.kbar.array());
    } else {
      auto& g = out.classifier.linear;
      g.weights.head(n) += dy * s.first;
      g.weights.tail(n) += dy * s.second;
      g.bias += dy;
      dz += dy * cls.linear.weights.head(n);
    }
  }
  out.loss *= inv;
  return out;
}

/// Parameters touched by one TED update.
struct TedModel {
  DenseNetParams encoder;
  DenseNetParams target_encoder;
  TedClassifier classifier;
  AdamState encoder_opt;
  AdamState classifier_opt;
};

/// One full TED step on `batch`: build pairs, mean loss, joint gradient into
/// encoder and classifier, optimizer steps, then the target EMA.
inline double ted_update_step(const TaggedBatch& batch, const ReplayBuffer& buffer, TedModel& model,
                              const TedConfig& cfg, double tau, Rng& rng) {
  cfg.validate();
  GradTape tape;
  const Matrix z_obs = forward(model.encoder, batch.obs_matrix(), &tape);
  auto target = [&](const Matrix& x) { return forward(model.target_encoder, x); };
  const Matrix z_next = target(batch.next_obs_matrix());
  const auto samples = build_samples_from_latents(batch, buffer, z_obs, z_next, target, rng, cfg.samples);
  auto lg = ted_loss_grad(samples, model.classifier, cfg, batch.size());
  auto g = backward(model.encoder, tape, lg.d_anchor, lg.loss);
  adam_step(model.encoder, g.params, model.encoder_opt);
  adam_step(model.classifier, lg.classifier, model.classifier_opt);
  ema_update(model.encoder, model.target_encoder, tau);
  return lg.loss;
}

}  // namespace ted
