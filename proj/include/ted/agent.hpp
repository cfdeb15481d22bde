#pragma once

// Q-learning agent whose encoder is shared with the TED auxiliary loss.

#include <optional>

#include "ted/envsim.hpp"
#include "ted/tedloss.hpp"

namespace ted {

struct EncoderConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t latent = 0;  // 0: number of factors + 2
  bool layer_norm = true;
  double learning_rate = 1e-3;
  double tau = 0.01;  // target encoder EMA rate
};

struct AgentConfig {
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_steps = 5000;
  std::size_t target_sync_period = 200;
  std::size_t updates_per_step = 1;
  std::size_t initial_steps = 1000;
  std::size_t batch_size = 128;
  std::vector<std::size_t> q_hidden{64};
  double learning_rate = 1e-3;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("agent.gamma", "must lie in [0, 1)");
    if (!(epsilon_start >= epsilon_end) || epsilon_end < 0.0 || epsilon_start > 1.0)
      throw ConfigError("agent.epsilon_start", "schedule must be nonincreasing within [0, 1]");
    if (target_sync_period == 0) throw ConfigError("agent.target_sync", "must be positive");
    if (batch_size == 0) throw ConfigError("agent.batch_size", "must be positive");
  }

  /// Linear decay from start to end over epsilon_decay_steps.
  double epsilon(std::size_t step) const {
    if (epsilon_decay_steps == 0 || step >= epsilon_decay_steps) return epsilon_end;
    const double frac = static_cast<double>(step) / static_cast<double>(epsilon_decay_steps);
    return epsilon_start + (epsilon_end - epsilon_start) * frac;
  }
};

/// Everything the learner owns.
struct AgentParams {
  DenseNetParams encoder;
  DenseNetParams target_encoder;
  DenseNetParams q_head;
  DenseNetParams target_q_head;
  TedClassifier classifier;
  AdamState encoder_opt;
  AdamState q_opt;
  AdamState classifier_opt;
  std::size_t updates = 0;

  static AgentParams init(const EnvSpec& env, const EncoderConfig& enc, const AgentConfig& agent,
                          ClassifierVariant variant, Rng& rng) {
    const std::size_t latent = enc.latent ? enc.latent : env.factors.num_factors() + 2;
    AgentParams p;
    p.encoder = make_encoder(env.observation_dim(), enc.hidden, latent, enc.layer_norm, rng);
    p.target_encoder = p.encoder;
    p.q_head = make_mlp(latent, agent.q_hidden, env.num_actions(), rng);
    p.target_q_head = p.q_head;
    p.classifier = TedClassifier::init(variant, static_cast<Eigen::Index>(latent));
    p.encoder_opt.learning_rate = enc.learning_rate;
    p.q_opt.learning_rate = agent.learning_rate;
    p.classifier_opt.learning_rate = enc.learning_rate;
    return p;
  }
};

/// Lowest index among maximal entries.
inline std::size_t argmax_lowest(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  return best;
}

inline Vector q_values(const DenseNetParams& encoder, const DenseNetParams& q_head, const Vector& obs) {
  return forward(q_head, forward(encoder, Matrix(obs))).col(0);
}

/// Epsilon-greedy action. One uniform draw decides exploration, a second
/// picks the random action.
inline std::size_t act(const DenseNetParams& encoder, const DenseNetParams& q_head, const Vector& obs, double epsilon,
                       Rng& rng) {
  const auto num_actions = static_cast<std::size_t>(q_head.output_dim());
  if (rng.uniform01() < epsilon) return rng.index(num_actions);
  return argmax_lowest(q_values(encoder, q_head, obs));
}

struct TdLossGrad {
  double loss = 0.0;
  DenseNetParams q_head;  // dL/dq
  Matrix d_latent;        // dL/dz for the online latents of o_t
};

/// Mean squared one-step TD error on precomputed latents. The bootstrap uses
/// the target encoder latents of o_{t+1} and the target Q head.
inline TdLossGrad td_loss_grad(const TaggedBatch& batch, const Matrix& z_obs, const Matrix& z_next_target,
                               const DenseNetParams& q_head, const DenseNetParams& target_q_head, double gamma) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw ShapeError("td_update needs a nonempty batch");
  GradTape tape;
  const Matrix q = forward(q_head, z_obs, &tape);
  const Matrix q_next = forward(target_q_head, z_next_target);
  Matrix d_q = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = batch.transitions[static_cast<std::size_t>(i)];
    const double bootstrap = t.done ? 0.0 : gamma * q_next.col(i).maxCoeff();
    const double diff = q(static_cast<Eigen::Index>(t.action), i) - (t.reward + bootstrap);
    loss += diff * diff;
    d_q(static_cast<Eigen::Index>(t.action), i) = 2.0 * diff / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  auto g = backward(q_head, tape, d_q, loss);
  return {loss, std::move(g.params), std::move(g.input)};
}

struct UpdateLosses {
  double td = 0.0;
  std::optional<double> ted;
};

/// One learner step on `batch`: TD loss plus, when `ted` is given, the TED
/// loss, backpropagated once as their sum into the shared encoder. The
/// target encoder follows by EMA; the target Q head is hard-synced by period.
/// `ted_rng` is consumed only by TED pair construction.
inline UpdateLosses joint_update(const TaggedBatch& batch, const ReplayBuffer& buffer, AgentParams& p,
                                 const EncoderConfig& enc, const AgentConfig& agent, const TedConfig* ted,
                                 Rng& ted_rng) {
  GradTape tape;
  const Matrix z_obs = forward(p.encoder, batch.obs_matrix(), &tape);
  auto target = [&](const Matrix& x) { return forward(p.target_encoder, x); };
  const Matrix z_next = target(batch.next_obs_matrix());

  auto td = td_loss_grad(batch, z_obs, z_next, p.q_head, p.target_q_head, agent.gamma);
  UpdateLosses losses{td.loss, std::nullopt};
  Matrix d_latent = std::move(td.d_latent);
  std::optional<TedLossGrad> ted_grad;
  if (ted) {
    const auto samples = build_samples_from_latents(batch, buffer, z_obs, z_next, target, ted_rng, ted->samples);
    ted_grad = ted_loss_grad(samples, p.classifier, *ted, batch.size());
    losses.ted = ted_grad->loss;
    d_latent += ted_grad->d_anchor;
  }
  const double total = td.loss + (losses.ted ? *losses.ted : 0.0);
  auto g = backward(p.encoder, tape, d_latent, total);
  adam_step(p.encoder, g.params, p.encoder_opt);
  adam_step(p.q_head, td.q_head, p.q_opt);
  if (ted_grad) adam_step(p.classifier, ted_grad->classifier, p.classifier_opt);
  ema_update(p.encoder, p.target_encoder, enc.tau);
  ++p.updates;
  if (p.updates % agent.target_sync_period == 0) p.target_q_head = p.q_head;
  return losses;
}

/// TD-only step.
inline double td_update(const TaggedBatch& batch, const ReplayBuffer& buffer, AgentParams& p, const EncoderConfig& enc,
                        const AgentConfig& agent) {
  Rng unused(0);
  return joint_update(batch, buffer, p, enc, agent, nullptr, unused).td;
}

}  // namespace ted
