#pragma once

// Central finite-difference checks of the analytic TED and TD gradients.

#include <algorithm>
#include <string>
#include <vector>

#include "ted/agent.hpp"

namespace ted {

struct GradCheckEntry {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> checks;
  std::size_t points = 0;

  double worst() const {
    double w = 0.0;
    for (const auto& c : checks) w = std::max(w, c.max_relative_error);
    return w;
  }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero up
/// to roundoff from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Max relative error between `analytic` and central differences of
/// `objective` over every entry of `params`.
template <class Params, class Objective>
double finite_difference_error(Params& params, const Params& analytic, Objective&& objective, double h,
                               std::size_t* count = nullptr) {
  auto ps = params.spans();
  auto gs = analytic.spans();
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < ps[i].size(); ++j) {
      const double orig = ps[i][j];
      ps[i][j] = orig + h;
      const double up = objective();
      ps[i][j] = orig - h;
      const double down = objective();
      ps[i][j] = orig;
      worst = std::max(worst, relative_error(gs[i][j], (up - down) / (2.0 * h)));
      if (count) ++*count;
    }
  return worst;
}

namespace detail {

/// Small randomized setup: tiny nets, a few short episodes, a mixed batch.
struct GradCheckFixture {
  EnvSpec env;
  ReplayBuffer buffer{64};
  TaggedBatch batch;
  AgentParams params;

  static GradCheckFixture make(Rng& rng, ClassifierVariant variant) {
    auto factors = FactorSpec::uniform(1, 1, {-1.0, -0.2}, {0.2, 1.0}, {-1.0, 1.0}, 0.0);
    auto mixer = MixerSpec::random(MixMode::nonlinear, 2, 4, rng, 1.0, 2);
    GradCheckFixture f{EnvSpec(std::move(factors), std::move(mixer)), ReplayBuffer(64), {}, {}};
    f.env.horizon = 5;
    f.env.validate();
    Env env(f.env);
    for (int e = 0; e < 3; ++e) {
      auto obs = env.reset(Phase::train, rng);
      for (;;) {
        const auto a = rng.index(f.env.num_actions());
        auto r = env.step(a);
        f.buffer.push({obs, a, r.reward, r.observation, r.done, obs.episode_id, obs.timestep});
        obs = r.observation;
        if (r.done) break;
      }
    }
    f.batch = sample_batch(f.buffer, 6, rng);
    EncoderConfig enc;
    enc.hidden = {8};
    enc.latent = 3;
    AgentConfig agent;
    agent.q_hidden = {8};
    f.params = AgentParams::init(f.env, enc, agent, variant, rng);
    // Move away from the symmetric initial point.
    auto jitter = [&](auto& p, double scale) {
      for (auto s : p.spans())
        for (auto& v : s) v += scale * rng.normal();
    };
    jitter(f.params.classifier, 0.5);
    jitter(f.params.encoder, 0.1);
    f.params.target_encoder = f.params.encoder;
    jitter(f.params.target_encoder, 0.05);
    jitter(f.params.q_head, 0.1);
    f.params.target_q_head = f.params.q_head;
    jitter(f.params.target_q_head, 0.05);
    return f;
  }
};

}  // namespace detail

/// TED loss (all three pair kinds) against the online encoder and the
/// classifier; the pairing is frozen by reusing the same RNG state.
inline double ted_objective(const TaggedBatch& batch, const ReplayBuffer& buffer, const AgentParams& p,
                            const TedConfig& cfg, Rng rng) {
  const Matrix z_obs = forward(p.encoder, batch.obs_matrix());
  auto target = [&](const Matrix& x) { return forward(p.target_encoder, x); };
  const Matrix z_next = target(batch.next_obs_matrix());
  return ted_loss(build_samples_from_latents(batch, buffer, z_obs, z_next, target, rng, cfg.samples), p.classifier, cfg);
}

inline double td_objective(const TaggedBatch& batch, const AgentParams& p, double gamma) {
  const Matrix z_obs = forward(p.encoder, batch.obs_matrix());
  const Matrix z_next = forward(p.target_encoder, batch.next_obs_matrix());
  return td_loss_grad(batch, z_obs, z_next, p.q_head, p.target_q_head, gamma).loss;
}

/// Runs the TED (both classifier variants), TD and combined-loss checks at
/// `points` random points with perturbation h.
inline GradCheckReport run_gradcheck(std::size_t points, std::uint64_t seed = 1, double h = 1e-5) {
  GradCheckReport rep;
  rep.points = points;
  auto bump = [&](const std::string& name, double err, std::size_t n) {
    for (auto& c : rep.checks)
      if (c.name == name) {
        c.max_relative_error = std::max(c.max_relative_error, err);
        c.entries += n;
        return;
      }
    rep.checks.push_back({name, n, err});
  };
  for (std::size_t pt = 0; pt < points; ++pt) {
    Rng rng = Rng::derive(seed, {pt});
    for (auto variant : {ClassifierVariant::ted, ClassifierVariant::linear}) {
      auto fx = detail::GradCheckFixture::make(rng, variant);
      auto& p = fx.params;
      TedConfig cfg;
      cfg.alpha = rng.uniform(0.5, 2.0);
      cfg.classifier = variant;
      const double gamma = rng.uniform(0.5, 0.99);
      const Rng pair_rng = Rng::derive(seed, {pt, 99});
      const std::string tag = variant == ClassifierVariant::ted ? "ted" : "linear";

      // TED: encoder and classifier.
      GradTape tape;
      const Matrix z_obs = forward(p.encoder, fx.batch.obs_matrix(), &tape);
      auto target = [&](const Matrix& x) { return forward(p.target_encoder, x); };
      const Matrix z_next = target(fx.batch.next_obs_matrix());
      Rng r1 = pair_rng;
      auto samples = build_samples_from_latents(fx.batch, fx.buffer, z_obs, z_next, target, r1, cfg.samples);
      auto lg = ted_loss_grad(samples, p.classifier, cfg, fx.batch.size());
      auto enc_grad = backward(p.encoder, tape, lg.d_anchor, lg.loss).params;
      auto ted_obj = [&] { return ted_objective(fx.batch, fx.buffer, p, cfg, pair_rng); };
      std::size_t n = 0;
      {
        const double err = finite_difference_error(p.encoder, enc_grad, ted_obj, h, &n);
        bump(tag + "_loss/encoder", err, n);
      }
      n = 0;
      {
        const double err = finite_difference_error(p.classifier, lg.classifier, ted_obj, h, &n);
        bump(tag + "_loss/classifier", err, n);
      }

      // TD: encoder and Q head.
      auto td = td_loss_grad(fx.batch, z_obs, z_next, p.q_head, p.target_q_head, gamma);
      auto td_enc = backward(p.encoder, tape, td.d_latent, td.loss).params;
      auto td_obj = [&] { return td_objective(fx.batch, p, gamma); };
      n = 0;
      {
        const double err = finite_difference_error(p.encoder, td_enc, td_obj, h, &n);
        bump("td_loss/encoder", err, n);
      }
      n = 0;
      {
        const double err = finite_difference_error(p.q_head, td.q_head, td_obj, h, &n);
        bump("td_loss/q_head", err, n);
      }

      // Combined: one backward of the summed adjoints.
      Matrix d_sum = td.d_latent + lg.d_anchor;
      auto joint = backward(p.encoder, tape, d_sum, td.loss + lg.loss).params;
      auto joint_obj = [&] { return td_obj() + ted_obj(); };
      n = 0;
      {
        const double err = finite_difference_error(p.encoder, joint, joint_obj, h, &n);
        bump("td+" + tag + "/encoder", err, n);
      }
    }
  }
  return rep;
}

}  // namespace ted
