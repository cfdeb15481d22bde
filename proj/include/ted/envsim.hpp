#pragma once

// Episodic control task over synthetic factors: the agent moves the dynamic
// factors toward a goal while episodic factors stay fixed for the episode.

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <vector>

#include "ted/synthgen.hpp"

namespace ted {

enum class GoalSource { fixed, episodic_factor };

struct EnvSpec {
  FactorSpec factors;
  MixerSpec mixer;
  std::size_t horizon = 50;
  double step_size = 0.1;
  GoalSource goal_source = GoalSource::fixed;
  /// Goal when goal_source is fixed; one entry per dynamic factor.
  std::vector<double> fixed_goal;
  /// Episodic factor index supplying each goal coordinate (episodic_factor mode).
  std::vector<std::size_t> goal_factors;
  /// Displacements over the dynamic factors. Empty means the default set.
  std::vector<Vector> actions;

  EnvSpec(FactorSpec f, MixerSpec m) : factors(std::move(f)), mixer(std::move(m)) {}

  /// Fills defaults and checks invariants. Called by Env's constructor.
  void validate() {
    const std::size_t nd = factors.num_dynamic();
    if (mixer.num_factors() != factors.num_factors())
      throw ConfigError("mixer.matrix", "mixer column count differs from factor count");
    if (horizon < 2) throw ConfigError("env.horizon", "horizon must be >= 2");
    if (!(step_size > 0.0)) throw ConfigError("env.step_size", "step_size must be positive");
    if (actions.empty()) actions = default_actions(nd);
    for (const auto& a : actions)
      if (static_cast<std::size_t>(a.size()) != nd) throw ConfigError("env.actions", "action dimension mismatch");
    if (goal_source == GoalSource::fixed) {
      if (fixed_goal.empty()) fixed_goal.assign(nd, 0.0);
      if (fixed_goal.size() != nd) throw ConfigError("env.goal", "one goal coordinate per dynamic factor");
    } else {
      if (goal_factors.empty())
        for (std::size_t i = 0; i < nd; ++i) goal_factors.push_back(i % factors.num_episodic());
      if (goal_factors.size() != nd) throw ConfigError("env.goal_factors", "one goal factor per dynamic factor");
      for (auto g : goal_factors)
        if (g >= factors.num_episodic())
          throw ConfigError("env.goal_factors", "goal factor index " + std::to_string(g) + " is not episodic");
    }
  }

  /// No-op first, then +/- unit step along each dynamic dimension.
  static std::vector<Vector> default_actions(std::size_t num_dynamic) {
    const auto nd = static_cast<Eigen::Index>(num_dynamic);
    std::vector<Vector> out;
    out.push_back(Vector::Zero(nd));
    for (Eigen::Index i = 0; i < nd; ++i) {
      out.push_back(Vector::Unit(nd, i));
      out.push_back(-Vector::Unit(nd, i));
    }
    return out;
  }

  std::size_t num_actions() const { return actions.empty() ? 1 + 2 * factors.num_dynamic() : actions.size(); }
  std::size_t observation_dim() const { return mixer.stacked_dim(); }

  Vector goal_for(const FactorState& s) const {
    const auto nd = static_cast<Eigen::Index>(factors.num_dynamic());
    Vector g(nd);
    for (Eigen::Index i = 0; i < nd; ++i)
      g[i] = goal_source == GoalSource::fixed ? fixed_goal[static_cast<std::size_t>(i)]
                                              : s.episodic[static_cast<Eigen::Index>(goal_factors[static_cast<std::size_t>(i)])];
    return g;
  }

  Vector displacement(std::size_t action) const {
    if (actions.empty()) return default_actions(factors.num_dynamic()).at(action);
    return actions.at(action);
  }

  /// Applies a displacement to the dynamic factors with clipping to bounds.
  Vector move(const Vector& dynamic, std::size_t action) const {
    Vector next = dynamic + step_size * displacement(action);
    for (Eigen::Index i = 0; i < next.size(); ++i) {
      const auto& b = factors.dynamic_bounds()[static_cast<std::size_t>(i)];
      next[i] = std::clamp(next[i], b.lo, b.hi);
    }
    return next;
  }
};

/// Frame stack for a factor trajectory (oldest first, last entry is current).
inline Vector render_stack(std::span<const Vector> factor_trajectory, const MixerSpec& mixer) {
  std::vector<Vector> frames;
  frames.reserve(factor_trajectory.size());
  for (const auto& s : factor_trajectory) frames.push_back(mix(s, mixer));
  return stack_frames(frames, mixer.frame_stack());
}

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  explicit Env(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const EnvSpec& spec() const { return spec_; }

  Observation reset(Phase phase, Rng& rng) {
    state_ = sample_episode_factors(spec_.factors, phase, rng);
    goal_ = spec_.goal_for(state_);
    episode_id_ = next_episode_id_++;
    timestep_ = 0;
    done_ = false;
    frames_.clear();
    frames_.push_back(mix(state_, spec_.mixer));
    return observation();
  }

  /// Reward is the negative Euclidean distance of the pre-action position to
  /// the goal; the observation reflects the post-action factors.
  StepResult step(std::size_t action) {
    if (done_ || episode_id_ < 0) throw EpisodeFinishedError();
    if (action >= spec_.actions.size()) throw ShapeError("action index " + std::to_string(action) + " out of range");
    StepResult r;
    r.reward = -(state_.dynamic - goal_).norm();
    state_.dynamic = spec_.move(state_.dynamic, action);
    ++timestep_;
    frames_.push_back(mix(state_, spec_.mixer));
    if (frames_.size() > spec_.mixer.frame_stack()) frames_.pop_front();
    done_ = timestep_ >= static_cast<std::int64_t>(spec_.horizon);
    r.done = done_;
    r.observation = observation();
    return r;
  }

  const FactorState& factors() const { return state_; }
  const Vector& goal() const { return goal_; }
  std::int64_t episode_id() const { return episode_id_; }
  std::int64_t timestep() const { return timestep_; }
  bool done() const { return done_; }

 private:
  Observation observation() const {
    std::vector<Vector> hist(frames_.begin(), frames_.end());
    return Observation{stack_frames(hist, spec_.mixer.frame_stack()), episode_id_, timestep_};
  }

  EnvSpec spec_;
  FactorState state_;
  Vector goal_;
  std::deque<Vector> frames_;
  std::int64_t next_episode_id_ = 0;
  std::int64_t episode_id_ = -1;
  std::int64_t timestep_ = 0;
  bool done_ = true;
};

}  // namespace ted
