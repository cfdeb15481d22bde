#pragma once

// Ground-truth factor model and the invertible observation map.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ted/error.hpp"
#include "ted/rng.hpp"

namespace ted {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Phase { train, test };

inline const char* to_string(Phase p) { return p == Phase::train ? "train" : "test"; }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  bool disjoint(const Interval& o) const { return hi < o.lo || o.hi < lo; }
  double width() const { return hi - lo; }
};

/// Partition of the factor vector into episodic (fixed per episode) and
/// dynamic (agent-controlled) parts, with the sampling ranges of each.
class FactorSpec {
 public:
  FactorSpec(std::vector<Interval> episodic_train, std::vector<Interval> episodic_test, std::vector<double> dynamic_init,
             std::vector<Interval> dynamic_bounds)
      : episodic_train_(std::move(episodic_train)),
        episodic_test_(std::move(episodic_test)),
        dynamic_init_(std::move(dynamic_init)),
        dynamic_bounds_(std::move(dynamic_bounds)) {
    validate();
  }

  /// Same ranges for every factor of a kind.
  static FactorSpec uniform(std::size_t num_episodic, std::size_t num_dynamic, Interval train, Interval test,
                            Interval bounds, double init) {
    return FactorSpec(std::vector<Interval>(num_episodic, train), std::vector<Interval>(num_episodic, test),
                      std::vector<double>(num_dynamic, init), std::vector<Interval>(num_dynamic, bounds));
  }

  std::size_t num_episodic() const { return episodic_train_.size(); }
  std::size_t num_dynamic() const { return dynamic_init_.size(); }
  std::size_t num_factors() const { return num_episodic() + num_dynamic(); }

  const std::vector<Interval>& episodic_train() const { return episodic_train_; }
  const std::vector<Interval>& episodic_test() const { return episodic_test_; }
  const std::vector<Interval>& episodic_range(Phase p) const {
    return p == Phase::train ? episodic_train_ : episodic_test_;
  }
  const std::vector<double>& dynamic_init() const { return dynamic_init_; }
  const std::vector<Interval>& dynamic_bounds() const { return dynamic_bounds_; }

 private:
  void validate() const {
    if (episodic_train_.empty()) throw ConfigError("factors.num_episodic", "need at least one episodic factor");
    if (dynamic_init_.empty()) throw ConfigError("factors.num_dynamic", "need at least one dynamic factor");
    if (episodic_test_.size() != episodic_train_.size())
      throw ConfigError("factors.episodic_test", "one test range per episodic factor");
    if (dynamic_bounds_.size() != dynamic_init_.size())
      throw ConfigError("factors.dynamic_bounds", "one bound per dynamic factor");
    for (std::size_t i = 0; i < episodic_train_.size(); ++i) {
      const auto& tr = episodic_train_[i];
      const auto& te = episodic_test_[i];
      if (!(tr.lo <= tr.hi) || !(te.lo <= te.hi))
        throw ConfigError("factors.episodic_train", "interval with lo > hi at factor " + std::to_string(i));
      if (!tr.disjoint(te))
        throw ConfigError("factors.episodic_test", "train and test ranges overlap at factor " + std::to_string(i));
    }
    for (std::size_t i = 0; i < dynamic_init_.size(); ++i) {
      if (!(dynamic_bounds_[i].lo <= dynamic_bounds_[i].hi))
        throw ConfigError("factors.dynamic_bounds", "interval with lo > hi at factor " + std::to_string(i));
      if (!dynamic_bounds_[i].contains(dynamic_init_[i]))
        throw ConfigError("factors.dynamic_init", "init outside bounds at factor " + std::to_string(i));
    }
  }

  std::vector<Interval> episodic_train_;
  std::vector<Interval> episodic_test_;
  std::vector<double> dynamic_init_;
  std::vector<Interval> dynamic_bounds_;
};

struct FactorState {
  Vector episodic;
  Vector dynamic;

  /// Episodic factors first, then dynamic.
  Vector full() const {
    Vector s(episodic.size() + dynamic.size());
    s << episodic, dynamic;
    return s;
  }
};

inline FactorState sample_episode_factors(const FactorSpec& spec, Phase phase, Rng& rng) {
  FactorState st;
  const auto& ranges = spec.episodic_range(phase);
  st.episodic.resize(static_cast<Eigen::Index>(ranges.size()));
  for (std::size_t i = 0; i < ranges.size(); ++i) st.episodic[static_cast<Eigen::Index>(i)] = rng.uniform(ranges[i].lo, ranges[i].hi);
  st.dynamic = Eigen::Map<const Vector>(spec.dynamic_init().data(), static_cast<Eigen::Index>(spec.num_dynamic()));
  return st;
}

enum class MixMode { linear, nonlinear };

/// Observation map h: s -> M s, optionally followed by x + gain * tanh(x)
/// elementwise, which is strictly increasing for gain > 0.
class MixerSpec {
 public:
  static constexpr double max_condition = 100.0;

  MixerSpec(MixMode mode, Matrix mixing, double gain = 1.0, std::size_t frame_stack = 3)
      : mode_(mode), mixing_(std::move(mixing)), gain_(gain), frame_stack_(frame_stack) {
    if (mixing_.rows() < mixing_.cols()) throw ConfigError("mixer.obs_dim", "obs_dim must be >= number of factors");
    if (!(gain_ > 0.0)) throw ConfigError("mixer.gain", "gain must be positive");
    if (frame_stack_ < 1) throw ConfigError("mixer.frame_stack", "frame_stack must be >= 1");
    if (condition_number(mixing_) > max_condition)
      throw ConfigError("mixer.matrix", "mixing matrix is rank deficient or ill-conditioned");
  }

  /// Draws N(0,1)/sqrt(K) entries, redrawing until the condition bound holds.
  static MixerSpec random(MixMode mode, std::size_t num_factors, std::size_t obs_dim, Rng& rng, double gain = 1.0,
                          std::size_t frame_stack = 3) {
    if (obs_dim < num_factors) throw ConfigError("mixer.obs_dim", "obs_dim must be >= number of factors");
    const auto rows = static_cast<Eigen::Index>(obs_dim);
    const auto cols = static_cast<Eigen::Index>(num_factors);
    const double scale = 1.0 / std::sqrt(static_cast<double>(num_factors));
    Matrix m(rows, cols);
    for (;;) {
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
      if (condition_number(m) <= max_condition) break;
    }
    return MixerSpec(mode, std::move(m), gain, frame_stack);
  }

  static double condition_number(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return std::numeric_limits<double>::infinity();
    const double smin = sv[sv.size() - 1];
    return smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
  }

  MixMode mode() const { return mode_; }
  const Matrix& mixing() const { return mixing_; }
  double gain() const { return gain_; }
  std::size_t frame_stack() const { return frame_stack_; }
  std::size_t num_factors() const { return static_cast<std::size_t>(mixing_.cols()); }
  std::size_t obs_dim() const { return static_cast<std::size_t>(mixing_.rows()); }
  std::size_t stacked_dim() const { return obs_dim() * frame_stack_; }

 private:
  MixMode mode_;
  Matrix mixing_;
  double gain_;
  std::size_t frame_stack_;
};

/// Single frame for a full factor vector (episodic then dynamic).
inline Vector mix(const Vector& factors, const MixerSpec& spec) {
  if (static_cast<std::size_t>(factors.size()) != spec.num_factors())
    throw ShapeError("mix expects " + std::to_string(spec.num_factors()) + " factors, got " +
                     std::to_string(factors.size()));
  Vector y = spec.mixing() * factors;
  if (spec.mode() == MixMode::nonlinear) y = y.array() + spec.gain() * y.array().tanh();
  return y;
}

inline Vector mix(const FactorState& s, const MixerSpec& spec) { return mix(s.full(), spec); }

/// Concatenates the last `frame_stack` frames oldest-first, repeating the
/// earliest frame when the history is shorter.
inline Vector stack_frames(std::span<const Vector> history, std::size_t frame_stack) {
  if (history.empty()) throw ShapeError("stack_frames needs a nonempty history");
  const Eigen::Index d = history.front().size();
  Vector out(d * static_cast<Eigen::Index>(frame_stack));
  const std::size_t n = history.size();
  for (std::size_t slot = 0; slot < frame_stack; ++slot) {
    // slot 0 is the oldest position of the window ending at history.back().
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(n) - static_cast<std::ptrdiff_t>(frame_stack) +
                               static_cast<std::ptrdiff_t>(slot);
    const auto& f = history[src < 0 ? 0 : static_cast<std::size_t>(src)];
    if (f.size() != d) throw ShapeError("frames of unequal length");
    out.segment(static_cast<Eigen::Index>(slot) * d, d) = f;
  }
  return out;
}

struct Observation {
  Vector data;
  std::int64_t episode_id = -1;
  std::int64_t timestep = 0;
};

}  // namespace ted
