#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ted/ted.hpp"

namespace ted::test {

/// Identity-mixed linear env over `ne` episodic and `nd` dynamic factors.
inline EnvSpec identity_env(std::size_t ne, std::size_t nd, std::size_t frame_stack = 1, std::size_t horizon = 50) {
  auto f = FactorSpec::uniform(ne, nd, {-1.0, -0.2}, {0.2, 1.0}, {-1.0, 1.0}, 0.0);
  const auto k = static_cast<Eigen::Index>(ne + nd);
  EnvSpec spec(std::move(f), MixerSpec(MixMode::linear, Matrix::Identity(k, k), 1.0, frame_stack));
  spec.horizon = horizon;
  spec.validate();
  return spec;
}

/// Random nonlinear mixer env, obs_dim = 4K.
inline EnvSpec nonlinear_env(std::size_t ne, std::size_t nd, std::uint64_t mixer_seed = 7, std::size_t frame_stack = 3,
                             std::size_t horizon = 50) {
  auto f = FactorSpec::uniform(ne, nd, {-1.0, -0.2}, {0.2, 1.0}, {-1.0, 1.0}, 0.0);
  Rng mrng(mixer_seed);
  auto m = MixerSpec::random(MixMode::nonlinear, ne + nd, 4 * (ne + nd), mrng, 1.0, frame_stack);
  EnvSpec spec(std::move(f), std::move(m));
  spec.horizon = horizon;
  spec.validate();
  return spec;
}

/// Random-policy episodes pushed into `buffer`.
inline void fill_random(const EnvSpec& spec, ReplayBuffer& buffer, std::size_t episodes, Rng& rng,
                        Phase phase = Phase::train) {
  Env env(spec);
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = env.reset(phase, rng);
    for (;;) {
      const auto a = rng.index(spec.num_actions());
      auto r = env.step(a);
      buffer.push({obs, a, r.reward, r.observation, r.done, obs.episode_id, obs.timestep});
      obs = r.observation;
      if (r.done) break;
    }
  }
}

/// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ted_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace ted::test
