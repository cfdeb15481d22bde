#pragma once

// Episode-tagged FIFO replay storage and construction of temporal /
// non-temporal latent pairs for the TED classifier.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ted/error.hpp"
#include "ted/rng.hpp"
#include "ted/synthgen.hpp"

namespace ted {

struct TaggedTransition {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
  std::int64_t episode_id = 0;
  std::int64_t timestep = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay.capacity", "capacity must be positive");
    slots_.reserve(std::min<std::size_t>(capacity_, 1u << 16));
  }

  void push(TaggedTransition t) {
    if (t.obs.episode_id != t.episode_id || t.next_obs.episode_id != t.episode_id || t.obs.timestep != t.timestep ||
        t.next_obs.timestep != t.timestep + 1)
      throw ShapeError("transition tags disagree with its observations");
    std::size_t slot;
    if (slots_.size() < capacity_) {
      slot = slots_.size();
      slots_.push_back(std::move(t));
    } else {
      slot = head_;
      auto it = episodes_.find(slots_[slot].episode_id);
      // FIFO order guarantees the evicted slot is the oldest of its episode.
      it->second.pop_front();
      if (it->second.empty()) episodes_.erase(it);
      slots_[slot] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    episodes_[slots_[slot].episode_id].push_back(slot);
  }

  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return slots_.empty(); }
  const TaggedTransition& at(std::size_t slot) const { return slots_.at(slot); }

  std::size_t num_episodes() const { return episodes_.size(); }

  /// Resident slots of an episode in timestep order (empty if unknown).
  const std::deque<std::size_t>& episode_slots(std::int64_t episode) const {
    static const std::deque<std::size_t> none;
    auto it = episodes_.find(episode);
    return it == episodes_.end() ? none : it->second;
  }

  std::vector<std::int64_t> episode_ids() const {
    std::vector<std::int64_t> out;
    out.reserve(episodes_.size());
    for (const auto& [e, _] : episodes_) out.push_back(e);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<TaggedTransition> slots_;
  std::size_t head_ = 0;
  std::unordered_map<std::int64_t, std::deque<std::size_t>> episodes_;
};

struct TaggedBatch {
  std::vector<TaggedTransition> transitions;
  std::vector<std::size_t> slots;  // buffer slot of each transition

  std::size_t size() const { return transitions.size(); }

  std::size_t distinct_episodes() const {
    std::unordered_set<std::int64_t> ids;
    for (const auto& t : transitions) ids.insert(t.episode_id);
    return ids.size();
  }

  Matrix obs_matrix() const { return stack_columns([](const TaggedTransition& t) -> const Vector& { return t.obs.data; }); }
  Matrix next_obs_matrix() const {
    return stack_columns([](const TaggedTransition& t) -> const Vector& { return t.next_obs.data; });
  }

 private:
  template <class Get>
  Matrix stack_columns(Get get) const {
    if (transitions.empty()) return Matrix();
    Matrix m(get(transitions.front()).size(), static_cast<Eigen::Index>(transitions.size()));
    for (std::size_t i = 0; i < transitions.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = get(transitions[i]);
    return m;
  }
};

inline constexpr int batch_diversity_retries = 16;
inline constexpr std::size_t min_ted_episode_length = 3;

/// N distinct slots drawn uniformly from the transitions whose episode has at
/// least `min_episode_length` resident transitions, redrawn until two
/// episodes are present (unless `require_two_episodes` is false).
inline TaggedBatch sample_batch(const ReplayBuffer& buffer, std::size_t n, Rng& rng,
                                std::size_t min_episode_length = min_ted_episode_length,
                                bool require_two_episodes = true) {
  if (n == 0) throw ShapeError("batch size must be positive");
  // Slots of short episodes are excluded from anchor selection.
  std::vector<std::size_t> eligible;
  bool all_eligible = true;
  std::size_t eligible_episodes = 0;
  for (auto e : buffer.episode_ids()) {
    if (buffer.episode_slots(e).size() >= min_episode_length)
      ++eligible_episodes;
    else
      all_eligible = false;
  }
  std::size_t pool = buffer.size();
  if (!all_eligible) {
    for (std::size_t s = 0; s < buffer.size(); ++s)
      if (buffer.episode_slots(buffer.at(s).episode_id).size() >= min_episode_length) eligible.push_back(s);
    pool = eligible.size();
  }
  if (eligible_episodes < (require_two_episodes ? 2u : 1u))
    throw InsufficientDiversityError("buffer holds " + std::to_string(eligible_episodes) +
                                     " eligible episode(s); need at least 2");
  if (pool < n)
    throw InsufficientDiversityError("buffer holds " + std::to_string(pool) + " eligible transitions; batch needs " +
                                     std::to_string(n));

  for (int attempt = 0; attempt <= batch_diversity_retries; ++attempt) {
    // Floyd's algorithm: n distinct indices out of [0, pool).
    std::vector<std::size_t> picks;
    picks.reserve(n);
    std::unordered_set<std::size_t> seen;
    seen.reserve(n * 2);
    for (std::size_t j = pool - n; j < pool; ++j) {
      const std::size_t r = rng.index(j + 1);
      const std::size_t v = seen.count(r) ? j : r;
      seen.insert(v);
      picks.push_back(v);
    }
    TaggedBatch b;
    b.transitions.reserve(n);
    b.slots.reserve(n);
    for (auto p : picks) {
      const std::size_t slot = all_eligible ? p : eligible[p];
      b.slots.push_back(slot);
      b.transitions.push_back(buffer.at(slot));
    }
    if (!require_two_episodes || b.distinct_episodes() >= 2) return b;
  }
  throw InsufficientDiversityError("no batch with two distinct episodes after " +
                                   std::to_string(batch_diversity_retries) + " retries");
}

enum class SampleKind { temporal, different_episode, same_episode };

inline const char* to_string(SampleKind k) {
  switch (k) {
    case SampleKind::temporal: return "X";
    case SampleKind::different_episode: return "X'";
    default: return "X''";
  }
}

/// Which non-temporal kinds to construct (temporal pairs are always built).
struct SampleKinds {
  bool different_episode = true;
  bool same_episode = true;

  bool any() const { return different_episode || same_episode; }
  std::size_t per_transition() const { return 1 + (different_episode ? 1 : 0) + (same_episode ? 1 : 0); }
};

struct PairSample {
  Vector first;   // online encoding of o_t (anchor)
  Vector second;  // target encoding, no gradient
  int label = 0;  // 1 for temporal pairs
  SampleKind kind = SampleKind::temporal;
  std::size_t anchor = 0;  // batch row of the first element
  std::int64_t partner_episode = 0;
  std::int64_t partner_timestep = 0;
};

/// Pairs from precomputed anchor latents z_obs = f(o_t) and target latents
/// z_next = f'(o_{t+1}) (one column per batch row). `target` encodes the
/// same-episode partners drawn from the buffer.
template <class TargetEncoder>
std::vector<PairSample> build_samples_from_latents(const TaggedBatch& batch, const ReplayBuffer& buffer,
                                                   const Matrix& z_obs, const Matrix& z_next, TargetEncoder&& target,
                                                   Rng& rng, SampleKinds kinds = {}) {
  const std::size_t n = batch.size();
  if (static_cast<std::size_t>(z_obs.cols()) != n || static_cast<std::size_t>(z_next.cols()) != n)
    throw ShapeError("latent batches must have one column per transition");
  if (batch.distinct_episodes() < 2) throw InsufficientDiversityError("TED batch spans a single episode");

  std::vector<PairSample> out;
  out.reserve(n * kinds.per_transition());
  std::vector<std::size_t> x_dprime_slot;
  x_dprime_slot.reserve(n);
  std::vector<std::size_t> x_dprime_pos;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& tr = batch.transitions[i];
    const auto col = static_cast<Eigen::Index>(i);
    out.push_back({z_obs.col(col), z_next.col(col), 1, SampleKind::temporal, i, tr.episode_id, tr.timestep + 1});

    if (kinds.different_episode) {
      std::size_t j;
      do {
        j = rng.index(n);
      } while (batch.transitions[j].episode_id == tr.episode_id);
      const auto& other = batch.transitions[j];
      out.push_back({z_obs.col(col), z_next.col(static_cast<Eigen::Index>(j)), 0, SampleKind::different_episode, i,
                     other.episode_id, other.timestep + 1});
    }

    if (kinds.same_episode) {
      const auto& slots = buffer.episode_slots(tr.episode_id);
      std::size_t candidates = 0;
      for (auto s : slots) {
        const auto ts = buffer.at(s).timestep;
        if (ts != tr.timestep && ts != tr.timestep + 1) ++candidates;
      }
      if (candidates == 0)
        throw InsufficientEpisodeLengthError("episode " + std::to_string(tr.episode_id) +
                                             " has no resident step outside {t, t+1} for t = " +
                                             std::to_string(tr.timestep));
      std::size_t pick = rng.index(candidates);
      std::size_t chosen = slots.front();
      for (auto s : slots) {
        const auto ts = buffer.at(s).timestep;
        if (ts == tr.timestep || ts == tr.timestep + 1) continue;
        if (pick-- == 0) {
          chosen = s;
          break;
        }
      }
      const auto& partner = buffer.at(chosen);
      x_dprime_pos.push_back(out.size());
      x_dprime_slot.push_back(chosen);
      out.push_back({z_obs.col(col), Vector(), 0, SampleKind::same_episode, i, partner.episode_id, partner.timestep});
    }
  }

  if (!x_dprime_slot.empty()) {
    Matrix obs(buffer.at(x_dprime_slot.front()).obs.data.size(), static_cast<Eigen::Index>(x_dprime_slot.size()));
    for (std::size_t k = 0; k < x_dprime_slot.size(); ++k)
      obs.col(static_cast<Eigen::Index>(k)) = buffer.at(x_dprime_slot[k]).obs.data;
    const Matrix z = target(obs);
    for (std::size_t k = 0; k < x_dprime_pos.size(); ++k) out[x_dprime_pos[k]].second = z.col(static_cast<Eigen::Index>(k));
  }
  return out;
}

/// Algorithm-level entry: encodes the batch with the online encoder and the
/// target encoder, then builds the X / X' / X'' pairs.
template <class OnlineEncoder, class TargetEncoder>
std::vector<PairSample> build_samples(const TaggedBatch& batch, const ReplayBuffer& buffer, OnlineEncoder&& online,
                                      TargetEncoder&& target, Rng& rng, SampleKinds kinds = {}) {
  const Matrix z_obs = online(batch.obs_matrix());
  const Matrix z_next = target(batch.next_obs_matrix());
  return build_samples_from_latents(batch, buffer, z_obs, z_next, target, rng, kinds);
}

}  // namespace ted
