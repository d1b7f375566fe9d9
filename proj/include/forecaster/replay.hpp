#pragma once

#include "forecaster/env_maze.hpp"

#include <deque>
#include <optional>
#include <vector>

namespace forecaster {

struct StoredTransition {
  Transition transition;
  std::uint64_t episode = 0;
  std::uint64_t step = 0;  // step index within the episode
};

/// FIFO ring of per-step transitions. Episodes are contiguous and ordered.
class PrimitiveBuffer {
 public:
  explicit PrimitiveBuffer(std::size_t capacity);

  void push(const Transition& t, std::uint64_t episode, std::uint64_t step);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const StoredTransition& at(std::size_t i) const { return entries_[i]; }

  /// Index of the entry for (episode, step) if still resident.
  std::optional<std::size_t> find(std::uint64_t episode, std::uint64_t step) const;

  /// Uniform over contiguous within-episode windows of `length`; nullopt when
  /// no window exists (the caller skips its update).
  std::optional<std::vector<std::vector<Transition>>> sample_sequence_batch(
      Rng& rng, std::size_t batch, std::size_t length) const;

  /// Start index of one uniformly drawn eligible window.
  std::optional<std::size_t> sample_window_start(Rng& rng, std::size_t length) const;

 private:
  bool window_ok(std::size_t start, std::size_t length) const;

  std::size_t capacity_;
  std::deque<StoredTransition> entries_;
};

/// K-step goal-labelled segment: observation at the segment start, the
/// observation K steps later, the goal pursued and the undiscounted reward sum.
struct ExtendedTransition {
  Observation start_observation;
  Observation end_observation;
  Vector goal;
  Scalar cumulative_reward = 0.0;
  std::uint64_t start_step = 0;
  std::uint64_t episode = 0;
};

class ExtendedBuffer {
 public:
  ExtendedBuffer(std::size_t capacity, int k);

  /// Validates alignment, and when the segment is still resident in
  /// `primitive`, its continuity and reward sum. Throws IntegrityError.
  void push(const ExtendedTransition& e, const PrimitiveBuffer* primitive = nullptr);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  int k() const { return k_; }
  const ExtendedTransition& at(std::size_t i) const { return entries_[i]; }

  std::optional<std::vector<ExtendedTransition>> sample_extended_batch(Rng& rng,
                                                                       std::size_t batch) const;

 private:
  std::size_t capacity_;
  int k_;
  std::deque<ExtendedTransition> entries_;
};

}  // namespace forecaster
