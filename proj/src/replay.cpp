#include "forecaster/replay.hpp"

#include <algorithm>
#include <cmath>

namespace forecaster {

PrimitiveBuffer::PrimitiveBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("PrimitiveBuffer: capacity must be positive");
}

void PrimitiveBuffer::push(const Transition& t, std::uint64_t episode, std::uint64_t step) {
  if (!entries_.empty()) {
    const auto& last = entries_.back();
    const bool continues = episode == last.episode && step == last.step + 1;
    const bool starts_new = episode > last.episode;
    if (!continues && !starts_new) {
      throw IntegrityError("PrimitiveBuffer: entry (episode " + std::to_string(episode) +
                           ", step " + std::to_string(step) + ") breaks episode ordering");
    }
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back({t, episode, step});
}

std::optional<std::size_t> PrimitiveBuffer::find(std::uint64_t episode, std::uint64_t step) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{episode, step},
                             [](const StoredTransition& e, const std::pair<std::uint64_t, std::uint64_t>& key) {
                               return std::pair{e.episode, e.step} < key;
                             });
  if (it == entries_.end() || it->episode != episode || it->step != step) return std::nullopt;
  return static_cast<std::size_t>(it - entries_.begin());
}

bool PrimitiveBuffer::window_ok(std::size_t start, std::size_t length) const {
  // Episodes are contiguous with consecutive steps, so equal episode ids at
  // both ends imply the whole window lies in one episode.
  return entries_[start].episode == entries_[start + length - 1].episode;
}

std::optional<std::size_t> PrimitiveBuffer::sample_window_start(Rng& rng,
                                                                std::size_t length) const {
  if (length == 0 || entries_.size() < length) return std::nullopt;
  const std::size_t candidates = entries_.size() - length + 1;
  // Rejection sampling is uniform over eligible starts; fall back to an
  // explicit scan when eligible windows are rare.
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t s = uniform_index(rng, candidates);
    if (window_ok(s, length)) return s;
  }
  std::vector<std::size_t> eligible;
  for (std::size_t s = 0; s < candidates; ++s)
    if (window_ok(s, length)) eligible.push_back(s);
  if (eligible.empty()) return std::nullopt;
  return eligible[uniform_index(rng, eligible.size())];
}

std::optional<std::vector<std::vector<Transition>>> PrimitiveBuffer::sample_sequence_batch(
    Rng& rng, std::size_t batch, std::size_t length) const {
  std::vector<std::vector<Transition>> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto start = sample_window_start(rng, length);
    if (!start) return std::nullopt;
    std::vector<Transition> seq;
    seq.reserve(length);
    for (std::size_t i = 0; i < length; ++i) seq.push_back(entries_[*start + i].transition);
    out.push_back(std::move(seq));
  }
  return out;
}

ExtendedBuffer::ExtendedBuffer(std::size_t capacity, int k) : capacity_(capacity), k_(k) {
  if (capacity_ == 0) throw ConfigError("ExtendedBuffer: capacity must be positive");
  if (k_ <= 0) throw ConfigError("ExtendedBuffer: K must be positive");
}

void ExtendedBuffer::push(const ExtendedTransition& e, const PrimitiveBuffer* primitive) {
  const auto k = static_cast<std::uint64_t>(k_);
  if (e.start_step % k != 0) {
    throw IntegrityError("extended entry start_step " + std::to_string(e.start_step) +
                         " is not a multiple of K=" + std::to_string(k_));
  }
  if (!e.goal.allFinite() || !std::isfinite(e.cumulative_reward)) {
    throw IntegrityError("extended entry has non-finite goal or reward");
  }
  if (primitive) {
    const auto first = primitive->find(e.episode, e.start_step);
    if (first) {
      Scalar sum = 0.0;
      for (std::uint64_t i = 0; i < k; ++i) {
        const std::size_t idx = *first + i;
        if (idx >= primitive->size() || primitive->at(idx).episode != e.episode) {
          throw IntegrityError("extended segment (episode " + std::to_string(e.episode) +
                               ", start " + std::to_string(e.start_step) +
                               ") crosses an episode boundary");
        }
        const auto& t = primitive->at(idx).transition;
        if (t.terminal && i + 1 < k) {
          throw IntegrityError("extended segment ends its episode before K steps");
        }
        sum += t.reward;
      }
      if (sum != e.cumulative_reward) {
        throw IntegrityError("extended segment reward " + std::to_string(e.cumulative_reward) +
                             " != primitive sum " + std::to_string(sum));
      }
      if (!(primitive->at(*first).transition.observation == e.start_observation) ||
          !(primitive->at(*first + k - 1).transition.next_observation == e.end_observation)) {
        throw IntegrityError("extended segment observations do not match the primitive buffer");
      }
    }
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(e);
}

std::optional<std::vector<ExtendedTransition>> ExtendedBuffer::sample_extended_batch(
    Rng& rng, std::size_t batch) const {
  if (batch == 0 || batch > entries_.size()) return std::nullopt;
  std::vector<ExtendedTransition> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) out.push_back(entries_[uniform_index(rng, entries_.size())]);
  return out;
}

}  // namespace forecaster
