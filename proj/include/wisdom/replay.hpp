#pragma once

// Sequence replay buffer: whole episodes stored as contiguous transition
// streams. Eviction is FIFO over whole episodes, and every sampled window
// lies inside a single stream.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <vector>

#include "wisdom/envs.hpp"
#include "wisdom/errors.hpp"
#include "wisdom/rng.hpp"

namespace wisdom {

struct Episode {
  std::uint64_t id = 0;  ///< insertion counter, never reused
  std::vector<Transition> transitions;
  std::size_t size() const { return transitions.size(); }
};

/// A chunk of `length` consecutive rows of episode `episode` starting at
/// `start`. `start` may be negative: rows before the episode start are
/// padding (they read as absent, exactly like the first steps of an episode
/// when acting).
struct ChunkRef {
  std::size_t episode = 0;  ///< index into episodes() at sampling time
  std::int64_t start = 0;
  std::size_t length = 0;
};

struct TransitionRef {
  std::size_t episode = 0;
  std::size_t index = 0;
};

class SequenceReplayBuffer {
 public:
  explicit SequenceReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity_ < 1) throw ParameterError("replay capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  bool empty() const { return size_ == 0; }
  const std::deque<Episode>& episodes() const { return episodes_; }
  const Episode& episode(std::size_t i) const { return episodes_.at(i); }
  std::uint64_t next_id() const { return next_id_; }

  /// Appends a contiguous stream; evicts the oldest whole episodes to make
  /// room. Empty streams are ignored.
  void add_episode(std::vector<Transition> stream) {
    if (stream.empty()) return;
    if (stream.size() > capacity_)
      throw ParameterError("episode of " + std::to_string(stream.size()) + " transitions exceeds replay capacity " +
                           std::to_string(capacity_));
    for (std::size_t i = 1; i < stream.size(); ++i)
      if (stream[i].step != stream[i - 1].step + 1)
        throw ContractError("replay: episode stream is not contiguous in step index");
    while (size_ + stream.size() > capacity_) {
      size_ -= episodes_.front().size();
      episodes_.pop_front();
    }
    size_ += stream.size();
    episodes_.push_back({next_id_++, std::move(stream)});
  }

  /// Number of chunk start positions of length `chunk` with `lead` padding
  /// rows allowed before the episode start.
  std::size_t valid_chunk_starts(std::size_t chunk, std::size_t lead = 0) const {
    std::size_t n = 0;
    for (const auto& e : episodes_) n += starts_in(e.size(), chunk, lead);
    return n;
  }

  /// Uniform over all valid (episode, start) pairs. Chunks never cross an
  /// episode boundary; up to `lead` leading rows may precede the episode.
  std::vector<ChunkRef> sample_chunks(std::size_t count, std::size_t chunk, std::size_t lead, Rng& rng) const {
    if (chunk < 1) throw ParameterError("chunk length must be >= 1");
    if (lead >= chunk) throw ParameterError("lead padding must be shorter than the chunk");
    std::vector<std::size_t> cum;
    cum.reserve(episodes_.size());
    std::size_t total = 0;
    for (const auto& e : episodes_) cum.push_back(total += starts_in(e.size(), chunk, lead));
    if (total == 0) throw ContractError("replay: no episode long enough for a chunk of " + std::to_string(chunk));
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<ChunkRef> out(count);
    for (auto& c : out) {
      const std::size_t k = pick(rng);
      const std::size_t ep = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), k) - cum.begin());
      const std::size_t before = ep == 0 ? 0 : cum[ep - 1];
      c.episode = ep;
      c.start = static_cast<std::int64_t>(k - before) - static_cast<std::int64_t>(lead);
      c.length = chunk;
    }
    return out;
  }

  /// Uniform over all stored transitions.
  std::vector<TransitionRef> sample_transitions(std::size_t count, Rng& rng) const {
    if (size_ == 0) throw ContractError("replay: sampling from an empty buffer");
    std::vector<std::size_t> cum;
    cum.reserve(episodes_.size());
    std::size_t total = 0;
    for (const auto& e : episodes_) cum.push_back(total += e.size());
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<TransitionRef> out(count);
    for (auto& r : out) {
      const std::size_t k = pick(rng);
      const std::size_t ep = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), k) - cum.begin());
      r.episode = ep;
      r.index = k - (ep == 0 ? 0 : cum[ep - 1]);
    }
    return out;
  }

  /// Restores state verbatim (checkpoint resume).
  void restore(std::deque<Episode> episodes, std::uint64_t next_id) {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.size();
    if (n > capacity_) throw ContractError("replay restore: contents exceed capacity");
    episodes_ = std::move(episodes);
    size_ = n;
    next_id_ = next_id;
  }

 private:
  static std::size_t starts_in(std::size_t len, std::size_t chunk, std::size_t lead) {
    return len + lead >= chunk ? len + lead - chunk + 1 : 0;
  }

  std::size_t capacity_;
  std::size_t size_ = 0;
  std::uint64_t next_id_ = 0;
  std::deque<Episode> episodes_;
};

}  // namespace wisdom
