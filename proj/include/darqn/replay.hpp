#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "darqn/rng.hpp"
#include "darqn/tensor.hpp"

namespace darqn {

struct Transition {
  Tensor frame;  // state the action was taken from
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
};

// A fixed-length run of consecutive transitions from one episode, plus the
// successor frame needed to bootstrap the last step (null when that step is
// terminal). Pointers are valid only until the next append or eviction.
struct Segment {
  std::vector<const Transition*> steps;
  const Tensor* bootstrap_frame = nullptr;
};

// Episode-structured replay. Capacity counts transitions; when exceeded,
// whole oldest episodes are dropped first (the episode currently being
// written is never dropped). Sampling is uniform over all eligible segment
// start positions and never crosses an episode boundary.
class ReplayMemory {
 public:
  ReplayMemory(int64_t capacity, int unroll);

  void append(Transition t);

  int64_t size() const { return size_; }
  int64_t episode_count() const { return static_cast<int64_t>(episodes_.size()); }
  int64_t eligible() const;
  bool can_sample(int batch) const { return eligible() >= batch; }

  Segment sample(Rng& rng) const;
  std::vector<Segment> sample_batch(int batch, Rng& rng) const;

 private:
  struct Episode {
    std::vector<Transition> steps;
    bool closed = false;
    int64_t eligible = 0;
  };

  Segment segment_at(const Episode& ep, int start) const;
  void refresh_open_eligible();

  int64_t capacity_;
  int unroll_;
  int64_t size_ = 0;
  std::deque<Episode> episodes_;
  // cumulative eligible counts of closed episodes, never physically popped;
  // evicted_count_/evicted_eligible_ track the logical front
  std::vector<int64_t> closed_cum_;
  size_t evicted_count_ = 0;
  int64_t evicted_eligible_ = 0;
};

}  // namespace darqn
