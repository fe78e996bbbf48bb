#include "darqn/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace darqn {

ReplayMemory::ReplayMemory(int64_t capacity, int unroll) : capacity_(capacity), unroll_(unroll) {
  if (capacity_ < 1) throw std::invalid_argument("replay: capacity must be positive");
  if (unroll_ < 1) throw std::invalid_argument("replay: unroll must be >= 1");
}

void ReplayMemory::append(Transition t) {
  if (episodes_.empty() || episodes_.back().closed) episodes_.push_back(Episode{});
  Episode& ep = episodes_.back();
  const bool closes = t.terminal;
  ep.steps.push_back(std::move(t));
  size_ += 1;
  if (closes) {
    ep.closed = true;
    const int64_t T = static_cast<int64_t>(ep.steps.size());
    ep.eligible = std::max<int64_t>(0, T - unroll_ + 1);
    closed_cum_.push_back((closed_cum_.empty() ? 0 : closed_cum_.back()) + ep.eligible);
  } else {
    refresh_open_eligible();
  }
  while (size_ > capacity_ && episodes_.size() > 1) {
    Episode& victim = episodes_.front();
    size_ -= static_cast<int64_t>(victim.steps.size());
    evicted_eligible_ += victim.eligible;
    evicted_count_ += 1;
    episodes_.pop_front();
  }
}

void ReplayMemory::refresh_open_eligible() {
  Episode& ep = episodes_.back();
  if (ep.closed) return;
  // open episode: the successor frame must already exist, so the last
  // transition cannot start a usable window
  ep.eligible = std::max<int64_t>(0, static_cast<int64_t>(ep.steps.size()) - unroll_);
}

int64_t ReplayMemory::eligible() const {
  int64_t closed_total = closed_cum_.empty() ? 0 : closed_cum_.back() - evicted_eligible_;
  if (!episodes_.empty() && !episodes_.back().closed) closed_total += episodes_.back().eligible;
  return closed_total;
}

Segment ReplayMemory::segment_at(const Episode& ep, int start) const {
  Segment s;
  s.steps.reserve(static_cast<size_t>(unroll_));
  for (int i = 0; i < unroll_; ++i) s.steps.push_back(&ep.steps[static_cast<size_t>(start + i)]);
  const Transition& last = *s.steps.back();
  if (!last.terminal) s.bootstrap_frame = &ep.steps[static_cast<size_t>(start + unroll_)].frame;
  return s;
}

Segment ReplayMemory::sample(Rng& rng) const {
  const int64_t total = eligible();
  if (total <= 0) throw std::logic_error("replay: no eligible segments to sample");
  int64_t k = rng.uniform_int64(total);

  const int64_t closed_total = closed_cum_.empty() ? 0 : closed_cum_.back() - evicted_eligible_;
  if (k < closed_total) {
    // binary search over absolute cumulative counts
    const int64_t target = k + evicted_eligible_;
    const auto it = std::upper_bound(closed_cum_.begin(), closed_cum_.end(), target);
    const size_t abs_idx = static_cast<size_t>(it - closed_cum_.begin());
    const Episode& ep = episodes_[abs_idx - evicted_count_];
    const int64_t before = abs_idx == 0 ? 0 : closed_cum_[abs_idx - 1];
    return segment_at(ep, static_cast<int>(target - before));
  }
  const Episode& open = episodes_.back();
  return segment_at(open, static_cast<int>(k - closed_total));
}

std::vector<Segment> ReplayMemory::sample_batch(int batch, Rng& rng) const {
  if (!can_sample(batch)) throw std::logic_error("replay: fewer eligible segments than batch size");
  std::vector<Segment> out;
  out.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) out.push_back(sample(rng));
  return out;
}

}  // namespace darqn
