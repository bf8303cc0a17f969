#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "ne/netcore.hpp"
#include "ne/rng.hpp"

namespace ne {

struct Transition {
  Vector s;
  Vector a;
  double r = 0.0;
  Vector s_next;
  bool done = false;
};

/// Bounded FIFO transition store. Insertion positions address currently
/// stored items oldest-first, so position 0 is the oldest retained
/// transition even after the ring wraps.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("buffer capacity must be >= 1");
    storage_.reserve(std::min<std::size_t>(capacity_, 1 << 20));
  }

  void add(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[write_index_] = std::move(t);
      write_index_ = (write_index_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return storage_.size() == capacity_; }

  const Transition& at_insertion(std::size_t pos) const {
    if (pos >= storage_.size())
      throw std::out_of_range("ReplayBuffer: insertion position out of range");
    if (!full()) return storage_[pos];
    return storage_[(write_index_ + pos) % capacity_];
  }

  void clear() {
    storage_.clear();
    write_index_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t write_index_ = 0;
  std::vector<Transition> storage_;
};

/// Indices are insertion positions; from_review marks the old-quarter branch.
struct SampledBatch {
  std::vector<std::size_t> indices;
  bool from_review = false;
};

/// Experience-review sampling: one draw m ~ U(0,1) per call; m > epsilon
/// samples uniformly (with replacement) from the oldest quarter of the
/// buffer, otherwise from the whole buffer. A buffer too small to have a
/// quarter falls back to whole-buffer sampling.
inline SampledBatch review_sample(const ReplayBuffer& buffer, double epsilon,
                                  std::size_t batch_size, Rng& rng) {
  if (buffer.size() < batch_size)
    throw std::invalid_argument("review_sample: buffer smaller than batch");
  SampledBatch out;
  out.indices.reserve(batch_size);
  const double m = rng.uniform();
  out.from_review = m > epsilon;
  const std::size_t quarter = buffer.size() / 4;
  const std::size_t range = (out.from_review && quarter > 0) ? quarter : buffer.size();
  for (std::size_t i = 0; i < batch_size; ++i)
    out.indices.push_back(static_cast<std::size_t>(rng.below(range)));
  return out;
}

/// Lower-bounded absolute slope of the activated-neuron-ratio history over a
/// trailing window of c recorded evaluations.
class EpsilonTracker {
 public:
  EpsilonTracker(int window, double lower_bound)
      : window_(window), lower_bound_(lower_bound) {
    if (window_ < 1) throw std::invalid_argument("epsilon_window: must be >= 1");
    if (!(lower_bound_ >= 0.0 && lower_bound_ <= 1.0))
      throw std::invalid_argument("epsilon_lower_bound: must be in [0, 1]");
  }

  void record(double activated_ratio) { history_.push_back(activated_ratio); }

  /// 1 until two evaluations exist (review disabled while warming up).
  double epsilon() const {
    if (history_.size() < 2) return 1.0;
    const std::size_t latest = history_.size() - 1;
    const std::size_t oldest =
        latest >= static_cast<std::size_t>(window_) ? latest - window_ : 0;
    const double raw = std::abs(history_[latest] - history_[oldest]);
    return std::clamp(raw, lower_bound_, 1.0);
  }

  const std::vector<double>& history() const { return history_; }
  double lower_bound() const { return lower_bound_; }
  int window() const { return window_; }

 private:
  int window_;
  double lower_bound_;
  std::vector<double> history_;
};

}  // namespace ne
