#include "ne/replay.hpp"

#include <gtest/gtest.h>

using namespace ne;

namespace {

Transition make_transition(double tag) {
  Transition t;
  t.s = Vector::Constant(2, tag);
  t.a = Vector::Constant(1, tag);
  t.r = tag;
  t.s_next = Vector::Constant(2, tag + 0.5);
  t.done = false;
  return t;
}

ReplayBuffer filled_buffer(std::size_t capacity, std::size_t n) {
  ReplayBuffer buf(capacity);
  for (std::size_t i = 0; i < n; ++i) buf.add(make_transition(static_cast<double>(i)));
  return buf;
}

}  // namespace

TEST(ReplayBuffer, FifoOverwriteKeepsInsertionOrder) {
  ReplayBuffer buf(4);
  for (int i = 0; i < 6; ++i) buf.add(make_transition(i));
  ASSERT_EQ(buf.size(), 4u);
  // oldest retained is 2, then 3, 4, 5
  for (std::size_t p = 0; p < 4; ++p)
    EXPECT_DOUBLE_EQ(buf.at_insertion(p).r, static_cast<double>(p + 2));
  EXPECT_THROW(buf.at_insertion(4), std::out_of_range);
}

TEST(ReviewSample, EpsilonZeroAlwaysFirstQuarter) {
  ReplayBuffer buf = filled_buffer(1000, 1000);
  Rng rng(1);
  int total = 0;
  for (int call = 0; call < 100; ++call) {
    auto batch = review_sample(buf, 0.0, 100, rng);
    EXPECT_TRUE(batch.from_review);
    for (auto idx : batch.indices) {
      ASSERT_LT(idx, 250u);
      ++total;
    }
  }
  EXPECT_EQ(total, 10000);
}

TEST(ReviewSample, EpsilonOneWholeBufferUniform) {
  ReplayBuffer buf = filled_buffer(1000, 1000);
  Rng rng(2);
  std::size_t in_quarter = 0, n = 0;
  for (int call = 0; call < 100; ++call) {
    auto batch = review_sample(buf, 1.0, 100, rng);
    EXPECT_FALSE(batch.from_review);
    for (auto idx : batch.indices) {
      n++;
      if (idx < 250) in_quarter++;
    }
  }
  const double frac = static_cast<double>(in_quarter) / static_cast<double>(n);
  EXPECT_NEAR(frac, 0.25, 0.02);
}

TEST(ReviewSample, BranchFrequencyMatchesEpsilon) {
  ReplayBuffer buf = filled_buffer(100, 100);
  Rng rng(3);
  int review = 0;
  const int calls = 10000;
  for (int i = 0; i < calls; ++i)
    if (review_sample(buf, 0.5, 4, rng).from_review) review++;
  EXPECT_NEAR(static_cast<double>(review) / calls, 0.5, 0.02);
}

TEST(ReviewSample, TinyBufferFallsBackToWhole) {
  ReplayBuffer buf = filled_buffer(10, 3);  // quarter = 0
  Rng rng(4);
  auto batch = review_sample(buf, 0.0, 3, rng);
  EXPECT_TRUE(batch.from_review);
  for (auto idx : batch.indices) ASSERT_LT(idx, 3u);
}

TEST(ReviewSample, BufferSmallerThanBatchThrows) {
  ReplayBuffer buf = filled_buffer(10, 2);
  Rng rng(5);
  EXPECT_THROW(review_sample(buf, 0.5, 3, rng), std::invalid_argument);
}

TEST(EpsilonTracker, WarmupReturnsOne) {
  EpsilonTracker tr(20, 0.25);
  EXPECT_DOUBLE_EQ(tr.epsilon(), 1.0);
  tr.record(0.9);
  EXPECT_DOUBLE_EQ(tr.epsilon(), 1.0);
  tr.record(0.9);
  EXPECT_DOUBLE_EQ(tr.epsilon(), 0.25);  // flat slope clamps up to the bound
}

TEST(EpsilonTracker, SlopeBelowBoundClamps) {
  EpsilonTracker tr(20, 0.25);
  tr.record(0.9);
  for (int i = 0; i < 19; ++i) tr.record(0.9 - 0.005 * (i + 1));
  // |0.8 - 0.9| across the 20-evaluation window
  EXPECT_DOUBLE_EQ(tr.history().back(), 0.805);
  tr.record(0.8);
  EXPECT_DOUBLE_EQ(tr.epsilon(), 0.25);  // raw 0.1 -> clamped to 0.25
}

TEST(EpsilonTracker, SlopeAboveBoundPassesThrough) {
  EpsilonTracker tr(5, 0.25);
  tr.record(0.9);
  tr.record(0.5);  // raw 0.4 with fewer than c entries: use oldest
  EXPECT_DOUBLE_EQ(tr.epsilon(), 0.4);
}

TEST(EpsilonTracker, OutputAlwaysWithinBounds) {
  Rng rng(6);
  EpsilonTracker tr(7, 0.3);
  for (int i = 0; i < 200; ++i) {
    tr.record(rng.uniform());
    const double e = tr.epsilon();
    ASSERT_GE(e, 0.3);
    ASSERT_LE(e, 1.0);
  }
}

TEST(EpsilonTracker, ValidatesConstruction) {
  EXPECT_THROW(EpsilonTracker(0, 0.5), std::invalid_argument);
  EXPECT_THROW(EpsilonTracker(5, -0.1), std::invalid_argument);
  EXPECT_THROW(EpsilonTracker(5, 1.1), std::invalid_argument);
}
