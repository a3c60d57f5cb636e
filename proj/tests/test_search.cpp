#include <random>

#include <gtest/gtest.h>

#include "isn/search.hpp"

namespace isn {
namespace {

std::vector<ScaleRange> ranges_of(const std::vector<TraceEntry>& trace) {
  std::vector<ScaleRange> out;
  for (const auto& t : trace) out.push_back(t.range);
  return out;
}

TEST(GreedySearch, ReferenceTableSelects16To560) {
  auto oracle = ApOracle::lookup_ap(reference_range_table());
  const auto r = greedy_range_search(SearchSpace{}, oracle);
  EXPECT_EQ(r.best, (ScaleRange{16, 560}));
  EXPECT_DOUBLE_EQ(r.best_ap, 38.7);
  const std::vector<ScaleRange> expected{{0, 640},  {16, 640}, {32, 640}, {16, 320},
                                         {16, 496}, {16, 560}, {32, 560}};
  EXPECT_EQ(ranges_of(r.trace), expected);
  EXPECT_EQ(oracle.calls(), 7u);
}

TEST(GreedySearch, FullSweepNeedsRangesOutsideTheReferenceTable) {
  auto oracle = ApOracle::lookup_ap(reference_range_table());
  try {
    greedy_range_search(SearchSpace{}, oracle, SweepPolicy::kFull);
    FAIL() << "expected the full sweep to request an unrecorded range";
  } catch (const SearchAborted& e) {
    EXPECT_EQ(e.partial_trace.size(), 6u);
  }
}

TEST(GreedySearch, ConstantOracleStaysAtInitialRange) {
  for (auto policy : {SweepPolicy::kDirectional, SweepPolicy::kFull}) {
    ApOracle oracle([](const ScaleRange&) {
      EvalResult r;
      r.ap = 0.25;
      return r;
    });
    const auto r = greedy_range_search(SearchSpace{}, oracle, policy);
    EXPECT_EQ(r.best, (ScaleRange{0, 640}));
    EXPECT_DOUBLE_EQ(r.best_ap, 0.25);
  }
}

TEST(GreedySearch, HandTracedGrid) {
  // Peaked at lower 16, upper 496.
  ApOracle oracle([](const ScaleRange& s) {
    EvalResult r;
    r.ap = 100.0 - std::abs(s.lower() - 16.0) - std::abs(s.upper() - 496.0) / 10.0;
    return r;
  });
  const auto r = greedy_range_search(SearchSpace{}, oracle);
  EXPECT_EQ(r.best, (ScaleRange{16, 496}));
  EXPECT_DOUBLE_EQ(r.best_ap, 100.0);
  const std::vector<ScaleRange> expected{{0, 640},  {16, 640}, {32, 640}, {16, 320},
                                         {16, 496}, {16, 560}, {32, 496}};
  EXPECT_EQ(ranges_of(r.trace), expected);
}

TEST(GreedySearch, IncreasingInLowerBound) {
  ApOracle oracle([](const ScaleRange& s) {
    EvalResult r;
    r.ap = s.lower() - std::abs(s.upper() - 496.0) / 1000.0;
    return r;
  });
  const auto r = greedy_range_search(SearchSpace{}, oracle);
  EXPECT_EQ(r.best, (ScaleRange{32, 496}));
  const std::vector<ScaleRange> expected{{0, 640},  {16, 640}, {32, 640},
                                         {32, 320}, {32, 496}, {32, 560}};
  EXPECT_EQ(ranges_of(r.trace), expected);
}

TEST(GreedySearch, TiesPreferCurrentThenWiderRange) {
  ApOracle oracle([](const ScaleRange& s) {
    EvalResult r;
    r.ap = s.lower() == 0.0 ? 1.0 : 2.0;
    return r;
  });
  // 16 and 32 tie above the current value; the smaller lower bound wins.
  const auto r = greedy_range_search(SearchSpace{}, oracle);
  EXPECT_EQ(r.best, (ScaleRange{16, 640}));
}

TEST(GreedySearch, AbortCarriesPartialTrace) {
  ApOracle oracle([](const ScaleRange& s) -> EvalResult {
    if (s == ScaleRange{16, 320}) throw OracleError("boom");
    EvalResult r;
    r.ap = s.upper() / 1000.0 + (s.lower() == 16.0 ? 0.1 : 0.0);
    return r;
  });
  try {
    greedy_range_search(SearchSpace{}, oracle);
    FAIL() << "expected SearchAborted";
  } catch (const SearchAborted& e) {
    const std::vector<ScaleRange> expected{{0, 640}, {16, 640}, {32, 640}};
    EXPECT_EQ(ranges_of(e.partial_trace), expected);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(GreedySearch, RejectsBadSpace) {
  ApOracle oracle([](const ScaleRange&) { return EvalResult{}; });
  SearchSpace s;
  s.initial = ScaleRange{8, 640};
  EXPECT_THROW(greedy_range_search(s, oracle), InvariantError);
  s = {};
  s.upper_candidates = {640, 320};
  EXPECT_THROW(greedy_range_search(s, oracle), InvariantError);
}

TEST(GreedySearch, RandomTablesBoundedAndLocallyOptimal) {
  std::mt19937_64 rng(53);
  std::uniform_int_distribution<int> level(0, 20);
  const SearchSpace space;
  for (int trial = 0; trial < 500; ++trial) {
    std::map<ScaleRange, double> table;
    for (double l : space.lower_candidates) {
      for (double u : space.upper_candidates) table[ScaleRange{l, u}] = level(rng);
    }
    auto fn = [&](const ScaleRange& s) {
      EvalResult r;
      r.ap = table.at(s);
      return r;
    };
    for (auto policy : {SweepPolicy::kDirectional, SweepPolicy::kFull}) {
      ApOracle oracle(fn);
      const auto r = greedy_range_search(space, oracle, policy);
      EXPECT_LE(oracle.calls(), space.lower_candidates.size() * space.upper_candidates.size());
      EXPECT_EQ(r.trace.size(), oracle.calls());
      EXPECT_DOUBLE_EQ(r.best_ap, table.at(r.best));
      EXPECT_GE(r.best_ap, table.at(space.initial));
      if (policy == SweepPolicy::kFull) {
        for (double l : space.lower_candidates) {
          EXPECT_LE(table.at(ScaleRange{l, r.best.upper()}), r.best_ap);
        }
        for (double u : space.upper_candidates) {
          EXPECT_LE(table.at(ScaleRange{r.best.lower(), u}), r.best_ap);
        }
      }
    }
  }
}

}  // namespace
}  // namespace isn
