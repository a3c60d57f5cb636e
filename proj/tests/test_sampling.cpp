#include <map>
#include <random>

#include <gtest/gtest.h>

#include "isn/sampling.hpp"
#include "isn/sim.hpp"

namespace isn {
namespace {

Instance square(double scale, std::int64_t id = 1, bool crowd = false,
                std::int64_t image_id = 1) {
  return {BBox(0, 0, scale, scale), 1, crowd, id, image_id};
}

bool is_valid(const Partition& p, std::int64_t id) {
  for (const auto& i : p.valid) if (i.id == id) return true;
  return false;
}

TEST(IsnPartition, ThresholdExamples) {
  const ScaleRange r{16, 560};
  const std::vector<Instance> s73{square(73)};
  EXPECT_TRUE(is_valid(isn_partition(s73, 1.0, r), 1));

  const std::vector<Instance> s8{square(8)};
  EXPECT_FALSE(is_valid(isn_partition(s8, 1.0, r), 1));
  EXPECT_TRUE(is_valid(isn_partition(s8, 4.0, r), 1));

  const std::vector<Instance> s600{square(600)};
  EXPECT_FALSE(is_valid(isn_partition(s600, 1.0, r), 1));
  EXPECT_TRUE(is_valid(isn_partition(s600, 0.5, r), 1));
}

TEST(IsnPartition, CrowdAlwaysIgnored) {
  const std::vector<Instance> v{square(100, 1, true), square(100, 2)};
  const auto p = isn_partition(v, 1.0, ScaleRange::unbounded());
  ASSERT_EQ(p.ignored.size(), 1u);
  EXPECT_EQ(p.ignored[0].id, 1);
  EXPECT_EQ(p.valid.size(), 1u);
}

TEST(IsnPartition, UnboundedRangeKeepsEveryNonCrowdInstance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> side(0.01, 3000);
  std::vector<Instance> v;
  for (int i = 0; i < 500; ++i) v.push_back({BBox(0, 0, side(rng), side(rng)), 1, false, i, 1});
  for (double w : {0.25, 1.0, 4.0}) {
    EXPECT_EQ(isn_partition(v, w, ScaleRange::unbounded()).valid.size(), v.size());
  }
}

TEST(IsnPartition, ExhaustiveAndExclusive) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> side(1, 700);
  std::bernoulli_distribution crowd(0.1);
  std::vector<Instance> v;
  for (int i = 0; i < 400; ++i) {
    v.push_back({BBox(0, 0, side(rng), side(rng)), 1, crowd(rng), i, 1});
  }
  const auto p = isn_partition(v, 2.0, ScaleRange{16, 560});
  std::set<std::int64_t> ids;
  for (const auto& i : p.valid) ids.insert(i.id);
  for (const auto& i : p.ignored) EXPECT_TRUE(ids.insert(i.id).second);
  EXPECT_EQ(ids.size(), v.size());
}

TEST(SnipPartition, TwoResolutionExampleDecisions) {
  const auto table = SnipRangeTable::example_table();
  const std::vector<Instance> man{square(73)};
  EXPECT_TRUE(is_valid(snip_partition(man, 0, table), 1));
  const std::vector<Instance> player{square(107)};
  EXPECT_FALSE(is_valid(snip_partition(player, 1, table), 1));
  const std::vector<Instance> big{square(200)};
  EXPECT_FALSE(is_valid(snip_partition(big, 0, table), 1));
}

TEST(SnipPartition, OpenIntervalsAndBadIndex) {
  const auto table = SnipRangeTable::example_table();
  const std::vector<Instance> edge{square(40), square(160, 2), square(120, 3)};
  const auto p0 = snip_partition(edge, 0, table);
  EXPECT_FALSE(is_valid(p0, 1));
  EXPECT_FALSE(is_valid(p0, 2));
  EXPECT_TRUE(is_valid(p0, 3));
  EXPECT_FALSE(is_valid(snip_partition(edge, 1, table), 3));
  EXPECT_THROW(snip_partition(edge, 2, table), std::out_of_range);
  EXPECT_THROW(snip_partition(edge, -1, table), std::out_of_range);
}

TEST(SnipEntry, DerivesOmegaFromResolution) {
  const auto table = SnipRangeTable::example_table();
  EXPECT_DOUBLE_EQ(table.entries()[0].omega_for({480, 640}), 800.0 / 480.0);
  EXPECT_DOUBLE_EQ(table.entries()[1].omega_for({480, 640}), 1.0);
  EXPECT_DOUBLE_EQ(table.entries()[1].omega_for({1000, 500}), 800.0 / 1000.0);
}

TEST(ConsistencyOverlap, Examples) {
  ScaleHistogram a({0, 1, 2, 3}), b({0, 1, 2, 3});
  a.mass = {0.5, 0.5, 0};
  b.mass = {0, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(consistency_overlap(a, b), 0.5);
  EXPECT_DOUBLE_EQ(consistency_overlap(a, a), 1.0);
  ScaleHistogram c({0, 1, 2, 3});
  c.mass = {0, 0, 1};
  EXPECT_DOUBLE_EQ(consistency_overlap(a, c), 0.0);
  ScaleHistogram other({0, 1, 2, 4});
  EXPECT_THROW(consistency_overlap(a, other), std::invalid_argument);
}

TEST(Histogram, LogEdgesAndSplitting) {
  const auto e = log_bin_edges();
  ASSERT_EQ(e.size(), 65u);
  EXPECT_EQ(e.front(), 1.0);
  EXPECT_EQ(e.back(), 2560.0);
  EXPECT_TRUE(std::is_sorted(e.begin(), e.end()));

  const auto s = split_edges_at_range(e, ScaleRange{16, 560});
  EXPECT_NE(std::find(s.begin(), s.end(), 16.0), s.end());
  EXPECT_NE(std::find(s.begin(), s.end(), std::nextafter(560.0, kInf)), s.end());
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));

  ScaleHistogram h(s);
  h.add(560.0);
  h.add(std::nextafter(560.0, kInf));
  h.add(0.5);
  h.add(99999);
  EXPECT_EQ(h.underflow, 1.0);
  EXPECT_EQ(h.overflow, 1.0);
  const auto bin_of = [&](double v) {
    return std::upper_bound(s.begin(), s.end(), v) - s.begin() - 1;
  };
  EXPECT_NE(bin_of(560.0), bin_of(std::nextafter(560.0, kInf)));
}

TEST(ScaleDistributions, SingleValidInstance) {
  Dataset ds;
  ds.images.push_back({1, 480, 640, ""});
  ds.instances.push_back(square(73));
  const SamplingPolicy policy = IsnPolicy{PyramidSpec({1.0}), ScaleRange{16, 560}};
  const auto d = resized_scale_distributions(ds, policy);
  EXPECT_TRUE(d.ignored.empty());
  EXPECT_EQ(d.trained.samples, 1u);
  EXPECT_DOUBLE_EQ(d.trained.total(), 1.0);
  const auto it = std::find(d.trained.mass.begin(), d.trained.mass.end(), 1.0);
  ASSERT_NE(it, d.trained.mass.end());
  const auto bin = static_cast<std::size_t>(it - d.trained.mass.begin());
  EXPECT_LE(d.trained.edges[bin], 73.0);
  EXPECT_GT(d.trained.edges[bin + 1], 73.0);
}

TEST(ScaleDistributions, EmptyDatasetGivesEmptyHistograms) {
  const Dataset ds;
  for (const SamplingPolicy& p :
       {SamplingPolicy{IsnPolicy{PyramidSpec::defaults(), ScaleRange{16, 560}}},
        SamplingPolicy{SnipPolicy{SnipRangeTable::example_table()}}}) {
    const auto d = resized_scale_distributions(ds, p);
    EXPECT_TRUE(d.trained.empty());
    EXPECT_TRUE(d.ignored.empty());
    EXPECT_DOUBLE_EQ(consistency_overlap(d.trained, d.ignored), 0.0);
  }
}

TEST(ScaleDistributions, IsnBinsNeverHoldBothLabels) {
  const auto ds = generate_lognormal_population(5000, 64.0, 1.2, 21);
  const SamplingPolicy policy = IsnPolicy{PyramidSpec::defaults(), ScaleRange{16, 560}};
  const auto d = resized_scale_distributions(ds, policy);
  for (std::size_t i = 0; i < d.trained.mass.size(); ++i) {
    EXPECT_FALSE(d.trained.mass[i] > 0 && d.ignored.mass[i] > 0) << "bin " << i;
  }
  EXPECT_EQ(consistency_overlap(d.trained, d.ignored), 0.0);
}

TEST(ScaleDistributions, SnipLabelsOverlapOnLogNormalPopulation) {
  const auto ds = generate_lognormal_population(10000, 64.0, 1.0, 4);
  const auto d = resized_scale_distributions(ds, SnipPolicy{SnipRangeTable::example_table()});
  // Independent count: bins holding mass in both histograms.
  int shared_bins = 0;
  for (std::size_t i = 0; i < d.trained.mass.size(); ++i) {
    shared_bins += d.trained.mass[i] > 0 && d.ignored.mass[i] > 0;
  }
  EXPECT_GT(shared_bins, 0);
  EXPECT_GT(consistency_overlap(d.trained, d.ignored), 0.0);
}

}  // namespace
}  // namespace isn
