#include <cmath>

#include <gtest/gtest.h>

#include "isn/sim.hpp"

namespace isn {
namespace {

DetectorProfile noiseless() {
  DetectorProfile p;
  p.p_detect_in_band = 1.0;
  p.p_detect_decay = 1.0;
  p.loc_noise_frac = 0.0;
  p.fp_rate = 0.0;
  p.tp_score_std = 0.0;
  return p;
}

TEST(DetectorProfile, ProbabilityAndJitter) {
  const DetectorProfile p;
  EXPECT_DOUBLE_EQ(p.detection_probability(100), 0.95);
  EXPECT_DOUBLE_EQ(p.detection_probability(8), 0.2375);
  EXPECT_DOUBLE_EQ(p.detection_probability(960), 0.475);
  EXPECT_DOUBLE_EQ(p.jitter_std(100), 0.02);
  EXPECT_DOUBLE_EQ(p.jitter_std(8), 0.08);
  DetectorProfile bad;
  bad.p_detect_in_band = 1.5;
  EXPECT_THROW(bad.validate(), InvariantError);
}

TEST(SimulateImage, NoiselessReturnsProjectedGroundTruth) {
  const ImageInfo image{1, 480, 640, ""};
  const std::vector<Instance> gts{{BBox(10, 20, 30, 40), 1, false, 1, 1},
                                  {BBox(100, 100, 200, 150), 2, false, 2, 1},
                                  {BBox(0, 0, 50, 50), 1, true, 3, 1}};
  const std::vector<std::int64_t> cats{1, 2};
  const auto levels = simulate_image(image, gts, PyramidSpec::defaults(), noiseless(), cats);
  ASSERT_EQ(levels.size(), 5u);
  for (const auto& level : levels) {
    ASSERT_EQ(level.detections.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(level.detections[i].bbox, project_box(gts[i].bbox, level.omega));
      EXPECT_EQ(level.detections[i].category_id, gts[i].category_id);
      EXPECT_DOUBLE_EQ(level.detections[i].score, 0.8);
    }
  }
}

TEST(SimulateImage, DetectionRateMatchesProfile) {
  // Resized scale 8 sits two octaves below the band: p = 0.95 * 0.5^2.
  const std::size_t n = 100000;
  std::vector<Instance> gts;
  for (std::size_t i = 0; i < n; ++i) {
    gts.push_back({BBox(10, 10, 8, 8), 1, false, static_cast<std::int64_t>(i), 1});
  }
  DetectorProfile p;
  p.fp_rate = 0.0;
  const auto levels =
      simulate_image({1, 480, 640, ""}, gts, PyramidSpec({1.0}), p, std::vector<std::int64_t>{1});
  const double rate = static_cast<double>(levels[0].detections.size()) / static_cast<double>(n);
  const double sigma = std::sqrt(0.2375 * (1 - 0.2375) / static_cast<double>(n));
  EXPECT_NEAR(rate, 0.2375, 3 * sigma);
}

TEST(Simulation, DeterministicForSeed) {
  const auto a = generate_dataset(SyntheticConfig{}, 11);
  const auto b = generate_dataset(SyntheticConfig{}, 11);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    EXPECT_EQ(a.instances[i].bbox, b.instances[i].bbox);
  }
  DetectorProfile p;
  p.seed = 5;
  const auto da = simulate_detections(a, PyramidSpec::defaults(), p);
  const auto db = simulate_detections(b, PyramidSpec::defaults(), p);
  ASSERT_EQ(da.size(), db.size());
  for (const auto& [id, levels] : da) {
    const auto& other = db.at(id);
    for (std::size_t r = 0; r < levels.size(); ++r) {
      ASSERT_EQ(levels[r].detections.size(), other[r].detections.size());
      for (std::size_t k = 0; k < levels[r].detections.size(); ++k) {
        EXPECT_EQ(levels[r].detections[k].bbox, other[r].detections[k].bbox);
        EXPECT_EQ(levels[r].detections[k].score, other[r].detections[k].score);
      }
    }
  }
  const auto c = generate_dataset(SyntheticConfig{}, 12);
  EXPECT_FALSE(c.instances.size() == a.instances.size() &&
               c.instances.front().bbox == a.instances.front().bbox);
}

TEST(Simulation, GeneratedDatasetRespectsConfig) {
  SyntheticConfig cfg;
  cfg.num_images = 50;
  const auto ds = generate_dataset(cfg, 2);
  EXPECT_EQ(ds.images.size(), 50u);
  const auto by_image = ds.instances_by_image();
  for (const auto& image : ds.images) {
    const auto it = by_image.find(image.id);
    ASSERT_NE(it, by_image.end());
    EXPECT_GE(it->second.size(), 1u);
    EXPECT_LE(it->second.size(), 20u);
    for (const auto& inst : it->second) {
      EXPECT_GE(inst.bbox.x(), 0.0);
      EXPECT_GE(inst.bbox.y(), 0.0);
      EXPECT_LE(inst.bbox.x() + inst.bbox.w(), 640.0 + 1e-9);
      EXPECT_LE(inst.bbox.y() + inst.bbox.h(), 480.0 + 1e-9);
    }
  }
}

TEST(Experiment, UnboundedIsnEqualsNaive) {
  SyntheticConfig cfg;
  cfg.num_images = 40;
  const auto ds = generate_dataset(cfg, 7);
  const auto pyramid = PyramidSpec::defaults();
  const auto isn = run_experiment(ds, pyramid, ScaleRange::unbounded(), DetectorProfile{},
                                  Strategy::isn());
  const auto naive = run_experiment(ds, pyramid, ScaleRange{16, 560}, DetectorProfile{},
                                    Strategy::naive_ms());
  EXPECT_DOUBLE_EQ(isn.ap, naive.ap);
  EXPECT_DOUBLE_EQ(isn.ar, naive.ar);
}

TEST(Experiment, NoiselessDetectorIsPerfectUnderEveryStrategy) {
  SyntheticConfig cfg;
  cfg.num_images = 30;
  const auto ds = generate_dataset(cfg, 9);
  for (const auto& s : {Strategy::isn(), Strategy::naive_ms(), Strategy::single_scale(1.0)}) {
    const auto r =
        run_experiment(ds, PyramidSpec::defaults(), ScaleRange{16, 560}, noiseless(), s);
    EXPECT_DOUBLE_EQ(r.ap, 1.0) << to_string(s);
  }
}

TEST(Experiment, SingleScaleTrailsIsn) {
  SyntheticConfig cfg;
  cfg.num_images = 100;
  const auto ds = generate_dataset(cfg, 13);
  const auto pyramid = PyramidSpec::defaults();
  const auto isn =
      run_experiment(ds, pyramid, ScaleRange{16, 560}, DetectorProfile{}, Strategy::isn());
  const auto single = run_experiment(ds, pyramid, ScaleRange{16, 560}, DetectorProfile{},
                                     Strategy::single_scale(1.0));
  EXPECT_LE(single.ap, isn.ap);
}

}  // namespace
}  // namespace isn
