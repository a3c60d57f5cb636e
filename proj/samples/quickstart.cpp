// Small tour of the library: partition, fuse, evaluate, search.

#include <cstdio>

#include "isn/isn.hpp"

int main() {
  using namespace isn;

  const auto pyramid = PyramidSpec::defaults();
  const ScaleRange range{16, 560};

  // An 8px object is only trained at the two largest scaling factors.
  const std::vector<Instance> tiny{{BBox(10, 10, 8, 8), 1, false, 1, 1}};
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    const auto p = isn_partition(tiny, pyramid[i], range, static_cast<int>(i));
    std::printf("omega %-5g scale %-5g %s\n", pyramid[i], instance_scale(tiny[0].bbox, pyramid[i]),
                p.valid.empty() ? "ignored" : "valid");
  }

  // Synthetic dataset, simulated pyramid detections, two fusion strategies.
  SyntheticConfig data;
  data.num_images = 100;
  const auto ds = generate_dataset(data, 1);
  DetectorProfile profile;
  profile.seed = 1;
  const auto simulated = simulate_detections(ds, pyramid, profile);
  const auto cats = ds.category_ids();
  for (const auto& strategy : {Strategy::isn(), Strategy::naive_ms()}) {
    const auto dets = fuse_with_strategy(simulated, range, strategy, {});
    const auto r = evaluate(ds.instances, dets, EvalConfig{}, cats);
    std::printf("%-9s AP %.3f  AP50 %.3f  AR %.3f\n", to_string(strategy).c_str(), r.ap, r.ap50,
                r.ar);
  }

  // Range search against recorded measurements.
  auto oracle = ApOracle::lookup_ap(reference_range_table());
  const auto found = greedy_range_search(SearchSpace{}, oracle);
  for (const auto& t : found.trace) {
    std::printf("probe %-10s AP %.1f\n", to_string(t.range).c_str(), t.ap);
  }
  std::printf("selected %s with AP %.1f\n", to_string(found.best).c_str(), found.best_ap);
  return 0;
}
