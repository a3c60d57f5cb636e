// Command-line front end: partition, analyze-snip, fuse, eval, search,
// simulate, stage-hist. Every subcommand takes --config, --seed and --out;
// outputs land in the --out directory together with the effective config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "isn/isn.hpp"

namespace fs = std::filesystem;
using isn::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "isn_out";
  std::string omegas;
  std::string isn_range;
  std::vector<std::string> overrides;  // key.path=json
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--seed", opts.seed, "Random seed");
  cmd->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--omegas", opts.omegas, "Scaling factors, e.g. 4,2,1,0.5,0.25");
  cmd->add_option("--isn-range", opts.isn_range, "Scale range lo,hi (hi may be inf)");
  cmd->add_option("--set", opts.overrides,
                  "Override any config key: dotted.path=<json value>");
}

/// Builds `{"a": {"b": value}}` from "a.b=value".
json override_document(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw isn::ParseError("--set '" + assignment + "': expected key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings such as method names
  }
  std::vector<std::string> keys;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json doc = value;
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
    json wrapper = json::object();
    wrapper[*it] = std::move(doc);
    doc = std::move(wrapper);
  }
  return doc;
}

isn::AppConfig effective_config(const CommonOptions& opts) {
  isn::AppConfig cfg;
  if (!opts.config_path.empty()) isn::merge_config(cfg, isn::read_json_file(opts.config_path));
  for (const auto& assignment : opts.overrides) {
    isn::merge_config(cfg, override_document(assignment));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.omegas.empty()) {
    try {
      cfg.pyramid = isn::PyramidSpec(isn::parse_number_list(opts.omegas));
    } catch (const isn::InvariantError& e) {
      throw isn::ParseError(std::string("--omegas: ") + e.what());
    }
  }
  if (!opts.isn_range.empty()) cfg.isn_range = isn::parse_range_arg(opts.isn_range);
  cfg.profile.seed = cfg.seed;
  return cfg;
}

class Output {
 public:
  Output(const std::string& dir, const isn::AppConfig& cfg)
      : dir_(dir), config_(isn::config_to_json(cfg)) {
    write("config.json", isn::dump_json(config_));
  }

  const json& config() const { return config_; }

  void write(const std::string& name, const std::string& content) const {
    isn::write_file_atomic(dir_ / name, content);
  }

  /// Object report with the effective config attached.
  void write_report(const std::string& name, json body) const {
    json doc;
    doc["config"] = config_;
    for (auto& [k, v] : body.items()) doc[k] = std::move(v);
    write(name, isn::dump_json(doc));
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
  json config_;
};

std::vector<std::int64_t> sorted_ids(const std::vector<isn::Instance>& v) {
  std::vector<std::int64_t> ids;
  for (const auto& i : v) ids.push_back(i.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- subcommands -----------------------------------------------------------

int run_partition(const CommonOptions& opts, const std::string& annotations,
                  const std::string& policy) {
  const auto cfg = effective_config(opts);
  const auto ds = isn::ingest_annotations(annotations);
  Output out(opts.out_dir, cfg);
  json levels = json::array();
  if (policy == "isn") {
    for (std::size_t i = 0; i < cfg.pyramid.size(); ++i) {
      const auto p = isn::isn_partition(ds.instances, cfg.pyramid[i], cfg.isn_range,
                                        static_cast<int>(i));
      levels.push_back({{"resolution_index", i},
                        {"omega", cfg.pyramid[i]},
                        {"valid_count", p.valid.size()},
                        {"ignored_count", p.ignored.size()},
                        {"valid_ids", sorted_ids(p.valid)},
                        {"ignored_ids", sorted_ids(p.ignored)}});
    }
  } else {
    for (std::size_t i = 0; i < cfg.snip_table.size(); ++i) {
      const auto& e = cfg.snip_table.entries()[i];
      const auto p = isn::snip_partition(ds.instances, static_cast<int>(i), cfg.snip_table);
      levels.push_back({{"resolution_index", i},
                        {"resolution", json::array({e.height, e.width})},
                        {"range", json::array({isn::bound_to_json(e.lower),
                                               isn::bound_to_json(e.upper)})},
                        {"valid_count", p.valid.size()},
                        {"ignored_count", p.ignored.size()},
                        {"valid_ids", sorted_ids(p.valid)},
                        {"ignored_ids", sorted_ids(p.ignored)}});
    }
  }
  out.write_report("partition.json", {{"policy", policy}, {"resolutions", std::move(levels)}});
  return 0;
}

int run_analyze_snip(const CommonOptions& opts, const std::string& annotations,
                     std::size_t population, double median, double log_sigma) {
  const auto cfg = effective_config(opts);
  const auto ds = annotations.empty()
                      ? isn::generate_lognormal_population(population, median, log_sigma,
                                                           cfg.seed)
                      : isn::ingest_annotations(annotations);
  Output out(opts.out_dir, cfg);

  const isn::SamplingPolicy isn_policy = isn::IsnPolicy{cfg.pyramid, cfg.isn_range};
  const isn::SamplingPolicy snip_policy = isn::SnipPolicy{cfg.snip_table};
  const auto isn_dist = isn::resized_scale_distributions(ds, isn_policy);
  const auto snip_dist = isn::resized_scale_distributions(ds, snip_policy);

  std::string csv = "policy,bin_lo,bin_hi,trained,ignored\n";
  auto rows = [&csv](const char* name, const isn::ScaleDistributions& d) {
    using isn::format_number;
    const auto& e = d.trained.edges;
    csv += std::string(name) + ",0," + format_number(e.front()) + "," +
           format_number(d.trained.underflow) + "," + format_number(d.ignored.underflow) + "\n";
    for (std::size_t i = 0; i < d.trained.mass.size(); ++i) {
      csv += std::string(name) + "," + format_number(e[i]) + "," + format_number(e[i + 1]) +
             "," + format_number(d.trained.mass[i]) + "," + format_number(d.ignored.mass[i]) +
             "\n";
    }
    csv += std::string(name) + "," + format_number(e.back()) + ",inf," +
           format_number(d.trained.overflow) + "," + format_number(d.ignored.overflow) + "\n";
  };
  rows("isn", isn_dist);
  rows("snip", snip_dist);
  out.write("analyze_snip.csv", csv);

  auto section = [](const isn::ScaleDistributions& d) {
    return json{{"overlap", isn::consistency_overlap(d.trained, d.ignored)},
                {"trained", isn::histogram_to_json(d.trained)},
                {"ignored", isn::histogram_to_json(d.ignored)}};
  };
  out.write_report("analyze_snip.json",
                   {{"instances", ds.instances.size()},
                    {"isn", section(isn_dist)},
                    {"snip", section(snip_dist)}});
  return 0;
}

std::vector<isn::Detection> fuse_records(const isn::AppConfig& cfg,
                                         const std::vector<isn::TaggedDetection>& records,
                                         const std::string& strategy) {
  const auto range = strategy == "naive" ? isn::ScaleRange::unbounded() : cfg.isn_range;
  std::vector<isn::Detection> fused;
  for (const auto& [image, levels] : isn::group_by_resolution(records)) {
    auto dets = isn::fuse_multiscale(levels, range, cfg.soft_nms);
    fused.insert(fused.end(), dets.begin(), dets.end());
  }
  return fused;
}

int run_fuse(const CommonOptions& opts, const std::vector<std::string>& det_paths,
             const std::string& strategy) {
  const auto cfg = effective_config(opts);
  std::vector<isn::TaggedDetection> records;
  for (const auto& p : det_paths) {
    auto part = isn::read_detections(p);
    records.insert(records.end(), part.begin(), part.end());
  }
  Output out(opts.out_dir, cfg);
  const auto fused = fuse_records(cfg, records, strategy);
  out.write("fused.json", isn::dump_json(isn::detections_to_json(fused)));
  return 0;
}

int run_eval(const CommonOptions& opts, const std::string& annotations,
             const std::string& det_path, const std::string& scale_range) {
  auto cfg = effective_config(opts);
  const auto ds = isn::ingest_annotations(annotations);
  std::vector<isn::Detection> dets;
  for (const auto& r : isn::read_detections(det_path)) {
    if (r.omega && *r.omega != 1.0) {
      throw isn::ParseError(det_path +
                            ": eval expects original-image results; run 'fuse' on pyramid dumps");
    }
    dets.push_back(r.detection);
  }
  std::optional<isn::ScaleRange> restriction = cfg.eval.scale_restriction;
  if (!scale_range.empty()) restriction = isn::parse_range_arg(scale_range);
  cfg.eval.scale_restriction.reset();
  Output out(opts.out_dir, cfg);
  const auto categories = ds.category_ids();

  if (restriction) {
    const auto rep =
        isn::ap_by_scale_report(ds.instances, dets, cfg.eval, *restriction, categories);
    out.write_report("eval.json", {{"result", isn::eval_result_to_json(rep.unrestricted)},
                                   {"scale_range", isn::range_to_json(*restriction)},
                                   {"restricted", isn::eval_result_to_json(rep.restricted)}});
    out.write("eval.csv", isn::kEvalCsvHeader + isn::eval_result_csv_rows(rep.unrestricted) +
                              isn::eval_result_csv_rows(rep.restricted, "restricted_"));
  } else {
    const auto res = isn::evaluate(ds.instances, dets, cfg.eval, categories);
    out.write_report("eval.json", {{"result", isn::eval_result_to_json(res)}});
    out.write("eval.csv", isn::eval_result_to_csv(res));
  }
  return 0;
}

int run_search(const CommonOptions& opts, const std::string& metrics, bool simulate) {
  const auto cfg = effective_config(opts);
  if (metrics.empty() == !simulate) {
    throw isn::ParseError("search: pass exactly one of --metrics or --simulate");
  }
  std::optional<isn::ApOracle> oracle;
  isn::Dataset ds;
  if (simulate) {
    ds = isn::generate_dataset(cfg.synthetic, cfg.seed);
    const auto simulated = isn::simulate_detections(ds, cfg.pyramid, cfg.profile);
    const auto categories = ds.category_ids();
    oracle.emplace([&, simulated, categories](const isn::ScaleRange& range) {
      const auto dets =
          isn::fuse_with_strategy(simulated, range, isn::Strategy::isn(), cfg.soft_nms);
      return isn::evaluate(ds.instances, dets, cfg.eval, categories);
    });
  } else {
    oracle.emplace(isn::ApOracle::lookup(isn::parse_metrics_table(isn::read_json_file(metrics))));
  }
  Output out(opts.out_dir, cfg);
  try {
    const auto result = isn::greedy_range_search(cfg.search, *oracle, cfg.sweep);
    out.write_report("search.json", isn::search_result_to_json(result));
    std::cout << isn::to_string(result.best) << " " << isn::format_number(result.best_ap)
              << "\n";
  } catch (const isn::SearchAborted& e) {
    json partial = json::array();
    for (const auto& t : e.partial_trace) {
      partial.push_back({{"range", isn::range_to_json(t.range)}, {"ap", t.ap}});
    }
    out.write_report("search.json", {{"aborted", e.what()}, {"trace", std::move(partial)}});
    throw;
  }
  return 0;
}

int run_simulate(const CommonOptions& opts) {
  const auto cfg = effective_config(opts);
  const auto ds = isn::generate_dataset(cfg.synthetic, cfg.seed);
  const auto simulated = isn::simulate_detections(ds, cfg.pyramid, cfg.profile);
  Output out(opts.out_dir, cfg);
  out.write("annotations.json", isn::dump_json(isn::annotations_to_json(ds)));
  out.write("detections.json", isn::dump_json(isn::simulated_to_json(simulated)));
  return 0;
}

int run_stage_hist(const CommonOptions& opts, const std::string& annotations) {
  const auto cfg = effective_config(opts);
  const auto ds = isn::ingest_annotations(annotations);
  Output out(opts.out_dir, cfg);
  out.write("stage_hist.csv",
            isn::stage_histogram_to_csv(
                isn::stage_histogram(ds.instances, cfg.pyramid, cfg.isn_range, cfg.fpn)));
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance scale normalization toolkit"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string annotations;
  std::string policy = "isn";
  std::vector<std::string> det_paths;
  std::string det_path;
  std::string strategy = "isn";
  std::string scale_range;
  std::string metrics;
  bool simulate = false;
  std::size_t population = 10000;
  double median = 64.0;
  double log_sigma = 1.0;

  auto* partition = app.add_subcommand("partition", "Valid/ignored instances per resolution");
  add_common(partition, opts);
  partition->add_option("--annotations", annotations, "COCO annotation JSON")->required();
  partition->add_option("--policy", policy, "isn or snip")
      ->check(CLI::IsMember({"isn", "snip"}))
      ->capture_default_str();

  auto* analyze = app.add_subcommand("analyze-snip",
                                     "Trained/ignored resized-scale histograms and overlap");
  add_common(analyze, opts);
  analyze->add_option("--annotations", annotations,
                      "COCO annotation JSON (default: synthetic log-normal population)");
  analyze->add_option("--population", population, "Synthetic population size")
      ->capture_default_str();
  analyze->add_option("--median-scale", median, "Synthetic median scale")->capture_default_str();
  analyze->add_option("--log-sigma", log_sigma, "Synthetic log-scale std")->capture_default_str();

  auto* fuse = app.add_subcommand("fuse", "Gate and fuse per-resolution detection dumps");
  add_common(fuse, opts);
  fuse->add_option("--dets", det_paths, "Pyramid detection dump(s)")->required();
  fuse->add_option("--strategy", strategy, "isn (range-gated) or naive (no gate)")
      ->check(CLI::IsMember({"isn", "naive"}))
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "COCO-style evaluation");
  add_common(eval, opts);
  eval->add_option("--annotations", annotations, "COCO annotation JSON")->required();
  eval->add_option("--dets", det_path, "COCO results JSON")->required();
  eval->add_option("--scale-range", scale_range, "Also report AP on GT within lo,hi");

  auto* search = app.add_subcommand("search", "Greedy scale-range search");
  add_common(search, opts);
  search->add_option("--metrics", metrics, "Lookup file [{range, ap, ...}]");
  search->add_flag("--simulate", simulate, "Evaluate ranges with the synthetic detector");

  auto* sim = app.add_subcommand("simulate", "Synthetic dataset and pyramid detections");
  add_common(sim, opts);

  auto* stage = app.add_subcommand("stage-hist", "FPN level histogram of valid samples");
  add_common(stage, opts);
  stage->add_option("--annotations", annotations, "COCO annotation JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    std::cout << app.help();
    return 2;
  }

  try {
    if (*partition) return run_partition(opts, annotations, policy);
    if (*analyze) return run_analyze_snip(opts, annotations, population, median, log_sigma);
    if (*fuse) return run_fuse(opts, det_paths, strategy);
    if (*eval) return run_eval(opts, annotations, det_path, scale_range);
    if (*search) return run_search(opts, metrics, simulate);
    if (*sim) return run_simulate(opts);
    if (*stage) return run_stage_hist(opts, annotations);
  } catch (const isn::ParseError& e) {
    std::cerr << "error: input: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const isn::SearchAborted& e) {
    std::cerr << "error: search: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const isn::EvalError& e) {
    std::cerr << "error: eval: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const isn::InvariantError& e) {
    std::cerr << "error: invalid: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
