#pragma once

/// @file search.hpp
/// Greedy alternating search over (lower, upper) scale-range candidates.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "isn/core.hpp"
#include "isn/eval.hpp"

namespace isn {

struct SearchSpace {
  std::vector<double> lower_candidates{0.0, 16.0, 32.0};
  std::vector<double> upper_candidates{320.0, 496.0, 560.0, 640.0};
  ScaleRange initial{0.0, 640.0};

  void validate() const {
    auto check = [](const std::vector<double>& c, const char* what) {
      if (c.empty()) throw InvariantError(std::string("search space: empty ") + what);
      if (!std::is_sorted(c.begin(), c.end()) ||
          std::adjacent_find(c.begin(), c.end()) != c.end()) {
        throw InvariantError(std::string("search space: ") + what +
                             " must be strictly ascending");
      }
    };
    check(lower_candidates, "lower candidates");
    check(upper_candidates, "upper candidates");
    if (std::find(lower_candidates.begin(), lower_candidates.end(), initial.lower()) ==
            lower_candidates.end() ||
        std::find(upper_candidates.begin(), upper_candidates.end(), initial.upper()) ==
            upper_candidates.end()) {
      throw InvariantError("search space: initial range must be on the candidate grid");
    }
  }
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Memoizing map from a scale range to its evaluation. Each distinct range is
/// forwarded to the underlying function at most once.
class ApOracle {
 public:
  using Function = std::function<EvalResult(const ScaleRange&)>;

  explicit ApOracle(Function fn) : fn_(std::move(fn)) {}

  /// Oracle backed by precomputed results; unknown ranges raise OracleError.
  static ApOracle lookup(std::map<ScaleRange, EvalResult> table) {
    return ApOracle([table = std::move(table)](const ScaleRange& r) {
      const auto it = table.find(r);
      if (it == table.end()) {
        throw OracleError("no metrics recorded for range " + to_string(r));
      }
      return it->second;
    });
  }

  /// Convenience for AP-only tables.
  static ApOracle lookup_ap(const std::vector<std::pair<ScaleRange, double>>& rows) {
    std::map<ScaleRange, EvalResult> table;
    for (const auto& [range, ap] : rows) {
      EvalResult r;
      r.ap = ap;
      table.emplace(range, r);
    }
    return lookup(std::move(table));
  }

  const EvalResult& query(const ScaleRange& r) {
    const auto it = memo_.find(r);
    if (it != memo_.end()) return it->second;
    return memo_.emplace(r, fn_(r)).first->second;
  }

  bool cached(const ScaleRange& r) const { return memo_.contains(r); }
  std::size_t calls() const { return memo_.size(); }

 private:
  Function fn_;
  std::map<ScaleRange, EvalResult> memo_;
};

struct TraceEntry {
  ScaleRange range;
  double ap = 0.0;
};

struct SearchResult {
  ScaleRange best;
  double best_ap = 0.0;
  std::vector<TraceEntry> trace;  // first-probe order, one entry per range
};

/// Raised when the oracle fails mid-search; carries everything probed so far.
class SearchAborted : public std::runtime_error {
 public:
  SearchAborted(const std::string& what, std::vector<TraceEntry> partial)
      : std::runtime_error(what), partial_trace(std::move(partial)) {}
  std::vector<TraceEntry> partial_trace;
};

enum class SweepPolicy {
  /// After a bound has moved, later sweeps only probe candidates on the side
  /// it moved towards (plus its current value).
  kDirectional,
  /// Every sweep probes every candidate.
  kFull,
};

/// Alternating coordinate ascent on AP.
///
/// Holding the upper bound, sweep the lower candidates and keep the best;
/// then hold the lower bound and sweep the upper candidates. Repeat until a
/// full alternation leaves the range unchanged. A bound only moves on a
/// strict improvement; among equal non-current winners the smaller lower
/// bound / larger upper bound is kept. Candidate pairs with lower >= upper
/// are skipped.
inline SearchResult greedy_range_search(const SearchSpace& space, ApOracle& oracle,
                                        SweepPolicy policy = SweepPolicy::kDirectional) {
  space.validate();
  std::vector<TraceEntry> trace;
  auto probe = [&](const ScaleRange& r) {
    const bool fresh = !oracle.cached(r);
    double ap = 0.0;
    try {
      ap = oracle.query(r).ap;
    } catch (const std::exception& e) {
      throw SearchAborted(std::string("oracle failed on ") + to_string(r) + ": " + e.what(),
                          trace);
    }
    if (fresh) trace.push_back({r, ap});
    return ap;
  };

  double lower = space.initial.lower();
  double upper = space.initial.upper();
  int lower_dir = 0;
  int upper_dir = 0;
  double current_ap = probe(space.initial);

  // Returns the winning candidate for one coordinate. prefer_low selects the
  // tie-break among equal non-current candidates.
  auto sweep = [&](const std::vector<double>& candidates, double current, int dir,
                   bool prefer_low, auto make_range) {
    double best = current;
    double best_ap = current_ap;
    for (double c : candidates) {
      if (c == current) continue;
      if (policy == SweepPolicy::kDirectional && dir != 0 &&
          (c - current) * dir < 0) {
        continue;
      }
      const auto range = make_range(c);
      if (!range) continue;
      const double ap = probe(*range);
      const bool better = ap > best_ap;
      const bool tie_wins = ap == best_ap && best != current &&
                            (prefer_low ? c < best : c > best);
      if (better || tie_wins) {
        best = c;
        best_ap = ap;
      }
    }
    return std::pair{best, best_ap};
  };

  auto pair_range = [](double lo, double hi) -> std::optional<ScaleRange> {
    if (!(lo < hi)) return std::nullopt;
    return ScaleRange{lo, hi};
  };

  while (true) {
    bool changed = false;

    const auto [new_lower, lower_ap] =
        sweep(space.lower_candidates, lower, lower_dir, true,
              [&](double c) { return pair_range(c, upper); });
    if (new_lower != lower) {
      lower_dir = new_lower > lower ? 1 : -1;
      lower = new_lower;
      current_ap = lower_ap;
      changed = true;
    }

    const auto [new_upper, upper_ap] =
        sweep(space.upper_candidates, upper, upper_dir, false,
              [&](double c) { return pair_range(lower, c); });
    if (new_upper != upper) {
      upper_dir = new_upper > upper ? 1 : -1;
      upper = new_upper;
      current_ap = upper_ap;
      changed = true;
    }

    if (!changed) break;
  }
  return {ScaleRange{lower, upper}, current_ap, std::move(trace)};
}

/// Seven recorded (range, AP) measurements; greedy search over them selects [16, 560].
inline std::vector<std::pair<ScaleRange, double>> reference_range_table() {
  return {{{0, 640}, 37.4},  {{16, 640}, 38.2}, {{32, 640}, 38.1},
          {{16, 560}, 38.7}, {{16, 496}, 37.9}, {{16, 320}, 37.2},
          {{32, 560}, 38.4}};
}

}  // namespace isn
