#pragma once

#include <string>
#include <vector>

#include "holoslide/bitgrid.hpp"

namespace holoslide {

// 2|P&G| / (|P|+|G|); 1.0 when both masks are empty.
double dice(const BitGrid& pred, const BitGrid& gt);

// Same value computed by streaming the two run lists; no dense grids.
double wsi_dice(const RleMask& pred, const RleMask& gt);

struct DiceReport {
  enum class Mode { kPatch, kWsi } mode = Mode::kPatch;
  struct Item {
    std::string id;
    double dice;
  };
  std::vector<Item> per_item;
  double mean = 0.0;
};

DiceReport make_report(DiceReport::Mode mode, std::vector<DiceReport::Item> items);

struct WilcoxonResult {
  std::size_t n_effective = 0;  // pairs remaining after dropping zero diffs
  double w_statistic = 0.0;     // min(W+, W-)
  double p_value = 1.0;         // two-sided
  enum class Method { kExact, kNormalApprox } method = Method::kExact;
  bool degenerate = false;      // all differences were zero
};

// Signed-rank test on paired samples: zero differences dropped, tied |d|
// share average ranks, exact two-sided p over all sign assignments for
// n_effective <= 25, tie-corrected normal approximation with continuity
// correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs);

}  // namespace holoslide
