#include "holoslide/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace holoslide {

double dice(const BitGrid& pred, const BitGrid& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    fail(Errc::ShapeError, "dice shape mismatch");
  const std::uint64_t inter = pred.intersect_count(gt);
  const std::uint64_t p = pred.count(), g = gt.count();
  if (p + g == 0) return 1.0;
  return 2.0 * double(inter) / double(p + g);
}

double wsi_dice(const RleMask& pred, const RleMask& gt) {
  if (pred.level != gt.level) fail(Errc::BoundsError, "wsi_dice level mismatch");
  if (pred.width != gt.width || pred.height != gt.height)
    fail(Errc::BoundsError, "wsi_dice dims mismatch");
  // walk both run lists; intersection accumulates where both are foreground
  std::uint64_t inter = 0;
  std::size_t ia = 0, ib = 0;
  std::uint64_t ra = ia < pred.runs.size() ? pred.runs[ia] : 0;
  std::uint64_t rb = ib < gt.runs.size() ? gt.runs[ib] : 0;
  while (ia < pred.runs.size() && ib < gt.runs.size()) {
    if (ra == 0) {
      ++ia;
      ra = ia < pred.runs.size() ? pred.runs[ia] : 0;
      continue;
    }
    if (rb == 0) {
      ++ib;
      rb = ib < gt.runs.size() ? gt.runs[ib] : 0;
      continue;
    }
    const std::uint64_t step = std::min(ra, rb);
    const bool fa = (ia % 2) == 1, fb = (ib % 2) == 1;
    if (fa && fb) inter += step;
    ra -= step;
    rb -= step;
  }
  const std::uint64_t p = pred.foreground_count(), g = gt.foreground_count();
  if (p + g == 0) return 1.0;
  return 2.0 * double(inter) / double(p + g);
}

DiceReport make_report(DiceReport::Mode mode, std::vector<DiceReport::Item> items) {
  if (items.empty()) fail(Errc::InvalidInput, "empty dice report");
  DiceReport r;
  r.mode = mode;
  r.per_item = std::move(items);
  double s = 0.0;
  for (const auto& it : r.per_item) s += it.dice;
  r.mean = s / double(r.per_item.size());
  return r;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) fail(Errc::InvalidInput, "wilcoxon needs at least one pair");
  struct Diff {
    double mag;
    bool positive;
  };
  std::vector<Diff> diffs;
  for (const auto& [a, b] : pairs) {
    const double d = a - b;
    if (d != 0.0) diffs.push_back({std::fabs(d), d > 0.0});
  }
  WilcoxonResult res;
  res.n_effective = diffs.size();
  if (diffs.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }
  std::sort(diffs.begin(), diffs.end(), [](const Diff& x, const Diff& y) { return x.mag < y.mag; });

  const std::size_t n = diffs.size();
  // average ranks in half-units so tied ranks stay exact integers
  std::vector<std::uint64_t> rank2(n);
  std::vector<std::uint64_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && diffs[j].mag == diffs[i].mag) ++j;
    // ranks i+1 .. j share the average ((i+1) + j) / 2, i.e. (i+1+j) in halves
    const std::uint64_t avg2 = std::uint64_t(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank2[k] = avg2;
    tie_sizes.push_back(j - i);
    i = j;
  }

  std::uint64_t wplus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i].positive) wplus2 += rank2[i];
  }
  const std::uint64_t wminus2 = total2 - wplus2;
  const std::uint64_t wmin2 = std::min(wplus2, wminus2);
  res.w_statistic = double(wmin2) / 2.0;

  if (n <= 25) {
    res.method = WilcoxonResult::Method::kExact;
    // distribution of W+ (in half-units) over all 2^n sign assignments
    std::vector<std::uint64_t> counts(total2 + 1, 0);
    counts[0] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t r = rank2[i];
      for (std::size_t s = counts.size(); s-- > r;) counts[s] += counts[s - r];
    }
    std::uint64_t favored = 0;
    for (std::uint64_t s = 0; s <= total2; ++s)
      if (std::min(s, total2 - s) <= wmin2) favored += counts[s];
    res.p_value = double(favored) / std::ldexp(1.0, int(n));
  } else {
    res.method = WilcoxonResult::Method::kNormalApprox;
    const double nn = double(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (std::uint64_t t : tie_sizes)
      var -= double(t) * (double(t) * t - 1.0) / 48.0;
    const double w = res.w_statistic;
    const double z = (w - mu + 0.5) / std::sqrt(var);  // continuity toward the mean
    res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  }
  return res;
}

}  // namespace holoslide
