#include "apprisk/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace apprisk::stats {

std::string_view to_string(ThresholdMethod m) {
  switch (m) {
    case ThresholdMethod::MeanThreshold: return "mean_threshold";
    case ThresholdMethod::MedianThreshold: return "median_threshold";
    case ThresholdMethod::ConfidenceInterval: return "confidence_interval";
  }
  return "?";
}

ThresholdMethod threshold_method_from_string(std::string_view s) {
  if (s == "mean_threshold") return ThresholdMethod::MeanThreshold;
  if (s == "median_threshold") return ThresholdMethod::MedianThreshold;
  if (s == "confidence_interval") return ThresholdMethod::ConfidenceInterval;
  throw Error("unknown threshold method '" + std::string(s) + "'");
}

std::string_view to_string(Direction d) { return d == Direction::Above ? "above" : "below"; }

Direction direction_from_string(std::string_view s) {
  if (s == "above") return Direction::Above;
  if (s == "below") return Direction::Below;
  throw Error("unknown direction '" + std::string(s) + "'");
}

SampleStats compute_sample_stats(std::span<const double> samples) {
  if (samples.empty()) throw Error("no samples");

  SampleStats out;
  out.n = samples.size();

  const bool constant = std::all_of(samples.begin(), samples.end(),
                                    [&](double x) { return x == samples.front(); });
  if (constant) {
    out.mean = out.median = samples.front();
    return out;
  }

  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(out.n - 1));
  }

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = out.n / 2;
  out.median = out.n % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return out;
}

double t_critical(double level, double degrees_of_freedom) {
  if (!(level > 0.0 && level < 1.0)) throw Error("confidence level must be in (0, 1)");
  if (!(degrees_of_freedom > 0.0)) throw Error("degrees of freedom must be positive");
  const boost::math::students_t dist(degrees_of_freedom);
  return boost::math::quantile(dist, 1.0 - (1.0 - level) / 2.0);
}

ConfidenceInterval compute_confidence_interval(const SampleStats& stats, double level) {
  if (stats.n < 2) throw Error("insufficient samples for interval");
  ConfidenceInterval ci;
  ci.level = level;
  ci.t_critical = t_critical(level, static_cast<double>(stats.n - 1));
  const double half = ci.t_critical * stats.std / std::sqrt(static_cast<double>(stats.n));
  ci.lower = stats.mean - half;
  ci.upper = stats.mean + half;
  return ci;
}

OutlierVerdict flag_ci_outlier(double current, std::span<const double> history, double level) {
  OutlierVerdict v;
  v.interval = compute_confidence_interval(compute_sample_stats(history), level);
  v.is_outlier = v.interval.excludes(current);
  return v;
}

AnomalyVerdict flag_baseline_anomaly(double value, const CategoryBaseline& baseline) {
  if (baseline.method == ThresholdMethod::ConfidenceInterval) {
    throw Error("baseline for '" + baseline.dimension +
                "' uses confidence_interval; threshold comparison needs mean or median method");
  }
  AnomalyVerdict v;
  v.value = value;
  v.threshold = baseline.threshold;
  v.direction = baseline.direction;
  v.method = baseline.method;
  v.app_category = baseline.app_category;
  v.dimension = baseline.dimension;
  v.is_anomaly = baseline.direction == Direction::Above ? value > baseline.threshold
                                                        : value < baseline.threshold;
  return v;
}

std::vector<AnomalyPoint> detect_temporal_fluctuation(const Series& series, std::size_t window,
                                                      double level) {
  if (window < 2) throw Error("temporal window must be at least 2");
  if (series.size() <= window) {
    throw Error("series too short: " + std::to_string(series.size()) +
                " points for window " + std::to_string(window));
  }
  std::vector<double> values;
  values.reserve(series.size());
  for (const auto& p : series) values.push_back(p.v);

  std::vector<AnomalyPoint> out;
  for (std::size_t i = window; i < values.size(); ++i) {
    const std::span<const double> trailing(values.data() + i - window, window);
    const auto verdict = flag_ci_outlier(values[i], trailing, level);
    if (verdict.is_outlier) {
      out.push_back({i, series[i].t, values[i], values[i - 1], verdict.interval});
    }
  }
  return out;
}

CategoryBaseline derive_baseline(std::string app_category, std::string dimension,
                                 std::span<const double> samples, ThresholdMethod method,
                                 double multiplier, Direction direction) {
  const auto s = compute_sample_stats(samples);
  CategoryBaseline b;
  b.app_category = std::move(app_category);
  b.dimension = std::move(dimension);
  b.method = method;
  b.direction = direction;
  switch (method) {
    case ThresholdMethod::MeanThreshold: b.threshold = multiplier * s.mean; break;
    case ThresholdMethod::MedianThreshold: b.threshold = multiplier * s.median; break;
    case ThresholdMethod::ConfidenceInterval:
      throw Error("derive_baseline builds threshold baselines only");
  }
  return b;
}

BaselineTable::BaselineTable(std::vector<CategoryBaseline> rows) : rows_(std::move(rows)) {}

BaselineTable BaselineTable::from_json(const json& doc) {
  const auto version = doc.value("schema_version", std::string{});
  if (version != "1") throw Error("unsupported baseline schema_version '" + version + "'");
  const double default_level = doc.value("default_level", kDefaultLevel);
  const std::size_t default_window = doc.value("default_window", kDefaultWindow);

  std::vector<CategoryBaseline> rows;
  for (const auto& r : doc.at("baselines")) {
    CategoryBaseline b;
    b.app_category = r.value("app_category", std::string("*"));
    b.dimension = r.at("dimension").get<std::string>();
    b.method = threshold_method_from_string(r.at("method").get<std::string>());
    b.threshold = r.value("threshold", 0.0);
    b.direction = direction_from_string(r.value("direction", std::string("above")));
    b.level = r.value("level", default_level);
    b.window = r.value("window", default_window);
    b.indicator = r.value("indicator", std::string{});
    b.label = r.value("label", b.dimension);
    if (b.method != ThresholdMethod::ConfidenceInterval && !r.contains("threshold")) {
      throw Error("baseline '" + b.dimension + "' needs a threshold");
    }
    if (!b.indicator.empty() && !is_canonical_indicator(b.indicator)) {
      throw Error("baseline '" + b.dimension + "' indicator is not canonical");
    }
    rows.push_back(std::move(b));
  }
  return BaselineTable(std::move(rows));
}

BaselineTable BaselineTable::load(const std::string& path) { return from_json(load_json_file(path)); }

const CategoryBaseline* BaselineTable::lookup(std::string_view app_category,
                                              std::string_view dimension) const {
  const CategoryBaseline* fallback = nullptr;
  for (const auto& b : rows_) {
    if (b.dimension != dimension) continue;
    if (b.app_category == app_category) return &b;
    if (b.app_category == "*" && !fallback) fallback = &b;
  }
  return fallback;
}

}  // namespace apprisk::stats
