#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/core/model.hpp"

namespace apprisk::stats {

inline constexpr double kDefaultLevel = 0.95;
inline constexpr std::size_t kDefaultWindow = 7;

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 for a singleton
  double median = 0.0;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = kDefaultLevel;
  double t_critical = 0.0;

  double center() const { return 0.5 * (lower + upper); }
  double width() const { return upper - lower; }
  /// Strict exclusion: a value sitting on either bound is inside.
  bool excludes(double x) const { return x < lower || x > upper; }
};

enum class ThresholdMethod { MeanThreshold, MedianThreshold, ConfidenceInterval };
enum class Direction { Above, Below };

std::string_view to_string(ThresholdMethod m);
ThresholdMethod threshold_method_from_string(std::string_view s);
std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

struct CategoryBaseline {
  std::string app_category;  // "*" applies to every category without its own row
  std::string dimension;
  ThresholdMethod method = ThresholdMethod::MeanThreshold;
  double threshold = 0.0;  // mean/median methods
  Direction direction = Direction::Above;
  double level = kDefaultLevel;        // confidence_interval method
  std::size_t window = kDefaultWindow;  // confidence_interval method
  std::string indicator;  // canonical token attached to evidence
  std::string label;      // human phrase used in evidence summaries
};

SampleStats compute_sample_stats(std::span<const double> samples);

/// Two-sided Student-t critical value t_{alpha/2, df} for confidence `level`.
double t_critical(double level, double degrees_of_freedom);

ConfidenceInterval compute_confidence_interval(const SampleStats& stats, double level = kDefaultLevel);

struct OutlierVerdict {
  bool is_outlier = false;
  ConfidenceInterval interval;
};

OutlierVerdict flag_ci_outlier(double current, std::span<const double> history,
                               double level = kDefaultLevel);

struct AnomalyVerdict {
  bool is_anomaly = false;
  double value = 0.0;
  double threshold = 0.0;
  Direction direction = Direction::Above;
  ThresholdMethod method = ThresholdMethod::MeanThreshold;
  std::string app_category;
  std::string dimension;
};

/// Strict comparison: value == threshold is never anomalous.
AnomalyVerdict flag_baseline_anomaly(double value, const CategoryBaseline& baseline);

struct AnomalyPoint {
  std::size_t index = 0;
  std::int64_t t = 0;
  double value = 0.0;
  double previous = 0.0;
  ConfidenceInterval interval;
};

/// Flags every point after the first `window` that falls outside the CI of the
/// trailing `window` points. Requires series.size() > window >= 2.
std::vector<AnomalyPoint> detect_temporal_fluctuation(const Series& series,
                                                      std::size_t window = kDefaultWindow,
                                                      double level = kDefaultLevel);

/// Offline helper: threshold = multiplier * (mean | median) of a category sample.
CategoryBaseline derive_baseline(std::string app_category, std::string dimension,
                                 std::span<const double> samples, ThresholdMethod method,
                                 double multiplier, Direction direction = Direction::Above);

class BaselineTable {
 public:
  BaselineTable() = default;
  explicit BaselineTable(std::vector<CategoryBaseline> rows);

  static BaselineTable from_json(const json& doc);
  static BaselineTable load(const std::string& path);

  /// Exact category match first, then the "*" row.
  const CategoryBaseline* lookup(std::string_view app_category, std::string_view dimension) const;
  const std::vector<CategoryBaseline>& rows() const { return rows_; }

 private:
  std::vector<CategoryBaseline> rows_;
};

}  // namespace apprisk::stats
