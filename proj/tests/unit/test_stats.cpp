#include <doctest.h>

#include <cmath>
#include <random>

#include "apprisk/stats/stats.hpp"

using namespace apprisk;
using namespace apprisk::stats;

namespace {

// Independent oracle: Student-t density integrated with composite Simpson, inverted by bisection.
double t_pdf(double x, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  return c * std::pow(1 + x * x / df, -(df + 1) / 2);
}

double t_cdf_upper_half(double t, double df) {
  const int n = 20000;
  const double h = t / n;
  double s = t_pdf(0, df) + t_pdf(t, df);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * t_pdf(i * h, df);
  return 0.5 + s * h / 3;
}

double t_quantile_oracle(double p, double df) {
  double lo = 0, hi = 100;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf_upper_half(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("t critical values match the numeric oracle") {
  for (double df : {2.0, 5.0, 10.0, 30.0}) {
    for (double level : {0.90, 0.95, 0.99}) {
      CAPTURE(df);
      CAPTURE(level);
      CHECK(t_critical(level, df) == doctest::Approx(t_quantile_oracle(0.5 + level / 2, df)).epsilon(1e-6));
    }
  }
}

TEST_CASE("t critical values match printed tables") {
  CHECK(t_critical(0.95, 2) == doctest::Approx(4.302653).epsilon(1e-6));
  CHECK(t_critical(0.95, 5) == doctest::Approx(2.570582).epsilon(1e-6));
  CHECK(t_critical(0.95, 10) == doctest::Approx(2.228139).epsilon(1e-6));
  CHECK(t_critical(0.95, 30) == doctest::Approx(2.042272).epsilon(1e-6));
}

TEST_CASE("sample stats") {
  const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  const auto s = compute_sample_stats(xs);
  CHECK(s.n == 8);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.std == doctest::Approx(std::sqrt(32.0 / 7)));
  CHECK(s.median == doctest::Approx(4.5));
  CHECK(compute_sample_stats(std::vector<double>{3}).std == 0.0);
  CHECK_THROWS(compute_sample_stats(std::vector<double>{}));
}

TEST_CASE("interval arithmetic") {
  SampleStats s{7, 10.0, 2.0, 10.0};
  const auto ci = compute_confidence_interval(s, 0.95);
  const double t = t_quantile_oracle(0.975, 6);
  CHECK(ci.lower == doctest::Approx(10.0 - t * 2.0 / std::sqrt(7.0)).epsilon(1e-9));
  CHECK(ci.upper == doctest::Approx(10.0 + t * 2.0 / std::sqrt(7.0)).epsilon(1e-9));
  CHECK(ci.center() == doctest::Approx(10.0));
  CHECK_FALSE(ci.excludes(ci.upper));
  CHECK(ci.excludes(ci.upper + 1e-9));
}

TEST_CASE("width shrinks as one over root n once t is factored out") {
  for (std::size_t n : {3u, 8u, 31u, 200u}) {
    const auto ci = compute_confidence_interval(SampleStats{n, 0.0, 1.5, 0.0}, 0.95);
    CHECK(ci.width() / ci.t_critical * std::sqrt(static_cast<double>(n)) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("temporal fluctuation flags the launch jump") {
  Series s;
  const double v[] = {2400, 2455, 2380, 2510, 2430, 2490, 2469, 3084};
  for (int i = 0; i < 8; ++i) s.push_back({1733011200 + i * 86400, v[i]});
  const auto points = detect_temporal_fluctuation(s, 7, 0.95);
  REQUIRE(points.size() == 1);
  CHECK(points[0].index == 7);
  CHECK(points[0].previous == 2469);
  CHECK(points[0].value == 3084);
  CHECK_THROWS(detect_temporal_fluctuation(Series(s.begin(), s.begin() + 7), 7, 0.95));
}

TEST_CASE("a point at the trailing mean is never an outlier") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> hist;
    for (int i = 0; i < 7; ++i) hist.push_back(1000 + u(rng));
    const double mean = compute_sample_stats(hist).mean;
    CHECK_FALSE(flag_ci_outlier(mean, hist).is_outlier);
  }
}

TEST_CASE("baseline comparison is strict") {
  CategoryBaseline b{"*", "popup_count", ThresholdMethod::MeanThreshold, 5.0, Direction::Above};
  CHECK_FALSE(flag_baseline_anomaly(5.0, b).is_anomaly);
  CHECK(flag_baseline_anomaly(5.01, b).is_anomaly);
  b.direction = Direction::Below;
  CHECK(flag_baseline_anomaly(4.0, b).is_anomaly);
  b.method = ThresholdMethod::ConfidenceInterval;
  CHECK_THROWS(flag_baseline_anomaly(1.0, b));
}

TEST_CASE("baseline table prefers the category row") {
  BaselineTable t({{"*", "popup_count", ThresholdMethod::MeanThreshold, 5.0},
                   {"Games", "popup_count", ThresholdMethod::MeanThreshold, 12.0}});
  CHECK(t.lookup("Games", "popup_count")->threshold == 12.0);
  CHECK(t.lookup("Tools", "popup_count")->threshold == 5.0);
  CHECK(t.lookup("Tools", "rating") == nullptr);
}

TEST_CASE("derived baselines") {
  const std::vector<double> xs{1, 2, 3, 10};
  CHECK(derive_baseline("*", "d", xs, ThresholdMethod::MeanThreshold, 2.0).threshold == doctest::Approx(8.0));
  CHECK(derive_baseline("*", "d", xs, ThresholdMethod::MedianThreshold, 2.0).threshold == doctest::Approx(5.0));
  CHECK_THROWS(derive_baseline("*", "d", xs, ThresholdMethod::ConfidenceInterval, 1.0));
}
