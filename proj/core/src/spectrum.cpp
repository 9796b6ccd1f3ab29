#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>

#include "tsvat/error.hpp"
#include "tsvat/series.hpp"

namespace tsvat::ts {
namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> magnitude_spectrum(std::vector<double> samples) {
  const int n = static_cast<int>(samples.size());
  const int bins = n / 2 + 1;
  std::vector<fftw_complex> spectrum(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, samples.data(), spectrum.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  std::vector<double> mags(static_cast<std::size_t>(bins));
  for (int j = 0; j < bins; ++j) mags[j] = std::hypot(spectrum[j][0], spectrum[j][1]);
  return mags;
}

}  // namespace

std::vector<Index> dominant_window_sizes(const TimeSeries& series, Index k, Index min_size,
                                         Index max_size) {
  const Index T = series.length();
  require(T >= 4, ErrorCode::InvalidConfig, "dominant window sizes need T >= 4");
  require(k >= 1, ErrorCode::InvalidConfig, "k must be positive");
  require(min_size >= 2, ErrorCode::InvalidConfig, "min_size must be >= 2");
  require(max_size <= T / 2, ErrorCode::InvalidConfig, "max_size must be <= T/2");

  std::vector<double> centered(static_cast<std::size_t>(T));
  const double mean = series.values.col(0).mean();
  for (Index t = 0; t < T; ++t) centered[t] = series.values(t, 0) - mean;
  const auto mags = magnitude_spectrum(std::move(centered));

  std::vector<Index> bins(static_cast<std::size_t>(T / 2));
  std::iota(bins.begin(), bins.end(), Index{1});
  std::stable_sort(bins.begin(), bins.end(),
                   [&](Index a, Index b) { return mags[a] > mags[b]; });

  std::vector<Index> sizes;
  std::set<Index> seen;
  for (const Index j : bins) {
    if (static_cast<Index>(sizes.size()) == k) break;
    const auto period = static_cast<Index>(std::lround(static_cast<double>(T) / j));
    if (period < min_size || period > max_size || !seen.insert(period).second) continue;
    sizes.push_back(period);
  }
  require(!sizes.empty(), ErrorCode::NoDominantPeriod,
          "no spectral period within [" + std::to_string(min_size) + ", " +
              std::to_string(max_size) + "]");
  return sizes;
}

}  // namespace tsvat::ts
