#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsvat/types.hpp"

namespace tsvat::ts {

/// Named, uniformly sampled, multichannel sequence stored as T x C.
struct TimeSeries {
  std::string name;
  Matrix values;
  std::optional<double> sample_period;
  std::vector<std::string> channel_names;

  Index length() const noexcept { return values.rows(); }
  Index channels() const noexcept { return values.cols(); }

  /// Throws InvalidSeries unless T >= 1, C >= 1, all values finite and
  /// channel_names matches C.
  void validate() const;

  static TimeSeries univariate(std::string name, const std::vector<double>& samples);
  static TimeSeries from_matrix(std::string name, Matrix values,
                                std::vector<std::string> channel_names = {});
};

struct WindowSpec {
  Index length = 0;
  Index stride = 1;
};

struct WindowSlice {
  Index start = 0;
  Index length = 0;
  std::string source;

  bool operator==(const WindowSlice&) const = default;
};

/// floor((T - w) / s) + 1, or 0 when w > T.
Index window_count(Index series_length, const WindowSpec& spec) noexcept;

/// Full windows only; a trailing partial window is dropped.
std::vector<WindowSlice> slice_windows(const TimeSeries& series, const WindowSpec& spec);

/// Copy of the samples covered by a slice (length x C).
Matrix window_values(const TimeSeries& series, const WindowSlice& slice);
Matrix window_values(const TimeSeries& series, Index start, Index length);

/// Arithmetic mean over consecutive buckets; the trailing bucket may be short.
TimeSeries downsample_mean(const TimeSeries& series, Index bucket);

inline constexpr double kNormalizeEpsilon = 1e-5;

struct NormalizedWindow {
  Matrix values;   // w x C
  RowVector mean;  // per channel
  RowVector std;   // population standard deviation per channel
};

/// Per channel (x - mean) / (std + eps).
NormalizedWindow instance_normalize(const Matrix& window);

/// Inverse of instance_normalize for values expressed in normalized units.
Matrix denormalize(const Matrix& normalized, const RowVector& mean, const RowVector& std);

/// Candidate window lengths from the strongest periods of the first channel.
///
/// The first channel is de-meaned, its DFT magnitude spectrum is ranked over the
/// nonzero bins j = 1 .. T/2 (ties broken by lower bin), each bin is mapped to
/// the period round(T / j), and periods outside [min_size, max_size] or already
/// emitted are skipped. Throws NoDominantPeriod when nothing survives.
std::vector<Index> dominant_window_sizes(const TimeSeries& series, Index k, Index min_size,
                                         Index max_size);

/// Delimited text: a header of channel names, then one row of reals per timestep.
TimeSeries read_series_csv(std::istream& in, std::string name);
TimeSeries read_series_csv_file(const std::string& path, std::string name = {});
void write_series_csv(std::ostream& out, const TimeSeries& series);
void write_series_csv_file(const std::string& path, const TimeSeries& series);

}  // namespace tsvat::ts
