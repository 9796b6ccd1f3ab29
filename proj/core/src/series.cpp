#include "tsvat/series.hpp"

#include <cmath>
#include <string>

#include "tsvat/error.hpp"

namespace tsvat::ts {

void TimeSeries::validate() const {
  require(length() >= 1, ErrorCode::InvalidSeries, "series '" + name + "' has no timesteps");
  require(channels() >= 1, ErrorCode::InvalidSeries, "series '" + name + "' has no channels");
  require(static_cast<Index>(channel_names.size()) == channels(), ErrorCode::InvalidSeries,
          "series '" + name + "' has " + std::to_string(channel_names.size()) +
              " channel names for " + std::to_string(channels()) + " channels");
  require(values.allFinite(), ErrorCode::InvalidSeries,
          "series '" + name + "' contains non-finite values");
}

TimeSeries TimeSeries::univariate(std::string name, const std::vector<double>& samples) {
  Matrix values(static_cast<Index>(samples.size()), 1);
  for (Index t = 0; t < values.rows(); ++t) values(t, 0) = samples[static_cast<std::size_t>(t)];
  return from_matrix(std::move(name), std::move(values), {"value"});
}

TimeSeries TimeSeries::from_matrix(std::string name, Matrix values,
                                   std::vector<std::string> channel_names) {
  if (channel_names.empty()) {
    for (Index c = 0; c < values.cols(); ++c) channel_names.push_back("c" + std::to_string(c));
  }
  TimeSeries ts{std::move(name), std::move(values), std::nullopt, std::move(channel_names)};
  ts.validate();
  return ts;
}

Index window_count(Index series_length, const WindowSpec& spec) noexcept {
  if (spec.length < 1 || spec.stride < 1 || spec.length > series_length) return 0;
  return (series_length - spec.length) / spec.stride + 1;
}

std::vector<WindowSlice> slice_windows(const TimeSeries& series, const WindowSpec& spec) {
  require(spec.length >= 1 && spec.stride >= 1, ErrorCode::InvalidConfig,
          "window length and stride must be positive");
  require(spec.length <= series.length(), ErrorCode::WindowTooLong,
          "window length " + std::to_string(spec.length) + " exceeds series length " +
              std::to_string(series.length()));
  const Index n = window_count(series.length(), spec);
  std::vector<WindowSlice> slices;
  slices.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) slices.push_back({k * spec.stride, spec.length, series.name});
  return slices;
}

Matrix window_values(const TimeSeries& series, Index start, Index length) {
  require(start >= 0 && length >= 1 && start + length <= series.length(),
          ErrorCode::IndexOutOfRange,
          "window [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") outside series of length " + std::to_string(series.length()));
  return series.values.middleRows(start, length);
}

Matrix window_values(const TimeSeries& series, const WindowSlice& slice) {
  return window_values(series, slice.start, slice.length);
}

TimeSeries downsample_mean(const TimeSeries& series, Index bucket) {
  require(bucket >= 1, ErrorCode::InvalidConfig, "bucket must be >= 1");
  const Index T = series.length();
  const Index out_len = (T + bucket - 1) / bucket;
  Matrix out(out_len, series.channels());
  for (Index b = 0; b < out_len; ++b) {
    const Index begin = b * bucket;
    const Index size = std::min(bucket, T - begin);
    out.row(b) = series.values.middleRows(begin, size).colwise().sum() / static_cast<double>(size);
  }
  TimeSeries result{series.name, std::move(out), series.sample_period, series.channel_names};
  if (result.sample_period) *result.sample_period *= static_cast<double>(bucket);
  return result;
}

NormalizedWindow instance_normalize(const Matrix& window) {
  require(window.rows() >= 1 && window.cols() >= 1, ErrorCode::ShapeMismatch,
          "cannot normalize an empty window");
  const double w = static_cast<double>(window.rows());
  NormalizedWindow out;
  out.mean = window.colwise().sum() / w;
  out.std.resize(window.cols());
  out.values.resize(window.rows(), window.cols());
  for (Index c = 0; c < window.cols(); ++c) {
    const auto centered = window.col(c).array() - out.mean(c);
    out.std(c) = std::sqrt(centered.square().sum() / w);
    out.values.col(c) = centered / (out.std(c) + kNormalizeEpsilon);
  }
  return out;
}

Matrix denormalize(const Matrix& normalized, const RowVector& mean, const RowVector& std) {
  require(normalized.cols() == mean.size() && normalized.cols() == std.size(),
          ErrorCode::ShapeMismatch, "statistics do not match channel count");
  Matrix out(normalized.rows(), normalized.cols());
  for (Index c = 0; c < normalized.cols(); ++c) {
    out.col(c) = normalized.col(c).array() * (std(c) + kNormalizeEpsilon) + mean(c);
  }
  return out;
}

}  // namespace tsvat::ts
