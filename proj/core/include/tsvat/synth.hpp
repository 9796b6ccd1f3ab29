#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsvat/series.hpp"

namespace tsvat::synth {

struct Segment {
  Index start = 0;
  Index end = 0;  // exclusive
  std::string label;
  bool operator==(const Segment&) const = default;
};

struct Anomaly {
  Index start = 0;
  Index length = 1;
  std::optional<Index> channel;  // set for subsequence anomalies in multivariate data
  bool operator==(const Anomaly&) const = default;
};

/// Annotations shipped alongside every generated series.
struct GroundTruth {
  std::vector<Segment> segments;  // ordered, partitioning [0, T)
  std::vector<Anomaly> anomalies;
  std::optional<double> trend_slope;

  /// Throws InvalidConfig when segments do not partition [0, T) or an anomaly
  /// leaves the series.
  void validate(Index series_length) const;
  bool operator==(const GroundTruth&) const = default;
};

/// Every generator constant lives here so that alternates can be exercised.
struct SynthConfig {
  Index total_length = 10000;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  // S1: four sinusoidal segments. Empty lengths split T evenly, remainder last.
  std::vector<Index> s1_lengths;
  std::vector<double> s1_periods{20.0, 50.0, 20.0, 80.0};
  std::vector<double> s1_amplitudes{1.0, 1.0, 3.0, 1.0};

  // S2: sinusoid with two point anomalies. Empty positions default to T/4, 3T/4.
  double s2_period = 50.0;
  double s2_amplitude = 1.0;
  double s2_spike_factor = 8.0;
  std::vector<Index> s2_positions;

  // S3: linear trend plus a cosine centred on the middle of the series.
  double s3_slope = 0.001;
  double s3_period = 100.0;
  double s3_amplitude = 1.0;

  // M-Toy: quasi-periodic channels; inside each anomaly the designated channel
  // switches to a sinusoid whose period is scaled by mtoy_anomaly_period_factor.
  Index mtoy_channels = 3;
  std::vector<double> mtoy_periods{40.0, 60.0, 90.0};
  double mtoy_amplitude = 1.0;
  double mtoy_harmonic = 0.3;
  double mtoy_anomaly_period_factor = 0.35;
  std::vector<Anomaly> mtoy_anomalies;  // empty -> (T/4, 64, ch 0), (3T/5, 64, ch 1)

  void validate() const;
};

struct Dataset {
  ts::TimeSeries series;
  GroundTruth truth;
};

enum class Kind { S1, S2, S3, MToy };

Kind parse_kind(std::string_view name);
std::string_view to_string(Kind kind) noexcept;

Dataset gen_s1(const SynthConfig& cfg);
Dataset gen_s2(const SynthConfig& cfg);
Dataset gen_s3(const SynthConfig& cfg);
Dataset gen_mtoy(const SynthConfig& cfg);
Dataset generate(Kind kind, const SynthConfig& cfg);

}  // namespace tsvat::synth
