#include "tsvat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsvat/error.hpp"
#include "tsvat/rng.hpp"

namespace tsvat::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> noise(const SynthConfig& cfg, std::string_view stream, Index n) {
  Rng rng = Rng(cfg.seed).split(stream);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (cfg.noise_std == 0.0) return out;
  for (auto& v : out) v = rng.normal(0.0, cfg.noise_std);
  return out;
}

GroundTruth whole_series(Index T, std::string label) {
  GroundTruth gt;
  gt.segments.push_back({0, T, std::move(label)});
  return gt;
}

}  // namespace

void GroundTruth::validate(Index series_length) const {
  Index cursor = 0;
  for (const auto& seg : segments) {
    require(seg.start == cursor && seg.end > seg.start, ErrorCode::InvalidConfig,
            "segments must be ordered and contiguous");
    cursor = seg.end;
  }
  require(segments.empty() || cursor == series_length, ErrorCode::InvalidConfig,
          "segments must cover the series");
  for (const auto& a : anomalies) {
    require(a.start >= 0 && a.length >= 1 && a.start + a.length <= series_length,
            ErrorCode::AnomalyOutOfRange, "anomaly outside the series");
  }
}

void SynthConfig::validate() const {
  require(total_length >= 100, ErrorCode::InvalidConfig, "total_length must be >= 100");
  require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorCode::InvalidConfig,
          "noise_std must be a nonnegative real");
}

Kind parse_kind(std::string_view name) {
  if (name == "s1" || name == "S1") return Kind::S1;
  if (name == "s2" || name == "S2") return Kind::S2;
  if (name == "s3" || name == "S3") return Kind::S3;
  if (name == "mtoy" || name == "m-toy" || name == "M-Toy") return Kind::MToy;
  fail(ErrorCode::ValidationError, "unknown dataset kind '" + std::string(name) + "'");
}

std::string_view to_string(Kind kind) noexcept {
  switch (kind) {
    case Kind::S1: return "s1";
    case Kind::S2: return "s2";
    case Kind::S3: return "s3";
    case Kind::MToy: return "mtoy";
  }
  return "s1";
}

Dataset gen_s1(const SynthConfig& cfg) {
  cfg.validate();
  const Index T = cfg.total_length;
  require(cfg.s1_periods.size() == 4 && cfg.s1_amplitudes.size() == 4, ErrorCode::InvalidConfig,
          "S1 needs exactly 4 segment periods and amplitudes");
  std::vector<Index> lengths = cfg.s1_lengths;
  if (lengths.empty()) {
    lengths.assign(4, T / 4);
    lengths.back() += T % 4;
  }
  require(lengths.size() == 4, ErrorCode::InvalidConfig, "S1 needs exactly 4 segment lengths");
  Index sum = 0;
  for (const Index len : lengths) {
    require(len >= 1, ErrorCode::InvalidConfig, "S1 segment lengths must be positive");
    sum += len;
  }
  require(sum == T, ErrorCode::InvalidConfig, "S1 segment lengths must sum to total_length");

  const auto eps = noise(cfg, "s1", T);
  std::vector<double> values(static_cast<std::size_t>(T));
  GroundTruth gt;
  Index start = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const double period = cfg.s1_periods[s];
    const double amp = cfg.s1_amplitudes[s];
    require(period > 0.0, ErrorCode::InvalidConfig, "S1 periods must be positive");
    for (Index t = start; t < start + lengths[s]; ++t) {
      values[t] = amp * std::sin(kTwoPi * static_cast<double>(t - start) / period) + eps[t];
    }
    gt.segments.push_back({start, start + lengths[s], "df_" + std::to_string(s + 1)});
    start += lengths[s];
  }
  auto series = ts::TimeSeries::univariate("s1", values);
  gt.validate(T);
  return {std::move(series), std::move(gt)};
}

Dataset gen_s2(const SynthConfig& cfg) {
  cfg.validate();
  const Index T = cfg.total_length;
  std::vector<Index> positions = cfg.s2_positions;
  if (positions.empty()) positions = {T / 4, 3 * T / 4};
  require(positions.size() == 2, ErrorCode::InvalidConfig, "S2 needs exactly 2 anomaly positions");
  for (const Index p : positions) {
    require(p >= 0 && p < T, ErrorCode::AnomalyOutOfRange,
            "anomaly position " + std::to_string(p) + " outside [0, " + std::to_string(T) + ")");
  }
  const Index gap = std::abs(positions[1] - positions[0]);
  require(10 * gap >= T, ErrorCode::InvalidConfig,
          "anomalies must be separated by at least 10% of the series");
  require(cfg.s2_spike_factor >= 6.0, ErrorCode::InvalidConfig, "spike factor must be >= 6");

  const auto eps = noise(cfg, "s2", T);
  std::vector<double> values(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    values[t] = cfg.s2_amplitude * std::sin(kTwoPi * static_cast<double>(t) / cfg.s2_period) + eps[t];
  }
  GroundTruth gt = whole_series(T, "s2");
  double sign = 1.0;
  for (const Index p : positions) {
    values[p] += sign * cfg.s2_spike_factor * cfg.s2_amplitude;
    gt.anomalies.push_back({p, 1, std::nullopt});
    sign = -sign;
  }
  std::sort(gt.anomalies.begin(), gt.anomalies.end(),
            [](const Anomaly& a, const Anomaly& b) { return a.start < b.start; });
  gt.validate(T);
  return {ts::TimeSeries::univariate("s2", values), std::move(gt)};
}

Dataset gen_s3(const SynthConfig& cfg) {
  cfg.validate();
  require(cfg.s3_slope != 0.0 && std::isfinite(cfg.s3_slope), ErrorCode::InvalidConfig,
          "S3 trend slope must be nonzero");
  const Index T = cfg.total_length;
  // Centring the seasonal cosine makes it orthogonal to the centred time axis,
  // so the least-squares slope of the clean signal is exactly the trend slope.
  const double centre = static_cast<double>(T - 1) / 2.0;
  const auto eps = noise(cfg, "s3", T);
  std::vector<double> values(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const double tt = static_cast<double>(t);
    values[t] = cfg.s3_slope * tt +
                cfg.s3_amplitude * std::cos(kTwoPi * (tt - centre) / cfg.s3_period) + eps[t];
  }
  GroundTruth gt = whole_series(T, "s3");
  gt.trend_slope = cfg.s3_slope;
  return {ts::TimeSeries::univariate("s3", values), std::move(gt)};
}

Dataset gen_mtoy(const SynthConfig& cfg) {
  cfg.validate();
  const Index T = cfg.total_length;
  const Index C = cfg.mtoy_channels;
  require(C >= 2, ErrorCode::InvalidConfig, "M-Toy needs at least 2 channels");
  require(!cfg.mtoy_periods.empty(), ErrorCode::InvalidConfig, "M-Toy needs channel periods");

  std::vector<Anomaly> anomalies = cfg.mtoy_anomalies;
  if (anomalies.empty()) {
    anomalies = {{T / 4, 64, Index{0}}, {3 * T / 5, 64, Index{1 % C}}};
  }
  require(anomalies.size() == 2, ErrorCode::InvalidConfig, "M-Toy needs exactly 2 anomalies");
  for (auto& a : anomalies) {
    require(a.length >= 2, ErrorCode::InvalidConfig, "anomaly subsequences need length >= 2");
    require(a.start >= 0 && a.start + a.length <= T, ErrorCode::AnomalyOutOfRange,
            "anomaly subsequence outside the series");
    if (!a.channel) a.channel = 0;
    require(*a.channel >= 0 && *a.channel < C, ErrorCode::AnomalyOutOfRange,
            "anomaly channel out of range");
  }
  std::sort(anomalies.begin(), anomalies.end(),
            [](const Anomaly& a, const Anomaly& b) { return a.start < b.start; });
  require(anomalies[0].start + anomalies[0].length <= anomalies[1].start,
          ErrorCode::OverlappingAnomalies, "anomaly subsequences overlap");

  const auto period_of = [&](Index c) {
    return cfg.mtoy_periods[static_cast<std::size_t>(c) % cfg.mtoy_periods.size()];
  };
  const auto anomaly_at = [&](Index t, Index c) -> const Anomaly* {
    for (const auto& a : anomalies) {
      if (*a.channel == c && t >= a.start && t < a.start + a.length) return &a;
    }
    return nullptr;
  };

  Matrix values(T, C);
  std::vector<std::string> names;
  const Rng base = Rng(cfg.seed).split("mtoy");
  for (Index c = 0; c < C; ++c) {
    const double period = period_of(c);
    require(period > 0.0, ErrorCode::InvalidConfig, "M-Toy periods must be positive");
    // The noise stream is drawn for every timestep so anomalies never shift it.
    Rng rng = base.split(static_cast<std::uint64_t>(c));
    for (Index t = 0; t < T; ++t) {
      const double e = cfg.noise_std == 0.0 ? 0.0 : rng.normal(0.0, cfg.noise_std);
      double pattern;
      if (const Anomaly* a = anomaly_at(t, c)) {
        const double shifted = period * cfg.mtoy_anomaly_period_factor;
        pattern = cfg.mtoy_amplitude *
                  std::sin(kTwoPi * static_cast<double>(t - a->start) / shifted);
      } else {
        const double phase = kTwoPi * static_cast<double>(t) / period;
        pattern = cfg.mtoy_amplitude * std::sin(phase) +
                  cfg.mtoy_harmonic * cfg.mtoy_amplitude *
                      std::sin(2.0 * phase + static_cast<double>(c));
      }
      values(t, c) = pattern + e;
    }
    names.push_back("ch" + std::to_string(c));
  }
  GroundTruth gt = whole_series(T, "mtoy");
  gt.anomalies = anomalies;
  gt.validate(T);
  return {ts::TimeSeries::from_matrix("mtoy", std::move(values), std::move(names)), std::move(gt)};
}

Dataset generate(Kind kind, const SynthConfig& cfg) {
  switch (kind) {
    case Kind::S1: return gen_s1(cfg);
    case Kind::S2: return gen_s2(cfg);
    case Kind::S3: return gen_s3(cfg);
    case Kind::MToy: return gen_mtoy(cfg);
  }
  fail(ErrorCode::InvalidConfig, "unknown dataset kind");
}

}  // namespace tsvat::synth
