#include "tsvat/codec.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "tsvat/error.hpp"

namespace tsvat::codec {
namespace {

class Fields {
 public:
  Fields(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    require(j.is_object() || j.is_null(), ErrorCode::ValidationError, what_ + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (j_.is_null() || !j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        require(v.is_number(), ErrorCode::ValidationError, "");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        require(v.is_number_integer(), ErrorCode::ValidationError, "");
        if constexpr (std::is_unsigned_v<T>) {
          require(v.is_number_unsigned() || v.get<std::int64_t>() >= 0, ErrorCode::ValidationError, "");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        require(v.is_boolean(), ErrorCode::ValidationError, "");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      fail(ErrorCode::ValidationError, what_ + "." + key + " has the wrong type: " + v.dump());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    if (j_.is_null() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    if (j_.is_null()) return;
    for (const auto& [k, v] : j_.items()) {
      require(seen_.count(k) > 0, ErrorCode::ValidationError,
              "unknown key '" + k + "' in " + what_);
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

json anomalies_json(const std::vector<synth::Anomaly>& list) {
  json out = json::array();
  for (const auto& a : list) {
    json e{{"start", a.start}, {"length", a.length}};
    e["channel"] = a.channel ? json(*a.channel) : json(nullptr);
    out.push_back(e);
  }
  return out;
}

std::vector<synth::Anomaly> anomalies_from(const json& j) {
  require(j.is_array(), ErrorCode::ValidationError, "anomalies must be an array");
  std::vector<synth::Anomaly> out;
  for (const auto& e : j) {
    synth::Anomaly a;
    Fields f(e, "anomaly");
    f.read("start", a.start);
    f.read("length", a.length);
    if (const json* c = f.sub("channel"); c && !c->is_null()) {
      require(c->is_number_integer(), ErrorCode::ValidationError, "anomaly.channel must be an integer");
      a.channel = c->get<Index>();
    }
    f.finish();
    out.push_back(a);
  }
  return out;
}

}  // namespace

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const encoder::EncoderConfig& c) {
  return {{"patch_len", c.patch_len}, {"d_model", c.d_model},   {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},     {"ffn_dim", c.ffn_dim},   {"max_patches", c.max_patches},
          {"seed", c.seed}};
}

encoder::EncoderConfig encoder_config_from_json(const json& j) {
  encoder::EncoderConfig c;
  Fields f(j, "model");
  std::string preset;
  f.read("preset", preset);
  if (!preset.empty()) {
    try {
      c = encoder::EncoderConfig::preset(preset);
    } catch (const Error& e) {
      fail(ErrorCode::ValidationError, e.what());
    }
  }
  f.read("patch_len", c.patch_len);
  f.read("d_model", c.d_model);
  f.read("n_layers", c.n_layers);
  f.read("n_heads", c.n_heads);
  f.read("ffn_dim", c.ffn_dim);
  f.read("max_patches", c.max_patches);
  f.read("seed", c.seed);
  f.finish();
  return c;
}

json to_json(const finetune::FinetuneConfig& c) {
  return {{"window_lengths", c.window_lengths},
          {"training_percent", c.training_percent},
          {"valid_percent", c.valid_percent},
          {"mask_percent", c.mask_percent},
          {"mix_windows", c.mix_windows},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"checkpoint_on_validation", c.checkpoint_on_validation},
          {"seed", c.seed}};
}

finetune::FinetuneConfig finetune_config_from_json(const json& j) {
  finetune::FinetuneConfig c;
  Fields f(j, "finetune");
  f.read("window_lengths", c.window_lengths);
  f.read("training_percent", c.training_percent);
  f.read("valid_percent", c.valid_percent);
  f.read("mask_percent", c.mask_percent);
  f.read("mix_windows", c.mix_windows);
  f.read("epochs", c.epochs);
  f.read("batch_size", c.batch_size);
  f.read("learning_rate", c.learning_rate);
  f.read("momentum", c.momentum);
  f.read("checkpoint_on_validation", c.checkpoint_on_validation);
  f.read("seed", c.seed);
  f.finish();
  return c;
}

json to_json(const finetune::RunRecord& r) {
  json train = json::array();
  json valid = json::array();
  for (const double v : r.train_curve) train.push_back(number(v));
  for (const double v : r.valid_curve) valid.push_back(number(v));
  return {{"config_hash", r.config_hash},
          {"loss_first", number(r.loss_first)},
          {"loss_final", number(r.loss_final)},
          {"improvement_percent", number(r.improvement_percent)},
          {"best_epoch", r.best_epoch},
          {"wall_time", r.wall_time},
          {"train_curve", train},
          {"valid_curve", valid},
          {"diverged", r.diverged}};
}

finetune::RunRecord run_record_from_json(const json& j) {
  finetune::RunRecord r;
  const auto real = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  try {
    r.config_hash = j.at("config_hash").get<std::string>();
    r.loss_first = real(j.at("loss_first"));
    r.loss_final = real(j.at("loss_final"));
    r.improvement_percent = real(j.at("improvement_percent"));
    r.best_epoch = j.at("best_epoch").get<Index>();
    r.wall_time = j.at("wall_time").get<double>();
    for (const auto& v : j.at("train_curve")) r.train_curve.push_back(real(v));
    for (const auto& v : j.at("valid_curve")) r.valid_curve.push_back(real(v));
    r.diverged = j.at("diverged").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ValidationError, std::string("malformed run record: ") + e.what());
  }
  return r;
}

json to_json(const analysis::SweepGrid& g) {
  return {{"epochs", g.epochs},
          {"dataset_percents", g.dataset_percents},
          {"mask_percents", g.mask_percents},
          {"n_windows_options", g.n_windows_options},
          {"valid_percent", g.valid_percent},
          {"base_window", g.base_window},
          {"mix_windows", g.mix_windows},
          {"batch_size", g.batch_size},
          {"learning_rate", g.learning_rate},
          {"seed", g.seed}};
}

analysis::SweepGrid sweep_grid_from_json(const json& j) {
  analysis::SweepGrid g;
  Fields f(j, "grid");
  f.read("epochs", g.epochs);
  f.read("dataset_percents", g.dataset_percents);
  f.read("mask_percents", g.mask_percents);
  f.read("n_windows_options", g.n_windows_options);
  f.read("valid_percent", g.valid_percent);
  f.read("base_window", g.base_window);
  f.read("mix_windows", g.mix_windows);
  f.read("batch_size", g.batch_size);
  f.read("learning_rate", g.learning_rate);
  f.read("seed", g.seed);
  f.finish();
  return g;
}

json to_json(const analysis::SweepResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json e{{"dataset_percent", row.cell.dataset_percent},
           {"masked_percent", row.cell.mask_percent},
           {"n_windows", row.cell.n_windows},
           {"window_lengths", row.window_lengths},
           {"failed", row.failed},
           {"record", to_json(row.record)}};
    if (row.failed) e["error"] = row.error;
    rows.push_back(e);
  }
  return {{"columns", r.column_names()}, {"rows", rows}};
}

json to_json(const analysis::Report& r) {
  json out{{"rows", r.rows}, {"failed", r.failed}};
  out["epoch_budget"] = r.epoch_budget ? json(*r.epoch_budget) : json(nullptr);
  if (!r.correlation.names.empty()) {
    json matrix = json::array();
    for (Index a = 0; a < r.correlation.r.rows(); ++a) {
      json row = json::array();
      for (Index b = 0; b < r.correlation.r.cols(); ++b) {
        row.push_back(r.correlation.defined(a, b) ? json(r.correlation.r(a, b)) : json(nullptr));
      }
      matrix.push_back(row);
    }
    out["correlation"] = {{"names", r.correlation.names}, {"r", matrix}};
  } else {
    out["correlation"] = nullptr;
  }
  json f = json::array();
  for (const auto& s : r.f_scores) {
    f.push_back({{"feature", s.feature}, {"r", s.r}, {"f", number(s.f)}, {"percent", s.percent},
                 {"perfect", s.perfect}, {"undefined", s.undefined}});
  }
  out["f_scores"] = f;
  json imp = json::array();
  for (const auto& i : r.importance) {
    imp.push_back({{"feature", i.feature}, {"raw", i.raw}, {"percent", i.percent}});
  }
  out["permutation_importance"] = imp;
  return out;
}

json to_json(const projection::ProjectionParams& p) {
  return {{"method", std::string(projection::to_string(p.method))},
          {"perplexity", p.perplexity},
          {"iterations", p.iterations},
          {"pca_dims", p.pca_dims},
          {"seed", p.seed}};
}

projection::ProjectionParams projection_params_from_json(const json& j) {
  projection::ProjectionParams p;
  Fields f(j, "projection");
  std::string method(projection::to_string(p.method));
  f.read("method", method);
  p.method = projection::parse_method(method);
  f.read("perplexity", p.perplexity);
  f.read("iterations", p.iterations);
  f.read("pca_dims", p.pca_dims);
  f.read("seed", p.seed);
  f.finish();
  return p;
}

json to_json(const ts::WindowSpec& w) { return {{"length", w.length}, {"stride", w.stride}}; }

ts::WindowSpec window_spec_from_json(const json& j) {
  ts::WindowSpec w{54, 2};
  Fields f(j, "window");
  f.read("length", w.length);
  f.read("stride", w.stride);
  f.finish();
  return w;
}

json to_json(const ts::WindowSlice& w) {
  return {{"start", w.start}, {"length", w.length}, {"source", w.source}};
}

json to_json(const synth::SynthConfig& c) {
  return {{"total_length", c.total_length},
          {"noise_std", c.noise_std},
          {"seed", c.seed},
          {"s1_lengths", c.s1_lengths},
          {"s1_periods", c.s1_periods},
          {"s1_amplitudes", c.s1_amplitudes},
          {"s2_period", c.s2_period},
          {"s2_amplitude", c.s2_amplitude},
          {"s2_spike_factor", c.s2_spike_factor},
          {"s2_positions", c.s2_positions},
          {"s3_slope", c.s3_slope},
          {"s3_period", c.s3_period},
          {"s3_amplitude", c.s3_amplitude},
          {"mtoy_channels", c.mtoy_channels},
          {"mtoy_periods", c.mtoy_periods},
          {"mtoy_amplitude", c.mtoy_amplitude},
          {"mtoy_harmonic", c.mtoy_harmonic},
          {"mtoy_anomaly_period_factor", c.mtoy_anomaly_period_factor},
          {"mtoy_anomalies", anomalies_json(c.mtoy_anomalies)}};
}

synth::SynthConfig synth_config_from_json(const json& j) {
  synth::SynthConfig c;
  Fields f(j, "synth");
  f.read("total_length", c.total_length);
  f.read("noise_std", c.noise_std);
  f.read("seed", c.seed);
  f.read("s1_lengths", c.s1_lengths);
  f.read("s1_periods", c.s1_periods);
  f.read("s1_amplitudes", c.s1_amplitudes);
  f.read("s2_period", c.s2_period);
  f.read("s2_amplitude", c.s2_amplitude);
  f.read("s2_spike_factor", c.s2_spike_factor);
  f.read("s2_positions", c.s2_positions);
  f.read("s3_slope", c.s3_slope);
  f.read("s3_period", c.s3_period);
  f.read("s3_amplitude", c.s3_amplitude);
  f.read("mtoy_channels", c.mtoy_channels);
  f.read("mtoy_periods", c.mtoy_periods);
  f.read("mtoy_amplitude", c.mtoy_amplitude);
  f.read("mtoy_harmonic", c.mtoy_harmonic);
  f.read("mtoy_anomaly_period_factor", c.mtoy_anomaly_period_factor);
  if (const json* a = f.sub("mtoy_anomalies")) c.mtoy_anomalies = anomalies_from(*a);
  f.finish();
  return c;
}

json to_json(const synth::GroundTruth& g) {
  json segments = json::array();
  for (const auto& s : g.segments) {
    segments.push_back({{"start", s.start}, {"end", s.end}, {"label", s.label}});
  }
  json out{{"segments", segments}, {"anomalies", anomalies_json(g.anomalies)}};
  out["trend_slope"] = g.trend_slope ? json(*g.trend_slope) : json(nullptr);
  return out;
}

synth::GroundTruth ground_truth_from_json(const json& j) {
  synth::GroundTruth g;
  Fields f(j, "ground_truth");
  if (const json* s = f.sub("segments")) {
    for (const auto& e : *s) {
      synth::Segment seg;
      Fields sf(e, "segment");
      sf.read("start", seg.start);
      sf.read("end", seg.end);
      sf.read("label", seg.label);
      sf.finish();
      g.segments.push_back(seg);
    }
  }
  if (const json* a = f.sub("anomalies")) g.anomalies = anomalies_from(*a);
  if (const json* t = f.sub("trend_slope"); t && !t->is_null()) {
    require(t->is_number(), ErrorCode::ValidationError, "trend_slope must be a number");
    g.trend_slope = t->get<double>();
  }
  f.finish();
  return g;
}

}  // namespace tsvat::codec
