#pragma once

#include <nlohmann/json.hpp>

#include "tsvat/analysis.hpp"
#include "tsvat/encoder.hpp"
#include "tsvat/finetune.hpp"
#include "tsvat/projection.hpp"
#include "tsvat/series.hpp"
#include "tsvat/synth.hpp"

// JSON forms of every configuration and result type. Readers start from the
// C++ defaults, reject unknown keys and mistyped values with ValidationError,
// and leave range checks to the types' own validate().
namespace tsvat::codec {

using json = nlohmann::json;

json to_json(const encoder::EncoderConfig& c);
/// Accepts an optional "preset" key whose values the remaining keys override.
encoder::EncoderConfig encoder_config_from_json(const json& j);

json to_json(const finetune::FinetuneConfig& c);
finetune::FinetuneConfig finetune_config_from_json(const json& j);

json to_json(const finetune::RunRecord& r);
finetune::RunRecord run_record_from_json(const json& j);

json to_json(const analysis::SweepGrid& g);
analysis::SweepGrid sweep_grid_from_json(const json& j);
json to_json(const analysis::SweepResult& r);
json to_json(const analysis::Report& r);

json to_json(const projection::ProjectionParams& p);
projection::ProjectionParams projection_params_from_json(const json& j);

json to_json(const ts::WindowSpec& w);
ts::WindowSpec window_spec_from_json(const json& j);
json to_json(const ts::WindowSlice& w);

json to_json(const synth::SynthConfig& c);
synth::SynthConfig synth_config_from_json(const json& j);
json to_json(const synth::GroundTruth& g);
synth::GroundTruth ground_truth_from_json(const json& j);

/// Finite doubles as numbers; infinities and NaN as null.
json number(double v);

}  // namespace tsvat::codec
