#include "tsvat/projection.hpp"

#include <algorithm>

#include "tsvat/error.hpp"

namespace tsvat::projection {

void EmbeddingMatrix::validate() const {
  require(rows.rows() >= 2, ErrorCode::DegenerateInput, "embedding matrix needs at least two rows");
  require(static_cast<Index>(provenance.size()) == rows.rows(), ErrorCode::ShapeMismatch,
          "provenance has " + std::to_string(provenance.size()) + " entries for " +
              std::to_string(rows.rows()) + " rows");
  require(rows.allFinite(), ErrorCode::DegenerateInput, "embedding matrix has non-finite entries");
}

EmbeddingMatrix embed_series(const encoder::EncoderModel& model, const ts::TimeSeries& series,
                             const ts::WindowSpec& spec, Index downsample_bucket,
                             std::string model_ref) {
  require(spec.length >= model.config.patch_len, ErrorCode::WindowShorterThanPatch,
          "window " + std::to_string(spec.length) + " is shorter than patch " +
              std::to_string(model.config.patch_len));
  const ts::TimeSeries source =
      downsample_bucket > 1 ? ts::downsample_mean(series, downsample_bucket) : series;
  EmbeddingMatrix e;
  e.model_ref = std::move(model_ref);
  e.provenance = ts::slice_windows(source, spec);
  e.rows.resize(static_cast<Index>(e.provenance.size()), model.config.d_model);
  for (std::size_t i = 0; i < e.provenance.size(); ++i) {
    const auto out = encoder::forward(model, ts::window_values(source, e.provenance[i]));
    e.rows.row(static_cast<Index>(i)) = out.window_embedding;
  }
  return e;
}

Method parse_method(std::string_view name) {
  if (name == "pca") return Method::Pca;
  if (name == "tsne") return Method::Tsne;
  if (name == "pca_then_tsne") return Method::PcaThenTsne;
  fail(ErrorCode::ValidationError, "unknown projection method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::Pca: return "pca";
    case Method::Tsne: return "tsne";
    case Method::PcaThenTsne: return "pca_then_tsne";
  }
  return "pca";
}

void ProjectionParams::validate() const {
  require(pca_dims >= 2, ErrorCode::InvalidConfig, "pca_dims must be at least 2");
  require(iterations >= 1, ErrorCode::InvalidConfig, "iterations must be positive");
  require(perplexity > 0.0, ErrorCode::InvalidConfig, "perplexity must be positive");
}

TsneConfig ProjectionParams::tsne_config() const {
  TsneConfig c;
  c.perplexity = perplexity;
  c.iterations = iterations;
  c.seed = seed;
  return c;
}

Projection2D project_pipeline(const EmbeddingMatrix& embeddings, const ProjectionParams& params) {
  embeddings.validate();
  params.validate();
  Projection2D p;
  p.params = params;
  p.provenance = embeddings.provenance;
  const Matrix& x = embeddings.rows;
  switch (params.method) {
    case Method::Pca: {
      auto r = pca(x, 2);
      p.coords = std::move(r.coords);
      p.explained_variance = std::move(r.explained_variance);
      break;
    }
    case Method::Tsne:
      p.coords = tsne(x, params.tsne_config()).coords;
      break;
    case Method::PcaThenTsne: {
      const Index k = std::min({params.pca_dims, x.cols(), x.rows() - 1});
      if (k >= x.cols()) {
        p.coords = tsne(x, params.tsne_config()).coords;
      } else {
        p.coords = tsne(pca(x, k).coords, params.tsne_config()).coords;
      }
      break;
    }
  }
  return p;
}

}  // namespace tsvat::projection
