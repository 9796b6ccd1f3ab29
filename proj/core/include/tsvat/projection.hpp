#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsvat/encoder.hpp"
#include "tsvat/pca.hpp"
#include "tsvat/series.hpp"
#include "tsvat/tsne.hpp"

namespace tsvat::projection {

struct EmbeddingMatrix {
  Matrix rows;  // n x D
  std::vector<ts::WindowSlice> provenance;
  std::string model_ref;

  /// Throws DegenerateInput or ShapeMismatch.
  void validate() const;
};

/// One embedding per window, forwarded without a mask. The optional
/// downsample bucket is applied before slicing.
EmbeddingMatrix embed_series(const encoder::EncoderModel& model, const ts::TimeSeries& series,
                             const ts::WindowSpec& spec, Index downsample_bucket = 1,
                             std::string model_ref = {});

enum class Method { Pca, Tsne, PcaThenTsne };

Method parse_method(std::string_view name);
std::string_view to_string(Method method) noexcept;

struct ProjectionParams {
  Method method = Method::PcaThenTsne;
  double perplexity = 30.0;
  Index iterations = 1000;
  Index pca_dims = 50;
  std::uint64_t seed = 0;

  void validate() const;
  TsneConfig tsne_config() const;
};

struct Projection2D {
  Matrix coords;  // n x 2
  ProjectionParams params;
  std::vector<ts::WindowSlice> provenance;
  std::optional<Vector> explained_variance;  // pca only
};

/// pca: top two components. tsne: t-SNE on the raw rows. pca_then_tsne: PCA
/// to min(pca_dims, D) dimensions first. A full-rank reduction only rotates
/// the data, leaving pairwise distances and therefore t-SNE unchanged, so it
/// is skipped.
Projection2D project_pipeline(const EmbeddingMatrix& embeddings, const ProjectionParams& params);

}  // namespace tsvat::projection
