#include "emoprobe/dataset.hpp"

#include "emoprobe/error.hpp"
#include "emoprobe/pooling.hpp"

namespace emoprobe {

Eigen::MatrixXd pooled_stack(const EmbeddingRecord& record) {
  const auto L = static_cast<Eigen::Index>(record.num_layers());
  const auto D = static_cast<Eigen::Index>(record.dim());
  Eigen::MatrixXd out(L, D);
  for (Eigen::Index l = 0; l < L; ++l) {
    out.row(l) = mean_pool_time(record.layer_matrix(static_cast<std::size_t>(l))).transpose();
  }
  return out;
}

SplitSets build_split_sets(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest,
                           Domain domain, InputKind kind, std::size_t layer) {
  SplitSets sets;
  for (const auto& rec : records) {
    if (rec.domain != domain) continue;
    if (kind != InputKind::pooled_stack && layer >= rec.num_layers()) {
      throw DimensionMismatch("layer " + std::to_string(layer + 1) + " requested but record '" + rec.utterance_id +
                              "' has " + std::to_string(rec.num_layers()) + " layers");
    }
    auto& target = sets[manifest.split_of(rec.utterance_id)];
    switch (kind) {
      case InputKind::pooled_layer:
        target.inputs.emplace_back(mean_pool_time(rec.layer_matrix(layer)));
        break;
      case InputKind::pooled_stack:
        target.inputs.push_back(pooled_stack(rec));
        break;
      case InputKind::sequence:
        target.inputs.push_back(rec.layer_matrix(layer));
        break;
    }
    target.labels.push_back(index_of(rec.emotion));
  }
  return sets;
}

}  // namespace emoprobe
