#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/embedding_store.hpp"

namespace emoprobe {

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t count = 0;
};

// Column mean and unbiased (N - 1) covariance, symmetrised. Rows are samples.
GaussianStats gaussian_stats(const Eigen::MatrixXd& samples);

// Symmetric PSD square root by eigendecomposition. Eigenvalues down to
// -1e-6 * ||M||_2 are treated as round-off and clamped to zero; anything
// more negative raises NotPsdError.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

// ||mu_a - mu_b||^2 + tr(S_a) + tr(S_b) - 2 tr sqrt(S_a^1/2 S_b S_a^1/2).
// Near-singular covariances get a 1e-10 * tr / D ridge before the square
// roots. Results in (-1e-6, 0) become 0; lower values throw NumericalError.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct FadOptions {
  bool per_frame = false;  // every frame is a sample instead of one pooled vector per utterance
  int jobs = 1;
};

struct FadRow {
  std::string model_tag;
  int layer = 1;          // 1-based
  std::string emotion;    // emotion name or "all"
  double fad = 0.0;       // NaN when the cell failed
  std::size_t n_speech = 0;
  std::size_t n_music = 0;
  std::string error;      // empty on success
};

// Speech vs music FAD for every layer and each emotion plus the pooled "all"
// set: L x 7 rows, layer-major. A cell that cannot be computed keeps its row
// with the error text instead of stopping the sweep.
std::vector<FadRow> fad_sweep(std::span<const EmbeddingRecord> records, const std::string& model_tag,
                              const FadOptions& options = {});

}  // namespace emoprobe
