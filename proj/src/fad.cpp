#include "emoprobe/fad.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "emoprobe/error.hpp"
#include "emoprobe/parallel.hpp"

namespace emoprobe {

namespace {

constexpr double kNegativeEigTolerance = 1e-6;
constexpr double kSingularTolerance = 1e-8;
constexpr double kRidgeScale = 1e-10;
constexpr double kClampTolerance = 1e-6;

Eigen::MatrixXd symmetrise(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Adds tr/D * 1e-10 on the diagonal when the smallest eigenvalue is within
// tolerance of zero.
Eigen::MatrixXd ridge_if_singular(const Eigen::MatrixXd& sigma) {
  const auto D = sigma.rows();
  if (D == 0) return sigma;
  const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sigma, Eigen::EigenvaluesOnly).eigenvalues();
  const double scale = std::max(eig.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if (eig.minCoeff() > kSingularTolerance * scale) return sigma;
  const double eps = kRidgeScale * sigma.trace() / static_cast<double>(D);
  if (!(eps > 0.0)) return sigma;
  Eigen::MatrixXd out = sigma;
  out.diagonal().array() += eps;
  return out;
}

}  // namespace

GaussianStats gaussian_stats(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) {
    throw InsufficientData("Gaussian statistics need at least 2 samples, got " + std::to_string(samples.rows()));
  }
  if (!samples.allFinite()) throw ValidationError("non-finite value in embedding samples");
  GaussianStats s;
  s.count = static_cast<std::size_t>(samples.rows());
  s.mu = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centred = samples.rowwise() - s.mu.transpose();
  s.sigma = symmetrise(centred.transpose() * centred / static_cast<double>(samples.rows() - 1));
  return s;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("matrix square root needs a square matrix");
  if (m.size() == 0) return m;
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw ValidationError("matrix square root input is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrise(m));
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed in matrix square root");
  Eigen::VectorXd eig = solver.eigenvalues();
  const double norm = eig.cwiseAbs().maxCoeff();
  if (eig.minCoeff() < -kNegativeEigTolerance * norm) {
    std::ostringstream msg;
    msg << "matrix is not PSD: smallest eigenvalue " << eig.minCoeff() << " vs spectral norm " << norm;
    throw NotPsdError(msg.str());
  }
  eig = eig.cwiseMax(0.0).cwiseSqrt();
  const auto& v = solver.eigenvectors();
  return symmetrise(v * eig.asDiagonal() * v.transpose());
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const auto D = a.mu.size();
  if (b.mu.size() != D || a.sigma.rows() != D || a.sigma.cols() != D || b.sigma.rows() != D || b.sigma.cols() != D) {
    throw DimensionMismatch("Frechet distance between D=" + std::to_string(D) + " and D=" +
                            std::to_string(b.mu.size()) + " statistics");
  }
  const Eigen::MatrixXd sa = ridge_if_singular(symmetrise(a.sigma));
  const Eigen::MatrixXd sb = ridge_if_singular(symmetrise(b.sigma));
  const Eigen::MatrixXd root_a = matrix_sqrt_psd(sa);
  const Eigen::MatrixXd root_b = matrix_sqrt_psd(sb);
  // tr sqrt(root_a sb root_a) is the nuclear norm of root_a root_b. Taking
  // singular values directly keeps null-space round-off at eps instead of
  // sqrt(eps), which matters for rank-deficient covariances.
  const Eigen::MatrixXd product = root_a * root_b;
  if (!product.allFinite()) throw NumericalError("Frechet cross term is not finite");
  const double cross = Eigen::BDCSVD<Eigen::MatrixXd>(product).singularValues().sum();
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const double raw = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
  if (raw >= 0.0) return raw;
  if (raw > -kClampTolerance) return 0.0;
  std::ostringstream msg;
  msg << "Frechet distance is negative beyond round-off: " << raw << " (mean term " << mean_term << ", tr a "
      << sa.trace() << ", tr b " << sb.trace() << ", cross " << cross << ")";
  throw NumericalError(msg.str());
}

std::vector<FadRow> fad_sweep(std::span<const EmbeddingRecord> records, const std::string& model_tag,
                              const FadOptions& options) {
  if (records.empty()) throw InsufficientData("FAD sweep has no records");
  const std::size_t L = records.front().num_layers();
  const auto D = static_cast<Eigen::Index>(records.front().dim());

  // 7 groups: six emotions then "all".
  constexpr std::size_t kGroups = kNumEmotions + 1;
  std::vector<FadRow> rows(L * kGroups);
  parallel_for(rows.size(), options.jobs, [&](std::size_t cell) {
    const std::size_t layer = cell / kGroups;
    const std::size_t group = cell % kGroups;
    auto& row = rows[cell];
    row.model_tag = model_tag;
    row.layer = static_cast<int>(layer) + 1;
    row.emotion = group < kNumEmotions ? std::string(to_string(kAllEmotions[group])) : "all";

    std::array<std::vector<Eigen::RowVectorXd>, 2> samples;
    std::array<std::size_t, 2> utterances{};
    for (const auto& r : records) {
      if (group < kNumEmotions && r.emotion != kAllEmotions[group]) continue;
      const auto side = static_cast<std::size_t>(r.domain);
      const Eigen::MatrixXd frames = r.layer_matrix(layer);
      ++utterances[side];
      if (options.per_frame) {
        for (Eigen::Index t = 0; t < frames.rows(); ++t) samples[side].push_back(frames.row(t));
      } else {
        samples[side].push_back(frames.colwise().mean());
      }
    }
    row.n_speech = utterances[static_cast<std::size_t>(Domain::speech)];
    row.n_music = utterances[static_cast<std::size_t>(Domain::music)];
    try {
      std::array<GaussianStats, 2> stats;
      for (std::size_t side = 0; side < 2; ++side) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(samples[side].size()), D);
        for (std::size_t i = 0; i < samples[side].size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[side][i];
        try {
          stats[side] = gaussian_stats(m);
        } catch (const InsufficientData& e) {
          throw InsufficientData(std::string(to_string(kAllDomains[side])) + " " + row.emotion + ": " + e.what());
        }
      }
      row.fad = frechet_distance(stats[0], stats[1]);
    } catch (const Error& e) {
      row.fad = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
  });
  return rows;
}

}  // namespace emoprobe
