#include <doctest.h>

#include <cmath>
#include <random>

#include "emoprobe/error.hpp"
#include "emoprobe/fad.hpp"
#include "emoprobe/synthetic.hpp"
#include "test_util.hpp"

using namespace emoprobe;
using testing::random_matrix;

namespace {

GaussianStats stats_of(Eigen::VectorXd mu, Eigen::MatrixXd sigma) { return {std::move(mu), std::move(sigma), 10}; }

Eigen::MatrixXd random_spd(Eigen::Index d, std::mt19937_64& rng) {
  const auto a = random_matrix(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

std::vector<FadRow> rows_for(const std::vector<FadRow>& all, int layer) {
  std::vector<FadRow> out;
  for (const auto& r : all)
    if (r.layer == layer) out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("gaussian_stats hand examples") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 2, 2;
  const auto s = gaussian_stats(x);
  CHECK(s.mu == Eigen::Vector2d(1, 1));
  CHECK(s.sigma == Eigen::Matrix2d::Constant(2.0));
  CHECK(s.count == 2);

  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(5, 1) * Eigen::RowVector3d(1, -2, 3);
  CHECK(gaussian_stats(same).sigma.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(gaussian_stats(Eigen::MatrixXd::Zero(1, 3)), InsufficientData);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(gaussian_stats(bad), ValidationError);
}

TEST_CASE("gaussian_stats recovers a seeded Gaussian") {
  std::mt19937_64 rng(42);
  Eigen::MatrixXd chol(3, 3);
  chol << 1.0, 0.0, 0.0, 0.5, 0.8, 0.0, -0.3, 0.2, 0.6;
  const Eigen::MatrixXd target = chol * chol.transpose();
  const Eigen::RowVector3d mean(0.5, -1.0, 2.0);
  const Eigen::MatrixXd x = (random_matrix(10000, 3, rng) * chol.transpose()).rowwise() + mean;
  const auto s = gaussian_stats(x);
  CHECK((s.mu - mean.transpose()).cwiseAbs().maxCoeff() < 0.05);
  CHECK((s.sigma - target).cwiseAbs().maxCoeff() < 0.1);
  CHECK((s.sigma - s.sigma.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("matrix_sqrt_psd examples") {
  CHECK(matrix_sqrt_psd(Eigen::Matrix3d::Identity()).isApprox(Eigen::Matrix3d::Identity(), 1e-14));
  CHECK(matrix_sqrt_psd(Eigen::Vector2d(4, 9).asDiagonal().toDenseMatrix())
            .isApprox(Eigen::Vector2d(2, 3).asDiagonal().toDenseMatrix(), 1e-14));

  Eigen::Matrix2d m;
  m << 2, 1, 1, 2;
  const double r3 = std::sqrt(3.0);
  Eigen::Matrix2d want;
  want << (r3 + 1) / 2, (r3 - 1) / 2, (r3 - 1) / 2, (r3 + 1) / 2;
  const auto s = matrix_sqrt_psd(m);
  CHECK((s - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s * s - m).norm() < 1e-12);

  Eigen::Matrix2d neg;
  neg << 1, 0, 0, -0.5;
  CHECK_THROWS_AS(matrix_sqrt_psd(neg), NotPsdError);
  neg(1, 1) = -1e-9;
  CHECK(matrix_sqrt_psd(neg)(1, 1) == 0.0);
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(matrix_sqrt_psd(asym), ValidationError);
}

TEST_CASE("matrix_sqrt_psd squares back on random PSD matrices") {
  std::mt19937_64 rng(0);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 64);
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng() % d);
    const auto a = random_matrix(d, rank, rng);
    const Eigen::MatrixXd m = a * a.transpose();
    const auto s = matrix_sqrt_psd(m);
    worst = std::max(worst, (s * s - m).norm() / std::max(1.0, m.norm()));
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("frechet_distance reference values") {
  const GaussianStats a = stats_of(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1));
  const GaussianStats b = stats_of(Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Ones(1, 1));
  CHECK(std::abs(frechet_distance(a, b) - 9.0) < 1e-9);

  const auto d1 = stats_of(Eigen::VectorXd::Zero(2), Eigen::Vector2d(1, 4).asDiagonal().toDenseMatrix());
  const auto d2 = stats_of(Eigen::VectorXd::Zero(2), Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix());
  CHECK(std::abs(frechet_distance(d1, d2) - 2.0) < 1e-12);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = stats_of(random_matrix(6, 1, rng), random_spd(6, rng));
    CHECK(frechet_distance(s, s) <= 1e-8);
  }
  // Rank-deficient covariance takes the ridge path.
  const Eigen::MatrixXd v = random_matrix(5, 2, rng);
  const auto low = stats_of(Eigen::VectorXd::Zero(5), v * v.transpose());
  CHECK(frechet_distance(low, low) <= 1e-8);
  const auto zero = stats_of(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3));
  CHECK(frechet_distance(zero, zero) == 0.0);

  CHECK_THROWS_AS(frechet_distance(a, d1), DimensionMismatch);
}

TEST_CASE("frechet_distance matches the diagonal closed form") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> var(0.05, 5.0);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 16);
    Eigen::VectorXd va(d), vb(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      va(i) = var(rng);
      vb(i) = var(rng);
    }
    const auto a = stats_of(random_matrix(d, 1, rng), va.asDiagonal().toDenseMatrix());
    const auto b = stats_of(random_matrix(d, 1, rng), vb.asDiagonal().toDenseMatrix());
    const double oracle = (a.mu - b.mu).squaredNorm() + (va.cwiseSqrt() - vb.cwiseSqrt()).squaredNorm();
    worst = std::max(worst, std::abs(frechet_distance(a, b) - oracle));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("frechet_distance symmetry, translation and scaling") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 10);
    const auto xa = random_matrix(40, d, rng);
    const Eigen::MatrixXd xb = (random_matrix(40, d, rng) * 1.5).rowwise() + random_matrix(1, d, rng).row(0);
    const double f = frechet_distance(gaussian_stats(xa), gaussian_stats(xb));
    CHECK(std::abs(f - frechet_distance(gaussian_stats(xb), gaussian_stats(xa))) < 1e-8);
    CHECK(f >= 0.0);

    const Eigen::RowVectorXd shift = random_matrix(1, d, rng, 5.0);
    const double shifted =
        frechet_distance(gaussian_stats(xa.rowwise() + shift), gaussian_stats(xb.rowwise() + shift));
    CHECK(std::abs(shifted - f) < 1e-8 * std::max(1.0, f));

    const double s = 0.5 + static_cast<double>(rng() % 5);
    const double scaled = frechet_distance(gaussian_stats(s * xa), gaussian_stats(s * xb));
    CHECK(std::abs(scaled - s * s * f) < 1e-8 * s * s * f);
  }
}

TEST_CASE("FAD sweep on fully coupled domains stays small") {
  const auto cfg = SyntheticConfig::blobs(2, 1, 8, 500, 3.0, 1.0, 1.0, 20.0);
  const auto ds = generate_synthetic_manifest(cfg, 8);
  const auto rows = fad_sweep(ds.records, "synthetic");
  REQUIRE(rows.size() == 14);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    if (r.emotion != "all") {
      CHECK(r.fad < 0.5);
      CHECK(r.n_speech == 500);
      CHECK(r.n_music == 500);
    }
  }
}

TEST_CASE("FAD sweep ranks the only shared emotion lowest") {
  auto cfg = SyntheticConfig::blobs(3, 2, 8, 150, 3.0, 1.0, 0.0);
  for (Emotion e : kAllEmotions) {
    auto& music = cfg.music[static_cast<std::size_t>(index_of(e))];
    music.mean = cfg.speech[static_cast<std::size_t>(index_of(e))].mean;
    if (e != Emotion::angry) music.mean(7) += 10.0;
  }
  const auto ds = generate_synthetic_manifest(cfg, 2);
  const auto rows = fad_sweep(ds.records, "synthetic", FadOptions{false, 2});
  for (int layer = 1; layer <= 3; ++layer) {
    const auto per_layer = rows_for(rows, layer);
    REQUIRE(per_layer.size() == 7);
    double angry = 0.0, others = 1e300;
    for (const auto& r : per_layer) {
      if (r.emotion == "angry") angry = r.fad;
      else if (r.emotion != "all") others = std::min(others, r.fad);
    }
    CHECK(angry < others);
  }
}

TEST_CASE("FAD sweep row count and per-cell errors") {
  auto cfg = SyntheticConfig::blobs(12, 1, 6, 4, 3.0, 1.0, 0.5);
  auto ds = generate_synthetic_manifest(cfg, 1);
  CHECK(fad_sweep(ds.records, "m").size() == 84);

  std::erase_if(ds.records, [](const EmbeddingRecord& r) {
    return r.domain == Domain::music && r.emotion == Emotion::calm;
  });
  const auto rows = fad_sweep(ds.records, "m");
  REQUIRE(rows.size() == 84);
  for (const auto& r : rows) {
    if (r.emotion == "calm") {
      CHECK(std::isnan(r.fad));
      CHECK(r.n_music == 0);
      CHECK(r.error.find("music") != std::string::npos);
    } else {
      CHECK(r.error.empty());
    }
  }
}

TEST_CASE("per-frame FAD counts utterances but samples frames") {
  const auto cfg = SyntheticConfig::blobs(1, 4, 6, 3, 3.0, 1.0, 1.0);
  const auto ds = generate_synthetic_manifest(cfg, 1);
  const auto pooled = fad_sweep(ds.records, "m");
  const auto frames = fad_sweep(ds.records, "m", FadOptions{true, 1});
  REQUIRE(frames.size() == 7);
  CHECK(frames[0].n_speech == 3);
  // Pooling over 4 frames shrinks the covariance, so the two modes differ.
  CHECK(frames[6].fad != pooled[6].fad);
}

TEST_CASE("decoupled domains sit far apart relative to within-domain FAD") {
  // Music is shifted by 10 noise standard deviations along the diagonal.
  const auto cfg = SyntheticConfig::blobs(1, 1, 8, 200, 3.0, 1.0, 0.0, 10.0);
  const auto ds = generate_synthetic_manifest(cfg, 4);
  const auto rows = fad_sweep(ds.records, "m");

  // Brute-force within-domain FAD: even vs odd speech records.
  std::vector<Eigen::RowVectorXd> even, odd;
  for (const auto& r : ds.records) {
    if (r.domain != Domain::speech || r.emotion != Emotion::happy) continue;
    (even.size() <= odd.size() ? even : odd).push_back(r.layer_matrix(0).row(0));
  }
  auto stack = [](const std::vector<Eigen::RowVectorXd>& v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), v.front().size());
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i];
    return m;
  };
  const double within = frechet_distance(gaussian_stats(stack(even)), gaussian_stats(stack(odd)));
  for (const auto& r : rows) {
    if (r.emotion == "happy") CHECK(r.fad > 50.0 * within);
  }
}

TEST_CASE("self-distance stays at zero for rank-deficient covariances") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 32);
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng() % d);
    const auto a = random_matrix(d, rank, rng);
    const auto s = stats_of(random_matrix(d, 1, rng), a * a.transpose());
    worst = std::max(worst, std::abs(frechet_distance(s, s)));
  }
  CHECK(worst <= 1e-8);
}
