#include "mrfm/attention.hpp"
#include "support/rotations.hpp"
#include "support/shapes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;
using namespace mrfm;
using namespace mrfm::testing;

namespace {

SpectralBasis random_basis(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  SpectralBasis b;
  b.eigenfunctions.resize(n, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) b.eigenfunctions(i, j) = g(rng);
  b.eigenvalues = Vector::LinSpaced(k, 0.0, static_cast<double>(k));
  b.mass = Vector::Constant(n, 1.0 / static_cast<double>(n));
  return b;
}

Vector exhaustive_residuals(const FunctionalMap& C, const SpectralBasis& s, const SpectralBasis& t) {
  const Index k1 = C.source_k(), k2 = C.target_k();
  Vector r(t.size());
  for (Index q = 0; q < t.size(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    for (Index p = 0; p < s.size(); ++p) {
      const Vector moved = C.matrix * s.eigenfunctions.row(p).head(k1).transpose();
      best = std::min(best, (t.eigenfunctions.row(q).head(k2).transpose() - moved).norm());
    }
    r[q] = best;
  }
  return r;
}

fs::path temp_file(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "mrfm_test_attention";
  fs::create_directories(dir);
  std::ofstream(dir / name) << text;
  return dir / name;
}

ResidualFeatures features_from(const Matrix& per_point, std::vector<Index> resolutions) {
  ResidualFeatures f;
  f.per_point = per_point;
  f.resolutions = std::move(resolutions);
  return f;
}

}  // namespace

TEST(Residuals, IdentityMapOnSameBasisIsZero) {
  const SpectralBasis b = eigenbasis(bumpy_blob(6, 1), 20);
  EXPECT_LE(alignment_residuals(FunctionalMap{Matrix::Identity(20, 20)}, b, b).maxCoeff(), 1e-12);
}

TEST(Residuals, SingleCandidate) {
  const SpectralBasis s = random_basis(1, 6, 1), t = random_basis(40, 6, 2);
  std::mt19937_64 rng(3);
  const FunctionalMap C{Matrix::Random(6, 6)};
  const Vector r = alignment_residuals(C, s, t);
  for (Index q = 0; q < 40; ++q) {
    const Vector delta = t.eigenfunctions.row(q).transpose() - C.matrix * s.eigenfunctions.row(0).transpose();
    EXPECT_NEAR(r[q], delta.norm(), 1e-13);
  }
}

TEST(Residuals, MatchExhaustiveSearch) {
  const SpectralBasis s = random_basis(300, 12, 4), t = random_basis(250, 12, 5);
  const FunctionalMap C{Matrix::Random(8, 10)};
  EXPECT_LE((alignment_residuals(C, s, t) - exhaustive_residuals(C, s, t)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Residuals, ManyBlocksMatchExhaustiveSearch) {
  // Enough candidates that the search works through several row blocks.
  const SpectralBasis s = random_basis(3000, 4, 6), t = random_basis(700, 4, 7);
  const FunctionalMap C{Matrix::Random(4, 4)};
  const EmbeddingSearch search = aligned_embedding_search(C, s, t);
  ASSERT_LT(search.block_rows(), 700);
  EXPECT_LE((alignment_residuals(C, s, t) - exhaustive_residuals(C, s, t)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Residuals, ResolutionMismatch) {
  const SpectralBasis s = random_basis(30, 5, 8), t = random_basis(30, 5, 9);
  EXPECT_THROW(alignment_residuals(FunctionalMap{Matrix::Identity(6, 6)}, s, t), Error);
}

TEST(Residuals, PermutationEquivariant) {
  const SpectralBasis s = random_basis(200, 8, 10), t = random_basis(150, 8, 11);
  const FunctionalMap C{Matrix::Random(8, 8)};
  const auto perm = random_permutation(150, 12);
  SpectralBasis tp = t;
  for (Index q = 0; q < 150; ++q) tp.eigenfunctions.row(perm[static_cast<std::size_t>(q)]) = t.eigenfunctions.row(q);
  const Vector r = alignment_residuals(C, s, t), rp = alignment_residuals(C, s, tp);
  for (Index q = 0; q < 150; ++q) EXPECT_EQ(rp[perm[static_cast<std::size_t>(q)]], r[q]);
}

TEST(Features, IdentityLadderIsZero) {
  const SpectralBasis b = eigenbasis(bumpy_blob(6, 2), 30);
  const DescriptorSet d = wks(b);
  SolverConfig cfg;
  cfg.k_max = 30;
  const ResidualFeatures f = residual_features(build_ladder(b, b, d, d, cfg), b, b);
  EXPECT_EQ(f.ladder_length(), 3);
  EXPECT_LE(f.per_point.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Features, ColumnsAreScaledResiduals) {
  const SpectralBasis s = eigenbasis(bumpy_blob(6, 3), 30), t = eigenbasis(bumpy_blob(6, 4), 30);
  SolverConfig cfg;
  cfg.k_max = 30;
  const MultiResMaps ladder = build_ladder(s, t, wks(s), wks(t), cfg);
  const ResidualFeatures f = residual_features(ladder, s, t);
  ASSERT_EQ(f.per_point.cols(), 3);
  for (Index i = 0; i < 3; ++i) {
    const Index k = ladder.resolutions[static_cast<std::size_t>(i)];
    const Vector r = exhaustive_residuals(ladder.maps[static_cast<std::size_t>(i)], s, t);
    EXPECT_LE((f.per_point.col(i) - r / std::sqrt(static_cast<double>(k))).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((f.raw_residuals(i) - r).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_GE(f.per_point.minCoeff(), 0.0);

  cfg.k_min = 30;
  EXPECT_EQ(residual_features(build_ladder(s, t, wks(s), wks(t), cfg), s, t).per_point.cols(), 1);
}

TEST(Features, InvariantUnderBasisRotation) {
  // Two different surfaces of revolution share the dihedral symmetry and so
  // have exactly paired eigenvalues.
  const TriMesh ms = revolution_surface(24, 36, 2.0, [](double s) { return 1.0 + 0.25 * std::sin(2.0 * 3.14159 * s); });
  const TriMesh mt = revolution_surface(24, 36, 2.2, [](double s) { return 0.9 + 0.2 * s; });
  const SpectralBasis s = eigenbasis(ms, 30), t = eigenbasis(mt, 30);
  const DescriptorSet ds = wks(s), dt = wks(t);
  SolverConfig cfg;
  cfg.k_max = 30;
  const MultiResMaps ladder = build_ladder(s, t, ds, dt, cfg);
  const ResidualFeatures f = residual_features(ladder, s, t);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const BasisRotation r1 = cut_respecting_rotation(s, 2 * seed, ladder.resolutions);
    const BasisRotation r2 = cut_respecting_rotation(t, 2 * seed + 1, ladder.resolutions);
    ASSERT_GE(largest_block(r1), 2);
    const SpectralBasis sr = apply_rotation(s, r1), tr = apply_rotation(t, r2);
    const MultiResMaps rotated = build_ladder(sr, tr, ds, dt, cfg);
    const ResidualFeatures fr = residual_features(rotated, sr, tr);
    EXPECT_LE((fr.per_point - f.per_point).cwiseAbs().maxCoeff(), 1e-8 * f.per_point.cwiseAbs().maxCoeff());
  }
}

TEST(Weights, Uniform) {
  const AttentionWeights w = weights_uniform(20);
  for (Index i = 0; i < 20; ++i) EXPECT_DOUBLE_EQ(w.weights[i], 0.05);
  EXPECT_EQ(weights_uniform(1).weights[0], 1.0);
  EXPECT_NEAR(w.weights.sum(), 1.0, 1e-15);
  EXPECT_THROW(weights_uniform(0), Error);
}

TEST(Weights, MeanResidualHandSoftmax) {
  // Means 1 and 2 at T = 1.
  const ResidualFeatures f = features_from((Matrix(2, 2) << 1, 2, 1, 2).finished(), {10, 20});
  const AttentionWeights w = weights_mean_residual(f, 1.0);
  const double a = std::exp(-1.0), b = std::exp(-2.0);
  EXPECT_NEAR(w.weights[0], a / (a + b), 1e-15);
  EXPECT_NEAR(w.weights[1], b / (a + b), 1e-15);
  EXPECT_NEAR(w.weights[0], 0.7311, 5e-5);
  EXPECT_NEAR(w.weights[1], 0.2689, 5e-5);
}

TEST(Weights, EqualColumnsGiveUniform) {
  const Matrix col = Matrix::Random(50, 1).cwiseAbs();
  const ResidualFeatures f = features_from(col.replicate(1, 5), {10, 20, 30, 40, 50});
  const AttentionWeights w = weights_mean_residual(f, std::nullopt);
  EXPECT_LE((w.weights.array() - 0.2).abs().maxCoeff(), 1e-15);
}

TEST(Weights, OrderedOppositeToMeans) {
  const ResidualFeatures f = features_from(Matrix::Random(80, 7).cwiseAbs(), {10, 20, 30, 40, 50, 60, 70});
  const Vector m = mean_residuals(f);
  for (std::optional<double> t : {std::optional<double>(), std::optional<double>(0.3)}) {
    const AttentionWeights w = weights_mean_residual(f, t);
    EXPECT_NEAR(w.weights.sum(), 1.0, 1e-12);
    for (Index i = 0; i < 7; ++i)
      for (Index j = 0; j < 7; ++j)
        if (m[i] < m[j]) EXPECT_GT(w.weights[i], w.weights[j]);
  }
}

TEST(Weights, ShiftInvariantSoftmax) {
  const Vector logits = Vector::Random(9);
  EXPECT_LE((softmax(logits) - softmax(logits.array() + 123.0)).cwiseAbs().maxCoeff(), 1e-14);
  const ResidualFeatures f = features_from(Matrix::Random(30, 4).cwiseAbs(), {1, 2, 3, 4});
  const ResidualFeatures g = features_from(f.per_point.array() + 5.0, {1, 2, 3, 4});
  EXPECT_LE((weights_mean_residual(f, 0.7).weights - weights_mean_residual(g, 0.7).weights).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Weights, AreaWeightedMean) {
  const ResidualFeatures f = features_from((Matrix(2, 1) << 1.0, 3.0).finished(), {10});
  const Vector areas = (Vector(2) << 3.0, 1.0).finished();
  EXPECT_DOUBLE_EQ(mean_residuals(f, &areas)[0], 1.5);
  EXPECT_DOUBLE_EQ(mean_residuals(f)[0], 2.0);
}

TEST(Weights, RejectsNonPositiveTemperature) {
  const ResidualFeatures f = features_from(Matrix::Ones(3, 2), {1, 2});
  EXPECT_THROW(weights_mean_residual(f, 0.0), Error);
  EXPECT_THROW(MeanResidualAttention(-1.0), Error);
}

TEST(Weights, ExternalFile) {
  const AttentionWeights u = weights_external(temp_file("u.txt", "1\n1\n1\n1\n"), 4);
  EXPECT_LE((u.weights.array() - 0.25).abs().maxCoeff(), 1e-15);
  const AttentionWeights two = weights_external(temp_file("two.txt", "2\n0\n"), 2);
  EXPECT_EQ(two.weights[0], 1.0);
  EXPECT_EQ(two.weights[1], 0.0);
  EXPECT_THROW(weights_external(temp_file("neg.txt", "1\n-0.5\n"), 2), Error);
  EXPECT_THROW(weights_external(temp_file("count.txt", "1\n2\n3\n"), 2), Error);
  EXPECT_THROW(weights_external(temp_file("zero.txt", "0\n0\n"), 2), Error);
  EXPECT_THROW(weights_external(temp_file("text.txt", "1\nabc\n"), 2), Error);
}

TEST(Strategies, DispatchToWeightFunctions) {
  const ResidualFeatures f = features_from(Matrix::Random(20, 3).cwiseAbs(), {10, 20, 30});
  const Vector areas = Vector::Constant(20, 0.05);
  EXPECT_EQ(UniformAttention().weigh(f, areas).weights, weights_uniform(3).weights);
  EXPECT_EQ(MeanResidualAttention(0.5).weigh(f, areas).weights, weights_mean_residual(f, 0.5).weights);
  const fs::path file = temp_file("three.txt", "1 2 3");
  EXPECT_EQ(ExternalAttention(file).weigh(f, areas).weights, weights_external(file, 3).weights);
}
