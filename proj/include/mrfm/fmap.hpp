#pragma once

#include "mrfm/descriptors.hpp"
#include "mrfm/matrix_io.hpp"
#include "mrfm/spectral.hpp"

#include <Eigen/Cholesky>

#include <filesystem>
#include <string>
#include <vector>

namespace mrfm {

/// Spectral map C: source coefficients (columns) to target coefficients (rows).
struct FunctionalMap {
  Matrix matrix;

  Index k() const noexcept { return matrix.rows(); }
  Index source_k() const noexcept { return matrix.cols(); }
  Index target_k() const noexcept { return matrix.rows(); }
};

enum class LadderMode { standard, fast };

inline const char* to_string(LadderMode mode) { return mode == LadderMode::fast ? "fast" : "standard"; }

struct SolverConfig {
  double alpha = 1e-3;
  Index k_min = 10;
  Index k_max = 200;
  Index tau = 10;
  LadderMode mode = LadderMode::fast;

  Index ladder_length() const { return (k_max - k_min) / tau + 1; }
  Index resolution(Index i) const { return k_min + i * tau; }

  void validate() const {
    if (!(alpha >= 0.0)) throw validation_error("alpha must be nonnegative");
    if (k_min < 1) throw validation_error("k_min must be at least 1");
    if (tau < 1) throw validation_error("tau must be at least 1");
    if (k_max < k_min) throw validation_error("k_max must not be smaller than k_min");
    if ((k_max - k_min) % tau != 0) throw validation_error("k_max - k_min must be divisible by tau");
  }
};

/// Maps C^1..C^n with resolutions k^i = k_min + (i-1) tau.
struct MultiResMaps {
  std::vector<FunctionalMap> maps;
  std::vector<Index> resolutions;
  LadderMode provenance = LadderMode::fast;

  Index size() const noexcept { return static_cast<Index>(maps.size()); }
  Index top_resolution() const { return resolutions.back(); }
};

/// Minimizer of ||C A1 - A2||^2 + alpha ||C L1 - L2 C||^2 with L_j = diag(evals_j).
///
/// Row i of C solves (A1 A1^T + alpha D_i) c_i = A1 a2_i with
/// D_i = diag((evals1_s - evals2_i)^2). The Gram matrix is shared by all rows.
inline FunctionalMap solve_fmap(const Matrix& A1, const Matrix& A2, const Vector& evals1, const Vector& evals2,
                                double alpha) {
  const Index k1 = A1.rows();
  const Index k2 = A2.rows();
  if (A1.cols() != A2.cols())
    throw validation_error("descriptor coefficient counts differ: " + std::to_string(A1.cols()) + " vs " +
                           std::to_string(A2.cols()));
  if (evals1.size() != k1 || evals2.size() != k2) throw validation_error("eigenvalue counts do not match coefficients");
  if (!(alpha >= 0.0)) throw validation_error("alpha must be nonnegative");

  const Matrix gram = A1 * A1.transpose();
  const Matrix rhs = A1 * A2.transpose();  // column i is the right-hand side of row i
  FunctionalMap out;
  out.matrix.resize(k2, k1);
  Matrix system(k1, k1);
  Eigen::LLT<Matrix> llt(k1);
  for (Index i = 0; i < k2; ++i) {
    system = gram;
    system.diagonal() += alpha * (evals1.array() - evals2[i]).square().matrix();
    llt.compute(system);
    if (llt.info() != Eigen::Success)
      throw numerical_error("functional map system for row " + std::to_string(i) +
                            " is singular (descriptor coefficients are rank-deficient)");
    out.matrix.row(i) = llt.solve(rhs.col(i)).transpose();
  }
  if (!out.matrix.allFinite()) throw numerical_error("functional map solve produced non-finite entries");
  return out;
}

inline FunctionalMap principal_submatrix(const FunctionalMap& map, Index k_sub) {
  if (k_sub < 1 || k_sub > map.target_k() || k_sub > map.source_k())
    throw validation_error("principal submatrix size " + std::to_string(k_sub) + " exceeds map resolution " +
                           std::to_string(map.k()));
  return FunctionalMap{map.matrix.topLeftCorner(k_sub, k_sub)};
}

/// Multi-resolution ladder. A1/A2 are descriptor coefficients at k_max
/// (smaller resolutions use their leading rows).
inline MultiResMaps build_ladder(const Matrix& A1, const Matrix& A2, const Vector& evals1, const Vector& evals2,
                                 const SolverConfig& cfg) {
  cfg.validate();
  if (A1.rows() < cfg.k_max || A2.rows() < cfg.k_max || evals1.size() < cfg.k_max || evals2.size() < cfg.k_max)
    throw validation_error("k_max = " + std::to_string(cfg.k_max) + " exceeds the basis resolution");
  MultiResMaps ladder;
  ladder.provenance = cfg.mode;
  const Index n = cfg.ladder_length();
  for (Index i = 0; i < n; ++i) ladder.resolutions.push_back(cfg.resolution(i));

  auto solve_at = [&](Index k) {
    try {
      return solve_fmap(A1.topRows(k), A2.topRows(k), evals1.head(k), evals2.head(k), cfg.alpha);
    } catch (const Error& e) {
      throw Error(e.kind(), "resolution " + std::to_string(k) + ": " + e.what());
    }
  };

  if (cfg.mode == LadderMode::fast) {
    const FunctionalMap top = solve_at(cfg.k_max);
    for (Index k : ladder.resolutions) ladder.maps.push_back(principal_submatrix(top, k));
  } else {
    for (Index k : ladder.resolutions) ladder.maps.push_back(solve_at(k));
  }
  return ladder;
}

inline MultiResMaps build_ladder(const SpectralBasis& basis1, const SpectralBasis& basis2, const DescriptorSet& desc1,
                                 const DescriptorSet& desc2, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.k_max > basis1.k() || cfg.k_max > basis2.k())
    throw validation_error("k_max = " + std::to_string(cfg.k_max) + " exceeds the basis resolution");
  const SpectralBasis b1 = truncate(basis1, cfg.k_max);
  const SpectralBasis b2 = truncate(basis2, cfg.k_max);
  return build_ladder(desc1.coefficients(b1), desc2.coefficients(b2), b1.eigenvalues, b2.eigenvalues, cfg);
}

/// C = Phi_t^T S_t Phi_s[T] for a hard map T from target vertices to source
/// vertices (the pullback of functions along T), at resolution k.
inline FunctionalMap fmap_from_pointwise(const PointwiseMap& target_to_source, const SpectralBasis& basis_source,
                                         const SpectralBasis& basis_target, Index k) {
  if (target_to_source.size() != basis_target.size() || target_to_source.target_size != basis_source.size())
    throw validation_error("pointwise map sizes do not match the bases");
  if (k > basis_source.k() || k > basis_target.k()) throw validation_error("resolution exceeds the basis");
  Matrix pulled(basis_target.size(), k);
  for (Index q = 0; q < basis_target.size(); ++q)
    pulled.row(q) = basis_source.eigenfunctions.row(target_to_source.target_of[static_cast<std::size_t>(q)]).head(k);
  return FunctionalMap{basis_target.eigenfunctions.leftCols(k).transpose() * (basis_target.mass.asDiagonal() * pulled)};
}

/// Ground-truth functional map C_gt = Phi_t^T S_t Pi Phi_s at resolution k from
/// a source-to-target correspondence. Pi[q, p] = 1 / |{p : gt(p) = q}| when
/// gt(p) = q, so a bijective gt gives the pullback along its inverse.
inline FunctionalMap gt_fmap(const PointwiseMap& gt, const SpectralBasis& basis_source,
                             const SpectralBasis& basis_target, Index k) {
  if (gt.size() != basis_source.size() || gt.target_size != basis_target.size())
    throw validation_error("ground-truth map sizes do not match the bases");
  if (k > basis_source.k() || k > basis_target.k()) throw validation_error("resolution exceeds the basis");
  Matrix pushed = Matrix::Zero(basis_target.size(), k);
  Vector hits = Vector::Zero(basis_target.size());
  for (Index p = 0; p < gt.size(); ++p) {
    const int q = gt.target_of[static_cast<std::size_t>(p)];
    pushed.row(q) += basis_source.eigenfunctions.row(p).head(k);
    hits[q] += 1.0;
  }
  for (Index q = 0; q < pushed.rows(); ++q)
    if (hits[q] > 1.0) pushed.row(q) /= hits[q];
  return FunctionalMap{basis_target.eigenfunctions.leftCols(k).transpose() * (basis_target.mass.asDiagonal() * pushed)};
}

inline void save_fmap(const FunctionalMap& map, const std::filesystem::path& path) {
  if (path.extension() == ".bin")
    write_matrix_binary(map.matrix, path);
  else
    write_csv(map.matrix, path);
}

inline FunctionalMap load_fmap(const std::filesystem::path& path) {
  FunctionalMap map{path.extension() == ".bin" ? read_matrix_binary(path) : read_csv(path)};
  if (!map.matrix.allFinite()) throw validation_error(path.string() + ": functional map has non-finite entries");
  return map;
}

}  // namespace mrfm
