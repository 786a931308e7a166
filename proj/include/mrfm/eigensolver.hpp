#pragma once

#include "mrfm/laplacian.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace mrfm {

struct EigensolverOptions {
  double shift = -1e-8;          // sigma of the shift-invert operator (W - sigma S)^-1 S
  double tolerance = 1e-8;       // ||W x - l S x|| <= tol * max(1, |l|) * ||S x||
  int max_restarts = 200;
  Index block_size = 10;
  Index dense_threshold = 600;   // meshes up to this size use a dense solver
  std::uint64_t seed = 0x6d72666dULL;
};

struct GeneralizedEigenpairs {
  Vector values;   // ascending
  Matrix vectors;  // S-orthonormal columns
  int restarts = 0;
};

namespace detail {

// Fixes the sign so that the entry of largest magnitude is positive
// (first such entry on ties). Keeps outputs reproducible across runs.
inline void canonical_sign(Eigen::Ref<Vector> v) {
  Index arg = 0;
  double best = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > best * (1.0 + 1e-12)) {
      best = std::abs(v[i]);
      arg = i;
    }
  }
  if (v[arg] < 0.0) v = -v;
}

inline GeneralizedEigenpairs dense_generalized(const SparseMatrix& W, const Vector& mass, Index k) {
  const Matrix Wd = Matrix(W);
  const Matrix Sd = mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(Wd, Sd, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw numerical_error("dense generalized eigensolver failed");
  GeneralizedEigenpairs out;
  out.values = es.eigenvalues().head(k);
  out.vectors = es.eigenvectors().leftCols(k);
  return out;
}

// Block Krylov expansion of the shift-invert operator with thick restarts and
// Rayleigh-Ritz extraction, all in the mass inner product. Vectors in `locked`
// are exact eigenvectors that the search space is kept orthogonal to.
class ShiftInvertKrylov {
 public:
  ShiftInvertKrylov(const SparseMatrix& W, const Vector& mass, const EigensolverOptions& opt)
      : W_(W), mass_(mass), opt_(opt), rng_(opt.seed) {
    SparseMatrix shifted = W;
    if (opt.shift != 0.0) {
      for (Index i = 0; i < W.rows(); ++i) shifted.coeffRef(i, i) -= opt.shift * mass[i];
    }
    factor_.compute(shifted);
    if (factor_.info() != Eigen::Success)
      throw numerical_error("factorization of the shifted stiffness matrix failed");
  }

  GeneralizedEigenpairs solve(Index k, const Matrix& locked) {
    const Index n = W_.rows();
    const Index nl = locked.cols();
    const Index want = k - nl;  // eigenpairs still to find
    GeneralizedEigenpairs out;
    if (want <= 0) {
      out.values = Vector::Zero(k);
      out.vectors = locked.leftCols(k);
      return finish(out);
    }
    const Index space = n - nl;
    const Index b = std::min(opt_.block_size, want);
    const Index m_max = std::min(space, std::max<Index>(2 * want + 2 * b, want + 4 * b));
    locked_ = locked;

    V_.resize(n, m_max);
    AV_.resize(n, m_max);
    H_ = Matrix::Zero(m_max, m_max);
    Index cols = 0;

    Matrix block = random_block(n, b);
    Vector theta;
    Matrix X, AX;
    for (int restart = 0;; ++restart) {
      // Expand the block Krylov space until full.
      while (cols < m_max) {
        const Index c0 = cols;
        for (Index j = 0; j < block.cols() && cols < m_max; ++j) {
          if (append(block.col(j), cols)) ++cols;
        }
        if (cols == c0) {
          // Krylov space exhausted; continue with fresh random directions.
          block = random_block(n, b);
          for (Index j = 0; j < block.cols() && cols < m_max; ++j) {
            if (append(block.col(j), cols)) ++cols;
          }
          if (cols == c0) break;
        }
        const Index nb = cols - c0;
        AV_.middleCols(c0, nb) = factor_.solve(mass_.asDiagonal() * V_.middleCols(c0, nb));
        const Matrix h = V_.leftCols(cols).transpose() * (mass_.asDiagonal() * AV_.middleCols(c0, nb));
        H_.block(0, c0, cols, nb) = h;
        H_.block(c0, 0, nb, cols) = h.transpose();
        block = AV_.middleCols(c0, nb);
      }

      // Rayleigh-Ritz on the projected operator; largest theta <-> smallest lambda.
      const Matrix Hs = 0.5 * (H_.topLeftCorner(cols, cols) + H_.topLeftCorner(cols, cols).transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> es(Hs);
      if (es.info() != Eigen::Success) throw numerical_error("projected eigenproblem failed");
      const Index keep = std::min(cols, std::max(want, std::min(cols - b, want + (m_max - want) / 2)));
      theta = es.eigenvalues().reverse().head(keep);
      const Matrix Y = es.eigenvectors().rowwise().reverse().leftCols(keep);
      X = V_.leftCols(cols) * Y;
      AX = AV_.leftCols(cols) * Y;

      const Index check = std::min(want, keep);
      const Matrix WX = W_ * X.leftCols(check);
      std::vector<Index> unconverged;
      for (Index i = 0; i < check; ++i) {
        const double lambda = opt_.shift + 1.0 / theta[i];
        const Vector SX = mass_.cwiseProduct(X.col(i));
        const double res = (WX.col(i) - lambda * SX).norm();
        if (!(res <= opt_.tolerance * std::max(1.0, std::abs(lambda)) * SX.norm())) unconverged.push_back(i);
      }
      out.restarts = restart;
      if (unconverged.empty() && check == want) break;
      if (restart >= opt_.max_restarts || cols < m_max) {
        const Index achieved = unconverged.empty() ? check : unconverged.front();
        throw numerical_error("eigensolver did not converge: " + std::to_string(achieved + nl) + " of " +
                              std::to_string(k) + " eigenpairs after " + std::to_string(restart) + " restarts");
      }

      // Thick restart: keep the leading Ritz vectors, continue from residuals.
      V_.leftCols(keep) = X;
      AV_.leftCols(keep) = AX;
      H_.setZero();
      H_.topLeftCorner(keep, keep) = theta.asDiagonal();
      cols = keep;
      block.resize(n, b);
      Index filled = 0;
      for (Index i : unconverged) {
        if (filled == b) break;
        block.col(filled++) = AX.col(i) - theta[i] * X.col(i);
      }
      for (Index i = check; i < keep && filled < b; ++i) block.col(filled++) = AX.col(i) - theta[i] * X.col(i);
      if (filled < b) block.rightCols(b - filled) = random_block(n, b - filled);
    }

    out.values.resize(k);
    out.vectors.resize(n, k);
    out.vectors.leftCols(nl) = locked;
    for (Index i = 0; i < nl; ++i) out.values[i] = 0.0;
    out.vectors.rightCols(want) = X.leftCols(want);
    return finish(out);
  }

 private:
  Matrix random_block(Index n, Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix Z(n, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < n; ++i) Z(i, j) = normal(rng_);
    return Z;
  }

  // Two passes of classical Gram-Schmidt against locked and current columns.
  bool append(const Eigen::Ref<const Vector>& z_in, Index cols) {
    Vector z = z_in;
    const double initial = std::sqrt(z.dot(mass_.cwiseProduct(z)));
    if (!(initial > 0.0) || !std::isfinite(initial)) return false;
    for (int pass = 0; pass < 2; ++pass) {
      if (locked_.cols() > 0) z -= locked_ * (locked_.transpose() * mass_.cwiseProduct(z));
      if (cols > 0) z -= V_.leftCols(cols) * (V_.leftCols(cols).transpose() * mass_.cwiseProduct(z));
    }
    const double norm = std::sqrt(z.dot(mass_.cwiseProduct(z)));
    if (!(norm > 1e-10 * initial)) return false;
    V_.col(cols) = z / norm;
    return true;
  }

  GeneralizedEigenpairs finish(GeneralizedEigenpairs out) const {
    const Index k = out.vectors.cols();
    for (Index i = 0; i < k; ++i) {
      auto x = out.vectors.col(i);
      x /= std::sqrt(x.dot(mass_.cwiseProduct(x)));
      const Vector Wx = W_ * x;
      out.values[i] = x.dot(Wx);
    }
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return out.values[a] < out.values[b]; });
    GeneralizedEigenpairs sorted;
    sorted.restarts = out.restarts;
    sorted.values.resize(k);
    sorted.vectors.resize(out.vectors.rows(), k);
    for (Index i = 0; i < k; ++i) {
      sorted.values[i] = out.values[order[static_cast<std::size_t>(i)]];
      sorted.vectors.col(i) = out.vectors.col(order[static_cast<std::size_t>(i)]);
    }
    return sorted;
  }

  const SparseMatrix& W_;
  const Vector& mass_;
  EigensolverOptions opt_;
  std::mt19937_64 rng_;
  Eigen::SimplicialLDLT<SparseMatrix> factor_;
  Matrix locked_;
  Matrix V_, AV_, H_;
};

}  // namespace detail

/// First k eigenpairs of W x = lambda S x (S = diag(mass)) in ascending order.
///
/// The kernel of a connected cotangent Laplacian is the constant function; it
/// is deflated exactly and the remaining pairs come from a block Krylov
/// iteration on (W - sigma S)^-1 S with thick restarts. Small problems are
/// handed to a dense solver.
inline GeneralizedEigenpairs smallest_generalized_eigenpairs(const SparseMatrix& W, const Vector& mass, Index k,
                                                             const EigensolverOptions& opt = {}) {
  const Index n = W.rows();
  if (k < 1) throw validation_error("requested eigenpair count must be positive");
  if (k > n) throw validation_error("requested " + std::to_string(k) + " eigenpairs but the mesh has only " +
                                    std::to_string(n) + " vertices");

  GeneralizedEigenpairs out;
  if (n <= opt.dense_threshold || 3 * k > n) {
    out = detail::dense_generalized(W, mass, k);
  } else {
    Matrix constant = Vector::Ones(n) / std::sqrt(mass.sum());
    detail::ShiftInvertKrylov solver(W, mass, opt);
    out = solver.solve(k, constant);
  }
  for (Index i = 0; i < k; ++i) detail::canonical_sign(out.vectors.col(i));
  return out;
}

}  // namespace mrfm
