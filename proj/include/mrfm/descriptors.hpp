#pragma once

#include "mrfm/matrix_io.hpp"
#include "mrfm/mesh.hpp"
#include "mrfm/spectral.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace mrfm {

/// Per-vertex probe functions, one descriptor per column.
struct DescriptorSet {
  Matrix values;  // n x d

  Index dimension() const noexcept { return values.cols(); }
  Index size() const noexcept { return values.rows(); }

  /// Spectral coefficients (k x d) in the given basis.
  Matrix coefficients(const SpectralBasis& basis) const { return project(basis, values); }
};

inline constexpr Index kDefaultWksEnergies = 128;
inline constexpr double kDefaultWksSigmaScale = 7.0;

namespace detail {

// Indices of eigenvalues treated as nonzero (relative to the largest one).
inline std::vector<Index> positive_eigen_indices(const Vector& eigenvalues) {
  const double top = eigenvalues.size() ? eigenvalues.maxCoeff() : 0.0;
  std::vector<Index> idx;
  for (Index i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues[i] > 1e-9 * top && eigenvalues[i] > 0.0) idx.push_back(i);
  return idx;
}

inline Vector linspace(double lo, double hi, Index count) {
  if (count == 1) return Vector::Constant(1, 0.5 * (lo + hi));
  return Vector::LinSpaced(count, lo, hi);
}

}  // namespace detail

/// Wave Kernel Signature.
///
/// For log-energies e_j evenly spaced over [log l_2 + 2s, log l_k - 2s] with
/// s = sigma_scale * (log l_k - log l_2) / num_energies:
///   WKS(x, e) = sum_i phi_i(x)^2 g_i(e) / sum_i g_i(e),
///   g_i(e) = exp(-(e - log l_i)^2 / (2 s^2)),
/// where the sums run over the nonzero eigenvalues only.
inline DescriptorSet wks(const SpectralBasis& basis, Index num_energies = kDefaultWksEnergies,
                         double sigma_scale = kDefaultWksSigmaScale) {
  if (num_energies < 1) throw validation_error("WKS needs at least one energy level");
  if (!(sigma_scale > 0.0)) throw validation_error("WKS sigma scale must be positive");
  const auto pos = detail::positive_eigen_indices(basis.eigenvalues);
  if (pos.size() < 2) throw validation_error("WKS requires at least 2 positive eigenvalues in the basis");

  const auto K = static_cast<Index>(pos.size());
  Vector log_ev(K);
  Matrix phi_sq(basis.size(), K);
  for (Index j = 0; j < K; ++j) {
    log_ev[j] = std::log(basis.eigenvalues[pos[static_cast<std::size_t>(j)]]);
    phi_sq.col(j) = basis.eigenfunctions.col(pos[static_cast<std::size_t>(j)]).array().square();
  }
  double e_min = log_ev[0];
  double e_max = log_ev[K - 1];
  const double sigma = sigma_scale * (e_max - e_min) / static_cast<double>(num_energies);
  if (!(sigma > 0.0)) throw validation_error("WKS energy range is empty (all positive eigenvalues are equal)");
  e_min += 2.0 * sigma;
  e_max -= 2.0 * sigma;
  const Vector energies = detail::linspace(e_min, e_max, num_energies);

  Matrix weights(K, num_energies);
  for (Index e = 0; e < num_energies; ++e)
    for (Index j = 0; j < K; ++j) {
      const double d = energies[e] - log_ev[j];
      weights(j, e) = std::exp(-d * d / (2.0 * sigma * sigma));
    }
  DescriptorSet out;
  out.values = phi_sq * weights;
  for (Index e = 0; e < num_energies; ++e) out.values.col(e) /= weights.col(e).sum();
  return out;
}

/// Heat Kernel Signature with log-spaced times over [4 ln10 / l_k, 4 ln10 / l_2],
/// each column divided by the heat trace sum_i exp(-l_i t).
inline DescriptorSet hks(const SpectralBasis& basis, Index num_times = 100) {
  if (num_times < 1) throw validation_error("HKS needs at least one time sample");
  const auto pos = detail::positive_eigen_indices(basis.eigenvalues);
  if (pos.size() < 2) throw validation_error("HKS requires at least 2 positive eigenvalues in the basis");
  const double t_min = 4.0 * std::log(10.0) / basis.eigenvalues[pos.back()];
  const double t_max = 4.0 * std::log(10.0) / basis.eigenvalues[pos.front()];
  const Vector log_t = detail::linspace(std::log(t_min), std::log(t_max), num_times);

  const Index k = basis.k();
  Matrix weights(k, num_times);
  for (Index t = 0; t < num_times; ++t)
    for (Index i = 0; i < k; ++i) weights(i, t) = std::exp(-std::max(basis.eigenvalues[i], 0.0) * std::exp(log_t[t]));
  DescriptorSet out;
  out.values = basis.eigenfunctions.array().square().matrix() * weights;
  for (Index t = 0; t < num_times; ++t) out.values.col(t) /= weights.col(t).sum();
  return out;
}

/// Reads per-vertex features from CSV (or the binary matrix layout for `.bin`).
inline DescriptorSet import_descriptors(const std::filesystem::path& path, Index num_vertices) {
  DescriptorSet out;
  out.values = path.extension() == ".bin" ? read_matrix_binary(path) : read_csv(path);
  if (out.values.rows() != num_vertices)
    throw validation_error(path.string() + ": descriptor file has " + std::to_string(out.values.rows()) +
                           " rows but the mesh has " + std::to_string(num_vertices) + " vertices");
  if (out.values.cols() < 1) throw validation_error(path.string() + ": descriptor file has no columns");
  if (!out.values.allFinite()) throw validation_error(path.string() + ": descriptor file has non-finite entries");
  return out;
}

inline DescriptorSet import_descriptors(const std::filesystem::path& path, const TriMesh& mesh) {
  return import_descriptors(path, mesh.num_vertices());
}

inline void export_descriptors(const DescriptorSet& desc, const std::filesystem::path& path) {
  if (path.extension() == ".bin")
    write_matrix_binary(desc.values, path);
  else
    write_csv(desc.values, path);
}

}  // namespace mrfm
