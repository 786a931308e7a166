#pragma once

#include "mrfm/attention.hpp"
#include "mrfm/embedding.hpp"
#include "mrfm/fmap.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace mrfm {

/// Row-stochastic soft correspondence Pi (n_target x n_source),
/// Pi_qp = exp(-delta_qp / t) / sum_p' exp(-delta_qp' / t).
///
/// Small maps (n_target * n_source <= kDenseLimit) are materialized once;
/// larger ones regenerate row blocks on demand so memory stays bounded.
class SoftPointwiseMap {
 public:
  static constexpr double kDenseLimit = 4e6;
  static constexpr double kUnderflowExponent = 700.0;

  SoftPointwiseMap(EmbeddingSearch search, double temperature, double dense_limit = kDenseLimit)
      : search_(std::move(search)), temperature_(temperature) {
    if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
      throw validation_error("soft map temperature must be positive");
    if (static_cast<double>(rows()) * static_cast<double>(cols()) <= dense_limit) {
      RowMatrix full;
      generate(0, rows(), full);
      dense_ = std::move(full);
    }
  }

  Index rows() const noexcept { return search_.num_queries(); }
  Index cols() const noexcept { return search_.num_candidates(); }
  double temperature() const noexcept { return temperature_; }
  bool materialized() const noexcept { return dense_.has_value(); }
  Index block_rows() const noexcept { return search_.block_rows(); }

  /// Rows [q0, q0 + count) of Pi.
  void row_block(Index q0, Index count, RowMatrix& out) const {
    if (dense_) {
      out = dense_->middleRows(q0, count);
      return;
    }
    generate(q0, count, out);
  }

  RowMatrix dense() const {
    if (dense_) return *dense_;
    RowMatrix full;
    generate(0, rows(), full);
    return full;
  }

 private:
  void generate(Index q0, Index count, RowMatrix& out) const {
    search_.distance_block(q0, count, out);
    for (Index r = 0; r < count; ++r) {
      auto row = out.row(r);
      const double lowest = row.minCoeff();
      // Weights below exp(-700) would be subnormal and crawl through the GEMM that follows.
      const auto scaled = (row.array() - lowest) / temperature_;
      row = (scaled > kUnderflowExponent).select(0.0, (-scaled).exp());
      row /= row.sum();
    }
  }

  EmbeddingSearch search_;
  double temperature_;
  std::optional<RowMatrix> dense_;
};

inline SoftPointwiseMap soft_pointwise_map(const FunctionalMap& map, const SpectralBasis& basis_source,
                                           const SpectralBasis& basis_target, double temperature,
                                           double dense_limit = SoftPointwiseMap::kDenseLimit) {
  return SoftPointwiseMap(aligned_embedding_search(map, basis_source, basis_target), temperature, dense_limit);
}

/// Default soft-map temperature: 0.1 x the median of the per-row minimum
/// distances, floored at 1e-10 x the RMS norm of the target embedding rows.
inline double default_soft_temperature(const Vector& residuals, const SpectralBasis& basis_target, Index k) {
  std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
  if (r.empty()) throw validation_error("empty residual vector");
  const auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
  std::nth_element(r.begin(), mid, r.end());
  double median = *mid;
  if (r.size() % 2 == 0) median = 0.5 * (median + *std::max_element(r.begin(), mid));
  const double rms = std::sqrt(basis_target.eigenfunctions.leftCols(k).rowwise().squaredNorm().mean());
  return std::max(0.1 * median, 1e-10 * std::max(rms, 1e-300));
}

/// C_hat = Phi_t^T S_t Pi Phi_s at the resolution of the given bases,
/// accumulated one row block of Pi at a time.
inline FunctionalMap upsample_fmap(const SoftPointwiseMap& soft, const SpectralBasis& basis_source,
                                   const SpectralBasis& basis_target) {
  if (soft.rows() != basis_target.size() || soft.cols() != basis_source.size())
    throw validation_error("soft map dimensions do not match the bases");
  const Matrix& phi_s = basis_source.eigenfunctions;
  const Matrix weighted_t = basis_target.mass.asDiagonal() * basis_target.eigenfunctions;
  Matrix out = Matrix::Zero(basis_target.k(), basis_source.k());
  RowMatrix block;
  Matrix pulled;
  const Index step = soft.block_rows();
  for (Index q0 = 0; q0 < soft.rows(); q0 += step) {
    const Index count = std::min(step, soft.rows() - q0);
    soft.row_block(q0, count, block);
    pulled.noalias() = block * phi_s;
    out.noalias() += weighted_t.middleRows(q0, count).transpose() * pulled;
  }
  return FunctionalMap{std::move(out)};
}

/// Every ladder map upsampled to the top resolution.
inline std::vector<FunctionalMap> upsample_ladder(const MultiResMaps& ladder, const SpectralBasis& basis_source,
                                                  const SpectralBasis& basis_target,
                                                  const std::vector<double>& temperatures) {
  if (static_cast<Index>(temperatures.size()) != ladder.size())
    throw validation_error("need one soft-map temperature per ladder map");
  const Index top = ladder.top_resolution();
  const SpectralBasis src_top = truncate(basis_source, top);
  const SpectralBasis tgt_top = truncate(basis_target, top);
  std::vector<FunctionalMap> out;
  for (Index i = 0; i < ladder.size(); ++i) {
    const auto soft = soft_pointwise_map(ladder.maps[static_cast<std::size_t>(i)], basis_source, basis_target,
                                         temperatures[static_cast<std::size_t>(i)]);
    out.push_back(upsample_fmap(soft, src_top, tgt_top));
  }
  return out;
}

/// C_bar = sum_i alpha^i C_hat^i. Maps with zero weight are skipped.
inline FunctionalMap assemble(const MultiResMaps& ladder, const AttentionWeights& weights,
                              const SpectralBasis& basis_source, const SpectralBasis& basis_target,
                              const std::vector<double>& temperatures) {
  if (weights.size() != ladder.size())
    throw validation_error("attention weight count " + std::to_string(weights.size()) + " does not match ladder length " +
                           std::to_string(ladder.size()));
  if (static_cast<Index>(temperatures.size()) != ladder.size())
    throw validation_error("need one soft-map temperature per ladder map");
  const Index top = ladder.top_resolution();
  const SpectralBasis src_top = truncate(basis_source, top);
  const SpectralBasis tgt_top = truncate(basis_target, top);
  Matrix sum = Matrix::Zero(top, top);
  for (Index i = 0; i < ladder.size(); ++i) {
    const double w = weights.weights[i];
    if (w == 0.0) continue;
    const auto soft = soft_pointwise_map(ladder.maps[static_cast<std::size_t>(i)], basis_source, basis_target,
                                         temperatures[static_cast<std::size_t>(i)]);
    sum += w * upsample_fmap(soft, src_top, tgt_top).matrix;
  }
  return FunctionalMap{std::move(sum)};
}

/// Hard correspondences from nearest neighbours between Phi_s C^T and Phi_t.
struct PointToPoint {
  PointwiseMap target_to_source;  // q -> argmin_p
  PointwiseMap source_to_target;  // p -> argmin_q over the same distances
};

inline PointToPoint extract_p2p(const FunctionalMap& map, const SpectralBasis& basis_source,
                                const SpectralBasis& basis_target) {
  const auto search = aligned_embedding_search(map, basis_source, basis_target);
  PointToPoint out;
  out.target_to_source = PointwiseMap::build(search.nearest_candidates().index, basis_source.size());
  out.source_to_target = PointwiseMap::build(search.nearest_queries().index, basis_target.size());
  return out;
}

inline PointwiseMap extract_target_to_source(const FunctionalMap& map, const SpectralBasis& basis_source,
                                             const SpectralBasis& basis_target) {
  return PointwiseMap::build(aligned_embedding_search(map, basis_source, basis_target).nearest_candidates().index,
                             basis_source.size());
}

/// Alternates hard extraction and re-projection while growing the resolution
/// by `step_size` per step, starting from the resolution of `map`.
inline FunctionalMap iterative_refine(const FunctionalMap& map, const SpectralBasis& basis_source,
                                      const SpectralBasis& basis_target, Index steps, Index step_size) {
  if (steps < 0 || step_size < 0) throw validation_error("refinement steps and step size must be nonnegative");
  if (map.source_k() != map.target_k()) throw validation_error("refinement needs a square functional map");
  const Index final_k = map.k() + steps * step_size;
  if (final_k > basis_source.k() || final_k > basis_target.k())
    throw validation_error("refinement to resolution " + std::to_string(final_k) + " exceeds the basis resolution");
  FunctionalMap current = map;
  for (Index s = 0; s < steps; ++s) {
    const PointwiseMap t2s = extract_target_to_source(current, basis_source, basis_target);
    current = fmap_from_pointwise(t2s, basis_source, basis_target, current.k() + step_size);
  }
  return current;
}

}  // namespace mrfm
