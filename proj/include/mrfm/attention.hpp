#pragma once

#include "mrfm/embedding.hpp"
#include "mrfm/fmap.hpp"
#include "mrfm/matrix_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mrfm {

namespace detail {

inline void check_map_against_bases(const FunctionalMap& map, const SpectralBasis& source, const SpectralBasis& target) {
  if (map.source_k() > source.k() || map.target_k() > target.k())
    throw validation_error("map resolution " + std::to_string(map.target_k()) + "x" + std::to_string(map.source_k()) +
                           " exceeds basis resolutions " + std::to_string(target.k()) + "/" +
                           std::to_string(source.k()));
}

}  // namespace detail

/// Search structure for delta_qp = || Phi_t[q]^T - C Phi_s[p]^T ||: queries are
/// target embedding rows, candidates are source rows transported by C.
inline EmbeddingSearch aligned_embedding_search(const FunctionalMap& map, const SpectralBasis& basis_source,
                                                const SpectralBasis& basis_target) {
  detail::check_map_against_bases(map, basis_source, basis_target);
  Matrix transported = basis_source.eigenfunctions.leftCols(map.source_k()) * map.matrix.transpose();
  return EmbeddingSearch(basis_target.eigenfunctions.leftCols(map.target_k()), std::move(transported));
}

/// r_q = min_p delta_qp for every target vertex q (exact minimum).
inline Vector alignment_residuals(const FunctionalMap& map, const SpectralBasis& basis_source,
                                  const SpectralBasis& basis_target) {
  return aligned_embedding_search(map, basis_source, basis_target).nearest_candidates().distance;
}

/// Column i holds r^i_q / sqrt(k^i) for ladder map i.
struct ResidualFeatures {
  Matrix per_point;  // n_target x ladder length
  std::vector<Index> resolutions;

  Index ladder_length() const noexcept { return per_point.cols(); }

  /// Unscaled residuals r^i (column i times sqrt(k^i)).
  Vector raw_residuals(Index i) const {
    return per_point.col(i) * std::sqrt(static_cast<double>(resolutions[static_cast<std::size_t>(i)]));
  }
};

inline ResidualFeatures residual_features(const MultiResMaps& ladder, const SpectralBasis& basis_source,
                                          const SpectralBasis& basis_target) {
  ResidualFeatures out;
  out.resolutions = ladder.resolutions;
  out.per_point.resize(basis_target.size(), ladder.size());
  for (Index i = 0; i < ladder.size(); ++i) {
    const auto& map = ladder.maps[static_cast<std::size_t>(i)];
    const double scale = 1.0 / std::sqrt(static_cast<double>(ladder.resolutions[static_cast<std::size_t>(i)]));
    out.per_point.col(i) = scale * alignment_residuals(map, basis_source, basis_target);
  }
  return out;
}

/// Nonnegative per-resolution weights summing to one.
struct AttentionWeights {
  Vector weights;

  Index size() const noexcept { return weights.size(); }
};

inline AttentionWeights weights_uniform(Index n) {
  if (n < 1) throw validation_error("ladder length must be at least 1");
  return AttentionWeights{Vector::Constant(n, 1.0 / static_cast<double>(n))};
}

/// Numerically stable softmax.
inline Vector softmax(const Vector& logits) {
  const Vector shifted = (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

/// Mean scaled residual per ladder map: plain mean over target vertices or,
/// with `areas`, the area-weighted mean.
inline Vector mean_residuals(const ResidualFeatures& features, const Vector* areas = nullptr) {
  if (areas == nullptr) return features.per_point.colwise().mean().transpose();
  if (areas->size() != features.per_point.rows()) throw validation_error("area vector does not match residual rows");
  return (features.per_point.transpose() * *areas) / areas->sum();
}

/// Temperature used when none is given: the standard deviation of the means,
/// or 1 when the means coincide up to rounding.
inline double adaptive_attention_temperature(const Vector& means) {
  const double mu = means.mean();
  const double sd = std::sqrt((means.array() - mu).square().mean());
  return sd > 1e-9 * means.cwiseAbs().maxCoeff() ? sd : 1.0;
}

/// alpha = softmax(-m / T) where m_i is the mean scaled residual of map i.
inline AttentionWeights weights_mean_residual(const ResidualFeatures& features, std::optional<double> temperature,
                                              const Vector* areas = nullptr) {
  if (features.ladder_length() < 1) throw validation_error("empty residual features");
  const Vector means = mean_residuals(features, areas);
  const double t = temperature ? *temperature : adaptive_attention_temperature(means);
  if (!(t > 0.0)) throw validation_error("attention temperature must be positive");
  return AttentionWeights{softmax(-means / t)};
}

/// Reads n nonnegative numbers (one per line) and renormalizes them to sum one.
inline AttentionWeights weights_external(const std::filesystem::path& path, Index n) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open attention weight file " + path.string());
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v))
      throw validation_error(path.string() + ": invalid weight '" + token + "'");
    if (v < 0.0) throw validation_error(path.string() + ": negative weight " + token);
    values.push_back(v);
  }
  if (static_cast<Index>(values.size()) != n)
    throw validation_error(path.string() + ": expected " + std::to_string(n) + " weights, found " +
                           std::to_string(values.size()));
  Vector w = Eigen::Map<Vector>(values.data(), n);
  const double total = w.sum();
  if (!(total > 0.0)) throw validation_error(path.string() + ": weights sum to zero");
  return AttentionWeights{w / total};
}

/// Pluggable source of attention weights.
class AttentionStrategy {
 public:
  virtual ~AttentionStrategy() = default;
  virtual std::string name() const = 0;
  /// `target_areas` is the lumped mass of the target mesh.
  virtual AttentionWeights weigh(const ResidualFeatures& features, const Vector& target_areas) const = 0;
};

class UniformAttention final : public AttentionStrategy {
 public:
  std::string name() const override { return "uniform"; }
  AttentionWeights weigh(const ResidualFeatures& features, const Vector&) const override {
    return weights_uniform(features.ladder_length());
  }
};

class MeanResidualAttention final : public AttentionStrategy {
 public:
  explicit MeanResidualAttention(std::optional<double> temperature = std::nullopt, bool area_weighted = false)
      : temperature_(temperature), area_weighted_(area_weighted) {
    if (temperature_ && !(*temperature_ > 0.0)) throw validation_error("attention temperature must be positive");
  }
  std::string name() const override { return "mean-residual"; }
  AttentionWeights weigh(const ResidualFeatures& features, const Vector& target_areas) const override {
    return weights_mean_residual(features, temperature_, area_weighted_ ? &target_areas : nullptr);
  }

 private:
  std::optional<double> temperature_;
  bool area_weighted_;
};

class ExternalAttention final : public AttentionStrategy {
 public:
  explicit ExternalAttention(std::filesystem::path path) : path_(std::move(path)) {}
  std::string name() const override { return "external"; }
  AttentionWeights weigh(const ResidualFeatures& features, const Vector&) const override {
    return weights_external(path_, features.ladder_length());
  }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mrfm
