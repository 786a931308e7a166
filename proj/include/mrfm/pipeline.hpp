#pragma once

#include "mrfm/assembly.hpp"
#include "mrfm/attention.hpp"
#include "mrfm/descriptors.hpp"
#include "mrfm/fmap.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mrfm {

enum class DescriptorKind { wks, hks, file };

struct DescriptorOptions {
  DescriptorKind kind = DescriptorKind::wks;
  Index wks_energies = kDefaultWksEnergies;
  double wks_sigma_scale = kDefaultWksSigmaScale;
  Index hks_times = 100;
};

enum class AttentionKind { uniform, mean_residual, external };

struct AttentionOptions {
  AttentionKind kind = AttentionKind::mean_residual;
  std::optional<double> temperature;  // mean-residual softmax temperature; adaptive when empty
  bool area_weighted = false;
  std::filesystem::path external_file;

  std::unique_ptr<AttentionStrategy> make() const {
    switch (kind) {
      case AttentionKind::uniform: return std::make_unique<UniformAttention>();
      case AttentionKind::external: return std::make_unique<ExternalAttention>(external_file);
      case AttentionKind::mean_residual: break;
    }
    return std::make_unique<MeanResidualAttention>(temperature, area_weighted);
  }
};

struct RefineOptions {
  Index steps = 0;
  Index step_size = 10;
};

struct PipelineOptions {
  SolverConfig solver;
  DescriptorOptions descriptors;
  AttentionOptions attention;
  std::optional<double> soft_temperature;  // fixed Pi temperature for every map; adaptive when empty
  RefineOptions refine;
};

/// Computes axiomatic descriptors for one mesh from its basis.
inline DescriptorSet compute_descriptors(const SpectralBasis& basis, const DescriptorOptions& opt) {
  switch (opt.kind) {
    case DescriptorKind::wks: return wks(basis, opt.wks_energies, opt.wks_sigma_scale);
    case DescriptorKind::hks: return hks(basis, opt.hks_times);
    case DescriptorKind::file: break;
  }
  throw validation_error("file descriptors must be imported, not computed");
}

class StageClock {
 public:
  using clock = std::chrono::steady_clock;

  void start() { mark_ = clock::now(); }
  double lap(const std::string& stage) {
    const auto now = clock::now();
    const double s = std::chrono::duration<double>(now - mark_).count();
    stages_.emplace_back(stage, s);
    mark_ = now;
    return s;
  }
  const std::vector<std::pair<std::string, double>>& stages() const noexcept { return stages_; }

 private:
  clock::time_point mark_ = clock::now();
  std::vector<std::pair<std::string, double>> stages_;
};

struct MatchResult {
  MultiResMaps ladder;
  ResidualFeatures features;
  Vector mean_residuals;
  AttentionWeights weights;
  std::vector<double> soft_temperatures;
  FunctionalMap assembled;   // C_bar at k_max
  FunctionalMap final_map;   // C_bar after optional refinement
  PointToPoint p2p;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage, "total" last

  double timing(const std::string& stage) const {
    for (const auto& [name, s] : timings)
      if (name == stage) return s;
    return 0.0;
  }
};

/// Runs `fn`, prefixing any library error with the stage name.
template <typename Fn>
decltype(auto) in_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + " stage: " + e.what());
  }
}

/// Runs ladder construction, attention, upsampling, assembly, optional
/// refinement and point-to-point extraction for one shape pair.
inline MatchResult match_pair(const SpectralBasis& basis_source, const SpectralBasis& basis_target,
                              const DescriptorSet& desc_source, const DescriptorSet& desc_target,
                              const PipelineOptions& opt) {
  opt.solver.validate();
  const Index k_max = opt.solver.k_max;
  if (k_max > basis_source.k() || k_max > basis_target.k())
    throw validation_error("k_max = " + std::to_string(k_max) + " exceeds the basis resolution");
  if (desc_source.dimension() != desc_target.dimension())
    throw validation_error("source and target descriptors have different dimensions");
  if (opt.refine.steps > 0 && k_max - opt.refine.steps * opt.refine.step_size < 1)
    throw validation_error("refinement steps x step size must be smaller than k_max");
  const auto strategy = opt.attention.make();

  const auto t0 = StageClock::clock::now();
  StageClock clock;
  clock.start();
  MatchResult result;
  const SpectralBasis src = truncate(basis_source, k_max);
  const SpectralBasis tgt = truncate(basis_target, k_max);

  in_stage("functional_map", [&] { result.ladder = build_ladder(src, tgt, desc_source, desc_target, opt.solver); });
  clock.lap("functional_map");

  in_stage("attention", [&] {
    result.features = residual_features(result.ladder, src, tgt);
    result.mean_residuals = mean_residuals(result.features, opt.attention.area_weighted ? &tgt.mass : nullptr);
    result.weights = strategy->weigh(result.features, tgt.mass);
  });
  clock.lap("attention");

  in_stage("upsample", [&] {
    for (Index i = 0; i < result.ladder.size(); ++i) {
      const Index k = result.ladder.resolutions[static_cast<std::size_t>(i)];
      result.soft_temperatures.push_back(opt.soft_temperature
                                             ? *opt.soft_temperature
                                             : default_soft_temperature(result.features.raw_residuals(i), tgt, k));
    }
    result.assembled = assemble(result.ladder, result.weights, src, tgt, result.soft_temperatures);
  });
  clock.lap("upsample");

  result.final_map = result.assembled;
  if (opt.refine.steps > 0) {
    const Index k0 = k_max - opt.refine.steps * opt.refine.step_size;
    in_stage("refine", [&] {
      result.final_map = iterative_refine(principal_submatrix(result.assembled, k0), src, tgt, opt.refine.steps,
                                          opt.refine.step_size);
    });
    clock.lap("refine");
  }
  in_stage("extract", [&] { result.p2p = extract_p2p(result.final_map, src, tgt); });
  clock.lap("extract");

  result.timings = clock.stages();
  result.timings.emplace_back("total", std::chrono::duration<double>(StageClock::clock::now() - t0).count());
  return result;
}

}  // namespace mrfm
