#pragma once

#include "mrfm/fmap.hpp"
#include "mrfm/mesh.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mrfm {

/// Undirected edge graph of a mesh in CSR form with Euclidean edge lengths.
class EdgeGraph {
 public:
  static EdgeGraph from_mesh(const TriMesh& mesh) {
    const Index n = mesh.num_vertices();
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 6);
    for (const auto& t : mesh.triangles()) {
      for (int c = 0; c < 3; ++c) {
        const int a = t[c];
        const int b = t[(c + 1) % 3];
        edges.emplace_back(a, b);
        edges.emplace_back(b, a);
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    EdgeGraph g;
    g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& e : edges) ++g.offsets_[static_cast<std::size_t>(e.first) + 1];
    for (std::size_t i = 1; i < g.offsets_.size(); ++i) g.offsets_[i] += g.offsets_[i - 1];
    g.neighbors_.reserve(edges.size());
    g.lengths_.reserve(edges.size());
    for (const auto& e : edges) {
      g.neighbors_.push_back(e.second);
      g.lengths_.push_back((mesh.vertices()[static_cast<std::size_t>(e.first)] -
                            mesh.vertices()[static_cast<std::size_t>(e.second)]).norm());
    }
    return g;
  }

  Index num_vertices() const noexcept { return static_cast<Index>(offsets_.size()) - 1; }

  /// Single-source shortest paths. When `targets` is non-empty the search stops
  /// once all of them are settled; other entries may then be upper bounds.
  std::vector<double> dijkstra(int source, const std::vector<int>& targets = {}) const {
    const auto n = static_cast<std::size_t>(num_vertices());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<char> settled(n, 0);
    std::vector<char> wanted;
    std::size_t remaining = 0;
    if (!targets.empty()) {
      wanted.assign(n, 0);
      for (int t : targets) {
        if (!wanted[static_cast<std::size_t>(t)]) ++remaining;
        wanted[static_cast<std::size_t>(t)] = 1;
      }
    }
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[static_cast<std::size_t>(source)] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      const auto vi = static_cast<std::size_t>(v);
      if (settled[vi]) continue;
      settled[vi] = 1;
      if (!wanted.empty() && wanted[vi] && --remaining == 0) break;
      for (std::size_t e = offsets_[vi]; e < offsets_[vi + 1]; ++e) {
        const auto u = static_cast<std::size_t>(neighbors_[e]);
        const double nd = d + lengths_[e];
        if (nd < dist[u]) {
          dist[u] = nd;
          heap.emplace(nd, neighbors_[e]);
        }
      }
    }
    return dist;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> neighbors_;
  std::vector<double> lengths_;
};

/// Edge-graph geodesic distances; row s holds distances from sources[s].
inline Matrix geodesic_distances(const TriMesh& mesh, const std::vector<int>& sources) {
  const EdgeGraph graph = EdgeGraph::from_mesh(mesh);
  Matrix out(static_cast<Index>(sources.size()), mesh.num_vertices());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s] < 0 || sources[s] >= mesh.num_vertices()) throw validation_error("geodesic source out of range");
    const auto d = graph.dijkstra(sources[s]);
    for (Index v = 0; v < mesh.num_vertices(); ++v) {
      if (!std::isfinite(d[static_cast<std::size_t>(v)])) throw validation_error("mesh is disconnected");
      out(static_cast<Index>(s), v) = d[static_cast<std::size_t>(v)];
    }
  }
  return out;
}

struct EvalReport {
  Vector per_point_errors;                         // geodesic error / sqrt(target area)
  double mean_error_x100 = 0.0;
  std::vector<std::pair<double, double>> curve;    // (threshold, fraction of errors <= threshold)
  std::map<std::string, double> diagnostics;
};

inline constexpr double kCurveMaxThreshold = 0.25;
inline constexpr Index kCurveSamples = 200;

/// Fraction of errors at or below each of `samples` thresholds evenly spaced
/// in [0, max_threshold]; a final point at the largest error (fraction 1) is
/// appended when that error lies beyond the sampled range.
inline std::vector<std::pair<double, double>> accuracy_curve(const Vector& errors,
                                                             double max_threshold = kCurveMaxThreshold,
                                                             Index samples = kCurveSamples) {
  std::vector<double> sorted(errors.data(), errors.data() + errors.size());
  std::sort(sorted.begin(), sorted.end());
  const auto fraction_below = [&](double thr) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), thr);
    return sorted.empty() ? 1.0 : static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
  };
  std::vector<std::pair<double, double>> curve;
  for (Index i = 0; i < samples; ++i) {
    const double thr = samples == 1 ? max_threshold : max_threshold * static_cast<double>(i) / static_cast<double>(samples - 1);
    curve.emplace_back(thr, fraction_below(thr));
  }
  if (!sorted.empty() && sorted.back() > max_threshold) curve.emplace_back(sorted.back(), 1.0);
  return curve;
}

/// Geodesic error on the target mesh between predicted and ground-truth images
/// of every source vertex, normalized by sqrt(target area).
inline EvalReport geodesic_error(const PointwiseMap& predicted, const PointwiseMap& ground_truth,
                                 const TriMesh& target_mesh) {
  if (predicted.size() != ground_truth.size())
    throw validation_error("predicted and ground-truth maps have different source sizes");
  if (predicted.target_size != target_mesh.num_vertices() || ground_truth.target_size != target_mesh.num_vertices())
    throw validation_error("map target size does not match the target mesh");

  // Group source vertices by their ground-truth image: one truncated Dijkstra per group.
  std::unordered_map<int, std::vector<Index>> by_gt;
  for (Index p = 0; p < ground_truth.size(); ++p) by_gt[ground_truth.target_of[static_cast<std::size_t>(p)]].push_back(p);
  std::vector<int> roots;
  roots.reserve(by_gt.size());
  for (const auto& entry : by_gt) roots.push_back(entry.first);
  std::sort(roots.begin(), roots.end());

  const EdgeGraph graph = EdgeGraph::from_mesh(target_mesh);
  const double scale = 1.0 / std::sqrt(target_mesh.total_area());
  EvalReport report;
  report.per_point_errors.resize(predicted.size());
  std::vector<int> targets;
  for (int root : roots) {
    const auto& members = by_gt[root];
    targets.clear();
    for (Index p : members) targets.push_back(predicted.target_of[static_cast<std::size_t>(p)]);
    const auto dist = graph.dijkstra(root, targets);
    for (Index p : members) {
      const double d = dist[static_cast<std::size_t>(predicted.target_of[static_cast<std::size_t>(p)])];
      if (!std::isfinite(d)) throw validation_error("target mesh is disconnected");
      report.per_point_errors[p] = d * scale;
    }
  }
  report.mean_error_x100 = report.per_point_errors.size() ? 100.0 * report.per_point_errors.mean() : 0.0;
  report.curve = accuracy_curve(report.per_point_errors);
  return report;
}

/// ||C^T C - I||_F^2
inline double penalty_orthogonality(const FunctionalMap& map) {
  if (map.source_k() != map.target_k()) throw validation_error("orthogonality penalty needs a square map");
  return (map.matrix.transpose() * map.matrix - Matrix::Identity(map.k(), map.k())).squaredNorm();
}

/// ||C - C_gt||_F^2
inline double penalty_supervised(const FunctionalMap& map, const FunctionalMap& gt) {
  if (map.matrix.rows() != gt.matrix.rows() || map.matrix.cols() != gt.matrix.cols())
    throw validation_error("supervised penalty needs maps of equal resolution");
  return (map.matrix - gt.matrix).squaredNorm();
}

enum class Penalty { orthogonality, supervised };

struct LossDiagnostics {
  double inter = 0.0;  // (1/n) sum_i (k^n / k^i)^2 L(C^i)
  double final = 0.0;  // L(C_bar)
};

/// Loss terms of the multi-resolution objective, evaluated (never optimized).
/// `gt_top` is required for the supervised penalty and must cover the largest
/// resolution involved; smaller resolutions use its principal submatrices.
inline LossDiagnostics loss_diagnostics(const MultiResMaps& ladder, const FunctionalMap& final_map, Penalty penalty,
                                        const FunctionalMap* gt_top = nullptr) {
  if (ladder.size() < 1) throw validation_error("empty ladder");
  if (penalty == Penalty::supervised && gt_top == nullptr)
    throw validation_error("supervised penalty requires a ground-truth functional map");
  const auto L = [&](const FunctionalMap& c) {
    if (penalty == Penalty::orthogonality) return penalty_orthogonality(c);
    return penalty_supervised(c, principal_submatrix(*gt_top, c.k()));
  };
  const double top = static_cast<double>(ladder.top_resolution());
  LossDiagnostics out;
  for (Index i = 0; i < ladder.size(); ++i) {
    const double ratio = top / static_cast<double>(ladder.resolutions[static_cast<std::size_t>(i)]);
    out.inter += ratio * ratio * L(ladder.maps[static_cast<std::size_t>(i)]);
  }
  out.inter /= static_cast<double>(ladder.size());
  out.final = L(final_map);
  return out;
}

inline nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["mean_error_x100"] = report.mean_error_x100;
  j["num_points"] = report.per_point_errors.size();
  j["max_error"] = report.per_point_errors.size() ? report.per_point_errors.maxCoeff() : 0.0;
  j["exact_fraction"] = report.curve.empty() ? 0.0 : report.curve.front().second;
  for (const auto& [name, value] : report.diagnostics) j["diagnostics"][name] = value;
  return j;
}

inline void write_curve_csv(const std::vector<std::pair<double, double>>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write " + path.string());
  out << std::setprecision(17) << "threshold,fraction\n";
  for (const auto& [t, f] : curve) out << t << ',' << f << '\n';
}

inline void write_errors_csv(const Vector& errors, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write " + path.string());
  out << std::setprecision(17) << "vertex,error\n";
  for (Index i = 0; i < errors.size(); ++i) out << i << ',' << errors[i] << '\n';
}

}  // namespace mrfm
