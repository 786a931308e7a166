#pragma once

#include "mrfm/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mrfm {

/// Exact nearest-neighbour search between two row sets in R^k.
///
/// Squared distances come from blocked matrix products
/// ||q||^2 + ||p||^2 - 2 q.p. Every entry within rounding range of the block
/// minimum is recomputed from the explicit difference, so the reported argmin
/// and distance are exact. Ties go to the lowest index.
class EmbeddingSearch {
 public:
  // Rows of each distance block are chosen so a block holds about this many entries.
  static constexpr Index kBlockEntries = 1 << 20;

  EmbeddingSearch(Matrix queries, Matrix candidates)
      : queries_(std::move(queries)), candidates_(std::move(candidates)) {
    if (queries_.cols() != candidates_.cols()) throw validation_error("embedding dimensions differ");
    query_norms_ = queries_.rowwise().squaredNorm();
    candidate_norms_ = candidates_.rowwise().squaredNorm();
  }

  Index num_queries() const noexcept { return queries_.rows(); }
  Index num_candidates() const noexcept { return candidates_.rows(); }
  Index block_rows() const noexcept { return std::max<Index>(1, kBlockEntries / std::max<Index>(1, num_candidates())); }

  /// Distances (not squared) from queries [q0, q0 + rows) to every candidate.
  void distance_block(Index q0, Index rows, RowMatrix& out) const {
    out.noalias() = -2.0 * queries_.middleRows(q0, rows) * candidates_.transpose();
    for (Index r = 0; r < rows; ++r) {
      const double qn = query_norms_[q0 + r];
      auto row = out.row(r);
      for (Index p = 0; p < row.size(); ++p) row[p] = std::sqrt(std::max(0.0, row[p] + qn + candidate_norms_[p]));
    }
  }

  struct Nearest {
    std::vector<int> index;
    Vector distance;
  };

  /// For every query, the nearest candidate.
  Nearest nearest_candidates() const {
    Nearest out;
    out.index.resize(static_cast<std::size_t>(num_queries()));
    out.distance.resize(num_queries());
    RowMatrix block;
    const Index step = block_rows();
    for (Index q0 = 0; q0 < num_queries(); q0 += step) {
      const Index rows = std::min(step, num_queries() - q0);
      squared_block(q0, rows, block);
      for (Index r = 0; r < rows; ++r) {
        const Index q = q0 + r;
        const double floor = block.row(r).minCoeff();
        Index arg = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Index p = 0; p < num_candidates(); ++p) {
          if (block(r, p) > floor + slack(q, p)) continue;
          const double d = (queries_.row(q) - candidates_.row(p)).squaredNorm();
          if (d < best) {
            best = d;
            arg = p;
          }
        }
        out.index[static_cast<std::size_t>(q)] = static_cast<int>(arg);
        out.distance[q] = std::sqrt(best);
      }
    }
    return out;
  }

  /// For every candidate, the nearest query.
  Nearest nearest_queries() const {
    Nearest out;
    const Index nc = num_candidates();
    out.index.assign(static_cast<std::size_t>(nc), 0);
    Vector best = Vector::Constant(nc, std::numeric_limits<double>::infinity());
    RowMatrix block;
    const Index step = block_rows();
    for (Index q0 = 0; q0 < num_queries(); q0 += step) {
      const Index rows = std::min(step, num_queries() - q0);
      squared_block(q0, rows, block);
      for (Index r = 0; r < rows; ++r) {
        const Index q = q0 + r;
        for (Index p = 0; p < nc; ++p) {
          // best[p] is exact, so only entries that may beat it are recomputed.
          if (block(r, p) > best[p] + slack(q, p)) continue;
          const double d = (queries_.row(q) - candidates_.row(p)).squaredNorm();
          if (d < best[p]) {
            best[p] = d;
            out.index[static_cast<std::size_t>(p)] = static_cast<int>(q);
          }
        }
      }
    }
    out.distance = best.cwiseSqrt();
    return out;
  }

 private:
  // Bound on the rounding error of an expanded squared distance.
  double slack(Index q, Index p) const { return 1e-12 * (query_norms_[q] + candidate_norms_[p]); }

  void squared_block(Index q0, Index rows, RowMatrix& out) const {
    out.noalias() = -2.0 * queries_.middleRows(q0, rows) * candidates_.transpose();
    out.array().colwise() += query_norms_.segment(q0, rows).array();
    out.array().rowwise() += candidate_norms_.transpose().array();
  }

  Matrix queries_;
  Matrix candidates_;
  Vector query_norms_;
  Vector candidate_norms_;
};

}  // namespace mrfm
