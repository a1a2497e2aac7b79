#pragma once

#include <limits>
#include <span>
#include <vector>

#include "finprint/core/types.hpp"
#include "finprint/model/encoder.hpp"

namespace finprint::eval {

/// L2 distances of same-identity pairs (positives) and cross-identity pairs
/// (negatives), each unordered pair once, in row-major pair order.
struct PairScores {
  std::vector<double> positives;
  std::vector<double> negatives;
};

/// "Same" means distance <= threshold.
struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

/// Throws ContractError for a label count mismatch, fewer than two
/// identities, or no identity with two rows.
PairScores pair_distances(const model::Matrix& embeddings,
                          std::span<const IdentityId> labels);

/// Thresholds 0.0, 0.2, ..., 2.0.
std::vector<double> coarse_thresholds();

/// Every distinct distance in either list, ascending.
std::vector<double> distinct_thresholds(const PairScores& s);

/// TPR/FPR at each threshold. Thresholds must be ascending; both score lists
/// must be nonempty.
std::vector<RocPoint> roc_sweep(const PairScores& s,
                                std::span<const double> thresholds);

/// P(d_pos < d_neg) + P(d_pos == d_neg) / 2, computed exactly by ranking.
double auc(const PairScores& s);

/// Trapezoidal area under the given ROC points, with (0, 0) prepended.
double trapezoid_auc(std::span<const RocPoint> points);

/// Operating point at the largest distinct negative distance whose FPR does
/// not exceed target_fpr. When even the smallest negative is too many, the
/// threshold sits just below it and TPR counts positives strictly below it.
RocPoint operating_point(const PairScores& s, double target_fpr);
double tpr_at_fpr(const PairScores& s, double target_fpr);

struct DistanceReport {
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  /// inter / intra; +infinity when intra_mean is 0.
  double ratio = std::numeric_limits<double>::infinity();
  model::Matrix matrix;
};

DistanceReport distance_report(const model::Matrix& embeddings,
                               std::span<const IdentityId> labels);

/// Rows projected onto the top two principal components of the centred data.
/// Each axis is signed so its largest-magnitude loading is positive; axes
/// with no variance give zeros. Needs at least 3 rows.
model::Matrix project_2d(const model::Matrix& embeddings);

}  // namespace finprint::eval
