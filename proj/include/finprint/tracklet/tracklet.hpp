#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "finprint/core/types.hpp"

namespace finprint::tracklet {

inline constexpr int kNoise = -1;

struct TrackletParams {
  double eps = 0.4;
  int min_pts = 3;
  /// Temporal penalty per frame of gap; 1/30 saturates after one second of
  /// 30 FPS video.
  double temporal_weight = 1.0 / 30.0;
  /// Finite stand-in for an infinite distance between same-frame boxes.
  double max_distance = 1e9;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct ClusterLabel {
  std::int64_t box_id = 0;
  int cluster = kNoise;

  bool operator==(const ClusterLabel&) const = default;
};

/// One label per input box, in input order. Labels are 0..k-1 or kNoise.
struct ClusterAssignment {
  std::vector<ClusterLabel> labels;

  int cluster_count() const;
  bool operator==(const ClusterAssignment&) const = default;
};

struct ClusterSpan {
  int cluster = 0;
  std::size_t box_count = 0;
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0;
};

struct ClusterResult {
  ClusterAssignment assignment;
  std::vector<ClusterSpan> spans;  // one per cluster, ascending label
  std::size_t noise_count = 0;
};

/// Intersection over union of two axis-aligned boxes.
double iou(const FrameBox& a, const FrameBox& b);

/// Clustering distance between two detections. Boxes in the same frame can
/// never belong to one individual and get `max_distance`. Otherwise
///
///   (1 - iou(a, b) + min(1, temporal_weight * |frame gap|)) / 2,
///
/// which lies in [0, 1].
double box_distance(const FrameBox& a, const FrameBox& b,
                    const TrackletParams& p);

using DistanceFn = std::function<double(std::int64_t, std::int64_t)>;

/// DBSCAN over the ids in `points` with a pairwise distance oracle.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Points are visited in ascending id order, so labels are
/// numbered by the smallest core id of each cluster and a border point
/// reachable from several clusters joins the earliest one.
ClusterAssignment dbscan(std::span<const std::int64_t> points,
                         const DistanceFn& dist, const TrackletParams& p);

ClusterResult cluster_boxes(std::span<const FrameBox> boxes,
                            const TrackletParams& p);

/// Maps whole clusters onto new labels (cluster -> identity), then renumbers
/// the surviving labels densely in ascending order. Noise keeps -1 unless a
/// fix names cluster -1 explicitly. Throws ContractError for unknown clusters.
ClusterAssignment apply_relabels(const ClusterAssignment& a,
                                 std::span<const std::pair<int, int>> fixes);

void write_clusters_csv(const std::string& path, const ClusterAssignment& a);
ClusterAssignment read_clusters_csv(const std::string& path);

}  // namespace finprint::tracklet
