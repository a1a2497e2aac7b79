#include "finprint/tracklet/tracklet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "finprint/core/error.hpp"
#include "finprint/core/parallel.hpp"
#include "finprint/core/text.hpp"

namespace finprint::tracklet {

void TrackletParams::validate() const {
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (min_pts < 1) throw ConfigError("min_pts must be >= 1");
  if (!(temporal_weight >= 0.0)) {
    throw ConfigError("temporal_weight must be >= 0");
  }
  if (!(eps < max_distance)) throw ConfigError("eps must be < max_distance");
}

int ClusterAssignment::cluster_count() const {
  int k = 0;
  for (const auto& l : labels) k = std::max(k, l.cluster + 1);
  return k;
}

double iou(const FrameBox& a, const FrameBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) -
                                      std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) -
                                      std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double box_distance(const FrameBox& a, const FrameBox& b,
                    const TrackletParams& p) {
  const std::int64_t gap = a.frame - b.frame;
  if (gap == 0) return p.max_distance;
  const double temporal = std::min(
      1.0, p.temporal_weight * static_cast<double>(gap < 0 ? -gap : gap));
  return (1.0 - iou(a, b) + temporal) / 2.0;
}

ClusterAssignment dbscan(std::span<const std::int64_t> points,
                         const DistanceFn& dist, const TrackletParams& p) {
  p.validate();
  const std::size_t n = points.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a] < points[b];
  });
  for (std::size_t i = 1; i < n; ++i) {
    if (points[order[i]] == points[order[i - 1]]) {
      throw ContractError("dbscan: duplicate id " +
                          std::to_string(points[order[i]]));
    }
  }

  // Neighbourhoods in canonical (ascending id) positions. A point is always
  // its own neighbour; the oracle is never asked for self-distances.
  std::vector<std::vector<std::size_t>> neighbours(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || dist(points[order[i]], points[order[j]]) <= p.eps) {
        neighbours[i].push_back(j);
      }
    }
  }
  const auto is_core = [&](std::size_t i) {
    return neighbours[i].size() >= static_cast<std::size_t>(p.min_pts);
  };

  constexpr int kUnvisited = -2;
  std::vector<int> label(n, kUnvisited);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    if (!is_core(i)) {
      label[i] = kNoise;
      continue;
    }
    const int c = next_cluster++;
    label[i] = c;
    std::deque<std::size_t> frontier(neighbours[i].begin(),
                                     neighbours[i].end());
    while (!frontier.empty()) {
      const std::size_t q = frontier.front();
      frontier.pop_front();
      if (label[q] == kNoise) label[q] = c;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      if (is_core(q)) {
        frontier.insert(frontier.end(), neighbours[q].begin(),
                        neighbours[q].end());
      }
    }
  }

  ClusterAssignment out;
  out.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.labels[order[k]] = {points[order[k]], label[k]};
  }
  return out;
}

ClusterResult cluster_boxes(std::span<const FrameBox> boxes,
                            const TrackletParams& p) {
  if (boxes.empty()) throw ContractError("cluster_boxes: no boxes");
  p.validate();
  const std::size_t n = boxes.size();

  std::unordered_map<std::int64_t, std::size_t> index;
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(boxes[i].w > 0.0 && boxes[i].h > 0.0)) {
      throw ContractError("cluster_boxes: box " +
                          std::to_string(boxes[i].box_id) +
                          " has non-positive size");
    }
    ids[i] = boxes[i].box_id;
    if (!index.emplace(ids[i], i).second) {
      throw ContractError("cluster_boxes: duplicate box_id " +
                          std::to_string(ids[i]));
    }
  }

  std::vector<double> matrix(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) matrix[i * n + j] = box_distance(boxes[i], boxes[j], p);
    }
  });

  ClusterResult result;
  result.assignment = dbscan(
      ids,
      [&](std::int64_t a, std::int64_t b) {
        return matrix[index.at(a) * n + index.at(b)];
      },
      p);

  const int k = result.assignment.cluster_count();
  result.spans.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) result.spans[c].cluster = c;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = result.assignment.labels[i].cluster;
    if (c == kNoise) {
      ++result.noise_count;
      continue;
    }
    auto& span = result.spans[static_cast<std::size_t>(c)];
    if (span.box_count == 0) {
      span.first_frame = span.last_frame = boxes[i].frame;
    } else {
      span.first_frame = std::min(span.first_frame, boxes[i].frame);
      span.last_frame = std::max(span.last_frame, boxes[i].frame);
    }
    ++span.box_count;
  }
  return result;
}

ClusterAssignment apply_relabels(const ClusterAssignment& a,
                                 std::span<const std::pair<int, int>> fixes) {
  std::set<int> present;
  for (const auto& l : a.labels) present.insert(l.cluster);

  std::unordered_map<int, int> mapping;
  for (const auto& [from, to] : fixes) {
    if (!present.contains(from)) {
      throw ContractError("apply_relabels: unknown cluster " +
                          std::to_string(from));
    }
    if (to < kNoise) {
      throw ContractError("apply_relabels: invalid target label " +
                          std::to_string(to));
    }
    auto [it, inserted] = mapping.emplace(from, to);
    if (!inserted && it->second != to) {
      throw ContractError("apply_relabels: conflicting fixes for cluster " +
                          std::to_string(from));
    }
  }

  ClusterAssignment out = a;
  std::set<int> used;
  for (auto& l : out.labels) {
    if (auto it = mapping.find(l.cluster); it != mapping.end()) {
      l.cluster = it->second;
    }
    if (l.cluster != kNoise) used.insert(l.cluster);
  }
  std::unordered_map<int, int> dense;
  int next = 0;
  for (int c : used) dense[c] = next++;
  for (auto& l : out.labels) {
    if (l.cluster != kNoise) l.cluster = dense.at(l.cluster);
  }
  return out;
}

void write_clusters_csv(const std::string& path, const ClusterAssignment& a) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "box_id,cluster\n";
  for (const auto& l : a.labels) out << l.box_id << ',' << l.cluster << '\n';
  if (!out) throw IoError(path, "write failed");
}

ClusterAssignment read_clusters_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open clusters CSV");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || text::trim(line) != "box_id,cluster") {
    throw ParseError(path, 1, "expected header 'box_id,cluster'");
  }
  ClusterAssignment a;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    std::int64_t id = 0, c = 0;
    if (f.size() != 2 || !text::parse_int(f[0], id) ||
        !text::parse_int(f[1], c) || c < kNoise) {
      throw ParseError(path, line_no, "expected 'box_id,cluster' integers");
    }
    a.labels.push_back({id, static_cast<int>(c)});
  }
  return a;
}

}  // namespace finprint::tracklet
