#pragma once

// Brute-force enumeration of every margin-violating triplet in a batch.

#include <cmath>
#include <cstdint>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

namespace finprint::oracle {

struct ViolatorSets {
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> triplets;
  std::set<std::pair<std::size_t, std::size_t>> pairs;
};

inline ViolatorSets brute_force_violators(
    const std::vector<std::vector<double>>& points,
    const std::vector<std::int64_t>& labels, double alpha, bool squared) {
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < points[i].size(); ++k) {
      s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
    }
    return squared ? s : std::sqrt(s);
  };
  ViolatorSets out;
  const std::size_t n = points.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        if (dist(a, q) - dist(a, p) < alpha) {
          out.triplets.insert({a, p, q});
          out.pairs.insert({a, p});
        }
      }
    }
  }
  return out;
}

}  // namespace finprint::oracle
