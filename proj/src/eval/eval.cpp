#include "finprint/eval/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "finprint/core/error.hpp"
#include "finprint/core/parallel.hpp"

namespace finprint::eval {

namespace {

void check_labels(const model::Matrix& e, std::span<const IdentityId> labels) {
  if (static_cast<std::size_t>(e.rows()) != labels.size()) {
    throw ContractError(std::to_string(labels.size()) + " labels for " +
                        std::to_string(e.rows()) + " embeddings");
  }
  std::map<IdentityId, int> counts;
  for (auto id : labels) ++counts[id];
  if (counts.size() < 2) {
    throw ContractError("need at least two identities to form negative pairs");
  }
  bool has_pair = false;
  for (const auto& [id, c] : counts) has_pair = has_pair || c >= 2;
  if (!has_pair) {
    throw ContractError("need an identity with two samples to form positive pairs");
  }
}

double distance(const model::Matrix& e, Eigen::Index i, Eigen::Index j) {
  const double* a = e.data() + i * e.cols();
  const double* b = e.data() + j * e.cols();
  double s = 0.0;
  for (Eigen::Index k = 0; k < e.cols(); ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

void check_scores(const PairScores& s) {
  if (s.positives.empty() || s.negatives.empty()) {
    throw ContractError("score lists must both be nonempty");
  }
}

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double fraction_le(const std::vector<double>& sorted_v, double t) {
  const auto c = std::upper_bound(sorted_v.begin(), sorted_v.end(), t) -
                 sorted_v.begin();
  return static_cast<double>(c) / static_cast<double>(sorted_v.size());
}

}  // namespace

PairScores pair_distances(const model::Matrix& embeddings,
                          std::span<const IdentityId> labels) {
  check_labels(embeddings, labels);
  const auto n = static_cast<std::size_t>(embeddings.rows());
  std::vector<PairScores> rows(n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(embeddings, static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j));
      (labels[i] == labels[j] ? rows[i].positives : rows[i].negatives)
          .push_back(d);
    }
  });
  PairScores out;
  for (const auto& r : rows) {
    out.positives.insert(out.positives.end(), r.positives.begin(),
                         r.positives.end());
    out.negatives.insert(out.negatives.end(), r.negatives.begin(),
                         r.negatives.end());
  }
  return out;
}

std::vector<double> coarse_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i / 5.0);
  return t;
}

std::vector<double> distinct_thresholds(const PairScores& s) {
  std::vector<double> t = s.positives;
  t.insert(t.end(), s.negatives.begin(), s.negatives.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

std::vector<RocPoint> roc_sweep(const PairScores& s,
                                std::span<const double> thresholds) {
  check_scores(s);
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ContractError("roc thresholds must be ascending");
  }
  const auto pos = sorted(s.positives);
  const auto neg = sorted(s.negatives);
  std::vector<RocPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    out.push_back({t, fraction_le(pos, t), fraction_le(neg, t)});
  }
  return out;
}

double auc(const PairScores& s) {
  check_scores(s);
  const auto neg = sorted(s.negatives);
  // Twice the Mann-Whitney count, kept integral until the final division.
  double twice = 0.0;
  for (double p : s.positives) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    twice += 2.0 * static_cast<double>(neg.end() - hi) +
             static_cast<double>(hi - lo);
  }
  return twice / (2.0 * static_cast<double>(s.positives.size()) *
                  static_cast<double>(neg.size()));
}

double trapezoid_auc(std::span<const RocPoint> points) {
  double area = 0.0, px = 0.0, py = 0.0;
  for (const auto& p : points) {
    area += (p.fpr - px) * (p.tpr + py) / 2.0;
    px = p.fpr;
    py = p.tpr;
  }
  return area;
}

RocPoint operating_point(const PairScores& s, double target_fpr) {
  check_scores(s);
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw ContractError("target FPR must lie in (0, 1)");
  }
  const auto pos = sorted(s.positives);
  const auto neg = sorted(s.negatives);
  const double n_neg = static_cast<double>(neg.size());
  // Distinct negatives ascending; FPR at each is (index past its run) / n.
  std::size_t best = neg.size();
  for (std::size_t i = 0; i < neg.size();) {
    std::size_t j = i;
    while (j < neg.size() && neg[j] == neg[i]) ++j;
    if (static_cast<double>(j) / n_neg <= target_fpr) {
      best = i;
    } else {
      break;
    }
    i = j;
  }
  if (best < neg.size()) {
    const double t = neg[best];
    return {t, fraction_le(pos, t), fraction_le(neg, t)};
  }
  const double t = std::nextafter(neg.front(), -std::numeric_limits<double>::infinity());
  return {t, fraction_le(pos, t), fraction_le(neg, t)};
}

double tpr_at_fpr(const PairScores& s, double target_fpr) {
  return operating_point(s, target_fpr).tpr;
}

DistanceReport distance_report(const model::Matrix& embeddings,
                               std::span<const IdentityId> labels) {
  check_labels(embeddings, labels);
  const auto n = embeddings.rows();
  DistanceReport r;
  r.matrix = model::Matrix::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
    const auto i = static_cast<Eigen::Index>(ui);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      r.matrix(i, j) = distance(embeddings, i, j);
    }
  });
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = r.matrix(i, j);
      r.matrix(j, i) = d;
      if (labels[static_cast<std::size_t>(i)] ==
          labels[static_cast<std::size_t>(j)]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  r.intra_mean = intra / static_cast<double>(n_intra);
  r.inter_mean = inter / static_cast<double>(n_inter);
  r.ratio = r.intra_mean > 0.0 ? r.inter_mean / r.intra_mean
                               : std::numeric_limits<double>::infinity();
  return r;
}

model::Matrix project_2d(const model::Matrix& embeddings) {
  const auto n = embeddings.rows();
  const auto d = embeddings.cols();
  if (n < 3) throw ContractError("projection needs at least 3 points");
  if (!embeddings.allFinite()) {
    throw NumericError("projection input has non-finite values");
  }
  Eigen::MatrixXd centred(n, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += embeddings(i, k);
    mean /= static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) centred(i, k) = embeddings(i, k) - mean;
  }
  const Eigen::MatrixXd cov =
      (centred.transpose() * centred) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed");
  }
  const auto& values = solver.eigenvalues();
  const double top = std::max(values(d - 1), 0.0);

  model::Matrix out = model::Matrix::Zero(n, 2);
  for (int axis = 0; axis < 2 && axis < d; ++axis) {
    const Eigen::Index c = d - 1 - axis;
    if (!(values(c) > 1e-12 * top) || top == 0.0) continue;
    Eigen::VectorXd v = solver.eigenvectors().col(c);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < d; ++k) {
      if (std::abs(v(k)) > std::abs(v(arg))) arg = k;
    }
    if (v(arg) < 0.0) v = -v;
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) s += centred(i, k) * v(k);
      out(i, axis) = s;
    }
  }
  return out;
}

}  // namespace finprint::eval
