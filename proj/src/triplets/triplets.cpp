#include "finprint/triplets/triplets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "finprint/core/error.hpp"
#include "finprint/core/parallel.hpp"
#include "finprint/model/checkpoint.hpp"

namespace finprint::triplets {

namespace {

void check_lengths(std::size_t a, std::size_t p, std::size_t n) {
  if (a != p || a != n) {
    throw ContractError("triplet vectors differ in length: " +
                        std::to_string(a) + ", " + std::to_string(p) + ", " +
                        std::to_string(n));
  }
}

double squared_distance(const double* x, const double* y, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = x[i] - y[i];
    s += t * t;
  }
  return s;
}

double hinge(std::span<const double> a, std::span<const double> p,
             std::span<const double> n, double alpha) {
  return squared_distance(a.data(), p.data(), a.size()) -
         squared_distance(a.data(), n.data(), a.size()) + alpha;
}

std::span<const double> row(const model::Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

void TripletLossParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be finite and >= 0");
  }
}

void BatchPlan::validate() const {
  if (identities_per_batch < 2) {
    throw ConfigError("identities per batch must be >= 2");
  }
  if (images_per_identity < 2) {
    throw ConfigError("images per identity must be >= 2");
  }
}

std::string_view to_string(MiningMetric m) {
  return m == MiningMetric::L2 ? "l2" : "sq-l2";
}

MiningMetric parse_mining_metric(std::string_view s) {
  if (s == "l2") return MiningMetric::L2;
  if (s == "sq-l2") return MiningMetric::SquaredL2;
  throw ConfigError("unknown mining metric '" + std::string(s) +
                    "' (expected l2 or sq-l2)");
}

double triplet_loss(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, const TripletLossParams& params) {
  check_lengths(a.size(), p.size(), n.size());
  return std::max(0.0, hinge(a, p, n, params.alpha));
}

TripletGradient triplet_loss_grad(std::span<const double> a,
                                  std::span<const double> p,
                                  std::span<const double> n,
                                  const TripletLossParams& params) {
  check_lengths(a.size(), p.size(), n.size());
  const std::size_t d = a.size();
  TripletGradient g{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                    std::vector<double>(d, 0.0)};
  if (!(hinge(a, p, n, params.alpha) > 0.0)) return g;
  for (std::size_t i = 0; i < d; ++i) {
    g.anchor[i] = 2.0 * (n[i] - p[i]);
    g.positive[i] = -2.0 * (a[i] - p[i]);
    g.negative[i] = 2.0 * (a[i] - n[i]);
  }
  return g;
}

MiningResult select_triplets(const model::Matrix& embeddings,
                             std::span<const IdentityId> labels, double alpha,
                             MiningMetric metric, const Rng& rng) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n) {
    throw ContractError("select_triplets: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(n) + " embeddings");
  }
  std::map<IdentityId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) {
    throw ContractError("select_triplets needs at least two identities");
  }

  const auto d = static_cast<std::size_t>(embeddings.cols());
  auto dist = [&](std::size_t i, std::size_t j) {
    const double s = squared_distance(embeddings.data() + i * d,
                                      embeddings.data() + j * d, d);
    return metric == MiningMetric::L2 ? std::sqrt(s) : s;
  };

  std::vector<std::size_t> anchors;
  for (const auto& [id, rows] : groups) {
    if (rows.size() < 2) continue;
    anchors.insert(anchors.end(), rows.begin(), rows.end());
  }

  std::vector<std::vector<Triplet>> per_anchor(anchors.size());
  const Rng anchor_root = rng.substream("anchor");
  parallel_for(anchors.size(), [&](std::size_t k) {
    const std::size_t a = anchors[k];
    const auto& own = groups.at(labels[a]);
    std::vector<std::size_t> neg_rows;
    std::vector<double> neg_dist;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] == labels[a]) continue;
      neg_rows.push_back(j);
      neg_dist.push_back(dist(a, j));
    }
    Rng local = anchor_root.substream(static_cast<std::uint64_t>(a));
    std::vector<std::size_t> violators;
    for (std::size_t p : own) {
      if (p == a) continue;
      const double dp = dist(a, p);
      violators.clear();
      for (std::size_t m = 0; m < neg_rows.size(); ++m) {
        if (neg_dist[m] - dp < alpha) violators.push_back(neg_rows[m]);
      }
      if (violators.empty()) continue;
      const auto pick = violators[local.uniform_index(violators.size())];
      per_anchor[k].push_back({static_cast<SampleId>(a),
                               static_cast<SampleId>(p),
                               static_cast<SampleId>(pick)});
    }
  });

  MiningResult out;
  for (std::size_t a : anchors) {
    out.candidates += static_cast<std::int64_t>(groups.at(labels[a]).size()) - 1;
  }
  for (auto& v : per_anchor) {
    out.triplets.insert(out.triplets.end(), v.begin(), v.end());
  }
  Rng shuffler = rng.substream("shuffle");
  shuffler.shuffle(std::span<Triplet>(out.triplets));
  return out;
}

std::vector<std::vector<std::size_t>> plan_epoch(
    std::span<const IdentityId> labels, const BatchPlan& plan, const Rng& rng) {
  plan.validate();
  std::map<IdentityId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> eligible;
  for (const auto& [id, rows] : groups) {
    if (rows.size() >= 2) eligible.push_back(&rows);
  }
  const auto P = static_cast<std::size_t>(plan.identities_per_batch);
  const auto K = static_cast<std::size_t>(plan.images_per_identity);
  if (eligible.size() < P) {
    throw ConfigError("batch needs " + std::to_string(P) +
                      " identities with >= 2 samples, training set has " +
                      std::to_string(eligible.size()));
  }
  if (P * K > labels.size()) {
    throw ConfigError("batch size " + std::to_string(P * K) +
                      " exceeds training set size " +
                      std::to_string(labels.size()));
  }
  const std::size_t batches = (labels.size() + P * K - 1) / (P * K);
  std::vector<std::vector<std::size_t>> out(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    Rng r = rng.substream(static_cast<std::uint64_t>(b));
    std::vector<std::size_t> ids(eligible.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    r.shuffle(std::span<std::size_t>(ids));
    for (std::size_t q = 0; q < P; ++q) {
      std::vector<std::size_t> rows = *eligible[ids[q]];
      r.shuffle(std::span<std::size_t>(rows));
      rows.resize(std::min(K, rows.size()));
      out[b].insert(out[b].end(), rows.begin(), rows.end());
    }
  }
  return out;
}

TrainResult train(std::span<const Sample> samples, model::Weights weights,
                  model::OptimizerState optimizer, const TrainOptions& options,
                  const Rng& rng) {
  options.plan.validate();
  options.loss.validate();
  weights.config.validate();
  if (options.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (options.checkpoint_every < 0) {
    throw ConfigError("checkpoint interval must be >= 0");
  }
  if (samples.empty()) throw ConfigError("training set is empty");
  const auto& in = weights.config.input;
  for (const auto& s : samples) {
    if (s.pixels.height != in.height || s.pixels.width != in.width ||
        s.pixels.channels != in.channels) {
      throw ConfigError("sample " + std::to_string(s.sample_id) + " is " +
                        std::to_string(s.pixels.height) + "x" +
                        std::to_string(s.pixels.width) + "x" +
                        std::to_string(s.pixels.channels) +
                        ", encoder expects " + std::to_string(in.height) + "x" +
                        std::to_string(in.width) + "x" +
                        std::to_string(in.channels));
    }
  }
  std::vector<IdentityId> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.identity);
  // Fail on an impossible plan before spending time on epoch 1.
  (void)plan_epoch(labels, options.plan, rng.substream("plan").substream(0u));

  auto checkpoint = [&](const model::Weights& w,
                        const model::OptimizerState& o) {
    if (!options.checkpoint_path.empty()) {
      model::save_checkpoint(options.checkpoint_path, w, o);
    }
  };

  TrainResult result{std::move(weights), std::move(optimizer), {}};
  const Rng plan_root = rng.substream("plan");
  const Rng mine_root = rng.substream("mine");
  const auto d = static_cast<Eigen::Index>(result.weights.config.embed_dim);

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    MiningReport report;
    report.epoch = epoch;
    double loss_sum = 0.0;
    try {
      const auto batches = plan_epoch(
          labels, options.plan,
          plan_root.substream(static_cast<std::uint64_t>(epoch)));
      const Rng epoch_mine = mine_root.substream(static_cast<std::uint64_t>(epoch));
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& rows = batches[b];
        std::vector<const Image*> images;
        std::vector<IdentityId> batch_labels;
        for (std::size_t r : rows) {
          images.push_back(&samples[r].pixels);
          batch_labels.push_back(labels[r]);
        }
        auto fwd = model::forward(result.weights, images, true);
        const auto mined = select_triplets(
            fwd.embeddings, batch_labels, options.loss.alpha, options.metric,
            epoch_mine.substream(static_cast<std::uint64_t>(b)));
        report.candidates += mined.candidates;
        report.used += static_cast<std::int64_t>(mined.triplets.size());
        if (mined.triplets.empty()) continue;

        model::Matrix grad = model::Matrix::Zero(fwd.embeddings.rows(), d);
        const double scale = 1.0 / static_cast<double>(mined.triplets.size());
        for (const auto& t : mined.triplets) {
          const auto a = row(fwd.embeddings, t.anchor);
          const auto p = row(fwd.embeddings, t.positive);
          const auto n = row(fwd.embeddings, t.negative);
          loss_sum += triplet_loss(a, p, n, options.loss);
          const auto g = triplet_loss_grad(a, p, n, options.loss);
          for (Eigen::Index i = 0; i < d; ++i) {
            grad(t.anchor, i) += scale * g.anchor[i];
            grad(t.positive, i) += scale * g.positive[i];
            grad(t.negative, i) += scale * g.negative[i];
          }
        }
        if (grad.isZero(0.0)) continue;
        const auto grads = model::backward(result.weights, fwd.cache, grad);
        model::apply_update(result.weights, grads, result.optimizer);
      }
    } catch (const NumericError& e) {
      std::string where = "epoch " + std::to_string(epoch) + ": " + e.what();
      if (!options.checkpoint_path.empty()) {
        where += " (last good checkpoint kept at " + options.checkpoint_path + ")";
      }
      throw NumericError(where);
    }
    if (report.used > 0) {
      report.mean_loss = loss_sum / static_cast<double>(report.used);
    }
    result.reports.push_back(report);
    if (options.on_epoch) options.on_epoch(report);
    if (options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0 &&
        epoch != options.epochs) {
      checkpoint(result.weights, result.optimizer);
    }
  }
  checkpoint(result.weights, result.optimizer);
  return result;
}

TrainResult train(std::span<const Sample> samples,
                  const model::EncoderConfig& config,
                  const TrainOptions& options, const Rng& rng) {
  return train(samples, model::init(config, rng.substream("init")),
               model::make_adam(), options, rng);
}

}  // namespace finprint::triplets
