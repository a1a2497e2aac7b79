#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finprint/core/rng.hpp"
#include "finprint/core/types.hpp"
#include "finprint/model/encoder.hpp"
#include "finprint/model/optimizer.hpp"

namespace finprint::triplets {

struct TripletLossParams {
  double alpha = 0.2;

  void validate() const;
};

/// P identities x K images per training batch.
struct BatchPlan {
  int identities_per_batch = 16;
  int images_per_identity = 8;

  void validate() const;
  int batch_size() const { return identities_per_batch * images_per_identity; }
};

/// Distance used by the miner's violation test.
enum class MiningMetric { L2, SquaredL2 };

std::string_view to_string(MiningMetric m);
MiningMetric parse_mining_metric(std::string_view s);

/// candidates: ordered (anchor, positive) pairs the miner looked at.
/// used: triplets it emitted, at most one per candidate pair.
/// mean_loss: summed triplet loss over used triplets divided by their count,
/// 0 when nothing was used.
struct MiningReport {
  int epoch = 0;
  std::int64_t candidates = 0;
  std::int64_t used = 0;
  double mean_loss = 0.0;

  bool operator==(const MiningReport&) const = default;
};

/// max(0, |a-p|^2 - |a-n|^2 + alpha).
double triplet_loss(std::span<const double> a, std::span<const double> p,
                    std::span<const double> n, const TripletLossParams& params);

struct TripletGradient {
  std::vector<double> anchor;
  std::vector<double> positive;
  std::vector<double> negative;
};

/// Zero when the hinge is inactive, otherwise
/// d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n).
TripletGradient triplet_loss_grad(std::span<const double> a,
                                  std::span<const double> p,
                                  std::span<const double> n,
                                  const TripletLossParams& params);

struct MiningResult {
  /// Row indices into the embedding matrix.
  std::vector<Triplet> triplets;
  std::int64_t candidates = 0;
};

/// In-batch violating-triplet mining. For every identity, every anchor and
/// every other embedding of that identity as positive, collects negatives
/// with dist(a, n) - dist(a, p) < alpha and emits one chosen uniformly. The
/// list is shuffled at the end. Each anchor draws from its own sub-stream, so
/// the result does not depend on the thread count.
///
/// labels[i] is the identity of row i. Identities with a single row supply
/// no anchors. Throws ContractError with fewer than two identities.
MiningResult select_triplets(const model::Matrix& embeddings,
                             std::span<const IdentityId> labels, double alpha,
                             MiningMetric metric, const Rng& rng);

struct TrainOptions {
  BatchPlan plan;
  TripletLossParams loss;
  MiningMetric metric = MiningMetric::L2;
  int epochs = 100;
  /// Empty disables checkpointing.
  std::string checkpoint_path;
  /// Also checkpoint every N epochs; 0 means only at the end.
  int checkpoint_every = 0;
  std::function<void(const MiningReport&)> on_epoch;
};

struct TrainResult {
  model::Weights weights;
  model::OptimizerState optimizer;
  std::vector<MiningReport> reports;
};

/// Batch indices for one epoch: ceil(n / (P*K)) batches, each P distinct
/// identities with K distinct samples apiece (fewer if an identity has fewer).
std::vector<std::vector<std::size_t>> plan_epoch(
    std::span<const IdentityId> labels, const BatchPlan& plan, const Rng& rng);

/// Trains from the given weights. Batches with no mined triplets leave the
/// weights and optimizer untouched. On a NumericError the previously written
/// checkpoint is left in place and the error is rethrown with the epoch.
TrainResult train(std::span<const Sample> samples, model::Weights weights,
                  model::OptimizerState optimizer, const TrainOptions& options,
                  const Rng& rng);

/// As above from init(config, rng.substream("init")) and Adam at the default
/// learning rate.
TrainResult train(std::span<const Sample> samples,
                  const model::EncoderConfig& config,
                  const TrainOptions& options, const Rng& rng);

}  // namespace finprint::triplets
