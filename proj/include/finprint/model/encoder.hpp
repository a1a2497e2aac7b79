#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finprint/core/rng.hpp"
#include "finprint/core/tensor_io.hpp"
#include "finprint/core/types.hpp"

namespace finprint::model {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct InputShape {
  int height = 64;
  int width = 64;
  int channels = 1;

  bool operator==(const InputShape&) const = default;
};

/// Conv (same padding) -> ReLU -> max pool.
struct ConvBlock {
  int filters = 8;
  int kernel = 3;
  int stride = 1;
  int pool = 2;

  bool operator==(const ConvBlock&) const = default;
};

struct EncoderConfig {
  InputShape input;
  std::vector<ConvBlock> conv_blocks = {{8}, {16}, {32}};
  int embed_dim = 128;

  /// Throws ConfigError for non-positive sizes or spatial underflow.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Resolved per-block geometry of a validated config.
struct BlockGeometry {
  int in_h, in_w, in_c;
  int conv_h, conv_w;
  int filters, kernel, stride, pad, pool;
  int out_h, out_w;

  int patch_size() const { return kernel * kernel * in_c; }
};

std::vector<BlockGeometry> block_geometry(const EncoderConfig& config);
int flat_size(const EncoderConfig& config);

inline constexpr const char* kWeightsVersion = "finprint-encoder-v1";

/// Trainable tensors in a fixed order: for each conv block a kernel
/// [k, k, c_in, filters] and a bias [filters], then the dense matrix
/// [flat, embed_dim] and its bias [embed_dim].
struct Weights {
  EncoderConfig config;
  std::string version = kWeightsVersion;
  std::uint64_t init_seed = 0;
  std::vector<Tensor> params;

  std::size_t parameter_count() const;
  bool operator==(const Weights&) const = default;
};

using Gradients = std::vector<Tensor>;

/// He (fan-in) normal init for weights, zero biases.
Weights init(const EncoderConfig& config, Rng rng);

Gradients zero_gradients(const Weights& w);

/// Per-sample activations kept by forward() for backward().
struct SampleCache {
  std::vector<std::vector<double>> block_input;   // per block, HWC
  std::vector<std::vector<std::int32_t>> argmax;  // pooled -> relu index
  std::vector<double> flat;
  std::vector<double> unit;  // normalised embedding
  double norm = 0.0;
};

struct ForwardCache {
  const Weights* weights = nullptr;
  std::vector<SampleCache> samples;
};

struct ForwardResult {
  Matrix embeddings;  // batch x embed_dim, unit rows
  ForwardCache cache;
};

/// Embeds a batch. With keep_cache the result can be passed to backward().
/// Throws ContractError on shape mismatch and NumericError naming the layer
/// on non-finite activations.
ForwardResult forward(const Weights& w, std::span<const Image* const> batch,
                      bool keep_cache = true);

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient with respect to the embeddings (batch x embed_dim). Rows of
/// zeros are skipped.
Gradients backward(const Weights& w, const ForwardCache& cache,
                   const Matrix& grad_embeddings);

/// Forward without caches, in fixed-size chunks.
Matrix embed(const Weights& w, std::span<const Image* const> images);

/// The normalisation layer on its own: v / |v|.
std::vector<double> l2_normalize(std::span<const double> v);

/// Vector-Jacobian product of the normalisation layer at v:
/// (I - y y^T) g / |v| with y = v / |v|.
std::vector<double> l2_normalize_backward(std::span<const double> v,
                                          std::span<const double> g);

}  // namespace finprint::model
