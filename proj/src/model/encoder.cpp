#include "finprint/model/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "finprint/core/error.hpp"
#include "finprint/core/parallel.hpp"

namespace finprint::model {
namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using RowMap = Eigen::Map<const Eigen::RowVectorXd>;

// Fixed work unit for parallel loops and gradient accumulation. Sums are
// reduced in chunk order, so results do not depend on the thread count.
constexpr std::size_t kChunk = 8;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Patch rows are laid out (ky, kx, c); for a fixed ky the kx * c values are
// contiguous in HWC input whenever the window row lies inside the image.
void im2col(const double* in, const BlockGeometry& g, double* col) {
  const int K = g.patch_size();
  const int span = g.kernel * g.in_c;
  const std::size_t total = static_cast<std::size_t>(g.conv_h) * g.conv_w * K;
  std::fill(col, col + total, 0.0);
  for (int oy = 0; oy < g.conv_h; ++oy) {
    for (int ox = 0; ox < g.conv_w; ++ox) {
      double* row = col + static_cast<std::size_t>(oy * g.conv_w + ox) * K;
      const int ix0 = ox * g.stride - g.pad;
      const int kx_lo = std::max(0, -ix0);
      const int kx_hi = std::min(g.kernel, g.in_w - ix0);
      if (kx_hi <= kx_lo) continue;
      const int skip = kx_lo * g.in_c;
      const int n = (kx_hi - kx_lo) * g.in_c;
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        const double* src =
            in + (static_cast<std::size_t>(iy) * g.in_w + ix0) * g.in_c + skip;
        double* dst = row + ky * span + skip;
        for (int t = 0; t < n; ++t) dst[t] = src[t];
      }
    }
  }
}

void col2im(const double* col, const BlockGeometry& g, double* out) {
  const int K = g.patch_size();
  const int span = g.kernel * g.in_c;
  std::fill(out, out + static_cast<std::size_t>(g.in_h) * g.in_w * g.in_c, 0.0);
  for (int oy = 0; oy < g.conv_h; ++oy) {
    for (int ox = 0; ox < g.conv_w; ++ox) {
      const double* row = col + static_cast<std::size_t>(oy * g.conv_w + ox) * K;
      const int ix0 = ox * g.stride - g.pad;
      const bool inside_x = ix0 >= 0 && ix0 + g.kernel <= g.in_w;
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        const double* src = row + ky * span;
        double* dst_row = out + static_cast<std::size_t>(iy) * g.in_w * g.in_c;
        if (inside_x) {
          double* d = dst_row + ix0 * g.in_c;
          for (int t = 0; t < span; ++t) d[t] += src[t];
          continue;
        }
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ix0 + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          double* d = dst_row + ix * g.in_c;
          const double* sv = src + kx * g.in_c;
          for (int c = 0; c < g.in_c; ++c) d[c] += sv[c];
        }
      }
    }
  }
}

void check_finite(std::span<const double> v, const std::string& layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError("non-finite activation in " + layer);
    }
  }
}

double norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

// out[e] = bias[e] + sum_k in[k] * weights[k, e], accumulated in k order.
void dense_row(const double* __restrict in, int n_in,
               const double* __restrict weights, const double* __restrict bias,
               int n_out, double* __restrict out) {
  std::copy(bias, bias + n_out, out);
  for (int k = 0; k < n_in; ++k) {
    const double x = in[k];
    if (x == 0.0) continue;
    const double* wk = weights + static_cast<std::size_t>(k) * n_out;
    for (int e = 0; e < n_out; ++e) out[e] += x * wk[e];
  }
}

// dst[c] += sum over rows of m[r, c], row-major, rows in order.
void add_column_sums(const double* m, int rows, int cols, double* dst) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dst[c] += row[c];
  }
}

std::string block_name(std::size_t b) {
  return "conv block " + std::to_string(b);
}

// Runs the conv stack for one image. Returns the flattened output; fills
// `cache` when given.
std::vector<double> conv_forward(const Weights& w,
                                 const std::vector<BlockGeometry>& geom,
                                 const Image& img, SampleCache* cache,
                                 std::vector<double>& col,
                                 std::vector<double>& relu) {
  std::vector<double> act = img.pixels;
  for (std::size_t b = 0; b < geom.size(); ++b) {
    const auto& g = geom[b];
    const int K = g.patch_size();
    const int HW = g.conv_h * g.conv_w;
    col.resize(static_cast<std::size_t>(HW) * K);
    im2col(act.data(), g, col.data());

    relu.resize(static_cast<std::size_t>(HW) * g.filters);
    MutMap out(relu.data(), HW, g.filters);
    const auto& kernel = w.params[2 * b];
    const auto& bias = w.params[2 * b + 1];
    out.noalias() = ConstMap(col.data(), HW, K) *
                    ConstMap(kernel.data.data(), K, g.filters);
    out.rowwise() += RowMap(bias.data.data(), g.filters);
    check_finite(relu, block_name(b));
    for (auto& v : relu) v = v > 0.0 ? v : 0.0;

    std::vector<double> pooled(
        static_cast<std::size_t>(g.out_h) * g.out_w * g.filters);
    std::vector<std::int32_t> arg(cache ? pooled.size() : 0);
    const int F = g.filters;
    std::vector<std::int32_t> best_idx(static_cast<std::size_t>(F));
    for (int py = 0; py < g.out_h; ++py) {
      for (int px = 0; px < g.out_w; ++px) {
        const auto o = static_cast<std::size_t>(py * g.out_w + px) * F;
        double* best = pooled.data() + o;
        const auto first = ((py * g.pool) * g.conv_w + px * g.pool) * F;
        for (int f = 0; f < F; ++f) {
          best[f] = relu[first + f];
          best_idx[f] = first + f;
        }
        for (int dy = 0; dy < g.pool; ++dy) {
          for (int dx = dy == 0 ? 1 : 0; dx < g.pool; ++dx) {
            const int base = ((py * g.pool + dy) * g.conv_w + px * g.pool + dx) * F;
            for (int f = 0; f < F; ++f) {
              if (relu[base + f] > best[f]) {
                best[f] = relu[base + f];
                best_idx[f] = base + f;
              }
            }
          }
        }
        if (cache) std::copy(best_idx.begin(), best_idx.end(), arg.begin() + o);
      }
    }
    if (cache) {
      cache->block_input.push_back(std::move(act));
      cache->argmax.push_back(std::move(arg));
    }
    act = std::move(pooled);
  }
  return act;
}

}  // namespace

void EncoderConfig::validate() const { (void)block_geometry(*this); }

std::vector<BlockGeometry> block_geometry(const EncoderConfig& config) {
  const auto& in = config.input;
  if (in.height < 1 || in.width < 1 || in.channels < 1) {
    throw ConfigError("encoder input shape must be positive");
  }
  if (config.embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
  std::vector<BlockGeometry> out;
  int h = in.height, w = in.width, c = in.channels;
  for (std::size_t b = 0; b < config.conv_blocks.size(); ++b) {
    const auto& blk = config.conv_blocks[b];
    if (blk.filters < 1 || blk.kernel < 1 || blk.kernel % 2 == 0 ||
        blk.stride < 1 || blk.pool < 1) {
      throw ConfigError(block_name(b) +
                        ": filters, stride, pool must be >= 1 and kernel odd");
    }
    BlockGeometry g{};
    g.in_h = h;
    g.in_w = w;
    g.in_c = c;
    g.filters = blk.filters;
    g.kernel = blk.kernel;
    g.stride = blk.stride;
    g.pad = blk.kernel / 2;
    g.pool = blk.pool;
    g.conv_h = (h + 2 * g.pad - g.kernel) / g.stride + 1;
    g.conv_w = (w + 2 * g.pad - g.kernel) / g.stride + 1;
    g.out_h = g.conv_h / g.pool;
    g.out_w = g.conv_w / g.pool;
    if (g.out_h < 1 || g.out_w < 1) {
      throw ConfigError(block_name(b) + ": spatial size underflows to zero");
    }
    out.push_back(g);
    h = g.out_h;
    w = g.out_w;
    c = g.filters;
  }
  return out;
}

int flat_size(const EncoderConfig& config) {
  const auto geom = block_geometry(config);
  if (geom.empty()) {
    return config.input.height * config.input.width * config.input.channels;
  }
  const auto& g = geom.back();
  return g.out_h * g.out_w * g.filters;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params) n += t.data.size();
  return n;
}

Weights init(const EncoderConfig& config, Rng rng) {
  const auto geom = block_geometry(config);
  Weights w;
  w.config = config;
  w.init_seed = rng.seed();
  for (const auto& g : geom) {
    Tensor kernel;
    kernel.dims = {static_cast<std::uint32_t>(g.kernel),
                   static_cast<std::uint32_t>(g.kernel),
                   static_cast<std::uint32_t>(g.in_c),
                   static_cast<std::uint32_t>(g.filters)};
    kernel.data.resize(kernel.element_count());
    const double std_dev = std::sqrt(2.0 / g.patch_size());
    for (auto& v : kernel.data) v = std_dev * rng.normal();
    w.params.push_back(std::move(kernel));
    w.params.push_back(
        Tensor{{static_cast<std::uint32_t>(g.filters)},
               std::vector<double>(static_cast<std::size_t>(g.filters), 0.0)});
  }
  const int flat = flat_size(config);
  Tensor dense;
  dense.dims = {static_cast<std::uint32_t>(flat),
                static_cast<std::uint32_t>(config.embed_dim)};
  dense.data.resize(dense.element_count());
  const double std_dev = std::sqrt(2.0 / flat);
  for (auto& v : dense.data) v = std_dev * rng.normal();
  w.params.push_back(std::move(dense));
  w.params.push_back(Tensor{
      {static_cast<std::uint32_t>(config.embed_dim)},
      std::vector<double>(static_cast<std::size_t>(config.embed_dim), 0.0)});
  return w;
}

Gradients zero_gradients(const Weights& w) {
  Gradients g;
  g.reserve(w.params.size());
  for (const auto& t : w.params) {
    g.push_back(Tensor{t.dims, std::vector<double>(t.data.size(), 0.0)});
  }
  return g;
}

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericError("normalization layer: zero or non-finite vector");
  }
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] / n;
  return y;
}

std::vector<double> l2_normalize_backward(std::span<const double> v,
                                          std::span<const double> g) {
  if (v.size() != g.size()) {
    throw ContractError("l2_normalize_backward: length mismatch");
  }
  const auto y = l2_normalize(v);
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * g[i];
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (g[i] - y[i] * dot) / n;
  return out;
}

ForwardResult forward(const Weights& w, std::span<const Image* const> batch,
                      bool keep_cache) {
  const auto geom = block_geometry(w.config);
  const auto& in = w.config.input;
  const int flat = flat_size(w.config);
  const int E = w.config.embed_dim;
  const std::size_t B = batch.size();
  if (w.params.size() != 2 * geom.size() + 2) {
    throw ContractError("forward: weights do not match config");
  }
  for (std::size_t i = 0; i < B; ++i) {
    const Image& img = *batch[i];
    if (img.height != in.height || img.width != in.width ||
        img.channels != in.channels) {
      throw ContractError("forward: batch item " + std::to_string(i) +
                          " has shape " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + "x" +
                          std::to_string(img.channels) +
                          ", encoder expects " + std::to_string(in.height) +
                          "x" + std::to_string(in.width) + "x" +
                          std::to_string(in.channels));
    }
  }

  ForwardResult result;
  result.cache.weights = &w;
  if (keep_cache) result.cache.samples.resize(B);
  Matrix flat_batch(B, flat);
  parallel_for(chunk_count(B), [&](std::size_t chunk) {
    std::vector<double> col, relu;
    const std::size_t end = std::min(B, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      SampleCache* sc = keep_cache ? &result.cache.samples[i] : nullptr;
      auto out = conv_forward(w, geom, *batch[i], sc, col, relu);
      std::copy(out.begin(), out.end(), flat_batch.row(static_cast<Eigen::Index>(i)).data());
      if (sc) sc->flat = std::move(out);
    }
  });

  // The dense layer and the normalisation run row by row with plain loops:
  // every sample gets the same summation order wherever it sits in the batch.
  const auto& dense = w.params[2 * geom.size()];
  const auto& dense_bias = w.params[2 * geom.size() + 1];
  result.embeddings.resize(static_cast<Eigen::Index>(B), E);
  std::vector<double> pre(static_cast<std::size_t>(E));
  for (std::size_t i = 0; i < B; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    dense_row(flat_batch.row(row).data(), flat, dense.data.data(),
              dense_bias.data.data(), E, pre.data());
    check_finite(pre, "dense layer");
    const double n = norm(pre);
    if (!(n > 0.0)) {
      throw NumericError("normalization layer: zero embedding for batch item " +
                         std::to_string(i));
    }
    for (int e = 0; e < E; ++e) result.embeddings(row, e) = pre[e] / n;
    if (keep_cache) {
      auto& sc = result.cache.samples[i];
      sc.norm = n;
      sc.unit.assign(result.embeddings.row(row).data(),
                     result.embeddings.row(row).data() + E);
    }
  }
  return result;
}

Gradients backward(const Weights& w, const ForwardCache& cache,
                   const Matrix& grad_embeddings) {
  const auto geom = block_geometry(w.config);
  const int flat = flat_size(w.config);
  const int E = w.config.embed_dim;
  const std::size_t B = cache.samples.size();
  if (cache.weights == nullptr || !(cache.weights->config == w.config)) {
    throw ContractError("backward: cache was produced by a different encoder");
  }
  if (static_cast<std::size_t>(grad_embeddings.rows()) != B ||
      grad_embeddings.cols() != E) {
    throw ContractError("backward: gradient shape does not match the cache");
  }
  for (const auto& sc : cache.samples) {
    if (sc.flat.size() != static_cast<std::size_t>(flat) ||
        sc.unit.size() != static_cast<std::size_t>(E) ||
        sc.block_input.size() != geom.size()) {
      throw ContractError("backward: incomplete forward cache");
    }
  }

  // Only rows with a non-zero upstream gradient contribute.
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < B; ++i) {
    if (!grad_embeddings.row(static_cast<Eigen::Index>(i)).isZero(0.0)) {
      active.push_back(i);
    }
  }
  Gradients grads = zero_gradients(w);
  const std::size_t A = active.size();
  if (A == 0) return grads;

  // Normalisation layer: d pre = (g - y (y . g)) / |v|, with y = v / |v|.
  Matrix flat_active(A, flat);
  Matrix d_pre(A, E);
  const std::size_t n_blocks = geom.size();
  for (std::size_t a = 0; a < A; ++a) {
    const auto& sc = cache.samples[active[a]];
    const auto ra = static_cast<Eigen::Index>(a);
    std::copy(sc.flat.begin(), sc.flat.end(), flat_active.row(ra).data());
    const double* y = sc.unit.data();
    const double* g = grad_embeddings.row(static_cast<Eigen::Index>(active[a])).data();
    double dot = 0.0;
    for (int e = 0; e < E; ++e) dot += y[e] * g[e];
    for (int e = 0; e < E; ++e) d_pre(ra, e) = (g[e] - y[e] * dot) / sc.norm;
  }

  // Dense layer.
  auto& g_dense = grads[2 * n_blocks];
  auto& g_dense_bias = grads[2 * n_blocks + 1];
  MutMap(g_dense.data.data(), flat, E).noalias() =
      flat_active.transpose() * d_pre;
  add_column_sums(d_pre.data(), static_cast<int>(A), E, g_dense_bias.data.data());
  if (n_blocks == 0) return grads;
  const Matrix d_flat =
      d_pre * ConstMap(w.params[2 * n_blocks].data.data(), flat, E).transpose();

  // Conv stack, accumulated per fixed chunk of active samples.
  const std::size_t chunks = chunk_count(A);
  std::vector<Gradients> partial(chunks);
  parallel_for(chunks, [&](std::size_t chunk) {
    Gradients local;
    for (std::size_t b = 0; b < n_blocks; ++b) {
      local.push_back(Tensor{grads[2 * b].dims,
                             std::vector<double>(grads[2 * b].data.size(), 0.0)});
      local.push_back(Tensor{grads[2 * b + 1].dims,
                             std::vector<double>(grads[2 * b + 1].data.size(), 0.0)});
    }
    std::vector<double> col, d_col, d_relu, d_out;
    const std::size_t end = std::min(A, (chunk + 1) * kChunk);
    for (std::size_t a = chunk * kChunk; a < end; ++a) {
      const auto& sc = cache.samples[active[a]];
      const auto row = d_flat.row(static_cast<Eigen::Index>(a));
      d_out.assign(row.data(), row.data() + flat);
      for (std::size_t bi = n_blocks; bi-- > 0;) {
        const auto& g = geom[bi];
        const int K = g.patch_size();
        const int HW = g.conv_h * g.conv_w;
        const auto& arg = sc.argmax[bi];
        const auto& pooled = bi + 1 < n_blocks ? sc.block_input[bi + 1] : sc.flat;

        d_relu.assign(static_cast<std::size_t>(HW) * g.filters, 0.0);
        for (std::size_t o = 0; o < arg.size(); ++o) {
          if (pooled[o] > 0.0) d_relu[static_cast<std::size_t>(arg[o])] += d_out[o];
        }
        add_column_sums(d_relu.data(), HW, g.filters,
                        local[2 * bi + 1].data.data());

        col.resize(static_cast<std::size_t>(HW) * K);
        im2col(sc.block_input[bi].data(), g, col.data());
        MutMap(local[2 * bi].data.data(), K, g.filters).noalias() +=
            ConstMap(col.data(), HW, K).transpose() *
            ConstMap(d_relu.data(), HW, g.filters);

        if (bi == 0) break;
        d_col.resize(col.size());
        MutMap(d_col.data(), HW, K).noalias() =
            ConstMap(d_relu.data(), HW, g.filters) *
            ConstMap(w.params[2 * bi].data.data(), K, g.filters).transpose();
        d_out.resize(static_cast<std::size_t>(g.in_h) * g.in_w * g.in_c);
        col2im(d_col.data(), g, d_out.data());
      }
    }
    partial[chunk] = std::move(local);
  });
  for (const auto& local : partial) {
    for (std::size_t t = 0; t < local.size(); ++t) {
      auto& dst = grads[t].data;
      const auto& src = local[t].data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return grads;
}

Matrix embed(const Weights& w, std::span<const Image* const> images) {
  constexpr std::size_t kBatch = 64;
  Matrix out(static_cast<Eigen::Index>(images.size()), w.config.embed_dim);
  for (std::size_t start = 0; start < images.size(); start += kBatch) {
    const std::size_t n = std::min(kBatch, images.size() - start);
    const auto r = forward(w, images.subspan(start, n), false);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        r.embeddings;
  }
  return out;
}

}  // namespace finprint::model
