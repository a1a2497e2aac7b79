#include "finprint/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>

#include "finprint/core/error.hpp"
#include "finprint/core/manifest.hpp"
#include "finprint/core/parallel.hpp"
#include "finprint/core/tensor_io.hpp"

namespace finprint::synth {
namespace {

// Head ellipse in unit coordinates.
constexpr double kHeadCx = 0.5;
constexpr double kHeadCy = 0.5;
constexpr double kHeadAx = 0.40;
constexpr double kHeadAy = 0.32;
// Spots stay inside this fraction of the head so they never touch its rim.
constexpr double kSpotRegion = 0.8;
constexpr double kBackground = 0.1;
constexpr double kSpotDarkening = 0.8;
constexpr int kMaxRetries = 2000;

bool inside_spot_region(double x, double y) {
  const double u = (x - kHeadCx) / (kHeadAx * kSpotRegion);
  const double v = (y - kHeadCy) / (kHeadAy * kSpotRegion);
  return u * u + v * v <= 1.0;
}

std::optional<IdentitySpec> try_spec(IdentityId id, int spots, Rng& rng) {
  IdentitySpec spec;
  spec.identity = id;
  spec.base_brightness = rng.uniform(0.75, 0.95);
  for (int s = 0; s < spots; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Spot spot;
      spot.cx = rng.uniform(kHeadCx - kHeadAx, kHeadCx + kHeadAx);
      spot.cy = rng.uniform(kHeadCy - kHeadAy, kHeadCy + kHeadAy);
      spot.r = rng.uniform(0.03, 0.05);
      spot.intensity = rng.uniform(0.6, 1.0);
      if (!inside_spot_region(spot.cx, spot.cy)) continue;
      const bool overlaps = std::any_of(
          spec.spots.begin(), spec.spots.end(), [&](const Spot& o) {
            return std::hypot(o.cx - spot.cx, o.cy - spot.cy) <
                   o.r + spot.r + 0.01;
          });
      if (overlaps) continue;
      spec.spots.push_back(spot);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  return spec;
}

double directed_miss(const IdentitySpec& a, const IdentitySpec& b) {
  double worst = 0.0;
  for (const auto& s : a.spots) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& t : b.spots) {
      nearest = std::min(nearest, std::hypot(s.cx - t.cx, s.cy - t.cy));
    }
    worst = std::max(worst, nearest);
  }
  return worst;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void AugmentParams::validate() const {
  if (!(tilt_max_deg >= 0.0)) throw ConfigError("tilt_max_deg must be >= 0");
  if (!(vshift_max_frac >= 0.0)) {
    throw ConfigError("vshift_max_frac must be >= 0");
  }
  if (!(brightness_low <= 1.0 && 1.0 <= brightness_high &&
        brightness_low >= 0.0)) {
    throw ConfigError("brightness range must satisfy 0 <= low <= 1 <= high");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (copies_per_image < 0) throw ConfigError("copies_per_image must be >= 0");
}

double spec_separation(const IdentitySpec& a, const IdentitySpec& b) {
  return std::max(directed_miss(a, b), directed_miss(b, a));
}

double separation_threshold(const IdentitySpec& a, const IdentitySpec& b) {
  double r = 0.0;
  for (const auto& s : a.spots) r = std::max(r, s.r);
  for (const auto& s : b.spots) r = std::max(r, s.r);
  return 2.0 * r;
}

std::vector<IdentitySpec> gen_identities(int n, int spots_per_identity,
                                         Rng rng) {
  if (n < 1) throw ConfigError("gen_identities: n must be >= 1");
  if (spots_per_identity < 1) {
    throw ConfigError("gen_identities: spots_per_identity must be >= 1");
  }
  std::vector<IdentitySpec> specs;
  specs.reserve(static_cast<std::size_t>(n));
  for (int id = 0; id < n; ++id) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxRetries && !accepted; ++attempt) {
      auto candidate = try_spec(id, spots_per_identity, rng);
      if (!candidate) continue;
      const bool separable = std::all_of(
          specs.begin(), specs.end(), [&](const IdentitySpec& other) {
            return spec_separation(*candidate, other) >
                   separation_threshold(*candidate, other);
          });
      if (!separable) continue;
      specs.push_back(std::move(*candidate));
      accepted = true;
    }
    if (!accepted) {
      throw ConfigError("gen_identities: could not place identity " +
                        std::to_string(id) + " with " +
                        std::to_string(spots_per_identity) +
                        " separable spots; use fewer spots or fewer "
                        "identities, or a larger canvas");
    }
  }
  return specs;
}

Sample render(const IdentitySpec& spec, const Shape& shape, double noise_sigma,
              Rng rng) {
  if (shape.height < 16 || shape.width < 16) {
    throw ContractError("render: canvas must be at least 16x16");
  }
  if (shape.channels != 1 && shape.channels != 3) {
    throw ContractError("render: channels must be 1 or 3");
  }
  const int H = shape.height, W = shape.width, C = shape.channels;
  const double short_side = std::min(H, W);
  const double head_px = std::min(kHeadAx * W, kHeadAy * H);
  static constexpr double kTint[3] = {1.0, 0.93, 0.86};

  Sample out;
  out.identity = spec.identity;
  out.pixels = Image(H, W, C);
  for (int y = 0; y < H; ++y) {
    const double v = (y + 0.5) / H;
    for (int x = 0; x < W; ++x) {
      const double u = (x + 0.5) / W;
      const double eu = (u - kHeadCx) / kHeadAx;
      const double ev = (v - kHeadCy) / kHeadAy;
      const double rim_px = (std::sqrt(eu * eu + ev * ev) - 1.0) * head_px;
      const double head = clamp01(0.5 - rim_px);
      double value = kBackground + head * (spec.base_brightness - kBackground);
      for (const auto& s : spec.spots) {
        const double d = std::hypot((u - s.cx) * W, (v - s.cy) * H);
        const double cover = clamp01(s.r * short_side + 0.5 - d);
        value *= 1.0 - kSpotDarkening * s.intensity * cover;
      }
      for (int c = 0; c < C; ++c) {
        double p = C == 1 ? value : value * kTint[c];
        if (noise_sigma > 0.0) p += noise_sigma * rng.normal();
        out.pixels.at(y, x, c) = clamp01(p);
      }
    }
  }
  return out;
}

Image apply_augmentation(const Image& src, const AugmentDraw& draw) {
  const int H = src.height, W = src.width, C = src.channels;
  Image out(H, W, C);
  const double theta = draw.tilt_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Inverse map from output pixel to source coordinates.
      const double dx = x - cx;
      const double dy = y - cy - draw.vshift_px;
      const double sx = std::clamp(cs * dx + sn * dy + cx, 0.0, W - 1.0);
      const double sy = std::clamp(-sn * dx + cs * dy + cy, 0.0, H - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < C; ++c) {
        const double v = src.at(y0, x0, c) * (1 - fx) * (1 - fy) +
                         src.at(y0, x1, c) * fx * (1 - fy) +
                         src.at(y1, x0, c) * (1 - fx) * fy +
                         src.at(y1, x1, c) * fx * fy;
        out.at(y, x, c) = clamp01(v * draw.brightness);
      }
    }
  }
  return out;
}

AugmentDraw draw_augmentation(const AugmentParams& p, int height, Rng& rng) {
  AugmentDraw d;
  d.tilt_deg = rng.uniform(-p.tilt_max_deg, p.tilt_max_deg);
  d.vshift_px = rng.uniform(-p.vshift_max_frac, p.vshift_max_frac) * height;
  d.brightness = rng.uniform(p.brightness_low, p.brightness_high);
  return d;
}

std::vector<Sample> augment(const Sample& s, const AugmentParams& p, Rng rng,
                            SampleId first_id) {
  p.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(p.copies_per_image));
  for (int i = 0; i < p.copies_per_image; ++i) {
    const AugmentDraw d = draw_augmentation(p, s.pixels.height, rng);
    Sample copy;
    copy.sample_id = first_id + i;
    copy.identity = s.identity;
    copy.split = s.split;
    copy.augmented_from = s.sample_id;
    copy.pixels = apply_augmentation(s.pixels, d);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<const Sample*> Dataset::split(Split which) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

Dataset build_dataset(int n_ids, int imgs_per_id, const AugmentParams& p,
                      double split_frac, Rng rng,
                      const DatasetOptions& options) {
  if (!(split_frac > 0.0 && split_frac < 1.0)) {
    throw ConfigError("split_frac must lie in (0, 1)");
  }
  if (imgs_per_id < 1) throw ConfigError("imgs_per_id must be >= 1");
  p.validate();

  Dataset d;
  d.identities =
      gen_identities(n_ids, options.spots_per_identity, rng.substream("ids"));

  const auto n_orig = static_cast<std::size_t>(n_ids) * imgs_per_id;
  const auto per_orig = static_cast<std::size_t>(1 + p.copies_per_image);

  // Split tags per original, decided before rendering.
  std::vector<Split> split_of(n_orig, Split::Test);
  Rng split_rng = rng.substream("split");
  const auto train_count = [&](int n) {
    const int k = static_cast<int>(std::lround(n * split_frac));
    return n >= 2 ? std::clamp(k, 1, n - 1) : std::clamp(k, 0, n);
  };
  if (options.split_by_identity) {
    std::vector<int> ids(static_cast<std::size_t>(n_ids));
    std::iota(ids.begin(), ids.end(), 0);
    split_rng.shuffle(std::span<int>(ids));
    const int k = train_count(n_ids);
    for (int r = 0; r < k; ++r) {
      for (int j = 0; j < imgs_per_id; ++j) {
        split_of[static_cast<std::size_t>(ids[r]) * imgs_per_id + j] =
            Split::Train;
      }
    }
  } else {
    const int k = train_count(imgs_per_id);
    for (int id = 0; id < n_ids; ++id) {
      std::vector<int> order(static_cast<std::size_t>(imgs_per_id));
      std::iota(order.begin(), order.end(), 0);
      split_rng.shuffle(std::span<int>(order));
      for (int r = 0; r < k; ++r) {
        split_of[static_cast<std::size_t>(id) * imgs_per_id + order[r]] =
            Split::Train;
      }
    }
  }

  d.samples.resize(n_orig * per_orig);
  const Rng render_rng = rng.substream("render");
  const Rng augment_rng = rng.substream("augment");
  parallel_for(n_orig, [&](std::size_t o) {
    const auto id = static_cast<std::size_t>(o / imgs_per_id);
    const auto base = static_cast<SampleId>(o * per_orig);
    Sample original = render(d.identities[id], options.shape, p.noise_sigma,
                             render_rng.substream(o));
    original.sample_id = base;
    original.split = split_of[o];
    auto copies = augment(original, p, augment_rng.substream(o), base + 1);
    d.samples[o * per_orig] = std::move(original);
    for (std::size_t c = 0; c < copies.size(); ++c) {
      d.samples[o * per_orig + 1 + c] = std::move(copies[c]);
    }
  });
  return d;
}

std::string write_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "samples", ec);
  if (ec) throw IoError(dir, "cannot create dataset directory: " + ec.message());

  std::vector<ManifestEntry> entries(d.samples.size());
  parallel_for(d.samples.size(), [&](std::size_t i) {
    const Sample& s = d.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "samples/%06lld.fnt",
                  static_cast<long long>(s.sample_id));
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(s.pixels.height),
                                   static_cast<std::uint32_t>(s.pixels.width),
                                   static_cast<std::uint32_t>(s.pixels.channels)};
    write_tensor((fs::path(dir) / name).string(), dims, s.pixels.pixels);
    entries[i] = {s.sample_id, s.identity, name, s.split, s.augmented_from};
  });
  const auto manifest = (fs::path(dir) / "manifest.jsonl").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace finprint::synth
