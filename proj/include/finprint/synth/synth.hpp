#pragma once

#include <string>
#include <vector>

#include "finprint/core/rng.hpp"
#include "finprint/core/types.hpp"

namespace finprint::synth {

/// One dark spot, in unit-square canvas coordinates. `r` is a fraction of
/// the shorter canvas side.
struct Spot {
  double cx = 0.5;
  double cy = 0.5;
  double r = 0.04;
  double intensity = 1.0;
};

/// The spot constellation that makes one synthetic individual recognisable.
struct IdentitySpec {
  IdentityId identity = 0;
  std::vector<Spot> spots;
  double base_brightness = 0.85;
};

struct Shape {
  int height = 64;
  int width = 64;
  int channels = 1;
};

struct AugmentParams {
  double tilt_max_deg = 15.0;
  double vshift_max_frac = 0.10;
  double brightness_low = 0.7;
  double brightness_high = 1.3;
  /// Pixel noise added when originals are rendered.
  double noise_sigma = 0.02;
  int copies_per_image = 5;

  void validate() const;
};

/// A concrete augmentation: rotation about the image centre, vertical shift
/// in pixels, brightness multiplier.
struct AugmentDraw {
  double tilt_deg = 0.0;
  double vshift_px = 0.0;
  double brightness = 1.0;
};

/// Smallest distance by which some spot of one spec misses every spot of the
/// other (symmetric directed-Hausdorff distance over spot centres).
double spec_separation(const IdentitySpec& a, const IdentitySpec& b);

/// Separation two identities must exceed: twice the largest spot radius.
double separation_threshold(const IdentitySpec& a, const IdentitySpec& b);

/// Generates `n` mutually separable identities. Throws ConfigError when the
/// spots cannot be placed within the bounded number of retries.
std::vector<IdentitySpec> gen_identities(int n, int spots_per_identity,
                                         Rng rng);

/// Renders one original image: a bright elliptical head on a dark
/// background, anti-aliased dark spots, Gaussian pixel noise, clamped to
/// [0, 1]. The returned sample has sample_id 0.
Sample render(const IdentitySpec& spec, const Shape& shape, double noise_sigma,
              Rng rng);

/// Applies one fixed augmentation. Bilinear resampling with edge pixels
/// replicated; the result is clamped to [0, 1].
Image apply_augmentation(const Image& src, const AugmentDraw& draw);

AugmentDraw draw_augmentation(const AugmentParams& p, int height, Rng& rng);

/// `copies_per_image` randomly augmented copies of `s`. Copies keep the
/// identity and split of `s`, point `augmented_from` at it, and get ids
/// first_id, first_id + 1, ...
std::vector<Sample> augment(const Sample& s, const AugmentParams& p, Rng rng,
                            SampleId first_id = 0);

struct DatasetOptions {
  Shape shape;
  int spots_per_identity = 12;
  /// Open-set protocol: whole identities go to one split.
  bool split_by_identity = false;
};

struct Dataset {
  std::vector<IdentitySpec> identities;
  std::vector<Sample> samples;

  std::vector<const Sample*> split(Split which) const;
};

/// Renders `imgs_per_id` originals for each of `n_ids` identities, augments
/// each, and splits by original image: an original and its augmentations
/// always share a split. With imgs_per_id >= 2 every identity appears in
/// both splits.
Dataset build_dataset(int n_ids, int imgs_per_id, const AugmentParams& p,
                      double split_frac, Rng rng,
                      const DatasetOptions& options = {});

/// Writes `dir/manifest.jsonl` and one FNT1 tensor per sample under
/// `dir/samples/`. Returns the manifest path.
std::string write_dataset(const Dataset& d, const std::string& dir);

}  // namespace finprint::synth
