#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace finprint {

using SampleId = std::int64_t;
using IdentityId = std::int64_t;

/// One detector box in one video frame.
struct FrameBox {
  std::int64_t box_id = 0;
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  bool operator==(const FrameBox&) const = default;
};

/// Height x width x channels image, row-major HWC, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return pixels.size(); }

  bool operator==(const Image&) const = default;
};

enum class Split { Train, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Sample {
  SampleId sample_id = 0;
  IdentityId identity = 0;
  Image pixels;
  Split split = Split::Train;
  std::optional<SampleId> augmented_from;
};

/// Unit-norm embedding f(x) of one sample.
struct Embedding {
  std::vector<double> values;
  SampleId sample_id = 0;
};

struct Triplet {
  SampleId anchor = 0;
  SampleId positive = 0;
  SampleId negative = 0;

  bool operator==(const Triplet&) const = default;
};

}  // namespace finprint
