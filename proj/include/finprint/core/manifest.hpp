#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finprint/core/types.hpp"

namespace finprint {

/// One line of manifest.jsonl. `path` is relative to the manifest directory.
struct ManifestEntry {
  SampleId sample_id = 0;
  IdentityId identity = 0;
  std::string path;
  Split split = Split::Train;
  std::optional<SampleId> augmented_from;

  bool operator==(const ManifestEntry&) const = default;
};

void write_manifest(const std::string& path,
                    std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Loads the pixel tensors of a manifest into samples. Pixel paths are
/// resolved against the manifest's directory.
std::vector<Sample> load_samples(const std::string& manifest_path);

}  // namespace finprint
