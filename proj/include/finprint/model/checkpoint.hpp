#pragma once

#include <string>

#include <json.hpp>

#include "finprint/model/encoder.hpp"
#include "finprint/model/optimizer.hpp"

namespace finprint::model {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  Weights weights;
  OptimizerState optimizer;
};

nlohmann::json config_to_json(const EncoderConfig& c);
EncoderConfig config_from_json(const nlohmann::json& j);

/// File layout: "FNCK", u32 format version, u64 header length, JSON header
/// (config, weights version, init seed, optimizer scalars, tensor counts),
/// then the weight tensors followed by the optimizer moments, each as an
/// FNT1 blob. Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const Weights& w,
                     const OptimizerState& opt);

/// Throws FormatError for truncated or corrupt files and for unknown
/// format or weights versions.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace finprint::model
