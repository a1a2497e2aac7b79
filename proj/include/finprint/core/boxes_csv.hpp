#pragma once

#include <span>
#include <string>
#include <vector>

#include "finprint/core/types.hpp"

namespace finprint {

/// Reads `box_id,frame,x,y,w,h` rows in file order. Throws ParseError with
/// the 1-based line number on malformed rows, non-positive sizes, or
/// duplicate ids.
std::vector<FrameBox> read_boxes_csv(const std::string& path);

void write_boxes_csv(const std::string& path, std::span<const FrameBox> boxes);

}  // namespace finprint
