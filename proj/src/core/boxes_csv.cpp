#include "finprint/core/boxes_csv.hpp"

#include <fstream>
#include <unordered_set>

#include "finprint/core/error.hpp"
#include "finprint/core/text.hpp"

namespace finprint {

namespace {
constexpr std::string_view kHeader = "box_id,frame,x,y,w,h";
}

std::vector<FrameBox> read_boxes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open boxes CSV");

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  ++line_no;
  if (text::trim(line) != kHeader) {
    throw ParseError(path, 1, "expected header '" + std::string(kHeader) + "'");
  }

  std::vector<FrameBox> boxes;
  std::unordered_set<std::int64_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(text::trim(line), ',');
    if (fields.size() != 6) {
      throw ParseError(path, line_no,
                       "expected 6 columns, found " +
                           std::to_string(fields.size()));
    }
    FrameBox b;
    if (!text::parse_int(fields[0], b.box_id)) {
      throw ParseError(path, line_no, "box_id is not an integer");
    }
    if (!text::parse_int(fields[1], b.frame) || b.frame < 0) {
      throw ParseError(path, line_no, "frame is not a non-negative integer");
    }
    static constexpr const char* kNames[] = {"x", "y", "w", "h"};
    double* targets[] = {&b.x, &b.y, &b.w, &b.h};
    for (int i = 0; i < 4; ++i) {
      if (!text::parse_double(fields[2 + i], *targets[i])) {
        throw ParseError(path, line_no,
                         std::string(kNames[i]) + " is not a finite number");
      }
    }
    if (b.w <= 0.0 || b.h <= 0.0) {
      throw ParseError(path, line_no, "box width and height must be > 0");
    }
    if (!seen.insert(b.box_id).second) {
      throw ParseError(path, line_no,
                       "duplicate box_id " + std::to_string(b.box_id));
    }
    boxes.push_back(b);
  }
  return boxes;
}

void write_boxes_csv(const std::string& path, std::span<const FrameBox> boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << kHeader << '\n';
  for (const auto& b : boxes) {
    out << b.box_id << ',' << b.frame << ',' << text::format_double(b.x) << ','
        << text::format_double(b.y) << ',' << text::format_double(b.w) << ','
        << text::format_double(b.h) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

}  // namespace finprint
