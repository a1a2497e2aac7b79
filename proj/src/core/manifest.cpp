#include "finprint/core/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "finprint/core/error.hpp"
#include "finprint/core/tensor_io.hpp"
#include "finprint/core/text.hpp"

namespace finprint {

using nlohmann::json;

void write_manifest(const std::string& path,
                    std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["sample_id"] = e.sample_id;
    j["identity"] = e.identity;
    j["path"] = e.path;
    j["split"] = std::string(to_string(e.split));
    j["augmented_from"] =
        e.augmented_from ? nlohmann::ordered_json(*e.augmented_from) : nullptr;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open manifest");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.sample_id = j.at("sample_id").get<SampleId>();
      e.identity = j.at("identity").get<IdentityId>();
      e.path = j.at("path").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      const auto& af = j.at("augmented_from");
      if (!af.is_null()) e.augmented_from = af.get<SampleId>();
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError(path, line_no, ex.what());
    } catch (const ContractError& ex) {
      throw ParseError(path, line_no, ex.what());
    }
  }
  return entries;
}

std::vector<Sample> load_samples(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<Sample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) {
    const auto file = (base / e.path).string();
    Tensor t = read_tensor(file);
    if (t.dims.size() != 3) {
      throw FormatError(file, "expected an (H, W, C) tensor");
    }
    Sample s;
    s.sample_id = e.sample_id;
    s.identity = e.identity;
    s.split = e.split;
    s.augmented_from = e.augmented_from;
    s.pixels.height = static_cast<int>(t.dims[0]);
    s.pixels.width = static_cast<int>(t.dims[1]);
    s.pixels.channels = static_cast<int>(t.dims[2]);
    s.pixels.pixels = std::move(t.data);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace finprint
