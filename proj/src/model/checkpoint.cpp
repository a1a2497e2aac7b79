#include "finprint/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "finprint/core/error.hpp"

namespace finprint::model {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'N', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

json config_to_json(const EncoderConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.conv_blocks) {
    blocks.push_back({{"filters", b.filters},
                      {"kernel", b.kernel},
                      {"stride", b.stride},
                      {"pool", b.pool}});
  }
  return {{"input", {c.input.height, c.input.width, c.input.channels}},
          {"conv_blocks", blocks},
          {"embed_dim", c.embed_dim}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  const auto& in = j.at("input");
  c.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  c.conv_blocks.clear();
  for (const auto& b : j.at("conv_blocks")) {
    c.conv_blocks.push_back({b.at("filters").get<int>(), b.at("kernel").get<int>(),
                             b.at("stride").get<int>(), b.at("pool").get<int>()});
  }
  c.embed_dim = j.at("embed_dim").get<int>();
  return c;
}

void save_checkpoint(const std::string& path, const Weights& w,
                     const OptimizerState& opt) {
  json header = {
      {"config", config_to_json(w.config)},
      {"weights_version", w.version},
      {"init_seed", w.init_seed},
      {"optimizer",
       {{"kind", std::string(to_string(opt.kind))},
        {"learning_rate", opt.learning_rate},
        {"momentum", opt.momentum},
        {"beta1", opt.beta1},
        {"beta2", opt.beta2},
        {"epsilon", opt.epsilon},
        {"t", opt.t}}},
      {"n_params", w.params.size()},
      {"n_m", opt.m.size()},
      {"n_v", opt.v.size()}};
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp, "cannot open for writing");
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointFormatVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* group : {&w.params, &opt.m, &opt.v}) {
      for (const auto& t : *group) write_tensor(out, t.dims, t.data);
    }
    out.flush();
    if (!out) throw IoError(tmp, "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError(path, "corrupt checkpoint: bad magic");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!get(in, version) || !get(in, header_len)) {
    throw FormatError(path, "corrupt checkpoint: truncated header");
  }
  if (version != kCheckpointFormatVersion) {
    throw FormatError(path, "checkpoint format version " +
                                std::to_string(version) + " is not supported");
  }
  if (header_len > (1u << 24)) {
    throw FormatError(path, "corrupt checkpoint: header too large");
  }
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw FormatError(path, "corrupt checkpoint: truncated header");
  }

  Checkpoint ck;
  std::size_t n_params = 0, n_m = 0, n_v = 0;
  try {
    const json h = json::parse(text);
    ck.weights.version = h.at("weights_version").get<std::string>();
    if (ck.weights.version != kWeightsVersion) {
      throw FormatError(path, "weights version '" + ck.weights.version +
                                  "' does not match '" + kWeightsVersion + "'");
    }
    ck.weights.config = config_from_json(h.at("config"));
    ck.weights.init_seed = h.at("init_seed").get<std::uint64_t>();
    const auto& o = h.at("optimizer");
    ck.optimizer.kind = parse_optimizer(o.at("kind").get<std::string>());
    ck.optimizer.learning_rate = o.at("learning_rate").get<double>();
    ck.optimizer.momentum = o.at("momentum").get<double>();
    ck.optimizer.beta1 = o.at("beta1").get<double>();
    ck.optimizer.beta2 = o.at("beta2").get<double>();
    ck.optimizer.epsilon = o.at("epsilon").get<double>();
    ck.optimizer.t = o.at("t").get<std::uint64_t>();
    n_params = h.at("n_params").get<std::size_t>();
    n_m = h.at("n_m").get<std::size_t>();
    n_v = h.at("n_v").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(path, std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path, std::string("corrupt checkpoint header: ") + e.what());
  }

  const auto read_group = [&](std::size_t n, std::vector<Tensor>& dst) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(read_tensor(in, path));
  };
  read_group(n_params, ck.weights.params);
  read_group(n_m, ck.optimizer.m);
  read_group(n_v, ck.optimizer.v);

  // Shapes must agree with what init() would produce for this config.
  const Weights shape_ref = [&] {
    try {
      return init(ck.weights.config, Rng(0));
    } catch (const ConfigError& e) {
      throw FormatError(path, std::string("invalid encoder config: ") + e.what());
    }
  }();
  const auto same_shapes = [&](const std::vector<Tensor>& ts) {
    if (ts.size() != shape_ref.params.size()) return false;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (ts[i].dims != shape_ref.params[i].dims) return false;
    }
    return true;
  };
  if (!same_shapes(ck.weights.params) ||
      (n_m != 0 && !same_shapes(ck.optimizer.m)) ||
      (n_v != 0 && !same_shapes(ck.optimizer.v))) {
    throw FormatError(path, "corrupt checkpoint: tensor shapes do not match config");
  }
  return ck;
}

}  // namespace finprint::model
