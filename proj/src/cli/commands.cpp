#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "finprint/cli/cli.hpp"
#include "finprint/core/boxes_csv.hpp"
#include "finprint/core/error.hpp"
#include "finprint/core/manifest.hpp"
#include "finprint/core/rng.hpp"
#include "finprint/core/tensor_io.hpp"
#include "finprint/core/text.hpp"
#include "finprint/eval/eval.hpp"
#include "finprint/model/checkpoint.hpp"
#include "finprint/synth/synth.hpp"
#include "finprint/tracklet/tracklet.hpp"
#include "finprint/triplets/triplets.hpp"

namespace finprint::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError(p.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError(p.string(), "cannot open for writing");
    o << content;
    if (!o.flush()) throw IoError(p.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError(p.string(), "cannot rename into place: " + ec.message());
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

std::string or_default(const std::string& v, const fs::path& fallback) {
  return v.empty() ? fallback.string() : v;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_now(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

std::vector<std::pair<SampleId, IdentityId>> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string line;
  std::size_t n = 0;
  std::vector<std::pair<SampleId, IdentityId>> out;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (text::trim(line) != "sample_id,identity") {
        throw ParseError(path, n, "expected header 'sample_id,identity'");
      }
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    std::int64_t s = 0, id = 0;
    if (f.size() != 2 || !text::parse_int(text::trim(f[0]), s) ||
        !text::parse_int(text::trim(f[1]), id)) {
      throw ParseError(path, n, "expected two integer fields");
    }
    out.emplace_back(s, id);
  }
  if (n == 0) throw ParseError(path, 1, "empty file, expected a header");
  return out;
}

model::OptimizerState make_optimizer(const TrainArgs& a) {
  switch (model::parse_optimizer(a.optimizer)) {
    case model::OptimizerKind::Sgd:
      return model::make_sgd(a.lr, a.momentum);
    case model::OptimizerKind::Adam:
      return model::make_adam(a.lr);
  }
  throw ConfigError("unknown optimizer");
}

nlohmann::ordered_json synth_config(const SynthArgs& a) {
  return {{"ids", a.ids},           {"imgs_per_id", a.imgs_per_id},
          {"size", a.size},         {"channels", a.channels},
          {"copies", a.copies},     {"spots", a.spots},
          {"split", a.split},       {"split_by_identity", a.split_by_identity},
          {"out", a.out}};
}

nlohmann::ordered_json train_config(const TrainArgs& a) {
  return {{"manifest", a.manifest},   {"epochs", a.epochs},
          {"alpha", a.alpha},         {"p", a.p},
          {"k", a.k},                 {"optimizer", a.optimizer},
          {"lr", a.lr},               {"momentum", a.momentum},
          {"mining_metric", a.mining_metric}, {"filters", a.filters},
          {"embed_dim", a.embed_dim}, {"ckpt_every", a.ckpt_every},
          {"ckpt_out", a.ckpt_out},   {"log", a.log}};
}

}  // namespace

RunRecord::RunRecord(std::string command, const Globals& g)
    : command_(std::move(command)),
      globals_(g),
      started_(std::chrono::system_clock::now()) {}

void RunRecord::input(const std::string& path) {
  inputs_[path] = hash_artifact(path);
}

void RunRecord::output(const std::string& path) {
  outputs_[path] = hash_artifact(path);
}

void RunRecord::write() const {
  const fs::path path = fs::path(globals_.out_dir) / "run.json";
  ordered_json all = ordered_json::object();
  if (fs::exists(path)) {
    try {
      all = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception&) {
      all = ordered_json::object();
    }
    if (!all.is_object()) all = ordered_json::object();
  }
  const auto finished = std::chrono::system_clock::now();
  ordered_json rec;
  rec["finprint_version"] = kVersion;
  rec["started_utc"] = utc_now(started_);
  rec["finished_utc"] = utc_now(finished);
  rec["elapsed_seconds"] =
      std::chrono::duration<double>(finished - started_).count();
  rec["seed"] = globals_.seed;
  rec["threads"] = globals_.threads;
  rec["out_dir"] = globals_.out_dir;
  rec["config_file"] = globals_.config.empty() ? ordered_json() : ordered_json(globals_.config);
  rec["config"] = config_;
  rec["inputs"] = inputs_;
  rec["outputs"] = outputs_;
  all[command_] = rec;
  write_file(path, all.dump(2) + "\n");
}

std::string hash_artifact(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), p));
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("");
    for (const auto& f : files) {
      h = fnv1a64(f.generic_string(), h);
      h = fnv1a64(std::string_view("\0", 1), h);
      h = fnv1a64(read_file(p / f), h);
    }
    return hex64(h);
  }
  return hex64(fnv1a64(read_file(p)));
}

std::string labels_sidecar(const std::string& embeddings_path) {
  fs::path p(embeddings_path);
  return (p.parent_path() / (p.stem().string() + ".labels.csv")).string();
}

void cmd_synth(const Globals& g, SynthArgs a, std::ostream& out) {
  RunRecord rec("synth", g);
  ensure_dir(g.out_dir);
  a.out = or_default(a.out, fs::path(g.out_dir) / "dataset");
  rec.config() = synth_config(a);
  synth::AugmentParams ap;
  ap.copies_per_image = a.copies;
  synth::DatasetOptions opts;
  opts.shape = {a.size, a.size, a.channels};
  opts.spots_per_identity = a.spots;
  opts.split_by_identity = a.split_by_identity;
  const auto d = synth::build_dataset(a.ids, a.imgs_per_id, ap, a.split,
                                      Rng(g.seed).substream("synth"), opts);
  const auto manifest = synth::write_dataset(d, a.out);
  rec.output(a.out);
  rec.write();
  out << "synth: " << d.samples.size() << " samples ("
      << d.split(Split::Train).size() << " train, "
      << d.split(Split::Test).size() << " test) -> " << manifest << "\n";
}

void cmd_cluster(const Globals& g, ClusterArgs a, std::ostream& out) {
  RunRecord rec("cluster", g);
  ensure_dir(g.out_dir);
  a.out = or_default(a.out, fs::path(g.out_dir) / "clusters.csv");
  rec.config() = {{"boxes", a.boxes},     {"eps", a.eps},
                  {"min_pts", a.min_pts}, {"lambda", a.lambda},
                  {"max_distance", a.max_distance}, {"fix", a.fixes},
                  {"out", a.out}};
  std::vector<std::pair<int, int>> fixes;
  for (const auto& f : a.fixes) {
    const auto parts = text::split(f, ':');
    std::int64_t from = 0, to = 0;
    if (parts.size() != 2 || !text::parse_int(text::trim(parts[0]), from) ||
        !text::parse_int(text::trim(parts[1]), to)) {
      throw ConfigError("--fix expects CLUSTER:IDENTITY, got '" + f + "'");
    }
    fixes.emplace_back(static_cast<int>(from), static_cast<int>(to));
  }
  tracklet::TrackletParams p;
  p.eps = a.eps;
  p.min_pts = a.min_pts;
  p.temporal_weight = a.lambda;
  p.max_distance = a.max_distance;
  p.validate();
  const auto boxes = read_boxes_csv(a.boxes);
  rec.input(a.boxes);
  const auto result = tracklet::cluster_boxes(boxes, p);
  const auto labels = tracklet::apply_relabels(result.assignment, fixes);
  ensure_dir(fs::path(a.out).parent_path());
  tracklet::write_clusters_csv(a.out, labels);
  rec.output(a.out);
  rec.write();
  std::size_t noise = 0;
  for (const auto& l : labels.labels) noise += l.cluster == tracklet::kNoise;
  out << "cluster: " << boxes.size() << " boxes, " << labels.cluster_count()
      << " clusters, " << noise << " noise -> " << a.out << "\n";
}

void cmd_train(const Globals& g, TrainArgs a, std::ostream& out) {
  RunRecord rec("train", g);
  ensure_dir(g.out_dir);
  a.ckpt_out = or_default(a.ckpt_out, fs::path(g.out_dir) / "model.ckpt");
  a.log = or_default(a.log, fs::path(g.out_dir) / "train.jsonl");
  rec.config() = train_config(a);

  triplets::TrainOptions o;
  o.plan = {a.p, a.k};
  o.loss.alpha = a.alpha;
  o.metric = triplets::parse_mining_metric(a.mining_metric);
  o.epochs = a.epochs;
  o.checkpoint_path = a.ckpt_out;
  o.checkpoint_every = a.ckpt_every;
  auto optimizer = make_optimizer(a);
  if (!(a.lr > 0.0)) throw ConfigError("--lr must be > 0");

  auto all = load_samples(a.manifest);
  rec.input(a.manifest);
  std::vector<Sample> samples;
  for (auto& s : all) {
    if (s.split == Split::Train) samples.push_back(std::move(s));
  }
  all.clear();
  if (samples.empty()) throw ConfigError(a.manifest + ": no training samples");

  model::EncoderConfig cfg;
  cfg.input = {samples.front().pixels.height, samples.front().pixels.width,
               samples.front().pixels.channels};
  cfg.conv_blocks.clear();
  for (int f : a.filters) cfg.conv_blocks.push_back({f});
  cfg.embed_dim = a.embed_dim;
  cfg.validate();

  ensure_dir(fs::path(a.ckpt_out).parent_path());
  ensure_dir(fs::path(a.log).parent_path());
  std::ofstream log(a.log, std::ios::trunc);
  if (!log) throw IoError(a.log, "cannot open for writing");
  o.on_epoch = [&](const triplets::MiningReport& m) {
    ordered_json j;
    j["epoch"] = m.epoch;
    j["candidates"] = m.candidates;
    j["used"] = m.used;
    j["mean_loss"] = m.mean_loss;
    log << j.dump() << "\n";
    log.flush();
    out << "epoch " << m.epoch << "/" << a.epochs << "  used " << m.used << "/"
        << m.candidates << "  mean loss " << text::format_double(m.mean_loss)
        << "\n";
    out.flush();
  };
  const Rng rng = Rng(g.seed).substream("train");
  auto weights = model::init(cfg, rng.substream("init"));
  out << "train: " << samples.size() << " samples, "
      << weights.parameter_count() << " parameters\n";
  const auto result = triplets::train(samples, std::move(weights),
                                      std::move(optimizer), o, rng);
  log.close();
  rec.output(a.ckpt_out);
  rec.output(a.log);
  rec.write();
  out << "train: checkpoint -> " << a.ckpt_out << "\n";
}

void cmd_embed(const Globals& g, EmbedArgs a, std::ostream& out) {
  RunRecord rec("embed", g);
  ensure_dir(g.out_dir);
  a.out = or_default(a.out, fs::path(g.out_dir) / "embeddings.fnt");
  rec.config() = {{"ckpt", a.ckpt}, {"manifest", a.manifest},
                  {"split", a.split}, {"out", a.out}};
  std::optional<Split> only;
  if (a.split != "all") only = parse_split(a.split);
  const auto ck = model::load_checkpoint(a.ckpt);
  rec.input(a.ckpt);
  const auto all = load_samples(a.manifest);
  rec.input(a.manifest);
  std::vector<const Sample*> chosen;
  for (const auto& s : all) {
    if (!only || s.split == *only) chosen.push_back(&s);
  }
  if (chosen.empty()) throw ConfigError(a.manifest + ": no samples in split " + a.split);
  std::vector<const Image*> images;
  for (const auto* s : chosen) images.push_back(&s->pixels);
  const auto e = model::embed(ck.weights, images);

  ensure_dir(fs::path(a.out).parent_path());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(e.rows()),
                                 static_cast<std::uint32_t>(e.cols())};
  write_tensor(a.out, dims,
               std::span<const double>(e.data(), static_cast<std::size_t>(e.size())));
  std::string labels = "sample_id,identity\n";
  for (const auto* s : chosen) {
    labels += std::to_string(s->sample_id) + "," + std::to_string(s->identity) + "\n";
  }
  const auto sidecar = labels_sidecar(a.out);
  write_file(sidecar, labels);
  rec.output(a.out);
  rec.output(sidecar);
  rec.write();
  out << "embed: " << e.rows() << " x " << e.cols() << " -> " << a.out << "\n";
}

void cmd_eval(const Globals& g, EvalArgs a, std::ostream& out) {
  RunRecord rec("eval", g);
  ensure_dir(g.out_dir);
  a.out = or_default(a.out, fs::path(g.out_dir) / "report.json");
  a.labels = or_default(a.labels, labels_sidecar(a.embeddings));
  rec.config() = {{"embeddings", a.embeddings}, {"labels", a.labels},
                  {"fpr", a.fpr}, {"out", a.out}};
  const auto t = read_tensor(a.embeddings);
  rec.input(a.embeddings);
  if (t.dims.size() != 2) {
    throw FormatError(a.embeddings, "expected a rank-2 embedding tensor");
  }
  const auto rows = read_labels_csv(a.labels);
  rec.input(a.labels);
  if (rows.size() != t.dims[0]) {
    throw ContractError(a.labels + ": " + std::to_string(rows.size()) +
                        " labels for " + std::to_string(t.dims[0]) +
                        " embeddings");
  }
  const auto n = static_cast<Eigen::Index>(t.dims[0]);
  const auto d = static_cast<Eigen::Index>(t.dims[1]);
  model::Matrix e(n, d);
  std::copy(t.data.begin(), t.data.end(), e.data());
  std::vector<IdentityId> ids;
  for (const auto& r : rows) ids.push_back(r.second);

  const auto scores = eval::pair_distances(e, ids);
  const double area = eval::auc(scores);
  const auto op = eval::operating_point(scores, a.fpr);
  double pos = 0.0, neg = 0.0;
  for (double v : scores.positives) pos += v;
  for (double v : scores.negatives) neg += v;
  const double intra = pos / static_cast<double>(scores.positives.size());
  const double inter = neg / static_cast<double>(scores.negatives.size());
  const double ratio =
      intra > 0.0 ? inter / intra : std::numeric_limits<double>::infinity();

  ordered_json report;
  report["auc"] = area;
  report["tpr_at_fpr"] = op.tpr;
  report["intra_mean"] = intra;
  report["inter_mean"] = inter;
  report["ratio"] = json_number(ratio);
  report["n_pos"] = scores.positives.size();
  report["n_neg"] = scores.negatives.size();
  report["fpr_target"] = a.fpr;
  report["threshold"] = op.threshold;
  report["fpr_at_threshold"] = op.fpr;

  const fs::path dir = fs::path(a.out).parent_path();
  ensure_dir(dir);
  write_file(a.out, report.dump(2) + "\n");

  std::vector<double> thresholds;
  for (int i = 0; i <= 200; ++i) thresholds.push_back(i / 100.0);
  std::string roc = "threshold,tpr,fpr\n";
  for (const auto& p : eval::roc_sweep(scores, thresholds)) {
    roc += text::format_double(p.threshold) + "," + text::format_double(p.tpr) +
           "," + text::format_double(p.fpr) + "\n";
  }
  const auto roc_path = (dir / "roc.csv").string();
  write_file(roc_path, roc);

  const auto proj = eval::project_2d(e);
  std::string p2 = "sample_id,identity,x,y\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    p2 += std::to_string(r.first) + "," + std::to_string(r.second) + "," +
          text::format_double(proj(i, 0)) + "," + text::format_double(proj(i, 1)) + "\n";
  }
  const auto proj_path = (dir / "proj2d.csv").string();
  write_file(proj_path, p2);

  rec.output(a.out);
  rec.output(roc_path);
  rec.output(proj_path);
  rec.write();
  out << "eval: AUC " << text::format_double(area) << ", TPR@FPR="
      << text::format_double(a.fpr) << " " << text::format_double(op.tpr)
      << ", inter/intra " << report["ratio"].dump() << " -> " << a.out << "\n";
}

void cmd_report(const Globals& g, ReportArgs a, std::ostream& out) {
  RunRecord rec("report", g);
  a.run_dir = or_default(a.run_dir, fs::path(g.out_dir));
  a.out = or_default(a.out, fs::path(a.run_dir) / "plots");
  rec.config() = {{"run_dir", a.run_dir}, {"out", a.out}};
  const fs::path run(a.run_dir);
  const std::vector<std::string> needed{"train.jsonl", "report.json", "roc.csv"};
  std::vector<std::string> missing;
  for (const auto& f : needed) {
    if (!fs::is_regular_file(run / f)) missing.push_back((run / f).string());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw IoError(a.run_dir, "missing inputs: " + list);
  }
  for (const auto& f : needed) rec.input((run / f).string());

  const auto log_path = (run / "train.jsonl").string();
  std::istringstream log(read_file(log_path));
  std::string line;
  std::size_t n = 0;
  std::string loss_csv = "epoch,mean_loss\n";
  std::string trip_csv = "epoch,candidates,used\n";
  std::vector<ordered_json> epochs;
  while (std::getline(log, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
      loss_csv += std::to_string(j.at("epoch").get<int>()) + "," +
                  text::format_double(j.at("mean_loss").get<double>()) + "\n";
      trip_csv += std::to_string(j.at("epoch").get<int>()) + "," +
                  std::to_string(j.at("candidates").get<std::int64_t>()) + "," +
                  std::to_string(j.at("used").get<std::int64_t>()) + "\n";
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(log_path, n, e.what());
    }
    epochs.push_back(j);
  }
  ordered_json report;
  const auto report_path = (run / "report.json").string();
  try {
    report = ordered_json::parse(read_file(report_path));
    for (const char* k : {"auc", "tpr_at_fpr", "ratio"}) (void)report.at(k);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(report_path, e.what());
  }
  const auto roc = read_file(run / "roc.csv");
  if (roc.rfind("threshold,tpr,fpr\n", 0) != 0) {
    throw FormatError((run / "roc.csv").string(), "expected header 'threshold,tpr,fpr'");
  }

  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto loss_path = (dir / "loss_curve.csv").string();
  const auto trip_path = (dir / "triplets_per_epoch.csv").string();
  const auto roc_path = (dir / "roc.csv").string();
  write_file(loss_path, loss_csv);
  write_file(trip_path, trip_csv);
  if (fs::weakly_canonical(roc_path) != fs::weakly_canonical(run / "roc.csv")) {
    write_file(roc_path, roc);
  }

  std::ostringstream s;
  s << "epochs:              " << epochs.size() << "\n";
  if (!epochs.empty()) {
    s << "triplets used:       " << epochs.front().at("used").dump() << " (epoch 1) -> "
      << epochs.back().at("used").dump() << " (epoch "
      << epochs.back().at("epoch").dump() << ")\n";
    s << "final mean loss:     " << epochs.back().at("mean_loss").dump() << "\n";
  }
  s << "AUC:                 " << report.at("auc").dump() << "\n";
  s << "TPR at target FPR:   " << report.at("tpr_at_fpr").dump();
  if (report.contains("fpr_target")) s << " (FPR " << report.at("fpr_target").dump() << ")";
  s << "\n";
  s << "inter/intra ratio:   "
    << (report.at("ratio").is_string() ? report.at("ratio").get<std::string>()
                                       : report.at("ratio").dump())
    << "\n";
  const auto summary_path = (dir / "summary.txt").string();
  write_file(summary_path, s.str());
  for (const auto& p : {loss_path, trip_path, roc_path, summary_path}) rec.output(p);
  ensure_dir(g.out_dir);
  rec.write();
  out << s.str();
}

void cmd_pipeline(const Globals& g, SynthArgs s, TrainArgs t, double fpr,
                  std::ostream& out) {
  RunRecord rec("pipeline", g);
  ensure_dir(g.out_dir);
  const fs::path root(g.out_dir);
  s.out = (root / "dataset").string();
  cmd_synth(g, s, out);
  t.manifest = (root / "dataset" / "manifest.jsonl").string();
  t.ckpt_out = (root / "model.ckpt").string();
  t.log = (root / "train.jsonl").string();
  cmd_train(g, t, out);
  EmbedArgs e{t.ckpt_out, t.manifest, "test", (root / "embeddings.fnt").string()};
  cmd_embed(g, e, out);
  EvalArgs v{e.out, "", fpr, (root / "report.json").string()};
  cmd_eval(g, v, out);
  cmd_report(g, ReportArgs{g.out_dir, (root / "plots").string()}, out);
  rec.config() = {{"synth", synth_config(s)}, {"train", train_config(t)}, {"fpr", fpr}};
  for (const char* f : {"dataset", "model.ckpt", "train.jsonl", "embeddings.fnt",
                        "report.json", "roc.csv", "proj2d.csv", "plots"}) {
    rec.output((root / f).string());
  }
  rec.write();
}

}  // namespace finprint::cli
