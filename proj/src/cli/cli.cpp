#include "finprint/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "finprint/core/error.hpp"
#include "finprint/core/parallel.hpp"

namespace finprint::cli {

namespace {

using nlohmann::json;

void add_synth_options(CLI::App* c, SynthArgs& a, bool with_out) {
  c->add_option("--ids", a.ids, "Number of identities")->capture_default_str();
  c->add_option("--imgs-per-id", a.imgs_per_id, "Original images per identity")
      ->capture_default_str();
  c->add_option("--size", a.size, "Image height and width in pixels")
      ->capture_default_str();
  c->add_option("--channels", a.channels, "1 (grey) or 3 (RGB)")->capture_default_str();
  c->add_option("--copies", a.copies, "Augmented copies per original")
      ->capture_default_str();
  c->add_option("--spots", a.spots, "Spots per identity")->capture_default_str();
  c->add_option("--split", a.split, "Fraction of originals used for training")
      ->capture_default_str();
  c->add_flag("--split-by-identity", a.split_by_identity,
              "Put whole identities in one split");
  if (with_out) c->add_option("--out", a.out, "Dataset directory [<out-dir>/dataset]");
}

void add_train_options(CLI::App* c, TrainArgs& a, bool with_io) {
  if (with_io) {
    c->add_option("--manifest", a.manifest, "Dataset manifest.jsonl")->required();
  }
  c->add_option("--epochs", a.epochs)->capture_default_str();
  c->add_option("--alpha", a.alpha, "Triplet margin")->capture_default_str();
  c->add_option("--p", a.p, "Identities per batch")->capture_default_str();
  c->add_option("--k", a.k, "Images per identity in a batch")->capture_default_str();
  c->add_option("--optimizer", a.optimizer, "adam or sgd")->capture_default_str();
  c->add_option("--lr", a.lr, "Learning rate")->capture_default_str();
  c->add_option("--momentum", a.momentum, "SGD momentum")->capture_default_str();
  c->add_option("--mining-metric", a.mining_metric,
                "Distance for the violation test: l2 or sq-l2")
      ->capture_default_str();
  c->add_option("--filters", a.filters, "Filters per conv block")
      ->delimiter(',')
      ->capture_default_str();
  c->add_option("--embed-dim", a.embed_dim)->capture_default_str();
  c->add_option("--ckpt-every", a.ckpt_every, "Also checkpoint every N epochs")
      ->capture_default_str();
  if (with_io) {
    c->add_option("--ckpt-out", a.ckpt_out, "Checkpoint path [<out-dir>/model.ckpt]");
    c->add_option("--log", a.log, "Per-epoch JSONL [<out-dir>/train.jsonl]");
  }
}

// Turns config-file entries into command-line tokens. Top-level scalars and
// arrays apply to the selected command; an object under the command's name
// holds command-specific keys. Objects for other commands are ignored.
std::vector<std::string> config_tokens(const std::string& path,
                                       const CLI::App& app,
                                       const CLI::App& command) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");

  std::vector<std::string> out;
  auto emit = [&](const std::string& key, const json& v) {
    if (key == "config") throw ConfigError(path + ": config files cannot nest");
    const std::string flag = "--" + key;
    const CLI::Option* opt = command.get_option_no_throw(flag);
    if (!opt) opt = app.get_option_no_throw(flag);
    if (!opt) {
      throw ConfigError(path + ": unknown key '" + key + "' for command " +
                        command.get_name());
    }
    auto scalar = [&](const json& x) -> std::string {
      if (x.is_string()) return x.get<std::string>();
      if (x.is_boolean()) return x.get<bool>() ? "true" : "false";
      if (x.is_number()) return x.dump();
      throw ConfigError(path + ": key '" + key + "' has an unsupported value");
    };
    if (opt->get_expected_max() == 0) {
      if (!v.is_boolean()) throw ConfigError(path + ": key '" + key + "' must be boolean");
      out.push_back(flag + "=" + scalar(v));
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& x : v) joined += (joined.empty() ? "" : ",") + scalar(x);
      out.push_back(flag);
      out.push_back(joined);
    } else {
      out.push_back(flag);
      out.push_back(scalar(v));
    }
  };
  for (const auto& [key, v] : j.items()) {
    if (v.is_object()) continue;
    emit(key, v);
  }
  if (j.contains(command.get_name()) && j[command.get_name()].is_object()) {
    for (const auto& [key, v] : j[command.get_name()].items()) emit(key, v);
  }
  return out;
}

std::string find_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  return path;
}

std::string one_line_error(const std::string& kind, const std::string& message) {
  return json{{"error", kind}, {"message", message}}.dump();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"finprint: re-identification from spot patterns via triplet-loss embeddings",
               "finprint"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Global random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and run.json")
      ->capture_default_str();
  app.add_option("--config", g.config,
                 "JSON file whose keys mirror flags; flags on the command line win");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a synthetic identity dataset");
  add_synth_options(c_synth, synth, true);

  ClusterArgs cluster;
  auto* c_cluster = app.add_subcommand("cluster", "Group detections into tracklets");
  c_cluster->add_option("--boxes", cluster.boxes, "CSV box_id,frame,x,y,w,h")->required();
  c_cluster->add_option("--eps", cluster.eps)->capture_default_str();
  c_cluster->add_option("--min-pts", cluster.min_pts)->capture_default_str();
  c_cluster->add_option("--lambda", cluster.lambda, "Temporal weight per frame")
      ->capture_default_str();
  c_cluster->add_option("--max-distance", cluster.max_distance,
                        "Distance between same-frame boxes")
      ->capture_default_str();
  c_cluster->add_option("--fix", cluster.fixes, "Relabel CLUSTER:IDENTITY (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  c_cluster->add_option("--out", cluster.out, "Output CSV [<out-dir>/clusters.csv]");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the encoder with mined triplets");
  add_train_options(c_train, train, true);

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "Embed the samples of a manifest");
  c_embed->add_option("--ckpt", embed.ckpt, "Checkpoint")->required();
  c_embed->add_option("--manifest", embed.manifest, "Dataset manifest.jsonl")->required();
  c_embed->add_option("--split", embed.split, "all, train or test")->capture_default_str();
  c_embed->add_option("--out", embed.out, "Embeddings FNT1 [<out-dir>/embeddings.fnt]");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Verification metrics for embeddings");
  c_eval->add_option("--embeddings", ev.embeddings, "N x D FNT1 tensor")->required();
  c_eval->add_option("--labels", ev.labels, "CSV sample_id,identity [sidecar]");
  c_eval->add_option("--fpr", ev.fpr, "Operating false positive rate")
      ->capture_default_str();
  c_eval->add_option("--out", ev.out, "Report JSON [<out-dir>/report.json]");

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Plot-ready CSVs and a summary of a run");
  c_report->add_option("--run-dir", report.run_dir, "Run directory [<out-dir>]");
  c_report->add_option("--out", report.out, "Output directory [<run-dir>/plots]");

  SynthArgs p_synth;
  TrainArgs p_train;
  double p_fpr = 0.01;
  auto* c_pipe = app.add_subcommand(
      "pipeline", "synth, train, embed the test split, eval and report in one go");
  add_synth_options(c_pipe, p_synth, false);
  add_train_options(c_pipe, p_train, false);
  c_pipe->add_option("--fpr", p_fpr)->capture_default_str();

  std::vector<std::string> argv = args;
  try {
    // Config tokens go right after the command name so that later
    // command-line occurrences of the same flag take precedence.
    const std::string config = find_config(argv);
    if (!config.empty()) {
      const auto it = std::find_if(argv.begin(), argv.end(), [&](const std::string& a) {
        return app.get_subcommand_no_throw(a) != nullptr;
      });
      if (it != argv.end()) {
        const auto tokens = config_tokens(config, app, *app.get_subcommand(*it));
        argv.insert(it + 1, tokens.begin(), tokens.end());
      }
    }
  } catch (const Error& e) {
    err << one_line_error(e.kind(), e.what()) << "\n";
    return 1;
  }

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* shown = &app;
    for (const auto* sub : app.get_subcommands()) shown = sub;
    err << shown->help();
    return 2;
  }

  try {
    set_max_threads(g.threads);
    if (c_synth->parsed()) cmd_synth(g, synth, out);
    else if (c_cluster->parsed()) cmd_cluster(g, cluster, out);
    else if (c_train->parsed()) cmd_train(g, train, out);
    else if (c_embed->parsed()) cmd_embed(g, embed, out);
    else if (c_eval->parsed()) cmd_eval(g, ev, out);
    else if (c_report->parsed()) cmd_report(g, report, out);
    else if (c_pipe->parsed()) cmd_pipeline(g, p_synth, p_train, p_fpr, out);
  } catch (const Error& e) {
    err << one_line_error(e.kind(), e.what()) << "\n";
    return 1;
  } catch (const std::bad_alloc&) {
    err << one_line_error("resource", "out of memory") << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << one_line_error("internal", e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace finprint::cli
