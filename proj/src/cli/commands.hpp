#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace finprint::cli {

struct Globals {
  std::uint64_t seed = 7;
  unsigned threads = 0;
  std::string out_dir = ".";
  std::string config;
};

struct SynthArgs {
  int ids = 40;
  int imgs_per_id = 30;
  int size = 64;
  int channels = 1;
  int copies = 5;
  int spots = 12;
  double split = 0.9;
  bool split_by_identity = false;
  std::string out;  // default: <out-dir>/dataset
};

struct ClusterArgs {
  std::string boxes;
  double eps = 0.4;
  int min_pts = 3;
  double lambda = 1.0 / 30.0;
  double max_distance = 1e9;
  std::vector<std::string> fixes;  // "cluster:identity"
  std::string out;                 // default: <out-dir>/clusters.csv
};

struct TrainArgs {
  std::string manifest;
  int epochs = 100;
  double alpha = 0.2;
  int p = 16;
  int k = 8;
  std::string optimizer = "adam";
  double lr = 1e-3;
  double momentum = 0.0;
  std::string mining_metric = "l2";
  std::vector<int> filters = {8, 16, 32};
  int embed_dim = 128;
  int ckpt_every = 0;
  std::string ckpt_out;  // default: <out-dir>/model.ckpt
  std::string log;       // default: <out-dir>/train.jsonl
};

struct EmbedArgs {
  std::string ckpt;
  std::string manifest;
  std::string split = "all";
  std::string out;  // default: <out-dir>/embeddings.fnt
};

struct EvalArgs {
  std::string embeddings;
  std::string labels;  // default: sidecar of --embeddings
  double fpr = 0.01;
  std::string out;  // default: <out-dir>/report.json
};

struct ReportArgs {
  std::string run_dir;  // default: <out-dir>
  std::string out;      // default: <run-dir>/plots
};

/// Collects the resolved configuration and artifact hashes of one command
/// and merges them into <out-dir>/run.json under the command name.
class RunRecord {
 public:
  RunRecord(std::string command, const Globals& g);

  nlohmann::ordered_json& config() { return config_; }
  void input(const std::string& path);
  void output(const std::string& path);
  void write() const;

 private:
  std::string command_;
  Globals globals_;
  std::chrono::system_clock::time_point started_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::object();
};

/// FNV-1a of a file's bytes, or of every regular file under a directory
/// (relative path and contents, in sorted path order), as 16 hex digits.
std::string hash_artifact(const std::filesystem::path& p);

/// `<stem>.labels.csv` next to an embeddings file.
std::string labels_sidecar(const std::string& embeddings_path);

void cmd_synth(const Globals& g, SynthArgs a, std::ostream& out);
void cmd_cluster(const Globals& g, ClusterArgs a, std::ostream& out);
void cmd_train(const Globals& g, TrainArgs a, std::ostream& out);
void cmd_embed(const Globals& g, EmbedArgs a, std::ostream& out);
void cmd_eval(const Globals& g, EvalArgs a, std::ostream& out);
void cmd_report(const Globals& g, ReportArgs a, std::ostream& out);

/// synth -> train -> embed (test split) -> eval -> report, all under the
/// output directory.
void cmd_pipeline(const Globals& g, SynthArgs s, TrainArgs t, double fpr,
                  std::ostream& out);

}  // namespace finprint::cli
