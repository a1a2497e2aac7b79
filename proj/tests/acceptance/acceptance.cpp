// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   acceptance [--only 1,2,...] [--work-dir DIR] [--epochs N] [--threads N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "../oracles/dbscan_oracle.hpp"
#include "../oracles/finite_diff.hpp"
#include "../oracles/miner_oracle.hpp"
#include "finprint/cli/cli.hpp"
#include "finprint/core/rng.hpp"
#include "finprint/eval/eval.hpp"
#include "finprint/model/encoder.hpp"
#include "finprint/tracklet/tracklet.hpp"
#include "finprint/triplets/triplets.hpp"

using namespace finprint;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Vec = std::vector<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Vec random_unit(std::size_t d, Rng& rng) {
  Vec v(d);
  double s = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

// ---------------------------------------------------------------- 1

Outcome oracle_suite() {
  const auto t0 = Clock::now();
  const triplets::TripletLossParams p{0.2};
  int bad_examples = 0;
  auto expect = [&](const Vec& a, const Vec& q, const Vec& n, double want) {
    if (std::abs(triplets::triplet_loss(a, q, n, p) - want) > 1e-9) ++bad_examples;
  };
  expect({0.3, 0.4}, {0.3, 0.4}, {0.3, 0.4}, 0.2);
  expect({0, 0}, {0, 0}, {1, 0}, 0.0);
  expect({1, 0}, {0, 1}, {-1, 0}, 0.0);
  expect({1, 0}, {0, 1}, {0, -1}, 0.2);

  // Loss gradient against central differences away from the hinge kink.
  double worst_loss = 0.0;
  Rng rng(1, "accept-loss-grad");
  for (int trial = 0; trial < 300; ++trial) {
    Vec a = random_unit(16, rng), q = random_unit(16, rng), n = random_unit(16, rng);
    const double h = triplets::triplet_loss(a, q, n, p);
    if (h < 1e-3) continue;
    const auto g = triplets::triplet_loss_grad(a, q, n, p);
    auto f = [&] { return triplets::triplet_loss(a, q, n, p); };
    const auto na = oracle::central_difference(a, f);
    const auto nq = oracle::central_difference(q, f);
    const auto nn = oracle::central_difference(n, f);
    for (std::size_t k = 0; k < a.size(); ++k) {
      worst_loss = std::max({worst_loss, oracle::relative_error(g.anchor[k], na[k]),
                             oracle::relative_error(g.positive[k], nq[k]),
                             oracle::relative_error(g.negative[k], nn[k])});
    }
  }

  // Triplet loss through a tiny encoder, every parameter.
  model::EncoderConfig cfg;
  cfg.input = {10, 10, 2};
  cfg.conv_blocks = {{3, 3, 1, 2}, {4, 3, 1, 1}};
  cfg.embed_dim = 6;
  auto w = model::init(cfg, Rng(2, "accept-init"));
  Rng br(2, "accept-bias");
  for (std::size_t t = 1; t < w.params.size(); t += 2)
    for (auto& v : w.params[t].data) v = 0.1 * br.normal();
  std::vector<Image> imgs;
  Rng ir(2, "accept-images");
  for (int i = 0; i < 3; ++i) {
    Image img(10, 10, 2);
    for (auto& v : img.pixels) v = ir.uniform();
    imgs.push_back(img);
  }
  const std::vector<const Image*> batch{&imgs[0], &imgs[1], &imgs[2]};
  const triplets::TripletLossParams wide{4.5};  // hinge always active
  auto rows = [](const model::Matrix& e, int r) {
    return Vec(e.row(r).begin(), e.row(r).end());
  };
  auto loss = [&] {
    const auto e = model::forward(w, batch, false).embeddings;
    return triplets::triplet_loss(rows(e, 0), rows(e, 1), rows(e, 2), wide);
  };
  const auto fwd = model::forward(w, batch);
  const auto g = triplets::triplet_loss_grad(rows(fwd.embeddings, 0),
                                             rows(fwd.embeddings, 1),
                                             rows(fwd.embeddings, 2), wide);
  model::Matrix ge(3, cfg.embed_dim);
  for (int k = 0; k < cfg.embed_dim; ++k) {
    ge(0, k) = g.anchor[k];
    ge(1, k) = g.positive[k];
    ge(2, k) = g.negative[k];
  }
  const auto grads = model::backward(w, fwd.cache, ge);
  double worst_enc = 0.0;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < w.params.size(); ++t) {
    const auto num = oracle::central_difference(w.params[t].data, loss);
    for (std::size_t k = 0; k < num.size(); ++k, ++checked)
      worst_enc = std::max(worst_enc, oracle::relative_error(grads[t].data[k], num[k]));
  }
  const double secs = seconds_since(t0);
  const bool pass = bad_examples == 0 && worst_loss < 1e-5 && worst_enc < 1e-5 &&
                    secs < 30.0;
  return {pass, "loss examples off by >1e-9: " + std::to_string(bad_examples) +
                    "; loss-grad max rel err " + fmt(worst_loss, 3) +
                    "; encoder grad max rel err " + fmt(worst_enc, 3) + " over " +
                    std::to_string(checked) + " params; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome miner_vs_oracle() {
  Rng rng(2, "accept-miner");
  int mismatched = 0, bad_triplets = 0, batches = 0;
  std::size_t emitted = 0;
  const double alpha = 0.2;
  while (batches < 200) {
    const auto ids = 2 + rng.uniform_index(4);  // 2..5
    const std::size_t dim = 4;
    std::vector<Vec> pts;
    std::vector<IdentityId> labels;
    for (std::uint64_t id = 0; id < ids; ++id) {
      const auto k = 1 + rng.uniform_index(6);  // 1..6
      const Vec c = random_unit(dim, rng);
      const double spread = rng.uniform(0.05, 0.8);
      for (std::uint64_t j = 0; j < k; ++j) {
        Vec v = random_unit(dim, rng);
        for (std::size_t t = 0; t < dim; ++t) v[t] = c[t] + spread * v[t];
        double s = 0.0;
        for (double x : v) s += x * x;
        for (double& x : v) x /= std::sqrt(s);
        pts.push_back(v);
        labels.push_back(static_cast<IdentityId>(id));
      }
    }
    ++batches;
    model::Matrix m(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t t = 0; t < dim; ++t)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = pts[i][t];
    const auto got = triplets::select_triplets(m, labels, alpha,
                                               triplets::MiningMetric::L2,
                                               rng.substream(batches));
    const auto truth = oracle::brute_force_violators(pts, labels, alpha, false);
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& t : got.triplets) {
      auto d = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
        return std::sqrt(s);
      };
      const auto a = static_cast<std::size_t>(t.anchor),
                 p = static_cast<std::size_t>(t.positive),
                 n = static_cast<std::size_t>(t.negative);
      const bool ok = labels[a] == labels[p] && a != p && labels[n] != labels[a] &&
                      d(a, n) - d(a, p) < alpha;
      bad_triplets += !ok;
      pairs.insert({a, p});
    }
    emitted += got.triplets.size();
    if (pairs != truth.pairs || pairs.size() != got.triplets.size()) ++mismatched;
  }
  return {mismatched == 0 && bad_triplets == 0,
          std::to_string(batches) + " batches, " + std::to_string(emitted) +
              " triplets; non-violating triplets " + std::to_string(bad_triplets) +
              "; pair-set mismatches " + std::to_string(mismatched)};
}

// ---------------------------------------------------------------- 3

// Reference box distance written out independently of the library.
double reference_box_distance(const FrameBox& a, const FrameBox& b, double lambda,
                              double max_distance) {
  if (a.frame == b.frame) return max_distance;
  const double x0 = std::max(a.x, b.x), x1 = std::min(a.x + a.w, b.x + b.w);
  const double y0 = std::max(a.y, b.y), y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  const double iou = inter / (a.w * a.h + b.w * b.h - inter);
  const double gap = std::abs(static_cast<double>(a.frame - b.frame));
  return (1.0 - iou + std::min(1.0, lambda * gap)) / 2.0;
}

// A few fish crossing a tank: each track drifts with jitter and occasional
// missed detections, one box per track per frame.
std::vector<FrameBox> random_scene(Rng& rng) {
  std::vector<FrameBox> boxes;
  const auto tracks = 1 + rng.uniform_index(4);
  const auto frames = 3 + rng.uniform_index(8);
  std::int64_t id = 100;
  for (std::uint64_t t = 0; t < tracks; ++t) {
    double x = rng.uniform(0, 500), y = rng.uniform(0, 300);
    const double w = rng.uniform(60, 140), h = w * rng.uniform(0.4, 0.7);
    const double vx = rng.uniform(-15, 15), vy = rng.uniform(-6, 6);
    for (std::uint64_t f = 0; f < frames && boxes.size() < 25; ++f) {
      x += vx + rng.uniform(-3, 3);
      y += vy + rng.uniform(-2, 2);
      if (rng.uniform() < 0.15) continue;
      boxes.push_back({id++, static_cast<std::int64_t>(f), x, y, w, h});
    }
  }
  // Random input order; ids stay unique.
  rng.shuffle(std::span<FrameBox>(boxes));
  return boxes;
}

Outcome dbscan_vs_oracle() {
  Rng rng(3, "accept-dbscan");
  int mismatched = 0, instances = 0, same_frame_shared = 0, same_frame_pairs = 0;
  const tracklet::TrackletParams params;  // eps 0.4, min_pts 3, lambda 1/30
  while (instances < 200) {
    const auto boxes = random_scene(rng);
    if (boxes.empty()) continue;
    ++instances;
    const auto got = tracklet::cluster_boxes(boxes, params);

    // Oracle works in ascending id order.
    std::vector<FrameBox> sorted = boxes;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.box_id < b.box_id; });
    const std::size_t n = sorted.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j)
          d[i][j] = reference_box_distance(sorted[i], sorted[j], params.temporal_weight,
                                           params.max_distance);
    const auto want = oracle::dbscan_reference(d, params.eps, params.min_pts);
    std::map<std::int64_t, int> label_of;
    for (const auto& l : got.assignment.labels) label_of[l.box_id] = l.cluster;
    std::vector<int> have;
    for (const auto& b : sorted) have.push_back(label_of.at(b.box_id));
    if (!oracle::same_partition(have, want)) ++mismatched;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (sorted[i].frame != sorted[j].frame) continue;
        ++same_frame_pairs;
        if (have[i] >= 0 && have[i] == have[j]) ++same_frame_shared;
      }
    }
  }
  return {mismatched == 0 && same_frame_shared == 0,
          std::to_string(instances) + " scenes; partition mismatches " +
              std::to_string(mismatched) + "; same-frame pairs sharing a cluster " +
              std::to_string(same_frame_shared) + "/" +
              std::to_string(same_frame_pairs)};
}

// ---------------------------------------------------------------- 4

Outcome metric_identities() {
  Rng rng(4, "accept-metrics");
  double worst = 0.0;
  int non_monotone = 0;
  for (int trial = 0; trial < 100; ++trial) {
    eval::PairScores s;
    const auto np = 1 + rng.uniform_index(300), nn = 1 + rng.uniform_index(1000);
    const double gap = rng.uniform(0, 1.2);
    const bool quantise = trial % 2 == 0;  // half the sets carry heavy ties
    auto draw = [&](double mean) {
      double v = std::clamp(mean + 0.35 * rng.normal(), 0.0, 2.0);
      return quantise ? std::round(v * 20.0) / 20.0 : v;
    };
    for (std::uint64_t i = 0; i < np; ++i) s.positives.push_back(draw(0.5));
    for (std::uint64_t i = 0; i < nn; ++i) s.negatives.push_back(draw(0.5 + gap));
    const auto roc = eval::roc_sweep(s, eval::distinct_thresholds(s));
    worst = std::max(worst, std::abs(eval::trapezoid_auc(roc) - eval::auc(s)));
    for (std::size_t i = 1; i < roc.size(); ++i) {
      if (roc[i].tpr < roc[i - 1].tpr || roc[i].fpr < roc[i - 1].fpr) ++non_monotone;
    }
  }
  return {worst <= 1e-9 && non_monotone == 0,
          "100 score sets; max |rank AUC - trapezoid AUC| " + fmt(worst, 3) +
              "; monotonicity violations " + std::to_string(non_monotone)};
}

// ---------------------------------------------------------------- 5-8

struct RunOutput {
  int code = -1;
  double seconds = 0.0;
  std::string err;
};

RunOutput run_pipeline(const fs::path& dir, int epochs, const std::string& threads) {
  fs::remove_all(dir);
  const std::vector<std::string> args = {
      "--seed", "7", "--threads", threads, "--out-dir", dir.string(), "pipeline",
      "--ids", "40", "--imgs-per-id", "30", "--copies", "5", "--split", "0.9",
      "--alpha", "0.2", "--epochs", std::to_string(epochs)};
  std::ofstream log(dir.string() + ".log");
  std::ostringstream err;
  const auto t0 = Clock::now();
  RunOutput r;
  r.code = cli::run(args, log, err);
  r.seconds = seconds_since(t0);
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "finprint_acceptance";
  int epochs = 100;
  std::string threads = "0";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << a << "\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--only") {
      std::stringstream ss(next());
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--work-dir") {
      work = next();
    } else if (a == "--epochs") {
      epochs = std::stoi(next());
    } else if (a == "--threads") {
      threads = next();
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--work-dir DIR] [--epochs N] "
                   "[--threads N]\n";
      return 2;
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  int failures = 0;
  auto report = [&](int c, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c << "  " << name
              << ": " << o.detail << std::endl;
    failures += !o.pass;
  };

  if (wanted(1)) report(1, "oracle suite", oracle_suite());
  if (wanted(2)) report(2, "miner vs brute force", miner_vs_oracle());
  if (wanted(3)) report(3, "DBSCAN vs density oracle", dbscan_vs_oracle());
  if (wanted(4)) report(4, "metric identities", metric_identities());

  const bool need_run = wanted(5) || wanted(6) || wanted(7) || wanted(8);
  if (need_run) {
    fs::create_directories(work);
    const auto first_dir = work / "run1";
    const auto first = run_pipeline(first_dir, epochs, threads);
    if (first.code != 0) {
      const Outcome o{false, "pipeline exited " + std::to_string(first.code) + ": " + first.err};
      for (int c = 5; c <= 8; ++c)
        if (wanted(c)) report(c, "training run", o);
      return 1;
    }
    const auto rep = nlohmann::json::parse(slurp(first_dir / "report.json"));
    const double auc = rep.at("auc").get<double>();
    const double tpr = rep.at("tpr_at_fpr").get<double>();

    if (wanted(5)) {
      const bool pass = tpr >= 0.90 && auc >= 0.99 && first.seconds <= 600.0 &&
                        epochs <= 200;
      report(5, "desk-scale reproduction",
             {pass, "TPR@FPR=0.01 " + fmt(tpr) + " (>= 0.90), AUC " + fmt(auc, 6) +
                        " (>= 0.99), " + std::to_string(epochs) + " epochs, " +
                        fmt(first.seconds, 4) + " s (<= 600)"});
    }
    if (wanted(6)) {
      std::vector<double> used;
      std::istringstream log(slurp(first_dir / "train.jsonl"));
      std::string line;
      while (std::getline(log, line)) {
        if (!line.empty()) used.push_back(nlohmann::json::parse(line).at("used").get<double>());
      }
      const std::size_t q = std::max<std::size_t>(1, used.size() / 4);
      double head = 0.0, tail = 0.0;
      for (std::size_t i = 0; i < q && i < used.size(); ++i) head += used[i];
      for (std::size_t i = used.size() - std::min(q, used.size()); i < used.size(); ++i)
        tail += used[i];
      head /= static_cast<double>(q);
      tail /= static_cast<double>(q);
      report(6, "triplet starvation",
             {used.size() >= 4 && tail < 0.5 * head,
              "mean used triplets first quartile " + fmt(head, 6) + ", last quartile " +
                  fmt(tail, 6) + " (ratio " + fmt(head > 0 ? tail / head : 0.0, 3) +
                  ", needs < 0.5)"});
    }
    if (wanted(7)) {
      const auto& r = rep.at("ratio");
      const double ratio = r.is_string() ? INFINITY : r.get<double>();
      report(7, "separation report",
             {ratio >= 3.0, "inter/intra " + fmt(ratio) + " (intra " +
                                fmt(rep.at("intra_mean").get<double>()) + ", inter " +
                                fmt(rep.at("inter_mean").get<double>()) + "; needs >= 3.0)"});
    }
    if (wanted(8)) {
      const auto second_dir = work / "run2";
      const auto second = run_pipeline(second_dir, epochs, threads);
      const bool same = second.code == 0 &&
                        slurp(first_dir / "report.json") == slurp(second_dir / "report.json");
      report(8, "determinism",
             {same, "second run with seed 7 " +
                        std::string(same ? "reproduced" : "did NOT reproduce") +
                        " report.json byte for byte (" + fmt(second.seconds, 4) + " s)"});
    }
  }
  return failures == 0 ? 0 : 1;
}
