#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fadet/cli.hpp"
#include "fadet/metrics.hpp"
#include "fadet/pgm.hpp"
#include "fadet/training.hpp"
#include "json.hpp"

using namespace fadet;
namespace fs = std::filesystem;

namespace {

// tiny dims so every subprocess finishes in well under a second per step
const char* kTinyConfig =
    "image_size = 8\n"
    "patch_size = 4\n"
    "d_v = 8\n"
    "vit_heads = 2\n"
    "vit_layers = 1\n"
    "d_t = 16\n"
    "d_vt = 12\n"
    "context_length = 4\n"
    "text_layers = 1\n"
    "text_heads = 2\n"
    "clusters = 3\n"
    "conv_channels = 4\n"
    "batch = 6\n"
    "steps = 3\n";

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::path("cli_ws") / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

int run(const std::string& args, const Workspace& ws,
        const std::string& log_name = "out.log") {
  std::string cmd = std::string(FADET_BIN) + " " + args + " > " +
                    ws.path(log_name) + " 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

std::string write_tiny_config(const Workspace& ws) {
  std::string path = ws.path("tiny.cfg");
  std::ofstream(path) << kTinyConfig;
  return path;
}

}  // namespace

TEST_CASE("zero learning rate leaves the checkpoint byte-identical") {
  Workspace ws("lr0");
  std::string cfg = write_tiny_config(ws);
  int code = run("train --synthetic --config " + cfg + " --lr 0 --seed 3 --out " +
                     ws.path("run"),
                 ws);
  REQUIRE(code == 0);
  CHECK(slurp(ws.path("run/model_init.ckpt")) ==
        slurp(ws.path("run/model_final.ckpt")));
}

TEST_CASE("identical seeds produce byte-identical run artifacts") {
  Workspace ws("determinism");
  std::string cfg = write_tiny_config(ws);
  for (const char* out : {"a", "b"}) {
    int code = run("train --synthetic --config " + cfg +
                       " --seed 11 --out " + ws.path(out),
                   ws, std::string(out) + ".log");
    REQUIRE(code == 0);
  }
  for (const char* file :
       {"model_init.ckpt", "model_final.ckpt", "loss_log.csv", "train.ids",
        "eval.ids", "test.ids", "metrics.json"}) {
    CHECK(slurp(ws.path(std::string("a/") + file)) ==
          slurp(ws.path(std::string("b/") + file)));
  }
  // a different seed changes the trained weights
  int code = run("train --synthetic --config " + cfg + " --seed 12 --out " +
                     ws.path("c"),
                 ws, "c.log");
  REQUIRE(code == 0);
  CHECK(slurp(ws.path("a/model_final.ckpt")) !=
        slurp(ws.path("c/model_final.ckpt")));
}

TEST_CASE("prompt-mode variants run end to end") {
  Workspace ws("modes");
  std::string cfg = write_tiny_config(ws);
  for (const char* mode : {"coop", "cocoop"}) {
    int code = run("train --synthetic --config " + cfg + " --prompt-mode " +
                       mode + " --seed 5 --out " + ws.path(mode),
                   ws, std::string(mode) + ".log");
    CHECK(code == 0);
  }
}

TEST_CASE("eval on the train split reproduces the logged final train acer") {
  Workspace ws("consistency");
  std::string cfg = write_tiny_config(ws);
  REQUIRE(run("train --synthetic --config " + cfg + " --seed 21 --out " +
                  ws.path("run"),
              ws) == 0);
  REQUIRE(run("eval --synthetic --config " + cfg +
                  " --seed 21 --checkpoint " + ws.path("run/model_final.ckpt") +
                  " --split-dir " + ws.path("run") + " --split train --out " +
                  ws.path("eval_out"),
              ws, "eval.log") == 0);
  auto train_metrics = nlohmann::json::parse(slurp(ws.path("run/metrics.json")));
  auto eval_metrics =
      nlohmann::json::parse(slurp(ws.path("eval_out/metrics.json")));
  double logged = train_metrics["train_acer_final"].get<double>();
  double evaluated = eval_metrics["acer"].get<double>();
  CHECK(std::fabs(logged - evaluated) < 1e-9);
}

TEST_CASE("missing checkpoint exits 2 with a message") {
  Workspace ws("missing_ckpt");
  std::string cfg = write_tiny_config(ws);
  int code = run("eval --synthetic --config " + cfg +
                     " --checkpoint no/such/file.ckpt --out " + ws.path("out"),
                 ws);
  CHECK(code == 2);
  CHECK(slurp(ws.path("out.log")).find("checkpoint") != std::string::npos);
}

TEST_CASE("unknown config keys exit 1") {
  Workspace ws("badcfg");
  std::ofstream(ws.path("bad.cfg")) << "no_such_key = 1\n";
  int code = run("train --synthetic --config " + ws.path("bad.cfg") +
                     " --out " + ws.path("out"),
                 ws);
  CHECK(code == 1);
  CHECK(slurp(ws.path("out.log")).find("no_such_key") != std::string::npos);
}

TEST_CASE("quota shortfall exits 2 naming the type") {
  Workspace ws("quota");
  std::string cfg = write_tiny_config(ws);
  // full-scale quotas cannot be met by the 18-subject synthetic manifest
  int code = run("train --synthetic --config " + cfg +
                     " --scale 1 --out " + ws.path("out"),
                 ws);
  CHECK(code == 2);
  CHECK(slurp(ws.path("out.log")).find("quota") != std::string::npos);
}

TEST_CASE("protocol command is deterministic and audits itself") {
  Workspace ws("protocol");
  for (const char* out : {"pa", "pb"}) {
    int code = run(std::string("protocol --synthetic --protocol P1.3 --scale "
                               "100 --seed 9 --out ") +
                       ws.path(out),
                   ws, std::string(out) + ".log");
    REQUIRE(code == 0);
  }
  for (const char* file : {"train.ids", "eval.ids", "test.ids"}) {
    CHECK(slurp(ws.path(std::string("pa/") + file)) ==
          slurp(ws.path(std::string("pb/") + file)));
  }

  // corrupt the split: move the first test sample into train
  std::string train_ids = slurp(ws.path("pa/train.ids"));
  std::string test_ids = slurp(ws.path("pa/test.ids"));
  std::string first_test = test_ids.substr(0, test_ids.find('\n'));
  std::ofstream(ws.path("pa/train.ids"), std::ios::app) << first_test << "\n";
  int code = run("protocol --synthetic --audit-only " + ws.path("pa") +
                     " --out " + ws.path("audit_out"),
                 ws, "audit.log");
  CHECK(code == 2);
  auto audit = nlohmann::json::parse(slurp(ws.path("audit_out/audit.json")));
  CHECK(audit["clean"].get<bool>() == false);
  CHECK(audit["overlaps"]["train_test"].size() == 1);
}

TEST_CASE("analyze-frequency: identical categories give an all-zero map") {
  Workspace ws("freq");
  // two categories sharing the same underlying pgm files
  std::vector<double> img(64);
  Rng rng(33);
  for (auto& v : img) v = rng.uniform(0.0, 1.0);
  write_pgm(ws.path("shared.pgm"), img, 8, 8);
  std::ofstream manifest(ws.path("m.jsonl"));
  manifest << R"({"sample_id":"a","subject_id":"s1","label":"fake","attack_type":"physical","path":")"
           << ws.path("shared.pgm") << R"("})" << "\n";
  manifest << R"({"sample_id":"b","subject_id":"s2","label":"fake","attack_type":"advanced","path":")"
           << ws.path("shared.pgm") << R"("})" << "\n";
  manifest.close();
  int code = run("analyze-frequency --manifest " + ws.path("m.jsonl") +
                     " --out " + ws.path("out"),
                 ws);
  REQUIRE(code == 0);
  std::string log = slurp(ws.path("out.log"));
  CHECK(log.find("warning") != std::string::npos);  // live/deepfake missing
  Tensor diff = read_pgm(ws.path("out/diff_physical_advanced.pgm"));
  for (double v : diff.data()) CHECK(v == 0.0);
}

TEST_CASE("analyze-frequency: synthetic fakes carry more high-band density") {
  Workspace ws("freqsyn");
  int code = run("analyze-frequency --synthetic --alpha 0.25 --out " +
                     ws.path("out"),
                 ws);
  REQUIRE(code == 0);
  std::ifstream csv(ws.path("out/frequency_density.csv"));
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "bin_center,live,physical,advanced,deepfake");
  double live_high = 0, fake_high = 0;
  std::string line;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    REQUIRE(row.size() == 5);
    for (double v : row) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
    if (row[0] > 0.5) {  // outer half of the band
      live_high += row[1];
      fake_high += (row[2] + row[3] + row[4]) / 3.0;
    }
  }
  CHECK(fake_high > live_high);
}

TEST_CASE("random-weights models score at chance level on balanced data") {
  double auc_sum = 0.0;
  int n_seeds = 10;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    ModelConfig mc;
    mc.vit.image_size = 8;
    mc.vit.patch_size = 4;
    mc.vit.d_v = 8;
    mc.vit.n_heads = 2;
    mc.vit.n_layers = 1;
    mc.d_t = 16;
    mc.d_vt = 12;
    mc.context_length = 4;
    mc.text_layers = 1;
    mc.text_heads = 2;
    mc.clusters = 3;
    mc.conv_channels = 4;
    Model model(mc, static_cast<uint64_t>(seed));
    SyntheticDataSpec spec;
    spec.seed = 100 + seed;
    spec.height = 8;
    spec.width = 8;
    ScoredSet set;
    for (int i = 0; i < 30; ++i) {
      std::string subject = "s" + std::to_string(i % 6);
      Tensor live = synthesize_image(spec, subject, i, AttackType::none);
      Tensor fake = synthesize_image(
          spec, subject, 100 + i,
          i % 2 ? AttackType::advanced : AttackType::physical);
      set.samples.push_back({score_sample(model, live), true});
      set.samples.push_back({score_sample(model, fake), false});
    }
    auc_sum += roc_metrics(set).auc;
  }
  double mean_auc = auc_sum / n_seeds;
  INFO("mean auc over seeds: ", mean_auc);
  CHECK(mean_auc >= 0.35);
  CHECK(mean_auc <= 0.65);
}
