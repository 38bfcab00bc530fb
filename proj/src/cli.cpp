#include "fadet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fadet/pgm.hpp"
#include "fadet/training.hpp"
#include "json.hpp"

namespace fadet::cli {

namespace fs = std::filesystem;

Tensor load_entry_image(const ManifestEntry& entry,
                        const SyntheticDataSpec& spec) {
  if (entry.path.rfind("syn://", 0) == 0) {
    return synthesize_entry(spec, entry);
  }
  if (entry.path.size() > 4 &&
      entry.path.substr(entry.path.size() - 4) == ".pgm") {
    return read_pgm(entry.path);
  }
  throw DataError("cannot load image for sample " + entry.sample_id +
                  ": unsupported path " + entry.path);
}

std::vector<ManifestEntry> resolve_manifest(const RunConfig& config) {
  if (config.get_bool("synthetic")) {
    return make_synthetic_manifest(config.get_int("synth_subjects"), 5, 3, 5, 5);
  }
  const std::string& path = config.get("manifest");
  if (path.empty()) {
    throw ConfigError("either synthetic = true or a manifest path is required");
  }
  return load_manifest(path);
}

namespace {

std::map<std::string, const ManifestEntry*> index_by_id(
    const std::vector<ManifestEntry>& entries) {
  std::map<std::string, const ManifestEntry*> out;
  for (const auto& e : entries) out[e.sample_id] = &e;
  return out;
}

ScoredSet score_ids(const Model& model, const std::vector<std::string>& ids,
                    const std::map<std::string, const ManifestEntry*>& by_id,
                    const SyntheticDataSpec& spec) {
  ScoredSet set;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw DataError("split references unknown sample_id: " + id);
    }
    const ManifestEntry& entry = *it->second;
    double p_live = score_sample(model, load_entry_image(entry, spec));
    set.samples.push_back({p_live, entry.label == Label::live});
  }
  return set;
}

struct SplitReport {
  nlohmann::json json;
  double acer = 0.0;
  double threshold = 0.0;
};

// threshold < 0 means "derive from this set's own FAR=FRR crossing"
SplitReport make_report(const ScoredSet& set, double threshold) {
  RocMetrics roc = roc_metrics(set);
  double used = threshold < 0.0 ? roc.eer_threshold : threshold;
  ThresholdMetrics tm = acer_acc(set, used);
  SplitReport report;
  report.acer = tm.acer;
  report.threshold = used;
  report.json = nlohmann::json::parse(metrics_report_json(set, used));
  report.json["eer_threshold"] = roc.eer_threshold;
  return report;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

double config_threshold(const RunConfig& config) {
  const std::string& value = config.get("threshold");
  if (value == "eer") return -1.0;
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("threshold must be 'eer' or a number, got " + value);
  }
}

std::vector<const ManifestEntry*> split_entries(
    const std::vector<std::string>& ids,
    const std::map<std::string, const ManifestEntry*>& by_id) {
  std::vector<const ManifestEntry*> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown sample_id in split: " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

int run_train(const RunConfig& config, const std::string& out_dir,
              std::ostream& log) {
  fs::create_directories(out_dir);
  config.write_echo(out_dir);

  auto manifest = resolve_manifest(config);
  ProtocolSpec spec = ProtocolSpec::by_name(config.get("protocol"));
  int64_t scale = config.get_int("protocol_scale");
  if (scale > 1) spec = spec.scaled(scale);
  ProtocolSplit split = build_split(manifest, spec, config.seed());
  write_split(out_dir, split);
  auto by_id = index_by_id(manifest);
  SyntheticDataSpec data_spec = config.synthetic_spec();

  Model model(config.model_config(), config.seed());
  model.save((fs::path(out_dir) / "model_init.ckpt").string());

  SplitReport step0 =
      make_report(score_ids(model, split.train, by_id, data_spec), -1.0);
  log << "step 0 train acer " << step0.acer << "\n";

  TrainerOptions options;
  options.lr = config.get_double("lr");
  options.enable_nt = config.get_bool("enable_nt");
  Trainer trainer(model, options);

  auto train_entries = split_entries(split.train, by_id);
  std::vector<size_t> order(train_entries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  uint64_t epoch = 0;
  size_t cursor = order.size();  // trigger the first shuffle

  std::ofstream csv(fs::path(out_dir) / "loss_log.csv", std::ios::trunc);
  csv << "step,l_nt,l_ce,l_total,train_acer\n";
  csv << std::setprecision(17);

  int64_t steps = config.get_int("steps");
  int64_t batch_size = config.get_int("batch");
  double last_batch_acer = 0.5;
  for (int64_t step = 1; step <= steps; ++step) {
    Batch batch;
    for (int64_t k = 0; k < batch_size; ++k) {
      if (cursor == order.size()) {
        std::mt19937_64 engine(mix_seed(config.seed(), 1000 + epoch++));
        deterministic_shuffle(order, engine);
        cursor = 0;
      }
      const ManifestEntry& entry = *train_entries[order[cursor++]];
      batch.images.push_back(load_entry_image(entry, data_spec));
      batch.labels.push_back(entry.label);
      batch.attack_types.push_back(entry.attack_type);
    }
    LossReport losses = trainer.train_step(batch);

    ScoredSet batch_scores;
    for (size_t i = 0; i < batch.size(); ++i) {
      batch_scores.samples.push_back(
          {trainer.last_margins()[i], batch.labels[i] == Label::live});
    }
    if (batch_scores.count_live() > 0 && batch_scores.count_fake() > 0) {
      last_batch_acer = acer_acc(batch_scores, 0.0).acer;
    }
    csv << step << "," << losses.l_nt << "," << losses.l_ce << ","
        << losses.l_total << "," << last_batch_acer << "\n";
    if (step % 50 == 0 || step == steps) {
      log << "step " << step << " l_total " << losses.l_total
          << " batch acer " << last_batch_acer << "\n";
    }
  }
  csv.close();

  model.save((fs::path(out_dir) / "model_final.ckpt").string());

  SplitReport train_final =
      make_report(score_ids(model, split.train, by_id, data_spec), -1.0);
  SplitReport eval_final =
      make_report(score_ids(model, split.eval, by_id, data_spec), -1.0);
  // test threshold transfers from the eval split's FAR=FRR crossing
  SplitReport test_final = make_report(
      score_ids(model, split.test, by_id, data_spec), eval_final.threshold);

  nlohmann::json metrics;
  metrics["train_acer_step0"] = step0.acer;
  metrics["train_acer_final"] = train_final.acer;
  metrics["train"] = train_final.json;
  metrics["eval"] = eval_final.json;
  metrics["test"] = test_final.json;
  write_json(fs::path(out_dir) / "metrics.json", metrics);

  log << "final train acer " << train_final.acer << ", test auc "
      << test_final.json["auc"].get<double>() << ", test acer "
      << test_final.acer << "\n";
  return kOk;
}

int run_eval(const RunConfig& config, const std::string& checkpoint,
             const std::string& split_dir, const std::string& split_name,
             const std::string& out_dir, std::ostream& log) {
  auto manifest = resolve_manifest(config);
  auto by_id = index_by_id(manifest);
  SyntheticDataSpec data_spec = config.synthetic_spec();

  if (!fs::exists(checkpoint)) {
    throw DataError("checkpoint not found: " + checkpoint);
  }
  Model model(config.model_config(), config.seed());
  model.load(checkpoint);

  std::vector<std::string> ids;
  if (split_dir.empty()) {
    for (const auto& e : manifest) ids.push_back(e.sample_id);
    std::sort(ids.begin(), ids.end());
  } else {
    ProtocolSplit split = read_split(split_dir);
    if (split_name == "train") ids = split.train;
    else if (split_name == "eval") ids = split.eval;
    else if (split_name == "test") ids = split.test;
    else throw ConfigError("unknown split name: " + split_name);
  }

  ScoredSet scores = score_ids(model, ids, by_id, data_spec);
  SplitReport report = make_report(scores, config_threshold(config));
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    config.write_echo(out_dir);
    write_json(fs::path(out_dir) / "metrics.json", report.json);
  }
  log << report.json.dump(2) << "\n";
  return kOk;
}

FrequencyAnalysis analyze_frequency(const std::vector<ManifestEntry>& entries,
                                    const SyntheticDataSpec& spec, double alpha,
                                    int bins, int64_t max_per_category,
                                    std::ostream& log) {
  (void)alpha;  // analysis reports the full spectrum; alpha documents the run
  std::map<std::string, std::vector<const ManifestEntry*>> groups;
  for (const auto& e : entries) {
    std::string category =
        e.label == Label::live ? "live" : to_string(e.attack_type);
    groups[category].push_back(&e);
  }

  FrequencyAnalysis analysis;
  for (const char* category : {"live", "physical", "advanced", "deepfake"}) {
    auto it = groups.find(category);
    if (it == groups.end() || it->second.empty()) {
      log << "warning: category '" << category << "' has no samples, skipped\n";
      continue;
    }
    auto& members = it->second;
    std::sort(members.begin(), members.end(),
              [](const ManifestEntry* a, const ManifestEntry* b) {
                return a->sample_id < b->sample_id;
              });
    if (static_cast<int64_t>(members.size()) > max_per_category) {
      members.resize(max_per_category);
    }
    std::vector<double> accum;
    for (const ManifestEntry* entry : members) {
      Tensor image = load_entry_image(*entry, spec);
      if (analysis.height == 0) {
        analysis.height = image.dim(0);
        analysis.width = image.dim(1);
      }
      if (image.dim(0) != analysis.height || image.dim(1) != analysis.width) {
        throw DataError("image size mismatch for sample " + entry->sample_id);
      }
      Spectrum s = fft2(image);
      int64_t hw = analysis.height * analysis.width;
      int64_t channels = image.dim(2);
      if (accum.empty()) accum.assign(hw, 0.0);
      for (int64_t p = 0; p < hw; ++p) {
        double mag = 0.0;
        for (int64_t c = 0; c < channels; ++c) {
          mag += std::hypot(s.coeffs.real.data()[p * channels + c],
                            s.coeffs.imag.data()[p * channels + c]);
        }
        accum[p] += std::log1p(mag / channels);
      }
    }
    for (double& v : accum) v /= static_cast<double>(members.size());
    analysis.categories.push_back(category);
    analysis.histograms[category] =
        radial_histogram(accum, analysis.height, analysis.width, bins);
    analysis.mean_logmag[category] = std::move(accum);
  }
  if (analysis.categories.empty()) {
    throw DataError("no categories with samples to analyze");
  }
  return analysis;
}

int run_analyze(const RunConfig& config, const std::string& out_dir,
                std::ostream& log) {
  fs::create_directories(out_dir);
  config.write_echo(out_dir);
  auto manifest = resolve_manifest(config);
  FrequencyAnalysis analysis = analyze_frequency(
      manifest, config.synthetic_spec(), config.get_double("alpha"),
      static_cast<int>(config.get_int("hist_bins")),
      config.get_int("max_per_category"), log);

  // density histogram CSV: bin_center, one column per category
  std::ofstream csv(fs::path(out_dir) / "frequency_density.csv",
                    std::ios::trunc);
  csv << std::setprecision(17);
  csv << "bin_center";
  for (const auto& c : analysis.categories) csv << "," << c;
  csv << "\n";
  const auto& first = analysis.histograms.at(analysis.categories.front());
  for (size_t b = 0; b < first.bin_centers.size(); ++b) {
    csv << first.bin_centers[b];
    for (const auto& c : analysis.categories) {
      csv << "," << analysis.histograms.at(c).density[b];
    }
    csv << "\n";
  }

  // pairwise absolute difference maps
  for (size_t i = 0; i < analysis.categories.size(); ++i) {
    for (size_t j = i + 1; j < analysis.categories.size(); ++j) {
      const auto& a = analysis.mean_logmag.at(analysis.categories[i]);
      const auto& b = analysis.mean_logmag.at(analysis.categories[j]);
      std::vector<double> diff(a.size());
      for (size_t p = 0; p < a.size(); ++p) diff[p] = std::fabs(a[p] - b[p]);
      std::string name = "diff_" + analysis.categories[i] + "_" +
                         analysis.categories[j] + ".pgm";
      write_pgm((fs::path(out_dir) / name).string(), diff, analysis.height,
                analysis.width);
    }
  }
  log << "analyzed categories:";
  for (const auto& c : analysis.categories) log << " " << c;
  log << "\n";
  return kOk;
}

int run_protocol(const RunConfig& config, bool use_mirror,
                 const std::string& emit_manifest,
                 const std::string& audit_only_dir, const std::string& out_dir,
                 std::ostream& log) {
  std::vector<ManifestEntry> manifest;
  if (use_mirror) {
    manifest = make_mirror_manifest();
  } else {
    manifest = resolve_manifest(config);
  }
  if (!emit_manifest.empty()) {
    save_manifest(emit_manifest, manifest);
    log << "manifest written to " << emit_manifest << "\n";
  }

  if (!audit_only_dir.empty()) {
    ProtocolSplit split = read_split(audit_only_dir);
    AuditReport report = audit_split(split, manifest);
    fs::create_directories(out_dir);
    write_json(fs::path(out_dir) / "audit.json",
               nlohmann::json::parse(report.to_json()));
    log << report.to_json() << "\n";
    if (!report.clean()) {
      log << "audit found subject overlaps\n";
      return kData;
    }
    return kOk;
  }

  ProtocolSpec spec = ProtocolSpec::by_name(config.get("protocol"));
  int64_t scale = config.get_int("protocol_scale");
  if (scale > 1) spec = spec.scaled(scale);
  ProtocolSplit split = build_split(manifest, spec, config.seed());
  fs::create_directories(out_dir);
  config.write_echo(out_dir);
  write_split(out_dir, split);
  AuditReport report = audit_split(split, manifest);
  write_json(fs::path(out_dir) / "audit.json",
             nlohmann::json::parse(report.to_json()));
  log << "split written: train " << split.train.size() << ", eval "
      << split.eval.size() << ", test " << split.test.size() << "\n";
  if (!report.clean()) {
    log << "audit found subject overlaps between splits\n";
    return kData;
  }
  return kOk;
}

}  // namespace fadet::cli
