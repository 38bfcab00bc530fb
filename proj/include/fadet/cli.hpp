#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fadet/config.hpp"
#include "fadet/metrics.hpp"
#include "fadet/protocols.hpp"
#include "fadet/spectral.hpp"

namespace fadet::cli {

constexpr int kOk = 0;
constexpr int kUsage = 1;   // bad flags or config
constexpr int kData = 2;    // data, quota or checkpoint problems
constexpr int kNumerical = 3;

/// Resolves the image backing a manifest entry: syn:// paths go through the
/// deterministic generator, *.pgm files are read from disk.
Tensor load_entry_image(const ManifestEntry& entry,
                        const SyntheticDataSpec& spec);

/// Manifest selection shared by the commands: the built-in synthetic
/// manifest when `synthetic` is set, otherwise the file named by `manifest`.
std::vector<ManifestEntry> resolve_manifest(const RunConfig& config);

struct FrequencyAnalysis {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<std::string> categories;  // present, in fixed type order
  std::map<std::string, std::vector<double>> mean_logmag;  // centered [H*W]
  std::map<std::string, RadialHistogram> histograms;
};

/// Per-category mean log-magnitude spectra and their radial histograms.
FrequencyAnalysis analyze_frequency(const std::vector<ManifestEntry>& entries,
                                    const SyntheticDataSpec& spec, double alpha,
                                    int bins, int64_t max_per_category,
                                    std::ostream& log);

int run_train(const RunConfig& config, const std::string& out_dir,
              std::ostream& log);
int run_eval(const RunConfig& config, const std::string& checkpoint,
             const std::string& split_dir, const std::string& split_name,
             const std::string& out_dir, std::ostream& log);
int run_analyze(const RunConfig& config, const std::string& out_dir,
                std::ostream& log);
int run_protocol(const RunConfig& config, bool use_mirror,
                 const std::string& emit_manifest,
                 const std::string& audit_only_dir, const std::string& out_dir,
                 std::ostream& log);

}  // namespace fadet::cli
