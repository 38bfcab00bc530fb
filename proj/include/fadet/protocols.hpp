#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fadet {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuotaError : DataError {
  QuotaError(const std::string& msg, std::string type_name, int64_t shortfall_n)
      : DataError(msg), type(std::move(type_name)), shortfall(shortfall_n) {}
  std::string type;
  int64_t shortfall = 0;
};

enum class Label { live, fake };
enum class AttackType { none, physical, advanced, deepfake };

const char* to_string(Label label);
const char* to_string(AttackType type);
Label label_from_string(const std::string& s);
AttackType attack_type_from_string(const std::string& s);

struct ManifestEntry {
  std::string sample_id;
  std::string subject_id;
  Label label = Label::live;
  AttackType attack_type = AttackType::none;
  std::string path;
};

/// JSON-lines manifest loader. Rejects malformed lines (with line numbers),
/// duplicate sample ids, and label/attack_type inconsistencies.
std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries);

enum class SplitName { train = 0, eval = 1, test = 2 };
constexpr int kSplitCount = 3;
constexpr int kTypeCount = 4;  // live, physical, advanced, deepfake
const char* to_string(SplitName split);

struct TypeQuota {
  int64_t images = 0;
  int64_t ids = 0;
};

/// Per-split, per-type image and ID quotas plus the subject partition rule.
/// Types marked `shared_ids` draw from the full subject pool in every split
/// (the original leaky digital layout); all others stay inside the split's
/// disjoint subject partition.
struct ProtocolSpec {
  std::string name;
  std::array<int64_t, kSplitCount> split_ids{};            // global partition
  std::array<std::array<TypeQuota, kTypeCount>, kSplitCount> quota{};
  std::array<bool, kTypeCount> shared_ids{};

  static ProtocolSpec p1();
  static ProtocolSpec p1_1();
  static ProtocolSpec p1_2();
  static ProtocolSpec p1_3();
  static ProtocolSpec by_name(const std::string& name);

  /// Integer-divides every quota; used for desk-scale runs that follow the
  /// same partition rules.
  ProtocolSpec scaled(int64_t divisor) const;
};

struct ProtocolSplit {
  std::vector<std::string> train;  // sorted sample ids
  std::vector<std::string> eval;
  std::vector<std::string> test;
  std::string protocol_name;
  uint64_t seed = 0;

  const std::vector<std::string>& split(SplitName s) const;
};

/// Deterministic split construction: subjects sorted lexicographically, then
/// seeded sampling without replacement; image quotas distributed evenly with
/// the remainder going to the earliest selected subjects.
ProtocolSplit build_split(const std::vector<ManifestEntry>& manifest,
                          const ProtocolSpec& spec, uint64_t seed);

struct AuditReport {
  std::vector<std::string> train_eval_overlap;  // subject ids, sorted
  std::vector<std::string> train_test_overlap;
  std::vector<std::string> eval_test_overlap;
  std::array<std::array<TypeQuota, kTypeCount>, kSplitCount> tallies{};
  std::array<std::array<double, kTypeCount>, kSplitCount> balance{};

  bool clean() const;
  std::string to_json() const;
};

/// Reports subject overlaps between splits plus per-split per-type tallies.
AuditReport audit_split(const ProtocolSplit& split,
                        const std::vector<ManifestEntry>& manifest);

void write_split(const std::string& out_dir, const ProtocolSplit& split);
ProtocolSplit read_split(const std::string& out_dir);

/// Synthetic manifest with the full published protocol cardinality:
/// 1800 subjects carrying 5 live, 3 physical, 7 advanced and 7 deepfake
/// samples each, enough to satisfy every protocol quota.
std::vector<ManifestEntry> make_mirror_manifest();

/// Small synthetic manifest for desk-scale end-to-end runs: `subjects`
/// subjects with the given per-type counts; paths use the syn:// scheme
/// resolved by the synthetic generator.
std::vector<ManifestEntry> make_synthetic_manifest(int64_t subjects,
                                                   int64_t live_per_subject,
                                                   int64_t physical_per_subject,
                                                   int64_t advanced_per_subject,
                                                   int64_t deepfake_per_subject);

}  // namespace fadet
