#include "fadet/protocols.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fadet/rng.hpp"
#include "json.hpp"

namespace fadet {

const char* to_string(Label label) {
  return label == Label::live ? "live" : "fake";
}

const char* to_string(AttackType type) {
  switch (type) {
    case AttackType::none: return "none";
    case AttackType::physical: return "physical";
    case AttackType::advanced: return "advanced";
    default: return "deepfake";
  }
}

Label label_from_string(const std::string& s) {
  if (s == "live") return Label::live;
  if (s == "fake") return Label::fake;
  throw DataError("unknown label: " + s);
}

AttackType attack_type_from_string(const std::string& s) {
  if (s == "none") return AttackType::none;
  if (s == "physical") return AttackType::physical;
  if (s == "advanced") return AttackType::advanced;
  if (s == "deepfake") return AttackType::deepfake;
  throw DataError("unknown attack_type: " + s);
}

const char* to_string(SplitName split) {
  switch (split) {
    case SplitName::train: return "train";
    case SplitName::eval: return "eval";
    default: return "test";
  }
}

namespace {

void validate_entry(const ManifestEntry& e, int64_t line) {
  bool live = e.label == Label::live;
  bool none = e.attack_type == AttackType::none;
  if (live != none) {
    throw DataError("manifest line " + std::to_string(line) + " (sample " +
                    e.sample_id + "): label '" + to_string(e.label) +
                    "' inconsistent with attack_type '" +
                    to_string(e.attack_type) + "'");
  }
  if (e.sample_id.empty() || e.subject_id.empty()) {
    throw DataError("manifest line " + std::to_string(line) +
                    ": empty sample_id or subject_id");
  }
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      " is not valid JSON: " + e.what());
    }
    ManifestEntry entry;
    try {
      entry.sample_id = j.at("sample_id").get<std::string>();
      entry.subject_id = j.at("subject_id").get<std::string>();
      entry.label = label_from_string(j.at("label").get<std::string>());
      entry.attack_type =
          attack_type_from_string(j.at("attack_type").get<std::string>());
      entry.path = j.value("path", "");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      " is missing a field: " + e.what());
    }
    validate_entry(entry, line_no);
    if (!seen.insert(entry.sample_id).second) {
      throw DataError("duplicate sample_id in manifest: " + entry.sample_id);
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

void save_manifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest: " + path);
  for (const auto& e : entries) {
    nlohmann::json j{{"sample_id", e.sample_id},
                     {"subject_id", e.subject_id},
                     {"label", to_string(e.label)},
                     {"attack_type", to_string(e.attack_type)},
                     {"path", e.path}};
    os << j.dump() << "\n";
  }
}

namespace {

ProtocolSpec base_spec(const std::string& name) {
  ProtocolSpec s;
  s.name = name;
  s.split_ids = {600, 300, 900};
  // live and physical follow the 600/300/900 layout in every protocol
  s.quota[0][0] = {3000, 600};
  s.quota[1][0] = {1500, 300};
  s.quota[2][0] = {4500, 900};
  s.quota[0][1] = {1800, 600};
  s.quota[1][1] = {900, 300};
  s.quota[2][1] = {2700, 900};
  return s;
}

}  // namespace

ProtocolSpec ProtocolSpec::p1() {
  ProtocolSpec s = base_spec("P1");
  s.quota[0][2] = {1800, 1800};
  s.quota[1][2] = {1800, 1800};
  s.quota[2][2] = {7106, 1800};
  s.quota[0][3] = {1800, 1800};
  s.quota[1][3] = {1800, 1800};
  s.quota[2][3] = {7200, 1800};
  // the original digital layout reuses all identities in every split
  s.shared_ids[2] = true;
  s.shared_ids[3] = true;
  return s;
}

ProtocolSpec ProtocolSpec::p1_1() {
  ProtocolSpec s = base_spec("P1.1");
  s.quota[0][2] = {1200, 600};
  s.quota[1][2] = {300, 300};
  s.quota[2][2] = {2606, 900};
  s.quota[0][3] = {0, 0};
  s.quota[1][3] = {0, 0};
  s.quota[2][3] = {5425, 900};
  return s;
}

ProtocolSpec ProtocolSpec::p1_2() {
  ProtocolSpec s = base_spec("P1.2");
  s.quota[0][2] = {0, 0};
  s.quota[1][2] = {0, 0};
  s.quota[2][2] = {5306, 900};
  s.quota[0][3] = {1198, 600};
  s.quota[1][3] = {300, 300};
  s.quota[2][3] = {2725, 900};
  return s;
}

ProtocolSpec ProtocolSpec::p1_3() {
  ProtocolSpec s = base_spec("P1.3");
  s.quota[0][2] = {600, 600};
  s.quota[1][2] = {300, 300};
  s.quota[2][2] = {3506, 900};
  s.quota[0][3] = {600, 600};
  s.quota[1][3] = {300, 300};
  s.quota[2][3] = {3625, 900};
  return s;
}

ProtocolSpec ProtocolSpec::by_name(const std::string& name) {
  if (name == "P1") return p1();
  if (name == "P1.1") return p1_1();
  if (name == "P1.2") return p1_2();
  if (name == "P1.3") return p1_3();
  throw DataError("unknown protocol: " + name +
                  " (expected P1, P1.1, P1.2 or P1.3)");
}

ProtocolSpec ProtocolSpec::scaled(int64_t divisor) const {
  if (divisor < 1) throw DataError("scale divisor must be >= 1");
  ProtocolSpec s = *this;
  s.name = name + "/" + std::to_string(divisor);
  for (auto& n : s.split_ids) n = std::max<int64_t>(n / divisor, 1);
  for (int sp = 0; sp < kSplitCount; ++sp) {
    for (int t = 0; t < kTypeCount; ++t) {
      const TypeQuota& q = quota[sp][t];
      if (q.images == 0) continue;
      TypeQuota& out = s.quota[sp][t];
      out.ids = std::max<int64_t>(q.ids / divisor, 1);
      out.images = std::max<int64_t>(q.images / divisor, out.ids);
    }
  }
  return s;
}

const std::vector<std::string>& ProtocolSplit::split(SplitName s) const {
  switch (s) {
    case SplitName::train: return train;
    case SplitName::eval: return eval;
    default: return test;
  }
}

namespace {

struct SubjectPool {
  // subject -> per-type sorted sample ids
  std::map<std::string, std::array<std::vector<std::string>, kTypeCount>> by_subject;
  std::vector<std::string> subjects;  // sorted
};

SubjectPool index_manifest(const std::vector<ManifestEntry>& manifest) {
  SubjectPool pool;
  for (const auto& e : manifest) {
    int t = static_cast<int>(e.attack_type);
    pool.by_subject[e.subject_id][t].push_back(e.sample_id);
  }
  for (auto& [subject, lists] : pool.by_subject) {
    pool.subjects.push_back(subject);
    for (auto& l : lists) std::sort(l.begin(), l.end());
  }
  return pool;
}

}  // namespace

ProtocolSplit build_split(const std::vector<ManifestEntry>& manifest,
                          const ProtocolSpec& spec, uint64_t seed) {
  SubjectPool pool = index_manifest(manifest);

  int64_t needed_subjects = spec.split_ids[0] + spec.split_ids[1] + spec.split_ids[2];
  if (static_cast<int64_t>(pool.subjects.size()) < needed_subjects) {
    throw QuotaError("manifest has " + std::to_string(pool.subjects.size()) +
                         " subjects, protocol " + spec.name + " needs " +
                         std::to_string(needed_subjects),
                     "subjects",
                     needed_subjects - static_cast<int64_t>(pool.subjects.size()));
  }

  // Global disjoint subject partition (already sorted by index_manifest).
  std::vector<std::string> shuffled = pool.subjects;
  std::mt19937_64 partition_engine(mix_seed(seed, 0));
  deterministic_shuffle(shuffled, partition_engine);
  std::array<std::vector<std::string>, kSplitCount> partition;
  size_t cursor = 0;
  for (int sp = 0; sp < kSplitCount; ++sp) {
    for (int64_t k = 0; k < spec.split_ids[sp]; ++k) {
      partition[sp].push_back(shuffled[cursor++]);
    }
    std::sort(partition[sp].begin(), partition[sp].end());
  }

  ProtocolSplit result;
  result.protocol_name = spec.name;
  result.seed = seed;
  std::set<std::string> used_samples;

  for (int sp = 0; sp < kSplitCount; ++sp) {
    std::vector<std::string>& out = sp == 0 ? result.train
                                  : sp == 1 ? result.eval
                                            : result.test;
    for (int t = 0; t < kTypeCount; ++t) {
      const TypeQuota& q = spec.quota[sp][t];
      if (q.images == 0) continue;
      const char* type_name = to_string(static_cast<AttackType>(t));

      // candidate subjects for this (split, type)
      std::vector<std::string> candidates;
      const std::vector<std::string>& base =
          spec.shared_ids[t] ? pool.subjects : partition[sp];
      for (const auto& subject : base) {
        if (!pool.by_subject[subject][t].empty()) candidates.push_back(subject);
      }
      if (static_cast<int64_t>(candidates.size()) < q.ids) {
        throw QuotaError(
            "protocol " + spec.name + " " + to_string(static_cast<SplitName>(sp)) +
                " needs " + std::to_string(q.ids) + " subjects with " +
                type_name + " samples, found " + std::to_string(candidates.size()),
            type_name, q.ids - static_cast<int64_t>(candidates.size()));
      }
      std::mt19937_64 engine(mix_seed(seed, 16 + sp * kTypeCount + t));
      deterministic_shuffle(candidates, engine);
      std::vector<std::string> chosen(candidates.begin(), candidates.begin() + q.ids);
      std::sort(chosen.begin(), chosen.end());

      // distribute image quota; earliest subjects carry the remainder
      int64_t base_count = q.images / q.ids;
      int64_t remainder = q.images % q.ids;
      for (int64_t s = 0; s < q.ids; ++s) {
        int64_t want = base_count + (s < remainder ? 1 : 0);
        const auto& available = pool.by_subject[chosen[s]][t];
        int64_t taken = 0;
        for (const auto& sample : available) {
          if (taken == want) break;
          if (used_samples.count(sample)) continue;
          used_samples.insert(sample);
          out.push_back(sample);
          ++taken;
        }
        if (taken < want) {
          throw QuotaError("subject " + chosen[s] + " has only " +
                               std::to_string(taken) + " unused " + type_name +
                               " samples of " + std::to_string(want) +
                               " required by protocol " + spec.name,
                           type_name, want - taken);
        }
      }
    }
    std::sort(out.begin(), out.end());
  }
  return result;
}

bool AuditReport::clean() const {
  return train_eval_overlap.empty() && train_test_overlap.empty() &&
         eval_test_overlap.empty();
}

std::string AuditReport::to_json() const {
  nlohmann::json j;
  j["overlaps"] = {{"train_eval", train_eval_overlap},
                   {"train_test", train_test_overlap},
                   {"eval_test", eval_test_overlap}};
  j["clean"] = clean();
  for (int sp = 0; sp < kSplitCount; ++sp) {
    nlohmann::json split_tally;
    for (int t = 0; t < kTypeCount; ++t) {
      const char* type_name =
          t == 0 ? "live" : to_string(static_cast<AttackType>(t));
      split_tally[type_name] = {{"images", tallies[sp][t].images},
                                {"ids", tallies[sp][t].ids},
                                {"balance", balance[sp][t]}};
    }
    j["tallies"][to_string(static_cast<SplitName>(sp))] = split_tally;
  }
  return j.dump(2);
}

AuditReport audit_split(const ProtocolSplit& split,
                        const std::vector<ManifestEntry>& manifest) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : manifest) by_id[e.sample_id] = &e;

  std::array<std::set<std::string>, kSplitCount> subjects;
  AuditReport report;
  for (int sp = 0; sp < kSplitCount; ++sp) {
    const auto& ids = split.split(static_cast<SplitName>(sp));
    int64_t total = static_cast<int64_t>(ids.size());
    std::array<std::set<std::string>, kTypeCount> type_subjects;
    for (const auto& sample : ids) {
      auto it = by_id.find(sample);
      if (it == by_id.end()) {
        throw DataError("split references unknown sample_id: " + sample);
      }
      const ManifestEntry& e = *it->second;
      int t = static_cast<int>(e.attack_type);
      report.tallies[sp][t].images++;
      type_subjects[t].insert(e.subject_id);
      subjects[sp].insert(e.subject_id);
    }
    for (int t = 0; t < kTypeCount; ++t) {
      report.tallies[sp][t].ids = static_cast<int64_t>(type_subjects[t].size());
      report.balance[sp][t] =
          total == 0 ? 0.0
                     : static_cast<double>(report.tallies[sp][t].images) / total;
    }
  }
  auto intersect = [](const std::set<std::string>& a,
                      const std::set<std::string>& b) {
    std::vector<std::string> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(out));
    return out;
  };
  report.train_eval_overlap = intersect(subjects[0], subjects[1]);
  report.train_test_overlap = intersect(subjects[0], subjects[2]);
  report.eval_test_overlap = intersect(subjects[1], subjects[2]);
  return report;
}

void write_split(const std::string& out_dir, const ProtocolSplit& split) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (int sp = 0; sp < kSplitCount; ++sp) {
    SplitName name = static_cast<SplitName>(sp);
    std::ofstream os(fs::path(out_dir) / (std::string(to_string(name)) + ".ids"),
                     std::ios::trunc);
    if (!os) throw DataError("cannot write split files under " + out_dir);
    for (const auto& id : split.split(name)) os << id << "\n";
  }
  nlohmann::json prov{{"protocol", split.protocol_name},
                      {"seed", split.seed},
                      {"counts",
                       {{"train", split.train.size()},
                        {"eval", split.eval.size()},
                        {"test", split.test.size()}}}};
  std::ofstream os(fs::path(out_dir) / "provenance.json", std::ios::trunc);
  os << prov.dump(2) << "\n";
}

ProtocolSplit read_split(const std::string& out_dir) {
  namespace fs = std::filesystem;
  ProtocolSplit split;
  for (int sp = 0; sp < kSplitCount; ++sp) {
    SplitName name = static_cast<SplitName>(sp);
    fs::path path = fs::path(out_dir) / (std::string(to_string(name)) + ".ids");
    std::ifstream is(path);
    if (!is) throw DataError("cannot read split file: " + path.string());
    std::vector<std::string>& out = sp == 0 ? split.train
                                  : sp == 1 ? split.eval
                                            : split.test;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty()) out.push_back(line);
    }
  }
  fs::path prov = fs::path(out_dir) / "provenance.json";
  std::ifstream is(prov);
  if (is) {
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (!j.is_discarded()) {
      split.protocol_name = j.value("protocol", "");
      split.seed = j.value("seed", 0ULL);
    }
  }
  return split;
}

namespace {

std::string zero_pad(int64_t n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<ManifestEntry> build_manifest(int64_t subjects,
                                          const std::array<int64_t, kTypeCount>& per_type) {
  std::vector<ManifestEntry> entries;
  static const char* kShort[kTypeCount] = {"live", "phys", "adv", "df"};
  int64_t index = 0;
  for (int64_t s = 1; s <= subjects; ++s) {
    std::string subject = "id" + zero_pad(s, 4);
    for (int t = 0; t < kTypeCount; ++t) {
      for (int64_t k = 0; k < per_type[t]; ++k) {
        ManifestEntry e;
        e.subject_id = subject;
        e.sample_id = subject + "_" + kShort[t] + "_" + std::to_string(k);
        e.attack_type = static_cast<AttackType>(t);
        e.label = t == 0 ? Label::live : Label::fake;
        e.path = "syn://" + std::to_string(index++);
        entries.push_back(std::move(e));
      }
    }
  }
  return entries;
}

}  // namespace

std::vector<ManifestEntry> make_mirror_manifest() {
  return build_manifest(1800, {5, 3, 7, 7});
}

std::vector<ManifestEntry> make_synthetic_manifest(int64_t subjects,
                                                   int64_t live_per_subject,
                                                   int64_t physical_per_subject,
                                                   int64_t advanced_per_subject,
                                                   int64_t deepfake_per_subject) {
  return build_manifest(subjects, {live_per_subject, physical_per_subject,
                                   advanced_per_subject, deepfake_per_subject});
}

}  // namespace fadet
