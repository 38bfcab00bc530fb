#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fadet/protocols.hpp"
#include "fadet/rng.hpp"

using namespace fadet;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path(name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::set<std::string> subject_set(const std::vector<std::string>& sample_ids,
                                  const std::vector<ManifestEntry>& manifest) {
  std::map<std::string, std::string> subj;
  for (const auto& e : manifest) subj[e.sample_id] = e.subject_id;
  std::set<std::string> out;
  for (const auto& id : sample_ids) out.insert(subj.at(id));
  return out;
}

int64_t count_type(const std::vector<std::string>& sample_ids,
                   const std::vector<ManifestEntry>& manifest, AttackType t) {
  std::map<std::string, AttackType> types;
  for (const auto& e : manifest) types[e.sample_id] = e.attack_type;
  int64_t n = 0;
  for (const auto& id : sample_ids) n += types.at(id) == t ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("empty manifest loads as an empty list") {
  TempFile f("empty_manifest.jsonl");
  std::ofstream(f.path).close();
  CHECK(load_manifest(f.path).empty());
}

TEST_CASE("label/attack_type inconsistency is rejected") {
  TempFile f("bad_manifest.jsonl");
  std::ofstream(f.path) << R"({"sample_id":"a","subject_id":"s","label":"live","attack_type":"physical","path":""})"
                        << "\n";
  CHECK_THROWS_AS(load_manifest(f.path), DataError);
}

TEST_CASE("malformed line reports its line number") {
  TempFile f("malformed_manifest.jsonl");
  std::ofstream(f.path)
      << R"({"sample_id":"a","subject_id":"s","label":"live","attack_type":"none","path":""})"
      << "\n{oops\n";
  try {
    load_manifest(f.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("duplicate sample ids are rejected by name") {
  TempFile f("dup_manifest.jsonl");
  {
    std::ofstream os(f.path);
    for (int i = 0; i < 2; ++i) {
      os << R"({"sample_id":"dup-1","subject_id":"s","label":"live","attack_type":"none","path":""})"
         << "\n";
    }
  }
  try {
    load_manifest(f.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("dup-1") != std::string::npos);
  }
}

TEST_CASE("a P1-train-shaped manifest loads with the expected tallies") {
  // 600 subjects with 5 live + 3 physical each, 1800 subjects with one
  // advanced and one deepfake each: 3000/1800/1800/1800 entries.
  std::vector<ManifestEntry> entries;
  auto mirror = make_mirror_manifest();
  std::map<std::string, std::vector<const ManifestEntry*>> per_subject;
  for (const auto& e : mirror) per_subject[e.subject_id].push_back(&e);
  int64_t subject_rank = 0;
  for (const auto& [subject, list] : per_subject) {
    ++subject_rank;
    int64_t live_taken = 0, phys_taken = 0, adv_taken = 0, df_taken = 0;
    for (const auto* e : list) {
      switch (e->attack_type) {
        case AttackType::none:
          if (subject_rank <= 600 && live_taken < 5) { entries.push_back(*e); live_taken++; }
          break;
        case AttackType::physical:
          if (subject_rank <= 600 && phys_taken < 3) { entries.push_back(*e); phys_taken++; }
          break;
        case AttackType::advanced:
          if (adv_taken < 1) { entries.push_back(*e); adv_taken++; }
          break;
        case AttackType::deepfake:
          if (df_taken < 1) { entries.push_back(*e); df_taken++; }
          break;
      }
    }
  }
  REQUIRE(entries.size() == 8400);
  TempFile f("p1_train_manifest.jsonl");
  save_manifest(f.path, entries);
  auto loaded = load_manifest(f.path);
  REQUIRE(loaded.size() == 8400);
  int64_t tally[4] = {0, 0, 0, 0};
  for (const auto& e : loaded) tally[static_cast<int>(e.attack_type)]++;
  CHECK(tally[0] == 3000);
  CHECK(tally[1] == 1800);
  CHECK(tally[2] == 1800);
  CHECK(tally[3] == 1800);
}

TEST_CASE("P1.3 split on the mirror manifest matches the published counts") {
  auto manifest = make_mirror_manifest();
  ProtocolSplit split = build_split(manifest, ProtocolSpec::p1_3(), 7);
  CHECK(split.train.size() == 6000);  // 3000 + 1800 + 600 + 600
  CHECK(split.eval.size() == 3000);
  CHECK(split.test.size() == 14331);

  auto train_subjects = subject_set(split.train, manifest);
  auto eval_subjects = subject_set(split.eval, manifest);
  auto test_subjects = subject_set(split.test, manifest);
  CHECK(train_subjects.size() == 600);
  CHECK(eval_subjects.size() == 300);
  CHECK(test_subjects.size() == 900);

  AuditReport report = audit_split(split, manifest);
  CHECK(report.clean());
  CHECK(report.tallies[0][0].images == 3000);
  CHECK(report.tallies[0][2].images == 600);
  CHECK(report.tallies[2][2].images == 3506);
  CHECK(report.tallies[2][3].images == 3625);
  CHECK(report.tallies[2][3].ids == 900);
}

TEST_CASE("P1.1 train has no deepfakes and 1200 advanced over 600 ids") {
  auto manifest = make_mirror_manifest();
  ProtocolSplit split = build_split(manifest, ProtocolSpec::p1_1(), 3);
  CHECK(count_type(split.train, manifest, AttackType::deepfake) == 0);
  CHECK(count_type(split.train, manifest, AttackType::advanced) == 1200);
  AuditReport report = audit_split(split, manifest);
  CHECK(report.clean());
  CHECK(report.tallies[0][2].ids == 600);
  CHECK(report.tallies[2][3].images == 5425);
}

TEST_CASE("the original P1 digital layout is flagged with 1800 shared ids") {
  auto manifest = make_mirror_manifest();
  ProtocolSplit split = build_split(manifest, ProtocolSpec::p1(), 7);
  AuditReport report = audit_split(split, manifest);
  CHECK_FALSE(report.clean());
  CHECK(report.train_test_overlap.size() == 1800);
  CHECK(report.train_eval_overlap.size() == 1800);
}

TEST_CASE("moving one test sample into train yields exactly one named overlap") {
  auto manifest = make_mirror_manifest();
  ProtocolSplit split = build_split(manifest, ProtocolSpec::p1_3(), 7);
  std::string moved = split.test.front();
  std::map<std::string, std::string> subj;
  for (const auto& e : manifest) subj[e.sample_id] = e.subject_id;
  // the moved subject must not already appear in train
  split.train.push_back(moved);
  std::sort(split.train.begin(), split.train.end());
  AuditReport report = audit_split(split, manifest);
  REQUIRE(report.train_test_overlap.size() == 1);
  CHECK(report.train_test_overlap[0] == subj.at(moved));
}

TEST_CASE("splits are deterministic and invariant to manifest row order") {
  auto manifest = make_mirror_manifest();
  ProtocolSplit a = build_split(manifest, ProtocolSpec::p1_2(), 99);
  ProtocolSplit b = build_split(manifest, ProtocolSpec::p1_2(), 99);
  CHECK(a.train == b.train);
  CHECK(a.eval == b.eval);
  CHECK(a.test == b.test);

  auto permuted = manifest;
  std::mt19937_64 engine(5);
  for (size_t i = permuted.size(); i > 1; --i) {
    std::swap(permuted[i - 1], permuted[engine() % i]);
  }
  ProtocolSplit c = build_split(permuted, ProtocolSpec::p1_2(), 99);
  CHECK(a.train == c.train);
  CHECK(a.test == c.test);

  ProtocolSplit d = build_split(manifest, ProtocolSpec::p1_2(), 100);
  CHECK(a.train != d.train);
}

TEST_CASE("quota shortfall errors name the lacking type") {
  auto manifest = make_synthetic_manifest(30, 5, 3, 5, 0);  // no deepfakes
  try {
    build_split(manifest, ProtocolSpec::p1_3().scaled(100), 1);
    FAIL("expected QuotaError");
  } catch (const QuotaError& e) {
    CHECK(e.type == "deepfake");
    CHECK(e.shortfall > 0);
  }
}

TEST_CASE("strict protocols audit clean over random manifests") {
  Rng rng(1234);
  for (int trial = 0; trial < 3; ++trial) {
    int64_t subjects = 20 + rng.uniform_int(0, 10);
    auto manifest = make_synthetic_manifest(subjects, 5, 3, 7, 7);
    for (const auto* spec_name : {"P1.1", "P1.2", "P1.3"}) {
      ProtocolSpec spec = ProtocolSpec::by_name(spec_name).scaled(100);
      ProtocolSplit split = build_split(manifest, spec, rng.uniform_int(0, 1 << 20));
      AuditReport report = audit_split(split, manifest);
      CHECK(report.clean());
    }
  }
}

TEST_CASE("split files round trip byte-identically") {
  namespace fs = std::filesystem;
  auto manifest = make_synthetic_manifest(24, 5, 3, 5, 5);
  ProtocolSplit split = build_split(manifest, ProtocolSpec::p1_3().scaled(100), 11);
  std::string dir = "test_split_out";
  write_split(dir, split);
  ProtocolSplit loaded = read_split(dir);
  CHECK(loaded.train == split.train);
  CHECK(loaded.eval == split.eval);
  CHECK(loaded.test == split.test);
  CHECK(loaded.protocol_name == split.protocol_name);

  write_split(dir + "2", build_split(manifest, ProtocolSpec::p1_3().scaled(100), 11));
  for (const char* name : {"train.ids", "eval.ids", "test.ids"}) {
    std::ifstream f1(fs::path(dir) / name), f2(fs::path(dir + "2") / name);
    std::string c1((std::istreambuf_iterator<char>(f1)), {});
    std::string c2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(c1 == c2);
  }
  fs::remove_all(dir);
  fs::remove_all(dir + "2");
}

TEST_CASE("audit rejects unresolved sample ids") {
  auto manifest = make_synthetic_manifest(5, 1, 1, 1, 1);
  ProtocolSplit split;
  split.train = {"no-such-sample"};
  CHECK_THROWS_AS(audit_split(split, manifest), DataError);
}
