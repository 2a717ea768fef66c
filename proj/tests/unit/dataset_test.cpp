#include <gtest/gtest.h>

#include "remedi/dataset.hpp"
#include "remedi/error.hpp"
#include "remedi/util/fs.hpp"
#include "support/fixtures.hpp"

using namespace remedi;

namespace {

RationaleSample sample(const std::string& id, GenerationMode mode, int index, int predicted, int label,
                       const std::string& rationale = "") {
  const auto why = rationale.empty() ? "reason " + id + "/" + std::to_string(index) : rationale;
  return make_sample(id, 0, mode, index, why + "\n# Prediction # " + std::to_string(predicted),
                     TaskKind::Readmission, label);
}

Corpus corpus_of(std::vector<std::pair<std::string, int>> items) {
  std::vector<ClinicalQuery> qs;
  for (auto& [id, label] : items) qs.push_back(testkit::make_query(id, label));
  return Corpus(TaskKind::Readmission, std::move(qs));
}

}  // namespace

TEST(Sft, RecordsUsePlainPromptAndParseBack) {
  const auto c = corpus_of({{"a", 1}, {"b", 0}});
  const std::vector<RationaleSample> s{sample("a", GenerationMode::Hinted, 2, 1, 1),
                                       sample("b", GenerationMode::Plain, 0, 0, 0)};
  const auto recs = build_sft(s, c);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].prompt, render_prompt(c.at("a"), GenerationMode::Plain));
  EXPECT_EQ(recs[0].completion, "reason a/2\n# Prediction # 1");
  EXPECT_EQ(recs[0].source_mode, GenerationMode::Hinted);
  for (const auto& r : recs) EXPECT_EQ(r.prompt.find(kGroundTruthMarker), std::string::npos);
}

TEST(Sft, IncorrectSampleRejected) {
  const auto c = corpus_of({{"a", 1}});
  const std::vector<RationaleSample> s{sample("a", GenerationMode::Plain, 0, 0, 1)};
  EXPECT_THROW(build_sft(s, c), InvariantViolation);
}

TEST(Sft, RationaleEndingInWrongMarkerCaught) {
  const auto c = corpus_of({{"a", 1}});
  SftRecord r;
  r.prompt = render_prompt(c.at("a"), GenerationMode::Plain);
  r.completion = "# Prediction # 0";
  r.query_id = "a";
  const std::vector<SftRecord> recs{r};
  EXPECT_THROW(verify_sft(recs, c), InvariantViolation);
}

TEST(Dpo, HintRecoveredPairsChosenHintedRejectedPlain) {
  const auto c = corpus_of({{"a", 1}});
  const std::vector<RationaleSample> chosen{sample("a", GenerationMode::Hinted, 0, 1, 1)};
  const std::vector<RationaleSample> rejected{sample("a", GenerationMode::Plain, 0, 0, 1)};
  const auto recs = build_dpo(chosen, rejected, c);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].chosen_mode, GenerationMode::Hinted);
  EXPECT_EQ(recs[0].rejected_mode, GenerationMode::Plain);
  EXPECT_EQ(recs[0].prompt, render_prompt(c.at("a"), GenerationMode::Plain));
}

TEST(Dpo, CapAndCycling) {
  const auto c = corpus_of({{"a", 1}, {"b", 0}, {"c", 1}});
  std::vector<RationaleSample> chosen, rejected;
  for (int i = 0; i < 3; ++i) chosen.push_back(sample("a", GenerationMode::Plain, i, 1, 1));
  rejected.push_back(sample("a", GenerationMode::Plain, 3, 0, 1));
  chosen.push_back(sample("b", GenerationMode::Plain, 0, 0, 0));
  rejected.push_back(sample("c", GenerationMode::Plain, 0, 0, 1));

  EXPECT_EQ(build_dpo(chosen, rejected, c, 1).size(), 1u);
  const auto three = build_dpo(chosen, rejected, c, 5);
  ASSERT_EQ(three.size(), 3u);  // min(cap, max(|C|, |R|)); b and c have one side only
  for (const auto& r : three) {
    EXPECT_EQ(r.query_id, "a");
    EXPECT_EQ(r.rejected, three[0].rejected);
  }
  EXPECT_NE(three[0].chosen, three[1].chosen);
  EXPECT_THROW(build_dpo(chosen, rejected, c, 0), ConfigError);
}

TEST(Dpo, SideContractsEnforced) {
  const auto c = corpus_of({{"a", 1}});
  const std::vector<RationaleSample> good{sample("a", GenerationMode::Plain, 0, 1, 1)};
  EXPECT_THROW(build_dpo(good, good, c), InvariantViolation);
}

TEST(Serialize, ManifestMatchesBytes) {
  const auto dir = testkit::fresh_dir("dataset");
  const auto c = corpus_of({{"a", 1}, {"b", 0}});
  const std::vector<RationaleSample> s{sample("a", GenerationMode::Hinted, 0, 1, 1),
                                       sample("b", GenerationMode::Plain, 0, 0, 0)};
  const auto recs = build_sft(s, c);
  const auto m = serialize(recs, {dir, "datasets/round-0/sft.jsonl", 0, 2});
  EXPECT_EQ(m.schema, kSftSchema);
  EXPECT_EQ(m.record_count, 2u);
  EXPECT_EQ(m.origin_counts.at("hinted"), 1u);
  EXPECT_EQ(m.origin_counts.at("plain"), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "datasets/round-0/sft.manifest.json"));
  EXPECT_TRUE(manifest_matches(m, dir));
  EXPECT_EQ(load_sft(dir / m.path), recs);

  const auto lines = util::split_lines(util::read_file(dir / m.path));
  ASSERT_EQ(lines.size(), 2u);
  const auto first = nlohmann::ordered_json::parse(lines[0]);
  EXPECT_EQ(first.size(), 2u);
  EXPECT_TRUE(first.contains("prompt") && first.contains("completion"));

  util::write_file_atomic(dir / m.path, util::read_file(dir / m.path) + "\n");
  EXPECT_FALSE(manifest_matches(m, dir));
  EXPECT_EQ(DatasetManifest::from_json(m.to_json()).to_json().dump(), m.to_json().dump());
  std::filesystem::remove_all(dir);
}

TEST(Serialize, DpoSchemaAndRoundTrip) {
  const auto dir = testkit::fresh_dir("dataset-dpo");
  const auto c = corpus_of({{"a", 1}});
  const std::vector<RationaleSample> ch{sample("a", GenerationMode::Plain, 0, 1, 1)};
  const std::vector<RationaleSample> rj{sample("a", GenerationMode::Plain, 1, 0, 1)};
  const auto recs = build_dpo(ch, rj, c);
  const auto m = serialize(recs, {dir, "d/dpo.jsonl", 1, 1});
  EXPECT_EQ(m.schema, kDpoSchema);
  EXPECT_EQ(load_dpo(dir / m.path), recs);
  const auto line = nlohmann::ordered_json::parse(util::split_lines(util::read_file(dir / m.path))[0]);
  EXPECT_EQ(line.size(), 3u);
  std::filesystem::remove_all(dir);
}
