#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "remedi/corpus.hpp"
#include "remedi/error.hpp"
#include "remedi/synthetic.hpp"
#include "support/fixtures.hpp"

using namespace remedi;

namespace {

Corpus ingest_text(const std::string& text, TaskKind task = TaskKind::Readmission) {
  std::istringstream in(text);
  return ingest(in, task);
}

std::vector<std::string> problems_of(const std::string& text, TaskKind task = TaskKind::Readmission) {
  try {
    ingest_text(text, task);
  } catch (const IngestError& e) {
    return e.problems();
  }
  return {};
}

bool ids_equal(const Corpus& a, const Corpus& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.queries()[i].id != b.queries()[i].id) return false;
  return true;
}

}  // namespace

TEST(Ingest, ValidRecords) {
  const auto c = ingest_text(
      R"({"id":"a","task":"readmission","context":"x","label":1,"metadata":{"age":71}})"
      "\n\n"
      R"({"id":"b","context":"y","label":0})"
      "\r\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.at("a").metadata.at("age"), "71");
  EXPECT_EQ(c.at("b").context, "y");
  EXPECT_EQ(c.class_counts(), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(c.provenance().source_digest.size(), 64u);
}

TEST(Ingest, RejectsWholeBatchWithLineNumbers) {
  const auto p = problems_of(
      R"({"id":"a","context":"x","label":1})"
      "\n"
      R"({"id":"b","context":"x","label":5})"
      "\n"
      R"({"id":"a","context":"z","label":0})"
      "\n"
      "not json\n"
      R"({"context":"x","label":0})"
      "\n"
      R"({"id":"c","context":"  ","label":0})"
      "\n"
      R"({"id":"d","task":"mortality","context":"x","label":0})");
  ASSERT_EQ(p.size(), 6u);
  EXPECT_NE(p[0].find("line 2"), std::string::npos);
  EXPECT_NE(p[0].find("label out of range (5)"), std::string::npos);
  EXPECT_NE(p[1].find("duplicate id"), std::string::npos);
  EXPECT_NE(p[2].find("malformed record"), std::string::npos);
  EXPECT_NE(p[3].find("id"), std::string::npos);
  EXPECT_NE(p[4].find("empty context"), std::string::npos);
  EXPECT_NE(p[5].find("task mismatch"), std::string::npos);
}

TEST(Ingest, LosAcceptsFourLabels) {
  EXPECT_EQ(ingest_text(R"({"id":"a","context":"x","label":3})", TaskKind::LengthOfStay).size(), 1u);
  EXPECT_FALSE(problems_of(R"({"id":"a","context":"x","label":4})", TaskKind::LengthOfStay).empty());
}

TEST(Ingest, CanonicalJsonlRoundTrip) {
  const auto c = synthetic_corpus(TaskKind::Mortality, 50, 3);
  const auto back = ingest_text(to_jsonl(c), TaskKind::Mortality);
  EXPECT_TRUE(ids_equal(c, back));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c.queries()[i], back.queries()[i]);
}

TEST(Balance, ReadmissionTargets) {
  const auto c = synthetic_corpus(TaskKind::Readmission, 14000, 5);
  const std::vector<std::size_t> targets{5000, 5000};
  const auto b = balance_and_cap(c, targets, 42);
  EXPECT_EQ(b.size(), 10000u);
  EXPECT_EQ(b.class_counts(), targets);
  ASSERT_EQ(b.provenance().balancing.size(), 1u);
  EXPECT_EQ(b.provenance().balancing[0].targets, targets);
}

TEST(Balance, MortalityTargets) {
  const auto c = synthetic_corpus(TaskKind::Mortality, 12000, 5, {0.7, 0.3});
  const std::vector<std::size_t> targets{7299, 2701};
  const auto b = balance_and_cap(c, targets, 42);
  EXPECT_EQ(b.size(), 10000u);
  EXPECT_EQ(b.class_counts(), targets);
}

TEST(Balance, InsufficientClassThrows) {
  const auto c = synthetic_corpus(TaskKind::Readmission, 100, 5);
  const std::vector<std::size_t> targets{90, 90};
  EXPECT_THROW(balance_and_cap(c, targets, 1), Error);
}

TEST(Balance, IdempotentAndOrderPreserving) {
  const auto c = synthetic_corpus(TaskKind::Readmission, 500, 8);
  const std::vector<std::size_t> targets{100, 120};
  const auto once = balance_and_cap(c, targets, 4);
  const auto twice = balance_and_cap(once, targets, 4);
  EXPECT_TRUE(ids_equal(once, twice));
  for (std::size_t i = 1; i < once.size(); ++i) EXPECT_LT(once.queries()[i - 1].id, once.queries()[i].id);
  EXPECT_TRUE(ids_equal(once, balance_and_cap(c, targets, 4)));
}

TEST(Split, TenThousandSplitsEightOneOne) {
  const auto s = split(synthetic_corpus(TaskKind::Readmission, 10000, 1), SplitSpec{});
  EXPECT_EQ(s.train.size(), 8000u);
  EXPECT_EQ(s.val.size(), 1000u);
  EXPECT_EQ(s.test.size(), 1000u);
  EXPECT_EQ(s.train.provenance().split_role, "train");
  EXPECT_EQ(s.test.provenance().split_role, "test");
}

TEST(Split, TenQueries) {
  const auto s = split(synthetic_corpus(TaskKind::Readmission, 10, 1), SplitSpec{});
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, RatiosMustSumToOne) {
  SplitSpec bad{0.8, 0.1, 0.2, 1};
  EXPECT_THROW(split(synthetic_corpus(TaskKind::Readmission, 10, 1), bad), ConfigError);
}

TEST(Split, PartitionStratifiedDeterministic) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (auto task : {TaskKind::Mortality, TaskKind::LengthOfStay}) {
      for (std::size_t n : {7u, 33u, 101u, 999u}) {
        const auto c = synthetic_corpus(task, n, seed, task == TaskKind::Mortality
                                                           ? std::vector<double>{0.8, 0.2}
                                                           : std::vector<double>{});
        const SplitSpec spec{0.7, 0.2, 0.1, seed};
        const auto s = split(c, spec);
        std::multiset<std::string> ids;
        for (const auto* part : {&s.train, &s.val, &s.test})
          for (const auto& q : part->queries()) ids.insert(q.id);
        ASSERT_EQ(ids.size(), n);
        EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), n);

        EXPECT_EQ(s.val.size(), static_cast<std::size_t>(static_cast<double>(n) * 0.2 + 1e-9));
        EXPECT_EQ(s.test.size(), static_cast<std::size_t>(static_cast<double>(n) * 0.1 + 1e-9));

        const auto counts = c.class_counts();
        const std::array<const Corpus*, 3> parts{&s.train, &s.val, &s.test};
        const std::array<double, 3> ratio{0.7, 0.2, 0.1};
        for (std::size_t p = 0; p < 3; ++p) {
          const auto got = parts[p]->class_counts();
          for (std::size_t k = 0; k < counts.size(); ++k) {
            const double ideal = static_cast<double>(counts[k]) * ratio[p];
            // Flooring val/test leaves up to two extra samples for train to absorb.
            const double bound = p == 0 ? 2.0 : 1.0;
            EXPECT_LT(std::abs(static_cast<double>(got[k]) - ideal), bound + 1e-9)
                << "n=" << n << " split " << p << " class " << k;
          }
        }
        const auto again = split(c, spec);
        EXPECT_TRUE(ids_equal(s.train, again.train));
        EXPECT_TRUE(ids_equal(s.test, again.test));
      }
    }
  }
}
