#include "remedi/filters.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "remedi/error.hpp"
#include "remedi/util/fs.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

AnswerPartition answer_match_partition(std::span<const RationaleSample> samples,
                                       const Corpus& corpus) {
  AnswerPartition out;
  for (const auto& s : samples) {
    const auto& q = corpus.at(s.query_id);
    RationaleSample graded = s;
    if (!parsed(s.prediction)) {
      graded.correct = Correctness::Unparsable;
      out.unparsable.push_back(std::move(graded));
    } else if (label_of(s.prediction) == q.label) {
      graded.correct = Correctness::True;
      out.correct.push_back(std::move(graded));
    } else {
      graded.correct = Correctness::False;
      out.incorrect.push_back(std::move(graded));
    }
  }
  return out;
}

namespace {

std::string regex_escape(std::string_view s) {
  static constexpr std::string_view kSpecial = R"(\^$.|?*+()[]{}-)";
  std::string out;
  for (char c : s) {
    if (kSpecial.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

LeakPatternSet::LeakPatternSet(std::string version, std::vector<std::string> patterns,
                               std::size_t wildcard_max_chars)
    : version_(std::move(version)),
      patterns_(std::move(patterns)),
      wildcard_max_chars_(wildcard_max_chars) {
  if (patterns_.empty()) throw ConfigError("leak pattern set must not be empty");
  compiled_.reserve(patterns_.size());
  const std::string gap = "[^\\n]{0," + std::to_string(wildcard_max_chars_) + "}";
  for (const auto& p : patterns_) {
    if (p.empty()) throw ConfigError("empty leak pattern");
    std::string re;
    std::size_t start = 0;
    for (;;) {
      const auto star = p.find('*', start);
      re += regex_escape(std::string_view(p).substr(start, star - start));
      if (star == std::string::npos) break;
      re += gap;
      start = star + 1;
    }
    compiled_.emplace_back(re, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  }
}

LeakPatternSet LeakPatternSet::defaults() {
  return LeakPatternSet("leak-patterns/1",
                        {
                            "ground truth",
                            "ground-truth",
                            "the hint",
                            "the provided label",
                            "the given label",
                            "the given answer",
                            "the provided answer",
                            "the provided * label",
                            "the given * answer",
                            "label provided",
                            "answer provided",
                            "as indicated by the label",
                            "we are told",
                            "we know the outcome",
                            "known outcome",
                            "the correct answer is",
                        });
}

LeakPatternSet LeakPatternSet::load(const std::filesystem::path& path) {
  const auto j = util::read_json(path);
  return LeakPatternSet(j.at("version").get<std::string>(),
                        j.at("patterns").get<std::vector<std::string>>(),
                        j.value("wildcard_max_chars", std::size_t{24}));
}

Json LeakPatternSet::to_json() const {
  Json j;
  j["version"] = version_;
  j["wildcard_max_chars"] = wildcard_max_chars_;
  j["patterns"] = patterns_;
  return j;
}

std::optional<LeakPatternSet::Hit> LeakPatternSet::first_match(std::string_view text) const {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < compiled_.size(); ++i) {
    std::cmatch m;
    if (std::regex_search(text.data(), text.data() + text.size(), m, compiled_[i])) {
      const auto off = static_cast<std::size_t>(m.position(0));
      if (!best || off < best->offset) best = Hit{i, off};
    }
  }
  return best;
}

LeakFilterResult hint_leak_filter(std::span<const RationaleSample> samples,
                                  const LeakPatternSet& patterns) {
  LeakFilterResult out;
  for (const auto& s : samples) {
    if (s.mode == GenerationMode::Hinted) {
      if (auto hit = patterns.first_match(s.rationale)) {
        out.audit.push_back({s.query_id, s.sample_index,
                             std::string(patterns.patterns()[hit->pattern_index]), hit->offset});
        out.leaked.push_back(s);
        continue;
      }
    }
    out.clean.push_back(s);
  }
  return out;
}

SelectionStrategy selection_from_key(std::string_view key) {
  if (key == "lowest_index") return SelectionStrategy::LowestIndex;
  if (key == "shortest_rationale") return SelectionStrategy::ShortestRationale;
  throw ConfigError("unknown selection strategy '" + std::string(key) + "'");
}

std::optional<RationaleSample> select_one_correct(std::span<const RationaleSample> per_query,
                                                  SelectionStrategy strategy) {
  if (per_query.empty()) return std::nullopt;
  const auto& id = per_query.front().query_id;
  for (const auto& s : per_query)
    if (s.query_id != id) throw InvariantViolation("select_one_correct given several queries");

  auto key = [&](const RationaleSample& s) {
    const std::size_t len = strategy == SelectionStrategy::ShortestRationale ? s.rationale.size() : 0;
    return std::make_tuple(len, s.mode, s.sample_index, s.round);
  };
  return *std::min_element(per_query.begin(), per_query.end(),
                           [&](const auto& a, const auto& b) { return key(a) < key(b); });
}

namespace {

std::string_view disposition_key(QueryDisposition d) {
  switch (d) {
    case QueryDisposition::PlainCorrect: return "plain_correct";
    case QueryDisposition::RecoveredByHint: return "recovered_by_hint";
    case QueryDisposition::Discarded: return "discarded";
  }
  return "discarded";
}

}  // namespace

Json FilterReport::to_json() const {
  Json j;
  j["counts"] = {{"retained_correct", retained_correct},
                 {"retained_incorrect", retained_incorrect},
                 {"dropped_hint_leak", dropped_hint_leak},
                 {"dropped_unparsable", dropped_unparsable},
                 {"discarded_queries", discarded_queries}};
  j["pattern_version"] = pattern_version;
  Json qs = Json::array();
  for (const auto& q : queries) {
    Json e;
    e["query_id"] = q.query_id;
    e["disposition"] = disposition_key(q.disposition);
    if (q.selected_index) {
      e["selected_mode"] = mode_key(*q.selected_mode);
      e["selected_index"] = *q.selected_index;
    }
    qs.push_back(std::move(e));
  }
  j["queries"] = std::move(qs);
  Json audit = Json::array();
  for (const auto& a : leak_audit)
    audit.push_back({{"query_id", a.query_id},
                     {"sample_index", a.sample_index},
                     {"pattern", a.pattern},
                     {"offset", a.offset}});
  j["leak_audit"] = std::move(audit);
  return j;
}

FilteredPass filter_pass(std::span<const RationaleSample> plain,
                         std::span<const RationaleSample> hinted, const Corpus& corpus,
                         const LeakPatternSet& patterns, SelectionStrategy strategy) {
  FilteredPass out;
  out.report.pattern_version = patterns.version();

  std::vector<RationaleSample> plain_only, hinted_only;
  for (const auto& s : plain) (s.mode == GenerationMode::Plain ? plain_only : hinted_only).push_back(s);
  for (const auto& s : hinted) (s.mode == GenerationMode::Plain ? plain_only : hinted_only).push_back(s);

  const auto p = answer_match_partition(plain_only, corpus);
  const auto h = answer_match_partition(hinted_only, corpus);

  std::vector<RationaleSample> hinted_parseable = h.correct;
  hinted_parseable.insert(hinted_parseable.end(), h.incorrect.begin(), h.incorrect.end());
  auto leak = hint_leak_filter(hinted_parseable, patterns);
  out.report.leak_audit = std::move(leak.audit);

  std::vector<RationaleSample> hinted_clean_correct;
  std::size_t hinted_clean_incorrect = 0;
  for (auto& s : leak.clean) {
    if (s.correct == Correctness::True) {
      hinted_clean_correct.push_back(std::move(s));
    } else {
      ++hinted_clean_incorrect;
    }
  }

  out.report.retained_correct = p.correct.size() + hinted_clean_correct.size();
  out.report.retained_incorrect = p.incorrect.size() + hinted_clean_incorrect;
  out.report.dropped_hint_leak = leak.leaked.size();
  out.report.dropped_unparsable = p.unparsable.size() + h.unparsable.size();

  std::unordered_map<std::string, std::vector<RationaleSample>> plain_by_q, hinted_by_q;
  for (const auto& s : p.correct) plain_by_q[s.query_id].push_back(s);
  for (const auto& s : hinted_clean_correct) hinted_by_q[s.query_id].push_back(s);

  std::unordered_set<std::string> present;
  for (const auto& s : plain_only) present.insert(s.query_id);
  for (const auto& s : hinted_only) present.insert(s.query_id);

  for (const auto& q : corpus.queries()) {
    if (!present.contains(q.id)) continue;
    FilterReport::QueryEntry entry;
    entry.query_id = q.id;
    std::optional<RationaleSample> chosen;
    if (auto it = plain_by_q.find(q.id); it != plain_by_q.end()) {
      chosen = select_one_correct(it->second, strategy);
      entry.disposition = QueryDisposition::PlainCorrect;
    } else if (auto ht = hinted_by_q.find(q.id); ht != hinted_by_q.end()) {
      chosen = select_one_correct(ht->second, strategy);
      entry.disposition = QueryDisposition::RecoveredByHint;
    }
    if (chosen) {
      entry.selected_index = chosen->sample_index;
      entry.selected_mode = chosen->mode;
      out.selected.push_back(std::move(*chosen));
    } else {
      entry.disposition = QueryDisposition::Discarded;
      out.discarded.push_back(q.id);
    }
    out.report.queries.push_back(std::move(entry));
  }
  out.report.discarded_queries = out.discarded.size();

  out.correct_clean = p.correct;
  out.correct_clean.insert(out.correct_clean.end(), hinted_clean_correct.begin(),
                           hinted_clean_correct.end());
  out.incorrect = p.incorrect;
  return out;
}

}  // namespace remedi
