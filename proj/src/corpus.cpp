#include "remedi/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "remedi/error.hpp"
#include "remedi/util/digest.hpp"
#include "remedi/util/fs.hpp"
#include "remedi/util/hash.hpp"
#include "remedi/util/random.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

Corpus::Corpus(TaskKind task, std::vector<ClinicalQuery> queries, Provenance provenance)
    : task_(task), queries_(std::move(queries)), provenance_(std::move(provenance)) {
  const auto n_labels = static_cast<int>(label_count(task_));
  index_.reserve(queries_.size());
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    const auto& q = queries_[i];
    if (q.task != task_) throw InvariantViolation("query " + q.id + " belongs to another task");
    if (q.label < 0 || q.label >= n_labels)
      throw InvariantViolation("query " + q.id + " label out of range");
    if (q.context.empty()) throw InvariantViolation("query " + q.id + " has empty context");
    if (!index_.emplace(q.id, i).second) throw InvariantViolation("duplicate id " + q.id);
  }
}

const ClinicalQuery* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &queries_[it->second];
}

const ClinicalQuery& Corpus::at(std::string_view id) const {
  if (const auto* q = find(id)) return *q;
  throw Error("unknown query id '" + std::string(id) + "'");
}

std::vector<std::size_t> Corpus::class_counts() const {
  std::vector<std::size_t> counts(label_count(task_), 0);
  for (const auto& q : queries_) ++counts[static_cast<std::size_t>(q.label)];
  return counts;
}

void SplitSpec::validate() const {
  for (double r : {train, val, test}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("split fraction outside [0,1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Corpus ingest(std::istream& source, TaskKind task) {
  std::ostringstream buf;
  buf << source.rdbuf();
  const std::string bytes = buf.str();

  std::vector<std::string> problems;
  std::vector<ClinicalQuery> queries;
  std::unordered_set<std::string> seen;
  const int n_labels = static_cast<int>(label_count(task));

  std::size_t line_no = 0;
  for (const auto& raw : util::split_lines(bytes)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (blank(line)) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception&) {
      problems.push_back(where + "malformed record");
      continue;
    }
    if (!j.is_object()) {
      problems.push_back(where + "malformed record (not an object)");
      continue;
    }

    ClinicalQuery q;
    q.task = task;
    bool ok = true;
    auto fail = [&](const std::string& why) {
      problems.push_back(where + why);
      ok = false;
    };

    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
      fail("missing or non-string id");
    } else {
      q.id = j["id"].get<std::string>();
    }
    if (j.contains("task")) {
      if (!j["task"].is_string()) {
        fail("task must be a string");
      } else if (auto t = parse_task_key(j["task"].get<std::string>()); !t) {
        fail("unknown task '" + j["task"].get<std::string>() + "'");
      } else if (*t != task) {
        fail("task mismatch: expected " + std::string(task_key(task)));
      }
    }
    if (!j.contains("context") || !j["context"].is_string()) {
      fail("missing or non-string context");
    } else {
      q.context = j["context"].get<std::string>();
      if (blank(q.context)) fail("empty context");
    }
    if (!j.contains("label") || !j["label"].is_number_integer()) {
      fail("missing or non-integer label");
    } else {
      const auto label = j["label"].get<long long>();
      if (label < 0 || label >= n_labels) {
        fail("label out of range (" + std::to_string(label) + ")");
      } else {
        q.label = static_cast<int>(label);
      }
    }
    if (j.contains("metadata") && !j["metadata"].is_null()) {
      if (!j["metadata"].is_object()) {
        fail("metadata must be an object");
      } else {
        for (const auto& [k, v] : j["metadata"].items())
          q.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    if (ok && !q.id.empty() && !seen.insert(q.id).second) {
      fail("duplicate id '" + q.id + "'");
    }
    if (ok) queries.push_back(std::move(q));
  }

  if (!problems.empty()) throw IngestError(std::move(problems));
  Provenance prov;
  prov.source_digest = util::sha256_hex(bytes);
  return Corpus(task, std::move(queries), std::move(prov));
}

Corpus ingest_file(const std::filesystem::path& path, TaskKind task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  return ingest(in, task);
}

Corpus balance_and_cap(const Corpus& corpus, std::span<const std::size_t> per_class_targets,
                       std::uint64_t seed) {
  const auto n_classes = label_count(corpus.task());
  if (per_class_targets.size() != n_classes)
    throw ConfigError("expected " + std::to_string(n_classes) + " per-class targets");

  std::vector<std::vector<std::size_t>> members(n_classes);
  const auto queries = corpus.queries();
  for (std::size_t i = 0; i < queries.size(); ++i)
    members[static_cast<std::size_t>(queries[i].label)].push_back(i);

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (per_class_targets[c] > members[c].size()) {
      throw Error("insufficient samples in class " + std::to_string(c) + ": need " +
                  std::to_string(per_class_targets[c]) + ", have " +
                  std::to_string(members[c].size()));
    }
    auto pool = members[c];
    util::seeded_shuffle(pool, util::combine(seed, c));
    pool.resize(per_class_targets[c]);
    keep.insert(keep.end(), pool.begin(), pool.end());
  }
  std::sort(keep.begin(), keep.end());

  std::vector<ClinicalQuery> selected;
  selected.reserve(keep.size());
  for (auto i : keep) selected.push_back(queries[i]);

  Provenance prov = corpus.provenance();
  prov.balancing.push_back({std::vector<std::size_t>(per_class_targets.begin(),
                                                     per_class_targets.end()),
                            seed});
  return Corpus(corpus.task(), std::move(selected), std::move(prov));
}

namespace {

// Per-class counts for (train, val, test). Val/test totals are floor(N * ratio)
// and their cells are within one sample of n_c * ratio; train cells absorb the
// flooring excess and stay within two.
std::vector<std::array<std::size_t, 3>> apportion(const std::vector<std::size_t>& class_sizes,
                                                  const SplitSpec& spec) {
  constexpr double kEps = 1e-9;
  const std::array<double, 3> ratios = {spec.train, spec.val, spec.test};
  const std::size_t n_classes = class_sizes.size();
  const std::size_t total = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});

  std::array<std::size_t, 3> column_total{};
  column_total[1] = static_cast<std::size_t>(std::floor(total * ratios[1] + kEps));
  column_total[2] = static_cast<std::size_t>(std::floor(total * ratios[2] + kEps));
  column_total[0] = total - column_total[1] - column_total[2];

  std::vector<std::array<std::size_t, 3>> cells(n_classes);
  std::vector<std::array<double, 3>> frac(n_classes);
  std::vector<std::size_t> row_left(n_classes);
  std::array<long long, 3> col_left{};
  for (int s = 0; s < 3; ++s) col_left[s] = static_cast<long long>(column_total[s]);

  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double ideal = class_sizes[c] * ratios[s];
      const auto base = static_cast<std::size_t>(std::floor(ideal + kEps));
      cells[c][s] = base;
      frac[c][s] = ideal - static_cast<double>(base);
      used += base;
      col_left[s] -= static_cast<long long>(base);
    }
    row_left[c] = class_sizes[c] - used;
  }

  // Distribute the remaining +1s as a 0/1 matrix with the given margins: rows
  // with the most outstanding samples first, each to the columns with the most
  // outstanding capacity (ties: largest fraction). This greedy order always
  // completes when a rounding exists, and one exists for these margins.
  std::vector<std::size_t> rows(n_classes);
  std::iota(rows.begin(), rows.end(), 0);
  std::stable_sort(rows.begin(), rows.end(),
                   [&](std::size_t a, std::size_t b) { return row_left[a] > row_left[b]; });
  for (auto c : rows) {
    std::array<int, 3> cols = {0, 1, 2};
    std::stable_sort(cols.begin(), cols.end(), [&](int a, int b) {
      if (col_left[a] != col_left[b]) return col_left[a] > col_left[b];
      return frac[c][a] > frac[c][b];
    });
    for (int s : cols) {
      if (row_left[c] == 0 || col_left[s] <= 0) break;
      ++cells[c][s];
      --row_left[c];
      --col_left[s];
    }
  }
  // Train excess beyond one per class lands here.
  for (std::size_t c = 0; c < n_classes; ++c) cells[c][0] += row_left[c];
  return cells;
}

}  // namespace

CorpusSplit split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.empty()) throw Error("cannot split an empty corpus");

  const auto n_classes = label_count(corpus.task());
  const auto queries = corpus.queries();
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < queries.size(); ++i)
    members[static_cast<std::size_t>(queries[i].label)].push_back(i);

  std::vector<std::size_t> sizes(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) sizes[c] = members[c].size();
  const auto cells = apportion(sizes, spec);

  std::array<std::vector<std::size_t>, 3> picked;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto pool = members[c];
    util::seeded_shuffle(pool, util::combine(spec.seed, 0x5117ULL + c));
    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < cells[c][s]; ++k) picked[s].push_back(pool[cursor++]);
    }
  }

  auto make = [&](int s, const char* role) {
    auto idx = picked[s];
    std::sort(idx.begin(), idx.end());
    std::vector<ClinicalQuery> qs;
    qs.reserve(idx.size());
    for (auto i : idx) qs.push_back(queries[i]);
    Provenance prov = corpus.provenance();
    prov.split_role = role;
    return Corpus(corpus.task(), std::move(qs), std::move(prov));
  };
  return CorpusSplit{make(0, "train"), make(1, "val"), make(2, "test")};
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& q : corpus.queries()) {
    Json j;
    j["id"] = q.id;
    j["task"] = task_key(q.task);
    j["context"] = q.context;
    j["label"] = q.label;
    if (!q.metadata.empty()) {
      Json meta = Json::object();
      for (const auto& [k, v] : q.metadata) meta[k] = v;
      j["metadata"] = std::move(meta);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  util::write_file_atomic(path, to_jsonl(corpus));
}

}  // namespace remedi
