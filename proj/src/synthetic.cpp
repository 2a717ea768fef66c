#include "remedi/synthetic.hpp"

#include <array>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "remedi/error.hpp"
#include "remedi/util/random.hpp"

namespace remedi {

namespace {

constexpr std::array kConditions{
    "essential hypertension", "type 2 diabetes mellitus", "congestive heart failure",
    "acute kidney failure",   "atrial fibrillation",      "chronic obstructive pulmonary disease",
    "pneumonia",              "sepsis",                   "hyperlipidemia",
    "urinary tract infection", "anemia",                  "coronary atherosclerosis",
    "acute respiratory failure", "hypothyroidism",        "esophageal reflux"};

constexpr std::array kProcedures{
    "venous catheterization", "insertion of endotracheal tube", "hemodialysis",
    "transfusion of packed cells", "enteral infusion of nutrition", "coronary arteriography",
    "left heart cardiac catheterization", "arterial catheterization", "thoracentesis"};

constexpr std::array kMedications{
    "heparin", "furosemide", "insulin", "metoprolol", "aspirin", "vancomycin",
    "pantoprazole", "acetaminophen", "atorvastatin", "lisinopril", "warfarin", "piperacillin"};

template <std::size_t N>
std::string pick(std::mt19937_64& rng, const std::array<const char*, N>& pool, int count) {
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  util::seeded_shuffle(idx, rng());
  std::string out;
  for (int i = 0; i < count && i < static_cast<int>(N); ++i) {
    if (i) out += ", ";
    out += pool[idx[static_cast<std::size_t>(i)]];
  }
  return out;
}

}  // namespace

Corpus synthetic_corpus(TaskKind task, std::size_t n, std::uint64_t seed,
                        std::vector<double> class_weights, std::string_view id_prefix) {
  const auto n_classes = label_count(task);
  if (class_weights.empty()) class_weights.assign(n_classes, 1.0);
  if (class_weights.size() != n_classes) throw ConfigError("one class weight per label is required");
  std::discrete_distribution<int> label_dist(class_weights.begin(), class_weights.end());
  std::mt19937_64 rng(seed);

  std::vector<ClinicalQuery> queries;
  queries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ClinicalQuery q;
    q.id = fmt::format("{}{:06d}", id_prefix, i);
    q.task = task;
    q.label = label_dist(rng);
    const int visits = 1 + static_cast<int>(rng() % 3);
    std::string ctx = fmt::format("Patient {} ({} prior visit{}).", q.id, visits, visits == 1 ? "" : "s");
    for (int v = 1; v <= visits; ++v) {
      ctx += fmt::format("\nVisit {}: Conditions: {}. Procedures: {}. Medications: {}.", v,
                         pick(rng, kConditions, 2 + static_cast<int>(rng() % 3)),
                         pick(rng, kProcedures, 1 + static_cast<int>(rng() % 2)),
                         pick(rng, kMedications, 2 + static_cast<int>(rng() % 3)));
    }
    q.context = std::move(ctx);
    q.metadata["source"] = "synthetic";
    queries.push_back(std::move(q));
  }
  return Corpus(task, std::move(queries));
}

}  // namespace remedi
