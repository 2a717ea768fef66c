#include "remedi/metrics.hpp"

#include <numeric>

#include "remedi/error.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

std::size_t ConfusionMatrix::parsed_total() const {
  std::size_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_classes; ++i) t += counts[i][i];
  return t;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, TaskKind task, const MetricsOptions& options) {
  if (cm.n_classes != label_count(task) || cm.counts.size() != cm.n_classes)
    throw Error("confusion matrix does not match the task's label set");
  const std::size_t parsed_n = cm.parsed_total();
  const std::size_t total = parsed_n + cm.unparsable_count;
  if (total == 0) throw Error("cannot compute metrics on an empty confusion matrix");

  MetricsReport m;
  m.n = total;
  m.unparsable_rate = static_cast<double>(cm.unparsable_count) / static_cast<double>(total);
  const std::size_t denom = options.unparsable_counts_as_error ? total : parsed_n;
  m.accuracy = denom == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(denom);

  m.per_class.resize(cm.n_classes);
  double f1_sum = 0;
  for (std::size_t c = 0; c < cm.n_classes; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < cm.n_classes; ++k) {
      predicted += cm.counts[k][c];
      actual += cm.counts[c][k];
    }
    const double tp = static_cast<double>(cm.counts[c][c]);
    auto& cl = m.per_class[c];
    cl.support = actual;
    cl.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
    cl.recall = actual == 0 ? 0.0 : tp / static_cast<double>(actual);
    cl.f1 = cl.precision + cl.recall == 0.0
                ? 0.0
                : 2.0 * cl.precision * cl.recall / (cl.precision + cl.recall);
    f1_sum += cl.f1;
  }
  m.macro_f1 = f1_sum / static_cast<double>(cm.n_classes);

  if (cm.n_classes == 2) {
    m.tpr = m.per_class[1].recall;
    m.tnr = m.per_class[0].recall;
  }
  return m;
}

Json MetricsReport::to_json() const {
  Json j;
  j["n"] = n;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  if (tpr) j["tpr"] = *tpr;
  if (tnr) j["tnr"] = *tnr;
  j["unparsable_rate"] = unparsable_rate;
  Json pc = Json::array();
  for (const auto& c : per_class)
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  j["per_class"] = std::move(pc);
  return j;
}

MetricsReport MetricsReport::from_json(const Json& j) {
  MetricsReport m;
  m.n = j.at("n").get<std::size_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.macro_f1 = j.at("macro_f1").get<double>();
  if (j.contains("tpr")) m.tpr = j["tpr"].get<double>();
  if (j.contains("tnr")) m.tnr = j["tnr"].get<double>();
  m.unparsable_rate = j.value("unparsable_rate", 0.0);
  for (const auto& c : j.at("per_class"))
    m.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(),
                           c.at("f1").get<double>(), c.at("support").get<std::size_t>()});
  return m;
}

}  // namespace remedi
