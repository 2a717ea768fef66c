#pragma once

// Per-sample brute-force metrics, written without reference to the library's
// confusion-matrix arithmetic. Outcomes are expanded into individual
// (truth, prediction) records and every quantity is counted directly.

#include <optional>
#include <vector>

namespace remedi::oracle {

struct Outcome {
  int truth;
  std::optional<int> predicted;  // nullopt: unparsable
};

struct OracleMetrics {
  double accuracy = 0;
  double macro_f1 = 0;
  std::vector<double> precision, recall, f1;
  std::optional<double> tpr, tnr;
  double unparsable_rate = 0;
};

inline OracleMetrics brute_force(const std::vector<Outcome>& outcomes, int n_classes,
                                 bool unparsable_counts_as_error = true) {
  OracleMetrics m;
  long correct = 0, parsed = 0, unparsable = 0;
  for (const auto& o : outcomes) {
    if (!o.predicted) {
      ++unparsable;
      continue;
    }
    ++parsed;
    if (*o.predicted == o.truth) ++correct;
  }
  const long denom = unparsable_counts_as_error ? parsed + unparsable : parsed;
  m.accuracy = denom ? static_cast<double>(correct) / static_cast<double>(denom) : 0.0;
  m.unparsable_rate = static_cast<double>(unparsable) / static_cast<double>(outcomes.size());

  double f1_sum = 0;
  for (int c = 0; c < n_classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& o : outcomes) {
      if (!o.predicted) continue;
      const bool is_c = o.truth == c, said_c = *o.predicted == c;
      tp += is_c && said_c;
      fp += !is_c && said_c;
      fn += is_c && !said_c;
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = 2 * tp + fp + fn ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    f1_sum += f;
  }
  m.macro_f1 = f1_sum / n_classes;
  if (n_classes == 2) {
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (const auto& o : outcomes) {
      if (!o.predicted) continue;
      if (o.truth == 1) (*o.predicted == 1 ? tp : fn)++;
      else (*o.predicted == 0 ? tn : fp)++;
    }
    m.tpr = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.tnr = tn + fp ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  }
  return m;
}

}  // namespace remedi::oracle
