#include "dbkd/metrics.hpp"

#include "dbkd/errors.hpp"

namespace dbkd {

Metrics compute_metrics(std::span<const int> predictions, std::span<const WindowedSample> samples,
                        double window_s) {
  if (predictions.size() != samples.size()) {
    throw ContractError("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(samples.size()) + " samples");
  }
  Metrics m;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool actual = samples[i].label == Label::Preictal;
    const bool predicted = predictions[i] == static_cast<int>(Label::Preictal);
    if (actual) {
      predicted ? ++m.tp : ++m.fn;
    } else {
      predicted ? ++m.fp : ++m.tn;
    }
  }
  const std::size_t n = m.total();
  m.accuracy = n == 0 ? 0.0 : static_cast<double>(m.tp + m.tn) / static_cast<double>(n);
  if (m.tp + m.fn > 0) m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.interictal_hours = static_cast<double>(m.fp + m.tn) * window_s / 3600.0;
  m.fpr_per_hour = m.interictal_hours > 0.0 ? static_cast<double>(m.fp) / m.interictal_hours : 0.0;
  return m;
}

}  // namespace dbkd
