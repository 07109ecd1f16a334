#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "dbkd/data.hpp"

namespace dbkd {

// Window-level scores with preictal as the positive class.
struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  // Absent when the set has no preictal windows.
  std::optional<double> sensitivity;
  double fpr_per_hour = 0.0;
  double interictal_hours = 0.0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

// Predictions are class ids aligned with `samples`. Interictal windows tile
// without overlap, so interictal time is (interictal count) * window_s.
Metrics compute_metrics(std::span<const int> predictions, std::span<const WindowedSample> samples,
                        double window_s);

}  // namespace dbkd
