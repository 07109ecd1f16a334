#pragma once

#include <functional>
#include <vector>

#include "dbkd/tensor.hpp"

namespace dbkd {

// Builds a scalar loss on a fresh tape. Parameters must be bound with
// tape.parameter() so backward() can reach them.
using LossBuilder = std::function<Var(Tape&)>;
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Points whose relu pre-activations come closer to 0 than this are
  // rejected and the inputs nudged; finite differences across a kink are
  // meaningless.
  double kink_margin = 1e-6;
  int max_nudges = 16;
};

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// using central differences on every entry of every tensor in `params`.
// The tensors are restored afterwards (unless a nudge was needed, in which case
// they keep the nudged values). Never throws on mismatch; it reports.
double grad_check(const LossBuilder& f, const std::vector<Tensor*>& params,
                  const GradCheckOptions& opts = {});

// Convenience form for a function of a single tensor.
double grad_check(const ScalarFn& f, Tensor x, const GradCheckOptions& opts = {});

}  // namespace dbkd
