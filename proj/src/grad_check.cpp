#include "dbkd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace dbkd {

namespace {

struct Eval {
  double value;
  double relu_margin;
};

Eval evaluate(const LossBuilder& f) {
  Tape tape;
  Var loss = f(tape);
  return {loss.item(), tape.relu_margin()};
}

}  // namespace

double grad_check(const LossBuilder& f, const std::vector<Tensor*>& params, const GradCheckOptions& opts) {
  std::mt19937_64 nudge_rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);

  // Move off relu kinks first; the step must not straddle one either.
  const double margin = std::max(opts.kink_margin, 10.0 * opts.step);
  for (int attempt = 0; attempt < opts.max_nudges && evaluate(f).relu_margin < margin; ++attempt) {
    for (Tensor* p : params)
      for (double& v : p->data) v += jitter(nudge_rng);
  }

  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }

  double worst = 0.0;
  for (Tensor* p : params) {
    const std::vector<double> analytic = *p->grad;
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + opts.step;
      const double up = evaluate(f).value;
      p->data[i] = orig - opts.step;
      const double down = evaluate(f).value;
      p->data[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

double grad_check(const ScalarFn& f, Tensor x, const GradCheckOptions& opts) {
  x.requires_grad = true;
  return grad_check([&](Tape& tape) { return f(tape, tape.parameter(x)); }, {&x}, opts);
}

}  // namespace dbkd
