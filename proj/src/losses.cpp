#include "dbkd/losses.hpp"

#include "dbkd/errors.hpp"

namespace dbkd {

std::string to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::MSE: return "mse";
    case DivergenceKind::Logistic: return "logistic";
    case DivergenceKind::KL: return "kl";
  }
  throw ParameterError("unknown divergence kind");
}

DivergenceKind parse_divergence(const std::string& name) {
  if (name == "mse") return DivergenceKind::MSE;
  if (name == "logistic") return DivergenceKind::Logistic;
  if (name == "kl") return DivergenceKind::KL;
  throw ParameterError("unknown divergence '" + name + "' (expected mse, kl or logistic)");
}

std::string to_string(Role role) { return role == Role::Pool ? "pool" : "cus"; }

Role parse_role(const std::string& name) {
  if (name == "pool") return Role::Pool;
  if (name == "cus") return Role::Cus;
  throw ParameterError("unknown role '" + name + "' (expected pool or cus)");
}

FeatureLossWeights uniform_feature_weights(const ModelConfig& config) {
  FeatureLossWeights w;
  const auto names = config.tap_names();
  for (const auto& n : names) w[n] = 1.0 / static_cast<double>(names.size());
  return w;
}

Var softmax_temperature(Var logits, double temperature) { return softmax_rows(logits, temperature); }

Var cross_entropy(Var probs, std::span<const int> labels) {
  Var picked = clamp(pick(probs, labels), kProbEpsilon, 1.0 - kProbEpsilon);
  return scale(mean(log(picked)), -1.0);
}

Var bregman_divergence(Var p, Var q, DivergenceKind kind) {
  if (p.shape() != q.shape() || p.shape().size() != 2) {
    throw DimensionError("divergence needs matching [B x M] inputs, got " + to_string(p.shape()) + " and " +
                         to_string(q.shape()));
  }
  const double rows = static_cast<double>(p.shape()[0]);
  Var per_entry;
  switch (kind) {
    case DivergenceKind::MSE:
      per_entry = square(sub(p, q));
      break;
    case DivergenceKind::KL: {
      Var pc = clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
      Var qc = clamp(q, kProbEpsilon, 1.0 - kProbEpsilon);
      per_entry = mul(pc, sub(log(pc), log(qc)));
      break;
    }
    case DivergenceKind::Logistic: {
      Var pc = clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
      Var qc = clamp(q, kProbEpsilon, 1.0 - kProbEpsilon);
      Var pn = affine(pc, -1.0, 1.0);
      Var qn = affine(qc, -1.0, 1.0);
      per_entry = add(mul(pc, sub(log(pc), log(qc))), mul(pn, sub(log(pn), log(qn))));
      break;
    }
    default:
      throw ParameterError("unknown divergence kind");
  }
  return scale(sum(per_entry), 1.0 / rows);
}

Var feature_difference(const Taps& a, const Taps& b, const FeatureLossWeights& weights) {
  if (a.size() != b.size()) {
    throw ContractError("feature taps differ in count: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (weights.size() != a.size()) {
    throw ContractError("feature weights name " + std::to_string(weights.size()) + " taps, model has " +
                        std::to_string(a.size()));
  }
  if (a.empty()) throw ContractError("feature difference needs at least one tap");
  Tape& tape = *a.front().second.tape();
  Var total = tape.constant({1}, {0.0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& [name_a, za] = a[i];
    const auto& [name_b, zb] = b[i];
    if (name_a != name_b || za.shape() != zb.shape()) {
      throw ContractError("tap mismatch: " + name_a + to_string(za.shape()) + " vs " + name_b +
                          to_string(zb.shape()));
    }
    const auto w = weights.find(name_a);
    if (w == weights.end()) throw ContractError("no feature weight for tap '" + name_a + "'");
    if (w->second < 0.0) throw ParameterError("negative feature weight for tap '" + name_a + "'");
    if (w->second == 0.0) continue;
    const double rows = static_cast<double>(za.shape()[0]);
    total = add(total, scale(sum(square(sub(za, zb))), w->second / rows));
  }
  return total;
}

JointLoss joint_loss(Role role, const ForwardResult& own, const ForwardResult& other, std::span<const int> labels,
                     const JointLossOptions& opts) {
  Tape& tape = *own.logits.tape();
  if (own.logits.shape() != other.logits.shape()) {
    throw ContractError(to_string(role) + " joint loss: logits " + to_string(own.logits.shape()) + " vs " +
                        to_string(other.logits.shape()));
  }
  JointLoss out;
  Var pred = cross_entropy(softmax_temperature(own.logits, 1.0), labels);
  out.pred = pred.item();
  Var total = pred;

  if (opts.dif_weight != 0.0) {
    Taps fixed;
    for (const auto& [name, v] : other.taps) fixed.emplace_back(name, detach(v, tape));
    const FeatureLossWeights& w = opts.feature_weights;
    Var dif;
    if (w.empty()) {
      FeatureLossWeights uniform;
      for (const auto& [name, v] : own.taps) uniform[name] = 1.0 / static_cast<double>(own.taps.size());
      dif = feature_difference(own.taps, fixed, uniform);
    } else {
      dif = feature_difference(own.taps, fixed, w);
    }
    out.dif = dif.item();
    total = add(total, scale(dif, opts.dif_weight));
  }

  if (opts.div_weight != 0.0) {
    Var own_soft = softmax_temperature(own.logits, opts.temperature);
    Var other_soft = softmax_temperature(detach(other.logits, tape), opts.temperature);
    Var div = bregman_divergence(other_soft, own_soft, opts.divergence);
    out.div = div.item();
    double w = opts.div_weight;
    if (opts.temperature_squared) w *= opts.temperature * opts.temperature;
    total = add(total, scale(div, w));
  }
  out.total = total;
  return out;
}

}  // namespace dbkd
