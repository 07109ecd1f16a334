#pragma once

#include <map>
#include <span>
#include <string>

#include "dbkd/model.hpp"
#include "dbkd/tensor.hpp"

namespace dbkd {

enum class DivergenceKind { MSE, Logistic, KL };

std::string to_string(DivergenceKind kind);
DivergenceKind parse_divergence(const std::string& name);

enum class Role { Pool, Cus };

std::string to_string(Role role);
Role parse_role(const std::string& name);

// Per-tap weight of the feature-difference term, keyed by tap name.
using FeatureLossWeights = std::map<std::string, double>;

// Uniform weights 1/n over the config's taps.
FeatureLossWeights uniform_feature_weights(const ModelConfig& config);

// Probabilities are clamped into [kProbEpsilon, 1 - kProbEpsilon] before any log.
inline constexpr double kProbEpsilon = 1e-7;

// Row-wise exp(z/T) / sum exp(z/T); [B x M] -> [B x M].
Var softmax_temperature(Var logits, double temperature);

// Mean over rows of -log p[row, label]. Labels are 0-based class ids.
Var cross_entropy(Var probs, std::span<const int> labels);

// Mean over rows of the per-row divergence D(p || q). `p` is the target side.
//   MSE:      sum_m (p_m - q_m)^2
//   Logistic: sum_m p_m ln(p_m/q_m) + (1-p_m) ln((1-p_m)/(1-q_m))
//   KL:       sum_m p_m ln(p_m/q_m)
Var bregman_divergence(Var p, Var q, DivergenceKind kind);

// sum_i alpha_i * ||a_i - b_i||^2, averaged over the batch rows. Every tap in
// `a` must have a same-named, same-shaped partner in `b` and a weight entry.
Var feature_difference(const Taps& a, const Taps& b, const FeatureLossWeights& weights);

struct JointLossOptions {
  double temperature = 4.0;
  DivergenceKind divergence = DivergenceKind::KL;
  FeatureLossWeights feature_weights;  // empty = uniform over taps
  double dif_weight = 1.0;
  double div_weight = 1.0;
  // Multiply the divergence term by T^2 (off by default).
  bool temperature_squared = false;
};

struct JointLoss {
  Var total;
  double pred = 0.0;
  double dif = 0.0;
  double div = 0.0;
};

// L_role = L_pred(own) + w_dif * L_dif(own, other) + w_div * D(p_other || p_own).
// `other` may live on a different tape; its logits and taps are copied onto
// own's tape as constants, so gradients reach only the own model.
JointLoss joint_loss(Role role, const ForwardResult& own, const ForwardResult& other, std::span<const int> labels,
                     const JointLossOptions& opts);

}  // namespace dbkd
