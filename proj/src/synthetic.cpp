#include <algorithm>
#include <cmath>
#include <numbers>

#include "dbkd/data.hpp"
#include "dbkd/errors.hpp"
#include "dbkd/random.hpp"

namespace dbkd {

void SyntheticSpec::validate() const {
  if (subjects == 0) throw ConfigError("cohort: need at least one subject");
  if (!(fs > 0.0) || channels == 0) throw ConfigError("cohort: fs and channels must be positive");
  if (mechanisms.empty()) throw ConfigError("cohort: no mechanisms declared");
  for (const auto& m : mechanisms) {
    if (m.amplitude < 0.0 || m.freq_hz < 0.0 || m.freq_hz >= fs / 2.0) {
      throw ConfigError("cohort: mechanism '" + m.name + "' needs 0 <= freq < fs/2 and amplitude >= 0");
    }
    if (!(m.burst_s > 0.0) || !(m.duty > 0.0 && m.duty <= 1.0)) {
      throw ConfigError("cohort: mechanism '" + m.name + "' needs burst_s > 0 and duty in (0, 1]");
    }
  }
  if (!mixture.empty()) {
    if (mixture.size() != subjects) throw ConfigError("cohort: mixture needs one row per subject");
    for (const auto& row : mixture) {
      if (row.size() != mechanisms.size()) throw ConfigError("cohort: mixture row length != mechanism count");
      double total = 0.0;
      for (double w : row) {
        if (w < 0.0) throw ConfigError("cohort: negative mixture weight");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ConfigError("cohort: mixture weights must sum to 1");
    }
  }
  if (!mixing.empty()) {
    if (mixing.size() != subjects) throw ConfigError("cohort: mixing needs one matrix per subject");
    for (const auto& m : mixing)
      if (m.size() != channels * mechanisms.size()) throw ConfigError("cohort: mixing matrix must be channels x mechanisms");
  }
  if (!(noise_sigma > 0.0)) throw ConfigError("cohort: noise sigma must be positive");
  if (!(mixing_spread >= 0.0)) throw ConfigError("cohort: mixing spread must be nonnegative");
  if (seizures == 0 || !(seizure_s > 0.0)) throw ConfigError("cohort: need seizures with positive duration");
  if (gap_jitter_s < 0.0 || tail_s < 0.0 || duration_s < 0.0) throw ConfigError("cohort: negative duration knob");
  timeline.validate();
}

namespace {

// Adds Hann-windowed sinusoid bursts of `mech` into `src` over [t0, t1).
void add_bursts(std::vector<double>& src, double fs, double t0, double t1, const Mechanism& mech, double gain,
                Rng& rng) {
  if (mech.amplitude == 0.0 || gain == 0.0) return;
  const double mean_gap = mech.burst_s * (1.0 - mech.duty) / mech.duty;
  double t = t0 + rng.uniform() * mean_gap;
  while (t < t1) {
    const double len = mech.burst_s * rng.uniform(0.5, 1.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto i0 = static_cast<std::size_t>(std::max(0.0, t * fs));
    const auto i1 = static_cast<std::size_t>(std::min(t1, t + len) * fs);
    const double span = static_cast<double>(std::max<std::size_t>(i1 - std::min(i0, i1), 1));
    for (std::size_t i = i0; i < i1 && i < src.size(); ++i) {
      const double u = static_cast<double>(i - i0) / span;
      const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
      src[i] += gain * mech.amplitude * env *
                std::sin(2.0 * std::numbers::pi * mech.freq_hz * static_cast<double>(i) / fs + phase);
    }
    t += len + mean_gap * rng.uniform(0.5, 1.5);
  }
}

Recording generate_subject(const SyntheticSpec& spec, std::size_t k) {
  Rng rng(derive_seed(spec.seed, k));
  const TimelineParams& p = spec.timeline;
  const std::size_t nm = spec.mechanisms.size();

  Recording rec;
  rec.subject_id = static_cast<std::uint32_t>(k);
  rec.fs = spec.fs;
  rec.channels = spec.channels;

  double free_since = 0.0;
  for (std::size_t j = 0; j < spec.seizures; ++j) {
    const double onset = free_since + p.lead_gap_s + rng.uniform() * spec.gap_jitter_s;
    rec.events.push_back({onset, onset + spec.seizure_s});
    free_since = onset + spec.seizure_s;
  }
  const double needed = free_since + spec.tail_s;
  double duration = spec.duration_s > 0.0 ? spec.duration_s : needed;
  if (duration < needed) {
    throw ConfigError("cohort: duration " + std::to_string(spec.duration_s) + " s cannot hold " +
                      std::to_string(spec.seizures) + " lead seizures (needs " + std::to_string(needed) + " s)");
  }
  const auto n = static_cast<std::size_t>(std::ceil(duration * spec.fs));

  std::vector<double> weights(nm, 0.0);
  if (!spec.mixture.empty()) {
    weights = spec.mixture[k];
  } else {
    // every mechanism present, one dominant per subject
    for (double& w : weights) w = 0.5 / static_cast<double>(nm);
    weights[k % nm] += 0.5;
  }
  std::vector<double> mixing(spec.channels * nm);
  if (!spec.mixing.empty()) {
    mixing = spec.mixing[k];
  } else {
    // Shared projection across the cohort plus a per-subject perturbation.
    Rng shared(derive_seed(spec.seed, 0x5ea5ed));
    for (double& m : mixing) m = shared.uniform(-1.0, 1.0) + spec.mixing_spread * rng.uniform(-1.0, 1.0);
    // unit RMS gain per mechanism across channels
    for (std::size_t m = 0; m < nm; ++m) {
      double ss = 0.0;
      for (std::size_t c = 0; c < spec.channels; ++c) ss += mixing[c * nm + m] * mixing[c * nm + m];
      const double rms = std::sqrt(ss / static_cast<double>(spec.channels));
      if (rms > 0.0)
        for (std::size_t c = 0; c < spec.channels; ++c) mixing[c * nm + m] /= rms;
    }
  }

  // Mechanism sources active only in the run-up to each seizure.
  std::vector<std::vector<double>> sources(nm, std::vector<double>(n, 0.0));
  for (const auto& e : rec.events) {
    const double t0 = std::max(0.0, e.onset_s - p.pil_s - p.sph_s);
    for (std::size_t m = 0; m < nm; ++m) add_bursts(sources[m], spec.fs, t0, e.onset_s, spec.mechanisms[m], std::sqrt(weights[m]), rng);
  }

  rec.samples.assign(spec.channels * n, 0.0f);
  const double ar = 0.9;
  const double innov = spec.noise_sigma * std::sqrt(1.0 - ar * ar);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    double state = rng.normal() * spec.noise_sigma;
    for (std::size_t i = 0; i < n; ++i) {
      state = ar * state + innov * rng.normal();
      double v = state;
      for (std::size_t m = 0; m < nm; ++m) v += mixing[c * nm + m] * sources[m][i];
      rec.samples[c * n + i] = static_cast<float>(v);
    }
  }
  // Ictal discharge: high-amplitude 3 Hz spike-wave on every channel.
  for (const auto& e : rec.events) {
    const auto i0 = static_cast<std::size_t>(e.onset_s * spec.fs);
    const auto i1 = std::min(n, static_cast<std::size_t>(e.offset_s * spec.fs));
    for (std::size_t c = 0; c < spec.channels; ++c)
      for (std::size_t i = i0; i < i1; ++i) {
        const double ph = std::fmod(3.0 * static_cast<double>(i) / spec.fs, 1.0);
        rec.samples[c * n + i] += static_cast<float>(5.0 * spec.noise_sigma * (ph < 0.15 ? 1.0 : -0.2));
      }
  }
  rec.validate();
  return rec;
}

}  // namespace

std::vector<Recording> generate_cohort(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Recording> cohort;
  cohort.reserve(spec.subjects);
  for (std::size_t k = 0; k < spec.subjects; ++k) cohort.push_back(generate_subject(spec, k));
  return cohort;
}

}  // namespace dbkd
