#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dbkd/tensor.hpp"

namespace dbkd {

struct SeizureEvent {
  double onset_s = 0.0;
  double offset_s = 0.0;

  friend bool operator==(const SeizureEvent&, const SeizureEvent&) = default;
};

// One continuous multichannel recording. samples is channel-major [C x N].
struct Recording {
  std::uint32_t subject_id = 0;
  double fs = 0.0;
  std::size_t channels = 0;
  std::vector<float> samples;
  std::vector<SeizureEvent> events;

  std::size_t length() const { return channels == 0 ? 0 : samples.size() / channels; }
  double duration_s() const { return static_cast<double>(length()) / fs; }
  // Throws DataError unless events are sorted, non-overlapping and inside the recording.
  void validate() const;
};

enum class Label : std::uint8_t { Interictal = 0, Preictal = 1 };

struct WindowedSample {
  std::vector<double> window;  // [channels x length], channel-major
  std::size_t channels = 0;
  std::size_t length = 0;
  Label label = Label::Interictal;
  std::uint32_t subject_id = 0;
  double start_s = 0.0;

  int class_id() const { return static_cast<int>(label); }

  friend bool operator==(const WindowedSample&, const WindowedSample&) = default;
};

// Timeline durations in seconds. Defaults are the clinical protocol values;
// synthetic cohorts may compress them.
struct TimelineParams {
  double sph_s = 300.0;
  double pil_s = 1800.0;
  double lead_gap_s = 14400.0;
  double interictal_guard_s = 1800.0;
  double window_s = 20.0;
  double preictal_overlap = 0.25;

  void validate() const;
  double preictal_stride_s() const { return window_s * (1.0 - preictal_overlap); }
};

struct LabeledInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  Label label = Label::Interictal;

  double length_s() const { return end_s - start_s; }
  friend bool operator==(const LabeledInterval&, const LabeledInterval&) = default;
};

// Indices of events preceded by at least lead_gap_s seizure-free time. The
// recording start counts as seizure-free.
std::vector<std::size_t> lead_seizures(const Recording& rec, const TimelineParams& p);

// Preictal [o - pil - sph, o - sph] per lead onset o; interictal
// [offset + guard, next_onset - pil - sph] between events (plus the head and
// tail of the recording). Intervals are clipped and empty ones dropped.
// Returned sorted by start.
std::vector<LabeledInterval> label_timeline(const Recording& rec, const TimelineParams& p);

// Subject inclusion rule: at least `min_lead` lead seizures and at least
// `min_preictal_s` seconds of preictal time in total.
bool meets_inclusion(const Recording& rec, const TimelineParams& p, std::size_t min_lead = 2,
                     double min_preictal_s = 3600.0);

// Number of windows of `window_s` with stride `stride_s` fitting in `length_s`.
std::size_t window_count(double length_s, double window_s, double stride_s);

// Slides windows over every interval (non-overlapping for interictal, with
// preictal_overlap for preictal) and normalizes each window.
std::vector<WindowedSample> segment_windows(const Recording& rec, std::span<const LabeledInterval> intervals,
                                            const TimelineParams& p);

// Per-channel (x - mean) / std with population std. Throws DataError on a
// channel whose std is <= 1e-12.
WindowedSample normalize(WindowedSample sample);

// Stacks samples into a [B x C x L] tensor.
Tensor stack_windows(std::span<const WindowedSample> samples);
Tensor stack_windows(std::span<const WindowedSample* const> samples);

// ---------------------------------------------------------------------------
// Synthetic cohort

struct Mechanism {
  std::string name;
  double freq_hz = 0.0;
  double amplitude = 0.0;  // 0 = null mechanism (noise only)
  double burst_s = 3.0;    // mean burst length
  double duty = 0.5;       // fraction of preictal time covered by bursts
};

struct SyntheticSpec {
  std::size_t subjects = 10;
  double fs = 64.0;
  std::size_t channels = 8;
  std::vector<Mechanism> mechanisms;
  // [subjects x mechanisms]; empty = subject k puts 0.5 on mechanism
  // k % M and spreads the other 0.5 evenly over all M.
  std::vector<std::vector<double>> mixture;
  // [subjects][channels x mechanisms]; empty = drawn from the seed as a
  // cohort-wide matrix plus uniform(-spread, spread) per subject.
  std::vector<std::vector<double>> mixing;
  double mixing_spread = 0.3;
  double noise_sigma = 1.0;
  // Lead seizures planted per subject.
  std::size_t seizures = 3;
  double seizure_s = 60.0;
  // Extra seizure-free time beyond the lead gap before each seizure.
  double gap_jitter_s = 0.0;
  // Trailing seizure-free time after the last seizure.
  double tail_s = 0.0;
  // 0 = derived from the event layout; otherwise must fit every event.
  double duration_s = 0.0;
  TimelineParams timeline;
  std::uint64_t seed = 1;

  void validate() const;
};

std::vector<Recording> generate_cohort(const SyntheticSpec& spec);

// Labels, segments and normalizes one recording.
std::vector<WindowedSample> windows_for(const Recording& rec, const TimelineParams& p);

// ---------------------------------------------------------------------------
// Dataset file: "DBDS" | u16 version | u32 count | records | u32 CRC32 of all
// preceding bytes. Record: u8 label, u32 subject, f64 start, u32 C, u32 L,
// f64 payload[C*L].

std::string encode_dataset(std::span<const WindowedSample> samples);
std::vector<WindowedSample> decode_dataset(std::span<const char> bytes);
void write_dataset(const std::filesystem::path& path, std::span<const WindowedSample> samples);
std::vector<WindowedSample> read_dataset(const std::filesystem::path& path);

}  // namespace dbkd
