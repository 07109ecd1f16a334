#include <algorithm>
#include <cmath>

#include "dbkd/data.hpp"
#include "dbkd/errors.hpp"

namespace dbkd {

void Recording::validate() const {
  if (!(fs > 0.0)) throw DataError("recording: sample rate must be positive");
  if (channels == 0 || samples.size() % channels != 0) throw DataError("recording: bad channel layout");
  const double dur = duration_s();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!(e.onset_s >= 0.0 && e.onset_s < e.offset_s && e.offset_s <= dur)) {
      throw DataError("recording " + std::to_string(subject_id) + ": event " + std::to_string(i) +
                      " outside recording or empty");
    }
    if (i > 0 && e.onset_s < events[i - 1].offset_s) {
      throw DataError("recording " + std::to_string(subject_id) + ": events unsorted or overlapping at " +
                      std::to_string(i));
    }
  }
}

void TimelineParams::validate() const {
  if (!(sph_s > 0 && pil_s > 0 && lead_gap_s > 0 && interictal_guard_s > 0 && window_s > 0)) {
    throw ConfigError("timeline durations must be positive");
  }
  if (!(preictal_overlap >= 0.0 && preictal_overlap < 1.0)) {
    throw ConfigError("preictal overlap must lie in [0, 1)");
  }
}

std::vector<std::size_t> lead_seizures(const Recording& rec, const TimelineParams& p) {
  std::vector<std::size_t> leads;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const double free_since = i == 0 ? 0.0 : rec.events[i - 1].offset_s;
    if (rec.events[i].onset_s - free_since >= p.lead_gap_s) leads.push_back(i);
  }
  return leads;
}

std::vector<LabeledInterval> label_timeline(const Recording& rec, const TimelineParams& p) {
  const auto& ev = rec.events;
  const double dur = rec.duration_s();
  const double lookback = p.pil_s + p.sph_s;
  std::vector<LabeledInterval> out;

  for (std::size_t i : lead_seizures(rec, p)) {
    const double floor_s = i == 0 ? 0.0 : ev[i - 1].offset_s + p.interictal_guard_s;
    const double start = std::max(ev[i].onset_s - lookback, floor_s);
    const double end = std::min(ev[i].onset_s - p.sph_s, dur);
    if (end > start) out.push_back({start, end, Label::Preictal});
  }
  for (std::size_t k = 0; k <= ev.size(); ++k) {
    const double start = k == 0 ? 0.0 : ev[k - 1].offset_s + p.interictal_guard_s;
    const double end = k == ev.size() ? dur : ev[k].onset_s - lookback;
    if (std::min(end, dur) > std::max(start, 0.0)) {
      out.push_back({std::max(start, 0.0), std::min(end, dur), Label::Interictal});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  return out;
}

bool meets_inclusion(const Recording& rec, const TimelineParams& p, std::size_t min_lead, double min_preictal_s) {
  if (lead_seizures(rec, p).size() < min_lead) return false;
  double total = 0.0;
  for (const auto& iv : label_timeline(rec, p))
    if (iv.label == Label::Preictal) total += iv.length_s();
  return total >= min_preictal_s;
}

std::size_t window_count(double length_s, double window_s, double stride_s) {
  if (length_s < window_s) return 0;
  return static_cast<std::size_t>(std::floor((length_s - window_s) / stride_s + 1e-9)) + 1;
}

WindowedSample normalize(WindowedSample s) {
  if (s.window.size() != s.channels * s.length || s.length == 0) {
    throw DimensionError("normalize: window size does not match channels x length");
  }
  for (std::size_t c = 0; c < s.channels; ++c) {
    double* row = &s.window[c * s.length];
    double mean = 0.0;
    for (std::size_t i = 0; i < s.length; ++i) mean += row[i];
    mean /= static_cast<double>(s.length);
    double var = 0.0;
    for (std::size_t i = 0; i < s.length; ++i) var += (row[i] - mean) * (row[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(s.length));
    if (!(sd > 1e-12)) {
      throw DataError("normalize: channel " + std::to_string(c) + " is constant (subject " +
                      std::to_string(s.subject_id) + ", t=" + std::to_string(s.start_s) + " s)");
    }
    for (std::size_t i = 0; i < s.length; ++i) row[i] = (row[i] - mean) / sd;
  }
  return s;
}

std::vector<WindowedSample> segment_windows(const Recording& rec, std::span<const LabeledInterval> intervals,
                                            const TimelineParams& p) {
  p.validate();
  const std::size_t n = rec.length();
  const auto win = static_cast<std::size_t>(std::llround(p.window_s * rec.fs));
  std::vector<WindowedSample> out;
  for (const auto& iv : intervals) {
    const double stride_s = iv.label == Label::Preictal ? p.preictal_stride_s() : p.window_s;
    const auto stride = static_cast<std::size_t>(std::llround(stride_s * rec.fs));
    if (win == 0 || stride == 0) throw ConfigError("window or stride shorter than one sample");
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(iv.start_s * rec.fs - 1e-9)));
    const auto last = std::min(n, static_cast<std::size_t>(std::max(0.0, std::floor(iv.end_s * rec.fs + 1e-9))));
    for (std::size_t s0 = first; s0 + win <= last; s0 += stride) {
      WindowedSample w;
      w.channels = rec.channels;
      w.length = win;
      w.label = iv.label;
      w.subject_id = rec.subject_id;
      w.start_s = static_cast<double>(s0) / rec.fs;
      w.window.resize(rec.channels * win);
      for (std::size_t c = 0; c < rec.channels; ++c) {
        const float* src = &rec.samples[c * n + s0];
        std::copy(src, src + win, w.window.begin() + static_cast<std::ptrdiff_t>(c * win));
      }
      out.push_back(normalize(std::move(w)));
    }
  }
  return out;
}

std::vector<WindowedSample> windows_for(const Recording& rec, const TimelineParams& p) {
  const auto intervals = label_timeline(rec, p);
  return segment_windows(rec, intervals, p);
}

Tensor stack_windows(std::span<const WindowedSample* const> samples) {
  if (samples.empty()) throw DataError("cannot stack an empty sample list");
  const std::size_t c = samples.front()->channels, l = samples.front()->length;
  std::vector<double> data;
  data.reserve(samples.size() * c * l);
  for (const WindowedSample* s : samples) {
    if (s->channels != c || s->length != l) throw DimensionError("windows of differing shapes in one batch");
    data.insert(data.end(), s->window.begin(), s->window.end());
  }
  return Tensor({samples.size(), c, l}, std::move(data));
}

Tensor stack_windows(std::span<const WindowedSample> samples) {
  std::vector<const WindowedSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return stack_windows(std::span<const WindowedSample* const>(ptrs));
}

}  // namespace dbkd
