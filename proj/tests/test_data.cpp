#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dbkd/data.hpp"
#include "dbkd/errors.hpp"
#include "dbkd/model.hpp"
#include "dbkd/random.hpp"
#include "dbkd/trainer.hpp"
#include "oracles.hpp"

using namespace dbkd;
namespace fs = std::filesystem;

namespace {

Recording blank(double duration_s, std::vector<SeizureEvent> events, double fs = 1.0, std::uint64_t seed = 1) {
  Recording r;
  r.fs = fs;
  r.channels = 1;
  r.samples.resize(static_cast<std::size_t>(duration_s * fs));
  Rng rng(seed);
  for (float& v : r.samples) v = static_cast<float>(rng.normal());
  r.events = std::move(events);
  return r;
}

std::vector<double> starts(const std::vector<WindowedSample>& w) {
  std::vector<double> s;
  for (const auto& x : w) s.push_back(x.start_s);
  return s;
}

WindowedSample sample(std::vector<double> v, std::size_t channels, Label label = Label::Interictal) {
  WindowedSample s;
  s.channels = channels;
  s.length = v.size() / channels;
  s.window = std::move(v);
  s.label = label;
  return s;
}

TimelineParams compact() {
  TimelineParams p;
  p.sph_s = 3;
  p.pil_s = 20;
  p.lead_gap_s = 60;
  p.interictal_guard_s = 10;
  p.window_s = 5;
  p.preictal_overlap = 0.4;
  return p;
}

SyntheticSpec small_cohort() {
  SyntheticSpec s;
  s.subjects = 2;
  s.fs = 16;
  s.channels = 2;
  s.mechanisms = {{"a", 3.0, 1.0, 3.0, 0.5}};
  s.seizures = 2;
  s.tail_s = 100;
  s.timeline.sph_s = 60;
  s.timeline.pil_s = 300;
  s.timeline.lead_gap_s = 900;
  s.timeline.interictal_guard_s = 60;
  s.seed = 5;
  return s;
}

}  // namespace

TEST(Timeline, NonLeadSeizureHasNoPreictal) {
  const auto iv = label_timeline(blank(12000, {{10000, 10100}}), {});
  for (const auto& i : iv) EXPECT_NE(i.label, Label::Preictal);
}

TEST(Timeline, LeadSeizurePreictalInterval) {
  const auto iv = label_timeline(blank(20100, {{20000, 20100}}), {});
  std::vector<LabeledInterval> pre;
  for (const auto& i : iv)
    if (i.label == Label::Preictal) pre.push_back(i);
  ASSERT_EQ(pre.size(), 1u);
  EXPECT_EQ(pre[0].start_s, 17900);
  EXPECT_EQ(pre[0].end_s, 19700);
}

TEST(Timeline, InterictalBetweenSeizures) {
  const Recording rec = blank(20100, {{0, 100}, {20000, 20100}});
  EXPECT_EQ(lead_seizures(rec, {}), (std::vector<std::size_t>{1}));
  const auto iv = label_timeline(rec, {});
  ASSERT_EQ(iv.size(), 2u);
  EXPECT_EQ(iv[0], (LabeledInterval{1900, 17900, Label::Interictal}));
  EXPECT_EQ(iv[1], (LabeledInterval{17900, 19700, Label::Preictal}));
}

TEST(Timeline, MatchesPerSecondOracleOnRandomTimelines) {
  const TimelineParams p = compact();
  Rng rng(2023);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<SeizureEvent> ev;
    double t = static_cast<double>(rng.index(80));
    const std::size_t n = rng.index(5);
    for (std::size_t i = 0; i < n; ++i) {
      const double on = t + static_cast<double>(rng.index(120));
      const double off = on + 1 + static_cast<double>(rng.index(15));
      ev.push_back({on, off});
      t = off;
    }
    const double dur = t + static_cast<double>(rng.index(100)) + 1;
    const Recording rec = blank(dur, ev, 1.0, static_cast<std::uint64_t>(rep));
    const auto want = oracle::second_labels(ev, dur, p);
    std::vector<int> got(want.size(), -1);
    for (const auto& iv : label_timeline(rec, p)) {
      for (auto s = static_cast<std::size_t>(iv.start_s); s < static_cast<std::size_t>(iv.end_s); ++s) {
        ASSERT_EQ(got[s], -1) << "overlapping intervals at " << s;
        got[s] = static_cast<int>(iv.label);
      }
    }
    ASSERT_EQ(got, want) << "timeline " << rep;
    // Every window lies entirely inside seconds carrying its label.
    for (const auto& w : windows_for(rec, p)) {
      for (auto s = static_cast<std::size_t>(w.start_s); s < static_cast<std::size_t>(w.start_s + p.window_s); ++s) {
        ASSERT_EQ(want[s], w.class_id()) << "timeline " << rep << " window at " << w.start_s;
      }
    }
  }
}

TEST(Windowing, Examples) {
  TimelineParams p;
  const Recording rec = blank(100, {});
  const LabeledInterval inter{0, 60, Label::Interictal}, pre{0, 60, Label::Preictal}, short_iv{0, 19, Label::Interictal};
  EXPECT_EQ(starts(segment_windows(rec, std::vector{inter}, p)), (std::vector<double>{0, 20, 40}));
  EXPECT_EQ(starts(segment_windows(rec, std::vector{pre}, p)), (std::vector<double>{0, 15, 30}));
  EXPECT_TRUE(segment_windows(rec, std::vector{short_iv}, p).empty());
  EXPECT_EQ(window_count(60, 20, 15), 3u);
  EXPECT_EQ(window_count(60, 20, 20), 3u);
  EXPECT_EQ(window_count(19, 20, 20), 0u);
}

TEST(Windowing, CountsMatchClosedFormForAllLengths) {
  const TimelineParams p;
  const Recording rec = blank(600, {});
  for (int len = 0; len <= 500; ++len) {
    const double l = len;
    const std::size_t inter = l < 20 ? 0 : static_cast<std::size_t>(std::floor((l - 20) / 20)) + 1;
    const std::size_t pre = l < 20 ? 0 : static_cast<std::size_t>(std::floor((l - 20) / 15)) + 1;
    EXPECT_EQ(segment_windows(rec, std::vector{LabeledInterval{50, 50 + l, Label::Interictal}}, p).size(), inter) << len;
    EXPECT_EQ(segment_windows(rec, std::vector{LabeledInterval{50, 50 + l, Label::Preictal}}, p).size(), pre) << len;
  }
}

TEST(Normalize, Examples) {
  EXPECT_THROW(normalize(sample({1, 1, 1}, 1)), DataError);
  const auto n = normalize(sample({0, 2}, 1));
  EXPECT_EQ(n.window, (std::vector<double>{-1, 1}));
  const auto twice = normalize(normalize(sample({0.3, 2.0, -1.0, 4.0, 5.0, 5.5}, 2)));
  const auto once = normalize(sample({0.3, 2.0, -1.0, 4.0, 5.0, 5.5}, 2));
  for (std::size_t i = 0; i < once.window.size(); ++i) EXPECT_NEAR(twice.window[i], once.window[i], 1e-12);
}

TEST(Normalize, PerChannelZeroMeanUnitStd) {
  Rng rng(4);
  std::vector<double> v(3 * 50);
  for (double& x : v) x = 5.0 + 3.0 * rng.normal();
  const auto n = normalize(sample(v, 3));
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, s = 0;
    for (std::size_t i = 0; i < 50; ++i) m += n.window[c * 50 + i];
    m /= 50;
    for (std::size_t i = 0; i < 50; ++i) s += (n.window[c * 50 + i] - m) * (n.window[c * 50 + i] - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(s / 50), 1.0, 1e-9);
  }
}

TEST(Inclusion, NeedsTwoLeadSeizuresAndAnHourOfPreictal) {
  EXPECT_FALSE(meets_inclusion(blank(20100, {{20000, 20100}}), {}));
  const Recording two = blank(40000, {{20000, 20100}, {39000, 39100}});
  EXPECT_TRUE(meets_inclusion(two, {}));
  EXPECT_FALSE(meets_inclusion(two, {}, 2, 4000));
}

TEST(Dataset, RoundTripIsBitExact) {
  const auto cohort = generate_cohort(small_cohort());
  const auto windows = windows_for(cohort[0], small_cohort().timeline);
  ASSERT_FALSE(windows.empty());
  const fs::path path = fs::temp_directory_path() / "dbkd_test_roundtrip.dbds";
  write_dataset(path, windows);
  EXPECT_EQ(read_dataset(path), windows);
  EXPECT_EQ(encode_dataset(decode_dataset(encode_dataset(windows))), encode_dataset(windows));
  fs::remove(path);
}

TEST(Dataset, EmptyListRoundTrips) {
  const std::string bytes = encode_dataset({});
  EXPECT_TRUE(decode_dataset(bytes).empty());
}

TEST(Dataset, RejectsCorruptInput) {
  std::vector<WindowedSample> w{sample({1, 2, 3, 4}, 2, Label::Preictal)};
  const std::string good = encode_dataset(w);
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_dataset(bad), FormatError);
  bad = good;
  bad[20] ^= 0x40;
  EXPECT_THROW(decode_dataset(bad), FormatError);
  bad = good;
  bad[4] = 7;
  EXPECT_THROW(decode_dataset(bad), FormatError);
  EXPECT_THROW(decode_dataset(good + "z"), FormatError);
  try {
    decode_dataset(std::string_view(good).substr(0, 30));
    FAIL() << "truncation accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
}

TEST(Generator, DeterministicPerSeed) {
  const auto a = generate_cohort(small_cohort()), b = generate_cohort(small_cohort());
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].samples, b[i].samples);
    EXPECT_EQ(a[i].events, b[i].events);
    EXPECT_EQ(encode_dataset(windows_for(a[i], small_cohort().timeline)),
              encode_dataset(windows_for(b[i], small_cohort().timeline)));
  }
  SyntheticSpec other = small_cohort();
  other.seed = 6;
  EXPECT_NE(generate_cohort(other)[0].samples, a[0].samples);
}

TEST(Generator, EverySubjectMeetsTheLeadRule) {
  const SyntheticSpec s = small_cohort();
  for (const auto& rec : generate_cohort(s)) {
    EXPECT_NO_THROW(rec.validate());
    EXPECT_EQ(lead_seizures(rec, s.timeline).size(), s.seizures);
  }
}

TEST(Generator, InfeasibleDurationIsConfigError) {
  SyntheticSpec s = small_cohort();
  s.duration_s = 100;
  EXPECT_THROW(generate_cohort(s), ConfigError);
  SyntheticSpec bad = small_cohort();
  bad.mixture = {{0.5}, {1.0}};
  EXPECT_THROW(generate_cohort(bad), ConfigError);
}

TEST(Generator, PreictalSpectralPeakAtMechanismFrequency) {
  for (double f : {2.0, 3.5, 5.0}) {
    SyntheticSpec s = small_cohort();
    s.subjects = 1;
    s.mechanisms = {{"m", f, 3.0, 3.0, 0.8}};
    s.noise_sigma = 0.3;
    const auto rec = generate_cohort(s)[0];
    // Average spectrum over raw preictal windows of one channel.
    const auto windows = windows_for(rec, s.timeline);
    std::vector<double> avg;
    for (const auto& w : windows) {
      if (w.label != Label::Preictal) continue;
      const auto mag = oracle::dft_magnitude(std::vector<double>(w.window.begin(), w.window.begin() + w.length));
      if (avg.empty()) avg.assign(mag.size(), 0.0);
      for (std::size_t j = 0; j < mag.size(); ++j) avg[j] += mag[j];
    }
    ASSERT_FALSE(avg.empty());
    avg[0] = 0.0;
    const std::size_t peak = static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
    const double bin_hz = s.fs / static_cast<double>(2 * (avg.size() - 1));
    // 3 s bursts smear the line to roughly 1/3 Hz.
    EXPECT_NEAR(static_cast<double>(peak) * bin_hz, f, 0.25) << f << " Hz";
  }
}

TEST(Generator, NoiseOnlySubjectGivesChanceAuc) {
  SyntheticSpec s = small_cohort();
  s.subjects = 1;
  s.seizures = 4;
  s.mechanisms = {{"null", 3.0, 0.0, 3.0, 0.5}};
  const auto windows = windows_for(generate_cohort(s)[0], s.timeline);
  std::vector<WindowedSample> train, test;
  for (std::size_t i = 0; i < windows.size(); ++i) (i % 2 ? test : train).push_back(windows[i]);
  ModelConfig c;
  c.channels = s.channels;
  c.samples = windows[0].length;
  c.layers = {{LayerKind::Conv1d, 4, 9, 2}, {LayerKind::Relu}, {LayerKind::GlobalAvgPool}, {LayerKind::Dense, 2}};
  Model m = build_model(c, 1);
  train_supervised(m, train, 3e-3, 16, 20, 7);
  std::vector<double> pos, neg;
  for (const auto& w : test) {
    Tape t;
    const auto z = forward_with_taps(m, t, stack_windows(std::vector{w}), false).logits.to_tensor().data;
    (w.label == Label::Preictal ? pos : neg).push_back(z[1] - z[0]);
  }
  ASSERT_FALSE(pos.empty());
  ASSERT_FALSE(neg.empty());
  EXPECT_NEAR(oracle::auc(pos, neg), 0.5, 0.15);
}
