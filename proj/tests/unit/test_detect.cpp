#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "pamtriage/detect.hpp"
#include "pamtriage/rng.hpp"
#include "pamtriage/synth.hpp"
#include "test_helpers.hpp"

namespace pamtriage {
namespace {

using testing::kind_of;

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

// ---------------------------------------------------------------------------
// ncc

TEST(NccTest, MatchesDirectCorrelation) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 500 + rng.below(5000);
    const std::size_t m = 32 + rng.below(400);
    const auto x = random_signal(n, 100 + trial);
    const auto y = random_signal(m, 200 + trial);
    const auto got = ncc(x, y);
    const auto want = oracle::direct_ncc(x, y);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t t = 0; t < got.size(); ++t) ASSERT_NEAR(got[t], want[t], 1e-6) << "lag " << t;
  }
}

TEST(NccTest, SelfAndNegatedSelf) {
  const auto tpl = random_signal(256, 2);
  EXPECT_NEAR(ncc(tpl, tpl)[0], 1.0, 1e-12);
  std::vector<double> neg(tpl.size());
  std::transform(tpl.begin(), tpl.end(), neg.begin(), [](double v) { return -v; });
  EXPECT_NEAR(ncc(neg, tpl)[0], -1.0, 1e-12);
}

TEST(NccTest, TemplateInSilenceIsFoundAtItsOffset) {
  const auto tpl = synth::airgun_pulse(22050, 1, 0.05);
  std::vector<double> x(5000, 0.0);
  std::copy(tpl.begin(), tpl.end(), x.begin() + 1000);
  const auto scores = ncc(x, tpl);
  const auto best = std::max_element(scores.begin(), scores.end());
  EXPECT_EQ(best - scores.begin(), 1000);
  EXPECT_NEAR(*best, 1.0, 1e-9);
  const auto want = oracle::direct_ncc(x, tpl);
  for (std::size_t t = 0; t < scores.size(); ++t) ASSERT_NEAR(scores[t], want[t], 1e-6) << "lag " << t;
  // Windows past the pulse are silent and have no variance.
  for (std::size_t t = 1000 + tpl.size(); t < scores.size(); ++t) ASSERT_EQ(scores[t], 0.0) << "lag " << t;
}

TEST(NccTest, AmplitudeInvariant) {
  const auto x = random_signal(8000, 3);
  const auto tpl = random_signal(300, 4);
  const auto base = ncc(x, tpl);
  for (double a : {1e-3, 0.5, 2.0, 1e3}) {
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= a;
    const auto s = ncc(scaled, tpl);
    for (std::size_t t = 0; t < s.size(); ++t) ASSERT_NEAR(s[t], base[t], 1e-9) << "a=" << a << " t=" << t;
  }
}

TEST(NccTest, ScoresAreBounded) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_signal(3000, 300 + trial);
    // Offsets and near-constant stretches stress the running statistics.
    for (std::size_t i = 0; i < 500; ++i) x[i] = 1e6 + 1e-9 * static_cast<double>(i % 3);
    const auto s = ncc(x, random_signal(64, 400 + trial));
    for (double v : s) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(NccTest, ClipChecksRateAndLength) {
  AudioClip clip;
  clip.id = "c";
  clip.sample_rate = 32768;
  clip.samples = random_signal(1000, 6);
  Template tpl{random_signal(64, 7), 22050, "t"};
  EXPECT_EQ(kind_of([&] { ncc(clip, tpl); }), ErrorKind::RateMismatch);
  tpl.rate = 32768;
  tpl.samples = random_signal(2000, 8);
  EXPECT_EQ(kind_of([&] { ncc(clip, tpl); }), ErrorKind::TemplateTooLong);
}

TEST(TemplateTest, Validation) {
  Template t{std::vector<double>(31, 1.0), 22050, "short"};
  EXPECT_EQ(kind_of([&] { t.validate(); }), ErrorKind::InvalidArgument);
  t.samples.assign(64, 0.25);  // constant: no energy after mean removal
  EXPECT_EQ(kind_of([&] { t.validate(); }), ErrorKind::InvalidArgument);
  EXPECT_NO_THROW(synth::airgun_template(22050).validate());
}

// ---------------------------------------------------------------------------
// pick_peaks

TEST(PeakTest, AllZeroScoresGiveNothing) {
  EXPECT_TRUE(pick_peaks(std::vector<double>(1000, 0.0), 100, PeakOptions{}).empty());
}

TEST(PeakTest, CloseWeakerPeakIsSuppressed) {
  std::vector<double> s(1000, 0.0);
  s[100] = 0.8;
  s[130] = 0.9;  // 0.3 s apart at 100 Hz
  const auto events = pick_peaks(s, 100, {0.6, 0.5}, "c", "t");
  ASSERT_EQ(events.size(), 1u);
  EXPECT_DOUBLE_EQ(events[0].offset_s, 1.3);
  EXPECT_EQ(events[0].score, 0.9);
  EXPECT_EQ(events[0].clip_id, "c");
  EXPECT_EQ(events[0].template_name, "t");
}

TEST(PeakTest, SeparatedPeaksComeBackInTimeOrder) {
  std::vector<double> s(1000, 0.0);
  s[700] = 0.95;
  s[100] = 0.7;
  s[400] = 0.59;  // below threshold
  const auto events = pick_peaks(s, 100, {0.6, 0.5});
  ASSERT_EQ(events.size(), 2u);
  EXPECT_DOUBLE_EQ(events[0].offset_s, 1.0);
  EXPECT_DOUBLE_EQ(events[1].offset_s, 7.0);
  for (const auto& e : events) EXPECT_GE(e.score, 0.6);
}

TEST(PeakTest, ThresholdMustBeInUnitInterval) {
  EXPECT_EQ(kind_of([] { pick_peaks(std::vector<double>(10, 0.0), 100, {0.0, 0.5}); }), ErrorKind::InvalidArgument);
}

TEST(PeakTest, TenPulseTrainAtTenDecibels) {
  const std::uint32_t rate = 22050;
  const auto pulse = synth::airgun_pulse(rate);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto train = synth::pulse_train(pulse, 10, 1.0, rate, 10.0, seed);
    const auto events = pick_peaks(ncc(train.signal, pulse), rate, {0.5, 0.5});
    ASSERT_EQ(events.size(), 10u) << "seed " << seed;
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_NEAR(events[i].offset_s, static_cast<double>(train.onsets[i]) / rate, 1e-3) << "pulse " << i;
    }
  }
}

// ---------------------------------------------------------------------------
// propose_labels

DatasetManifest five_snippets() {
  std::vector<ManifestEntry> entries;
  for (std::uint32_t i = 0; i < 5; ++i) entries.push_back({"c", i, static_cast<double>(i), 22050, "c.wav", 22050, 1.0});
  return DatasetManifest(entries);
}

TEST(ProposeTest, OffsetMapsToContainingSnippet) {
  const std::vector<DetectionEvent> events{{"c", 2.3, 0.8, "airgun"}};
  const auto recs = propose_labels(events, "airgun", five_snippets());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].snippet_index, 2u);
  EXPECT_EQ(recs[0].state, LabelState::proposed);
  EXPECT_EQ(recs[0].provenance, Provenance::matched_filter);
  EXPECT_EQ(recs[0].class_name, "airgun");
  EXPECT_FALSE(recs[0].timestamp.empty());
}

TEST(ProposeTest, EmptyDuplicateAndOutOfRangeEvents) {
  EXPECT_TRUE(propose_labels({}, "airgun", five_snippets()).empty());
  const std::vector<DetectionEvent> events{{"c", 1.1, 0.8, "t"}, {"c", 1.7, 0.9, "t"}, {"c", 5.2, 0.9, "t"}};
  const auto recs = propose_labels(events, "airgun", five_snippets());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].snippet_index, 1u);
}

TEST(ProposeTest, UnknownClipAndBadClassAreRejected) {
  const std::vector<DetectionEvent> events{{"other", 0.5, 0.8, "t"}};
  EXPECT_EQ(kind_of([&] { propose_labels(events, "airgun", five_snippets()); }), ErrorKind::UnknownClip);
  EXPECT_EQ(kind_of([&] { propose_labels({}, "air gun", five_snippets()); }), ErrorKind::InvalidArgument);
}

}  // namespace
}  // namespace pamtriage
