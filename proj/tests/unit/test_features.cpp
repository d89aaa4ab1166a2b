#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "pamtriage/embedding_io.hpp"
#include "pamtriage/features.hpp"
#include "pamtriage/rng.hpp"
#include "test_helpers.hpp"

namespace pamtriage {
namespace {

using testing::kind_of;

Snippet make_snippet(std::vector<double> samples, std::uint32_t rate = 22050) {
  Snippet s;
  s.clip_id = "clip";
  s.samples = std::move(samples);
  s.rate = rate;
  return s;
}

std::vector<double> tone(double hz, std::size_t n, double amp = 0.5, double rate = 22050.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed, double amp = 0.1) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = amp * rng.normal();
  return x;
}

double stat(const std::vector<double>& e, std::size_t band, BandStat s) {
  return e[band * kStatsPerBand + static_cast<std::size_t>(s)];
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// ---------------------------------------------------------------------------
// Mel spectrogram

TEST(MelTest, OneSecondSnippetIs64By42) {
  const auto mel = mel_spectrogram(make_snippet(noise(22050, 1)));
  EXPECT_EQ(mel.n_mels(), 64u);
  EXPECT_EQ(mel.n_frames(), 42u);
  EXPECT_EQ(frame_count(22050, FeatureConfig{}), 42u);
  EXPECT_EQ(frame_count(1023, FeatureConfig{}), 0u);
  EXPECT_EQ(mel.config_hash, FeatureConfig{}.hash());
}

TEST(MelTest, SilenceSitsOnTheFloor) {
  const auto mel = mel_spectrogram(make_snippet(std::vector<double>(22050, 0.0)));
  for (Eigen::Index i = 0; i < mel.values.size(); ++i) ASSERT_EQ(mel.values(i), std::log(1e-10));
}

TEST(MelTest, EveryValueIsAtLeastTheFloor) {
  const auto mel = mel_spectrogram(make_snippet(noise(22050, 2, 1e-7)));
  EXPECT_GE(mel.values.minCoeff(), std::log(1e-10));
}

TEST(MelTest, OneKilohertzToneLandsInItsMelBand) {
  const FeatureConfig cfg;
  const auto mel = mel_spectrogram(make_snippet(tone(1000.0, 22050)), cfg);
  const std::size_t expected = oracle::mel_band_of(1000.0, cfg.n_mels, cfg.fmin, cfg.fmax);
  for (Eigen::Index t = 0; t < mel.values.cols(); ++t) {
    Eigen::Index arg = 0;
    mel.values.col(t).maxCoeff(&arg);
    ASSERT_EQ(static_cast<std::size_t>(arg), expected) << "frame " << t;
  }
}

TEST(MelTest, FilterbankMatchesHtkEdges) {
  const FeatureConfig cfg;
  const auto fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.rows(), 64);
  ASSERT_EQ(fb.cols(), 513);
  EXPECT_NEAR(hz_to_mel(1000.0), oracle::htk_mel(1000.0), 1e-12);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(4321.0)), 4321.0, 1e-9);
  EXPECT_GE(fb.minCoeff(), 0.0);
  EXPECT_LE(fb.maxCoeff(), 1.0);
}

TEST(MelTest, TimeReversalReversesInteriorFrames) {
  // n = n_fft + 1 + hop * (F - 1): the reversed framing then lines up with the
  // original one under the periodic window.
  const std::size_t n = 1024 + 1 + 512 * 41;
  const auto x = noise(n, 17, 0.3);
  std::vector<double> r(x.rbegin(), x.rend());
  const auto fwd = mel_spectrogram(x, 22050);
  const auto rev = mel_spectrogram(r, 22050);
  const Eigen::Index f = fwd.values.cols();
  ASSERT_EQ(f, rev.values.cols());
  for (Eigen::Index t = 1; t + 1 < f; ++t) {
    for (Eigen::Index m = 0; m < fwd.values.rows(); ++m) {
      ASSERT_NEAR(rev.values(m, t), fwd.values(m, f - 1 - t), 1e-6) << "band " << m << " frame " << t;
    }
  }
}

TEST(MelTest, RateMismatchIsRejected) {
  EXPECT_EQ(kind_of([] { mel_spectrogram(make_snippet(noise(32768, 1), 32768)); }), ErrorKind::RateMismatch);
}

TEST(FeatureConfigTest, ValidationAndHash) {
  FeatureConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  FeatureConfig other = cfg;
  other.hop = 256;
  EXPECT_NE(cfg.hash(), other.hash());
  EXPECT_EQ(cfg.hash(), FeatureConfig{}.hash());
  other.hop = 2048;  // hop > n_fft
  EXPECT_EQ(kind_of([&] { other.validate(); }), ErrorKind::InvalidArgument);
  other = cfg;
  other.fmax = 12000.0;  // above Nyquist
  EXPECT_EQ(kind_of([&] { other.validate(); }), ErrorKind::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Reference embedding

TEST(EmbedTest, HasTwelveHundredEightyFiniteValues) {
  const auto e = embed_snippet(make_snippet(noise(22050, 4)));
  EXPECT_EQ(e.vector.size(), kEmbeddingDim);
  EXPECT_EQ(e.provider, EmbeddingProvider::reference);
  EXPECT_EQ(e.ref.clip_id, "clip");
}

TEST(EmbedTest, SilenceStatistics) {
  const auto mel = mel_spectrogram(make_snippet(std::vector<double>(22050, 0.0)));
  const auto e = embed_reference(mel);
  for (std::size_t b = 0; b < 64; ++b) {
    EXPECT_EQ(stat(e, b, BandStat::mean), std::log(1e-10));
    EXPECT_EQ(stat(e, b, BandStat::stddev), 0.0);
    EXPECT_EQ(stat(e, b, BandStat::range), 0.0);
    EXPECT_EQ(stat(e, b, BandStat::delta_mean), 0.0);
    EXPECT_EQ(stat(e, b, BandStat::delta_std), 0.0);
    EXPECT_EQ(stat(e, b, BandStat::delta_max), 0.0);
  }
}

TEST(EmbedTest, IdenticalInputsGiveIdenticalEmbeddings) {
  const auto mel = mel_spectrogram(make_snippet(noise(22050, 5)));
  EXPECT_EQ(embed_reference(mel), embed_reference(mel));
  EXPECT_EQ(embed_snippet(make_snippet(noise(22050, 5))).vector, embed_reference(mel));
}

TEST(EmbedTest, NoiseAndToneAreDistinguishable) {
  const auto a = embed_snippet(make_snippet(noise(22050, 6))).vector;
  const auto b = embed_snippet(make_snippet(tone(1000.0, 22050))).vector;
  EXPECT_LT(cosine(a, b), 0.99);
}

TEST(EmbedTest, LogShiftMovesLevelsAndKeepsShapes) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto mel = mel_spectrogram(make_snippet(noise(22050, 100 + trial, rng.uniform(0.01, 0.5))));
    const auto base = embed_reference(mel);
    const double c = rng.uniform(-5.0, 5.0);
    mel.values.array() += c;
    const auto shifted = embed_reference(mel);
    for (std::size_t b = 0; b < 64; ++b) {
      for (auto s : {BandStat::mean, BandStat::min, BandStat::max, BandStat::median, BandStat::q10, BandStat::q25,
                     BandStat::q75, BandStat::q90, BandStat::first, BandStat::last}) {
        ASSERT_NEAR(stat(shifted, b, s), stat(base, b, s) + c, 1e-9) << "band " << b;
      }
      for (auto s : {BandStat::stddev, BandStat::range, BandStat::delta_mean, BandStat::delta_std,
                     BandStat::delta_max, BandStat::autocorr_lag1, BandStat::energy_fraction,
                     BandStat::flux_fraction, BandStat::trend_slope}) {
        ASSERT_NEAR(stat(shifted, b, s), stat(base, b, s), 1e-9) << "band " << b;
      }
    }
  }
}

TEST(EmbedTest, RandomFiniteInputsNeverProduceNaN) {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> x(22050);
    const int shape = trial % 5;
    for (std::size_t i = 0; i < x.size(); ++i) {
      switch (shape) {
        case 0: x[i] = rng.uniform(-1.0, 1.0); break;
        case 1: x[i] = 1e-12 * rng.normal(); break;
        case 2: x[i] = (i % 2 == 0) ? 1.0 : -1.0; break;
        case 3: x[i] = i < 11025 ? 0.0 : rng.uniform(-1.0, 1.0); break;
        default: x[i] = 0.9; break;
      }
    }
    const auto e = embed_snippet(make_snippet(std::move(x))).vector;
    ASSERT_TRUE(std::all_of(e.begin(), e.end(), [](double v) { return std::isfinite(v); })) << "trial " << trial;
  }
}

TEST(EmbedTest, WrongBandCountIsRejected) {
  FeatureConfig cfg;
  cfg.n_mels = 32;
  const auto mel = mel_spectrogram(make_snippet(noise(22050, 7)), cfg);
  EXPECT_EQ(kind_of([&] { embed_reference(mel); }), ErrorKind::BandCountMismatch);
}

// ---------------------------------------------------------------------------
// Exchange format

std::vector<Embedding> random_embeddings(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < count; ++i) {
    Embedding e;
    e.ref = {"clip_" + std::to_string(i % 3), static_cast<std::uint32_t>(i)};
    e.vector.resize(dim);
    for (auto& v : e.vector) v = static_cast<float>(rng.normal());
    out.push_back(std::move(e));
  }
  return out;
}

TEST(EmbeddingIoTest, OneRowRoundTrips) {
  const auto rows = random_embeddings(1, kEmbeddingDim, 1);
  const auto bytes = encode_embeddings(rows);
  EXPECT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 6 + 4 + 4 * kEmbeddingDim);
  EXPECT_TRUE(std::equal(bytes.begin(), bytes.begin() + 8, kEmbeddingMagic));
  const auto back = decode_embeddings(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].ref, rows[0].ref);
  EXPECT_EQ(back[0].vector, rows[0].vector);
  EXPECT_EQ(back[0].provider, EmbeddingProvider::imported);
}

TEST(EmbeddingIoTest, OffByOneDimensionIsRejected) {
  const auto bytes = encode_embeddings(random_embeddings(1, kEmbeddingDim - 1, 2));
  EXPECT_EQ(kind_of([&] { decode_embeddings(bytes); }), ErrorKind::DimensionMismatch);
  EXPECT_EQ(decode_embeddings(bytes, kEmbeddingDim - 1).size(), 1u);
}

TEST(EmbeddingIoTest, DuplicateRefsAreRejected) {
  auto rows = random_embeddings(3, 8, 3);
  rows[2].ref = rows[0].ref;
  const auto bytes = encode_embeddings(rows);
  EXPECT_EQ(kind_of([&] { decode_embeddings(bytes, 8); }), ErrorKind::DuplicateSnippetRef);
}

TEST(EmbeddingIoTest, MalformedImagesAreParseErrors) {
  auto bytes = encode_embeddings(random_embeddings(2, 8, 4));
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(kind_of([&] { decode_embeddings(truncated, 8); }), ErrorKind::ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_embeddings(trailing, 8); }), ErrorKind::ParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_embeddings(bad_magic, 8); }), ErrorKind::ParseError);
}

TEST(EmbeddingIoTest, LargeFilePreservesCountAndOrder) {
  // Row count of the screened corpus; a narrow dimension keeps the file small.
  constexpr std::size_t kRows = 84'499;
  const auto rows = random_embeddings(kRows, 4, 5);
  testing::TempDir dir("emb");
  write_embeddings(dir / "e.bin", rows);
  const auto back = import_embeddings(dir / "e.bin", 4);
  ASSERT_EQ(back.size(), kRows);
  for (std::size_t i = 0; i < kRows; ++i) {
    ASSERT_EQ(back[i].ref, rows[i].ref);
    ASSERT_EQ(back[i].provider, EmbeddingProvider::imported);
  }
  EXPECT_EQ(back.back().vector, rows.back().vector);
  EXPECT_EQ(read_embeddings(dir / "e.bin", 4).front().provider, EmbeddingProvider::reference);
}

}  // namespace
}  // namespace pamtriage
