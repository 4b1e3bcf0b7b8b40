#include "support.hpp"

using namespace erp;

namespace {

SynthConfig noiseless(Montage m = Montage::scalp) {
  SynthConfig cfg = SynthConfig::for_montage(m);
  cfg.noise_std_uv = 0.0;
  return cfg;
}

PreprocessConfig raw_window() {
  PreprocessConfig p;
  p.window_start_ms = 0.0;
  p.window_end_ms = 800.0;
  return p;
}

}  // namespace

TEST(ErpTemplate, PeakEqualsAmplitudeAtLatency) {
  const SynthConfig cfg;
  const auto wave = erp_template(cfg);
  ASSERT_EQ(wave.size(), 400u);
  const std::size_t peak = 150;  // 300 ms at 500 Hz
  EXPECT_EQ(wave[peak], cfg.p300_amplitude_uv);
  EXPECT_EQ(*std::max_element(wave.begin(), wave.end()), cfg.p300_amplitude_uv);
}

TEST(ErpTemplate, HalfWidthBelowFifteenPercent) {
  SynthConfig cfg;
  cfg.fs_hz = 400.0;  // 225 ms and 375 ms fall on samples 90 and 150
  const auto wave = erp_template(cfg);
  ASSERT_EQ(wave[120], cfg.p300_amplitude_uv);
  // latency +- width/2 is two standard deviations out: exp(-2) of the peak
  const double expected = cfg.p300_amplitude_uv * std::exp(-2.0);
  for (std::size_t i : {std::size_t{90}, std::size_t{150}}) {
    EXPECT_LT(wave[i], 0.15 * cfg.p300_amplitude_uv);
    EXPECT_NEAR(wave[i], expected, 1e-12);
  }
}

TEST(ErpTemplate, ZeroAmplitudeIsZero) {
  SynthConfig cfg;
  cfg.p300_amplitude_uv = 0.0;
  for (double v : erp_template(cfg)) EXPECT_EQ(v, 0.0);
}

TEST(Generate, DefaultsGivePublishedTrialCounts) {
  const SyntheticRecording r = generate(SynthConfig{});
  ASSERT_EQ(r.events.size(), 300u);
  EXPECT_EQ(std::count(r.labels.begin(), r.labels.end(), Label::target), 60);
  EXPECT_EQ(r.recording.n_channels, 32u);
  EXPECT_EQ(r.recording.fs_hz, 500.0);
  for (std::size_t i = 0; i < r.events.size(); ++i) EXPECT_EQ(r.events[i].label, r.labels[i]);
}

TEST(Generate, InterStimulusIntervalsInRange) {
  const SyntheticRecording r = generate(SynthConfig{});
  for (std::size_t i = 1; i < r.events.size(); ++i) {
    const double gap_ms = 1000.0 * static_cast<double>(r.events[i].sample_index - r.events[i - 1].sample_index) / 500.0;
    EXPECT_GE(gap_ms, 1000.0 - 1.0);
    EXPECT_LE(gap_ms, 2000.0 + 1.0);
  }
}

TEST(Generate, NoiselessTargetEpochsAreTemplateTimesGain) {
  const SynthConfig cfg = noiseless();
  const SyntheticRecording r = generate(cfg);
  const auto wave = erp_template(cfg);
  const auto gains = template_gains(r.recording.channel_names);
  const EpochSet set = extract_epochs(r.recording, r.events, raw_window()).epochs;
  ASSERT_EQ(set.n_epochs, 300u);
  ASSERT_EQ(set.n_samples, wave.size());
  for (std::size_t e = 0; e < set.n_epochs; ++e) {
    const bool target = set.labels[e] == Label::target;
    for (std::size_t c = 0; c < set.n_channels; ++c)
      for (std::size_t t = 0; t < set.n_samples; ++t)
        ASSERT_EQ(set.at(e, c, t), target ? wave[t] * gains[c] : 0.0) << e << " " << c << " " << t;
  }
}

TEST(Generate, NoiselessGrandAverageReproducesTemplate) {
  const SynthConfig cfg = noiseless(Montage::ear);
  const SyntheticRecording r = generate(cfg);
  const auto wave = erp_template(cfg);
  const auto gains = template_gains(r.recording.channel_names);
  const EpochSet set = extract_epochs(r.recording, r.events, raw_window()).epochs;
  for (std::size_t c = 0; c < set.n_channels; ++c) {
    const GrandAverage ga = grand_average(set, set.channel_names[c]);
    for (std::size_t t = 0; t < set.n_samples; ++t) {
      EXPECT_NEAR(ga.target[t], wave[t] * gains[c], 1e-12);
      EXPECT_EQ(ga.nontarget[t], 0.0);
    }
  }
}

TEST(Generate, GainsPeakAtPz) {
  const auto gains = template_gains(scalp_channel_names());
  const auto pz = static_cast<std::size_t>(
      std::find(scalp_channel_names().begin(), scalp_channel_names().end(), "Pz") - scalp_channel_names().begin());
  EXPECT_EQ(gains[pz], 1.0);
  EXPECT_EQ(*std::max_element(gains.begin(), gains.end()), 1.0);
  EXPECT_EQ(gains[0], 0.0);  // Fp1
}

TEST(Generate, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.gait = GaitArtifact{};
  const SyntheticRecording a = generate(cfg);
  const SyntheticRecording b = generate(cfg);
  EXPECT_EQ(a.recording.data, b.recording.data);
  EXPECT_EQ(a.events, b.events);
  cfg.seed = 2;
  EXPECT_NE(generate(cfg).recording.data, a.recording.data);
}

TEST(Generate, ExactTargetCountForOtherRatios) {
  testing_support::Gen gen(77);
  for (int trial = 0; trial < 10; ++trial) {
    SynthConfig cfg = SynthConfig::for_montage(Montage::ear);
    cfg.n_trials = gen.index(2, 80);
    cfg.target_ratio = gen.uniform(0.05, 0.95);
    cfg.seed = gen.index(0, 1000);
    const SyntheticRecording r = generate(cfg);
    EXPECT_EQ(static_cast<std::size_t>(std::count(r.labels.begin(), r.labels.end(), Label::target)),
              static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_trials) * cfg.target_ratio)));
  }
}

TEST(Generate, GaitArtifactIsLabelIndependent) {
  SynthConfig cfg;
  cfg.gait = GaitArtifact{};
  const SyntheticRecording r = generate(cfg);
  const auto gains = template_gains(r.recording.channel_names);
  const EpochSet set = extract_epochs(r.recording, r.events, raw_window()).epochs;
  for (std::size_t c = 0; c < set.n_channels; ++c) {
    if (gains[c] != 0.0) continue;
    std::vector<double> t_means, n_means;
    for (std::size_t e = 0; e < set.n_epochs; ++e) {
      double m = 0.0;
      for (std::size_t t = 0; t < set.n_samples; ++t) m += set.at(e, c, t);
      m /= static_cast<double>(set.n_samples);
      (set.labels[e] == Label::target ? t_means : n_means).push_back(m);
    }
    const auto moments = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair{mean, var / static_cast<double>(v.size() - 1)};
    };
    const auto [mt, vt] = moments(t_means);
    const auto [mn, vn] = moments(n_means);
    const double se = std::sqrt(vt / static_cast<double>(t_means.size()) + vn / static_cast<double>(n_means.size()));
    EXPECT_LT(std::abs(mt - mn), 3.0 * se) << set.channel_names[c];
  }
}

TEST(Generate, GaitAddsSameSignalToEveryChannel) {
  SynthConfig cfg = noiseless(Montage::ear);
  cfg.p300_amplitude_uv = 0.0;
  cfg.gait = GaitArtifact{};
  const SyntheticRecording r = generate(cfg);
  double energy = 0.0;
  for (std::size_t t = 0; t < r.recording.n_samples; ++t) {
    for (std::size_t c = 1; c < r.recording.n_channels; ++c) ASSERT_EQ(r.recording.at(c, t), r.recording.at(0, t));
    energy += r.recording.at(0, t) * r.recording.at(0, t);
  }
  EXPECT_GT(energy, 0.0);
}

TEST(SubjectPair, SameSeedsGiveIdenticalSets) {
  SynthConfig cfg = SynthConfig::for_montage(Montage::ear);
  cfg.n_trials = 40;
  const SubjectPair a = generate_subject_pair(cfg, 5, true);
  const SubjectPair b = generate_subject_pair(cfg, 5, true);
  EXPECT_EQ(a.train.data, b.train.data);
  EXPECT_EQ(a.test.data, b.test.data);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_NE(a.train.data, a.test.data);
  EXPECT_NE(generate_subject_pair(cfg, 6, true).train.data, a.train.data);
}

TEST(SubjectPair, GaitOnTestOnlyChangesTestSet) {
  SynthConfig cfg = SynthConfig::for_montage(Montage::ear);
  cfg.n_trials = 40;
  const SubjectPair clean = generate_subject_pair(cfg, 5, false);
  const SubjectPair walking = generate_subject_pair(cfg, 5, true);
  EXPECT_EQ(clean.train.data, walking.train.data);
  EXPECT_NE(clean.test.data, walking.test.data);
  EXPECT_EQ(clean.test.labels, walking.test.labels);
}

TEST(SubjectPair, EndToEndSmokeReportsAuc) {
  SynthConfig cfg = SynthConfig::for_montage(Montage::ear);
  cfg.n_trials = 60;
  const SubjectPair pair = generate_subject_pair(cfg, 3, true);
  ASSERT_EQ(pair.train.n_samples, 80u);
  ASSERT_EQ(pair.train.n_channels, 18u);
  EnsembleConfig ecfg;
  ecfg.train.epochs = 2;
  const TrainedEnsemble ens = train(pair.train, ecfg);
  const auto scores = predict(ens, pair.test);
  const double a = auc(scores, pair.test.labels);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
}

TEST(SynthConfigIo, KeyValueRoundTrip) {
  SynthConfig cfg = SynthConfig::for_montage(Montage::ear);
  cfg.target_ratio = 0.25;
  cfg.noise_std_uv = 1.75;
  cfg.gait = GaitArtifact{1.6, 7.5};
  cfg.seed = 123456789;
  KeyValueFile kv;
  cfg.write(kv);
  std::istringstream in(kv.str());
  EXPECT_EQ(SynthConfig::read(KeyValueFile::parse(in)), cfg);
  EXPECT_NE(SynthConfig::read(KeyValueFile{}), cfg);
}

TEST(SynthConfigIo, TargetRatioValidated) {
  SynthConfig cfg;
  for (double bad : {0.0, 1.0, 1.5, -0.1}) {
    cfg.target_ratio = bad;
    EXPECT_ERP_ERROR(cfg.validate(), ErrorCode::out_of_range);
    EXPECT_ERP_ERROR(generate(cfg), ErrorCode::out_of_range);
  }
}

TEST(SynthConfigIo, NegativeNoiseRejected) {
  SynthConfig cfg;
  cfg.noise_std_uv = -1.0;
  EXPECT_ERP_ERROR(erp_template(cfg), ErrorCode::out_of_range);
}

TEST(SynthConfigIo, HardPresetIsNoisier) {
  EXPECT_EQ(SynthConfig::hard().noise_std_uv, 10.0);
  EXPECT_EQ(SynthConfig::hard(Montage::ear).n_channels, 18u);
}
