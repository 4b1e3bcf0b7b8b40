#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "erp/error.hpp"
#include "erp/keyvalue.hpp"
#include "erp/rng.hpp"
#include "erp/sigproc.hpp"
#include "erp/types.hpp"

namespace erp {

// Label-independent periodic interference at the walking cadence: a
// fundamental plus second and third harmonics at 1/2 and 1/4 amplitude,
// identical on every channel.
struct GaitArtifact {
  double step_freq_hz = 2.0;
  double amplitude_uv = 10.0;

  friend bool operator==(const GaitArtifact&, const GaitArtifact&) = default;
};

struct SynthConfig {
  std::size_t n_trials = 300;
  double target_ratio = 0.2;
  double fs_hz = 500.0;
  Montage montage = Montage::scalp;
  std::size_t n_channels = 32;
  double p300_latency_ms = 300.0;
  double p300_amplitude_uv = 5.0;
  double p300_width_ms = 150.0;
  double noise_std_uv = 2.5;
  std::optional<GaitArtifact> gait;
  double isi_min_ms = 1000.0;
  double isi_max_ms = 2000.0;
  double template_window_ms = 800.0;
  double lead_in_ms = 1000.0;
  std::uint64_t seed = 1;

  static SynthConfig for_montage(Montage m) {
    SynthConfig cfg;
    cfg.montage = m;
    cfg.n_channels = channel_count(m);
    return cfg;
  }

  // Low-SNR preset for qualitative exploration.
  static SynthConfig hard(Montage m = Montage::scalp) {
    SynthConfig cfg = for_montage(m);
    cfg.noise_std_uv = 10.0;
    return cfg;
  }

  std::size_t n_targets() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n_trials) * target_ratio));
  }

  void validate() const {
    require(n_trials >= 1, ErrorCode::invariant, "n_trials must be >= 1");
    require(target_ratio > 0.0 && target_ratio < 1.0, ErrorCode::out_of_range, "target_ratio must lie in (0, 1)");
    require(fs_hz > 0.0, ErrorCode::invariant, "fs_hz must be positive");
    require(n_channels >= 1, ErrorCode::invariant, "n_channels must be >= 1");
    require(p300_amplitude_uv >= 0.0 && noise_std_uv >= 0.0, ErrorCode::out_of_range,
            "amplitudes and noise std must be non-negative");
    require(p300_width_ms > 0.0, ErrorCode::out_of_range, "p300_width_ms must be positive");
    require(isi_min_ms > 0.0 && isi_max_ms >= isi_min_ms, ErrorCode::out_of_range, "invalid ISI range");
    require(template_window_ms > 0.0, ErrorCode::out_of_range, "template window must be positive");
    if (gait) {
      require(gait->amplitude_uv >= 0.0, ErrorCode::out_of_range, "gait amplitude must be non-negative");
      require(gait->step_freq_hz > 0.0, ErrorCode::out_of_range, "gait step frequency must be positive");
    }
  }

  void write(KeyValueFile& kv) const {
    kv.set_number("n_trials", n_trials);
    kv.set_number("target_ratio", target_ratio);
    kv.set_number("fs_hz", fs_hz);
    kv.set("montage", to_string(montage));
    kv.set_number("n_channels", n_channels);
    kv.set_number("p300_latency_ms", p300_latency_ms);
    kv.set_number("p300_amplitude_uv", p300_amplitude_uv);
    kv.set_number("p300_width_ms", p300_width_ms);
    kv.set_number("noise_std_uv", noise_std_uv);
    kv.set("gait", gait ? "on" : "off");
    if (gait) {
      kv.set_number("gait_step_freq_hz", gait->step_freq_hz);
      kv.set_number("gait_amplitude_uv", gait->amplitude_uv);
    }
    kv.set_number("isi_min_ms", isi_min_ms);
    kv.set_number("isi_max_ms", isi_max_ms);
    kv.set_number("template_window_ms", template_window_ms);
    kv.set_number("lead_in_ms", lead_in_ms);
    kv.set_number("seed", seed);
  }

  static SynthConfig read(const KeyValueFile& kv) {
    SynthConfig cfg = for_montage(parse_montage(kv.get("montage").value_or("scalp")));
    const auto count = [&](const char* key, std::size_t fallback) {
      const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
      require(v >= 0, ErrorCode::out_of_range, std::string(key) + " must be non-negative");
      return static_cast<std::size_t>(v);
    };
    cfg.n_trials = count("n_trials", cfg.n_trials);
    cfg.target_ratio = kv.get_double("target_ratio", cfg.target_ratio);
    cfg.fs_hz = kv.get_double("fs_hz", cfg.fs_hz);
    cfg.n_channels = count("n_channels", cfg.n_channels);
    cfg.p300_latency_ms = kv.get_double("p300_latency_ms", cfg.p300_latency_ms);
    cfg.p300_amplitude_uv = kv.get_double("p300_amplitude_uv", cfg.p300_amplitude_uv);
    cfg.p300_width_ms = kv.get_double("p300_width_ms", cfg.p300_width_ms);
    cfg.noise_std_uv = kv.get_double("noise_std_uv", cfg.noise_std_uv);
    if (kv.get("gait").value_or("off") == "on") {
      GaitArtifact g;
      g.step_freq_hz = kv.get_double("gait_step_freq_hz", g.step_freq_hz);
      g.amplitude_uv = kv.get_double("gait_amplitude_uv", g.amplitude_uv);
      cfg.gait = g;
    }
    cfg.isi_min_ms = kv.get_double("isi_min_ms", cfg.isi_min_ms);
    cfg.isi_max_ms = kv.get_double("isi_max_ms", cfg.isi_max_ms);
    cfg.template_window_ms = kv.get_double("template_window_ms", cfg.template_window_ms);
    cfg.lead_in_ms = kv.get_double("lead_in_ms", cfg.lead_in_ms);
    cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(cfg.seed)));
    cfg.validate();
    return cfg;
  }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

// Per-channel P300 gains. Scalp: centro-parietal/occipital sites, strongest
// at Pz. Ear: a few sites near the mastoid at reduced gain. Other layouts:
// decreasing gain on the first four channels.
inline std::vector<double> template_gains(const std::vector<std::string>& names) {
  static const std::vector<std::pair<std::string, double>> scalp = {
      {"Pz", 1.0},   {"POz", 0.9}, {"P3", 0.85}, {"P4", 0.85}, {"CP1", 0.8}, {"CP2", 0.8},
      {"PO3", 0.75}, {"PO4", 0.75}, {"Cz", 0.7}, {"Oz", 0.6},  {"O1", 0.55}, {"O2", 0.55},
      {"P7", 0.5},   {"P8", 0.5},  {"PO7", 0.5}, {"PO8", 0.5}};
  static const std::vector<std::pair<std::string, double>> ear = {
      {"L3", 0.5}, {"L4", 0.45}, {"L5", 0.4}, {"R3", 0.5}, {"R4", 0.45}, {"R5", 0.4}};

  std::vector<double> gains(names.size(), 0.0);
  const auto apply = [&](const std::vector<std::pair<std::string, double>>& table) {
    for (std::size_t c = 0; c < names.size(); ++c)
      for (const auto& [name, gain] : table)
        if (names[c] == name) gains[c] = gain;
  };
  if (names == scalp_channel_names()) {
    apply(scalp);
  } else if (names == ear_channel_names()) {
    apply(ear);
  } else {
    for (std::size_t c = 0; c < names.size() && c < 4; ++c) gains[c] = 1.0 - 0.2 * static_cast<double>(c);
  }
  return gains;
}

// Gaussian bump amplitude * exp(-(t - latency)^2 / (2 sigma^2)), sigma =
// width / 4, sampled at fs over [0, template_window_ms).
inline std::vector<double> erp_template(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.template_window_ms * cfg.fs_hz / 1000.0));
  const double sigma = cfg.p300_width_ms / 4.0;
  std::vector<double> wave(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t_ms = 1000.0 * static_cast<double>(i) / cfg.fs_hz;
    const double u = (t_ms - cfg.p300_latency_ms) / sigma;
    wave[i] = cfg.p300_amplitude_uv * std::exp(-0.5 * u * u);
  }
  return wave;
}

struct SyntheticRecording {
  ContinuousRecording recording;
  EventList events;
  std::vector<Label> labels;  // ground truth, one per event
};

// Streams derived from cfg.seed: 1 labels, 2 inter-stimulus intervals,
// 3 sensor noise, 4 gait phases.
inline SyntheticRecording generate(const SynthConfig& cfg) {
  cfg.validate();

  const std::size_t n_targets = cfg.n_targets();
  std::vector<Label> labels(cfg.n_trials, Label::nontarget);
  for (std::size_t i = 0; i < n_targets; ++i) labels[i] = Label::target;
  SplitMix64 label_rng(derive_seed(cfg.seed, 1));
  label_rng.shuffle(std::span(labels));

  SplitMix64 isi_rng(derive_seed(cfg.seed, 2));
  const auto to_samples = [&](double ms) {
    return static_cast<std::size_t>(std::llround(ms * cfg.fs_hz / 1000.0));
  };
  std::vector<std::size_t> onsets(cfg.n_trials);
  double onset_ms = cfg.lead_in_ms;
  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    onsets[i] = to_samples(onset_ms);
    onset_ms += isi_rng.uniform(cfg.isi_min_ms, cfg.isi_max_ms);
  }

  const std::vector<double> wave = erp_template(cfg);
  const std::size_t n_samples = onsets.back() + wave.size() + to_samples(cfg.lead_in_ms);

  SyntheticRecording out;
  out.recording = ContinuousRecording(cfg.n_channels, n_samples, cfg.fs_hz);
  if (cfg.n_channels == channel_count(cfg.montage)) out.recording.channel_names = channel_names(cfg.montage);
  const std::vector<double> gains = template_gains(out.recording.channel_names);

  if (cfg.noise_std_uv > 0.0) {
    SplitMix64 noise_rng(derive_seed(cfg.seed, 3));
    for (double& v : out.recording.data) v = noise_rng.normal(0.0, cfg.noise_std_uv);
  }

  if (cfg.gait) {
    SplitMix64 phase_rng(derive_seed(cfg.seed, 4));
    double phase[3];
    for (double& p : phase) p = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * cfg.gait->step_freq_hz;
    for (std::size_t t = 0; t < n_samples; ++t) {
      const double sec = static_cast<double>(t) / cfg.fs_hz;
      const double artifact = cfg.gait->amplitude_uv * (std::sin(w * sec + phase[0]) +
                                                        0.5 * std::sin(2.0 * w * sec + phase[1]) +
                                                        0.25 * std::sin(3.0 * w * sec + phase[2]));
      for (std::size_t c = 0; c < cfg.n_channels; ++c) out.recording.at(c, t) += artifact;
    }
  }

  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    out.events.push_back({onsets[i], labels[i]});
    if (labels[i] != Label::target) continue;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
      if (gains[c] == 0.0) continue;
      for (std::size_t t = 0; t < wave.size(); ++t) out.recording.at(c, onsets[i] + t) += wave[t] * gains[c];
    }
  }
  out.labels = std::move(labels);
  return out;
}

struct SubjectPair {
  EpochSet train;
  EpochSet test;
};

// Two independent sessions sharing template parameters: train without gait
// artifact, test with it when gait_on_test is set (cfg.gait, or defaults).
// Both go through the standard preprocessing chain.
inline SubjectPair generate_subject_pair(const SynthConfig& cfg, std::uint64_t split_seed, bool gait_on_test,
                                         const PreprocessConfig& prep = {}) {
  SynthConfig train_cfg = cfg;
  train_cfg.gait.reset();
  train_cfg.seed = derive_seed(cfg.seed ^ split_seed, 10);
  SynthConfig test_cfg = cfg;
  test_cfg.seed = derive_seed(cfg.seed ^ split_seed, 11);
  if (gait_on_test && !test_cfg.gait) test_cfg.gait = GaitArtifact{};
  if (!gait_on_test) test_cfg.gait.reset();

  const SyntheticRecording train_raw = generate(train_cfg);
  const SyntheticRecording test_raw = generate(test_cfg);
  return {preprocess(train_raw.recording, train_raw.events, prep).epochs,
          preprocess(test_raw.recording, test_raw.events, prep).epochs};
}

}  // namespace erp
