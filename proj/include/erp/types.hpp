#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "erp/error.hpp"

namespace erp {

enum class Label : std::uint8_t { nontarget = 0, target = 1 };

enum class Montage { scalp, ear };

inline std::string to_string(Montage montage) {
  return montage == Montage::scalp ? "scalp" : "ear";
}

inline Montage parse_montage(const std::string& text) {
  if (text == "scalp") return Montage::scalp;
  if (text == "ear") return Montage::ear;
  throw Error(ErrorCode::malformed, "montage must be 'scalp' or 'ear', got '" + text + "'");
}

// 10-20 cap layout, 32 channels.
inline const std::vector<std::string>& scalp_channel_names() {
  static const std::vector<std::string> names = {
      "Fp1", "Fp2", "AFz", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1", "FC2",
      "FC6", "C3",  "Cz",  "C4",  "CP5", "CP1", "CP2", "CP6", "P7",  "P3",  "Pz",
      "P4",  "P8",  "PO7", "PO3", "POz", "PO4", "PO8", "O1",  "Oz",  "O2"};
  return names;
}

// cEEGrid around-the-ear layout, 18 channels.
inline const std::vector<std::string>& ear_channel_names() {
  static const std::vector<std::string> names = {
      "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "L10",
      "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8"};
  return names;
}

inline const std::vector<std::string>& channel_names(Montage montage) {
  return montage == Montage::scalp ? scalp_channel_names() : ear_channel_names();
}

inline std::size_t channel_count(Montage montage) { return channel_names(montage).size(); }

// Names for a channel count when the source carries none: the montage
// layout if the count matches one, otherwise "Ch1".."ChN".
inline std::vector<std::string> default_channel_names(std::size_t n_channels) {
  if (n_channels == scalp_channel_names().size()) return scalp_channel_names();
  if (n_channels == ear_channel_names().size()) return ear_channel_names();
  std::vector<std::string> names;
  names.reserve(n_channels);
  for (std::size_t c = 0; c < n_channels; ++c) names.push_back("Ch" + std::to_string(c + 1));
  return names;
}

// Raw multichannel signal in microvolts, row-major [channel][sample].
struct ContinuousRecording {
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  double fs_hz = 0.0;
  std::vector<double> data;
  std::vector<std::string> channel_names;

  ContinuousRecording() = default;
  ContinuousRecording(std::size_t channels, std::size_t samples, double fs)
      : n_channels(channels), n_samples(samples), fs_hz(fs), data(channels * samples, 0.0),
        channel_names(default_channel_names(channels)) {}

  std::span<double> channel(std::size_t c) { return {data.data() + c * n_samples, n_samples}; }
  std::span<const double> channel(std::size_t c) const {
    return {data.data() + c * n_samples, n_samples};
  }
  double& at(std::size_t c, std::size_t t) { return data[c * n_samples + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * n_samples + t]; }

  void validate() const {
    require(n_channels > 0 && n_samples > 0, ErrorCode::invariant, "recording must be non-empty");
    require(data.size() == n_channels * n_samples, ErrorCode::invariant,
            "recording data size does not match dimensions");
    require(channel_names.size() == n_channels, ErrorCode::invariant,
            "recording needs one name per channel");
    require(fs_hz > 0.0 && std::isfinite(fs_hz), ErrorCode::invariant, "fs_hz must be positive");
    for (double v : data) require(std::isfinite(v), ErrorCode::non_finite, "non-finite sample");
  }

  friend bool operator==(const ContinuousRecording&, const ContinuousRecording&) = default;
};

struct Event {
  std::size_t sample_index = 0;
  Label label = Label::nontarget;

  friend bool operator==(const Event&, const Event&) = default;
};

using EventList = std::vector<Event>;

inline void validate_events(const EventList& events) {
  for (std::size_t i = 1; i < events.size(); ++i)
    require(events[i].sample_index > events[i - 1].sample_index, ErrorCode::not_monotone,
            "event sample indices must be strictly increasing (row " + std::to_string(i + 1) + ")");
}

inline void validate_events(const EventList& events, std::size_t n_samples) {
  validate_events(events);
  if (!events.empty())
    require(events.back().sample_index < n_samples, ErrorCode::out_of_range,
            "event index beyond recording end");
}

// Labeled epochs in microvolts, row-major [epoch][channel][sample].
struct EpochSet {
  std::size_t n_epochs = 0;
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  double fs_hz = 0.0;
  std::vector<Label> labels;
  std::vector<double> data;
  std::vector<std::string> channel_names;

  EpochSet() = default;
  EpochSet(std::size_t epochs, std::size_t channels, std::size_t samples, double fs)
      : n_epochs(epochs), n_channels(channels), n_samples(samples), fs_hz(fs),
        labels(epochs, Label::nontarget), data(epochs * channels * samples, 0.0),
        channel_names(default_channel_names(channels)) {}

  std::size_t epoch_size() const { return n_channels * n_samples; }

  std::span<double> epoch(std::size_t e) { return {data.data() + e * epoch_size(), epoch_size()}; }
  std::span<const double> epoch(std::size_t e) const {
    return {data.data() + e * epoch_size(), epoch_size()};
  }
  double& at(std::size_t e, std::size_t c, std::size_t t) {
    return data[(e * n_channels + c) * n_samples + t];
  }
  double at(std::size_t e, std::size_t c, std::size_t t) const {
    return data[(e * n_channels + c) * n_samples + t];
  }

  std::size_t count(Label label) const {
    std::size_t n = 0;
    for (Label l : labels) n += (l == label);
    return n;
  }

  std::size_t channel_index(const std::string& name) const {
    for (std::size_t c = 0; c < channel_names.size(); ++c)
      if (channel_names[c] == name) return c;
    throw Error(ErrorCode::unknown_channel, "unknown channel '" + name + "'");
  }

  void validate() const {
    require(n_epochs > 0 && n_channels > 0 && n_samples > 0, ErrorCode::invariant,
            "epoch set must be non-empty");
    require(labels.size() == n_epochs, ErrorCode::invariant, "one label per epoch required");
    require(data.size() == n_epochs * n_channels * n_samples, ErrorCode::invariant,
            "epoch data size does not match dimensions");
    require(channel_names.size() == n_channels, ErrorCode::invariant,
            "epoch set needs one name per channel");
    require(fs_hz > 0.0 && std::isfinite(fs_hz), ErrorCode::invariant, "fs_hz must be positive");
    for (Label l : labels)
      require(l == Label::target || l == Label::nontarget, ErrorCode::label_domain,
              "label outside {0,1}");
    for (double v : data) require(std::isfinite(v), ErrorCode::non_finite, "non-finite sample");
  }

  void require_both_classes() const {
    require(count(Label::target) > 0 && count(Label::nontarget) > 0, ErrorCode::single_class,
            "both target and non-target epochs are required");
  }

  friend bool operator==(const EpochSet&, const EpochSet&) = default;
};

}  // namespace erp
