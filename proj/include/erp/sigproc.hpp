#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "erp/error.hpp"
#include "erp/keyvalue.hpp"
#include "erp/types.hpp"

namespace erp {

enum class FilterKind { lowpass, highpass };

struct FirFilter {
  std::vector<double> taps;
  FilterKind kind = FilterKind::lowpass;
  double cutoff_hz = 0.0;
  double design_fs_hz = 0.0;

  std::size_t group_delay_samples() const { return (taps.size() - 1) / 2; }
};

struct PreprocessConfig {
  double target_fs_hz = 100.0;
  double highpass_cutoff_hz = 3.0;
  std::size_t highpass_taps = 251;
  double antialias_cutoff_hz = 40.0;
  std::size_t antialias_taps = 101;
  double window_start_ms = 0.0;
  double window_end_ms = 800.0;

  void validate() const {
    require(target_fs_hz > 0.0, ErrorCode::invariant, "target_fs_hz must be positive");
    require(window_end_ms > window_start_ms, ErrorCode::invariant, "epoch window must have positive length");
  }

  void write(KeyValueFile& kv) const {
    kv.set_number("target_fs_hz", target_fs_hz);
    kv.set_number("highpass_cutoff_hz", highpass_cutoff_hz);
    kv.set_number("highpass_taps", highpass_taps);
    kv.set_number("antialias_cutoff_hz", antialias_cutoff_hz);
    kv.set_number("antialias_taps", antialias_taps);
    kv.set_number("window_start_ms", window_start_ms);
    kv.set_number("window_end_ms", window_end_ms);
  }

  static PreprocessConfig read(const KeyValueFile& kv) {
    PreprocessConfig cfg;
    cfg.target_fs_hz = kv.get_double("target_fs_hz", cfg.target_fs_hz);
    cfg.highpass_cutoff_hz = kv.get_double("highpass_cutoff_hz", cfg.highpass_cutoff_hz);
    cfg.highpass_taps = static_cast<std::size_t>(kv.get_int("highpass_taps", static_cast<std::int64_t>(cfg.highpass_taps)));
    cfg.antialias_cutoff_hz = kv.get_double("antialias_cutoff_hz", cfg.antialias_cutoff_hz);
    cfg.antialias_taps = static_cast<std::size_t>(kv.get_int("antialias_taps", static_cast<std::int64_t>(cfg.antialias_taps)));
    cfg.window_start_ms = kv.get_double("window_start_ms", cfg.window_start_ms);
    cfg.window_end_ms = kv.get_double("window_end_ms", cfg.window_end_ms);
    cfg.validate();
    return cfg;
  }
};

// Hamming-windowed sinc. The lowpass is normalized to unit DC gain; the
// highpass is the spectral inversion (delta minus lowpass) of the lowpass
// at the same cutoff, so its DC gain is zero.
inline FirFilter design_fir(FilterKind kind, double cutoff_hz, std::size_t n_taps, double fs_hz) {
  require(n_taps >= 3 && n_taps % 2 == 1, ErrorCode::invariant,
          "FIR tap count must be odd and >= 3, got " + std::to_string(n_taps));
  require(fs_hz > 0.0 && cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0, ErrorCode::out_of_range,
          "cutoff must lie in (0, fs/2)");

  const std::size_t mid = (n_taps - 1) / 2;
  const double fc = cutoff_hz / fs_hz;  // cycles per sample
  std::vector<double> taps(n_taps);
  for (std::size_t i = 0; i < n_taps; ++i) {
    const double n = static_cast<double>(i) - static_cast<double>(mid);
    const double sinc = i == mid ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                 static_cast<double>(n_taps - 1));
    taps[i] = sinc * window;
  }
  double sum = 0.0;
  for (double t : taps) sum += t;
  for (double& t : taps) t /= sum;
  // Force exact symmetry after normalization.
  for (std::size_t i = 0; i < mid; ++i) taps[n_taps - 1 - i] = taps[i];

  if (kind == FilterKind::highpass) {
    for (double& t : taps) t = -t;
    taps[mid] += 1.0;
  }
  return FirFilter{std::move(taps), kind, cutoff_hz, fs_hz};
}

// Magnitude of the DTFT of the taps at `freq_hz`.
inline double fir_gain(const FirFilter& filter, double freq_hz) {
  double re = 0.0;
  double im = 0.0;
  const double omega = 2.0 * std::numbers::pi * freq_hz / filter.design_fs_hz;
  for (std::size_t n = 0; n < filter.taps.size(); ++n) {
    re += filter.taps[n] * std::cos(omega * static_cast<double>(n));
    im -= filter.taps[n] * std::sin(omega * static_cast<double>(n));
  }
  return std::hypot(re, im);
}

namespace detail {

// Index into a sequence of length n extended by whole-signal mirroring with
// the edge sample repeated: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...
inline std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m)
                                            : static_cast<std::size_t>(period - 1 - m);
}

inline void filter_into(std::span<const double> in, const FirFilter& filter, std::span<double> out) {
  const auto delay = static_cast<std::ptrdiff_t>(filter.group_delay_samples());
  const std::size_t n = in.size();
  const auto& taps = filter.taps;
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    const auto origin = static_cast<std::ptrdiff_t>(t) + delay;
    const bool interior = origin - static_cast<std::ptrdiff_t>(taps.size() - 1) >= 0 &&
                          origin < static_cast<std::ptrdiff_t>(n);
    if (interior) {
      for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * in[static_cast<std::size_t>(origin) - k];
    } else {
      for (std::size_t k = 0; k < taps.size(); ++k)
        acc += taps[k] * in[mirror_index(origin - static_cast<std::ptrdiff_t>(k), n)];
    }
    out[t] = acc;
  }
}

}  // namespace detail

// Zero-phase application: y[t] = sum_k h[k] x[t + D - k] with D the group
// delay, edges padded by symmetric reflection.
inline ContinuousRecording apply_fir(const ContinuousRecording& x, const FirFilter& filter) {
  require(filter.design_fs_hz == x.fs_hz, ErrorCode::rate_mismatch,
          "filter designed for " + std::to_string(filter.design_fs_hz) + " Hz applied to " +
              std::to_string(x.fs_hz) + " Hz signal");
  ContinuousRecording y = x;
  for (std::size_t c = 0; c < x.n_channels; ++c) detail::filter_into(x.channel(c), filter, y.channel(c));
  return y;
}

// Integer decimation factor from x's rate to the target rate.
inline std::size_t decimation_factor(double source_fs_hz, double target_fs_hz) {
  const double ratio = source_fs_hz / target_fs_hz;
  const double rounded = std::round(ratio);
  require(rounded >= 1.0 && std::abs(ratio - rounded) < 1e-9, ErrorCode::rate_mismatch,
          "sampling rate " + std::to_string(source_fs_hz) + " Hz is not an integer multiple of " +
              std::to_string(target_fs_hz) + " Hz (rational resampling is not supported)");
  return static_cast<std::size_t>(rounded);
}

// Anti-alias lowpass at the source rate, then keep every factor-th sample
// starting at sample 0.
inline ContinuousRecording decimate(const ContinuousRecording& x, const PreprocessConfig& cfg) {
  const std::size_t factor = decimation_factor(x.fs_hz, cfg.target_fs_hz);
  if (factor == 1) return x;
  const FirFilter aa = design_fir(FilterKind::lowpass, cfg.antialias_cutoff_hz, cfg.antialias_taps, x.fs_hz);
  const ContinuousRecording smooth = apply_fir(x, aa);
  ContinuousRecording y(x.n_channels, (x.n_samples + factor - 1) / factor, cfg.target_fs_hz);
  y.channel_names = x.channel_names;
  for (std::size_t c = 0; c < x.n_channels; ++c)
    for (std::size_t t = 0; t < y.n_samples; ++t) y.at(c, t) = smooth.at(c, t * factor);
  return y;
}

// Maps event sample indices onto the decimated grid (nearest kept sample).
inline EventList rescale_events(const EventList& events, std::size_t factor) {
  EventList out;
  out.reserve(events.size());
  for (const Event& ev : events) out.push_back({(ev.sample_index + factor / 2) / factor, ev.label});
  validate_events(out);
  return out;
}

inline std::ptrdiff_t ms_to_samples(double ms, double fs_hz) {
  return static_cast<std::ptrdiff_t>(std::llround(ms * fs_hz / 1000.0));
}

struct EpochExtraction {
  EpochSet epochs;
  std::size_t dropped = 0;
};

// One epoch per event over [start, end) ms relative to onset. Events whose
// window leaves the recording are dropped and counted.
inline EpochExtraction extract_epochs(const ContinuousRecording& x, const EventList& events,
                                      const PreprocessConfig& cfg) {
  cfg.validate();
  validate_events(events);
  const std::ptrdiff_t offset = ms_to_samples(cfg.window_start_ms, x.fs_hz);
  const std::ptrdiff_t length = ms_to_samples(cfg.window_end_ms, x.fs_hz) - offset;
  require(length > 0, ErrorCode::invariant, "epoch window shorter than one sample");

  std::vector<std::size_t> starts;
  std::vector<Label> labels;
  for (const Event& ev : events) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(ev.sample_index) + offset;
    if (start < 0 || start + length > static_cast<std::ptrdiff_t>(x.n_samples)) continue;
    starts.push_back(static_cast<std::size_t>(start));
    labels.push_back(ev.label);
  }
  require(!starts.empty(), ErrorCode::invariant, "no event window fits inside the recording");

  EpochExtraction result;
  result.dropped = events.size() - starts.size();
  result.epochs = EpochSet(starts.size(), x.n_channels, static_cast<std::size_t>(length), x.fs_hz);
  result.epochs.labels = std::move(labels);
  result.epochs.channel_names = x.channel_names;
  for (std::size_t e = 0; e < starts.size(); ++e)
    for (std::size_t c = 0; c < x.n_channels; ++c)
      for (std::size_t t = 0; t < result.epochs.n_samples; ++t)
        result.epochs.at(e, c, t) = x.at(c, starts[e] + t);
  return result;
}

inline EpochSet select_channels(const EpochSet& set, const std::vector<std::string>& names) {
  require(!names.empty(), ErrorCode::invariant, "channel selection is empty");
  std::vector<std::size_t> picks;
  picks.reserve(names.size());
  for (const auto& name : names) picks.push_back(set.channel_index(name));

  EpochSet out(set.n_epochs, picks.size(), set.n_samples, set.fs_hz);
  out.labels = set.labels;
  out.channel_names = names;
  for (std::size_t e = 0; e < set.n_epochs; ++e)
    for (std::size_t c = 0; c < picks.size(); ++c)
      for (std::size_t t = 0; t < set.n_samples; ++t) out.at(e, c, t) = set.at(e, picks[c], t);
  return out;
}

// Fixed chain: decimate -> highpass -> epoch.
inline EpochExtraction preprocess(const ContinuousRecording& raw, const EventList& events,
                                  const PreprocessConfig& cfg) {
  cfg.validate();
  validate_events(events, raw.n_samples);
  const std::size_t factor = decimation_factor(raw.fs_hz, cfg.target_fs_hz);
  const ContinuousRecording low = decimate(raw, cfg);
  const FirFilter hp = design_fir(FilterKind::highpass, cfg.highpass_cutoff_hz, cfg.highpass_taps, low.fs_hz);
  const ContinuousRecording clean = apply_fir(low, hp);
  return extract_epochs(clean, rescale_events(events, factor), cfg);
}

}  // namespace erp
