#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "erp/error.hpp"
#include "erp/keyvalue.hpp"
#include "erp/nn.hpp"
#include "erp/types.hpp"

// File formats (all little-endian):
//
//   .erpe  "ERPE" u32 version=1 u32 n_epochs u32 n_channels u32 n_samples
//          f32 fs_hz | n_epochs label bytes (0/1) | f32 data [epoch][channel][sample]
//   .erpc  "ERPC" u32 version=1 u32 n_channels u64 n_samples f32 fs_hz
//          | f32 data [channel][sample]
//   .erpm  "ERPM" u32 version=1 then u32 n_channels n_samples spatial_kernels
//          temporal1_kernels temporal1_length pool1_width temporal2_kernels
//          temporal2_length pool2_width fc_inputs activation
//          | f64 parameters in canonical tensor order
//
// Signal samples are held as double in memory and stored as f32, so a
// save/load round trip is the identity for float-representable data.

namespace erp {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kEpochHeaderBytes = 24;
inline constexpr std::size_t kContinuousHeaderBytes = 24;
inline constexpr std::size_t kModelHeaderFields = 11;
inline constexpr std::size_t kModelHeaderBytes = 8 + 4 * kModelHeaderFields;

namespace detail {

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void write_to(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::size_t size() const { return bytes_.size(); }

  void expect_magic(std::string_view tag) {
    require(bytes_.size() >= tag.size(), ErrorCode::truncated, path_ + ": file shorter than magic");
    require(std::string_view(bytes_.data(), tag.size()) == tag, ErrorCode::bad_magic,
            path_ + ": expected magic '" + std::string(tag) + "'");
    pos_ = tag.size();
  }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    require(pos_ + sizeof(U) <= bytes_.size(), ErrorCode::truncated, path_ + ": unexpected end of file");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  void expect_version() {
    const auto version = get<std::uint32_t>();
    require(version == kFormatVersion, ErrorCode::bad_version,
            path_ + ": unsupported version " + std::to_string(version));
  }

  void expect_total_size(std::uint64_t expected) {
    require(bytes_.size() == expected, ErrorCode::truncated,
            path_ + ": file is " + std::to_string(bytes_.size()) + " bytes, header implies " +
                std::to_string(expected));
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline float finite_float(double v, const std::string& what) {
  const auto f = static_cast<float>(v);
  require(std::isfinite(f), ErrorCode::non_finite, what + ": value not representable as finite f32");
  return f;
}

inline std::uint32_t to_u32(std::size_t v, const char* field) {
  require(v <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::out_of_range,
          std::string(field) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

// ---- epochs -------------------------------------------------------------

inline std::size_t epoch_file_size(std::size_t n_epochs, std::size_t n_channels, std::size_t n_samples) {
  return kEpochHeaderBytes + n_epochs + 4 * n_epochs * n_channels * n_samples;
}

inline void save_epochs(const EpochSet& set, const std::filesystem::path& path) {
  set.validate();
  detail::ByteWriter w;
  w.magic("ERPE");
  w.put(kFormatVersion);
  w.put(detail::to_u32(set.n_epochs, "n_epochs"));
  w.put(detail::to_u32(set.n_channels, "n_channels"));
  w.put(detail::to_u32(set.n_samples, "n_samples"));
  w.put(detail::finite_float(set.fs_hz, "fs_hz"));
  for (Label l : set.labels) w.put(static_cast<std::uint8_t>(l));
  for (double v : set.data) w.put(detail::finite_float(v, "sample"));
  w.write_to(path);
}

inline EpochSet load_epochs(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("ERPE");
  r.expect_version();
  const auto n_epochs = r.get<std::uint32_t>();
  const auto n_channels = r.get<std::uint32_t>();
  const auto n_samples = r.get<std::uint32_t>();
  const auto fs = r.get<float>();
  require(n_epochs > 0 && n_channels > 0 && n_samples > 0, ErrorCode::invariant,
          r.path() + ": zero dimension in header");
  require(std::isfinite(fs) && fs > 0.0f, ErrorCode::invariant, r.path() + ": fs_hz must be positive");
  r.expect_total_size(kEpochHeaderBytes + std::uint64_t{n_epochs} +
                      4ULL * n_epochs * n_channels * n_samples);

  EpochSet set(n_epochs, n_channels, n_samples, fs);
  for (auto& label : set.labels) {
    const auto byte = r.get<std::uint8_t>();
    require(byte <= 1, ErrorCode::label_domain, r.path() + ": label byte outside {0,1}");
    label = static_cast<Label>(byte);
  }
  for (double& v : set.data) {
    const auto f = r.get<float>();
    require(std::isfinite(f), ErrorCode::non_finite, r.path() + ": non-finite sample");
    v = f;
  }
  return set;
}

// ---- continuous ---------------------------------------------------------

inline void save_continuous(const ContinuousRecording& rec, const std::filesystem::path& path) {
  rec.validate();
  detail::ByteWriter w;
  w.magic("ERPC");
  w.put(kFormatVersion);
  w.put(detail::to_u32(rec.n_channels, "n_channels"));
  w.put(static_cast<std::uint64_t>(rec.n_samples));
  w.put(detail::finite_float(rec.fs_hz, "fs_hz"));
  for (double v : rec.data) w.put(detail::finite_float(v, "sample"));
  w.write_to(path);
}

inline ContinuousRecording load_continuous(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("ERPC");
  r.expect_version();
  const auto n_channels = r.get<std::uint32_t>();
  const auto n_samples = r.get<std::uint64_t>();
  const auto fs = r.get<float>();
  require(n_channels > 0 && n_samples > 0, ErrorCode::invariant, r.path() + ": zero dimension in header");
  require(std::isfinite(fs) && fs > 0.0f, ErrorCode::invariant, r.path() + ": fs_hz must be positive");
  require(n_samples <= (std::numeric_limits<std::uint64_t>::max() - kContinuousHeaderBytes) / 4 / n_channels,
          ErrorCode::truncated, r.path() + ": header dimensions overflow");
  r.expect_total_size(kContinuousHeaderBytes + 4ULL * n_channels * n_samples);

  ContinuousRecording rec(n_channels, static_cast<std::size_t>(n_samples), fs);
  for (double& v : rec.data) {
    const auto f = r.get<float>();
    require(std::isfinite(f), ErrorCode::non_finite, r.path() + ": non-finite sample");
    v = f;
  }
  return rec;
}

// Interchange text form of a recording: a header row of channel names, then
// one comma-separated row of microvolt values per sample.
inline ContinuousRecording import_continuous_csv(std::istream& in, double fs_hz,
                                                 const std::string& source = "csv") {
  require(fs_hz > 0.0 && std::isfinite(fs_hz), ErrorCode::invariant, source + ": fs_hz must be positive");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::malformed, source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  {
    std::stringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) names.push_back(detail::trim(name));
  }
  require(!names.empty(), ErrorCode::malformed, source + ": header names no channels");

  std::vector<std::vector<double>> columns(names.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream fields(line);
    std::string field;
    std::size_t c = 0;
    while (std::getline(fields, field, ',')) {
      require(c < names.size(), ErrorCode::malformed, source + " row " + std::to_string(row) + ": too many fields");
      const double v = KeyValueFile::parse_double(source + " row " + std::to_string(row), detail::trim(field));
      require(std::isfinite(v), ErrorCode::non_finite, source + " row " + std::to_string(row) + ": non-finite");
      columns[c++].push_back(v);
    }
    require(c == names.size(), ErrorCode::malformed, source + " row " + std::to_string(row) + ": too few fields");
  }
  require(!columns[0].empty(), ErrorCode::malformed, source + ": no samples");

  ContinuousRecording rec(names.size(), columns[0].size(), fs_hz);
  rec.channel_names = names;
  for (std::size_t c = 0; c < names.size(); ++c) std::copy(columns[c].begin(), columns[c].end(), rec.channel(c).begin());
  return rec;
}

inline ContinuousRecording import_continuous_csv(const std::filesystem::path& path, double fs_hz) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return import_continuous_csv(in, fs_hz, path.string());
}

// ---- events -------------------------------------------------------------

inline constexpr std::string_view kEventsHeader = "sample_index,label";

inline EventList parse_events(std::istream& in, const std::string& source = "events") {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::malformed, source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kEventsHeader, ErrorCode::malformed,
          source + ": header must be exactly '" + std::string(kEventsHeader) + "'");

  EventList events;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + " row " + std::to_string(row);
    const auto comma = line.find(',');
    require(comma != std::string::npos && line.find(',', comma + 1) == std::string::npos,
            ErrorCode::malformed, where + ": expected two fields");
    const std::string index_text = line.substr(0, comma);
    const std::string label_text = line.substr(comma + 1);
    std::uint64_t index = 0;
    {
      const auto [ptr, ec] = std::from_chars(index_text.data(), index_text.data() + index_text.size(), index);
      require(ec == std::errc{} && ptr == index_text.data() + index_text.size() && !index_text.empty(),
              ErrorCode::malformed, where + ": bad sample_index '" + index_text + "'");
    }
    std::int64_t label = 0;
    {
      const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
      require(ec == std::errc{} && ptr == label_text.data() + label_text.size() && !label_text.empty(),
              ErrorCode::malformed, where + ": bad label '" + label_text + "'");
    }
    require(label == 0 || label == 1, ErrorCode::label_domain, where + ": label must be 0 or 1");
    if (!events.empty())
      require(index > events.back().sample_index, ErrorCode::not_monotone,
              where + ": sample_index must be strictly increasing");
    events.push_back({static_cast<std::size_t>(index), static_cast<Label>(label)});
  }
  return events;
}

inline EventList load_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return parse_events(in, path.string());
}

inline void save_events(const EventList& events, const std::filesystem::path& path) {
  validate_events(events);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << kEventsHeader << '\n';
  for (const Event& ev : events) out << ev.sample_index << ',' << static_cast<int>(ev.label) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
}

// ---- model --------------------------------------------------------------

inline std::size_t model_file_size(const Architecture& arch) {
  return kModelHeaderBytes + 8 * arch.parameter_count();
}

inline void save_model(const Network& net, const std::filesystem::path& path) {
  const Architecture& a = net.arch;
  a.validate();
  require(net.values.size() == a.parameter_count(), ErrorCode::dimension,
          "parameter count does not match architecture");
  detail::ByteWriter w;
  w.magic("ERPM");
  w.put(kFormatVersion);
  for (std::size_t field : {a.n_channels, a.n_samples, a.spatial_kernels, a.temporal1_kernels,
                            a.temporal1_length, a.pool1_width, a.temporal2_kernels, a.temporal2_length,
                            a.pool2_width, a.fc_inputs()})
    w.put(detail::to_u32(field, "architecture field"));
  w.put(static_cast<std::uint32_t>(a.activation));
  for (double v : net.values) {
    require(std::isfinite(v), ErrorCode::non_finite, "non-finite parameter");
    w.put(v);
  }
  w.write_to(path);
}

inline Network load_model(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("ERPM");
  r.expect_version();
  Architecture a;
  a.n_channels = r.get<std::uint32_t>();
  a.n_samples = r.get<std::uint32_t>();
  a.spatial_kernels = r.get<std::uint32_t>();
  a.temporal1_kernels = r.get<std::uint32_t>();
  a.temporal1_length = r.get<std::uint32_t>();
  a.pool1_width = r.get<std::uint32_t>();
  a.temporal2_kernels = r.get<std::uint32_t>();
  a.temporal2_length = r.get<std::uint32_t>();
  a.pool2_width = r.get<std::uint32_t>();
  const auto fc_inputs = r.get<std::uint32_t>();
  a.activation = static_cast<Activation>(r.get<std::uint32_t>());
  a.validate();
  require(fc_inputs == a.fc_inputs(), ErrorCode::dimension,
          r.path() + ": declared fc width " + std::to_string(fc_inputs) + " does not match architecture (" +
              std::to_string(a.fc_inputs()) + ")");
  r.expect_total_size(model_file_size(a));

  Network net(a);
  for (double& v : net.values) {
    v = r.get<double>();
    require(std::isfinite(v), ErrorCode::non_finite, r.path() + ": non-finite parameter");
  }
  return net;
}

// ---- manifest -----------------------------------------------------------

struct DatasetManifest {
  std::string subject_id;
  std::string condition;
  Montage montage = Montage::scalp;
  std::filesystem::path train_path;
  std::filesystem::path test_path;

  void validate_against(const EpochSet& set) const {
    require(set.n_channels == channel_count(montage), ErrorCode::dimension,
            "montage '" + to_string(montage) + "' expects " + std::to_string(channel_count(montage)) +
                " channels, epoch file has " + std::to_string(set.n_channels));
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  KeyValueFile kv;
  kv.set("subject_id", m.subject_id);
  kv.set("condition", m.condition);
  kv.set("montage", to_string(m.montage));
  kv.set("train_path", m.train_path.string());
  kv.set("test_path", m.test_path.string());
  kv.save(path);
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  DatasetManifest m;
  m.subject_id = kv.at("subject_id");
  m.condition = kv.at("condition");
  m.montage = parse_montage(kv.at("montage"));
  m.train_path = kv.at("train_path");
  m.test_path = kv.at("test_path");
  return m;
}

}  // namespace erp
