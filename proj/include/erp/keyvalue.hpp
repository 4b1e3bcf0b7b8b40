#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "erp/error.hpp"

namespace erp {

namespace detail {

inline std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

}  // namespace detail

// Ordered key=value document. Blank lines and lines starting with '#' are
// ignored on read; keys keep insertion order on write.
class KeyValueFile {
 public:
  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    entries_.emplace_back(key, std::move(value));
  }

  template <typename T>
  void set_number(const std::string& key, T value) {
    std::ostringstream out;
    out.precision(17);
    out << value;
    set(key, out.str());
  }

  bool contains(const std::string& key) const { return find(key) != nullptr; }

  std::optional<std::string> get(const std::string& key) const {
    if (const auto* value = find(key)) return *value;
    return std::nullopt;
  }

  const std::string& at(const std::string& key) const {
    const auto* value = find(key);
    require(value != nullptr, ErrorCode::malformed, "missing key '" + key + "'");
    return *value;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto* value = find(key);
    return value ? parse_double(key, *value) : fallback;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto* value = find(key);
    return value ? parse_int(key, *value) : fallback;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile file;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = detail::trim(line);
      if (stripped.empty() || stripped.front() == '#') continue;
      const auto eq = stripped.find('=');
      require(eq != std::string::npos && eq > 0, ErrorCode::malformed,
              "line " + std::to_string(line_no) + ": expected key=value");
      file.set(detail::trim(stripped.substr(0, eq)), detail::trim(stripped.substr(eq + 1)));
    }
    return file;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
    return parse(in);
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
    out << str();
    require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
  }

  static double parse_double(const std::string& key, const std::string& text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    require(ec == std::errc{} && ptr == end, ErrorCode::malformed,
            "key '" + key + "': not a number: '" + text + "'");
    return value;
  }

  static std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::int64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    require(ec == std::errc{} && ptr == end, ErrorCode::malformed,
            "key '" + key + "': not an integer: '" + text + "'");
    return value;
  }

 private:
  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace erp
