#include "binarray/config.hpp"

#include <charconv>
#include <vector>

#include "binarray/error.hpp"

namespace binarray {

std::string_view mode_name(Mode m) {
  return m == Mode::kHighAccuracy ? "high_accuracy" : "high_throughput";
}

Mode parse_mode(std::string_view text) {
  if (text == "high_throughput" || text == "throughput" || text == "ht") return Mode::kHighThroughput;
  if (text == "high_accuracy" || text == "accuracy" || text == "ha") return Mode::kHighAccuracy;
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  if (n_sa == 0 || d_arch == 0 || m_arch == 0) {
    throw ConfigError("N_SA, D_arch and M_arch must all be at least 1");
  }
  if (!(clock_hz > 0.0)) throw ConfigError("clock frequency must be positive");
}

std::size_t SimConfig::effective_levels(std::size_t levels) const {
  if (levels == 0) throw ConfigError("layer has M = 0");
  if (mode == Mode::kHighThroughput) return std::min(levels, m_arch);
  if (levels > 2 * m_arch) {
    throw ConfigError("high-accuracy mode supports M <= 2*M_arch = " + std::to_string(2 * m_arch) +
                      ", layer has M = " + std::to_string(levels));
  }
  return levels;
}

std::string SimConfig::label() const {
  return "[" + std::to_string(n_sa) + "," + std::to_string(d_arch) + "," + std::to_string(m_arch) + "]";
}

SimConfig SimConfig::parse(std::string_view text) {
  std::string_view t = text;
  if (!t.empty() && t.front() == '[') t.remove_prefix(1);
  if (!t.empty() && t.back() == ']') t.remove_suffix(1);
  std::vector<std::size_t> parts;
  while (!t.empty()) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr == t.data()) break;
    parts.push_back(value);
    t.remove_prefix(static_cast<std::size_t>(ptr - t.data()));
    if (t.empty()) break;
    if (t.front() != 'x' && t.front() != ',') break;
    t.remove_prefix(1);
  }
  if (parts.size() != 3 || !t.empty()) {
    throw ConfigError("config must look like NxDxM (e.g. 1x32x2), got '" + std::string(text) + "'");
  }
  SimConfig c;
  c.n_sa = parts[0];
  c.d_arch = parts[1];
  c.m_arch = parts[2];
  c.validate();
  return c;
}

}  // namespace binarray
