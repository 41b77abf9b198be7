#include "snrge/label.hpp"

#include <cctype>
#include <cstdio>
#include <stdexcept>

#include "snrge/error.hpp"

namespace snrge {

std::string SnrLabel::str() const {
  if (is_noise()) return "noise";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", *db_);
  return buf;
}

SnrLabel SnrLabel::parse(const std::string& text) {
  std::string t = text;
  for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (t == "noise") return noise();
  if (t.size() > 2 && t.substr(t.size() - 2) == "db") t.resize(t.size() - 2);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return decibel(v);
  } catch (const std::exception&) {
    throw UsageError("cannot parse SNR label: '" + text + "'");
  }
}

}  // namespace snrge
