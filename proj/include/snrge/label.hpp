#pragma once

#include <compare>
#include <optional>
#include <string>

namespace snrge {

/// Either a decibel SNR level or the categorical noise class. Ordering puts
/// Noise below every decibel value.
class SnrLabel {
 public:
  SnrLabel() = default;
  static SnrLabel noise() { return SnrLabel(); }
  static SnrLabel decibel(double db) {
    SnrLabel l;
    l.db_ = db;
    return l;
  }

  bool is_noise() const noexcept { return !db_.has_value(); }
  /// Decibel value; throws std::bad_optional_access for Noise.
  double db() const { return db_.value(); }

  /// "noise" or the dB value formatted with %g.
  std::string str() const;
  /// Inverse of str(). Also accepts a trailing "dB" suffix.
  static SnrLabel parse(const std::string& text);

  friend bool operator==(const SnrLabel& a, const SnrLabel& b) noexcept {
    return a.db_ == b.db_;
  }
  friend std::strong_ordering operator<=>(const SnrLabel& a, const SnrLabel& b) noexcept {
    if (a.is_noise() || b.is_noise()) {
      return static_cast<int>(!a.is_noise()) <=> static_cast<int>(!b.is_noise());
    }
    if (*a.db_ < *b.db_) return std::strong_ordering::less;
    if (*a.db_ > *b.db_) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

 private:
  std::optional<double> db_;
};

}  // namespace snrge
