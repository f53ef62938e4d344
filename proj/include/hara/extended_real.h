#pragma once

#include <cmath>
#include <limits>
#include <ostream>

namespace hara {

// A value in [-inf, +inf] with the infinities kept as explicit states rather
// than IEEE infinities, so kernels never hand back NaN-prone arithmetic.
class ExtendedReal {
 public:
  enum class Kind { kFinite, kPlusInfinity, kMinusInfinity };

  constexpr ExtendedReal() = default;

  static constexpr ExtendedReal Finite(double v) { return ExtendedReal(Kind::kFinite, v); }
  static constexpr ExtendedReal PlusInfinity() { return ExtendedReal(Kind::kPlusInfinity, 0.0); }
  static constexpr ExtendedReal MinusInfinity() { return ExtendedReal(Kind::kMinusInfinity, 0.0); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::kFinite; }
  constexpr bool is_plus_infinity() const { return kind_ == Kind::kPlusInfinity; }
  constexpr bool is_minus_infinity() const { return kind_ == Kind::kMinusInfinity; }

  // Only meaningful when is_finite().
  constexpr double value() const { return value_; }

  // IEEE view, for callers that want to feed the value into plain arithmetic.
  double to_double() const {
    switch (kind_) {
      case Kind::kPlusInfinity:
        return std::numeric_limits<double>::infinity();
      case Kind::kMinusInfinity:
        return -std::numeric_limits<double>::infinity();
      case Kind::kFinite:
        break;
    }
    return value_;
  }

  friend ExtendedReal operator+(const ExtendedReal& a, const ExtendedReal& b);
  friend ExtendedReal operator-(const ExtendedReal& a) {
    switch (a.kind_) {
      case Kind::kPlusInfinity:
        return MinusInfinity();
      case Kind::kMinusInfinity:
        return PlusInfinity();
      case Kind::kFinite:
        break;
    }
    return Finite(-a.value_);
  }

  friend bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.kind_ == b.kind_ && (a.kind_ != Kind::kFinite || a.value_ == b.value_);
  }

  friend bool operator<(const ExtendedReal& a, const ExtendedReal& b) {
    return a.rank() < b.rank() || (a.rank() == b.rank() && a.is_finite() && a.value_ < b.value_);
  }
  friend bool operator>(const ExtendedReal& a, const ExtendedReal& b) { return b < a; }
  friend bool operator<=(const ExtendedReal& a, const ExtendedReal& b) { return !(b < a); }
  friend bool operator>=(const ExtendedReal& a, const ExtendedReal& b) { return !(a < b); }

  friend std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
    switch (x.kind_) {
      case Kind::kPlusInfinity:
        return os << "+inf";
      case Kind::kMinusInfinity:
        return os << "-inf";
      case Kind::kFinite:
        break;
    }
    return os << x.value_;
  }

 private:
  constexpr ExtendedReal(Kind k, double v) : kind_(k), value_(v) {}

  constexpr int rank() const {
    return kind_ == Kind::kMinusInfinity ? 0 : (kind_ == Kind::kFinite ? 1 : 2);
  }

  Kind kind_ = Kind::kFinite;
  double value_ = 0.0;
};

// (+inf) + (-inf) has no value; it never arises in the kernels, which only
// accumulate terms of one sign of infinity, and is reported as +inf.
inline ExtendedReal operator+(const ExtendedReal& a, const ExtendedReal& b) {
  if (a.is_plus_infinity() || b.is_plus_infinity()) return ExtendedReal::PlusInfinity();
  if (a.is_minus_infinity() || b.is_minus_infinity()) return ExtendedReal::MinusInfinity();
  return ExtendedReal::Finite(a.value_ + b.value_);
}

}  // namespace hara
