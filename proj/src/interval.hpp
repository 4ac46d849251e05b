#pragma once

#include <algorithm>
#include <cmath>

namespace gridsite::detail {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty(double tol = 0.0) const { return lo > hi + tol; }
};

inline Interval operator+(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }
inline Interval operator+(Interval a, double c) { return {a.lo + c, a.hi + c}; }

inline Interval operator*(Interval a, Interval b) {
  const double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return {std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})};
}

inline Interval operator*(double c, Interval a) {
  return c >= 0.0 ? Interval{c * a.lo, c * a.hi} : Interval{c * a.hi, c * a.lo};
}

inline Interval square(Interval a) {
  if (a.lo >= 0.0) return {a.lo * a.lo, a.hi * a.hi};
  if (a.hi <= 0.0) return {a.hi * a.hi, a.lo * a.lo};
  return {0.0, std::max(a.lo * a.lo, a.hi * a.hi)};
}

// Denominator must be strictly positive.
inline Interval divide(Interval num, Interval den) {
  const double q1 = num.lo / den.lo, q2 = num.lo / den.hi, q3 = num.hi / den.lo, q4 = num.hi / den.hi;
  return {std::min({q1, q2, q3, q4}), std::max({q1, q2, q3, q4})};
}

inline Interval intersect(Interval a, Interval b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }

}  // namespace gridsite::detail
