#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace aesmc {

/// Forward-mode dual number carrying N tangent directions.
///
/// Every sweep in the library is written against a generic scalar so the same
/// code path yields plain values (double) or values plus exact directional
/// derivatives with respect to up to N parameters (Dual<N>).
template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants are intended

  static Dual variable(double value, std::size_t slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
};

template <std::size_t N>
Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r;
  r.v = -a.v;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) {
  return a += b;
}
template <std::size_t N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) {
  return a -= b;
}
template <std::size_t N>
Dual<N> operator+(Dual<N> a, double b) {
  a.v += b;
  return a;
}
template <std::size_t N>
Dual<N> operator+(double a, Dual<N> b) {
  b.v += a;
  return b;
}
template <std::size_t N>
Dual<N> operator-(Dual<N> a, double b) {
  a.v -= b;
  return a;
}
template <std::size_t N>
Dual<N> operator-(double a, const Dual<N>& b) {
  return -b + a;
}

template <std::size_t N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v * b.v;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <std::size_t N>
Dual<N> operator*(Dual<N> a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
template <std::size_t N>
Dual<N> operator*(double a, const Dual<N>& b) {
  return b * a;
}

template <std::size_t N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v / b.v;
  const double inv = 1.0 / b.v;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}
template <std::size_t N>
Dual<N> operator/(const Dual<N>& a, double b) {
  return a * (1.0 / b);
}
template <std::size_t N>
Dual<N> operator/(double a, const Dual<N>& b) {
  return Dual<N>(a) / b;
}

template <std::size_t N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  Dual<N> r;
  r.v = e;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = e * a.d[i];
  return r;
}

template <std::size_t N>
Dual<N> log(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::log(a.v);
  const double inv = 1.0 / a.v;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
  return r;
}

template <std::size_t N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::sqrt(a.v);
  const double half_inv = 0.5 / r.v;
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * half_inv;
  return r;
}

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) {
  return x.v;
}

/// Same value with all tangents dropped.
inline double detach(double x) { return x; }
template <std::size_t N>
Dual<N> detach(const Dual<N>& x) {
  return Dual<N>(x.v);
}

/// Same tangents with the value replaced.
inline double with_value(double, double value) { return value; }
template <std::size_t N>
Dual<N> with_value(Dual<N> x, double value) {
  x.v = value;
  return x;
}

}  // namespace aesmc
