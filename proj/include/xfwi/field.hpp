#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace xfwi {

struct MovieShape {
  int nt = 0;
  int nz = 0;
  int nx = 0;

  std::size_t slice_size() const { return static_cast<std::size_t>(nz) * nx; }
  std::size_t size() const { return static_cast<std::size_t>(nt) * slice_size(); }
  bool operator==(const MovieShape&) const = default;
};

/// Space-time field on the model grid. Time-major; within a slice z runs fastest
/// (index ix*nz + iz), the same order as the binary grid files.
class Movie {
 public:
  Movie() = default;
  explicit Movie(MovieShape shape) : shape_(shape), data_(shape.size(), 0.0) {}

  const MovieShape& shape() const { return shape_; }
  int nt() const { return shape_.nt; }
  int nz() const { return shape_.nz; }
  int nx() const { return shape_.nx; }
  std::size_t slice_size() const { return shape_.slice_size(); }

  std::span<double> slice(int n) { return {data_.data() + n * slice_size(), slice_size()}; }
  std::span<const double> slice(int n) const {
    return {data_.data() + n * slice_size(), slice_size()};
  }
  double& at(int n, int iz, int ix) {
    return data_[n * slice_size() + static_cast<std::size_t>(ix) * shape_.nz + iz];
  }
  double at(int n, int iz, int ix) const {
    return data_[n * slice_size() + static_cast<std::size_t>(ix) * shape_.nz + iz];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::size_t bytes() const { return data_.size() * sizeof(double); }

 private:
  MovieShape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector-space algebra shared by every field type that exposes values().
// Inner products are real: Re(sum conj(a) b), which is what CG needs for both
// real movies and complex frequency fields.

template <class V>
concept FieldVector = requires(V& v, const V& c) {
  v.values();
  c.values();
};

namespace detail {
inline double re_dot(double a, double b) { return a * b; }
inline double re_dot(std::complex<double> a, std::complex<double> b) {
  return a.real() * b.real() + a.imag() * b.imag();
}
inline void fill_random(double& v, std::mt19937_64& rng) {
  v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
}
inline void fill_random(std::complex<double>& v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double re = u(rng);
  v = {re, u(rng)};
}
}  // namespace detail

template <FieldVector V>
double inner(const V& a, const V& b) {
  auto x = a.values();
  auto y = b.values();
  if (x.size() != y.size()) throw std::invalid_argument("inner: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += detail::re_dot(x[i], y[i]);
  return s;
}

template <FieldVector V>
double norm(const V& a) {
  return std::sqrt(inner(a, a));
}

/// y += alpha * x
template <FieldVector V>
void axpy(double alpha, const V& x, V& y) {
  auto xs = x.values();
  auto ys = y.values();
  if (xs.size() != ys.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += alpha * xs[i];
}

template <FieldVector V>
void scale(V& x, double s) {
  for (auto& v : x.values()) v *= s;
}

template <FieldVector V>
V zeros_like(const V& x) {
  V z = x;
  for (auto& v : z.values()) v = {};
  return z;
}

template <FieldVector V>
void fill_random(V& x, std::mt19937_64& rng) {
  for (auto& v : x.values()) detail::fill_random(v, rng);
}

template <FieldVector V>
double max_abs(const V& x) {
  double m = 0.0;
  for (const auto& v : x.values()) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

template <FieldVector V>
double relative_difference(const V& a, const V& b) {
  V diff = a;
  axpy(-1.0, b, diff);
  const double denom = std::max(norm(a), norm(b));
  return denom > 0.0 ? norm(diff) / denom : 0.0;
}

/// Plain vector wrapper so dense test problems can reuse the same solvers.
struct DenseVector {
  std::vector<double> data;

  DenseVector() = default;
  explicit DenseVector(std::size_t n) : data(n, 0.0) {}
  explicit DenseVector(std::vector<double> v) : data(std::move(v)) {}
  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }
};

}  // namespace xfwi
