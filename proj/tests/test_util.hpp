#ifndef MFVI_TEST_UTIL_HPP
#define MFVI_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mfvi/tensor.hpp"

namespace mfvi_test {

// Central finite differences of a scalar function of one parameter tensor.
// Independent oracle for every analytic gradient in the suite.
inline std::vector<double> central_fd(
    const std::function<double()>& eval, mfvi::Tensor& param,
    double h = 1e-5) {
  std::vector<double> g(param.size());
  std::vector<double> base = param.value();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> v = base;
    v[i] = base[i] + h;
    param.update_values(v);
    const double fp = eval();
    v[i] = base[i] - h;
    param.update_values(v);
    const double fm = eval();
    g[i] = (fp - fm) / (2.0 * h);
  }
  param.update_values(base);
  return g;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline double max_rel_err(const std::vector<double>& got,
                          const std::vector<double>& want) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    m = std::max(m, rel_err(got[i], want[i]));
  return m;
}

inline mfvi::Tensor random_tensor(std::size_t r, std::size_t c,
                                  std::mt19937_64& rng, double sd = 1.0,
                                  bool requires_grad = true) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& x : v) x = nd(rng);
  return mfvi::Tensor(r, c, std::move(v), requires_grad);
}

// Determinant of the numerical Jacobian of a vector map, via finite
// differences and Gaussian elimination. Dimensions <= 4 only.
inline double numerical_jacobian_det(
    const std::function<std::vector<double>(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h = 1e-6) {
  const std::size_t d = x.size();
  std::vector<std::vector<double>> j(d, std::vector<double>(d));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    const auto fp = f(xp);
    const auto fm = f(xm);
    for (std::size_t r = 0; r < d; ++r) j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
  }
  // Gaussian elimination with partial pivoting.
  double det = 1.0;
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < d; ++r)
      if (std::abs(j[r][k]) > std::abs(j[piv][k])) piv = r;
    if (piv != k) {
      std::swap(j[piv], j[k]);
      det = -det;
    }
    det *= j[k][k];
    if (j[k][k] == 0.0) return 0.0;
    for (std::size_t r = k + 1; r < d; ++r) {
      const double m = j[r][k] / j[k][k];
      for (std::size_t c = k; c < d; ++c) j[r][c] -= m * j[k][c];
    }
  }
  return det;
}

}  // namespace mfvi_test

#endif
