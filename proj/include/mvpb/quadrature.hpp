#pragma once

#include <vector>

#include "mvpb/common.hpp"

namespace mvpb {

struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre rule on [a, b].
Rule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Barycentric Lagrange interpolation on a fixed node set.
class Lagrange1D {
 public:
  Lagrange1D() = default;
  explicit Lagrange1D(std::vector<double> nodes);

  int size() const { return static_cast<int>(x_.size()); }
  const std::vector<double>& nodes() const { return x_; }

  // Writes l_j(t) for all j into out[0..n).
  void eval(double t, double* out) const;
  // Differentiation matrix D with D(i,j) = l_j'(x_i).
  Mat derivative_matrix() const;

 private:
  std::vector<double> x_, bw_;
};

}  // namespace mvpb
