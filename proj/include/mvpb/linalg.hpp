#pragma once

#include "mvpb/common.hpp"

namespace mvpb {

struct EigenDecomp {
  CVec values;
  CMat vectors;  // columns, unit 2-norm; empty when not requested
};

// Dense non-Hermitian eigensolve (LAPACK zgeev).
EigenDecomp eig(const CMat& A, bool want_vectors = true);

// exp(A) by Pade(13) scaling and squaring.
CMat expm(const CMat& A);

// Largest singular value by power iteration on B^H B (dense fallback).
double largest_singular_value(const CMat& B);

// exp(t A) through a cached eigendecomposition A = V diag(lam) V^{-1};
// falls back to scaling and squaring when V is poorly conditioned.
class Propagator {
 public:
  Propagator() = default;
  explicit Propagator(const CMat& A, double cond_limit = 1e8);

  CMat matrix(double t) const;
  CMat apply(double t, const CMat& X) const;
  bool uses_eigen() const { return use_eigen_; }
  double condition() const { return cond_; }
  const CVec& values() const { return lam_; }
  const CMat& vectors() const { return V_; }
  const CMat& inverse_vectors() const { return Vinv_; }

 private:
  CMat A_, V_, Vinv_;
  CVec lam_;
  double cond_ = 0.0;
  bool use_eigen_ = false;
};

}  // namespace mvpb
