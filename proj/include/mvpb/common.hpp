#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace mvpb {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

// Error hierarchy. ValidationError maps to exit status 2, NumericalError to 3.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  NumericalError(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct IllConditioned : NumericalError {
  explicit IllConditioned(const std::string& w) : NumericalError("IllConditioned", w) {}
};
struct BranchSwap : NumericalError {
  explicit BranchSwap(const std::string& w) : NumericalError("BranchSwap", w) {}
};
struct NoConvergence : NumericalError {
  explicit NoConvergence(const std::string& w) : NumericalError("NoConvergence", w) {}
};
struct Instability : NumericalError {
  explicit Instability(const std::string& w) : NumericalError("Instability", w) {}
};
struct CFLViolation : NumericalError {
  explicit CFLViolation(const std::string& w) : NumericalError("CFLViolation", w) {}
};
struct PoorFit : NumericalError {
  explicit PoorFit(const std::string& w) : NumericalError("PoorFit", w) {}
};
struct MemoryBudget : NumericalError {
  explicit MemoryBudget(const std::string& w) : NumericalError("MemoryBudget", w) {}
};
struct EigenFailure : NumericalError {
  explicit EigenFailure(const std::string& w) : NumericalError("EigenFailure", w) {}
};

}  // namespace mvpb
