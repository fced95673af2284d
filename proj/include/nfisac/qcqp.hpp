#pragma once

#include <string>
#include <vector>

#include "nfisac/config.hpp"

namespace nfisac::qcqp {

/// Adds ||factor^T z[offset : offset + rows)||^2 to a quadratic.
struct FactorTerm {
  Eigen::Index offset = 0;
  RMat factor;
};

/// Adds value * ||z[offset : offset + length)||^2 to a quadratic.
struct DiagTerm {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
  double value = 0.0;
};

/// Convex quadratic q(z) = sum ||L^T z_seg||^2 + sum d ||z_rng||^2 + g^T z + c.
///
/// The Hessian is PSD by construction (d >= 0), so every instance is a
/// convex function and q(z) <= 0 is a rotated second-order cone after
/// lifting. Linear functions are the special case with no terms.
struct Quadratic {
  std::vector<FactorTerm> factors;
  std::vector<DiagTerm> diags;
  RVec linear;  // empty means zero
  double constant = 0.0;

  double value(const RVec& z) const;
  /// Writes the gradient into `grad` (resized to z.size()).
  void gradient(const RVec& z, RVec& grad) const;
  /// hess += weight * Hessian.
  void add_hessian(RMat& hess, double weight) const;
  /// Multiplies every coefficient by s > 0 (factors by sqrt(s)).
  void scale(double s);
};

/// minimize objective(z) subject to constraints[i](z) <= 0.
struct Problem {
  Eigen::Index dim = 0;
  Quadratic objective;
  std::vector<Quadratic> constraints;
};

struct Options {
  double gap_rel = 1e-7;
  double gap_abs = 1e-10;
  double barrier_growth = 20.0;
  double newton_tol = 1e-10;
  int max_newton = 600;
  /// Radius^2 of the bounding ball ||z||^2 <= ball that keeps phase I bounded.
  double ball = 1e6;
};

enum class Status { kOptimal, kInfeasible, kIterationLimit };

std::string to_string(Status s);

struct Result {
  Status status = Status::kIterationLimit;
  RVec z;
  double objective = 0.0;
  /// Upper bound on objective - optimum from the barrier parameter.
  double gap = 0.0;
  int newton_steps = 0;
  /// Smallest phase-I slack reached (negative means a strictly feasible point was found).
  double phase1_slack = 0.0;
};

/// Pluggable conic backend. Implementations must be deterministic and
/// return a point whose objective is within the gap contract of optimal.
class ConvexSolver {
 public:
  virtual ~ConvexSolver() = default;
  virtual Result solve(const Problem& problem, const RVec& start) const = 0;
};

/// Primal log-barrier interior-point method with an infeasible-start phase I.
class BarrierSolver final : public ConvexSolver {
 public:
  explicit BarrierSolver(Options opts = {}) : opts_(opts) {}
  Result solve(const Problem& problem, const RVec& start) const override;

 private:
  Options opts_;
};

}  // namespace nfisac::qcqp
