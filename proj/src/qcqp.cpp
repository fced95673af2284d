#include "nfisac/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace nfisac::qcqp {

double Quadratic::value(const RVec& z) const {
  double v = constant;
  if (linear.size() > 0) v += linear.dot(z);
  for (const auto& f : factors) {
    v += (f.factor.transpose() * z.segment(f.offset, f.factor.rows())).squaredNorm();
  }
  for (const auto& d : diags) v += d.value * z.segment(d.offset, d.length).squaredNorm();
  return v;
}

void Quadratic::gradient(const RVec& z, RVec& grad) const {
  if (linear.size() > 0) {
    grad = linear;
  } else {
    grad.setZero(z.size());
  }
  for (const auto& f : factors) {
    const auto seg = z.segment(f.offset, f.factor.rows());
    grad.segment(f.offset, f.factor.rows()).noalias() +=
        2.0 * f.factor * (f.factor.transpose() * seg);
  }
  for (const auto& d : diags) {
    grad.segment(d.offset, d.length) += 2.0 * d.value * z.segment(d.offset, d.length);
  }
}

void Quadratic::add_hessian(RMat& hess, double weight) const {
  for (const auto& f : factors) {
    const Eigen::Index r = f.factor.rows();
    hess.block(f.offset, f.offset, r, r).noalias() +=
        (2.0 * weight) * f.factor * f.factor.transpose();
  }
  for (const auto& d : diags) {
    hess.diagonal().segment(d.offset, d.length).array() += 2.0 * weight * d.value;
  }
}

void Quadratic::scale(double s) {
  const double root = std::sqrt(s);
  for (auto& f : factors) f.factor *= root;
  for (auto& d : diags) d.value *= s;
  if (linear.size() > 0) linear *= s;
  constant *= s;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

struct BarrierRun {
  RVec z;
  double t = 1.0;
  int newton_steps = 0;
  bool stopped_early = false;
  bool converged = false;
};

double max_constraint(const std::vector<Quadratic>& cons, const RVec& z) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& c : cons) worst = std::max(worst, c.value(z));
  return worst;
}

// Barrier path following from a strictly feasible z. `early_exit` is checked
// after every accepted Newton step.
BarrierRun follow_path(const Quadratic& objective, const std::vector<Quadratic>& cons, RVec z,
                       double t0, double gap_abs, double gap_rel, const Options& opts,
                       const std::function<bool(const RVec&)>& early_exit) {
  const Eigen::Index n = z.size();
  const double m = static_cast<double>(cons.size());
  BarrierRun run;
  run.t = t0;

  std::vector<double> g(cons.size());
  std::vector<RVec> grads(cons.size());
  RVec grad0(n);
  RVec grad(n);
  RMat hess(n, n);

  auto phi = [&](const RVec& x, double t, bool& inside) {
    double v = t * objective.value(x);
    for (const auto& c : cons) {
      const double gi = c.value(x);
      if (!(gi < 0.0)) {
        inside = false;
        return std::numeric_limits<double>::infinity();
      }
      v -= std::log(-gi);
    }
    inside = true;
    return v;
  };

  while (run.newton_steps < opts.max_newton) {
    // Centering.
    while (run.newton_steps < opts.max_newton) {
      objective.gradient(z, grad0);
      grad = run.t * grad0;
      hess.setZero();
      objective.add_hessian(hess, run.t);
      for (std::size_t i = 0; i < cons.size(); ++i) {
        g[i] = cons[i].value(z);
        cons[i].gradient(z, grads[i]);
        const double inv = -1.0 / g[i];
        grad += inv * grads[i];
        hess.selfadjointView<Eigen::Lower>().rankUpdate(grads[i], inv * inv);
        cons[i].add_hessian(hess, inv);
      }
      // rankUpdate only touched the lower triangle; mirror it.
      hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose().triangularView<Eigen::StrictlyUpper>();

      Eigen::LLT<RMat> llt(hess);
      RVec step;
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(grad);
      } else {
        const double ridge = 1e-12 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
        RMat reg = hess;
        reg.diagonal().array() += ridge;
        step = -reg.ldlt().solve(grad);
      }
      const double decrement = -grad.dot(step);
      ++run.newton_steps;
      if (!(decrement > 0.0) || 0.5 * decrement <= opts.newton_tol) break;

      bool inside = true;
      const double f_now = phi(z, run.t, inside);
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls) {
        const RVec trial = z + alpha * step;
        const double f_trial = phi(trial, run.t, inside);
        if (inside && f_trial <= f_now - 0.25 * alpha * decrement) {
          z = trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      if (early_exit && early_exit(z)) {
        run.z = z;
        run.stopped_early = true;
        return run;
      }
      if (alpha * step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
    }
    const double f = objective.value(z);
    if (m / run.t <= std::max(gap_abs, gap_rel * std::abs(f))) {
      run.converged = true;
      break;
    }
    run.t *= opts.barrier_growth;
  }
  run.z = z;
  return run;
}

}  // namespace

Result BarrierSolver::solve(const Problem& problem, const RVec& start) const {
  const Eigen::Index n = problem.dim;
  Result res;
  res.z = start;

  std::vector<Quadratic> cons = problem.constraints;
  Quadratic ball;
  ball.diags.push_back({0, n, 1.0 / opts_.ball});
  ball.constant = -1.0;
  cons.push_back(ball);

  RVec z = start;
  if (start.squaredNorm() >= 0.25 * opts_.ball) z = start * (0.5 * std::sqrt(opts_.ball) / start.norm());

  const double worst = max_constraint(cons, z);
  res.phase1_slack = worst;
  if (!(worst < 0.0)) {
    // Phase I: minimize s subject to g_i(z) <= s, s >= -1, ball.
    std::vector<Quadratic> p1;
    for (const auto& c : problem.constraints) {
      Quadratic q = c;
      RVec lin = RVec::Zero(n + 1);
      if (c.linear.size() > 0) lin.head(n) = c.linear;
      lin(n) = -1.0;
      q.linear = lin;
      p1.push_back(std::move(q));
    }
    Quadratic b = ball;
    b.linear = RVec::Zero(n + 1);
    p1.push_back(b);
    Quadratic floor;
    floor.linear = RVec::Zero(n + 1);
    floor.linear(n) = -1.0;
    floor.constant = -1.0;
    p1.push_back(floor);
    Quadratic obj;
    obj.linear = RVec::Zero(n + 1);
    obj.linear(n) = 1.0;

    RVec y(n + 1);
    y.head(n) = z;
    y(n) = std::max(worst, max_constraint(problem.constraints, z)) + 1.0;
    auto feasible_enough = [&](const RVec& v) {
      return max_constraint(cons, v.head(n)) <= -1e-4;
    };
    const BarrierRun p1run =
        follow_path(obj, p1, y, 1.0, 1e-10, 0.0, opts_, feasible_enough);
    res.newton_steps += p1run.newton_steps;
    z = p1run.z.head(n);
    res.phase1_slack = max_constraint(cons, z);
    if (!(res.phase1_slack < 0.0)) {
      res.status = Status::kInfeasible;
      res.z = z;
      res.objective = problem.objective.value(z);
      return res;
    }
  }

  const BarrierRun run = follow_path(problem.objective, cons, z, 1.0, opts_.gap_abs, opts_.gap_rel,
                                     opts_, nullptr);
  res.newton_steps += run.newton_steps;
  res.z = run.z;
  res.objective = problem.objective.value(run.z);
  res.gap = static_cast<double>(cons.size()) / run.t;
  res.status = run.converged ? Status::kOptimal : Status::kIterationLimit;
  return res;
}

}  // namespace nfisac::qcqp
