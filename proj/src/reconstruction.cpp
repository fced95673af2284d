#include "nfisac/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "nfisac/optimizer.hpp"

namespace nfisac {

namespace {

CMat hermitian(const CMat& m) { return 0.5 * (m + m.adjoint()); }

double min_eig(const CMat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double quad(const CVec& v, const CMat& m) { return (v.adjoint() * m * v)(0).real(); }

// Max-min objective from SINRs with the water-filled common split.
double objective_from_sinrs(const CovarianceSinrs& s) {
  if (s.priv.empty()) return 0.0;
  double rc = std::numeric_limits<double>::infinity();
  std::vector<double> rp;
  for (std::size_t k = 0; k < s.priv.size(); ++k) {
    rc = std::min(rc, log2p1(s.common[k]));
    rp.push_back(log2p1(s.priv[k]));
  }
  const CommonRateAlloc a = optimal_common_split(rc, rp);
  double obj = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rp.size(); ++k) obj = std::min(obj, a.shares[k] + rp[k]);
  return obj;
}

// Square-root factor of the digital total so filters can be computed with the
// precoder-based routine: F T F^H = (F T^{1/2})(F T^{1/2})^H.
CMat covariance_factor(const CovarianceSolution& sol) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian(sol.digital_total()));
  const RVec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return sol.analog * es.eigenvectors() * lam.asDiagonal();
}

std::vector<double> sensing_rates_of(const CMat& cov, const ReceiveFilters& u, const Scenario& s,
                                     const SystemConfig& cfg) {
  std::vector<double> out;
  for (double g : sensing_sinr_cov(cov, u, s, cfg)) out.push_back(log2p1(g));
  return out;
}

}  // namespace

CMat CovarianceSolution::digital_total() const {
  CMat t = sense_cov;
  for (const auto& w : comm_covs) t += w;
  return t;
}

CMat CovarianceSolution::transmit_covariance() const {
  return analog * digital_total() * analog.adjoint();
}

double CovarianceSolution::transmit_power() const {
  const CMat g = analog.adjoint() * analog;
  double p = (g * sense_cov).trace().real();
  for (const auto& w : comm_covs) p += (g * w).trace().real();
  return p;
}

CovarianceSinrs covariance_sinrs(const CovarianceSolution& sol, const Scenario& scenario,
                                 const SystemConfig& cfg) {
  CovarianceSinrs out;
  for (std::size_t k = 0; k < scenario.n_users(); ++k) {
    const CVec h = sol.analog.adjoint() * scenario.comm_channels[k];
    std::vector<double> t;
    for (const auto& w : sol.comm_covs) t.push_back(quad(h, w));
    const double v = quad(h, sol.sense_cov);
    double others = 0.0;
    for (std::size_t j = 1; j < t.size(); ++j) {
      if (j != k + 1) others += t[j];
    }
    const double sp = t[k + 1];
    const double ic = sp + others + v + cfg.noise_comm_mw;
    const double ip = others + v + cfg.noise_comm_mw + cfg.sic_residual * t[0];
    out.common.push_back(t[0] / ic);
    out.priv.push_back(sp / ip);
  }
  return out;
}

std::vector<double> uniform_merge_weights(std::size_t n_streams) {
  return std::vector<double>(n_streams, 1.0 / static_cast<double>(n_streams));
}

CovarianceSolution merge_sensing(const CovarianceSolution& sol, const std::vector<double>& weights) {
  if (weights.size() != sol.comm_covs.size()) {
    throw std::invalid_argument("merge_sensing: one weight per stream");
  }
  double sum = 0.0;
  for (double d : weights) {
    if (!(d >= 0.0)) throw std::invalid_argument("merge_sensing: negative weight");
    sum += d;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("merge_sensing: weights must sum to 1");
  CovarianceSolution out = sol;
  for (std::size_t k = 0; k < weights.size(); ++k) out.comm_covs[k] += weights[k] * sol.sense_cov;
  out.sense_cov.setZero();
  return out;
}

std::size_t psd_rank(const CMat& w) {
  if (w.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian(w), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return 0;
  return static_cast<std::size_t>((es.eigenvalues().array() > 1e-10 * top).count());
}

RankReduceResult rank_reduce(const CMat& w, const std::vector<CMat>& functionals,
                             const CMat* nonincreasing) {
  RankReduceResult res;
  res.matrix = hermitian(w);
  while (true) {
    Eigen::SelfAdjointEigenSolver<CMat> es(res.matrix);
    const RVec& lam = es.eigenvalues();
    const double top = lam.size() > 0 ? lam.maxCoeff() : 0.0;
    std::vector<Eigen::Index> keep;
    if (top > 0.0) {
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) > 1e-10 * top) keep.push_back(i);
      }
    }
    const auto a = static_cast<Eigen::Index>(keep.size());
    res.rank = keep.size();
    res.rank_history.push_back(res.rank);
    if (a <= 1) break;

    CMat phat(res.matrix.rows(), a);
    for (Eigen::Index c = 0; c < a; ++c) {
      phat.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(lam(keep[c]));
    }
    // Tr(C X) over Hermitian X: diagonal entries, then (Re, Im) of X_pq, p < q.
    const Eigen::Index unknowns = a * a;
    RMat sys = RMat::Zero(static_cast<Eigen::Index>(functionals.size()), unknowns);
    for (std::size_t i = 0; i < functionals.size(); ++i) {
      const CMat c = phat.adjoint() * functionals[i] * phat;
      const auto row = static_cast<Eigen::Index>(i);
      Eigen::Index col = 0;
      for (Eigen::Index p = 0; p < a; ++p) sys(row, col++) = c(p, p).real();
      for (Eigen::Index p = 0; p < a; ++p) {
        for (Eigen::Index q = p + 1; q < a; ++q) {
          sys(row, col++) = 2.0 * c(q, p).real();
          sys(row, col++) = -2.0 * c(q, p).imag();
        }
      }
    }
    // Functionals differ in scale by many decades; equilibrate rows so the
    // rank cut below sees each constraint.
    for (Eigen::Index i = 0; i < sys.rows(); ++i) {
      const double n = sys.row(i).norm();
      if (n > 0.0) sys.row(i) /= n;
    }
    RVec x;
    if (sys.rows() == 0) {
      x = RVec::Unit(unknowns, 0);
    } else {
      Eigen::JacobiSVD<RMat> svd(sys, Eigen::ComputeFullV);
      const RVec& sv = svd.singularValues();
      const double smax = sv.size() > 0 ? sv(0) : 0.0;
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > 1e-10 * smax) ++r;
      }
      if (r >= unknowns) {
        res.irreducible = true;
        break;
      }
      x = svd.matrixV().col(r);
    }
    CMat xm = CMat::Zero(a, a);
    Eigen::Index col = 0;
    for (Eigen::Index p = 0; p < a; ++p) xm(p, p) = x(col++);
    for (Eigen::Index p = 0; p < a; ++p) {
      for (Eigen::Index q = p + 1; q < a; ++q) {
        xm(p, q) = cplx(x(col), x(col + 1));
        xm(q, p) = std::conj(xm(p, q));
        col += 2;
      }
    }
    Eigen::SelfAdjointEigenSolver<CMat> xs(xm, Eigen::EigenvaluesOnly);
    const double hi = xs.eigenvalues().maxCoeff();
    const double lo = xs.eigenvalues().minCoeff();
    double sign = hi > 0.0 ? 1.0 : -1.0;
    if (nonincreasing && hi > 0.0 && lo < 0.0) {
      const double trend = (phat.adjoint() * (*nonincreasing) * phat * xm).trace().real();
      sign = trend >= 0.0 ? 1.0 : -1.0;
    }
    xm *= sign;
    const double delta = sign > 0.0 ? hi : -lo;
    const CMat step = CMat::Identity(a, a) - xm / delta;
    res.matrix = hermitian(phat * step * phat.adjoint());
    res.min_eigenvalues.push_back(min_eig(res.matrix));
  }
  return res;
}

std::vector<CMat> reconstruction_functionals(const CMat& analog, const ReceiveFilters& u,
                                             const Scenario& scenario) {
  std::vector<CMat> out;
  for (const auto& h : scenario.comm_channels) {
    const CVec ht = analog.adjoint() * h;
    out.push_back(ht * ht.adjoint());
  }
  for (std::size_t a = 0; a < scenario.n_targets(); ++a) {
    const CMat ga = scenario.sense_channels[a] * analog;
    for (std::size_t b = 0; b < u.filters.size(); ++b) {
      const CVec g = ga.adjoint() * u.filters[b];
      out.push_back(g * g.adjoint());
    }
  }
  out.push_back(analog.adjoint() * analog);
  return out;
}

VerificationReport verify_no_sensing_beams(const CovarianceSolution& sol, const Scenario& scenario,
                                           const SystemConfig& cfg,
                                           const std::optional<std::vector<double>>& weights) {
  const double power = sol.transmit_power();
  if (power > cfg.power_max_mw * (1.0 + 1e-9)) {
    throw std::invalid_argument("verify_no_sensing_beams: transmit power exceeds P_th");
  }
  double scale = std::max(1e-300, sol.digital_total().cwiseAbs().maxCoeff());
  for (const auto& w : sol.comm_covs) {
    if (min_eig(w) < -1e-9 * scale) throw std::invalid_argument("verify_no_sensing_beams: block not PSD");
  }
  if (min_eig(sol.sense_cov) < -1e-9 * scale) {
    throw std::invalid_argument("verify_no_sensing_beams: sensing covariance not PSD");
  }

  VerificationReport rep;
  const CMat r0 = sol.transmit_covariance();
  const ReceiveFilters u = update_receive_filters(covariance_factor(sol), scenario, cfg);
  const CovarianceSinrs s0 = covariance_sinrs(sol, scenario, cfg);
  rep.common_sinr_before = s0.common;
  rep.private_sinr_before = s0.priv;
  rep.objective_before = objective_from_sinrs(s0);
  rep.sensing_rates_before = sensing_rates_of(r0, u, scenario, cfg);
  rep.power_before = power;

  const bool no_sensing = sol.sense_cov.size() == 0 || sol.sense_cov.cwiseAbs().maxCoeff() == 0.0;
  rep.merged = merge_sensing(sol, weights ? *weights : uniform_merge_weights(sol.comm_covs.size()));

  const std::vector<CMat> fun = reconstruction_functionals(sol.analog, u, scenario);
  rep.reduced = rep.merged;
  bool all_rank_one = true;
  bool already_rank_one = true;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (auto& w : rep.reduced.comm_covs) {
    if (psd_rank(w) > 1) already_rank_one = false;
    const RankReduceResult rr = rank_reduce(w, fun);
    w = rr.matrix;
    rep.ranks.push_back(rr.rank);
    if (rr.rank > 1) all_rank_one = false;
    rep.min_eigenvalue = std::min(rep.min_eigenvalue, min_eig(w));
  }

  const CMat r1 = rep.merged.transmit_covariance();
  const double rscale = std::max(1e-300, r0.cwiseAbs().maxCoeff());
  rep.covariance_error = (r1 - r0).cwiseAbs().maxCoeff() / rscale;
  rep.power_after = rep.reduced.transmit_power();
  const CovarianceSinrs s1 = covariance_sinrs(rep.reduced, scenario, cfg);
  rep.common_sinr_after = s1.common;
  rep.private_sinr_after = s1.priv;
  rep.objective_after = objective_from_sinrs(s1);
  rep.sensing_rates_after = sensing_rates_of(rep.reduced.transmit_covariance(), u, scenario, cfg);

  rep.passed = rep.objective_after >= rep.objective_before - 1e-8;
  for (std::size_t m = 0; m < rep.sensing_rates_after.size(); ++m) {
    const double before = rep.sensing_rates_before[m];
    const double after = rep.sensing_rates_after[m];
    if (after < before - 1e-8) rep.passed = false;
    if (before >= cfg.sense_rate_min_bps && after < cfg.sense_rate_min_bps - 1e-8) rep.passed = false;
  }
  if (no_sensing && already_rank_one) {
    rep.status = "identical";
  } else {
    rep.status = all_rank_one ? "reduced" : "irreducible";
  }
  return rep;
}

CovarianceSolution covariance_from_hybrid(const CMat& analog, const CMat& digital,
                                          const CMat& sense_cov) {
  CovarianceSolution sol;
  sol.analog = analog;
  for (Eigen::Index k = 0; k < digital.cols(); ++k) {
    sol.comm_covs.push_back(digital.col(k) * digital.col(k).adjoint());
  }
  sol.sense_cov = sense_cov.size() > 0 ? sense_cov : CMat::Zero(analog.cols(), analog.cols());
  return sol;
}

}  // namespace nfisac
