#include "nfisac/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace nfisac {

namespace {

const double kLn2 = std::log(2.0);

double sqrt_power(const SystemConfig& cfg) { return std::sqrt(cfg.power_max_mw); }

double sense_threshold(const SystemConfig& cfg) {
  return cfg.sense_rate_min_bps > 0.0 ? std::exp2(cfg.sense_rate_min_bps) - 1.0 : 0.0;
}

bool has_common(StreamMode m) { return m == StreamMode::kRsma; }

// Columns [Re a; Im a] and [-Im a; Re a]: ||L^T [x; y]||^2 = |a^H z|^2.
void put_factor(RMat& l, Eigen::Index col, const CVec& a, double scale) {
  const Eigen::Index n = a.size();
  l.block(0, col, n, 1) = scale * a.real();
  l.block(n, col, n, 1) = scale * a.imag();
  l.block(0, col + 1, n, 1) = -scale * a.imag();
  l.block(n, col + 1, n, 1) = scale * a.real();
}

// Real coefficients of Re(c^H z).
void put_linear(RVec& lin, Eigen::Index offset, const CVec& c, double scale) {
  const Eigen::Index n = c.size();
  lin.segment(offset, n) += scale * c.real();
  lin.segment(offset + n, n) += scale * c.imag();
}

struct Layout {
  Eigen::Index nv = 0;
  std::vector<Eigen::Index> col;  // -1: stream fixed to zero
  Eigen::Index shares = -1;
  Eigen::Index rate = -1;
  Eigen::Index slack = -1;
  Eigen::Index dim = 0;
  std::size_t k_users = 0;
};

Layout make_layout(Eigen::Index nv, std::size_t k_users, bool common_stream, bool shares, bool rate,
                   bool slack) {
  Layout l;
  l.nv = nv;
  l.k_users = k_users;
  Eigen::Index off = 0;
  for (std::size_t j = 0; j <= k_users; ++j) {
    if (j == 0 && !common_stream) {
      l.col.push_back(-1);
      continue;
    }
    l.col.push_back(off);
    off += 2 * nv;
  }
  if (shares) {
    l.shares = off;
    off += static_cast<Eigen::Index>(k_users);
  }
  if (rate) l.rate = off++;
  if (slack) l.slack = off++;
  l.dim = off;
  return l;
}

void pack(const Layout& l, const CMat& v, RVec& z) {
  for (std::size_t j = 0; j < l.col.size(); ++j) {
    if (l.col[j] < 0) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    z.segment(l.col[j], l.nv) = v.col(jj).real();
    z.segment(l.col[j] + l.nv, l.nv) = v.col(jj).imag();
  }
}

CMat unpack(const Layout& l, const RVec& z) {
  CMat v = CMat::Zero(l.nv, static_cast<Eigen::Index>(l.col.size()));
  for (std::size_t j = 0; j < l.col.size(); ++j) {
    if (l.col[j] < 0) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    v.col(jj).real() = z.segment(l.col[j], l.nv);
    v.col(jj).imag() = z.segment(l.col[j] + l.nv, l.nv);
  }
  return v;
}

// Channels seen by the variable block V (P = sqrt(P_th) A V), noise-normalized.
struct EffectiveChannels {
  std::vector<CVec> users;                 // a_k
  std::vector<std::vector<CVec>> sensing;  // b[j][m]
  std::vector<double> filter_norm2;
};

EffectiveChannels effective_channels(const CMat& mapping, const ReceiveFilters& u,
                                     const Scenario& scenario, const SystemConfig& cfg) {
  EffectiveChannels e;
  const double s = sqrt_power(cfg);
  const double sc = s / std::sqrt(cfg.noise_comm_mw);
  for (const auto& h : scenario.comm_channels) e.users.push_back(sc * (mapping.adjoint() * h));
  const double ss = s / std::sqrt(cfg.noise_sense_mw);
  const std::size_t m_t = scenario.n_targets();
  e.sensing.assign(m_t, std::vector<CVec>(m_t));
  for (std::size_t j = 0; j < m_t; ++j) {
    const CMat gj = scenario.sense_channels[j] * mapping;
    for (std::size_t m = 0; m < m_t; ++m) {
      e.sensing[j][m] = (ss * std::sqrt(cfg.reflect(j))) * (gj.adjoint() * u.filters[m]);
    }
  }
  for (const auto& f : u.filters) e.filter_norm2.push_back(f.squaredNorm());
  return e;
}

bool is_identity(const CMat& a) {
  return a.rows() == a.cols() && a.isIdentity(0.0);
}

// ||A V||^2 <= 1 in normalized units.
qcqp::Quadratic power_constraint(const Layout& l, const CMat& mapping) {
  qcqp::Quadratic q;
  q.constant = -1.0;
  if (is_identity(mapping)) {
    for (Eigen::Index off : l.col) {
      if (off >= 0) q.diags.push_back({off, 2 * l.nv, 1.0});
    }
    return q;
  }
  Eigen::SelfAdjointEigenSolver<CMat> es(mapping.adjoint() * mapping);
  RMat fac(2 * l.nv, 2 * l.nv);
  for (Eigen::Index i = 0; i < l.nv; ++i) {
    const double lam = std::max(0.0, es.eigenvalues()(i));
    put_factor(fac, 2 * i, es.eigenvectors().col(i), std::sqrt(lam));
  }
  for (Eigen::Index off : l.col) {
    if (off >= 0) q.factors.push_back({off, fac});
  }
  return q;
}

// Sensing restriction t_m(z) = thr - f_m(x_m, z) scaled by 1/norm.
qcqp::Quadratic sensing_constraint(const Layout& l, const EffectiveChannels& e, const CVec& x,
                                   std::size_t m, double thr, double norm) {
  qcqp::Quadratic q;
  q.linear = RVec::Zero(l.dim);
  const std::size_t m_t = e.sensing.size();
  const double xn2 = x.squaredNorm();
  if (m_t > 1 && xn2 > 0.0) {
    RMat fac(2 * l.nv, 2 * static_cast<Eigen::Index>(m_t - 1));
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < m_t; ++j) {
      if (j == m) continue;
      put_factor(fac, c, e.sensing[j][m], std::sqrt(xn2 / norm));
      c += 2;
    }
    for (Eigen::Index off : l.col) {
      if (off >= 0) q.factors.push_back({off, fac});
    }
  }
  for (std::size_t k = 0; k < l.col.size(); ++k) {
    if (l.col[k] < 0) continue;
    const cplx xk = x(static_cast<Eigen::Index>(k));
    put_linear(q.linear, l.col[k], std::conj(xk) * e.sensing[m][m], -2.0 / norm);
  }
  q.constant = (e.filter_norm2[m] * xn2 + thr) / norm;
  return q;
}

double rate_of(const Precoder& p, const CommonRateAlloc& alloc, const Scenario& s,
               const SystemConfig& cfg) {
  return comm_rates(p, alloc, s, cfg).min_total;
}

// Water-filled split for a precoder.
CommonRateAlloc refit_split(const Precoder& p, StreamMode mode, const Scenario& s,
                            const SystemConfig& cfg) {
  const RateReport r = comm_rates(p, CommonRateAlloc::zeros(s.n_users()), s, cfg);
  if (!has_common(mode)) return CommonRateAlloc::zeros(s.n_users());
  return optimal_common_split(r.common_rate, r.private_rates);
}

double min_sensing_sinr(const Precoder& p, const ReceiveFilters& u, const Scenario& s,
                        const SystemConfig& cfg) {
  const auto g = sensing_sinr(p, u, s, cfg);
  return g.empty() ? std::numeric_limits<double>::infinity() : *std::min_element(g.begin(), g.end());
}

double al_value(const Precoder& p, const CommonRateAlloc& alloc,
                const std::optional<PenaltyTerm>& pen, const Scenario& s, const SystemConfig& cfg) {
  if (pen) return augmented_lagrangian(p, alloc, *pen, s, cfg);
  return rate_of(p, alloc, s, cfg);
}

double inf_norm(const CMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

double wmmse_tau() { return 1.0 / kLn2 + std::log2(kLn2); }

// ----- closed-form blocks ----------------------------------------------------

ReceiveFilters update_receive_filters(const Precoder& p, const Scenario& scenario,
                                      const SystemConfig& cfg) {
  const std::size_t m_t = scenario.n_targets();
  ReceiveFilters out;
  if (m_t == 0) return out;
  std::vector<CMat> gp(m_t);
  for (std::size_t j = 0; j < m_t; ++j) {
    gp[j] = scenario.sense_channels[j] * p / std::sqrt(cfg.noise_sense_mw);
  }
  const Eigen::Index nr = scenario.sense_channels[0].rows();
  for (std::size_t m = 0; m < m_t; ++m) {
    CMat q = CMat::Identity(nr, nr);
    for (std::size_t j = 0; j < m_t; ++j) {
      if (j != m) q.noalias() += cfg.reflect(j) * gp[j] * gp[j].adjoint();
    }
    const Eigen::LLT<CMat> llt(q);
    // Top eigenvector of L^{-1} A L^{-H} with A = alpha G R G^H = B B^H.
    const CMat b = llt.matrixL().solve(gp[m]);
    Eigen::JacobiSVD<CMat> svd(b, Eigen::ComputeThinU);
    CVec y = svd.matrixU().col(0);
    CVec u = llt.matrixU().solve(y);
    u.normalize();
    Eigen::Index idx = 0;
    u.cwiseAbs().maxCoeff(&idx);
    u *= std::abs(u(idx)) / u(idx);
    out.filters.push_back(u);
  }
  return out;
}

Equalizers update_equalizers(const Precoder& p, const Scenario& scenario, const SystemConfig& cfg) {
  Equalizers e;
  for (std::size_t k = 0; k < scenario.n_users(); ++k) {
    const CVec& h = scenario.comm_channels[k];
    const PowerTerms t = power_terms(p, h, k, cfg.noise_comm_mw, cfg.sic_residual);
    const cplx gc = (h.adjoint() * p.col(0))(0);
    const cplx gp = (h.adjoint() * p.col(static_cast<Eigen::Index>(k) + 1))(0);
    e.common.push_back(std::conj(gc) / t.total_common);
    e.priv.push_back(std::conj(gp) / t.total_private);
    e.mmse_common.push_back(t.interference_common / t.total_common);
    e.mmse_private.push_back(t.interference_private / t.total_private);
  }
  return e;
}

double stream_mse(cplx equalizer, double total_power, cplx channel_gain) {
  return std::norm(equalizer) * total_power - 2.0 * std::real(equalizer * channel_gain) + 1.0;
}

Weights update_weights(const std::vector<double>& mmse_common,
                       const std::vector<double>& mmse_private) {
  Weights w;
  auto one = [](double d) {
    if (!(d > 0.0)) throw std::domain_error("update_weights: MSE must be positive");
    return 1.0 / (d * kLn2);
  };
  for (double d : mmse_common) w.common.push_back(one(d));
  for (double d : mmse_private) w.priv.push_back(one(d));
  return w;
}

double augmented_wmse(double weight, double mse) { return weight * mse - std::log2(weight); }

std::vector<CVec> update_qt_aux(const Precoder& p, const ReceiveFilters& u,
                                const Scenario& scenario, const SystemConfig& cfg) {
  const std::size_t m_t = scenario.n_targets();
  std::vector<CVec> out;
  for (std::size_t m = 0; m < m_t; ++m) {
    const CVec& um = u.filters[m];
    double interference = cfg.noise_sense_mw * um.squaredNorm();
    for (std::size_t j = 0; j < m_t; ++j) {
      if (j == m) continue;
      interference += cfg.reflect(j) * (um.adjoint() * scenario.sense_channels[j] * p).squaredNorm();
    }
    const CVec s = std::sqrt(cfg.reflect(m)) * (p.adjoint() * (scenario.sense_channels[m].adjoint() * um));
    out.push_back(s / interference);
  }
  return out;
}

double qt_surrogate(const CVec& x, const Precoder& p, const ReceiveFilters& u, std::size_t target,
                    const Scenario& scenario, const SystemConfig& cfg) {
  const CVec& um = u.filters.at(target);
  double interference = cfg.noise_sense_mw * um.squaredNorm();
  for (std::size_t j = 0; j < scenario.n_targets(); ++j) {
    if (j == target) continue;
    interference += cfg.reflect(j) * (um.adjoint() * scenario.sense_channels[j] * p).squaredNorm();
  }
  const CVec s =
      std::sqrt(cfg.reflect(target)) * (p.adjoint() * (scenario.sense_channels[target].adjoint() * um));
  return 2.0 * std::real(x.dot(s)) - interference * x.squaredNorm();
}

CMat update_digital(const CMat& analog, const Precoder& p, const CMat& dual, double penalty) {
  CMat gram = analog.adjoint() * analog;
  CMat rhs = analog.adjoint() * (dual.size() > 0 ? CMat(p + penalty * dual) : p);
  Eigen::LLT<CMat> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    const double ridge = 1e-10 * gram.trace().real() / static_cast<double>(gram.rows());
    gram.diagonal().array() += ridge;
    llt.compute(gram);
    if (llt.info() != Eigen::Success) throw std::runtime_error("update_digital: singular analog Gram");
  }
  return llt.solve(rhs);
}

CMat update_analog(const CMat& analog_prev, const CMat& digital, const Precoder& p,
                   const CMat& dual, double penalty) {
  CMat f = analog_prev;
  const CMat y = digital * digital.adjoint();
  const CMat z = (dual.size() > 0 ? CMat(p + penalty * dual) : p) * digital.adjoint();
  CMat x = f * y;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      const cplx chi = z(i, j) - x(i, j) + f(i, j) * y(j, j);
      const double mag = std::abs(chi);
      if (!(mag > 0.0)) continue;
      const cplx next = chi / mag;
      const cplx delta = next - f(i, j);
      f(i, j) = next;
      x.row(i) += delta * y.row(j);
    }
  }
  return f;
}

double hybrid_fit_objective(const CMat& analog, const CMat& digital, const Precoder& p,
                            const CMat& dual, double penalty) {
  CMat r = p - analog * digital;
  if (dual.size() > 0) r += penalty * dual;
  return r.squaredNorm();
}

// ----- conic subproblem ------------------------------------------------------

InnerConvexResult solve_inner_convex(const AuxVars& aux, const ReceiveFilters& u,
                                     const std::optional<PenaltyTerm>& penalty,
                                     const CMat& mapping, const CMat& incumbent_v,
                                     const CommonRateAlloc& incumbent_alloc,
                                     const Scenario& scenario, const SystemConfig& cfg,
                                     const OptimizerOptions& opts) {
  const std::size_t k_users = scenario.n_users();
  const std::size_t m_t = scenario.n_targets();
  const double sp = sqrt_power(cfg);
  const double sigma = std::sqrt(cfg.noise_comm_mw);
  const double tau = wmmse_tau();
  const double thr = sense_threshold(cfg);
  const bool common = has_common(opts.mode);

  bool shares = common;
  if (common) {
    for (cplx w : aux.equalizers.common) {
      if (std::norm(w) == 0.0) shares = false;
    }
  }
  const Layout l = make_layout(mapping.cols(), k_users, common, shares, true, false);
  const EffectiveChannels e = effective_channels(mapping, u, scenario, cfg);

  qcqp::Problem prob;
  prob.dim = l.dim;
  prob.objective.linear = RVec::Zero(l.dim);
  prob.objective.linear(l.rate) = -1.0;
  if (penalty) {
    // (1/2 rho) ||Z - (F W_hat - rho D)||^2 in power-normalized units.
    const double w = 0.5 / penalty->penalty;
    const CMat target = penalty->analog * penalty->digital / sp - penalty->penalty * penalty->dual;
    for (std::size_t j = 0; j < l.col.size(); ++j) {
      if (l.col[j] < 0) continue;
      prob.objective.diags.push_back({l.col[j], 2 * l.nv, w});
      put_linear(prob.objective.linear, l.col[j], target.col(static_cast<Eigen::Index>(j)), -2.0 * w);
    }
    prob.objective.constant = w * target.squaredNorm();
  }

  for (std::size_t k = 0; k < k_users; ++k) {
    const CVec& a = e.users[k];
    const auto kk = static_cast<Eigen::Index>(k);
    if (shares) {
      const double eta = aux.weights.common[k];
      const cplx w = aux.equalizers.common[k] * sigma;
      qcqp::Quadratic q;
      q.linear = RVec::Zero(l.dim);
      RMat fac(2 * l.nv, 2);
      put_factor(fac, 0, a, std::sqrt(eta * std::norm(w)));
      for (Eigen::Index off : l.col) {
        if (off >= 0) q.factors.push_back({off, fac});
      }
      q.linear.segment(l.shares, static_cast<Eigen::Index>(k_users)).setOnes();
      put_linear(q.linear, l.col[0], std::conj(w) * a, -2.0 * eta);
      q.constant = eta * (std::norm(w) + 1.0) - std::log2(eta) - tau;
      prob.constraints.push_back(std::move(q));
    }
    {
      const double eta = aux.weights.priv[k];
      const cplx w = aux.equalizers.priv[k] * sigma;
      qcqp::Quadratic q;
      q.linear = RVec::Zero(l.dim);
      RMat fac(2 * l.nv, 2);
      put_factor(fac, 0, a, std::sqrt(eta * std::norm(w)));
      for (std::size_t j = 1; j <= k_users; ++j) q.factors.push_back({l.col[j], fac});
      if (l.col[0] >= 0 && cfg.sic_residual > 0.0) {
        q.factors.push_back({l.col[0], fac * std::sqrt(cfg.sic_residual)});
      }
      q.linear(l.rate) = 1.0;
      if (shares) q.linear(l.shares + kk) = -1.0;
      put_linear(q.linear, l.col[k + 1], std::conj(w) * a, -2.0 * eta);
      q.constant = eta * (std::norm(w) + 1.0) - std::log2(eta) - tau;
      prob.constraints.push_back(std::move(q));
    }
    if (shares) {
      qcqp::Quadratic q;
      q.linear = RVec::Zero(l.dim);
      q.linear(l.shares + kk) = -1.0;
      prob.constraints.push_back(std::move(q));
    }
  }
  if (thr > 0.0) {
    for (std::size_t m = 0; m < m_t; ++m) {
      // x is stored in raw units; the noise-normalized form uses x sigma_0.
      const CVec xm = aux.qt_vectors[m] * std::sqrt(cfg.noise_sense_mw);
      prob.constraints.push_back(sensing_constraint(l, e, xm, m, thr, std::max(1.0, thr)));
    }
  }
  prob.constraints.push_back(power_constraint(l, mapping));

  // Start strictly inside where cheap: shrink the split and the rate variable.
  const Precoder p_inc = mapping * incumbent_v;
  const RateReport rep = comm_rates(p_inc, CommonRateAlloc::zeros(k_users), scenario, cfg);
  RVec z0 = RVec::Zero(l.dim);
  CMat v0 = incumbent_v / sp;
  const double pw = (mapping * v0).squaredNorm();
  if (pw >= 1.0 - 1e-9) v0 *= std::sqrt((1.0 - 1e-7) / pw);
  pack(l, v0, z0);
  std::vector<double> c0(k_users, 0.0);
  if (shares) {
    const double eps = 1e-3;
    for (std::size_t k = 0; k < k_users; ++k) {
      const double ck = k < incumbent_alloc.shares.size() ? std::max(0.0, incumbent_alloc.shares[k]) : 0.0;
      c0[k] = (1.0 - eps) * ck + eps * 0.5 * rep.common_rate / static_cast<double>(k_users);
      z0(l.shares + static_cast<Eigen::Index>(k)) = c0[k];
    }
  }
  double r0 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < k_users; ++k) r0 = std::min(r0, c0[k] + rep.private_rates[k]);
  z0(l.rate) = r0 - 1e-3 * std::max(1.0, std::abs(r0));

  const qcqp::BarrierSolver solver(opts.solver);
  const qcqp::Result res = solver.solve(prob, z0);

  InnerConvexResult out;
  out.status = res.status;
  out.gap = res.gap;
  out.newton_steps = res.newton_steps;
  out.precoder = p_inc;
  out.alloc = incumbent_alloc;
  if (out.alloc.shares.size() != k_users) out.alloc = CommonRateAlloc::zeros(k_users);
  if (res.status == qcqp::Status::kInfeasible) {
    out.infeasible = true;
    out.kept_incumbent = true;
    return out;
  }
  const CMat v = unpack(l, res.z) * sp;
  CommonRateAlloc alloc = CommonRateAlloc::zeros(k_users);
  if (shares) {
    for (std::size_t k = 0; k < k_users; ++k) {
      alloc.shares[k] = std::max(0.0, res.z(l.shares + static_cast<Eigen::Index>(k)));
    }
  }
  const Precoder p_new = mapping * v;
  out.rate_var = res.z(l.rate);
  const double al_new = al_value(p_new, alloc, penalty, scenario, cfg);
  const double al_old = al_value(p_inc, out.alloc, penalty, scenario, cfg);
  if (al_new >= al_old) {
    out.precoder = p_new;
    out.alloc = alloc;
  } else {
    out.kept_incumbent = true;
  }
  return out;
}

// ----- loops -----------------------------------------------------------------

double augmented_lagrangian(const Precoder& p, const CommonRateAlloc& alloc,
                            const PenaltyTerm& pen, const Scenario& scenario,
                            const SystemConfig& cfg) {
  const double sp = sqrt_power(cfg);
  const CMat gap = (p - pen.analog * pen.digital) / sp;
  double dual_term = 0.0;
  if (pen.dual.size() > 0) dual_term = (pen.dual.adjoint() * gap).trace().real();
  return rate_of(p, alloc, scenario, cfg) - dual_term - gap.squaredNorm() / (2.0 * pen.penalty);
}

RateReport best_report(const Precoder& p, StreamMode mode, const Scenario& scenario,
                       const SystemConfig& cfg, ReceiveFilters* filters_out,
                       CommonRateAlloc* alloc_out) {
  const ReceiveFilters u = update_receive_filters(p, scenario, cfg);
  const CommonRateAlloc alloc = refit_split(p, mode, scenario, cfg);
  if (filters_out) *filters_out = u;
  if (alloc_out) *alloc_out = alloc;
  return evaluate(p, alloc, u, scenario, cfg);
}

bool meets_constraints(const RateReport& r, const SystemConfig& cfg, double slack) {
  if (r.power_mw > cfg.power_max_mw * (1.0 + 1e-9)) return false;
  if (r.common_violation) return false;
  if (cfg.sense_rate_min_bps > 0.0) {
    for (double s : r.sensing_rates) {
      if (s < cfg.sense_rate_min_bps - slack) return false;
    }
  }
  return true;
}

namespace {

// Dual in raw precoder units, for the scale-equivariant fitting blocks.
CMat raw_dual(const PddState& st, const SystemConfig& cfg) { return st.dual * sqrt_power(cfg); }

// Every SINR, common, private and sensing, is non-decreasing in a common
// scaling of P, but a fixed-equalizer step only creeps toward the power
// boundary. Try the boundary (and halfway there) and keep what helps the AL.
void radial_step(CMat& v, Precoder& p, CommonRateAlloc& alloc, const std::optional<PenaltyTerm>& pen, const Scenario& s, const SystemConfig& cfg,
                 StreamMode mode) {
  const double pw = p.squaredNorm();
  if (!(pw > 0.0)) return;
  const double full = std::sqrt(cfg.power_max_mw * (1.0 - 1e-9) / pw);
  if (!(full > 1.0 + 1e-9)) return;
  const double base = al_value(p, alloc, pen, s, cfg);
  for (double f : {full, std::sqrt(full)}) {
    const Precoder q = f * p;
    const CommonRateAlloc a = refit_split(q, mode, s, cfg);
    if (al_value(q, a, pen, s, cfg) > base) {
      p = q;
      v *= f;
      alloc = a;
      return;
    }
  }
}

// One sweep of the auxiliary blocks followed by the conic step on V (P = A V).
struct StepOut {
  CMat v;
  Precoder p;
  CommonRateAlloc alloc;
  ReceiveFilters u;
  bool infeasible = false;
};

StepOut aux_and_convex(const CMat& mapping, const CMat& v, const Precoder& p,
                       const CommonRateAlloc& alloc, const std::optional<PenaltyTerm>& pen,
                       const Scenario& s, const SystemConfig& cfg, const OptimizerOptions& opts,
                       std::vector<double>* blocks) {
  StepOut out;
  out.u = update_receive_filters(p, s, cfg);
  const double al0 = blocks ? al_value(p, alloc, pen, s, cfg) : 0.0;
  if (blocks) blocks->push_back(al0);  // filters
  AuxVars aux;
  aux.equalizers = update_equalizers(p, s, cfg);
  if (blocks) blocks->push_back(al0);  // equalizers
  aux.weights = update_weights(aux.equalizers.mmse_common, aux.equalizers.mmse_private);
  if (blocks) blocks->push_back(al0);  // weights
  aux.qt_vectors = update_qt_aux(p, out.u, s, cfg);
  if (blocks) blocks->push_back(al0);  // quadratic-transform vectors
  const InnerConvexResult r = solve_inner_convex(aux, out.u, pen, mapping, v, alloc, s, cfg, opts);
  out.infeasible = r.infeasible;
  out.p = r.precoder;
  if (r.kept_incumbent) {
    out.v = v;
  } else if (is_identity(mapping)) {
    out.v = r.precoder;
  } else {
    // Recover V from P = A V (A has full column rank).
    out.v = mapping.colPivHouseholderQr().solve(r.precoder);
  }
  out.alloc = refit_split(out.p, opts.mode, s, cfg);
  if (al_value(out.p, out.alloc, pen, s, cfg) < al_value(out.p, r.alloc, pen, s, cfg)) out.alloc = r.alloc;
  if (!out.infeasible) radial_step(out.v, out.p, out.alloc, pen, s, cfg, opts.mode);
  if (blocks) blocks->push_back(al_value(out.p, out.alloc, pen, s, cfg));
  return out;
}

// Quadratic-transform max-min step (or projection) that restores the sensing
// constraints on a fully-digital precoder.
Precoder sensing_step(const Precoder& p, const Precoder& anchor, bool project, const Scenario& s,
                      const SystemConfig& cfg, const OptimizerOptions& opts, bool* ok) {
  const std::size_t k_users = s.n_users();
  const double sp = sqrt_power(cfg);
  const double thr = sense_threshold(cfg);
  const ReceiveFilters u = update_receive_filters(p, s, cfg);
  const std::vector<CVec> x = update_qt_aux(p, u, s, cfg);
  const CMat ident = CMat::Identity(p.rows(), p.rows());
  const Layout l = make_layout(p.rows(), k_users, has_common(opts.mode), false, false, !project);
  const EffectiveChannels e = effective_channels(ident, u, s, cfg);
  qcqp::Problem prob;
  prob.dim = l.dim;
  prob.objective.linear = RVec::Zero(l.dim);
  const double norm = std::max(1.0, thr);
  for (std::size_t m = 0; m < s.n_targets(); ++m) {
    // Margin so the restored point is strictly feasible after rounding.
    const CVec xm = x[m] * std::sqrt(cfg.noise_sense_mw);
    qcqp::Quadratic q = sensing_constraint(l, e, xm, m, project ? thr * (1.0 + 1e-3) : 0.0, norm);
    if (!project) q.linear(l.slack) = 1.0;
    prob.constraints.push_back(std::move(q));
  }
  prob.constraints.push_back(power_constraint(l, ident));
  RVec z0 = RVec::Zero(l.dim);
  CMat v0 = p / sp;
  if (v0.squaredNorm() >= 1.0 - 1e-9) v0 *= std::sqrt((1.0 - 1e-6) / v0.squaredNorm());
  pack(l, v0, z0);
  if (project) {
    const CMat target = anchor / sp;
    for (std::size_t j = 0; j < l.col.size(); ++j) {
      if (l.col[j] < 0) continue;
      prob.objective.diags.push_back({l.col[j], 2 * l.nv, 1.0});
      put_linear(prob.objective.linear, l.col[j], target.col(static_cast<Eigen::Index>(j)), -2.0);
    }
    prob.objective.constant = target.squaredNorm();
  } else {
    prob.objective.linear(l.slack) = -1.0;
    z0(l.slack) = -1.0;
  }
  const qcqp::BarrierSolver solver(opts.solver);
  const qcqp::Result res = solver.solve(prob, z0);
  *ok = res.status != qcqp::Status::kInfeasible;
  if (!*ok) return p;
  return unpack(l, res.z) * sp;
}

// Returns false if no sensing-feasible precoder was reached.
bool restore_sensing(Precoder& p, const Scenario& s, const SystemConfig& cfg,
                     const OptimizerOptions& opts) {
  const double thr = sense_threshold(cfg);
  if (!(thr > 0.0) || s.n_targets() == 0) return true;
  const Precoder anchor = p;
  double prev = -1.0;
  for (int it = 0; it < opts.restoration_max; ++it) {
    const ReceiveFilters u = update_receive_filters(p, s, cfg);
    const double g = min_sensing_sinr(p, u, s, cfg);
    if (g >= thr * (1.0 + 1e-6)) return true;
    if (it > 0 && g <= prev * (1.0 + 1e-9)) return false;
    prev = g;
    bool ok = false;
    const Precoder proj = sensing_step(p, anchor, true, s, cfg, opts, &ok);
    if (ok) {
      p = proj;
      continue;
    }
    p = sensing_step(p, anchor, false, s, cfg, opts, &ok);
    if (!ok) return false;
  }
  const ReceiveFilters u = update_receive_filters(p, s, cfg);
  return min_sensing_sinr(p, u, s, cfg) >= thr;
}

struct RefineOut {
  CMat v;
  Precoder p;
  CommonRateAlloc alloc;
  int iterations = 0;
  bool infeasible = false;
  std::vector<double> trace;
};

// Auxiliary/conic alternation on V with P = A V and no penalty.
RefineOut refine(const CMat& mapping, const CMat& v0, const Scenario& s, const SystemConfig& cfg,
                 const OptimizerOptions& opts, int max_iter, double tol) {
  RefineOut out;
  out.v = v0;
  out.p = mapping * v0;
  if (!has_common(opts.mode)) {
    out.v.col(0).setZero();
    out.p.col(0).setZero();
  }
  out.alloc = refit_split(out.p, opts.mode, s, cfg);
  double prev = rate_of(out.p, out.alloc, s, cfg);
  for (int it = 0; it < max_iter; ++it) {
    StepOut st = aux_and_convex(mapping, out.v, out.p, out.alloc, std::nullopt, s, cfg, opts, nullptr);
    ++out.iterations;
    if (st.infeasible) {
      out.infeasible = it == 0;
      break;
    }
    out.v = st.v;
    out.p = st.p;
    out.alloc = st.alloc;
    const double now = rate_of(out.p, out.alloc, s, cfg);
    out.trace.push_back(now);
    if (std::abs(now - prev) <= tol) break;
    prev = now;
  }
  return out;
}

void fill_solution(Solution& sol, const Precoder& p, StreamMode mode, const Scenario& s,
                   const SystemConfig& cfg) {
  sol.precoder = p;
  sol.report = best_report(p, mode, s, cfg, &sol.filters, &sol.alloc);
  sol.feasible = meets_constraints(sol.report, cfg);
}

// A starting precoder for RSMA from an SDMA point: hand the common stream
// 10% of the power along the sum of normalized user channels.
Precoder seed_common_stream(const Precoder& p, const Scenario& s, const SystemConfig& cfg) {
  Precoder out = p;
  if (out.col(0).squaredNorm() > 1e-12 * std::max(1e-300, out.squaredNorm())) return out;
  CVec dir = CVec::Zero(p.rows());
  for (const auto& h : s.comm_channels) dir += h / h.norm();
  if (dir.norm() == 0.0) return out;
  dir.normalize();
  const double total = std::min(out.squaredNorm(), cfg.power_max_mw);
  out.rightCols(out.cols() - 1) *= std::sqrt(0.9);
  out.col(0) = std::sqrt(0.1 * total) * dir;
  return out;
}

}  // namespace

InnerResult inner_loop(const PddState& state, const Scenario& scenario, const SystemConfig& cfg,
                       const Iterate& warm, const OptimizerOptions& opts) {
  InnerResult out;
  out.iterate = warm;
  Iterate& it = out.iterate;
  const CMat dual_raw = raw_dual(state, cfg);
  const CMat ident = CMat::Identity(it.precoder.rows(), it.precoder.rows());
  auto pen_of = [&](const Iterate& x) {
    return PenaltyTerm{state.dual, state.penalty, x.beamformer.analog, x.beamformer.digital};
  };
  double prev = augmented_lagrangian(it.precoder, it.alloc, pen_of(it), scenario, cfg);
  out.block_values.push_back(prev);
  for (int i = 0; i < opts.inner_max; ++i) {
    StepOut st = aux_and_convex(ident, it.precoder, it.precoder, it.alloc, pen_of(it), scenario, cfg,
                                opts, &out.block_values);
    ++out.iterations;
    if (st.infeasible && i == 0 && out.iterations == 1) {
      out.infeasible = true;
    }
    it.precoder = st.p;
    it.alloc = st.alloc;
    it.filters = st.u;
    it.beamformer.digital = update_digital(it.beamformer.analog, it.precoder, dual_raw, state.penalty);
    out.block_values.push_back(augmented_lagrangian(it.precoder, it.alloc, pen_of(it), scenario, cfg));
    it.beamformer.analog = update_analog(it.beamformer.analog, it.beamformer.digital, it.precoder,
                                         dual_raw, state.penalty);
    const double now = augmented_lagrangian(it.precoder, it.alloc, pen_of(it), scenario, cfg);
    out.block_values.push_back(now);
    out.al_trace.push_back(now);
    if (out.infeasible) break;
    if (std::abs(now - prev) <= opts.inner_tol) break;
    prev = now;
  }
  return out;
}

HybridBeamformer initial_beamformer(const Scenario& scenario, const SystemConfig& cfg,
                                    const OptimizerOptions& opts) {
  const auto nt = static_cast<Eigen::Index>(cfg.n_tx);
  const auto nf = static_cast<Eigen::Index>(cfg.n_rf);
  const auto k = static_cast<Eigen::Index>(scenario.n_users());
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  HybridBeamformer bf;
  bf.analog.resize(nt, nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    for (Eigen::Index i = 0; i < nt; ++i) bf.analog(i, j) = std::polar(1.0, phase(rng));
  }
  // Matched filter through the analog stage, then projected onto its range.
  Precoder target = Precoder::Zero(nt, k + 1);
  for (Eigen::Index u = 0; u < k; ++u) {
    const CVec& h = scenario.comm_channels[static_cast<std::size_t>(u)];
    target.col(u + 1) = h / h.norm();
    if (has_common(opts.mode)) target.col(0) += h / h.norm();
  }
  if (target.col(0).norm() > 0.0) target.col(0).normalize();
  bf.digital = update_digital(bf.analog, target, CMat(), 1.0);
  const double pw = bf.product().squaredNorm();
  if (pw > 0.0) bf.digital *= std::sqrt(opts.init_power_fraction * cfg.power_max_mw / pw);
  return bf;
}

Solution outer_loop(const Scenario& scenario, const SystemConfig& cfg, const OptimizerOptions& opts,
                    const Solution* warm) {
  const double sp = sqrt_power(cfg);
  Solution best;
  best.hybrid = true;
  bool have_best = false;
  double best_obj = -std::numeric_limits<double>::infinity();

  auto consider = [&](const HybridBeamformer& bf) {
    Precoder p = bf.product();
    if (!has_common(opts.mode)) p.col(0).setZero();
    const RateReport rep = best_report(p, opts.mode, scenario, cfg);
    if (!meets_constraints(rep, cfg)) return;
    if (have_best && !(rep.objective > best_obj)) return;
    have_best = true;
    best_obj = rep.objective;
    best.beamformer = bf;
    if (!has_common(opts.mode)) best.beamformer.digital.col(0).setZero();
    fill_solution(best, p, opts.mode, scenario, cfg);
  };

  HybridBeamformer bf;
  if (warm && warm->hybrid && warm->beamformer.analog.size() > 0) {
    bf = warm->beamformer;
    consider(bf);
  } else {
    bf = initial_beamformer(scenario, cfg, opts);
  }

  Iterate it;
  it.beamformer = bf;
  it.precoder = bf.product();
  if (has_common(opts.mode)) {
    it.precoder = seed_common_stream(it.precoder, scenario, cfg);
  } else {
    it.precoder.col(0).setZero();
  }
  const bool restored = restore_sensing(it.precoder, scenario, cfg, opts);
  if (!restored && !have_best) {
    best.status = "infeasible";
    best.beamformer = bf;
    fill_solution(best, bf.product(), opts.mode, scenario, cfg);
    best.feasible = false;
    return best;
  }
  // Re-fit the hybrid pair to the (possibly restored) starting precoder.
  for (int s = 0; s < 3; ++s) {
    it.beamformer.digital = update_digital(it.beamformer.analog, it.precoder, CMat(), 1.0);
    it.beamformer.analog = update_analog(it.beamformer.analog, it.beamformer.digital, it.precoder,
                                         CMat(), 1.0);
  }
  it.beamformer.digital = update_digital(it.beamformer.analog, it.precoder, CMat(), 1.0);
  it.alloc = refit_split(it.precoder, opts.mode, scenario, cfg);

  PddState st;
  st.dual = CMat::Zero(it.precoder.rows(), it.precoder.cols());
  st.penalty = opts.initial_penalty;
  st.shrink = opts.shrink;
  st.residual_gate = inf_norm(it.precoder - it.beamformer.product()) + 1.0;

  Solution run;
  double prev_obj = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool infeasible = false;
  for (int n = 1; n <= opts.outer_max; ++n) {
    st.outer_iter = n;
    InnerResult in = inner_loop(st, scenario, cfg, it, opts);
    run.inner_iterations += in.iterations;
    run.block_values.push_back(std::move(in.block_values));
    if (in.infeasible) {
      infeasible = true;
      break;
    }
    it = in.iterate;
    const CMat gap = it.precoder - it.beamformer.product();
    const double r = inf_norm(gap);
    const double obj = rate_of(it.precoder, it.alloc, scenario, cfg);
    TraceRow row;
    row.outer_iter = n;
    row.inner_iter = in.iterations;
    row.al_objective = in.al_trace.empty() ? 0.0 : in.al_trace.back();
    row.residual_inf = r;
    row.min_rate = obj;
    const auto sr = sensing_sinr(it.precoder, it.filters, scenario, cfg);
    row.min_sensing_rate = sr.empty() ? 0.0 : log2p1(*std::min_element(sr.begin(), sr.end()));
    row.penalty = st.penalty;
    run.trace.push_back(row);
    run.outer_iterations = n;
    run.residual_inf = r;
    run.pdd_objective = obj;

    if (r <= st.residual_gate) {
      st.dual += gap / (sp * st.penalty);
    } else {
      st.penalty *= st.shrink;
    }
    st.residual_gate = 0.9 * r;

    HybridBeamformer fit = it.beamformer;
    fit.digital = update_digital(fit.analog, it.precoder, CMat(), 1.0);
    consider(fit);
    consider(it.beamformer);

    if (r <= opts.outer_residual_tol && std::isfinite(prev_obj) &&
        std::abs(obj - prev_obj) <= opts.outer_objective_tol) {
      converged = true;
      break;
    }
    prev_obj = obj;
  }

  double fit_objective = 0.0;
  if (!infeasible) {
    // Digital refinement at the final analog matrix.
    HybridBeamformer fin = it.beamformer;
    fin.digital = update_digital(fin.analog, it.precoder, CMat(), 1.0);
    Precoder fit = fin.product();
    if (!has_common(opts.mode)) fit.col(0).setZero();
    fit_objective = best_report(fit, opts.mode, scenario, cfg).objective;
    const RefineOut pol = refine(fin.analog, fin.digital, scenario, cfg, opts, opts.polish_max,
                                 opts.polish_tol);
    if (!pol.infeasible) {
      fin.digital = pol.v;
      consider(fin);
    }
  }

  if (!have_best) {
    best.beamformer = it.beamformer;
    fill_solution(best, it.beamformer.product(), opts.mode, scenario, cfg);
    best.feasible = false;
    best.status = "infeasible";
  } else {
    best.status = converged ? "converged" : (infeasible ? "stalled" : "iteration_limit");
  }
  best.hybrid = true;
  best.outer_iterations = run.outer_iterations;
  best.inner_iterations = run.inner_iterations;
  best.residual_inf = run.residual_inf;
  best.pdd_objective = run.pdd_objective;
  best.fit_objective = fit_objective;
  best.trace = std::move(run.trace);
  best.block_values = std::move(run.block_values);
  return best;
}

Solution optimize_fully_digital(const Scenario& scenario, const SystemConfig& cfg,
                                const OptimizerOptions& opts, const Solution* warm) {
  Precoder p;
  if (warm && warm->precoder.size() > 0) {
    p = warm->precoder;
  } else {
    p = initial_beamformer(scenario, cfg, opts).product();
  }
  if (has_common(opts.mode)) {
    p = seed_common_stream(p, scenario, cfg);
  } else {
    p.col(0).setZero();
  }
  Solution sol;
  sol.hybrid = false;
  if (!restore_sensing(p, scenario, cfg, opts)) {
    fill_solution(sol, p, opts.mode, scenario, cfg);
    sol.feasible = false;
    sol.status = "infeasible";
    return sol;
  }
  const CMat ident = CMat::Identity(p.rows(), p.rows());
  const RefineOut r = refine(ident, p, scenario, cfg, opts, opts.inner_max, opts.inner_tol);
  fill_solution(sol, r.p, opts.mode, scenario, cfg);
  if (warm && warm->feasible && warm->report.objective > sol.report.objective) {
    // The warm point stays a valid fully-digital precoder.
    fill_solution(sol, warm->precoder, opts.mode, scenario, cfg);
  }
  sol.inner_iterations = r.iterations;
  sol.status = r.infeasible ? "infeasible" : "converged";
  if (r.infeasible) sol.feasible = false;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    TraceRow row;
    row.inner_iter = static_cast<int>(i) + 1;
    row.al_objective = r.trace[i];
    row.min_rate = r.trace[i];
    sol.trace.push_back(row);
  }
  return sol;
}

}  // namespace nfisac
