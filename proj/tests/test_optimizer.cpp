#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nfisac/experiments.hpp"
#include "nfisac/optimizer.hpp"
#include "support.hpp"

using namespace nfisac;
using namespace nfisac::testing;

namespace {

Scenario raw_scenario(std::vector<CVec> h, std::vector<CMat> g) {
  Scenario s;
  s.comm_channels = std::move(h);
  s.sense_channels = std::move(g);
  return s;
}

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

TEST_CASE("receive filters beat random unit filters") {
  const SystemConfig cfg = small_config(16, 8, 3, 2, 4.0);
  std::mt19937_64 rng(123);
  for (int inst = 0; inst < 3; ++inst) {
    const Scenario s = gen_scenario(cfg, 100 + inst);
    const CMat p = random_precoder(16, 4, cfg.power_max_mw, rng);
    const ReceiveFilters u = update_receive_filters(p, s, cfg);
    const auto best = sensing_sinr(p, u, s, cfg);
    for (const auto& f : u.filters) CHECK(std::abs(f.norm() - 1.0) < 1e-12);
    for (int trial = 0; trial < 2000; ++trial) {
      ReceiveFilters r{{random_unit(16, rng), random_unit(16, rng)}};
      const auto g = sensing_sinr(p, r, s, cfg);
      CHECK(g[0] <= best[0] * (1 + 1e-12));
      CHECK(g[1] <= best[1] * (1 + 1e-12));
    }
  }
}

TEST_CASE("single-target filter: dominant left direction, closed-form SINR") {
  const SystemConfig cfg = small_config(8, 4, 2, 1, 0.0);
  const Scenario s = gen_scenario(cfg, 5);
  std::mt19937_64 rng(5);
  const CMat p = random_precoder(8, 3, cfg.power_max_mw, rng);
  const ReceiveFilters u = update_receive_filters(p, s, cfg);
  const CMat gp = s.sense_channels[0] * p;
  const double closed = cfg.reflect(0) * (u.filters[0].adjoint() * gp).squaredNorm() / cfg.noise_sense_mw;
  CHECK(sensing_sinr(p, u, s, cfg)[0] == doctest::Approx(closed).epsilon(1e-12));
  Eigen::JacobiSVD<CMat> svd(gp, Eigen::ComputeThinU);
  CHECK(std::abs(svd.matrixU().col(0).dot(u.filters[0])) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("single-target filter is invariant to scaling the covariance") {
  // with one target Q = I, so only the direction of G R G^H matters
  const SystemConfig cfg = small_config(16, 8, 3, 1, 4.0);
  const Scenario s = gen_scenario(cfg, 9);
  std::mt19937_64 rng(9);
  const CMat p = random_precoder(16, 4, cfg.power_max_mw, rng);
  const ReceiveFilters a = update_receive_filters(p, s, cfg);
  const ReceiveFilters b = update_receive_filters(std::sqrt(2.0) * p, s, cfg);
  CHECK(std::abs(a.filters[0].dot(b.filters[0])) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("equalizers: no signal, one-bit case, stationarity") {
  SystemConfig cfg;
  cfg.noise_comm_mw = 0.5;
  CVec h(2);
  h << cplx(1.0, 0.0), cplx(0.0, 0.0);
  CMat p = CMat::Zero(2, 2);
  p(1, 0) = 1.0;               // common stream orthogonal to h
  p(0, 1) = std::sqrt(0.5);    // S_p = sigma^2
  const Equalizers e = update_equalizers(p, raw_scenario({h}, {}), cfg);
  CHECK(e.common[0] == cplx(0.0, 0.0));
  CHECK(e.mmse_common[0] == doctest::Approx(1.0));
  CHECK(e.mmse_private[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(-std::log2(e.mmse_private[0]) == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(31);
  const Scenario s = raw_scenario({random_cvec(4, rng), random_cvec(4, rng), random_cvec(4, rng)}, {});
  const CMat q = random_precoder(4, 4, 3.0, rng);
  const Equalizers eq = update_equalizers(q, s, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    const PowerTerms t = power_terms(q, s.comm_channels[k], k, cfg.noise_comm_mw, 0.0);
    const cplx gp = s.comm_channels[k].dot(q.col(static_cast<Eigen::Index>(k) + 1));
    const cplx w = eq.priv[k];
    CHECK(stream_mse(w, t.total_private, gp) == doctest::Approx(eq.mmse_private[k]).epsilon(1e-12));
    const double st = 1e-6;
    for (cplx dir : {cplx(1, 0), cplx(0, 1)}) {
      const double d = (stream_mse(w + st * dir, t.total_private, gp) -
                        stream_mse(w - st * dir, t.total_private, gp)) / (2 * st);
      CHECK(std::abs(d) < 1e-5);
    }
  }
}

TEST_CASE("weights: zero-rate and one-bit fixed points, sampled minimality") {
  const double tau = wmmse_tau();
  const Weights w = update_weights({1.0}, {0.5});
  CHECK(w.common[0] == doctest::Approx(1.0 / std::log(2.0)));
  CHECK(augmented_wmse(w.common[0], 1.0) == doctest::Approx(tau).epsilon(1e-14));
  CHECK(augmented_wmse(w.priv[0], 0.5) == doctest::Approx(tau - 1.0).epsilon(1e-14));

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(1e-3, 1.0), e(1e-3, 20.0);
  for (int i = 0; i < 20; ++i) {
    const double d = u(rng);
    const double eta = update_weights({d}, {}).common[0];
    CHECK(augmented_wmse(eta, d) == doctest::Approx(tau + std::log2(d)).epsilon(1e-12));
    for (int j = 0; j < 100; ++j) CHECK(augmented_wmse(eta, d) <= augmented_wmse(e(rng), d) + 1e-12);
  }
  CHECK_THROWS_AS(update_weights({0.0}, {}), std::domain_error);
  CHECK_THROWS_AS(update_weights({0.5}, {-0.1}), std::domain_error);
}

TEST_CASE("rate-WMMSE identity on random desk instances") {
  const SystemConfig cfg = small_config(16, 8, 3, 2, 4.0);
  std::mt19937_64 rng(2024);
  const double tau = wmmse_tau();
  for (int i = 0; i < 10; ++i) {
    const Scenario s = gen_scenario(cfg, 500 + i);
    const CMat p = random_precoder(16, 4, cfg.power_max_mw, rng);
    const RateReport r = comm_rates(p, CommonRateAlloc::zeros(3), s, cfg);
    const Equalizers e = update_equalizers(p, s, cfg);
    const Weights w = update_weights(e.mmse_common, e.mmse_private);
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(augmented_wmse(w.common[k], e.mmse_common[k]) - (tau - r.common_rates[k])) < 1e-9);
      CHECK(std::abs(augmented_wmse(w.priv[k], e.mmse_private[k]) - (tau - r.private_rates[k])) < 1e-9);
    }
  }
}

TEST_CASE("quadratic transform: zero precoder, tightness, concavity") {
  const SystemConfig cfg = small_config(16, 8, 3, 2, 4.0);
  const Scenario s = gen_scenario(cfg, 8);
  std::mt19937_64 rng(8);
  const ReceiveFilters u{{random_unit(16, rng), random_unit(16, rng)}};

  const CMat zero = CMat::Zero(16, 4);
  const auto x0 = update_qt_aux(zero, u, s, cfg);
  CHECK(x0[0].norm() == 0.0);
  CHECK(qt_surrogate(x0[0], zero, u, 0, s, cfg) == 0.0);

  for (int i = 0; i < 10; ++i) {
    const CMat p = random_precoder(16, 4, cfg.power_max_mw, rng);
    const ReceiveFilters uf = update_receive_filters(p, s, cfg);
    const auto x = update_qt_aux(p, uf, s, cfg);
    const auto g = sensing_sinr(p, uf, s, cfg);
    for (std::size_t m = 0; m < 2; ++m) {
      const double f = qt_surrogate(x[m], p, uf, m, s, cfg);
      CHECK(std::abs(f - g[m]) <= 1e-10 * std::max(1.0, g[m]));
      for (int j = 0; j < 20; ++j) {
        const CVec y = x[m] + random_cvec(4, rng) * (x[m].norm() * 0.3);
        CHECK(qt_surrogate(y, p, uf, m, s, cfg) <= f * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("digital update: exact fit, normal equations, local optimality") {
  std::mt19937_64 rng(41);
  const CMat f = random_phases(8, 4, rng);
  const CMat w0 = random_cmat(4, 3, rng);
  CHECK((update_digital(f, f * w0, CMat(), 1.0) - w0).norm() < 1e-10 * w0.norm());

  const CMat p = random_cmat(8, 3, rng), d = random_cmat(8, 3, rng);
  const double rho = 0.37;
  const CMat w = update_digital(f, p, d, rho);
  const CMat resid = f.adjoint() * (p + rho * d - f * w);
  CHECK(resid.norm() < 1e-8 * (f.adjoint() * (p + rho * d)).norm());
  const double best = hybrid_fit_objective(f, w, p, d, rho);
  for (int i = 0; i < 100; ++i) {
    CHECK(best <= hybrid_fit_objective(f, w + 1e-3 * random_cmat(4, 3, rng), p, d, rho));
  }
}

TEST_CASE("analog update: tie-break, single RF chain, monotone sweep") {
  std::mt19937_64 rng(43);
  const CMat f0 = random_phases(6, 3, rng);
  // W = 0 makes every coefficient vanish: phases are kept
  CHECK(update_analog(f0, CMat::Zero(3, 2), random_cmat(6, 2, rng), CMat(), 1.0) == f0);

  // N_f = 1: chi_i = Z_i, so each entry aligns with row i of P w^H
  const CMat f1 = random_phases(6, 1, rng);
  const CMat w1 = random_cmat(1, 3, rng);
  const CMat p1 = random_cmat(6, 3, rng);
  const CMat out = update_analog(f1, w1, p1, CMat(), 1.0);
  for (Eigen::Index i = 0; i < 6; ++i) {
    double best_cost = 1e300, best_phase = 0;
    for (int g = 0; g < 20000; ++g) {
      const double th = 2 * kPi * g / 20000.0;
      const double cost = (p1.row(i) - std::polar(1.0, th) * w1).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best_phase = th;
      }
    }
    CHECK(std::abs(std::remainder(std::arg(out(i, 0)) - best_phase, 2 * kPi)) < 1e-3);
  }

  for (int t = 0; t < 20; ++t) {
    const CMat f = random_phases(8, 4, rng);
    const CMat w = random_cmat(4, 3, rng), p = random_cmat(8, 3, rng), d = random_cmat(8, 3, rng);
    const double before = hybrid_fit_objective(f, w, p, d, 0.5);
    const CMat g = update_analog(f, w, p, d, 0.5);
    CHECK(hybrid_fit_objective(g, w, p, d, 0.5) <= before + 1e-10);
    CHECK((g.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conic step never loses to its incumbent") {
  const SystemConfig cfg = small_config(8, 4, 2, 1, 0.0);
  const Scenario s = gen_scenario(cfg, 12);
  std::mt19937_64 rng(12);
  OptimizerOptions opts;
  const CMat p = random_precoder(8, 3, 0.5 * cfg.power_max_mw, rng);
  const ReceiveFilters u = update_receive_filters(p, s, cfg);
  AuxVars aux;
  aux.equalizers = update_equalizers(p, s, cfg);
  aux.weights = update_weights(aux.equalizers.mmse_common, aux.equalizers.mmse_private);
  aux.qt_vectors = update_qt_aux(p, u, s, cfg);
  const CommonRateAlloc a0 = CommonRateAlloc::zeros(2);
  const InnerConvexResult r =
      solve_inner_convex(aux, u, std::nullopt, CMat::Identity(8, 8), p, a0, s, cfg, opts);
  CHECK_FALSE(r.infeasible);
  CHECK(comm_rates(r.precoder, r.alloc, s, cfg).min_total >= comm_rates(p, a0, s, cfg).min_total - 1e-12);
  CHECK(r.precoder.squaredNorm() <= cfg.power_max_mw + 1e-7);
}

TEST_CASE("single-user capacity is recovered") {
  const SystemConfig cfg = small_config(8, 4, 1, 1, 0.0);
  const Scenario s = gen_scenario(cfg, 3);
  OptimizerOptions opts;
  // a fixed-equalizer step lifts the SNR by O(1) only, so allow a long run
  opts.inner_tol = 1e-12;
  opts.inner_max = 1000;
  const double cap = std::log2(1.0 + cfg.power_max_mw * s.comm_channels[0].squaredNorm() / cfg.noise_comm_mw);
  for (StreamMode mode : {StreamMode::kSdma, StreamMode::kRsma}) {
    opts.mode = mode;
    const Solution sol = optimize_fully_digital(s, cfg, opts);
    CHECK(sol.report.objective == doctest::Approx(cap).epsilon(1e-4));
    if (mode == StreamMode::kSdma) {
      const CVec mf = std::sqrt(cfg.power_max_mw) * s.comm_channels[0] / s.comm_channels[0].norm();
      CHECK(std::abs(mf.dot(sol.precoder.col(1))) / cfg.power_max_mw == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

TEST_CASE("two-antenna instance matches a power-shell grid search") {
  SystemConfig cfg = small_config(2, 2, 1, 1, 0.0);
  cfg.spacing_m = 0.005;
  cfg.n_scatterers = 0;
  const Scenario s0 = synthesize({{10.0, 0.3}}, {{}}, {{15.0, -0.5}}, cfg);
  const CVec h = s0.comm_channels[0];
  const CMat g = s0.sense_channels[0];
  const double pt = cfg.power_max_mw;
  auto rate = [&](const CVec& p) { return std::log2(1 + std::norm(h.dot(p)) / cfg.noise_comm_mw); };
  auto gamma = [&](const CVec& p) { return cfg.reflect(0) * (g * p).squaredNorm() / cfg.noise_sense_mw; };

  // threshold halfway between the matched-filter and the best sensing SINR
  const CVec mf = std::sqrt(pt) * h / h.norm();
  Eigen::JacobiSVD<CMat> svd(g, Eigen::ComputeThinV);
  const CVec sv = std::sqrt(pt) * svd.matrixV().col(0);
  const double g_th = 0.5 * (gamma(mf) + gamma(sv));
  REQUIRE(gamma(mf) < g_th);
  cfg.sense_rate_min_bps = std::log2(1 + g_th);

  double grid = 0.0;
  const int n = 1500;
  for (int i = 0; i <= n; ++i) {
    const double a = 0.5 * kPi * i / n;
    for (int j = 0; j < n; ++j) {
      CVec p(2);
      p << std::sqrt(pt) * std::cos(a), std::sqrt(pt) * std::sin(a) * std::polar(1.0, 2 * kPi * j / n);
      if (gamma(p) >= g_th) grid = std::max(grid, rate(p));
    }
  }
  REQUIRE(grid > 0.0);

  OptimizerOptions opts;
  opts.mode = StreamMode::kSdma;
  opts.inner_tol = 1e-8;
  opts.inner_max = 300;
  const Solution sol = optimize_fully_digital(s0, cfg, opts);
  REQUIRE(sol.feasible);
  CHECK(std::abs(sol.report.objective - grid) <= 2e-2 * grid);
}

TEST_CASE("inner loop: monotone blocks, cap, warm restart") {
  const SystemConfig cfg = small_config(8, 4, 2, 1, 2.0);
  const Scenario s = gen_scenario(cfg, 21);
  OptimizerOptions opts;
  opts.seed = 21;
  const Solution sol = outer_loop(s, cfg, opts);
  REQUIRE_FALSE(sol.block_values.empty());
  for (const auto& bv : sol.block_values) {
    CHECK(bv.size() <= 1 + 7 * 100);
    for (std::size_t i = 1; i < bv.size(); ++i) CHECK(bv[i] >= bv[i - 1] - 1e-6);
  }
  for (const auto& row : sol.trace) CHECK(row.inner_iter <= 100);
  CHECK((sol.beamformer.analog.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(sol.precoder.squaredNorm() <= cfg.power_max_mw + 1e-7);

  // restart the inner loop at its own fixed point
  Iterate it;
  it.beamformer = initial_beamformer(s, cfg, opts);
  it.precoder = it.beamformer.product();
  it.alloc = CommonRateAlloc::zeros(2);
  it.filters = update_receive_filters(it.precoder, s, cfg);
  PddState st;
  st.dual = CMat::Zero(8, 3);
  const InnerResult first = inner_loop(st, s, cfg, it, opts);
  const InnerResult again = inner_loop(st, s, cfg, first.iterate, opts);
  CHECK(again.iterations == 1);
}

TEST_CASE("desk instance converges with sensing met; dropping sensing never hurts") {
  const SystemConfig cfg = make_profile(Profile::kDesk);
  const Scenario s = gen_scenario(cfg, 1);
  OptimizerOptions opts;
  const Solution sol = outer_loop(s, cfg, opts);
  REQUIRE(sol.feasible);
  CHECK(sol.status == "converged");
  CHECK(sol.residual_inf <= 1e-4);
  CHECK(sol.outer_iterations <= 60);
  CHECK(min_of(sol.report.sensing_rates) >= cfg.sense_rate_min_bps - 1e-6);
  CHECK(std::abs(sol.fit_objective - sol.pdd_objective) <= 1e-2);
  CHECK(sol.report.objective >= sol.fit_objective - 1e-12);
  CHECK(sol.report.power_mw <= cfg.power_max_mw + 1e-7);

  SystemConfig free = cfg;
  free.sense_rate_min_bps = 0.0;
  const Solution relaxed = outer_loop(s, free, opts, &sol);
  CHECK(relaxed.report.objective >= sol.report.objective - 1e-9);
}

TEST_CASE("meets_constraints reads power and sensing") {
  SystemConfig cfg;
  RateReport r;
  r.power_mw = cfg.power_max_mw;
  r.sensing_rates = {4.0, 5.0};
  CHECK(meets_constraints(r, cfg));
  r.sensing_rates[0] = 3.9;
  CHECK_FALSE(meets_constraints(r, cfg));
  CHECK(meets_constraints(r, cfg, 0.2));
  r.sensing_rates[0] = 4.0;
  r.power_mw = 1.01 * cfg.power_max_mw;
  CHECK_FALSE(meets_constraints(r, cfg));
}
