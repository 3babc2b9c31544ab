#include "comprox/multiterm.hpp"

#include "doctest.h"
#include "tiny_multiterm.hpp"

#include <random>

using namespace comprox;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// Phi restricted to the u-variables (epigraph scalars fixed), for finite
// difference checks of the assembled operator.
double phi_of_u(const tiny::Tiny& t, const AssembledSaddle& a,
                const std::vector<VectorXd>& u) {
  const MultiTermProblem& p = t.problem;
  CompositePoint x;
  x.u = u;
  const VectorXd base = u[a.base_idx[0]];
  double val = p.phi0.value(base, VectorXd());
  for (int k = 0; k < p.K(); ++k) {
    const VectorXd& yk = u[a.target_idx[k]];
    if (a.z_idx[k] >= 0) val += p.couplings[k].phi.value(yk, u[a.z_idx[k]]);
    val += (*a.rho)[k] * u[a.w_idx[k]].dot(yk - p.couplings[k].A.apply(base) -
                                           p.couplings[k].b);
  }
  return val;
}

}  // namespace

TEST_CASE("assemble: K=0 reduces to plain composite minimization") {
  tiny::Tiny t = tiny::make(1, 0);
  AggregationConfig agg;
  AssembledSaddle a = assemble(t.problem, agg, vec({0.0, 0.0}));
  CHECK(a.setup.blocks.size() == 1);
  CHECK(a.op.Fv.size() == 1);
  auto F = a.op.eval_Fu({vec({0.7, -0.3})});
  const VectorXd expect = t.nu0 * (vec({0.7, -0.3}) - t.c0);
  CHECK((F[0] - expect).norm() < 1e-14);
}

TEST_CASE("assemble: w-slot is the negative scaled residual") {
  // K=1, identity map, rho=1: the w-component of F at y1 = y0 + c is -c
  MultiTermProblem p;
  EpigraphBlock base;
  base.nonsmooth = NonsmoothKind::l1;
  base.weight = 0.3;
  p.base_geoms = {base};
  p.base_dims = {3};
  p.phi0 = SmoothPart::zero();
  MultiTermProblem::Coupling c;
  c.A = LinearMap::identity(3);
  c.b = VectorXd::Zero(3);
  c.target_geom.nonsmooth = NonsmoothKind::l1;
  c.target_geom.weight = 0.2;
  c.target_dim = 3;
  c.phi = SmoothPart::zero();
  c.rho = 1.0;
  p.couplings.push_back(std::move(c));

  AggregationConfig agg;
  AssembledSaddle a = assemble(p, agg, VectorXd::Zero(3));
  const VectorXd y0 = vec({0.1, 0.2, -0.5});
  const VectorXd shift = vec({1.0, -2.0, 0.5});
  auto F = a.op.eval_Fu({y0, y0 + shift, VectorXd::Zero(3)});
  CHECK((F[a.w_idx[0]] + shift).norm() < 1e-14);
  // and the target slot carries rho * w
  auto F2 = a.op.eval_Fu({y0, y0, vec({0.3, 0.0, -0.1})});
  CHECK((F2[a.target_idx[0]] - vec({0.3, 0.0, -0.1})).norm() < 1e-14);
}

TEST_CASE("assembled operator matches finite differences and is monotone") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (unsigned seed : {2u, 3u}) {
    tiny::Tiny t = tiny::make(seed, 2);
    AggregationConfig agg;
    AssembledSaddle a = assemble(t.problem, agg, VectorXd::Zero(2));

    auto random_u = [&]() {
      std::vector<VectorXd> u;
      for (const auto& spec : a.setup.blocks) {
        VectorXd x(spec.dim);
        for (int i = 0; i < spec.dim; ++i) x[i] = 0.5 * g(rng);
        if (spec.geom.is_ball() && x.norm() > spec.geom.radius)
          x *= spec.geom.radius / x.norm();
        u.push_back(x);
      }
      return u;
    };

    // gradient consistency: F agrees with central differences of Phi, with
    // the sign flipped on the dual blocks
    const std::vector<VectorXd> u = random_u();
    const auto F = a.op.eval_Fu(u);
    const double h = 1e-6;
    for (size_t blk = 0; blk < u.size(); ++blk) {
      const bool dual_block =
          (a.z0_idx >= 0 && static_cast<int>(blk) == a.z0_idx) ||
          std::count(a.z_idx.begin(), a.z_idx.end(), static_cast<int>(blk)) ||
          std::count(a.w_idx.begin(), a.w_idx.end(), static_cast<int>(blk));
      for (int i = 0; i < u[blk].size(); ++i) {
        auto up = u, dn = u;
        up[blk][i] += h;
        dn[blk][i] -= h;
        const double fd = (phi_of_u(t, a, up) - phi_of_u(t, a, dn)) / (2.0 * h);
        const double sign = dual_block ? -1.0 : 1.0;
        CHECK(F[blk][i] == doctest::Approx(sign * fd).epsilon(1e-5));
      }
    }

    // monotonicity on random pairs
    for (int trial = 0; trial < 40; ++trial) {
      const auto ua = random_u(), ub = random_u();
      const auto Fa = a.op.eval_Fu(ua), Fb = a.op.eval_Fu(ub);
      double ip = 0.0;
      for (size_t blk = 0; blk < ua.size(); ++blk)
        ip += (Fa[blk] - Fb[blk]).dot(ua[blk] - ub[blk]);
      CHECK(ip >= -1e-8);
    }
  }
}

TEST_CASE("correction: fixed point and objective monotonicity") {
  tiny::Tiny t = tiny::make(9, 2);
  // penalties above the exact-penalty floor
  const std::vector<double> floors = penalty_floor(t.problem);
  for (int k = 0; k < t.problem.K(); ++k) {
    CHECK(std::isfinite(floors[k]));
    t.problem.couplings[k].rho = floors[k] + 0.5;
  }
  AggregationConfig agg;
  AssembledSaddle a = assemble(t.problem, agg, vec({0.2, -0.1}));

  // a point already on the coupling manifold with active scalars is fixed
  const CompositePoint fixed = correction(a, a.initial);
  for (size_t b = 0; b < fixed.u.size(); ++b)
    CHECK((fixed.u[b] - a.initial.u[b]).norm() < 1e-14);
  for (size_t s = 0; s < fixed.v.size(); ++s)
    CHECK(fixed.v[s] == doctest::Approx(a.initial.v[s]));

  // random feasible points: correction never increases PhiBar when
  // rho >= G + H, and the corrected point is exactly feasible
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    CompositePoint x = a.initial;
    for (size_t b = 0; b < x.u.size(); ++b) {
      for (int i = 0; i < x.u[b].size(); ++i) x.u[b][i] += 0.5 * g(rng);
      const auto& geom = a.setup.blocks[b].geom;
      if (geom.is_ball() && x.u[b].norm() > geom.radius)
        x.u[b] *= geom.radius / x.u[b].norm();
    }
    for (size_t b = 0; b < x.u.size(); ++b) {
      const auto& spec = a.setup.blocks[b];
      if (spec.v_index >= 0)
        x.v[spec.v_index] = spec.geom.psi(x.u[b]) + 0.1 * std::abs(g(rng));
    }
    const CompositePoint hat = correction(a, x);
    const VectorXd base = a.stacked_base(hat);
    for (int k = 0; k < t.problem.K(); ++k) {
      const auto& c = t.problem.couplings[k];
      CHECK((hat.u[a.target_idx[k]] - c.A.apply(base) - c.b).norm() < 1e-12);
    }
    CHECK(a.primal_sup(hat) <= a.primal_sup(x) + 1e-9);
    // objective at the corrected base equals PhiBar there (residuals vanish)
    CHECK(t.problem.objective(base) == doctest::Approx(a.primal_sup(hat)).epsilon(1e-12));
  }
}

TEST_CASE("penalty floor formulas") {
  tiny::Tiny t = tiny::make(4, 1);
  const auto floors = penalty_floor(t.problem);
  REQUIRE(floors.size() == 1);
  const auto& c = t.problem.couplings[0];
  const double H = c.target_geom.weight * std::sqrt(static_cast<double>(c.target_dim));
  CHECK(floors[0] == doctest::Approx(c.lip_G + H));
  CHECK(floors[0] >= 0.0);

  // unavailable G propagates as NaN
  MultiTermProblem p = t.problem;
  p.couplings[0].lip_G = -1.0;
  CHECK(std::isnan(penalty_floor(p)[0]));
}

TEST_CASE("adapt_penalty: keep and restart decisions") {
  PenaltyController ctrl;
  ctrl.rho = {0.001, 0.002};
  CHECK(adapt_penalty(ctrl, 1.0, 1.0) == PenaltyDecision::keep);
  CHECK(ctrl.rho[0] == doctest::Approx(0.001));
  CHECK(adapt_penalty(ctrl, 1.001, 1.0) == PenaltyDecision::restart_with_new_rho);
  CHECK(ctrl.rho[0] == doctest::Approx(0.003));
  CHECK(ctrl.rho[1] == doctest::Approx(0.006));

  PenaltyController sel;
  sel.rho = {1.0, 1.0};
  CHECK(adapt_penalty_selective(sel, 2.0, 1.0, {0.5, -0.1}) ==
        PenaltyDecision::restart_with_new_rho);
  CHECK(sel.rho[0] == doctest::Approx(3.0));
  CHECK(sel.rho[1] == doctest::Approx(1.0));
}

TEST_CASE("exact penalty: certificate sandwich around the grid optimum") {
  for (unsigned seed : {11u, 12u, 13u}) {
    tiny::Tiny t = tiny::make(seed, seed % 2 ? 1 : 2);
    const auto floors = penalty_floor(t.problem);
    for (int k = 0; k < t.problem.K(); ++k)
      t.problem.couplings[k].rho = floors[k] + 1.0;
    AggregationConfig agg;
    AssembledSaddle a = assemble(t.problem, agg, t.c0);

    RunConfig rc;
    rc.max_iters = 4000;
    double ups_best = std::numeric_limits<double>::infinity();
    const RunResult rr = run(a.op, a.setup, a.initial, rc, [&](const StepEvent& ev) {
      ups_best = std::min(ups_best, t.problem.objective(a.stacked_base(*ev.y)));
      return ControlAction::proceed;
    });
    const CompositePoint avg = rr.averaged;
    ups_best = std::min(ups_best, t.problem.objective(a.stacked_base(avg)));

    // capped domain containing both the averaged point and the optimum
    ResolutionDomain dom;
    int slot = 0;
    for (size_t b = 0; b < a.setup.blocks.size(); ++b) {
      const auto& spec = a.setup.blocks[b];
      if (spec.geom.lifted()) {
        double cap = avg.v[slot] / spec.geom.weight;
        // the optimum's block value from the oracle argmin
        VectorXd at_opt;
        if (std::count(a.base_idx.begin(), a.base_idx.end(), static_cast<int>(b)))
          at_opt = t.y_opt;
        else {
          const int k = static_cast<int>(b) - a.base_idx.back() - 1;
          at_opt = t.problem.couplings[k].A.apply(t.y_opt) + t.problem.couplings[k].b;
        }
        cap = std::max(cap, at_opt.lpNorm<1>() + 0.5);
        dom.blocks.push_back(ResolutionDomain::Block::capped_epigraph(
            NonsmoothKind::l1, spec.geom.weight, cap));
        ++slot;
      } else {
        dom.blocks.push_back(
            ResolutionDomain::Block::ball(VectorXd::Zero(spec.dim), spec.geom.radius));
      }
    }
    const double ell = a.primal_sup(avg) - resolution(rr.state.summary, dom);

    // the certificate bracket surrounds the grid optimum, and the best value
    // found agrees with the directly computed one
    CHECK(ell <= t.opt + 1e-4);
    CHECK(ups_best >= t.opt - 1e-6);
    CHECK(ups_best - t.opt <= 1e-4);
    CHECK(ups_best - ell <= 2e-2);

    // corrected averaged point obeys the correction bound
    const CompositePoint hat = correction(a, avg);
    CHECK(t.problem.objective(a.stacked_base(hat)) - t.opt <=
          a.primal_sup(avg) - ell + 1e-9);
  }
}

TEST_CASE("mc_radius_bound") {
  // b = 0: theta == 0, so R = upsilon / lambda
  CHECK(mc_radius_bound(VectorXd::Zero(4), 0.5, 2.0) == doctest::Approx(4.0).epsilon(1e-9));

  // b = [3, 1], lambda = 1, upsilon = 3: compare against a fine scan
  const VectorXd b = vec({3.0, 1.0});
  const double R = mc_radius_bound(b, 1.0, 3.0);
  auto theta_plus = [&b](double r) {
    return r + 0.5 * (capped_simplex_project(b, r) - b.cwiseAbs()).squaredNorm();
  };
  double scan = 0.0;
  for (double r = 0.0; r <= 8.0; r += 1e-4)
    if (theta_plus(r) <= 3.0) scan = r;
  CHECK(R == doctest::Approx(scan).epsilon(1e-3));
  CHECK(R >= scan - 1e-9);  // upper endpoint keeps validity

  CHECK_THROWS_AS(mc_radius_bound(vec({100.0, 100.0}), 1.0, 0.5), InputError);
}

TEST_CASE("solve_penalized: adaptation stabilizes on a tiny instance") {
  tiny::Tiny t = tiny::make(21, 2);
  PenaltySolveConfig cfg;
  cfg.max_iters = 3000;
  cfg.controller.initial = 0.001;
  const PenaltySolveResult res = solve_penalized(t.problem, t.c0, cfg);
  CHECK(res.total_steps == 3000);
  CHECK(res.restarts >= 1);     // the tiny initial rho must grow
  CHECK(res.final_rho > 0.001);
  CHECK(res.upsilon_best <= t.opt + 1e-4);
  CHECK(res.upsilon_best >= t.opt - 1e-6);
  // trace bookkeeping: upper bounds nonincreasing
  for (size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].upper <= res.trace[i - 1].upper + 1e-12);
}
