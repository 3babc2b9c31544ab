#include "comprox/semisep.hpp"

#include "comprox/harness.hpp"
#include "doctest.h"

#include <random>

using namespace comprox;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

CompositePoint dummy_point() {
  CompositePoint p;
  p.u = {vec({0.0})};
  return p;
}

Filter make_filter(std::initializer_list<std::pair<double, double>> pq, double lb) {
  Filter f;
  f.opt_lb = lb;
  for (auto [p, q] : pq) f.insert(p, q, dummy_point());
  return f;
}

// brute-force gap by alpha grid (refined once around the best point)
double grid_gap(const Filter& f, double coarse = 1e-6) {
  double best = -1e300, arg = 0.0;
  for (double a = 0.0; a <= 1.0 + 1e-12; a += coarse) {
    const double h = h_eval(f, std::min(a, 1.0));
    if (h > best) {
      best = h;
      arg = std::min(a, 1.0);
    }
  }
  const double lo = std::max(0.0, arg - 2.0 * coarse), hi = std::min(1.0, arg + 2.0 * coarse);
  for (double a = lo; a <= hi; a += coarse * 1e-4)
    best = std::max(best, h_eval(f, a));
  return best;
}

}  // namespace

TEST_CASE("h_eval") {
  Filter f = make_filter({{1, 3}, {4, 0}}, 0.0);
  CHECK(h_eval(f, 0.5) == doctest::Approx(2.0));
  CHECK(h_eval(f, 0.0) == doctest::Approx(0.0));  // min q
  Filter single = make_filter({{0.0, 0.0}}, 0.0);
  CHECK(h_eval(single, 0.3) == doctest::Approx(0.0));
  Filter empty;
  CHECK_THROWS_AS(h_eval(empty, 0.5), InputError);
  CHECK_THROWS_AS(h_eval(f, 1.5), InputError);
}

TEST_CASE("filter dominance pruning keeps the envelope") {
  Filter f;
  f.opt_lb = 0.0;
  f.insert(1.0, 3.0, dummy_point());
  f.insert(2.0, 4.0, dummy_point());  // dominated, dropped
  CHECK(f.entries.size() == 1);
  f.insert(0.5, 2.5, dummy_point());  // dominates the first
  CHECK(f.entries.size() == 1);
  CHECK(f.entries[0].p == doctest::Approx(0.5));
  f.insert(4.0, 0.0, dummy_point());  // incomparable
  CHECK(f.entries.size() == 2);
}

TEST_CASE("gap_and_weights on the worked examples") {
  Filter f = make_filter({{1, 3}, {4, 0}}, 0.0);
  GapResult g = gap_and_weights(f);
  CHECK(g.gap == doctest::Approx(2.0));
  CHECK(g.alpha_star == doctest::Approx(0.5));
  REQUIRE(g.weights.size() == 2);
  double w_first = 0.0, w_second = 0.0;
  for (auto [i, w] : g.weights) (f.entries[i].p == 1.0 ? w_first : w_second) = w;
  CHECK(w_first == doctest::Approx(2.0 / 3.0));
  CHECK(w_second == doctest::Approx(1.0 / 3.0));
  CHECK(g.p_bar - f.opt_lb == doctest::Approx(2.0));
  CHECK(g.q_bar == doctest::Approx(2.0));

  Filter s = make_filter({{0.0, 0.0}}, 0.0);
  GapResult gs = gap_and_weights(s);
  CHECK(gs.gap == doctest::Approx(0.0));
  REQUIRE(gs.weights.size() == 1);
  CHECK(gs.weights[0].second == doctest::Approx(1.0));

  Filter c = make_filter({{-1, 2}, {2, -1}}, 0.0);
  GapResult gc = gap_and_weights(c);
  CHECK(gc.gap == doctest::Approx(0.5));
  CHECK(gc.alpha_star == doctest::Approx(0.5));
}

TEST_CASE("delta_segment on the worked examples") {
  Filter c = make_filter({{-1, 2}, {2, -1}}, 0.0);
  Interval d = delta_segment(c);
  CHECK_FALSE(d.is_empty);
  CHECK(d.lo == doctest::Approx(1.0 / 3.0));
  CHECK(d.hi == doctest::Approx(2.0 / 3.0));

  Filter all = make_filter({{1.0, 0.5}}, 0.0);  // h >= 0 everywhere
  Interval da = delta_segment(all);
  CHECK(da.lo == doctest::Approx(0.0));
  CHECK(da.hi == doctest::Approx(1.0));

  Filter infeasible = make_filter({{1.0, -2.0}, {-2.0, 1.0}}, 0.0);
  // lines: -2 + 3a and 1 - 3a; both nonnegative only on [2/3, 1/3] = empty
  CHECK(delta_segment(infeasible).is_empty);
}

TEST_CASE("gap and segment match grid brute force on random filters") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Filter f;
    f.opt_lb = -0.5 * u01(rng);
    const int sz = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < sz; ++i) {
      double p = 1.5 * g(rng), q = 1.5 * g(rng);
      if (q < 0.0 && p < f.opt_lb) p = f.opt_lb + std::abs(g(rng));  // honest entries
      f.insert(p, q, dummy_point());
      if (u01(rng) < 0.3) f.insert(p + 0.5, q + 0.5, dummy_point());  // dominated
      if (u01(rng) < 0.2) f.insert(p, q, dummy_point());              // duplicate
    }
    const GapResult gr = gap_and_weights(f);
    CHECK(gr.gap == doctest::Approx(grid_gap(f, 1e-5)).epsilon(1e-9));
    // the mixture certifies the gap
    CHECK(std::max(gr.p_bar - f.opt_lb, gr.q_bar) <= gr.gap + 1e-9);

    const Interval d = delta_segment(f);
    if (!d.is_empty) {
      CHECK(h_eval(f, d.lo) >= -1e-9);
      CHECK(h_eval(f, d.hi) >= -1e-9);
      if (d.lo > 0.0) CHECK(h_eval(f, std::max(0.0, d.lo - 1e-7)) < 1e-9);
      if (d.hi < 1.0) CHECK(h_eval(f, std::min(1.0, d.hi + 1e-7)) < 1e-9);
    } else {
      CHECK(gr.gap < 1e-9);
    }
  }
}

TEST_CASE("stage_control mid-third rule") {
  StageState st;
  st.alpha = 0.5;
  Interval seg{1.0 / 3.0, 2.0 / 3.0, false};
  double next = 0.0;
  CHECK(stage_control(st, seg, &next) == StageDecision::continue_stage);
  st.alpha = 0.4;  // below 4/9
  CHECK(stage_control(st, seg, &next) == StageDecision::new_stage);
  CHECK(next == doctest::Approx(0.5));
  st.alpha = 0.5;
  Interval full{0.0, 1.0, false};
  CHECK(stage_control(st, full, &next) == StageDecision::continue_stage);
}

TEST_CASE("stage_problem: operator structure and finite differences") {
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 12;
  cfg.m = 6;
  cfg.seed = 5;
  const L1Instance inst = gen_l1_planted(cfg);
  CHECK_THROWS_AS(stage_problem(inst.problem, 0.0), InputError);
  CHECK_THROWS_AS(stage_problem(inst.problem, 1.0), InputError);

  const double alpha = 0.37;
  StageProblem sp = stage_problem(inst.problem, alpha);
  CHECK(sp.op.Fv.size() == 1);
  CHECK(sp.op.Fv[0] == doctest::Approx(alpha));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<VectorXd> u = {VectorXd(12), VectorXd(6)};
  for (auto& b : u)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * g(rng);
  const auto F = sp.op.eval_Fu(u);
  // Phi_u = alpha * 0 + (1-alpha) <A x - b, w>
  auto phi = [&](const std::vector<VectorXd>& uu) {
    return (1.0 - alpha) * (inst.A * uu[0] - inst.b).dot(uu[1]);
  };
  const double h = 1e-6;
  for (int blk = 0; blk < 2; ++blk)
    for (Eigen::Index i = 0; i < u[blk].size(); ++i) {
      auto up = u, dn = u;
      up[blk][i] += h;
      dn[blk][i] -= h;
      const double fd = (phi(up) - phi(dn)) / (2.0 * h);
      const double sign = blk == 0 ? 1.0 : -1.0;
      CHECK(F[blk][i] == doctest::Approx(sign * fd).epsilon(1e-6));
    }
}

TEST_CASE("run_sequential: immediate termination when zero is optimal") {
  // b = 0 makes x* = 0 optimal with f(0) = 0, g(0) = 0
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 10;
  cfg.m = 5;
  cfg.seed = 3;
  L1Instance inst = gen_l1_planted(cfg);
  ConstrainedProblem prob = inst.problem;
  prob.b = VectorXd::Zero(inst.m);
  SequentialConfig sc;
  sc.eps_gap = 1e-12;
  const SequentialResult res = run_sequential(prob, sc);
  CHECK(res.converged);
  CHECK(res.total_steps == 1);
  CHECK(res.stages == 1);
  CHECK(res.gap <= 1e-12);
}

TEST_CASE("run_sequential solves a small planted instance with guarantees") {
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 32;
  cfg.m = 16;
  cfg.seed = 11;
  cfg.eps = 1e-4;
  const L1Instance inst = gen_l1_planted(cfg);

  SequentialConfig sc;
  sc.eps_gap = 0.0;
  sc.max_total_steps = 200000;
  const L1Instance* I = &inst;
  sc.stop_predicate = [I, &cfg](const CompositePoint& combined, double) {
    return I->eps_measure(combined.u[0]) <= cfg.eps;
  };
  const SequentialResult res = run_sequential(inst.problem, sc);
  CHECK(res.converged);
  CHECK(inst.eps_measure(res.combined.u[0]) <= cfg.eps);

  // run-wide monitors
  CHECK(res.max_gap_increase <= 1e-9);
  CHECK(res.max_combined_violation <= 1e-9);
  if (res.max_segment_ratio > 0.0) CHECK(res.max_segment_ratio <= 0.75 + 1e-12);
  // the lower bound never crosses the true optimum
  CHECK(res.opt_lb <= inst.x_star.lpNorm<1>() + 1e-9);
  // stage count bound with the instance's honest L
  const double L = inst.problem.L_bound;
  const double gap_floor = std::max(res.gap, 1e-12);
  CHECK(res.stages <= std::log(3.0 * L / gap_floor) / std::log(4.0 / 3.0) + 1.0);
}
