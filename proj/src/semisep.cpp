#include "comprox/semisep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace comprox {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAlphaClamp = 1e-6;  // keeps F_v > 0 in (P_s)
}  // namespace

void ConstrainedProblem::validate() const {
  const size_t K = y_geoms.size();
  if (y_dims.size() != K || phis.size() != K || A.size() != K)
    throw InputError("ConstrainedProblem: inconsistent block lists");
  for (size_t k = 0; k < K; ++k) {
    if (!y_geoms[k].is_ball())
      throw InputError("ConstrainedProblem: Y must be bounded (ball blocks only)");
    y_geoms[k].validate(y_dims[k]);
    if (A[k].in_dim != y_dims[k] || A[k].out_dim != b.size())
      throw InputError("ConstrainedProblem: coupling map dimensions inconsistent");
  }
}

double ConstrainedProblem::f_value(const CompositePoint& y) const {
  double f = 0.0;
  for (int k = 0; k < K(); ++k) f += phis[k].psi(y.u[k]);
  for (double tau : y.v) f += tau;
  return f;
}

double ConstrainedProblem::g_value(const CompositePoint& y) const {
  VectorXd r = -b;
  for (int k = 0; k < K(); ++k) r += A[k].apply(y.u[k]);
  return r.norm();
}

void Filter::insert(double p, double q, CompositePoint y) {
  // h is a min of affine functions with nonnegative coefficients (alpha,
  // 1-alpha), so only entries on the lower-left convex hull of the (p, q)
  // cloud can attain it; dominated and hull-interior entries are dropped
  // without changing h, Gap or Delta.
  for (const Entry& e : entries)
    if (e.p <= p && e.q <= q) return;
  entries.push_back({p, q, std::move(y)});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.p < b.p || (a.p == b.p && a.q < b.q);
  });
  std::vector<Entry> hull;
  hull.reserve(entries.size());
  for (Entry& e : entries) {
    if (!hull.empty() && e.q >= hull.back().q) continue;  // Pareto-dominated
    while (hull.size() >= 2) {
      const Entry& a = hull[hull.size() - 2];
      const Entry& b = hull.back();
      // b on or above the segment a-e never attains the min
      if ((b.p - a.p) * (e.q - a.q) - (b.q - a.q) * (e.p - a.p) <= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(std::move(e));
  }
  entries = std::move(hull);
}

double h_eval(const Filter& filter, double alpha) {
  if (filter.empty()) throw InputError("h_eval: empty filter");
  if (alpha < 0.0 || alpha > 1.0) throw InputError("h_eval: alpha outside [0,1]");
  double h = kInf;
  for (const auto& e : filter.entries)
    h = std::min(h, alpha * (e.p - filter.opt_lb) + (1.0 - alpha) * e.q);
  return h;
}

GapResult gap_and_weights(const Filter& filter) {
  if (filter.empty()) throw InputError("gap_and_weights: empty filter");
  const double lb = filter.opt_lb;
  const size_t n = filter.entries.size();
  // line i: q_i + alpha * slope_i
  std::vector<double> q(n), slope(n);
  for (size_t i = 0; i < n; ++i) {
    q[i] = filter.entries[i].q;
    slope[i] = (filter.entries[i].p - lb) - filter.entries[i].q;
  }
  auto h_at = [&](double a) {
    double h = kInf;
    for (size_t i = 0; i < n; ++i) h = std::min(h, q[i] + a * slope[i]);
    return h;
  };

  // candidate maximizers: endpoints and pairwise intersections of the lines
  std::vector<double> cands{0.0, 1.0};
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double ds = slope[i] - slope[j];
      if (ds == 0.0) continue;
      const double a = (q[j] - q[i]) / ds;
      if (a > 0.0 && a < 1.0) cands.push_back(a);
    }
  GapResult out;
  out.gap = -kInf;
  for (double a : cands) {
    const double h = h_at(a);
    if (h > out.gap) {
      out.gap = h;
      out.alpha_star = a;
    }
  }

  // equilibrium mixture at alpha*: one active line with the right slope sign,
  // or a two-line combination with zero mixed slope
  double scale = std::abs(out.gap);
  for (size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(q[i]) + std::abs(slope[i]));
  const double tol = 1e-11 * (1.0 + scale);
  std::vector<int> active;
  for (size_t i = 0; i < n; ++i)
    if (q[i] + out.alpha_star * slope[i] <= out.gap + tol) active.push_back(static_cast<int>(i));

  int lone = -1, pos = -1, neg = -1;
  for (int i : active) {
    if (std::abs(slope[i]) <= tol && lone < 0) lone = i;
    if (slope[i] > tol && (pos < 0 || slope[i] > slope[pos])) pos = i;
    if (slope[i] < -tol && (neg < 0 || slope[i] < slope[neg])) neg = i;
  }
  if (out.alpha_star <= 0.0 && neg >= 0 && lone < 0)
    out.weights = {{neg, 1.0}};
  else if (out.alpha_star >= 1.0 && pos >= 0 && lone < 0)
    out.weights = {{pos, 1.0}};
  else if (lone >= 0)
    out.weights = {{lone, 1.0}};
  else if (pos >= 0 && neg >= 0) {
    const double mu = -slope[neg] / (slope[pos] - slope[neg]);
    out.weights = {{pos, mu}, {neg, 1.0 - mu}};
  } else if (!active.empty()) {
    out.weights = {{active.front(), 1.0}};
  }

  // mixture point and its certificate values
  out.p_bar = out.q_bar = 0.0;
  for (auto [i, w] : out.weights) {
    out.p_bar += w * filter.entries[i].p;
    out.q_bar += w * filter.entries[i].q;
    const CompositePoint& yi = filter.entries[i].y;
    if (out.combined.u.empty()) {
      out.combined.u.assign(yi.u.size(), VectorXd());
      for (size_t bkl = 0; bkl < yi.u.size(); ++bkl)
        out.combined.u[bkl] = VectorXd::Zero(yi.u[bkl].size());
      out.combined.v.assign(yi.v.size(), 0.0);
    }
    for (size_t bkl = 0; bkl < yi.u.size(); ++bkl) out.combined.u[bkl] += w * yi.u[bkl];
    for (size_t s = 0; s < yi.v.size(); ++s) out.combined.v[s] += w * yi.v[s];
  }
  return out;
}

Interval delta_segment(const Filter& filter) {
  if (filter.empty()) throw InputError("delta_segment: empty filter");
  double lo = 0.0, hi = 1.0;
  for (const auto& e : filter.entries) {
    const double q = e.q;
    const double s = (e.p - filter.opt_lb) - q;
    // q + alpha * s >= 0
    if (s > 0.0)
      lo = std::max(lo, -q / s);
    else if (s < 0.0)
      hi = std::min(hi, -q / s);
    else if (q < 0.0)
      return {};  // empty
  }
  if (lo > hi) return {};
  return {lo, hi, false};
}

StageDecision stage_control(const StageState& state, const Interval& segment,
                            double* alpha_next) {
  if (segment.is_empty) throw InputError("stage_control: empty segment");
  const double w = segment.length();
  const double lo3 = segment.lo + w / 3.0, hi3 = segment.lo + 2.0 * w / 3.0;
  if (state.alpha >= lo3 && state.alpha <= hi3) return StageDecision::continue_stage;
  if (alpha_next) *alpha_next = 0.5 * (segment.lo + segment.hi);
  return StageDecision::new_stage;
}

StageProblem stage_problem(const ConstrainedProblem& problem, double alpha) {
  problem.validate();
  if (alpha <= 0.0 || alpha >= 1.0) throw InputError("stage_problem: alpha outside (0,1)");
  const int K = problem.K();
  const int wdim = static_cast<int>(problem.b.size());

  StageProblem sp;
  sp.alpha = alpha;
  std::vector<BlockSpec> blocks;
  std::vector<int> y_idx(K), z_idx(K, -1);
  for (int k = 0; k < K; ++k) {
    y_idx[k] = static_cast<int>(blocks.size());
    blocks.push_back({problem.y_geoms[k], 1.0, problem.y_dims[k], -1});
  }
  for (int k = 0; k < K; ++k)
    if (problem.phis[k].has_z()) {
      EpigraphBlock g;
      g.base_set = BaseSet::euclid_ball;
      g.radius = problem.phis[k].z_radius;
      z_idx[k] = static_cast<int>(blocks.size());
      blocks.push_back({g, 1.0, problem.phis[k].z_dim, -1});
    }
  EpigraphBlock wg;
  wg.base_set = BaseSet::euclid_ball;
  wg.radius = 1.0;
  const int w_idx = static_cast<int>(blocks.size());
  blocks.push_back({wg, 1.0, wdim, -1});
  sp.setup = AggregatedSetup::make(std::move(blocks));

  const ConstrainedProblem* P = &problem;
  const int n_blocks = static_cast<int>(sp.setup.blocks.size());
  sp.op.eval_Fu = [P, alpha, y_idx, z_idx, w_idx, n_blocks](const std::vector<VectorXd>& u) {
    std::vector<VectorXd> F(n_blocks);
    static const VectorXd kEmpty;
    const VectorXd& w = u[w_idx];
    VectorXd resid = -P->b;
    for (int k = 0; k < P->K(); ++k) {
      const VectorXd& yk = u[y_idx[k]];
      const VectorXd& zk = z_idx[k] >= 0 ? u[z_idx[k]] : kEmpty;
      resid += P->A[k].apply(yk);
      F[y_idx[k]] = (1.0 - alpha) * P->A[k].adjoint(w);
      if (P->phis[k].grad_y) F[y_idx[k]] += alpha * P->phis[k].grad_y(yk, zk);
      if (z_idx[k] >= 0) F[z_idx[k]] = -alpha * P->phis[k].grad_z(yk, zk);
    }
    F[w_idx] = -(1.0 - alpha) * resid;
    return F;
  };
  sp.op.Fv.assign(sp.setup.n_vslots(), alpha);
  sp.op.M_hint = 0.0;

  // start at the ball centers (origin)
  CompositePoint x0;
  x0.u.reserve(sp.setup.blocks.size());
  for (const auto& spec : sp.setup.blocks) x0.u.push_back(VectorXd::Zero(spec.dim));
  x0.v.assign(sp.setup.n_vslots(), 0.0);
  sp.initial = std::move(x0);

  // resolution domain Y x Z x W for the per-stage lower bound
  for (const auto& spec : sp.setup.blocks) {
    const auto& g = spec.geom;
    if (g.lifted()) {
      if (!g.is_ball())
        throw CapabilityError("stage_problem: lifted block must live on a ball");
      sp.domain.blocks.push_back(ResolutionDomain::Block::ball_l1(g.radius, g.weight));
    } else {
      sp.domain.blocks.push_back(
          ResolutionDomain::Block::ball(VectorXd::Zero(spec.dim), g.radius));
    }
  }
  return sp;
}

SequentialResult run_sequential(const ConstrainedProblem& problem,
                                const SequentialConfig& cfg) {
  problem.validate();
  if (cfg.eps_gap < 0.0) throw InputError("run_sequential: eps_gap must be >= 0");

  SequentialResult result;
  Filter filter;
  StageState stage;
  stage.alpha = 0.5;
  stage.segment = {0.0, 1.0, false};
  stage.stage_index = 1;

  Interval prev_stage_segment{0.0, 1.0, false};
  double last_gap = kInf;
  CompositePoint warm;
  bool have_warm = false;
  bool done = false;
  int next_checkpoint = 1;
  const auto t_start = std::chrono::steady_clock::now();

  auto primal_part = [&](const CompositePoint& x, int K) {
    CompositePoint y;
    y.u.assign(x.u.begin(), x.u.begin() + K);
    y.v = x.v;  // all lifts sit on y-blocks
    return y;
  };

  while (!done && stage.stage_index <= cfg.max_stages &&
         result.total_steps < cfg.max_total_steps) {
    const double alpha = std::clamp(stage.alpha, kAlphaClamp, 1.0 - kAlphaClamp);
    StageProblem sp = stage_problem(problem, alpha);
    if (have_warm) sp.initial = warm;

    double stage_f_lb = -kInf;
    int stage_steps = 0;
    bool stage_change = false;
    double alpha_next = alpha;
    Interval segment_at_change;

    RunConfig rc;
    rc.max_iters = std::min(cfg.per_stage_budget, cfg.max_total_steps - result.total_steps);
    rc.policy = cfg.policy;

    RunResult rr = run(sp.op, sp.setup, sp.initial, rc, [&](const StepEvent& ev) {
      ++stage_steps;
      const CompositePoint avg = ev.state->summary.averaged();
      const CompositePoint y_search = primal_part(*ev.y, problem.K());
      const CompositePoint y_avg = primal_part(avg, problem.K());
      filter.insert(problem.f_value(y_search), problem.g_value(y_search), y_search);
      filter.insert(problem.f_value(y_avg), problem.g_value(y_avg), y_avg);

      // per-stage certificate lower bound on Opt_s, then on Opt
      const double f_s_at_avg =
          alpha * problem.f_value(y_avg) + (1.0 - alpha) * problem.g_value(y_avg);
      const double res = resolution(ev.state->summary, sp.domain);
      stage_f_lb = std::max(stage_f_lb, f_s_at_avg - res);
      if (std::isfinite(stage_f_lb) && alpha >= kAlphaClamp)
        filter.raise_lower_bound(stage_f_lb / alpha);

      GapResult gr = gap_and_weights(filter);
      if (std::isfinite(last_gap))
        result.max_gap_increase = std::max(result.max_gap_increase, gr.gap - last_gap);
      last_gap = gr.gap;
      const double fv = problem.f_value(gr.combined);
      const double gv = problem.g_value(gr.combined);
      result.max_combined_violation =
          std::max({result.max_combined_violation, fv - (filter.opt_lb + gr.gap), gv - gr.gap});
      result.combined = gr.combined;
      result.gap = gr.gap;
      result.opt_lb = filter.opt_lb;

      const int global_t = result.total_steps + stage_steps;
      if (global_t == next_checkpoint) {
        next_checkpoint *= 2;
        TraceRow row;
        row.t = global_t;
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        row.upper = fv;
        row.lower = filter.opt_lb;
        row.gap = gr.gap;
        row.rho_or_alpha = alpha;
        row.restarts = stage.stage_index - 1;
        result.trace.push_back(row);
      }

      if (gr.gap <= cfg.eps_gap ||
          (cfg.stop_predicate && cfg.stop_predicate(gr.combined, gr.gap))) {
        result.converged = true;
        done = true;
        return ControlAction::stop;
      }

      const Interval segment = delta_segment(filter);
      if (segment.is_empty) {  // numerically solved
        result.converged = true;
        done = true;
        return ControlAction::stop;
      }
      stage.segment = segment;
      if (stage_control(stage, segment, &alpha_next) == StageDecision::new_stage) {
        stage_change = true;
        segment_at_change = segment;
        return ControlAction::stop;
      }
      return ControlAction::proceed;
    });

    result.total_steps += rr.total_steps;
    warm = rr.state.x;
    have_warm = true;

    StageLogRow row;
    row.stage = stage.stage_index;
    row.alpha = alpha;
    row.steps = stage_steps;
    row.gap = result.gap;
    row.opt_lb = result.opt_lb;
    row.delta_lo = stage.segment.lo;
    row.delta_hi = stage.segment.hi;
    result.stage_log.push_back(row);

    if (stage_change) {
      if (!prev_stage_segment.is_empty && prev_stage_segment.length() > 0.0)
        result.max_segment_ratio = std::max(
            result.max_segment_ratio, segment_at_change.length() / prev_stage_segment.length());
      prev_stage_segment = segment_at_change;
      stage.alpha = alpha_next;
      ++stage.stage_index;
    } else if (!done) {
      break;  // per-stage budget exhausted without a stage change
    }
  }

  result.stages = stage.stage_index;
  return result;
}

}  // namespace comprox
