#include "comprox/multiterm.hpp"

#include <chrono>
#include <cmath>

namespace comprox {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

LinearMap LinearMap::identity(int dim) {
  LinearMap m;
  m.in_dim = m.out_dim = dim;
  m.apply = [](const VectorXd& x) { return x; };
  m.adjoint = [](const VectorXd& x) { return x; };
  m.op_norm = 1.0;
  return m;
}

LinearMap LinearMap::dense(MatrixXd A) {
  auto M = std::make_shared<MatrixXd>(std::move(A));
  LinearMap m;
  m.in_dim = static_cast<int>(M->cols());
  m.out_dim = static_cast<int>(M->rows());
  m.apply = [M](const VectorXd& x) -> VectorXd { return *M * x; };
  m.adjoint = [M](const VectorXd& x) -> VectorXd { return M->transpose() * x; };
  Eigen::JacobiSVD<MatrixXd> svd(*M);
  m.op_norm = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return m;
}

SmoothPart SmoothPart::zero() {
  SmoothPart p;
  p.value = [](const VectorXd&, const VectorXd&) { return 0.0; };
  p.grad_y = [](const VectorXd& y, const VectorXd&) { return VectorXd::Zero(y.size()); };
  p.psi = [](const VectorXd&) { return 0.0; };
  return p;
}

int MultiTermProblem::base_total_dim() const {
  int d = 0;
  for (int b : base_dims) d += b;
  return d;
}

double MultiTermProblem::objective(const VectorXd& base) const {
  double f = phi0.psi(base);
  int off = 0;
  for (size_t b = 0; b < base_geoms.size(); ++b) {
    f += base_geoms[b].psi(base.segment(off, base_dims[b]));
    off += base_dims[b];
  }
  for (const auto& c : couplings) {
    const VectorXd yk = c.A.apply(base) + c.b;
    f += c.phi.psi(yk) + c.target_geom.psi(yk);
  }
  return f;
}

VectorXd AssembledSaddle::stacked_base(const CompositePoint& x) const {
  int total = 0;
  for (int i : base_idx) total += static_cast<int>(x.u[i].size());
  VectorXd out(total);
  int off = 0;
  for (int i : base_idx) {
    out.segment(off, x.u[i].size()) = x.u[i];
    off += static_cast<int>(x.u[i].size());
  }
  return out;
}

std::vector<double> AssembledSaddle::coupling_residuals(const CompositePoint& x) const {
  const VectorXd base = stacked_base(x);
  std::vector<double> out;
  out.reserve(target_idx.size());
  for (size_t k = 0; k < target_idx.size(); ++k) {
    const auto& c = problem->couplings[k];
    out.push_back((x.u[target_idx[k]] - c.A.apply(base) - c.b).norm());
  }
  return out;
}

double AssembledSaddle::primal_sup(const CompositePoint& x) const {
  const VectorXd base = stacked_base(x);
  double val = problem->phi0.psi(base);
  for (size_t k = 0; k < target_idx.size(); ++k)
    val += problem->couplings[k].phi.psi(x.u[target_idx[k]]);
  for (double tau : x.v) val += tau;
  const std::vector<double> res = coupling_residuals(x);
  for (size_t k = 0; k < res.size(); ++k) val += (*rho)[k] * res[k];
  return val;
}

AssembledSaddle assemble(const MultiTermProblem& problem, const AggregationConfig& agg,
                         const VectorXd& base_init) {
  if (problem.base_geoms.size() != problem.base_dims.size())
    throw InputError("assemble: base geometry/dimension mismatch");
  if (base_init.size() != problem.base_total_dim())
    throw InputError("assemble: base_init dimension mismatch");
  if (agg.D <= 0.0 || (agg.d_exponent != 1 && agg.d_exponent != 2))
    throw InputError("assemble: bad aggregation config");

  AssembledSaddle a;
  a.problem = &problem;
  a.rho = std::make_shared<std::vector<double>>();
  for (const auto& c : problem.couplings) {
    if (c.rho <= 0.0) throw InputError("assemble: penalties must be > 0");
    if (c.A.in_dim != problem.base_total_dim() || c.A.out_dim != c.target_dim)
      throw InputError("assemble: coupling map dimensions inconsistent");
    a.rho->push_back(c.rho);
  }

  const double y_weight = agg.d_exponent == 1 ? 1.0 / agg.D : 1.0 / (agg.D * agg.D);
  std::vector<BlockSpec> blocks;
  a.n_base = static_cast<int>(problem.base_geoms.size());
  for (int b = 0; b < a.n_base; ++b) {
    a.base_idx.push_back(static_cast<int>(blocks.size()));
    blocks.push_back({problem.base_geoms[b], y_weight, problem.base_dims[b], -1});
  }
  for (const auto& c : problem.couplings) {
    a.target_idx.push_back(static_cast<int>(blocks.size()));
    blocks.push_back({c.target_geom, y_weight, c.target_dim, -1});
  }
  auto add_ball = [&blocks](int dim, double radius, double weight) {
    EpigraphBlock g;
    g.base_set = BaseSet::euclid_ball;
    g.radius = radius;
    blocks.push_back({g, weight, dim, -1});
    return static_cast<int>(blocks.size()) - 1;
  };
  if (problem.phi0.has_z()) a.z0_idx = add_ball(problem.phi0.z_dim, problem.phi0.z_radius, agg.z_weight);
  for (const auto& c : problem.couplings)
    a.z_idx.push_back(c.phi.has_z() ? add_ball(c.phi.z_dim, c.phi.z_radius, agg.z_weight) : -1);
  for (const auto& c : problem.couplings) a.w_idx.push_back(add_ball(c.target_dim, 1.0, agg.w_weight));

  a.setup = AggregatedSetup::make(std::move(blocks));

  // operator per the penalized-saddle gradient field
  const MultiTermProblem* P = &problem;
  struct Idx {
    std::vector<int> base, target, z, w;
    int z0;
    int n_blocks;
    std::vector<int> base_dims;
  };
  Idx idx{a.base_idx, a.target_idx, a.z_idx, a.w_idx, a.z0_idx,
          static_cast<int>(a.setup.blocks.size()), problem.base_dims};
  auto rho = a.rho;
  a.op.eval_Fu = [P, idx, rho](const std::vector<VectorXd>& u) {
    std::vector<VectorXd> F(idx.n_blocks);
    // stacked base
    int total = 0;
    for (int i : idx.base) total += static_cast<int>(u[i].size());
    VectorXd base(total);
    int off = 0;
    for (int i : idx.base) {
      base.segment(off, u[i].size()) = u[i];
      off += static_cast<int>(u[i].size());
    }
    static const VectorXd kEmpty;
    const VectorXd& z0 = idx.z0 >= 0 ? u[idx.z0] : kEmpty;
    VectorXd base_grad = P->phi0.grad_y(base, z0);
    if (idx.z0 >= 0) F[idx.z0] = -P->phi0.grad_z(base, z0);
    for (size_t k = 0; k < idx.target.size(); ++k) {
      const auto& c = P->couplings[k];
      const double rk = (*rho)[k];
      const VectorXd& yk = u[idx.target[k]];
      const VectorXd& wk = u[idx.w[k]];
      const VectorXd& zk = idx.z[k] >= 0 ? u[idx.z[k]] : kEmpty;
      base_grad -= rk * c.A.adjoint(wk);
      F[idx.target[k]] = rk * wk;
      if (c.phi.grad_y) F[idx.target[k]] += c.phi.grad_y(yk, zk);
      if (idx.z[k] >= 0) F[idx.z[k]] = -c.phi.grad_z(yk, zk);
      F[idx.w[k]] = -rk * (yk - c.A.apply(base) - c.b);
    }
    off = 0;
    for (size_t b = 0; b < idx.base.size(); ++b) {
      F[idx.base[b]] = base_grad.segment(off, idx.base_dims[b]);
      off += idx.base_dims[b];
    }
    return F;
  };
  a.op.Fv.assign(a.setup.n_vslots(), 1.0);
  a.op.M_hint = 0.0;

  // starting point: targets on the coupling manifold, duals at zero,
  // epigraph scalars at their Psi values
  CompositePoint x0;
  x0.u.resize(a.setup.blocks.size());
  int off = 0;
  for (int b = 0; b < a.n_base; ++b) {
    x0.u[a.base_idx[b]] = base_init.segment(off, problem.base_dims[b]);
    off += problem.base_dims[b];
  }
  for (size_t k = 0; k < a.target_idx.size(); ++k)
    x0.u[a.target_idx[k]] = problem.couplings[k].A.apply(base_init) + problem.couplings[k].b;
  if (a.z0_idx >= 0) x0.u[a.z0_idx] = VectorXd::Zero(problem.phi0.z_dim);
  for (size_t k = 0; k < a.z_idx.size(); ++k)
    if (a.z_idx[k] >= 0) x0.u[a.z_idx[k]] = VectorXd::Zero(problem.couplings[k].phi.z_dim);
  for (size_t k = 0; k < a.w_idx.size(); ++k)
    x0.u[a.w_idx[k]] = VectorXd::Zero(problem.couplings[k].target_dim);
  x0.v.assign(a.setup.n_vslots(), 0.0);
  for (size_t i = 0; i < a.setup.blocks.size(); ++i) {
    const auto& spec = a.setup.blocks[i];
    if (spec.v_index >= 0) x0.v[spec.v_index] = spec.geom.psi(x0.u[i]);
  }
  a.initial = std::move(x0);
  return a;
}

CompositePoint correction(const AssembledSaddle& a, const CompositePoint& x) {
  CompositePoint out = x;
  const VectorXd base = a.stacked_base(x);
  for (size_t k = 0; k < a.target_idx.size(); ++k) {
    const auto& c = a.problem->couplings[k];
    out.u[a.target_idx[k]] = c.A.apply(base) + c.b;
  }
  for (size_t i = 0; i < a.setup.blocks.size(); ++i) {
    const auto& spec = a.setup.blocks[i];
    if (spec.v_index >= 0) out.v[spec.v_index] = spec.geom.psi(out.u[i]);
  }
  return out;
}

namespace {

double derived_lip_H(const EpigraphBlock& g, int dim) {
  switch (g.nonsmooth) {
    case NonsmoothKind::none:
    case NonsmoothKind::linear_zero:
      return 0.0;
    case NonsmoothKind::l1:
      return g.weight * std::sqrt(static_cast<double>(dim));
    case NonsmoothKind::nuclear:
      return g.weight * std::sqrt(static_cast<double>(std::min(g.rows, g.cols)));
  }
  return kNaN;
}

}  // namespace

std::vector<double> penalty_floor(const MultiTermProblem& problem) {
  std::vector<double> floors;
  floors.reserve(problem.couplings.size());
  for (const auto& c : problem.couplings) {
    const double G = c.lip_G >= 0.0 ? c.lip_G : kNaN;
    const double H = c.lip_H >= 0.0 ? c.lip_H : derived_lip_H(c.target_geom, c.target_dim);
    floors.push_back(G + H);
  }
  return floors;
}

PenaltyDecision adapt_penalty(PenaltyController& ctrl, double upsilon_at_correction,
                              double primal_sup_at_raw) {
  ctrl.validate();
  if (upsilon_at_correction <= (1.0 + ctrl.kappa) * primal_sup_at_raw)
    return PenaltyDecision::keep;
  for (double& r : ctrl.rho) r *= ctrl.growth;
  return PenaltyDecision::restart_with_new_rho;
}

PenaltyDecision adapt_penalty_selective(PenaltyController& ctrl, double upsilon_at_correction,
                                        double primal_sup_at_raw,
                                        const std::vector<double>& block_violations) {
  ctrl.validate();
  if (upsilon_at_correction <= (1.0 + ctrl.kappa) * primal_sup_at_raw)
    return PenaltyDecision::keep;
  bool any = false;
  for (size_t k = 0; k < ctrl.rho.size(); ++k)
    if (k < block_violations.size() && block_violations[k] > 0.0) {
      ctrl.rho[k] *= ctrl.growth;
      any = true;
    }
  if (!any)
    for (double& r : ctrl.rho) r *= ctrl.growth;
  return PenaltyDecision::restart_with_new_rho;
}

double mc_radius_bound(const VectorXd& b_obs, double lambda, double upsilon_best) {
  if (lambda <= 0.0) throw InputError("mc_radius_bound: lambda must be > 0");
  const VectorXd b_abs = b_obs.cwiseAbs();
  auto theta = [&](double r) {
    return 0.5 * (capped_simplex_project(b_obs, r) - b_abs).squaredNorm();
  };
  auto theta_plus = [&](double r) { return lambda * r + theta(r); };

  // minimize the convex theta+ to check solvability of theta+(r) <= upsilon
  double lo = 0.0, hi = b_abs.sum() + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (theta_plus(m1) <= theta_plus(m2))
      hi = m2;
    else
      lo = m1;
  }
  const double r_min = 0.5 * (lo + hi);
  if (theta_plus(r_min) > upsilon_best + 1e-12)
    throw InputError("mc_radius_bound: upsilon_best below min theta+; inconsistent inputs");

  // right endpoint of the sublevel set {theta+ <= upsilon_best}
  double blo = r_min, bhi = std::max(r_min + 1.0, (upsilon_best + 1.0) / lambda);
  while (theta_plus(bhi) <= upsilon_best) bhi *= 2.0;
  for (int it = 0; it < 200 && bhi - blo > 1e-12 * std::max(1.0, bhi); ++it) {
    const double mid = 0.5 * (blo + bhi);
    if (theta_plus(mid) <= upsilon_best)
      blo = mid;
    else
      bhi = mid;
  }
  return bhi;  // upper end keeps the bound valid
}

McLowerBound mc_lower_bound(const ProtocolSummary& summary, const CompositePoint& averaged,
                            const AssembledSaddle& a, double upsilon_best, double lambda,
                            double mu, const VectorXd& b_obs) {
  if (lambda <= 0.0 || mu <= 0.0) throw InputError("mc_lower_bound: lambda, mu must be > 0");
  McLowerBound out;
  out.R_t = mc_radius_bound(b_obs, lambda, upsilon_best);

  // R+ = max(R_t, ||y0_avg||_1): the capped domain then contains the lifted
  // optimum (||.||_nuc <= ||.||_1 covers the nuclear cap), which is all the
  // certificate chain PhiBar(x^t) - Res <= Opt-hat needs.
  const double r_plus = std::max(out.R_t, averaged.u[a.base_idx.front()].lpNorm<1>());
  out.R_plus = r_plus;

  for (const auto& spec : a.setup.blocks) {
    const auto& g = spec.geom;
    if (g.lifted()) {
      out.domain.blocks.push_back(ResolutionDomain::Block::capped_epigraph(
          g.nonsmooth, g.weight, r_plus, g.rows, g.cols));
    } else if (g.is_ball()) {
      out.domain.blocks.push_back(
          ResolutionDomain::Block::ball(VectorXd::Zero(spec.dim), g.radius));
    } else {
      throw CapabilityError("mc_lower_bound: free non-lifted block not supported");
    }
  }
  out.ell = a.primal_sup(averaged) - resolution(summary, out.domain);
  return out;
}

PenaltySolveResult solve_penalized(const MultiTermProblem& problem, const VectorXd& base_init,
                                   const PenaltySolveConfig& cfg) {
  PenaltySolveResult result;
  PenaltyController ctrl = cfg.controller;
  if (ctrl.rho.empty()) ctrl.rho.assign(problem.K(), ctrl.initial);
  ctrl.validate();

  MultiTermProblem prob = problem;  // local copy carries the live rho defaults
  for (int k = 0; k < prob.K(); ++k) prob.couplings[k].rho = ctrl.rho[k];

  double D = cfg.agg.D;
  const std::vector<int> checkpoints =
      cfg.checkpoints.empty() ? power_of_two_checkpoints(cfg.max_iters) : cfg.checkpoints;

  result.upsilon_best = kInf;
  result.best_base = base_init;
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&t_start]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  int done = 0;
  VectorXd base_current = base_init;
  CompositePoint warm;  // carried across D-rescale phases
  bool have_warm = false;

  while (done < cfg.max_iters) {
    AggregationConfig agg = cfg.agg;
    agg.D = D;
    AssembledSaddle a = assemble(prob, agg, base_current);
    *a.rho = ctrl.rho;
    if (have_warm) a.initial = warm;

    bool want_rescale = false;
    size_t next_cp = 0;
    while (next_cp < checkpoints.size() && checkpoints[next_cp] <= done) ++next_cp;

    auto consider = [&](const CompositePoint& pt) {
      // objective at the corrected point doubles as the upper-bound candidate
      const VectorXd base = a.stacked_base(pt);
      const double ups = prob.objective(base);
      if (ups < result.upsilon_best) {
        result.upsilon_best = ups;
        result.best_base = base;
      }
      return ups;
    };

    RunConfig rc;
    rc.max_iters = cfg.max_iters - done;
    rc.policy = cfg.policy;
    rc.record_protocol = cfg.record_protocol;

    RunResult rr = run(a.op, a.setup, a.initial, rc, [&](const StepEvent& ev) {
      const int global_t = done + ev.t;
      const CompositePoint avg = ev.state->summary.averaged();
      bool restart = false;
      for (const CompositePoint* pt : {ev.y, &avg}) {
        const double ups = consider(*pt);
        if (adapt_penalty(ctrl, ups, a.primal_sup(*pt)) ==
            PenaltyDecision::restart_with_new_rho) {
          restart = true;
          break;  // one growth step per iteration
        }
      }
      if (restart) {
        *a.rho = ctrl.rho;
        for (int k = 0; k < prob.K(); ++k) prob.couplings[k].rho = ctrl.rho[k];
      }

      if (next_cp < checkpoints.size() && checkpoints[next_cp] == global_t) {
        ++next_cp;
        TraceRow row;
        row.t = global_t;
        row.seconds = elapsed();
        row.upper = result.upsilon_best;
        if (cfg.lower_bound && !restart) {
          const double ell = cfg.lower_bound(ev.state->summary, avg, result.upsilon_best, a);
          result.lower_best = std::max(result.lower_best, ell);
        }
        row.lower = result.lower_best;
        row.gap = result.upsilon_best - result.lower_best;
        row.rho_or_alpha = ctrl.rho.empty() ? 0.0 : ctrl.rho[0];
        row.restarts = result.restarts + (restart ? 1 : 0);
        result.trace.push_back(row);
      }

      if (restart) {
        ++result.restarts;
        return ControlAction::restart_phase;
      }
      if (cfg.rescale_D && a.stacked_base(*ev.y).norm() > 0.2 * D) {
        want_rescale = true;
        return ControlAction::stop;
      }
      return ControlAction::proceed;
    });

    done += rr.total_steps;
    warm = rr.state.x;
    have_warm = true;
    base_current = a.stacked_base(rr.state.x);
    if (cfg.record_protocol) {
      result.final_protocol = std::move(rr.state.protocol);
      result.final_phase_gammas = rr.state.phase_gammas;
    }

    if (want_rescale) {
      D *= 2.0;
      ++result.restarts;
      continue;
    }
    break;  // budget exhausted or run finished
  }

  result.total_steps = done;
  result.final_rho = ctrl.rho.empty() ? 0.0 : ctrl.rho[0];
  result.final_D = D;
  return result;
}

}  // namespace comprox
