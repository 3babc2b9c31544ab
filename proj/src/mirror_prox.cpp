#include "comprox/mirror_prox.hpp"

#include <cmath>

namespace comprox {

namespace {

// Absolute slack for the empirical acceptance test delta <= gamma^2 M^2;
// covers roundoff at the constant-stepsize boundary gamma = 1/L.
constexpr double kDeltaSlack = 1e-13;

std::vector<VectorXd> scaled(const std::vector<VectorXd>& f, double gamma) {
  std::vector<VectorXd> out;
  out.reserve(f.size());
  for (const auto& fi : f) out.push_back(gamma * fi);
  return out;
}

std::vector<double> scaled(const std::vector<double>& f, double gamma) {
  std::vector<double> out;
  out.reserve(f.size());
  for (double fi : f) out.push_back(gamma * fi);
  return out;
}

}  // namespace

StepResult comp_mp_step(const CompositePoint& x, const std::vector<VectorXd>& fu_at_x,
                        const SaddleOperator& op, const AggregatedSetup& setup, double gamma) {
  if (gamma <= 0.0) throw InputError("comp_mp_step: gamma must be > 0");
  StepResult r;
  r.y = composite_prox(x, scaled(fu_at_x, gamma), scaled(op.Fv, gamma), setup);
  const std::vector<VectorXd> fu_at_y = op.eval_Fu(r.y.u);
  r.x_next = composite_prox(x, scaled(fu_at_y, gamma), scaled(op.Fv, gamma), setup);
  double ip = 0.0;
  for (size_t i = 0; i < fu_at_y.size(); ++i)
    ip += (fu_at_y[i] - fu_at_x[i]).dot(r.y.u[i] - r.x_next.u[i]);
  r.delta = gamma * ip - setup.bregman(r.y.u, r.x_next.u) - setup.bregman(x.u, r.y.u);
  return r;
}

StepResult comp_mp_step(const RunState& state, const SaddleOperator& op,
                        const AggregatedSetup& setup, double gamma) {
  return comp_mp_step(state.x, op.eval_Fu(state.x.u), op, setup, gamma);
}

AcceptedStep adaptive_step(RunState& state, const SaddleOperator& op,
                           const AggregatedSetup& setup, const StepPolicy& policy) {
  policy.validate();
  const std::vector<VectorXd> fu_at_x = op.eval_Fu(state.x.u);  // cached across retries
  const double m2 = op.M_hint * op.M_hint;
  double gamma = state.step_guess;
  StepResult step;
  int retries = 0;
  for (;;) {
    step = comp_mp_step(state.x, fu_at_x, op, setup, gamma);
    if (step.delta <= gamma * gamma * m2 + kDeltaSlack) break;
    if (++retries > policy.max_retries)
      throw StepsizeCollapseError("adaptive_step: no acceptable stepsize after " +
                                  std::to_string(retries - 1) + " retries (gamma=" +
                                  std::to_string(gamma) + ", delta=" +
                                  std::to_string(step.delta) + ")");
    gamma *= policy.shrink_factor;
  }
  state.step_guess = gamma * policy.grow_factor;
  state.gamma_history.push_back(gamma);
  state.delta_history.push_back(step.delta);
  state.phase_gammas.push_back(gamma);
  state.x = step.x_next;
  ++state.iteration;
  AcceptedStep out;
  out.y = std::move(step.y);
  out.gamma = gamma;
  out.delta = step.delta;
  out.retries = retries;
  return out;
}

std::vector<int> power_of_two_checkpoints(int max_iters) {
  std::vector<int> cps;
  for (int t = 1; t <= max_iters; t *= 2) cps.push_back(t);
  if (cps.empty() || cps.back() != max_iters) cps.push_back(max_iters);
  return cps;
}

RunResult run(const SaddleOperator& op, const AggregatedSetup& setup, CompositePoint x0,
              const RunConfig& cfg, const StepCallback& callback) {
  setup.check_point(x0, "run");
  for (double fv : op.Fv)
    if (fv <= 0.0) throw InputError("run: F_v entries must be > 0");
  if (static_cast<int>(op.Fv.size()) != setup.n_vslots())
    throw InputError("run: F_v slot count mismatch");

  RunResult result;
  RunState& st = result.state;
  st.x = std::move(x0);
  st.summary.field_v = op.Fv;
  st.protocol.field_v = op.Fv;
  st.step_guess = cfg.fixed_gamma.value_or(cfg.policy.initial_guess);

  std::vector<int> cps = cfg.checkpoints.empty() ? power_of_two_checkpoints(cfg.max_iters)
                                                 : cfg.checkpoints;
  size_t next_cp = 0;

  for (int t = 1; t <= cfg.max_iters; ++t) {
    AcceptedStep step;
    if (cfg.fixed_gamma) {
      const double gamma = *cfg.fixed_gamma;
      StepResult r = comp_mp_step(st, op, setup, gamma);
      st.gamma_history.push_back(gamma);
      st.delta_history.push_back(r.delta);
      st.phase_gammas.push_back(gamma);
      st.x = r.x_next;
      ++st.iteration;
      step.y = std::move(r.y);
      step.gamma = gamma;
      step.delta = r.delta;
    } else {
      step = adaptive_step(st, op, setup, cfg.policy);
    }

    const std::vector<VectorXd> fu_at_y = op.eval_Fu(step.y.u);
    st.summary.add(step.gamma, step.y, fu_at_y);
    if (cfg.record_protocol) st.protocol.append(step.y, fu_at_y);
    result.total_steps = t;

    while (next_cp < cps.size() && cps[next_cp] < t) ++next_cp;
    const bool at_cp = next_cp < cps.size() && cps[next_cp] == t;
    if (at_cp) {
      result.checkpoint_averages.emplace_back(t, st.summary.averaged());
      ++next_cp;
    }

    if (callback) {
      StepEvent ev;
      ev.t = t;
      ev.phase_step = st.summary.steps;
      ev.gamma = step.gamma;
      ev.delta = step.delta;
      ev.is_checkpoint = at_cp;
      ev.y = &step.y;
      ev.state = &st;
      const ControlAction act = callback(ev);
      if (act == ControlAction::stop) {
        result.stopped = true;
        break;
      }
      if (act == ControlAction::restart_phase) {
        st.summary.reset();
        st.summary.field_v = op.Fv;
        st.protocol = ExecutionProtocol{};
        st.protocol.field_v = op.Fv;
        st.phase_gammas.clear();
        ++result.restarts;
      }
    }
  }

  result.budget_exhausted = !result.stopped;
  if (st.summary.steps > 0) {
    result.certificate = AccuracyCertificate::proportional(st.phase_gammas);
    result.averaged = st.summary.averaged();
  }
  return result;
}

AccuracyCertificate weighted_schedule(const std::vector<double>& gamma_history,
                                      ScheduleKind kind) {
  if (gamma_history.empty()) throw InputError("weighted_schedule: empty history");
  const size_t n = gamma_history.size();
  AccuracyCertificate cert;
  cert.weights.assign(n, 0.0);
  size_t start = 0;
  if (kind == ScheduleKind::last_half_uniform) start = n / 2;
  double s = 0.0;
  for (size_t i = start; i < n; ++i) s += gamma_history[i];
  for (size_t i = start; i < n; ++i) cert.weights[i] = gamma_history[i] / s;
  // lambda/gamma must be nondecreasing for the nonuniform-weight bound.
  double prev = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double ratio = cert.weights[i] / gamma_history[i];
    if (ratio < prev - 1e-15)
      throw InputError("weighted_schedule: lambda/gamma not nondecreasing");
    prev = ratio;
  }
  cert.validate();
  return cert;
}

}  // namespace comprox
