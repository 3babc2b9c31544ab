#pragma once

#include "comprox/certificates.hpp"
#include "comprox/prox.hpp"
#include "comprox/types.hpp"

namespace comprox {

// The operator F = [F_u(u); F_v] of a composite saddle problem: the u-part
// depends on u only, the v-part is a positive constant per epigraph slot.
struct SaddleOperator {
  std::function<std::vector<VectorXd>(const std::vector<VectorXd>&)> eval_Fu;
  std::vector<double> Fv;
  std::optional<double> lipschitz_hint;
  double M_hint = 0.0;
};

// Grow/shrink stepsize adaptation: accept a step once delta <= gamma^2 M^2,
// then raise the guess; shrink and retry otherwise.
struct StepPolicy {
  double initial_guess = 1.0;
  double grow_factor = 1.2;
  double shrink_factor = 0.8;
  int max_retries = 50;

  void validate() const {
    if (initial_guess <= 0.0 || grow_factor <= 1.0 || shrink_factor <= 0.0 ||
        shrink_factor >= 1.0 || max_retries < 1)
      throw InputError("StepPolicy: parameters out of range");
  }
};

struct RunState {
  CompositePoint x;
  ExecutionProtocol protocol;  // filled only when recording is on
  ProtocolSummary summary;     // always maintained, reset per phase
  std::vector<double> gamma_history;  // accepted stepsizes, global
  std::vector<double> delta_history;
  std::vector<double> phase_gammas;  // stepsizes of the current phase
  int iteration = 0;                 // accepted steps, global
  double step_guess = 1.0;
};

struct StepResult {
  CompositePoint y;
  CompositePoint x_next;
  double delta;
};

// One extragradient step at stepsize gamma:
//   y      = P_x(gamma [F_u(u); F_v])
//   x_next = P_x(gamma [F_u(u'); F_v])
//   delta  = gamma <F_u(u') - F_u(u), u' - u_next> - V_{u'}(u_next) - V_u(u').
StepResult comp_mp_step(const CompositePoint& x, const std::vector<VectorXd>& fu_at_x,
                        const SaddleOperator& op, const AggregatedSetup& setup, double gamma);
StepResult comp_mp_step(const RunState& state, const SaddleOperator& op,
                        const AggregatedSetup& setup, double gamma);

struct AcceptedStep {
  CompositePoint y;
  double gamma = 0.0;
  double delta = 0.0;
  int retries = 0;
};

// Repeats the step, shrinking gamma, until delta <= gamma^2 M^2; commits the
// accepted step into the state and raises the guess.
AcceptedStep adaptive_step(RunState& state, const SaddleOperator& op,
                           const AggregatedSetup& setup, const StepPolicy& policy);

enum class ControlAction { proceed, restart_phase, stop };

struct StepEvent {
  int t = 0;           // global accepted-step index, 1-based
  int phase_step = 0;  // index within the current certificate phase
  double gamma = 0.0;
  double delta = 0.0;
  bool is_checkpoint = false;
  const CompositePoint* y = nullptr;
  const RunState* state = nullptr;
};
using StepCallback = std::function<ControlAction(const StepEvent&)>;

struct RunConfig {
  int max_iters = 1000;
  StepPolicy policy;
  std::optional<double> fixed_gamma;  // bypasses adaptation when set
  bool record_protocol = false;
  std::vector<int> checkpoints;  // default: powers of two plus max_iters
};

struct RunResult {
  RunState state;
  AccuracyCertificate certificate;  // proportional weights of the final phase
  CompositePoint averaged;          // final-phase averaged point
  std::vector<std::pair<int, CompositePoint>> checkpoint_averages;
  int total_steps = 0;
  int restarts = 0;
  bool stopped = false;            // callback asked to stop
  bool budget_exhausted = false;   // hit max_iters without a stop request
};

std::vector<int> power_of_two_checkpoints(int max_iters);

// The main loop: adaptive (or fixed-gamma) CoMP steps producing the
// execution protocol, stepsize-proportional certificate and running average.
// The callback fires after every accepted step; returning restart_phase drops
// the protocol/certificate accumulated so far and restarts the phase from the
// current x.
RunResult run(const SaddleOperator& op, const AggregatedSetup& setup, CompositePoint x0,
              const RunConfig& cfg, const StepCallback& callback = {});

enum class ScheduleKind { proportional, last_half_uniform };

// Averaging weights from the stepsize history; last_half_uniform puts zero
// weight on the first half. Both satisfy the nondecreasing lambda/gamma
// condition, which is re-checked on construction.
AccuracyCertificate weighted_schedule(const std::vector<double>& gamma_history,
                                      ScheduleKind kind);

}  // namespace comprox
