#pragma once

#include "comprox/multiterm.hpp"

namespace comprox {

// Semi-separable constrained problem
//   min { f(y) = sum_k [psi_k(y^k) + Psi_k(y^k)] : g(y) <= 0, y in Y },
//   g(y) = || sum_k A_k y^k - b ||_2,
// with bounded Y (every y-block lives on a ball).
struct ConstrainedProblem {
  std::vector<EpigraphBlock> y_geoms;
  std::vector<int> y_dims;
  std::vector<SmoothPart> phis;  // psi_k through their saddle representations
  std::vector<LinearMap> A;
  VectorXd b;
  double L_bound = 0.0;  // a priori bound on max(|f|, |g|) over Y

  int K() const { return static_cast<int>(y_geoms.size()); }
  void validate() const;
  // f at a primal point; the epigraph scalars stand in for the Psi values.
  double f_value(const CompositePoint& y) const;
  double g_value(const CompositePoint& y) const;
};

// The filter: achieved (p, q) value pairs with their points, pruned to the
// lower-left Pareto envelope, plus the best lower bound on Opt seen so far.
struct Filter {
  struct Entry {
    double p = 0.0, q = 0.0;
    CompositePoint y;
  };
  std::vector<Entry> entries;
  double opt_lb = -std::numeric_limits<double>::infinity();

  void insert(double p, double q, CompositePoint y);
  void raise_lower_bound(double lb) { opt_lb = std::max(opt_lb, lb); }
  bool empty() const { return entries.empty(); }
};

// h_{s,t}(alpha) = min over entries of alpha (p - opt_lb) + (1 - alpha) q.
double h_eval(const Filter& filter, double alpha);

struct Interval {
  double lo = 0.0, hi = 0.0;
  bool is_empty = true;
  double length() const { return is_empty ? 0.0 : hi - lo; }
};

struct GapResult {
  double gap = 0.0;
  double alpha_star = 0.0;
  std::vector<std::pair<int, double>> weights;  // sparse lambda*, support <= 2
  CompositePoint combined;                      // y-hat = sum lambda* y_pq
  double p_bar = 0.0, q_bar = 0.0;
};

// Exact maximization of the concave piecewise-linear h over [0,1], with the
// optimal mixture recovered from the equilibrium at alpha*.
GapResult gap_and_weights(const Filter& filter);

// Delta = {alpha in [0,1] : h(alpha) >= 0}, exact endpoints.
Interval delta_segment(const Filter& filter);

struct StageState {
  double alpha = 0.5;
  Interval segment{0.0, 1.0, false};
  int stage_index = 1;
};

enum class StageDecision { continue_stage, new_stage };

// Continue while alpha sits in the closed middle third of the segment;
// otherwise the next stage starts at the segment midpoint.
StageDecision stage_control(const StageState& state, const Interval& segment,
                            double* alpha_next);

// The stage problem (P_s) as a composite saddle problem, with the resolution
// domain for per-stage certificate lower bounds.
struct StageProblem {
  SaddleOperator op;
  AggregatedSetup setup;
  CompositePoint initial;
  ResolutionDomain domain;  // Y x Z x W
  double alpha = 0.5;
};
StageProblem stage_problem(const ConstrainedProblem& problem, double alpha);

struct StageLogRow {
  int stage = 0;
  double alpha = 0.0;
  int steps = 0;
  double gap = 0.0;
  double opt_lb = 0.0;
  double delta_lo = 0.0, delta_hi = 0.0;
};

struct SequentialConfig {
  double eps_gap = 1e-6;
  int per_stage_budget = 200000;
  int max_total_steps = 1000000;
  int max_stages = 200;
  StepPolicy policy;
  // optional extra termination test on the combined point
  std::function<bool(const CompositePoint& combined, double gap)> stop_predicate;
};

struct SequentialResult {
  CompositePoint combined;
  double gap = std::numeric_limits<double>::infinity();
  double opt_lb = -std::numeric_limits<double>::infinity();
  std::vector<StageLogRow> stage_log;
  std::vector<TraceRow> trace;  // power-of-two checkpoints; alpha in rho_or_alpha
  int total_steps = 0;
  int stages = 0;
  bool converged = false;
  // run-wide monitors
  double max_gap_increase = 0.0;       // positive = monotonicity violation
  double max_combined_violation = 0.0; // over f(yhat)-(lb+gap) and g(yhat)-gap
  double max_segment_ratio = 0.0;      // |Delta^s| / |Delta^{s-1}| at changes
};

// Stage-based solve: per stage runs CoMP on (P_s), feeds search and averaged
// points into the filter, raises the lower bound from per-stage certificates,
// and bisects alpha through the segment rule.
SequentialResult run_sequential(const ConstrainedProblem& problem,
                                const SequentialConfig& cfg);

}  // namespace comprox
