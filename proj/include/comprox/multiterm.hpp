#pragma once

#include "comprox/mirror_prox.hpp"

#include <memory>

namespace comprox {

// Linear map with explicit adjoint.
struct LinearMap {
  int in_dim = 0, out_dim = 0;
  std::function<VectorXd(const VectorXd&)> apply;
  std::function<VectorXd(const VectorXd&)> adjoint;
  double op_norm = -1.0;  // spectral norm when known, < 0 otherwise

  static LinearMap identity(int dim);
  static LinearMap dense(MatrixXd A);
};

// Smooth convex-concave coupling phi(y, z), z over a Euclidean ball of radius
// z_radius (radius 0: no z variable, phi smooth in y only). `psi` evaluates
// max_z phi(y, z) exactly.
struct SmoothPart {
  int z_dim = 0;
  double z_radius = 0.0;
  std::function<double(const VectorXd&, const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> grad_y;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> grad_z;
  std::function<double(const VectorXd&)> psi;

  bool has_z() const { return z_dim > 0; }
  static SmoothPart zero();
};

// Multi-term composite problem
//   min over base { phi0bar(base) + sum Psi0_b(base_b)
//                   + sum_k [ psi_k(A_k base + b_k) + Psi_k(A_k base + b_k) ] }
// The "level-0" variable is a tuple of blocks, each possibly carrying its own
// lifted simple nonsmooth term; every coupling k introduces an auxiliary block
// y^k tied to the base through y^k = A_k base + b_k, handled by exact penalty.
struct MultiTermProblem {
  std::vector<EpigraphBlock> base_geoms;
  std::vector<int> base_dims;
  SmoothPart phi0;

  struct Coupling {
    LinearMap A;
    VectorXd b;
    EpigraphBlock target_geom;
    int target_dim = 0;
    SmoothPart phi;
    double rho = 1.0;
    double lip_G = -1.0;  // Lipschitz constant of psi_k, < 0 when unknown
    double lip_H = -1.0;  // Lipschitz constant of Psi_k, < 0 = derive from norms
  };
  std::vector<Coupling> couplings;

  int K() const { return static_cast<int>(couplings.size()); }
  int base_total_dim() const;
  // f of the problem of interest at stacked base variables, evaluated exactly.
  double objective(const VectorXd& base) const;
};

struct AggregationConfig {
  double D = 1.0;       // guess of the optimal solution norm
  int d_exponent = 2;   // y-block weights are 1 / D^d_exponent
  double z_weight = 1.0;
  double w_weight = 1.0;
};

// The assembled penalized saddle problem: operator, proximal setup, starting
// point, and the block index bookkeeping needed to interpret iterates.
struct AssembledSaddle {
  SaddleOperator op;
  AggregatedSetup setup;
  CompositePoint initial;

  int n_base = 0;
  std::vector<int> base_idx;    // block indices of base variables
  std::vector<int> target_idx;  // block indices of y^k
  int z0_idx = -1;
  std::vector<int> z_idx;  // -1 when phi_k has no z
  std::vector<int> w_idx;
  std::shared_ptr<std::vector<double>> rho;  // live penalty values

  const MultiTermProblem* problem = nullptr;

  VectorXd stacked_base(const CompositePoint& x) const;
  // PhiBar(x1): exact sup of Phi over the dual blocks at the primal part of x.
  double primal_sup(const CompositePoint& x) const;
  // pi_k^*(y^k - A_k base - b_k) for each coupling.
  std::vector<double> coupling_residuals(const CompositePoint& x) const;
};

// Builds the monotone operator of the penalized saddle problem, the
// aggregated proximal setup and the starting point (targets at A_k base + b_k,
// z and w at zero, epigraph scalars at their Psi values).
AssembledSaddle assemble(const MultiTermProblem& problem, const AggregationConfig& agg,
                         const VectorXd& base_init);

// Correction: recompute every coupled block from the base and reset all
// epigraph scalars to their Psi values. Dual blocks pass through.
CompositePoint correction(const AssembledSaddle& a, const CompositePoint& x);

// Exact-penalty thresholds G_k + H_k (NaN marks an unavailable constant).
std::vector<double> penalty_floor(const MultiTermProblem& problem);

struct PenaltyController {
  std::vector<double> rho;
  double growth = 3.0;
  double kappa = 1e-4;
  double initial = 0.001;
  bool selective = false;  // bump only the violating rho_k

  void validate() const {
    if (growth <= 1.0 || kappa <= 0.0) throw InputError("PenaltyController: bad parameters");
  }
};

enum class PenaltyDecision { keep, restart_with_new_rho };

// The online test: restart with grown penalties when the corrected objective
// exceeds (1 + kappa) * PhiBar at the raw point.
PenaltyDecision adapt_penalty(PenaltyController& ctrl, double upsilon_at_correction,
                              double primal_sup_at_raw);
// Selective variant: per-coupling violation quantities decide which rho_k grow.
PenaltyDecision adapt_penalty_selective(PenaltyController& ctrl, double upsilon_at_correction,
                                        double primal_sup_at_raw,
                                        const std::vector<double>& block_violations);

// Matrix-completion lower bounding: theta(r) through capped simplex
// projections, R_t by bisection on the convex theta+(r) = lambda r + theta(r),
// and the certificate bound over the capped domain.
struct McLowerBound {
  double ell = 0.0;     // l_t <= Opt
  double R_t = 0.0;     // upper bound on ||y0_*||_1
  double R_plus = 0.0;  // cap actually used
  ResolutionDomain domain;  // the capped domain the bound was computed over
};
// Right endpoint of {r : lambda r + theta(r) <= upsilon_best}, where theta(r)
// is the capped-simplex distance of |b|; an upper bound on ||y0_*||_1.
double mc_radius_bound(const VectorXd& b_obs, double lambda, double upsilon_best);
McLowerBound mc_lower_bound(const ProtocolSummary& summary, const CompositePoint& averaged,
                            const AssembledSaddle& a, double upsilon_best, double lambda,
                            double mu, const VectorXd& b_obs);

// Driver ---------------------------------------------------------------------

struct TraceRow {
  int t = 0;
  double seconds = 0.0;
  double upper = 0.0;
  double lower = 0.0;
  double gap = 0.0;
  double rho_or_alpha = 0.0;
  int restarts = 0;
};

struct PenaltySolveConfig {
  int max_iters = 1000;
  StepPolicy policy;
  std::vector<int> checkpoints;  // default powers of two
  PenaltyController controller;
  AggregationConfig agg;
  bool rescale_D = false;     // double D when the iterate norm passes 20% of it
  bool record_protocol = false;  // keep the final-phase protocol (small runs only)
  // Optional checkpoint lower bound on Opt, evaluated from the current phase.
  std::function<double(const ProtocolSummary&, const CompositePoint& averaged,
                       double upsilon_best, const AssembledSaddle&)>
      lower_bound;
};

struct PenaltySolveResult {
  VectorXd best_base;
  double upsilon_best = 0.0;
  double lower_best = -std::numeric_limits<double>::infinity();
  std::vector<TraceRow> trace;
  int total_steps = 0;
  int restarts = 0;
  double final_rho = 0.0;
  double final_D = 0.0;
  ExecutionProtocol final_protocol;       // populated when record_protocol is on
  std::vector<double> final_phase_gammas;
};

// Runs CoMP on the penalized problem with online penalty adaptation (and the
// optional D-doubling rule), recording trace rows at power-of-two checkpoints.
PenaltySolveResult solve_penalized(const MultiTermProblem& problem, const VectorXd& base_init,
                                   const PenaltySolveConfig& cfg);

}  // namespace comprox
