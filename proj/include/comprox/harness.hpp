#pragma once

#include "comprox/multiterm.hpp"
#include "comprox/semisep.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

namespace comprox {

// Seeded portable generator: mersenne twister bits with explicit uniform and
// Box-Muller transforms, so streams reproduce across platforms and standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }
  std::uint64_t bits() { return eng_(); }
  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(bits() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// All flat configuration of the generators and solvers; parsed from key=value
// files with command-line overrides.
struct InstanceConfig {
  std::string family = "mc_known_opt";
  int n = 64, m = 0;  // m defaults to n/2 for l1_planted
  std::uint64_t seed = 1;
  // matrix completion
  double obs_prob = 0.25;
  double noise_factor = 0.1;
  std::string rank_rule = "n4";  // "n4" = floor(n/4), "sqrt" = floor(sqrt(n))
  double sparsity = 0.1;         // target nonzero fraction of y_true
  double lambda = -1.0, mu = -1.0;  // < 0: derived from sigma
  // image decomposition
  double mu1 = -1.0, mu2 = -1.0, mu3 = -1.0;
  double image_noise = 0.01;
  double image_sparsity = 0.01;
  std::string image_in;
  // l1
  double c = 1.0;            // R_* = c * n
  double l1_sparsity = 0.05; // support fraction of x_*
  // solver
  int max_iters = 1000;
  double eps = 1e-5;
  double D = -1.0;  // < 0: instance heuristic
  int d_exponent = 2;
  double kappa = 1e-4;
  double rho0 = 0.001;
  double rho_growth = 3.0;
  bool selective_rho = false;
  bool rescale_D = false;
  std::string mode = "penalty";  // penalty | sequential | simple
  int per_stage_budget = 200000;
  int jobs = 1;
  // io
  std::string out_trace, dump_instance, solution_out, dump_protocol, config_file;

  void load_file(const std::string& path);
  void dump(std::ostream& os) const;
  void validate() const;
};

// Matrix completion -----------------------------------------------------------

struct McInstance {
  int n = 0;
  std::vector<int> omega;  // row-major cell indices of observed entries
  VectorXd b;              // observations, in omega order
  double sigma = 0.0, lambda = 0.0, mu = 0.0, D = 1.0;
  MatrixRM y_true;
  double opt = std::numeric_limits<double>::quiet_NaN();  // known-optimum runs
  MultiTermProblem problem;
  VectorXd base_init;  // P_Omega^* b

  double upsilon(const VectorXd& y0) const { return problem.objective(y0); }
};

McInstance gen_matrix_completion(const InstanceConfig& cfg);
McInstance gen_mc_known_opt(const InstanceConfig& cfg);

// l1 minimization -------------------------------------------------------------

struct L1Instance {
  int n = 0, m = 0;
  MatrixXd A;
  VectorXd b, x_star, lambda_star;
  double R_star = 0.0;
  ConstrainedProblem problem;

  // the termination measure of the planted experiments
  double eps_measure(const VectorXd& x) const {
    return std::max((x.lpNorm<1>() - x_star.lpNorm<1>()) / x_star.lpNorm<1>(),
                    (A * x - b).norm());
  }
};

L1Instance gen_l1_planted(const InstanceConfig& cfg);

// Image decomposition ---------------------------------------------------------

// Forward-difference map R^{n x n} -> R^{2n(n-1)} stacking the vertical and
// horizontal gradients.
LinearMap tv_gradient_map(int n);

struct ImageInstance {
  int n = 0;
  MatrixRM observed;
  double mu1 = 0.0, mu2 = 0.0, mu3 = 0.0;
  double D = 1.0;
  MultiTermProblem problem;  // blocks: y1 (nuclear), y2 (l1), y3 (free); coupling Ty3
  VectorXd base_init;
  double rho_floor = 0.0;
};

ImageInstance build_image_problem(const MatrixRM& observed, double mu1, double mu2, double mu3);
ImageInstance gen_image_synthetic(const InstanceConfig& cfg);

// Solve drivers ----------------------------------------------------------------

PenaltySolveConfig mc_solver_config(const McInstance& inst, const InstanceConfig& cfg);
PenaltySolveResult solve_mc(const McInstance& inst, const InstanceConfig& cfg);
PenaltySolveResult solve_image(const ImageInstance& inst, const InstanceConfig& cfg);

SequentialResult solve_l1_sequential(const L1Instance& inst, const InstanceConfig& cfg);

struct SimpleCompResult {
  VectorXd x;
  int steps = 0;
  bool converged = false;
};
// Direct CoMP on min tau + R <Ax - b, w> with fixed penalty R.
SimpleCompResult solve_l1_simple(const L1Instance& inst, double R, const InstanceConfig& cfg);

// Files -------------------------------------------------------------------------

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);
void write_matrix_csv(const std::string& path, const Eigen::Ref<const MatrixXd>& m);
MatrixXd read_matrix_csv(const std::string& path);
void write_vector_csv(const std::string& path, const VectorXd& v);
VectorXd read_vector_csv(const std::string& path);
void write_pgm(const std::string& path, const MatrixRM& img);  // values clamped to [0,1]
MatrixRM read_pgm(const std::string& path);

void dump_mc_instance(const std::string& dir, const McInstance& inst);
void dump_l1_instance(const std::string& dir, const L1Instance& inst);
// re-check planted optimality files; returns a list of failures (empty = ok)
std::vector<std::string> verify_instance_dir(const std::string& dir);

void dump_protocol(const std::string& path, const ExecutionProtocol& protocol,
                   const std::vector<double>& gammas, const ResolutionDomain& domain);
struct ProtocolDump {
  ExecutionProtocol protocol;
  std::vector<double> gammas;
  ResolutionDomain domain;
};
ProtocolDump read_protocol(const std::string& path);

}  // namespace comprox
