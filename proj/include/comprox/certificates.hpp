#pragma once

#include "comprox/prox.hpp"
#include "comprox/types.hpp"

namespace comprox {

// t-step execution protocol: the points y_tau with the operator values
// F(y_tau). The v-component of the field is constant (one value per epigraph
// slot), so it is stored once.
struct ExecutionProtocol {
  std::vector<CompositePoint> points;
  std::vector<std::vector<VectorXd>> field_u;  // F_u(y_tau), per step, per block
  std::vector<double> field_v;                 // constant F_v per epigraph slot

  int size() const { return static_cast<int>(points.size()); }
  void append(CompositePoint y, std::vector<VectorXd> fu);
};

// Nonnegative weights summing to 1, one per protocol step.
struct AccuracyCertificate {
  std::vector<double> weights;

  static AccuracyCertificate proportional(const std::vector<double>& gammas);
  void validate() const;
};

// Streaming sufficient statistics of (protocol, stepsize-proportional
// certificate): enough to evaluate resolutions and averaged points without
// storing the trajectory.
struct ProtocolSummary {
  double weight_sum = 0.0;          // sum of gammas
  double inner_sum = 0.0;           // sum of gamma * <F(y), y> (u and v parts)
  std::vector<VectorXd> field_sum;  // sum of gamma * F_u(y), per block
  std::vector<VectorXd> point_sum;  // sum of gamma * y.u, per block
  std::vector<double> vpoint_sum;   // sum of gamma * y.v, per slot
  std::vector<double> field_v;      // constant F_v per slot
  int steps = 0;

  void reset();
  void add(double gamma, const CompositePoint& y, const std::vector<VectorXd>& fu);
  CompositePoint averaged() const;
};

ProtocolSummary summarize(const ExecutionProtocol& protocol, const AccuracyCertificate& cert);

// Domains over which the resolution sup is evaluated exactly, block by block.
struct ResolutionDomain {
  struct Block {
    enum class Kind {
      euclid_ball,       // {y : ||y - center|| <= radius}; no epigraph slot
      epigraph_capped,   // {[y; t] : Psi(y) <= t <= weight * norm_cap}, y free
      ball_l1_epigraph,  // {[y; t] : ||y|| <= radius, t = weight * ||y||_1}
      singleton,         // {center} (x [tau] when the block is lifted)
      box                // {lo <= y <= hi}; no epigraph slot
    };
    Kind kind = Kind::euclid_ball;
    VectorXd center;  // ball center / singleton point / box lo
    VectorXd hi;      // box upper corner
    double radius = 0.0;
    NonsmoothKind nonsmooth = NonsmoothKind::none;  // epigraph blocks
    double weight = 0.0;                            // Psi multiplier
    double norm_cap = 0.0;                          // R+; infinity = uncapped
    int rows = 0, cols = 0;                         // shape for nuclear blocks
    double tau = 0.0;                               // singleton epigraph value
    bool has_vslot = false;

    static Block ball(VectorXd center, double radius);
    static Block capped_epigraph(NonsmoothKind kind, double weight, double norm_cap,
                                 int rows = 0, int cols = 0);
    static Block ball_l1(double radius, double weight);
    static Block point(VectorXd y, std::optional<double> tau = std::nullopt);
    static Block bounds(VectorXd lo, VectorXd hi);
  };
  std::vector<Block> blocks;
};

// sup over the block of <c, y> + d * tau (d ignored for blocks without an
// epigraph slot). Throws CapabilityError for unsupported combinations.
double affine_max(const VectorXd& c, double d, const ResolutionDomain::Block& block);

// Res(X'|I_t, lambda^t) = sum_tau lambda_tau <F(y_tau), y_tau - x> sup'd over
// x in X', evaluated exactly through per-block closed forms.
double resolution(const ExecutionProtocol& protocol, const AccuracyCertificate& cert,
                  const ResolutionDomain& domain);
double resolution(const ProtocolSummary& summary, const ResolutionDomain& domain);

// Convex combination sum lambda_tau y_tau.
CompositePoint averaged_point(const ExecutionProtocol& protocol, const AccuracyCertificate& cert);

// Exact partial sup/inf oracles of a saddle function; either may report
// -inf/+inf when the inner problem is unbounded.
struct SaddleOracles {
  std::function<double(const CompositePoint&)> primal_sup;  // PhiBar(x1)
  std::function<double(const CompositePoint&)> dual_inf;    // PhiUnder(x2)
};

// eps_sad(x) = PhiBar(x1) - PhiUnder(x2) >= 0.
double eps_sad_exact(const CompositePoint& x, const SaddleOracles& oracles);

// l_t = PhiBar(averaged x1) - Res(domain); a lower bound on Opt whenever the
// domain contains the minimizer set being bounded.
double certificate_lower_bound(const ProtocolSummary& summary, const ResolutionDomain& domain,
                               double primal_sup_at_avg);
double certificate_lower_bound(const ExecutionProtocol& protocol,
                               const AccuracyCertificate& cert, const ResolutionDomain& domain,
                               double primal_sup_at_avg);

// Theta[X'] = sup over the domain of V_{u1}(u) under the aggregated Euclidean
// d.g.f.; finite for ball/singleton/box blocks.
double theta_bound(const AggregatedSetup& setup, const std::vector<VectorXd>& u1,
                   const ResolutionDomain& domain);

}  // namespace comprox
