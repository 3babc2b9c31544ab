#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace comprox {

using Eigen::MatrixXd;
using Eigen::VectorXd;
// matrix-shaped blocks are flattened row-major
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error taxonomy: input contract violations, numerical breakdowns, and
// capability gaps (asking for an oracle/descriptor that is not available).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnboundedProxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StepsizeCollapseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BaseSet { whole_space, euclid_ball, frobenius_ball };
enum class NonsmoothKind { none, l1, nuclear, linear_zero };

// Geometry of one variable block: base set, the simple nonsmooth term lifted
// into an epigraph scalar (if any), and an optional bookkeeping cap on that
// scalar. Matrix-shaped blocks carry (rows, cols); vectors leave them at 0.
struct EpigraphBlock {
  BaseSet base_set = BaseSet::whole_space;
  double radius = 0.0;  // for ball base sets
  NonsmoothKind nonsmooth = NonsmoothKind::none;
  double weight = 0.0;  // multiplier of the nonsmooth norm
  int rows = 0, cols = 0;
  std::optional<double> cap;  // upper bound on the epigraph scalar; never enforced

  bool lifted() const { return nonsmooth != NonsmoothKind::none; }
  bool is_ball() const { return base_set != BaseSet::whole_space; }
  bool matrix_shaped() const { return rows > 0 && cols > 0; }

  void validate(int dim) const {
    if (weight < 0.0) throw InputError("EpigraphBlock: weight must be >= 0");
    if (is_ball() && radius <= 0.0)
      throw InputError("EpigraphBlock: ball radius must be > 0");
    if (nonsmooth == NonsmoothKind::nuclear && !matrix_shaped())
      throw InputError("EpigraphBlock: nuclear norm needs a matrix shape");
    if (matrix_shaped() && rows * cols != dim)
      throw InputError("EpigraphBlock: shape does not match dimension");
  }

  // Psi value of the lifted nonsmooth term at u (0 when nothing is lifted).
  double psi(const VectorXd& u) const;
};

// A point x = [u; v]: coordinate blocks u plus one epigraph scalar per
// lifted block (indexed by BlockSpec::v_index).
struct CompositePoint {
  std::vector<VectorXd> u;
  std::vector<double> v;
};

// One variable block as seen by the aggregated proximal setup: geometry plus
// the positive aggregation weight that scales this block's 1/2||.||_2^2 term
// in the aggregated d.g.f.
struct BlockSpec {
  EpigraphBlock geom;
  double weight = 1.0;  // aggregation weight (alpha_k / beta_k / gamma_k)
  int dim = 0;
  int v_index = -1;  // slot in CompositePoint::v, -1 when not lifted
};

inline Eigen::Map<const MatrixRM> as_matrix(const VectorXd& u, const EpigraphBlock& g) {
  return Eigen::Map<const MatrixRM>(u.data(), g.rows, g.cols);
}

}  // namespace comprox
