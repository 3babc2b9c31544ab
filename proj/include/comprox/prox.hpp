#pragma once

#include "comprox/types.hpp"

namespace comprox {

// Proximal setup for one block: a norm and a compatible distance-generating
// function (strongly convex, modulus 1, w.r.t. that norm). All instances
// shipped here are Euclidean (omega = 1/2 ||.||_2^2); the function fields keep
// the interface open for other geometries.
struct ProximalSetup {
  std::function<double(const VectorXd&)> norm;
  std::function<double(const VectorXd&)> dgf;
  std::function<VectorXd(const VectorXd&)> dgf_gradient;
  double strong_convexity_modulus = 1.0;
  bool euclidean = true;
};

ProximalSetup euclidean_setup();

// V_u(w) = omega(w) - omega(u) - <omega'(u), w - u>.
double bregman_distance(const ProximalSetup& setup, const VectorXd& u, const VectorXd& w);

// Aggregated setup over the blocks of a composite point:
//   omega(u) = sum_i weight_i * omega_i(u_i),
//   ||u||    = sqrt(sum_i weight_i * norm_i(u_i)^2).
// The closed-form prox path requires every block setup to be Euclidean.
struct AggregatedSetup {
  std::vector<BlockSpec> blocks;
  std::vector<ProximalSetup> block_setups;  // parallel to blocks; Euclidean by default

  static AggregatedSetup make(std::vector<BlockSpec> blocks);

  int n_vslots() const;
  void check_point(const CompositePoint& x, const char* who) const;

  double bregman(const std::vector<VectorXd>& u, const std::vector<VectorXd>& w) const;
  double norm(const std::vector<VectorXd>& du) const;
  double dual_norm(const std::vector<VectorXd>& xi) const;
  // <xi, du> summed over blocks.
  static double dot(const std::vector<VectorXd>& xi, const std::vector<VectorXd>& du);
};

// Closed-form solvers -------------------------------------------------------

// argmin_x 1/2||x - a||_2^2 + beta ||x||_1 (componentwise shrinkage; exact 0
// at |a_i| = beta).
VectorXd soft_threshold(const VectorXd& a, double beta);

// argmin_X 1/2||X - A||_F^2 + beta ||X||_nuc via SVD.
MatrixXd singular_value_threshold(const MatrixXd& A, double beta);

// argmin_{||x||_2 <= radius} 1/2||x - a||_2^2 + beta ||x||_1
// = radial scaling of the soft-thresholded point.
VectorXd ball_l2_l1_prox(const VectorXd& a, double beta, double radius);

// argmin_{v >= 0, sum v <= r} 1/2||v - |b|||_2^2, sort-based exact threshold.
VectorXd capped_simplex_project(const VectorXd& b, double r);

// Euclidean projection onto the block's base set.
VectorXd project_base_set(const VectorXd& a, const EpigraphBlock& g);

// Singular values in descending order (Jacobi for small matrices, BDC above).
VectorXd singular_values(const MatrixXd& A);

// The composite prox-mapping: componentwise solve of
//   min_{[s;w] in X} <xi_u, s> + <zeta_v, w> + V_u(s)
// over the product of blocks; every returned epigraph scalar is set to
// Psi(s) (the constraint is active whenever its zeta is positive).
CompositePoint composite_prox(const CompositePoint& x,
                              const std::vector<VectorXd>& xi_u,
                              const std::vector<double>& zeta_v,
                              const AggregatedSetup& setup);

}  // namespace comprox
