#include "comprox/prox.hpp"

#include <Eigen/SVD>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace comprox {

namespace {

// LAPACK divide-and-conquer SVD for anything beyond Jacobi sizes.
struct ThinSvd {
  VectorXd s;
  MatrixXd U, V;
};

ThinSvd lapack_thin_svd(const MatrixXd& A, bool want_uv) {
  const lapack_int m = static_cast<lapack_int>(A.rows());
  const lapack_int n = static_cast<lapack_int>(A.cols());
  const lapack_int k = std::min(m, n);
  MatrixXd work = A;  // dgesdd overwrites its input
  ThinSvd out;
  out.s.resize(k);
  lapack_int info;
  if (want_uv) {
    out.U.resize(m, k);
    MatrixXd vt(k, n);
    info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', m, n, work.data(), m, out.s.data(),
                          out.U.data(), m, vt.data(), k);
    out.V = vt.transpose();
  } else {
    info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', m, n, work.data(), m, out.s.data(),
                          nullptr, m, nullptr, k);
  }
  if (info != 0)
    throw NumericalError("SVD (dgesdd) failed with info=" + std::to_string(info) + " on a " +
                         std::to_string(m) + "x" + std::to_string(n) + " matrix");
  return out;
}

constexpr int kJacobiLimit = 16;

}  // namespace

VectorXd singular_values(const MatrixXd& A) {
  if (std::min(A.rows(), A.cols()) <= kJacobiLimit) {
    Eigen::JacobiSVD<MatrixXd> svd(A);
    return svd.singularValues();
  }
  return lapack_thin_svd(A, false).s;
}

double EpigraphBlock::psi(const VectorXd& u) const {
  switch (nonsmooth) {
    case NonsmoothKind::none:
      return 0.0;
    case NonsmoothKind::linear_zero:
      return 0.0;
    case NonsmoothKind::l1:
      return weight * u.lpNorm<1>();
    case NonsmoothKind::nuclear:
      return weight * singular_values(MatrixXd(as_matrix(u, *this))).sum();
  }
  return 0.0;
}

ProximalSetup euclidean_setup() {
  ProximalSetup s;
  s.norm = [](const VectorXd& u) { return u.norm(); };
  s.dgf = [](const VectorXd& u) { return 0.5 * u.squaredNorm(); };
  s.dgf_gradient = [](const VectorXd& u) { return u; };
  s.strong_convexity_modulus = 1.0;
  s.euclidean = true;
  return s;
}

double bregman_distance(const ProximalSetup& setup, const VectorXd& u, const VectorXd& w) {
  if (u.size() != w.size()) throw InputError("bregman_distance: size mismatch");
  if (setup.euclidean) return 0.5 * (w - u).squaredNorm();
  return setup.dgf(w) - setup.dgf(u) - setup.dgf_gradient(u).dot(w - u);
}

AggregatedSetup AggregatedSetup::make(std::vector<BlockSpec> blocks) {
  AggregatedSetup s;
  int vcount = 0;
  for (auto& b : blocks) {
    if (b.weight <= 0.0) throw InputError("AggregatedSetup: weights must be > 0");
    b.geom.validate(b.dim);
    b.v_index = b.geom.lifted() ? vcount++ : -1;
  }
  s.blocks = std::move(blocks);
  s.block_setups.assign(s.blocks.size(), euclidean_setup());
  return s;
}

int AggregatedSetup::n_vslots() const {
  int c = 0;
  for (const auto& b : blocks)
    if (b.v_index >= 0) ++c;
  return c;
}

void AggregatedSetup::check_point(const CompositePoint& x, const char* who) const {
  if (x.u.size() != blocks.size())
    throw InputError(std::string(who) + ": block count mismatch");
  for (size_t i = 0; i < blocks.size(); ++i)
    if (x.u[i].size() != blocks[i].dim)
      throw InputError(std::string(who) + ": block dimension mismatch");
  if (static_cast<int>(x.v.size()) != n_vslots())
    throw InputError(std::string(who) + ": epigraph slot count mismatch");
}

double AggregatedSetup::bregman(const std::vector<VectorXd>& u,
                                const std::vector<VectorXd>& w) const {
  double acc = 0.0;
  for (size_t i = 0; i < blocks.size(); ++i)
    acc += blocks[i].weight * bregman_distance(block_setups[i], u[i], w[i]);
  return acc;
}

double AggregatedSetup::norm(const std::vector<VectorXd>& du) const {
  double acc = 0.0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const double n = block_setups[i].norm(du[i]);
    acc += blocks[i].weight * n * n;
  }
  return std::sqrt(acc);
}

double AggregatedSetup::dual_norm(const std::vector<VectorXd>& xi) const {
  // Conjugate of the weighted Euclidean norm; valid for Euclidean block norms.
  double acc = 0.0;
  for (size_t i = 0; i < blocks.size(); ++i) acc += xi[i].squaredNorm() / blocks[i].weight;
  return std::sqrt(acc);
}

double AggregatedSetup::dot(const std::vector<VectorXd>& xi, const std::vector<VectorXd>& du) {
  double acc = 0.0;
  for (size_t i = 0; i < xi.size(); ++i) acc += xi[i].dot(du[i]);
  return acc;
}

VectorXd soft_threshold(const VectorXd& a, double beta) {
  if (beta < 0.0) throw InputError("soft_threshold: beta must be >= 0");
  VectorXd out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double m = std::abs(a[i]) - beta;
    out[i] = m > 0.0 ? (a[i] > 0.0 ? m : -m) : 0.0;
  }
  return out;
}

MatrixXd singular_value_threshold(const MatrixXd& A, double beta) {
  if (beta < 0.0) throw InputError("singular_value_threshold: beta must be >= 0");
  if (!A.allFinite()) throw InputError("singular_value_threshold: non-finite input");
  if (beta == 0.0) return A;
  VectorXd s;
  MatrixXd U, V;
  if (std::min(A.rows(), A.cols()) <= kJacobiLimit) {
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
      throw NumericalError("singular_value_threshold: SVD failed on a " +
                           std::to_string(A.rows()) + "x" + std::to_string(A.cols()) +
                           " matrix");
    s = svd.singularValues();
    U = svd.matrixU();
    V = svd.matrixV();
  } else {
    ThinSvd svd = lapack_thin_svd(A, true);
    s = std::move(svd.s);
    U = std::move(svd.U);
    V = std::move(svd.V);
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::max(s[i] - beta, 0.0);
  return U * s.asDiagonal() * V.transpose();
}

VectorXd ball_l2_l1_prox(const VectorXd& a, double beta, double radius) {
  if (radius <= 0.0) throw InputError("ball_l2_l1_prox: radius must be > 0");
  VectorXd s = soft_threshold(a, beta);
  const double n = s.norm();
  if (n > radius) s *= radius / n;
  return s;
}

VectorXd capped_simplex_project(const VectorXd& b, double r) {
  if (r < 0.0) throw InputError("capped_simplex_project: r must be >= 0");
  const Eigen::Index m = b.size();
  VectorXd a = b.cwiseAbs();
  if (r == 0.0) return VectorXd::Zero(m);
  if (a.sum() <= r) return a;  // theta = 0, constraint inactive
  // Find theta >= 0 with sum(max(a - theta, 0)) = r by sorting.
  std::vector<double> srt(a.data(), a.data() + m);
  std::sort(srt.begin(), srt.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cum += srt[k];
    const double cand = (cum - r) / static_cast<double>(k + 1);
    if (k + 1 == m || cand >= srt[k + 1]) {
      theta = cand;
      break;
    }
  }
  VectorXd out(m);
  for (Eigen::Index i = 0; i < m; ++i) out[i] = std::max(a[i] - theta, 0.0);
  return out;
}

VectorXd project_base_set(const VectorXd& a, const EpigraphBlock& g) {
  if (!g.is_ball()) return a;
  const double n = a.norm();
  if (n <= g.radius) return a;
  return a * (g.radius / n);
}

namespace {

// Per-block solve of min_{[s;t] in block} <xi, s> + zeta * t + w/2 ||s - u||^2
// with t >= Psi(s). Returns s; the caller sets t = Psi(s).
VectorXd block_prox(const VectorXd& u, const VectorXd& xi, double zeta, const BlockSpec& spec) {
  const EpigraphBlock& g = spec.geom;
  const VectorXd a = u - xi / spec.weight;
  switch (g.nonsmooth) {
    case NonsmoothKind::none:
    case NonsmoothKind::linear_zero:
      return project_base_set(a, g);
    case NonsmoothKind::l1: {
      const double beta = zeta * g.weight / spec.weight;
      if (g.is_ball()) return ball_l2_l1_prox(a, beta, g.radius);
      return soft_threshold(a, beta);
    }
    case NonsmoothKind::nuclear: {
      const double beta = zeta * g.weight / spec.weight;
      MatrixXd X = singular_value_threshold(MatrixXd(as_matrix(a, g)), beta);
      if (g.is_ball()) {
        const double n = X.norm();
        if (n > g.radius) X *= g.radius / n;
      }
      VectorXd out(a.size());
      Eigen::Map<MatrixRM>(out.data(), g.rows, g.cols) = X;
      return out;
    }
  }
  return a;
}

}  // namespace

CompositePoint composite_prox(const CompositePoint& x,
                              const std::vector<VectorXd>& xi_u,
                              const std::vector<double>& zeta_v,
                              const AggregatedSetup& setup) {
  setup.check_point(x, "composite_prox");
  if (xi_u.size() != setup.blocks.size())
    throw InputError("composite_prox: xi_u block count mismatch");
  if (static_cast<int>(zeta_v.size()) != setup.n_vslots())
    throw InputError("composite_prox: zeta_v slot count mismatch");

  CompositePoint out;
  out.u.resize(setup.blocks.size());
  out.v.resize(zeta_v.size());
  for (size_t i = 0; i < setup.blocks.size(); ++i) {
    const BlockSpec& spec = setup.blocks[i];
    double zeta = 0.0;
    if (spec.v_index >= 0) {
      zeta = zeta_v[spec.v_index];
      // Well-posedness: an uncapped epigraph scalar needs a positive linear
      // cost, otherwise the prox problem is unbounded below in t.
      if (zeta <= 0.0 && !spec.geom.cap)
        throw UnboundedProxError("composite_prox: zeta <= 0 on uncapped epigraph block " +
                                 std::to_string(i));
    }
    out.u[i] = block_prox(x.u[i], xi_u[i], zeta, spec);
    if (spec.v_index >= 0) out.v[spec.v_index] = spec.geom.psi(out.u[i]);
  }
  return out;
}

}  // namespace comprox
