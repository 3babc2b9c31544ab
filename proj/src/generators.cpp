#include "comprox/harness.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <iostream>

namespace comprox {

namespace {

// y_true builder shared by both matrix-completion generators: a sum of
// floor(n/4) (or floor(sqrt(n))) sparsified Gaussian rank-one terms targeting
// the requested nonzero fraction.
MatrixRM make_sparse_lowrank(int n, const std::string& rank_rule, double sparsity, Rng& rng) {
  const int k = rank_rule == "sqrt" ? std::max(1, static_cast<int>(std::floor(std::sqrt(n))))
                                    : std::max(1, n / 4);
  const double density = std::min(1.0, std::sqrt(sparsity / static_cast<double>(k)));
  MatrixRM y = MatrixRM::Zero(n, n);
  VectorXd e(n), f(n);
  for (int t = 0; t < k; ++t) {
    for (int i = 0; i < n; ++i) {
      const double g = rng.gauss();
      e[i] = rng.uniform() < density ? g : 0.0;
    }
    for (int i = 0; i < n; ++i) {
      const double g = rng.gauss();
      f[i] = rng.uniform() < density ? g : 0.0;
    }
    y += e * f.transpose();
  }
  return y;
}

LinearMap observation_map(std::shared_ptr<std::vector<int>> omega, int n2) {
  LinearMap P;
  P.in_dim = n2;
  P.out_dim = static_cast<int>(omega->size());
  P.apply = [omega](const VectorXd& y) {
    VectorXd out(omega->size());
    for (size_t i = 0; i < omega->size(); ++i) out[static_cast<Eigen::Index>(i)] = y[(*omega)[i]];
    return out;
  };
  P.adjoint = [omega, n2](const VectorXd& v) {
    VectorXd out = VectorXd::Zero(n2);
    for (size_t i = 0; i < omega->size(); ++i) out[(*omega)[i]] += v[static_cast<Eigen::Index>(i)];
    return out;
  };
  P.op_norm = 1.0;
  return P;
}

// 1/2 || P_Omega y - b ||^2 as the smooth part of the completion objective
SmoothPart completion_loss(LinearMap P, VectorXd b) {
  auto Pm = std::make_shared<LinearMap>(std::move(P));
  auto bv = std::make_shared<VectorXd>(std::move(b));
  SmoothPart phi;
  phi.value = [Pm, bv](const VectorXd& y, const VectorXd&) {
    return 0.5 * (Pm->apply(y) - *bv).squaredNorm();
  };
  phi.grad_y = [Pm, bv](const VectorXd& y, const VectorXd&) {
    return Pm->adjoint(Pm->apply(y) - *bv);
  };
  phi.psi = [Pm, bv](const VectorXd& y) { return 0.5 * (Pm->apply(y) - *bv).squaredNorm(); };
  return phi;
}

MultiTermProblem completion_problem(int n, double lambda, double mu, SmoothPart loss) {
  MultiTermProblem p;
  EpigraphBlock y0;
  y0.nonsmooth = NonsmoothKind::l1;
  y0.weight = lambda;
  p.base_geoms = {y0};
  p.base_dims = {n * n};
  p.phi0 = std::move(loss);

  MultiTermProblem::Coupling c;
  c.A = LinearMap::identity(n * n);
  c.b = VectorXd::Zero(n * n);
  c.target_geom.nonsmooth = NonsmoothKind::nuclear;
  c.target_geom.weight = mu;
  c.target_geom.rows = c.target_geom.cols = n;
  c.target_dim = n * n;
  c.phi = SmoothPart::zero();
  c.lip_G = 0.0;  // psi_1 == 0
  c.lip_H = mu * std::sqrt(static_cast<double>(n));
  p.couplings.push_back(std::move(c));
  return p;
}

double guess_D(const VectorXd& b, double sigma, int n2) {
  const double M = static_cast<double>(b.size());
  return std::sqrt(static_cast<double>(n2) / M *
                   std::max(b.squaredNorm() - M * sigma * sigma, 1.0));
}

}  // namespace

McInstance gen_matrix_completion(const InstanceConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int n = cfg.n, n2 = n * n;
  McInstance inst;
  inst.n = n;
  inst.y_true = make_sparse_lowrank(n, cfg.rank_rule, cfg.sparsity, rng);
  inst.sigma = cfg.noise_factor * inst.y_true.cwiseAbs().sum() / static_cast<double>(n2);

  auto omega = std::make_shared<std::vector<int>>();
  std::vector<double> obs;
  for (int cell = 0; cell < n2; ++cell) {
    const bool in = rng.uniform() < cfg.obs_prob;
    const double noise = rng.gauss();  // drawn unconditionally: stable stream
    if (in) {
      omega->push_back(cell);
      obs.push_back(inst.y_true.data()[cell] + inst.sigma * noise);
    }
  }
  inst.omega = *omega;
  inst.b = Eigen::Map<const VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  inst.lambda = cfg.lambda > 0.0 ? cfg.lambda : 10.0 * inst.sigma;
  inst.mu = cfg.mu > 0.0 ? cfg.mu : 10.0 * inst.sigma;
  inst.D = cfg.D > 0.0 ? cfg.D : guess_D(inst.b, inst.sigma, n2);

  LinearMap P = observation_map(omega, n2);
  inst.base_init = P.adjoint(inst.b);
  inst.problem = completion_problem(n, inst.lambda, inst.mu, completion_loss(P, inst.b));
  return inst;
}

McInstance gen_mc_known_opt(const InstanceConfig& cfg) {
  cfg.validate();
  const int n = cfg.n, n2 = n * n;
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    Rng rng(cfg.seed + attempt);
    McInstance inst;
    inst.n = n;
    inst.y_true = make_sparse_lowrank(n, cfg.rank_rule, cfg.sparsity, rng);
    inst.sigma = cfg.noise_factor * inst.y_true.cwiseAbs().sum() / static_cast<double>(n2);
    inst.lambda = cfg.lambda > 0.0 ? cfg.lambda : 10.0 * inst.sigma;
    inst.mu = cfg.mu > 0.0 ? cfg.mu : 10.0 * inst.sigma;

    // subgradient of the l1 norm at y_true: signs on the support, interior
    // values elsewhere
    MatrixRM g1(n, n);
    for (int cell = 0; cell < n2; ++cell) {
      const double y = inst.y_true.data()[cell];
      const double interior = rng.uniform(-0.5, 0.5);
      g1.data()[cell] = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : interior);
    }

    // subgradient of the nuclear norm: U_r V_r^T plus a contraction on the
    // orthogonal complement
    Eigen::JacobiSVD<MatrixXd> svd(MatrixXd(inst.y_true),
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd s = svd.singularValues();
    const double tol = 1e-10 * (s.size() ? s[0] : 0.0);
    int r = 0;
    while (r < s.size() && s[r] > tol) ++r;
    VectorXd diag(n);
    for (int i = 0; i < n; ++i) diag[i] = i < r ? 1.0 : rng.uniform(0.0, 0.5);
    const MatrixXd g2cm = svd.matrixU() * diag.asDiagonal() * svd.matrixV().transpose();
    MatrixRM g2 = g2cm;

    // self-verification of the planted subgradients
    bool ok = g1.cwiseAbs().maxCoeff() <= 1.0;
    const double spec = singular_values(g2cm)[0];
    ok = ok && spec <= 1.0 + 1e-10;
    const double nuc = s.head(r).sum();
    const double pairing = (g2.array() * inst.y_true.array()).sum();
    ok = ok && std::abs(pairing - nuc) <= 1e-8 * (1.0 + nuc);
    if (!ok) {
      std::cerr << "gen_mc_known_opt: subgradient construction failed (seed "
                << cfg.seed + attempt << "), regenerating\n";
      continue;
    }

    const MatrixRM b_mat = inst.y_true + inst.lambda * g1 + inst.mu * g2;
    inst.omega.resize(n2);
    for (int cell = 0; cell < n2; ++cell) inst.omega[cell] = cell;
    inst.b = Eigen::Map<const VectorXd>(b_mat.data(), n2);
    inst.opt = 0.5 * (inst.lambda * g1 + inst.mu * g2).squaredNorm() +
               inst.lambda * inst.y_true.cwiseAbs().sum() + inst.mu * nuc;
    inst.D = cfg.D > 0.0 ? cfg.D : guess_D(inst.b, inst.sigma, n2);

    auto omega = std::make_shared<std::vector<int>>(inst.omega);
    LinearMap P = observation_map(omega, n2);
    inst.base_init = P.adjoint(inst.b);
    inst.problem = completion_problem(n, inst.lambda, inst.mu, completion_loss(P, inst.b));
    return inst;
  }
  throw NumericalError("gen_mc_known_opt: could not plant a valid optimum");
}

namespace {

// rows of the orthonormal DCT-II basis; the real stand-in for the paper's
// partial Fourier operator
MatrixXd dct_rows(int n, const std::vector<int>& rows) {
  MatrixXd F(static_cast<int>(rows.size()), n);
  for (size_t r = 0; r < rows.size(); ++r) {
    const int k = rows[r];
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j)
      F(static_cast<Eigen::Index>(r), j) = scale * std::cos(M_PI * (j + 0.5) * k / n);
  }
  return F;
}

std::vector<int> sample_indices(int n, int m, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
  idx.resize(m);
  return idx;
}

}  // namespace

L1Instance gen_l1_planted(const InstanceConfig& cfg) {
  cfg.validate();
  const int n = cfg.n;
  const int m = cfg.m > 0 ? cfg.m : n / 2;
  if (m >= n) throw InputError("gen_l1_planted: requires m < n");
  Rng rng(cfg.seed);

  L1Instance inst;
  inst.n = n;
  inst.m = m;
  inst.R_star = cfg.c * n;

  const int nnz = std::max(1, static_cast<int>(std::floor(cfg.l1_sparsity * n)));
  const std::vector<int> support = sample_indices(n, nnz, rng);
  inst.x_star = VectorXd::Zero(n);
  for (int i : support) inst.x_star[i] = rng.gauss();
  inst.x_star *= 0.9 / inst.x_star.norm();

  inst.lambda_star = VectorXd(m);
  for (int i = 0; i < m; ++i) inst.lambda_star[i] = rng.gauss();
  inst.lambda_star *= inst.R_star / inst.lambda_star.norm();

  const MatrixXd F = dct_rows(n, sample_indices(n, m, rng));
  VectorXd sgn(n);
  for (int i = 0; i < n; ++i)
    sgn[i] = inst.x_star[i] > 0.0 ? 1.0
                                  : (inst.x_star[i] < 0.0 ? -1.0 : rng.uniform(-0.5, 0.5));
  const VectorXd p = inst.lambda_star / inst.lambda_star.squaredNorm();
  const VectorXd q = sgn - F.transpose() * inst.lambda_star;
  inst.A = F + p * q.transpose();
  inst.b = inst.A * inst.x_star;

  // optimality certificates must hold exactly before the instance is usable
  const VectorXd atl = inst.A.transpose() * inst.lambda_star;
  if ((atl - sgn).lpNorm<Eigen::Infinity>() > 1e-10)
    throw NumericalError("gen_l1_planted: A^T lambda* misses the subgradient");
  if (atl.lpNorm<Eigen::Infinity>() > 1.0 + 1e-10)
    throw NumericalError("gen_l1_planted: subgradient bound violated");

  EpigraphBlock xg;
  xg.base_set = BaseSet::euclid_ball;
  xg.radius = 1.0;
  xg.nonsmooth = NonsmoothKind::l1;
  xg.weight = 1.0;
  xg.cap = std::sqrt(static_cast<double>(n));
  inst.problem.y_geoms = {xg};
  inst.problem.y_dims = {n};
  inst.problem.phis = {SmoothPart::zero()};
  inst.problem.A = {LinearMap::dense(inst.A)};
  inst.problem.b = inst.b;
  const double normA = inst.problem.A[0].op_norm;
  inst.problem.L_bound =
      std::max(std::sqrt(static_cast<double>(n)), normA + inst.b.norm());
  return inst;
}

LinearMap tv_gradient_map(int n) {
  if (n < 2) throw InputError("tv_gradient_map: n must be >= 2");
  const int n2 = n * n, half = n * (n - 1);
  LinearMap T;
  T.in_dim = n2;
  T.out_dim = 2 * half;
  T.apply = [n, half](const VectorXd& y) {
    VectorXd out(2 * half);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n - 1; ++i)
        out[j * (n - 1) + i] = y[(i + 1) * n + j] - y[i * n + j];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n - 1; ++j)
        out[half + i * (n - 1) + j] = y[i * n + j + 1] - y[i * n + j];
    return out;
  };
  T.adjoint = [n, n2, half](const VectorXd& w) {
    VectorXd out = VectorXd::Zero(n2);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n - 1; ++i) {
        const double v = w[j * (n - 1) + i];
        out[(i + 1) * n + j] += v;
        out[i * n + j] -= v;
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n - 1; ++j) {
        const double v = w[half + i * (n - 1) + j];
        out[i * n + j + 1] += v;
        out[i * n + j] -= v;
      }
    return out;
  };
  T.op_norm = 2.0 * std::sqrt(2.0);
  return T;
}

ImageInstance build_image_problem(const MatrixRM& observed, double mu1, double mu2,
                                  double mu3) {
  const int n = static_cast<int>(observed.rows());
  if (observed.cols() != n || n < 2) throw InputError("build_image_problem: square n>=2 image");
  ImageInstance inst;
  inst.n = n;
  inst.observed = observed;
  inst.mu1 = mu1;
  inst.mu2 = mu2;
  inst.mu3 = mu3;
  const int n2 = n * n;
  auto b = std::make_shared<VectorXd>(Eigen::Map<const VectorXd>(observed.data(), n2));

  MultiTermProblem p;
  EpigraphBlock y1;
  y1.nonsmooth = NonsmoothKind::nuclear;
  y1.weight = mu1;
  y1.rows = y1.cols = n;
  EpigraphBlock y2;
  y2.nonsmooth = NonsmoothKind::l1;
  y2.weight = mu2;
  EpigraphBlock y3;  // free block, coupled through T
  p.base_geoms = {y1, y2, y3};
  p.base_dims = {n2, n2, n2};

  SmoothPart phi0;
  phi0.z_dim = n2;
  phi0.z_radius = 1.0;
  phi0.value = [b, n2](const VectorXd& base, const VectorXd& z) {
    VectorXd r = base.segment(0, n2) + base.segment(n2, n2) + base.segment(2 * n2, n2) - *b;
    return z.dot(r);
  };
  phi0.grad_y = [n2](const VectorXd& base, const VectorXd& z) {
    VectorXd g(base.size());
    g.segment(0, n2) = z;
    g.segment(n2, n2) = z;
    g.segment(2 * n2, n2) = z;
    return g;
  };
  phi0.grad_z = [b, n2](const VectorXd& base, const VectorXd&) {
    return VectorXd(base.segment(0, n2) + base.segment(n2, n2) + base.segment(2 * n2, n2) -
                    *b);
  };
  phi0.psi = [b, n2](const VectorXd& base) {
    return (base.segment(0, n2) + base.segment(n2, n2) + base.segment(2 * n2, n2) - *b)
        .norm();
  };
  p.phi0 = std::move(phi0);

  LinearMap T = tv_gradient_map(n);
  MultiTermProblem::Coupling c;
  c.A.in_dim = 3 * n2;
  c.A.out_dim = T.out_dim;
  {
    auto Tm = std::make_shared<LinearMap>(T);
    c.A.apply = [Tm, n2](const VectorXd& base) { return Tm->apply(base.segment(2 * n2, n2)); };
    c.A.adjoint = [Tm, n2](const VectorXd& w) {
      VectorXd g = VectorXd::Zero(3 * n2);
      g.segment(2 * n2, n2) = Tm->adjoint(w);
      return g;
    };
    c.A.op_norm = Tm->op_norm;
  }
  c.b = VectorXd::Zero(T.out_dim);
  c.target_geom.nonsmooth = NonsmoothKind::l1;
  c.target_geom.weight = mu3;
  c.target_dim = T.out_dim;
  c.phi = SmoothPart::zero();
  c.lip_G = 1.0;  // spectral norm of the identity observation operator
  c.lip_H = mu3 * std::sqrt(static_cast<double>(T.out_dim));
  p.couplings.push_back(std::move(c));

  inst.problem = std::move(p);
  inst.base_init = VectorXd::Zero(3 * n2);
  inst.rho_floor = 1.0 + mu3 * std::sqrt(static_cast<double>(2 * n * (n - 1)));
  inst.D = std::max(b->norm(), 1.0);
  return inst;
}

ImageInstance gen_image_synthetic(const InstanceConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int n = cfg.n;
  const int r = std::max(1, static_cast<int>(std::floor(std::sqrt(n))));
  MatrixXd P(n, r), Q(n, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < n; ++i) P(i, j) = rng.gauss();
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < n; ++i) Q(i, j) = rng.gauss();
  MatrixRM obs = (P * Q.transpose()) / std::sqrt(static_cast<double>(r));
  for (int cell = 0; cell < n * n; ++cell) {
    const double g = rng.gauss();
    if (rng.uniform() < cfg.image_sparsity) obs.data()[cell] += g;
  }
  const double sigma = cfg.image_noise;
  for (int cell = 0; cell < n * n; ++cell) obs.data()[cell] += sigma * rng.gauss();

  const double mu1 = cfg.mu1 > 0.0 ? cfg.mu1 : 10.0 * sigma;
  const double mu2 = cfg.mu2 > 0.0 ? cfg.mu2 : sigma;
  const double mu3 = cfg.mu3 > 0.0 ? cfg.mu3 : sigma;
  ImageInstance inst = build_image_problem(obs, mu1, mu2, mu3);
  if (cfg.D > 0.0) inst.D = cfg.D;
  return inst;
}

PenaltySolveConfig mc_solver_config(const McInstance& inst, const InstanceConfig& cfg) {
  PenaltySolveConfig c;
  c.max_iters = cfg.max_iters;
  c.controller.initial = cfg.rho0;
  c.controller.growth = cfg.rho_growth;
  c.controller.kappa = cfg.kappa;
  c.controller.selective = cfg.selective_rho;
  c.agg.D = cfg.D > 0.0 ? cfg.D : inst.D;
  c.agg.d_exponent = cfg.d_exponent;
  c.rescale_D = cfg.rescale_D;
  const double lambda = inst.lambda, mu = inst.mu;
  const VectorXd* b = &inst.b;
  c.lower_bound = [lambda, mu, b](const ProtocolSummary& summary, const CompositePoint& avg,
                                  double ups, const AssembledSaddle& a) {
    return mc_lower_bound(summary, avg, a, ups, lambda, mu, *b).ell;
  };
  return c;
}

PenaltySolveResult solve_mc(const McInstance& inst, const InstanceConfig& cfg) {
  return solve_penalized(inst.problem, inst.base_init, mc_solver_config(inst, cfg));
}

PenaltySolveResult solve_image(const ImageInstance& inst, const InstanceConfig& cfg) {
  PenaltySolveConfig c;
  c.max_iters = cfg.max_iters;
  c.controller.initial = cfg.rho0;
  c.controller.growth = cfg.rho_growth;
  c.controller.kappa = cfg.kappa;
  c.controller.selective = cfg.selective_rho;
  c.agg.D = cfg.D > 0.0 ? cfg.D : inst.D;
  c.agg.d_exponent = cfg.d_exponent;
  c.rescale_D = true;
  return solve_penalized(inst.problem, inst.base_init, c);
}

SequentialResult solve_l1_sequential(const L1Instance& inst, const InstanceConfig& cfg) {
  SequentialConfig sc;
  sc.eps_gap = 0.0;
  sc.per_stage_budget = cfg.per_stage_budget;
  sc.max_total_steps = cfg.max_iters;
  const L1Instance* I = &inst;
  const double eps = cfg.eps;
  sc.stop_predicate = [I, eps](const CompositePoint& combined, double) {
    return I->eps_measure(combined.u[0]) <= eps;
  };
  return run_sequential(inst.problem, sc);
}

SimpleCompResult solve_l1_simple(const L1Instance& inst, double R, const InstanceConfig& cfg) {
  const int n = inst.n, m = inst.m;
  EpigraphBlock xg;
  xg.base_set = BaseSet::euclid_ball;
  xg.radius = 1.0;
  xg.nonsmooth = NonsmoothKind::l1;
  xg.weight = 1.0;
  EpigraphBlock wg;
  wg.base_set = BaseSet::euclid_ball;
  wg.radius = 1.0;
  AggregatedSetup setup = AggregatedSetup::make({{xg, 1.0, n, -1}, {wg, 1.0, m, -1}});

  const MatrixXd* A = &inst.A;
  const VectorXd* b = &inst.b;
  SaddleOperator op;
  op.eval_Fu = [A, b, R](const std::vector<VectorXd>& u) {
    std::vector<VectorXd> F(2);
    F[0] = R * (A->transpose() * u[1]);
    F[1] = R * (*b - *A * u[0]);
    return F;
  };
  op.Fv = {1.0};

  CompositePoint x0;
  x0.u = {VectorXd::Zero(n), VectorXd::Zero(m)};
  x0.v = {0.0};

  SimpleCompResult out;
  const L1Instance* I = &inst;
  const double eps = cfg.eps;
  RunConfig rc;
  rc.max_iters = cfg.max_iters;
  // the averaged point moves at O(1/t); past the early phase it is enough to
  // test the termination measure on a thinning grid
  auto due = [](int t) {
    if (t <= 4096) return true;
    if (t <= 65536) return t % 64 == 0;
    return t % 256 == 0;
  };
  RunResult rr = run(op, setup, x0, rc, [I, eps, &out, &due](const StepEvent& ev) {
    if (!due(ev.t)) return ControlAction::proceed;
    const CompositePoint avg = ev.state->summary.averaged();
    if (I->eps_measure(avg.u[0]) <= eps) {
      out.converged = true;
      out.x = avg.u[0];
      return ControlAction::stop;
    }
    return ControlAction::proceed;
  });
  out.steps = rr.total_steps;
  if (!out.converged) out.x = rr.averaged.u[0];
  return out;
}

}  // namespace comprox
