#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "comprox/harness.hpp"
#include "comprox/semisep.hpp"

namespace py = pybind11;
using namespace comprox;

namespace {

InstanceConfig config_from_kwargs(const std::string& family, int n, int m,
                                  std::uint64_t seed, int max_iters, double eps, double c,
                                  int d_exponent) {
  InstanceConfig cfg;
  cfg.family = family;
  cfg.n = n;
  cfg.m = m;
  cfg.seed = seed;
  cfg.max_iters = max_iters;
  cfg.eps = eps;
  cfg.c = c;
  cfg.d_exponent = d_exponent;
  return cfg;
}

py::dict trace_to_dict(const std::vector<TraceRow>& rows) {
  std::vector<int> t, restarts;
  std::vector<double> upper, lower, gap, rho;
  for (const auto& r : rows) {
    t.push_back(r.t);
    upper.push_back(r.upper);
    lower.push_back(r.lower);
    gap.push_back(r.gap);
    rho.push_back(r.rho_or_alpha);
    restarts.push_back(r.restarts);
  }
  py::dict d;
  d["t"] = t;
  d["upper"] = upper;
  d["lower"] = lower;
  d["gap"] = gap;
  d["rho_or_alpha"] = rho;
  d["restarts"] = restarts;
  return d;
}

Filter filter_from_arrays(const std::vector<double>& p, const std::vector<double>& q,
                          double opt_lb) {
  if (p.size() != q.size()) throw InputError("p and q must have equal length");
  Filter f;
  f.opt_lb = opt_lb;
  CompositePoint dummy;
  dummy.u = {VectorXd::Zero(1)};
  for (size_t i = 0; i < p.size(); ++i) f.insert(p[i], q[i], dummy);
  return f;
}

}  // namespace

PYBIND11_MODULE(_comprox, m) {
  m.doc() = "composite mirror prox solver: prox maps, certificates, and the "
            "experiment drivers";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<CapabilityError>(m, "CapabilityError", PyExc_RuntimeError);
  py::register_exception<UnboundedProxError>(m, "UnboundedProxError", PyExc_RuntimeError);

  // closed-form prox solvers
  m.def("soft_threshold", &soft_threshold, py::arg("a"), py::arg("beta"),
        "componentwise shrinkage: argmin 1/2||x-a||^2 + beta ||x||_1");
  m.def("singular_value_threshold", &singular_value_threshold, py::arg("a"),
        py::arg("beta"), "argmin 1/2||X-A||_F^2 + beta ||X||_nuc");
  m.def("ball_l2_l1_prox", &ball_l2_l1_prox, py::arg("a"), py::arg("beta"),
        py::arg("radius"), "l1 prox restricted to a euclidean ball");
  m.def("capped_simplex_project", &capped_simplex_project, py::arg("b"), py::arg("r"),
        "argmin_{v >= 0, sum v <= r} 1/2||v - |b|||^2");
  m.def(
      "bregman_distance",
      [](const VectorXd& u, const VectorXd& w) {
        return bregman_distance(euclidean_setup(), u, w);
      },
      py::arg("u"), py::arg("w"), "euclidean Bregman distance 1/2||w-u||^2");

  // gap machinery over (p, q) filters
  m.def(
      "h_eval",
      [](const std::vector<double>& p, const std::vector<double>& q, double opt_lb,
         double alpha) { return h_eval(filter_from_arrays(p, q, opt_lb), alpha); },
      py::arg("p"), py::arg("q"), py::arg("opt_lb"), py::arg("alpha"));
  m.def(
      "gap_and_weights",
      [](const std::vector<double>& p, const std::vector<double>& q, double opt_lb) {
        const GapResult g = gap_and_weights(filter_from_arrays(p, q, opt_lb));
        py::dict d;
        d["gap"] = g.gap;
        d["alpha_star"] = g.alpha_star;
        d["p_bar"] = g.p_bar;
        d["q_bar"] = g.q_bar;
        return d;
      },
      py::arg("p"), py::arg("q"), py::arg("opt_lb"));
  m.def(
      "delta_segment",
      [](const std::vector<double>& p, const std::vector<double>& q, double opt_lb) {
        const Interval iv = delta_segment(filter_from_arrays(p, q, opt_lb));
        return py::make_tuple(iv.lo, iv.hi, iv.is_empty);
      },
      py::arg("p"), py::arg("q"), py::arg("opt_lb"));

  // total-variation gradient map
  m.def(
      "tv_apply",
      [](const VectorXd& y, int n) { return tv_gradient_map(n).apply(y); },
      py::arg("y"), py::arg("n"));
  m.def(
      "tv_adjoint",
      [](const VectorXd& w, int n) { return tv_gradient_map(n).adjoint(w); },
      py::arg("w"), py::arg("n"));

  // experiment drivers
  m.def(
      "solve_matrix_completion",
      [](int n, std::uint64_t seed, int max_iters, bool known_opt, int d_exponent) {
        InstanceConfig cfg = config_from_kwargs(
            known_opt ? "mc_known_opt" : "matrix_completion", n, 0, seed, max_iters, 1e-5,
            1.0, d_exponent);
        const McInstance inst = known_opt ? gen_mc_known_opt(cfg)
                                          : gen_matrix_completion(cfg);
        const PenaltySolveResult res = solve_mc(inst, cfg);
        py::dict d;
        d["upper"] = res.upsilon_best;
        d["lower"] = res.lower_best;
        d["steps"] = res.total_steps;
        d["restarts"] = res.restarts;
        d["lambda"] = inst.lambda;
        d["mu"] = inst.mu;
        d["trace"] = trace_to_dict(res.trace);
        d["y0"] = MatrixXd(Eigen::Map<const MatrixRM>(res.best_base.data(), n, n));
        if (std::isfinite(inst.opt)) d["opt"] = inst.opt;
        return d;
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("max_iters") = 512,
      py::arg("known_opt") = true, py::arg("d_exponent") = 1);
  m.def(
      "solve_l1",
      [](int n, int m, double c, std::uint64_t seed, double eps, int max_iters,
         const std::string& mode) {
        InstanceConfig cfg = config_from_kwargs("l1_planted", n, m, seed, max_iters, eps,
                                                c, 2);
        cfg.mode = mode;
        const L1Instance inst = gen_l1_planted(cfg);
        py::dict d;
        d["x_star_l1"] = inst.x_star.lpNorm<1>();
        if (mode == "simple") {
          const SimpleCompResult res = solve_l1_simple(inst, inst.R_star, cfg);
          d["steps"] = res.steps;
          d["converged"] = res.converged;
          d["eps_measure"] = inst.eps_measure(res.x);
          d["x"] = res.x;
        } else {
          const SequentialResult res = solve_l1_sequential(inst, cfg);
          d["steps"] = res.total_steps;
          d["stages"] = res.stages;
          d["converged"] = res.converged;
          d["gap"] = res.gap;
          d["opt_lb"] = res.opt_lb;
          d["eps_measure"] = inst.eps_measure(res.combined.u[0]);
          d["x"] = res.combined.u[0];
        }
        return d;
      },
      py::arg("n"), py::arg("m") = 0, py::arg("c") = 1.0, py::arg("seed") = 1,
      py::arg("eps") = 1e-5, py::arg("max_iters") = 200000,
      py::arg("mode") = "sequential");
  m.def(
      "solve_image_synthetic",
      [](int n, std::uint64_t seed, int max_iters) {
        InstanceConfig cfg;
        cfg.family = "image_decomp_synthetic";
        cfg.n = n;
        cfg.seed = seed;
        cfg.max_iters = max_iters;
        const ImageInstance inst = gen_image_synthetic(cfg);
        const PenaltySolveResult res = solve_image(inst, cfg);
        py::dict d;
        d["upper"] = res.upsilon_best;
        d["steps"] = res.total_steps;
        d["restarts"] = res.restarts;
        d["trace"] = trace_to_dict(res.trace);
        const int n2 = n * n;
        d["y1"] = MatrixXd(Eigen::Map<const MatrixRM>(res.best_base.data(), n, n));
        d["y2"] = MatrixXd(Eigen::Map<const MatrixRM>(res.best_base.data() + n2, n, n));
        d["y3"] =
            MatrixXd(Eigen::Map<const MatrixRM>(res.best_base.data() + 2 * n2, n, n));
        return d;
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("max_iters") = 256);

  // a small demo of the certificate machinery: bilinear saddle over unit
  // balls solved at constant stepsize 1/L, reporting Res and eps_sad per
  // power-of-two checkpoint
  m.def(
      "bilinear_certificates",
      [](int n, std::uint64_t seed, int iters) {
        Rng rng(seed);
        MatrixXd A(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) A(i, j) = rng.gauss();
        VectorXd b(n);
        for (int i = 0; i < n; ++i) b[i] = 0.3 * rng.gauss();
        const double L = singular_values(A)[0];
        SaddleOperator op;
        op.eval_Fu = [&A, &b](const std::vector<VectorXd>& u) {
          return std::vector<VectorXd>{A.transpose() * u[1], b - A * u[0]};
        };
        EpigraphBlock ball;
        ball.base_set = BaseSet::euclid_ball;
        ball.radius = 1.0;
        AggregatedSetup setup =
            AggregatedSetup::make({{ball, 1.0, n, -1}, {ball, 1.0, n, -1}});
        CompositePoint x0;
        x0.u = {VectorXd::Zero(n), VectorXd::Zero(n)};
        ResolutionDomain dom;
        dom.blocks.push_back(ResolutionDomain::Block::ball(VectorXd::Zero(n), 1.0));
        dom.blocks.push_back(ResolutionDomain::Block::ball(VectorXd::Zero(n), 1.0));
        RunConfig cfg;
        cfg.max_iters = iters;
        cfg.fixed_gamma = 1.0 / L;
        std::vector<int> ts;
        std::vector<double> res_list, sad_list;
        run(op, setup, x0, cfg, [&](const StepEvent& ev) {
          if (!ev.is_checkpoint) return ControlAction::proceed;
          ts.push_back(ev.t);
          res_list.push_back(resolution(ev.state->summary, dom));
          const CompositePoint avg = ev.state->summary.averaged();
          sad_list.push_back((A * avg.u[0] - b).norm() +
                             (A.transpose() * avg.u[1]).norm() + b.dot(avg.u[1]));
          return ControlAction::proceed;
        });
        py::dict d;
        d["t"] = ts;
        d["res"] = res_list;
        d["eps_sad"] = sad_list;
        d["L"] = L;
        d["theta"] = theta_bound(setup, x0.u, dom);
        return d;
      },
      py::arg("n") = 20, py::arg("seed") = 1, py::arg("iters") = 256);

  m.attr("__version__") = "0.1.0";
}
