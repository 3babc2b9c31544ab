#include "comprox/cli.hpp"

#include "CLI11.hpp"
#include "comprox/harness.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace comprox {

namespace {

void apply_env_thread_cap() {
  int threads = 1;  // deterministic single-threaded linear algebra by default
  if (const char* env = std::getenv("COMP_PROX_THREADS")) {
    try {
      threads = std::max(1, std::stoi(env));
    } catch (...) {
      threads = 1;
    }
  }
  Eigen::setNbThreads(threads);
  // the LAPACK backend reads its thread cap from the environment at startup
  setenv("OPENBLAS_NUM_THREADS", std::to_string(threads).c_str(), 0);
}

struct SolveSummary {
  double upper = std::numeric_limits<double>::quiet_NaN();
  double lower = std::numeric_limits<double>::quiet_NaN();
  int steps = 0;
  int restarts = 0;
  bool flagged = false;  // budget exhausted before the termination rule fired
};

void print_summary(const SolveSummary& s) {
  std::cout << "final_upper=" << s.upper << "\n";
  std::cout << "final_lower=" << s.lower << "\n";
  const double denom = std::max(std::abs(s.lower), 1e-300);
  std::cout << "relative_gap=" << (s.upper - s.lower) / denom << "\n";
  std::cout << "steps=" << s.steps << "\n";
  std::cout << "restarts=" << s.restarts << "\n";
  std::cout << (s.flagged ? "status=budget_exhausted\n" : "status=ok\n");
}

int run_one_solve(InstanceConfig cfg, const std::string& trace_path) {
  SolveSummary summary;
  if (cfg.family == "matrix_completion" || cfg.family == "mc_known_opt") {
    const McInstance inst = cfg.family == "mc_known_opt" ? gen_mc_known_opt(cfg)
                                                         : gen_matrix_completion(cfg);
    if (!cfg.dump_instance.empty()) dump_mc_instance(cfg.dump_instance, inst);
    PenaltySolveConfig pc = mc_solver_config(inst, cfg);
    ResolutionDomain last_domain;
    const double lambda = inst.lambda, mu = inst.mu;
    const VectorXd* b = &inst.b;
    pc.lower_bound = [&last_domain, lambda, mu, b](const ProtocolSummary& s,
                                                   const CompositePoint& avg, double ups,
                                                   const AssembledSaddle& a) {
      McLowerBound lb = mc_lower_bound(s, avg, a, ups, lambda, mu, *b);
      last_domain = std::move(lb.domain);
      return lb.ell;
    };
    if (!cfg.dump_protocol.empty()) {
      const long cost = 2L * inst.n * inst.n * cfg.max_iters;
      if (cost > 8'000'000)
        throw InputError("--dump-protocol: run too large to record (n^2 * iters)");
      pc.record_protocol = true;
    }
    const PenaltySolveResult res = solve_penalized(inst.problem, inst.base_init, pc);
    if (!trace_path.empty()) write_trace_csv(trace_path, res.trace);
    if (!cfg.solution_out.empty())
      write_matrix_csv(
          cfg.solution_out + ".y0.csv",
          MatrixXd(Eigen::Map<const MatrixRM>(res.best_base.data(), inst.n, inst.n)));
    if (!cfg.dump_protocol.empty())
      dump_protocol(cfg.dump_protocol, res.final_protocol, res.final_phase_gammas,
                    last_domain);
    summary.upper = res.upsilon_best;
    summary.lower = res.lower_best;
    summary.steps = res.total_steps;
    summary.restarts = res.restarts;
    if (std::isfinite(inst.opt))
      std::cout << "known_opt=" << inst.opt
                << " rel_error=" << (res.upsilon_best - inst.opt) / inst.opt << "\n";
  } else if (cfg.family == "image_decomp_synthetic" || cfg.family == "image_decomp_file") {
    ImageInstance inst;
    if (cfg.family == "image_decomp_file") {
      if (cfg.image_in.empty()) throw InputError("image_decomp_file requires --image-in");
      MatrixRM img = cfg.image_in.ends_with(".pgm")
                         ? read_pgm(cfg.image_in)
                         : MatrixRM(read_matrix_csv(cfg.image_in));
      if (img.rows() != img.cols()) throw InputError("image must be square");
      const double s = cfg.image_noise;
      inst = build_image_problem(img, cfg.mu1 > 0 ? cfg.mu1 : 10.0 * s,
                                 cfg.mu2 > 0 ? cfg.mu2 : s, cfg.mu3 > 0 ? cfg.mu3 : s);
      if (cfg.D > 0) inst.D = cfg.D;
    } else {
      inst = gen_image_synthetic(cfg);
    }
    const PenaltySolveResult res = solve_image(inst, cfg);
    if (!trace_path.empty()) write_trace_csv(trace_path, res.trace);
    if (!cfg.solution_out.empty()) {
      const int n2 = inst.n * inst.n;
      for (int k = 0; k < 3; ++k) {
        Eigen::Map<const MatrixRM> part(res.best_base.data() + k * n2, inst.n, inst.n);
        const std::string stem = cfg.solution_out + ".y" + std::to_string(k + 1);
        write_matrix_csv(stem + ".csv", MatrixXd(part));
        write_pgm(stem + ".pgm", MatrixRM(part));
      }
    }
    summary.upper = res.upsilon_best;
    summary.lower = res.lower_best;  // no certified lower bound for this family
    summary.steps = res.total_steps;
    summary.restarts = res.restarts;
  } else if (cfg.family == "l1_planted") {
    const L1Instance inst = gen_l1_planted(cfg);
    if (!cfg.dump_instance.empty()) dump_l1_instance(cfg.dump_instance, inst);
    if (cfg.mode == "simple") {
      const SimpleCompResult res = solve_l1_simple(inst, inst.R_star, cfg);
      summary.upper = res.x.lpNorm<1>();
      summary.lower = inst.x_star.lpNorm<1>();
      summary.steps = res.steps;
      summary.flagged = !res.converged;
      std::cout << "eps_measure=" << inst.eps_measure(res.x) << "\n";
      if (!cfg.solution_out.empty()) write_vector_csv(cfg.solution_out + ".x.csv", res.x);
    } else {
      const SequentialResult res = solve_l1_sequential(inst, cfg);
      if (!trace_path.empty()) write_trace_csv(trace_path, res.trace);
      summary.upper = inst.problem.f_value(res.combined);
      summary.lower = res.opt_lb;
      summary.steps = res.total_steps;
      summary.restarts = res.stages - 1;
      summary.flagged = !res.converged;
      std::cout << "eps_measure=" << inst.eps_measure(res.combined.u[0]) << "\n";
      std::cout << "stages=" << res.stages << " gap=" << res.gap << "\n";
      if (!cfg.solution_out.empty())
        write_vector_csv(cfg.solution_out + ".x.csv", res.combined.u[0]);
    }
  } else {
    throw InputError("unknown family: " + cfg.family);
  }
  print_summary(summary);
  return 0;
}

}  // namespace

int cli_run(int argc, char** argv) {
  apply_env_thread_cap();
  CLI::App app{"composite mirror prox saddle-point solver"};
  app.require_subcommand(1);

  InstanceConfig cli;  // values given on the command line
  bool dump_config = false;
  std::vector<std::uint64_t> seeds;

  CLI::App* solve = app.add_subcommand("solve", "generate an instance and run the solver");
  solve->add_option("--family", cli.family,
                    "matrix_completion|mc_known_opt|image_decomp_synthetic|"
                    "image_decomp_file|l1_planted");
  solve->add_option("--config", cli.config_file, "key=value config file");
  solve->add_option("--n", cli.n);
  solve->add_option("--m", cli.m);
  solve->add_option("--seed", cli.seed);
  solve->add_option("--seeds", seeds, "batch mode: one solve per seed");
  solve->add_option("--jobs", cli.jobs, "concurrent solves in batch mode");
  solve->add_option("--max-iters", cli.max_iters);
  solve->add_option("--eps", cli.eps);
  solve->add_option("--mode", cli.mode, "penalty|sequential|simple");
  solve->add_option("--c", cli.c, "dual scale: R* = c n");
  solve->add_option("--obs-prob", cli.obs_prob);
  solve->add_option("--noise-factor", cli.noise_factor);
  solve->add_option("--rank-rule", cli.rank_rule, "n4|sqrt");
  solve->add_option("--sparsity", cli.sparsity);
  solve->add_option("--l1-sparsity", cli.l1_sparsity);
  solve->add_option("--lambda", cli.lambda);
  solve->add_option("--mu", cli.mu);
  solve->add_option("--mu1", cli.mu1);
  solve->add_option("--mu2", cli.mu2);
  solve->add_option("--mu3", cli.mu3);
  solve->add_option("--image-noise", cli.image_noise);
  solve->add_option("--image-sparsity", cli.image_sparsity);
  solve->add_option("--image-in", cli.image_in);
  solve->add_option("--D", cli.D);
  solve->add_option("--d-exponent", cli.d_exponent, "y-block weights are 1/D^e");
  solve->add_option("--kappa", cli.kappa);
  solve->add_option("--rho0", cli.rho0);
  solve->add_option("--rho-growth", cli.rho_growth);
  solve->add_flag("--selective-rho", cli.selective_rho);
  solve->add_flag("--rescale-D", cli.rescale_D);
  solve->add_option("--per-stage-budget", cli.per_stage_budget);
  solve->add_option("--out", cli.out_trace, "trace CSV path");
  solve->add_option("--dump-instance", cli.dump_instance, "directory for instance files");
  solve->add_option("--solution-out", cli.solution_out, "prefix for solution files");
  solve->add_option("--dump-protocol", cli.dump_protocol, "protocol dump (small runs)");
  solve->add_flag("--dump-config", dump_config, "print the effective config and exit");

  std::string verify_dir;
  CLI::App* verify = app.add_subcommand("verify", "re-check a planted instance directory");
  verify->add_option("--instance", verify_dir)->required();

  std::string protocol_path;
  CLI::App* bounds =
      app.add_subcommand("bounds", "recompute certificate bounds from a dumped protocol");
  bounds->add_option("--protocol", protocol_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems exit 2
  }

  try {
    if (solve->parsed()) {
      InstanceConfig cfg;
      if (!cli.config_file.empty()) cfg.load_file(cli.config_file);
      // explicit command-line options override the file
      auto given = [&](const std::string& name) { return solve->count(name) > 0; };
      if (given("--family")) cfg.family = cli.family;
      if (given("--n")) cfg.n = cli.n;
      if (given("--m")) cfg.m = cli.m;
      if (given("--seed")) cfg.seed = cli.seed;
      if (given("--jobs")) cfg.jobs = cli.jobs;
      if (given("--max-iters")) cfg.max_iters = cli.max_iters;
      if (given("--eps")) cfg.eps = cli.eps;
      if (given("--mode")) cfg.mode = cli.mode;
      if (given("--c")) cfg.c = cli.c;
      if (given("--obs-prob")) cfg.obs_prob = cli.obs_prob;
      if (given("--noise-factor")) cfg.noise_factor = cli.noise_factor;
      if (given("--rank-rule")) cfg.rank_rule = cli.rank_rule;
      if (given("--sparsity")) cfg.sparsity = cli.sparsity;
      if (given("--l1-sparsity")) cfg.l1_sparsity = cli.l1_sparsity;
      if (given("--lambda")) cfg.lambda = cli.lambda;
      if (given("--mu")) cfg.mu = cli.mu;
      if (given("--mu1")) cfg.mu1 = cli.mu1;
      if (given("--mu2")) cfg.mu2 = cli.mu2;
      if (given("--mu3")) cfg.mu3 = cli.mu3;
      if (given("--image-noise")) cfg.image_noise = cli.image_noise;
      if (given("--image-sparsity")) cfg.image_sparsity = cli.image_sparsity;
      if (given("--image-in")) cfg.image_in = cli.image_in;
      if (given("--D")) cfg.D = cli.D;
      if (given("--d-exponent")) cfg.d_exponent = cli.d_exponent;
      if (given("--kappa")) cfg.kappa = cli.kappa;
      if (given("--rho0")) cfg.rho0 = cli.rho0;
      if (given("--rho-growth")) cfg.rho_growth = cli.rho_growth;
      if (given("--selective-rho")) cfg.selective_rho = cli.selective_rho;
      if (given("--rescale-D")) cfg.rescale_D = cli.rescale_D;
      if (given("--per-stage-budget")) cfg.per_stage_budget = cli.per_stage_budget;
      if (given("--out")) cfg.out_trace = cli.out_trace;
      if (given("--dump-instance")) cfg.dump_instance = cli.dump_instance;
      if (given("--solution-out")) cfg.solution_out = cli.solution_out;
      if (given("--dump-protocol")) cfg.dump_protocol = cli.dump_protocol;

      // l1 runs need far more (cheap) steps than the penalty families; keep
      // the small default budget from starving them when no explicit
      // --max-iters or config value was given
      if (cfg.family == "l1_planted" && !given("--max-iters") && cfg.max_iters == 1000)
        cfg.max_iters = 500000;

      if (dump_config) {
        cfg.dump(std::cout);
        return 0;
      }
      cfg.validate();
      if (seeds.empty()) return run_one_solve(cfg, cfg.out_trace);

      // batch mode: independent seeded runs, optionally concurrent
      std::vector<int> rcs(seeds.size(), 0);
      std::atomic<size_t> next{0};
      const int jobs = std::max(1, cfg.jobs);
      auto worker = [&]() {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= seeds.size()) return;
          InstanceConfig local = cfg;
          local.seed = seeds[i];
          const std::string trace =
              cfg.out_trace.empty()
                  ? std::string()
                  : cfg.out_trace + ".seed" + std::to_string(seeds[i]) + ".csv";
          try {
            rcs[i] = run_one_solve(local, trace);
          } catch (const std::exception& e) {
            std::cerr << "seed " << seeds[i] << ": " << e.what() << "\n";
            rcs[i] = 1;
          }
        }
      };
      std::vector<std::thread> pool;
      for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
      for (int rc : rcs)
        if (rc) return 1;
      return 0;
    }
    if (verify->parsed()) {
      const std::vector<std::string> fails = verify_instance_dir(verify_dir);
      if (fails.empty()) {
        std::cout << "verified: all planted-optimality checks passed\n";
        return 0;
      }
      for (const auto& f : fails) std::cerr << "FAIL: " << f << "\n";
      return 1;
    }
    if (bounds->parsed()) {
      const ProtocolDump dump = read_protocol(protocol_path);
      std::cout << "t,res\n";
      ProtocolSummary summary;
      summary.field_v = dump.protocol.field_v;
      int next_cp = 1;
      for (int t = 0; t < dump.protocol.size(); ++t) {
        summary.add(dump.gammas[static_cast<size_t>(t)], dump.protocol.points[t],
                    dump.protocol.field_u[t]);
        if (t + 1 == next_cp || t + 1 == dump.protocol.size()) {
          std::cout << t + 1 << "," << resolution(summary, dump.domain) << "\n";
          if (t + 1 == next_cp) next_cp *= 2;
        }
      }
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace comprox
