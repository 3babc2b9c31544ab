#include "comprox/harness.hpp"

#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace comprox;

TEST_CASE("rng is reproducible and portable transforms behave") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.gauss() == b.gauss());
  }
  Rng c(42);
  double mean = 0.0, var = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double g = c.gauss();
    mean += g;
    var += g * g;
  }
  mean /= N;
  var = var / N - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("matrix completion generator follows the recipe") {
  InstanceConfig cfg;
  cfg.family = "matrix_completion";
  cfg.n = 32;
  cfg.seed = 3;
  const McInstance inst = gen_matrix_completion(cfg);

  // sigma = 0.1 sum|y| / n^2 and lambda = mu = 10 sigma
  const double sig = 0.1 * inst.y_true.cwiseAbs().sum() / (32.0 * 32.0);
  CHECK(inst.sigma == doctest::Approx(sig));
  CHECK(inst.lambda == doctest::Approx(10.0 * sig));
  CHECK(inst.mu == doctest::Approx(10.0 * sig));

  // D heuristic
  const double M = static_cast<double>(inst.b.size());
  CHECK(inst.D == doctest::Approx(std::sqrt(
                      32.0 * 32.0 / M *
                      std::max(inst.b.squaredNorm() - M * sig * sig, 1.0))));

  // observed-cell count concentrates around 0.25 n^2 (five binomial sigmas)
  const double expect = 0.25 * 32 * 32;
  const double dev = 5.0 * std::sqrt(32.0 * 32.0 * 0.25 * 0.75);
  for (std::uint64_t seed : {1ull, 9ull, 77ull}) {
    InstanceConfig c2 = cfg;
    c2.seed = seed;
    const McInstance i2 = gen_matrix_completion(c2);
    CHECK(std::abs(static_cast<double>(i2.omega.size()) - expect) <= dev);
  }

  // the objective matches a direct evaluation at a random point
  Rng rng(5);
  VectorXd y(32 * 32);
  for (int i = 0; i < y.size(); ++i) y[i] = rng.gauss();
  double direct = 0.0;
  for (size_t i = 0; i < inst.omega.size(); ++i) {
    const double r = y[inst.omega[i]] - inst.b[static_cast<Eigen::Index>(i)];
    direct += 0.5 * r * r;
  }
  direct += inst.lambda * y.lpNorm<1>();
  direct += inst.mu * singular_values(MatrixXd(Eigen::Map<const MatrixRM>(y.data(), 32, 32)))
                          .sum();
  CHECK(inst.upsilon(y) == doctest::Approx(direct).epsilon(1e-12));

  // determinism
  const McInstance again = gen_matrix_completion(cfg);
  CHECK((again.b - inst.b).norm() == 0.0);
  CHECK((again.y_true - inst.y_true).norm() == 0.0);
}

TEST_CASE("known-optimum completion instances are truly optimal") {
  InstanceConfig cfg;
  cfg.family = "mc_known_opt";
  cfg.n = 12;
  cfg.seed = 5;
  const McInstance inst = gen_mc_known_opt(cfg);
  REQUIRE(std::isfinite(inst.opt));
  CHECK(static_cast<int>(inst.omega.size()) == 12 * 12);

  const VectorXd y0 = Eigen::Map<const VectorXd>(inst.y_true.data(), 144);
  CHECK(inst.upsilon(y0) == doctest::Approx(inst.opt).epsilon(1e-10));
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd pert = y0;
    for (int i = 0; i < pert.size(); ++i) pert[i] += 1e-3 * rng.gauss();
    CHECK(inst.upsilon(pert) >= inst.opt - 1e-12);
  }
}

TEST_CASE("l1 planted generator: optimality certificates hold") {
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 64;
  cfg.m = 32;
  cfg.seed = 2;
  cfg.c = 1.0;
  const L1Instance inst = gen_l1_planted(cfg);
  CHECK(inst.R_star == doctest::Approx(64.0));
  CHECK(inst.lambda_star.norm() == doctest::Approx(64.0));
  CHECK(inst.x_star.norm() == doctest::Approx(0.9));

  // p^T lambda* = 1 by construction (p enters A through p q^T)
  const VectorXd p = inst.lambda_star / inst.lambda_star.squaredNorm();
  CHECK(p.dot(inst.lambda_star) == doctest::Approx(1.0));

  CHECK((inst.A * inst.x_star - inst.b).norm() <= 1e-12);
  const VectorXd atl = inst.A.transpose() * inst.lambda_star;
  for (int i = 0; i < inst.n; ++i) {
    if (inst.x_star[i] > 0.0)
      CHECK(atl[i] == doctest::Approx(1.0));
    else if (inst.x_star[i] < 0.0)
      CHECK(atl[i] == doctest::Approx(-1.0));
    else
      CHECK(std::abs(atl[i]) <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS([&] {
    InstanceConfig bad = cfg;
    bad.m = 64;
    gen_l1_planted(bad);
  }(), InputError);
}

TEST_CASE("tv gradient map") {
  LinearMap T = tv_gradient_map(2);
  VectorXd y(4);
  y << 1, 2, 3, 4;  // [[1,2],[3,4]] row-major
  const VectorXd ty = T.apply(y);
  CHECK(ty.lpNorm<1>() == doctest::Approx(6.0));
  CHECK(T.apply(VectorXd::Ones(4)).norm() == doctest::Approx(0.0));

  // adjoint identity on random pairs
  LinearMap T5 = tv_gradient_map(5);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd u(25), w(40);
    for (int i = 0; i < 25; ++i) u[i] = rng.gauss();
    for (int i = 0; i < 40; ++i) w[i] = rng.gauss();
    CHECK(T5.apply(u).dot(w) == doctest::Approx(u.dot(T5.adjoint(w))).epsilon(1e-10));
  }
}

TEST_CASE("image problem: penalty floor formula and gradients") {
  MatrixRM obs = MatrixRM::Zero(4, 4);
  obs(1, 2) = 0.7;
  obs(3, 0) = -0.2;
  const ImageInstance inst = build_image_problem(obs, 0.05, 0.005, 0.005);
  const double expected = 1.0 + 0.005 * std::sqrt(2.0 * 4.0 * 3.0);
  CHECK(inst.rho_floor == doctest::Approx(expected));
  const auto floors = penalty_floor(inst.problem);
  CHECK(floors[0] == doctest::Approx(expected));

  // objective matches a direct evaluation
  Rng rng(3);
  VectorXd base(3 * 16);
  for (int i = 0; i < base.size(); ++i) base[i] = 0.3 * rng.gauss();
  const VectorXd y1 = base.segment(0, 16), y2 = base.segment(16, 16),
                 y3 = base.segment(32, 16);
  const VectorXd bvec = Eigen::Map<const VectorXd>(obs.data(), 16);
  double direct = (y1 + y2 + y3 - bvec).norm();
  direct += 0.05 * singular_values(MatrixXd(Eigen::Map<const MatrixRM>(y1.data(), 4, 4))).sum();
  direct += 0.005 * y2.lpNorm<1>();
  direct += 0.005 * tv_gradient_map(4).apply(y3).lpNorm<1>();
  CHECK(inst.problem.objective(base) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("synthetic image instance has the documented regularization") {
  InstanceConfig cfg;
  cfg.family = "image_decomp_synthetic";
  cfg.n = 16;
  cfg.seed = 4;
  const ImageInstance inst = gen_image_synthetic(cfg);
  CHECK(inst.mu1 == doctest::Approx(10.0 * cfg.image_noise));
  CHECK(inst.mu2 == doctest::Approx(cfg.image_noise));
  CHECK(inst.mu3 == doctest::Approx(cfg.image_noise));
  CHECK(inst.n == 16);
}

TEST_CASE("pgm round trip") {
  MatrixRM img(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) img(i, j) = ((i * 5 + j) % 256) / 255.0;
  const std::string path = "/tmp/comprox_test.pgm";
  write_pgm(path, img);
  const MatrixRM back = read_pgm(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 5);
  CHECK((back - img).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  std::remove(path.c_str());
}

TEST_CASE("csv round trips") {
  MatrixXd m(2, 3);
  m << 1.5, -2.25, 3.125, 0.0, 1e-17, -4.75;
  write_matrix_csv("/tmp/comprox_test.csv", m);
  CHECK((read_matrix_csv("/tmp/comprox_test.csv") - m).norm() == 0.0);
  VectorXd v(4);
  v << 0.1, -0.2, 0.3, -0.4;
  write_vector_csv("/tmp/comprox_test_v.csv", v);
  CHECK((read_vector_csv("/tmp/comprox_test_v.csv") - v).norm() == 0.0);
  std::remove("/tmp/comprox_test.csv");
  std::remove("/tmp/comprox_test_v.csv");
}

TEST_CASE("config parse, dump and validation") {
  InstanceConfig cfg;
  std::ofstream os("/tmp/comprox_cfg.txt");
  os << "family=l1_planted\nn=128\nm=64\nseed=9\neps=1e-6\nmode=sequential\n"
     << "# comment line\nrescale_D=true\n";
  os.close();
  cfg.load_file("/tmp/comprox_cfg.txt");
  CHECK(cfg.family == "l1_planted");
  CHECK(cfg.n == 128);
  CHECK(cfg.m == 64);
  CHECK(cfg.eps == doctest::Approx(1e-6));
  CHECK(cfg.mode == "sequential");
  CHECK(cfg.rescale_D);
  cfg.validate();

  std::ostringstream dump;
  cfg.dump(dump);
  CHECK(dump.str().find("family=l1_planted") != std::string::npos);

  InstanceConfig bad = cfg;
  bad.obs_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.mode = "zigzag";
  CHECK_THROWS_AS(bad.validate(), InputError);

  std::ofstream os2("/tmp/comprox_cfg_bad.txt");
  os2 << "unknown_key=1\n";
  os2.close();
  InstanceConfig c2;
  CHECK_THROWS_AS(c2.load_file("/tmp/comprox_cfg_bad.txt"), InputError);
  std::remove("/tmp/comprox_cfg.txt");
  std::remove("/tmp/comprox_cfg_bad.txt");
}

TEST_CASE("instance dump and verify round trip") {
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 24;
  cfg.m = 12;
  cfg.seed = 6;
  const L1Instance inst = gen_l1_planted(cfg);
  dump_l1_instance("/tmp/comprox_l1_dump", inst);
  CHECK(verify_instance_dir("/tmp/comprox_l1_dump").empty());

  InstanceConfig mcfg;
  mcfg.family = "mc_known_opt";
  mcfg.n = 8;
  mcfg.seed = 12;
  const McInstance minst = gen_mc_known_opt(mcfg);
  dump_mc_instance("/tmp/comprox_mc_dump", minst);
  CHECK(verify_instance_dir("/tmp/comprox_mc_dump").empty());

  // corrupt the observations: verification must fail
  VectorXd bad_b = minst.b;
  bad_b[0] += 0.5;
  write_vector_csv("/tmp/comprox_mc_dump/b.csv", bad_b);
  CHECK_FALSE(verify_instance_dir("/tmp/comprox_mc_dump").empty());
  std::filesystem::remove_all("/tmp/comprox_l1_dump");
  std::filesystem::remove_all("/tmp/comprox_mc_dump");
}

TEST_CASE("protocol dump and bounds recomputation round trip") {
  // tiny bilinear run with recorded protocol
  Rng rng(8);
  const int n = 6;
  MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.gauss();
  VectorXd b(n);
  for (int i = 0; i < n; ++i) b[i] = 0.3 * rng.gauss();
  EpigraphBlock ball;
  ball.base_set = BaseSet::euclid_ball;
  ball.radius = 1.0;
  AggregatedSetup setup = AggregatedSetup::make({{ball, 1.0, n, -1}, {ball, 1.0, n, -1}});
  SaddleOperator op;
  op.eval_Fu = [&A, &b](const std::vector<VectorXd>& u) {
    return std::vector<VectorXd>{A.transpose() * u[1], b - A * u[0]};
  };
  CompositePoint x0;
  x0.u = {VectorXd::Zero(n), VectorXd::Zero(n)};
  RunConfig rc;
  rc.max_iters = 32;
  rc.record_protocol = true;
  const RunResult rr = run(op, setup, x0, rc);

  ResolutionDomain dom;
  dom.blocks.push_back(ResolutionDomain::Block::ball(VectorXd::Zero(n), 1.0));
  dom.blocks.push_back(ResolutionDomain::Block::ball(VectorXd::Zero(n), 1.0));
  dump_protocol("/tmp/comprox_proto.txt", rr.state.protocol, rr.state.phase_gammas, dom);
  const ProtocolDump back = read_protocol("/tmp/comprox_proto.txt");
  REQUIRE(back.protocol.size() == 32);
  const AccuracyCertificate cert = AccuracyCertificate::proportional(back.gammas);
  const double res_orig = resolution(rr.state.summary, dom);
  const double res_back = resolution(back.protocol, cert, back.domain);
  CHECK(res_back == doctest::Approx(res_orig).epsilon(1e-12));
  std::remove("/tmp/comprox_proto.txt");
}

TEST_CASE("solve_mc on a small known-optimum instance") {
  InstanceConfig cfg;
  cfg.family = "mc_known_opt";
  cfg.n = 16;
  cfg.seed = 7;
  cfg.max_iters = 512;
  const McInstance inst = gen_mc_known_opt(cfg);
  const PenaltySolveResult res = solve_mc(inst, cfg);
  CHECK((res.upsilon_best - inst.opt) / inst.opt <= 1e-3);
  CHECK(res.upsilon_best >= inst.opt - 1e-9);
  CHECK(res.lower_best <= inst.opt + 1e-9);
  // trace bookkeeping: upper nonincreasing, lower nondecreasing
  for (size_t i = 1; i < res.trace.size(); ++i) {
    CHECK(res.trace[i].upper <= res.trace[i - 1].upper + 1e-12);
    CHECK(res.trace[i].lower >= res.trace[i - 1].lower - 1e-12);
  }

  // deterministic trace (modulo the wall-clock column)
  const PenaltySolveResult res2 = solve_mc(inst, cfg);
  REQUIRE(res.trace.size() == res2.trace.size());
  for (size_t i = 0; i < res.trace.size(); ++i) {
    CHECK(res.trace[i].upper == res2.trace[i].upper);
    CHECK(res.trace[i].lower == res2.trace[i].lower);
    CHECK(res.trace[i].rho_or_alpha == res2.trace[i].rho_or_alpha);
  }
  write_trace_csv("/tmp/comprox_trace.csv", res.trace);
  std::ifstream is("/tmp/comprox_trace.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,seconds,upper,lower,gap,rho_or_alpha,restarts");
  std::remove("/tmp/comprox_trace.csv");
}

TEST_CASE("solve_image smoke: objective decreases") {
  InstanceConfig cfg;
  cfg.family = "image_decomp_synthetic";
  cfg.n = 12;
  cfg.seed = 3;
  cfg.max_iters = 256;
  const ImageInstance inst = gen_image_synthetic(cfg);
  const PenaltySolveResult res = solve_image(inst, cfg);
  REQUIRE(res.trace.size() >= 2);
  for (size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].upper <= res.trace[i - 1].upper + 1e-12);
  CHECK(res.trace.back().upper < res.trace.front().upper);
}

TEST_CASE("l1 drivers: sequential beats simple on step count") {
  InstanceConfig cfg;
  cfg.family = "l1_planted";
  cfg.n = 48;
  cfg.m = 24;
  cfg.seed = 13;
  cfg.eps = 1e-3;
  cfg.max_iters = 100000;
  const L1Instance inst = gen_l1_planted(cfg);
  const SequentialResult seq = solve_l1_sequential(inst, cfg);
  CHECK(seq.converged);
  CHECK(inst.eps_measure(seq.combined.u[0]) <= cfg.eps);
  const SimpleCompResult simple = solve_l1_simple(inst, inst.R_star, cfg);
  CHECK(simple.converged);
  CHECK(inst.eps_measure(simple.x) <= cfg.eps);
  CHECK(seq.total_steps < simple.steps);
}
