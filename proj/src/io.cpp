#include "comprox/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace comprox {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open for reading: " + path);
  return is;
}

}  // namespace

void InstanceConfig::load_file(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw InputError("config line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    auto d = [&] { return std::stod(val); };
    auto i = [&] { return std::stoi(val); };
    auto b = [&] { return val == "1" || val == "true" || val == "yes"; };
    if (key == "family") family = val;
    else if (key == "n") n = i();
    else if (key == "m") m = i();
    else if (key == "seed") seed = std::stoull(val);
    else if (key == "obs_prob") obs_prob = d();
    else if (key == "noise_factor") noise_factor = d();
    else if (key == "rank_rule") rank_rule = val;
    else if (key == "sparsity") sparsity = d();
    else if (key == "lambda") lambda = d();
    else if (key == "mu") mu = d();
    else if (key == "mu1") mu1 = d();
    else if (key == "mu2") mu2 = d();
    else if (key == "mu3") mu3 = d();
    else if (key == "image_noise") image_noise = d();
    else if (key == "image_sparsity") image_sparsity = d();
    else if (key == "image_in") image_in = val;
    else if (key == "c") c = d();
    else if (key == "l1_sparsity") l1_sparsity = d();
    else if (key == "max_iters") max_iters = i();
    else if (key == "eps") eps = d();
    else if (key == "D") D = d();
    else if (key == "d_exponent") d_exponent = i();
    else if (key == "kappa") kappa = d();
    else if (key == "rho0") rho0 = d();
    else if (key == "rho_growth") rho_growth = d();
    else if (key == "selective_rho") selective_rho = b();
    else if (key == "rescale_D") rescale_D = b();
    else if (key == "mode") mode = val;
    else if (key == "per_stage_budget") per_stage_budget = i();
    else if (key == "jobs") jobs = i();
    else if (key == "out_trace") out_trace = val;
    else if (key == "dump_instance") dump_instance = val;
    else if (key == "solution_out") solution_out = val;
    else if (key == "dump_protocol") dump_protocol = val;
    else throw InputError("config line " + std::to_string(lineno) + ": unknown key " + key);
  }
}

void InstanceConfig::dump(std::ostream& os) const {
  os << "family=" << family << "\n"
     << "n=" << n << "\nm=" << m << "\nseed=" << seed << "\n"
     << "obs_prob=" << fmt(obs_prob) << "\nnoise_factor=" << fmt(noise_factor) << "\n"
     << "rank_rule=" << rank_rule << "\nsparsity=" << fmt(sparsity) << "\n"
     << "lambda=" << fmt(lambda) << "\nmu=" << fmt(mu) << "\n"
     << "mu1=" << fmt(mu1) << "\nmu2=" << fmt(mu2) << "\nmu3=" << fmt(mu3) << "\n"
     << "image_noise=" << fmt(image_noise) << "\nimage_sparsity=" << fmt(image_sparsity)
     << "\nimage_in=" << image_in << "\n"
     << "c=" << fmt(c) << "\nl1_sparsity=" << fmt(l1_sparsity) << "\n"
     << "max_iters=" << max_iters << "\neps=" << fmt(eps) << "\nD=" << fmt(D) << "\n"
     << "d_exponent=" << d_exponent << "\nkappa=" << fmt(kappa) << "\n"
     << "rho0=" << fmt(rho0) << "\nrho_growth=" << fmt(rho_growth) << "\n"
     << "selective_rho=" << (selective_rho ? 1 : 0) << "\nrescale_D=" << (rescale_D ? 1 : 0)
     << "\nmode=" << mode << "\nper_stage_budget=" << per_stage_budget << "\n"
     << "jobs=" << jobs << "\n"
     << "out_trace=" << out_trace << "\ndump_instance=" << dump_instance << "\n"
     << "solution_out=" << solution_out << "\ndump_protocol=" << dump_protocol << "\n";
}

void InstanceConfig::validate() const {
  if (n < 2) throw InputError("config: n must be >= 2");
  if (obs_prob <= 0.0 || obs_prob > 1.0) throw InputError("config: obs_prob outside (0,1]");
  if (sparsity <= 0.0 || sparsity > 1.0) throw InputError("config: sparsity outside (0,1]");
  if (image_sparsity <= 0.0 || image_sparsity > 1.0)
    throw InputError("config: image_sparsity outside (0,1]");
  if (l1_sparsity <= 0.0 || l1_sparsity > 1.0)
    throw InputError("config: l1_sparsity outside (0,1]");
  if (max_iters < 1 || per_stage_budget < 1) throw InputError("config: iteration budgets < 1");
  if (eps <= 0.0 || kappa <= 0.0 || rho0 <= 0.0 || rho_growth <= 1.0 || c <= 0.0 ||
      noise_factor < 0.0 || image_noise < 0.0)
    throw InputError("config: nonpositive weight or rate");
  if (mode != "penalty" && mode != "sequential" && mode != "simple")
    throw InputError("config: mode must be penalty|sequential|simple");
  if (rank_rule != "n4" && rank_rule != "sqrt")
    throw InputError("config: rank_rule must be n4|sqrt");
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream os = open_out(path);
  os << "t,seconds,upper,lower,gap,rho_or_alpha,restarts\n";
  for (const auto& r : rows) {
    os << r.t << ',' << std::fixed << std::setprecision(3) << r.seconds
       << std::defaultfloat << ',' << fmt(r.upper) << ',' << fmt(r.lower) << ','
       << fmt(r.gap) << ',' << fmt(r.rho_or_alpha) << ',' << r.restarts << "\n";
  }
}

void write_matrix_csv(const std::string& path, const Eigen::Ref<const MatrixXd>& m) {
  std::ofstream os = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << fmt(m(i, j));
    }
    os << "\n";
  }
}

MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream is = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("ragged csv: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("empty csv: " + path);
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_vector_csv(const std::string& path, const VectorXd& v) {
  std::ofstream os = open_out(path);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << fmt(v[i]) << "\n";
}

VectorXd read_vector_csv(const std::string& path) {
  const MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 1) throw InputError("expected single-column csv: " + path);
  return m.col(0);
}

void write_pgm(const std::string& path, const MatrixRM& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < img.rows(); ++i)
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const double v = std::clamp(img(i, j), 0.0, 1.0);
      os.put(static_cast<char>(std::lround(v * 255.0)));
    }
}

MatrixRM read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open for reading: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw InputError("not a binary PGM (P5): " + path);
  auto next_token = [&is, &path]() {
    std::string tok;
    for (;;) {
      if (!(is >> tok)) throw InputError("truncated PGM header: " + path);
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw InputError("only 8-bit PGM supported: " + path);
  is.get();  // single whitespace after maxval
  MatrixRM img(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int c = is.get();
      if (c == EOF) throw InputError("truncated PGM data: " + path);
      img(i, j) = static_cast<double>(c) / 255.0;
    }
  return img;
}

namespace {

void write_meta(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os = open_out(path);
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_meta(const std::string& path) {
  std::ifstream is = open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void dump_mc_instance(const std::string& dir, const McInstance& inst) {
  fs::create_directories(dir);
  std::map<std::string, std::string> kv{
      {"family", std::isnan(inst.opt) ? "matrix_completion" : "mc_known_opt"},
      {"n", std::to_string(inst.n)},
      {"lambda", fmt(inst.lambda)},
      {"mu", fmt(inst.mu)},
      {"sigma", fmt(inst.sigma)},
      {"D", fmt(inst.D)}};
  if (!std::isnan(inst.opt)) kv["opt"] = fmt(inst.opt);
  write_meta(dir + "/meta.txt", kv);
  write_matrix_csv(dir + "/y_true.csv", MatrixXd(inst.y_true));
  {
    std::ofstream os = open_out(dir + "/omega.csv");
    for (int cell : inst.omega) os << cell / inst.n << ',' << cell % inst.n << "\n";
  }
  write_vector_csv(dir + "/b.csv", inst.b);
}

void dump_l1_instance(const std::string& dir, const L1Instance& inst) {
  fs::create_directories(dir);
  write_meta(dir + "/meta.txt", {{"family", "l1_planted"},
                                 {"n", std::to_string(inst.n)},
                                 {"m", std::to_string(inst.m)},
                                 {"R_star", fmt(inst.R_star)}});
  write_matrix_csv(dir + "/A.csv", inst.A);
  write_vector_csv(dir + "/b.csv", inst.b);
  write_vector_csv(dir + "/x_star.csv", inst.x_star);
  write_vector_csv(dir + "/lambda_star.csv", inst.lambda_star);
}

std::vector<std::string> verify_instance_dir(const std::string& dir) {
  std::vector<std::string> fails;
  const auto meta = read_meta(dir + "/meta.txt");
  const auto fam = meta.find("family");
  if (fam == meta.end()) return {"meta.txt missing family"};

  if (fam->second == "l1_planted") {
    const MatrixXd A = read_matrix_csv(dir + "/A.csv");
    const VectorXd b = read_vector_csv(dir + "/b.csv");
    const VectorXd xs = read_vector_csv(dir + "/x_star.csv");
    const VectorXd ls = read_vector_csv(dir + "/lambda_star.csv");
    if ((A * xs - b).norm() > 1e-10) fails.push_back("A x* != b");
    const VectorXd atl = A.transpose() * ls;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      if (xs[i] != 0.0 && std::abs(atl[i] - (xs[i] > 0 ? 1.0 : -1.0)) > 1e-8) {
        fails.push_back("A^T lambda* misses the sign pattern");
        break;
      }
    }
    if (atl.lpNorm<Eigen::Infinity>() > 1.0 + 1e-8)
      fails.push_back("A^T lambda* outside the unit box");
    if (xs.norm() > 1.0 + 1e-12) fails.push_back("x* outside the unit ball");
  } else if (fam->second == "mc_known_opt") {
    const MatrixXd y = read_matrix_csv(dir + "/y_true.csv");
    const VectorXd b = read_vector_csv(dir + "/b.csv");
    const double lambda = std::stod(meta.at("lambda"));
    const double mu = std::stod(meta.at("mu"));
    const int n = static_cast<int>(y.rows());
    MatrixRM brm(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) brm(i, j) = b[i * n + j];
    // first-order optimality: (b - y)/1 = lambda g1 + mu g2 with g1, g2 in the
    // respective subdifferentials; recheck through the objective at random
    // perturbations plus the recorded optimal value
    const MatrixRM yrm = y;
    const double opt = std::stod(meta.at("opt"));
    const double val = 0.5 * (yrm - brm).squaredNorm() + lambda * yrm.cwiseAbs().sum() +
                       mu * singular_values(y).sum();
    if (std::abs(val - opt) > 1e-8 * (1.0 + std::abs(opt)))
      fails.push_back("objective at y_true does not match recorded opt");
    Rng rng(12345);
    for (int trial = 0; trial < 64; ++trial) {
      MatrixRM pert = yrm;
      for (int c = 0; c < n * n; ++c) pert.data()[c] += 1e-4 * rng.gauss();
      const double v = 0.5 * (pert - brm).squaredNorm() + lambda * pert.cwiseAbs().sum() +
                       mu * singular_values(MatrixXd(pert)).sum();
      if (v < val - 1e-12) {
        fails.push_back("y_true is not a local minimizer");
        break;
      }
    }
  } else {
    fails.push_back("unsupported family for verify: " + fam->second);
  }
  return fails;
}

void dump_protocol(const std::string& path, const ExecutionProtocol& protocol,
                   const std::vector<double>& gammas, const ResolutionDomain& domain) {
  if (protocol.size() == 0) throw InputError("dump_protocol: empty protocol");
  if (gammas.size() != static_cast<size_t>(protocol.size()))
    throw InputError("dump_protocol: gamma count mismatch");
  std::ofstream os = open_out(path);
  os << "comprox-protocol 1\n";
  const auto& first = protocol.points.front();
  os << "blocks " << first.u.size() << "\n";
  for (const auto& u : first.u) os << u.size() << "\n";
  os << "fv " << protocol.field_v.size();
  for (double f : protocol.field_v) os << ' ' << fmt(f);
  os << "\n";
  os << "domain " << domain.blocks.size() << "\n";
  using Kind = ResolutionDomain::Block::Kind;
  for (const auto& b : domain.blocks) {
    switch (b.kind) {
      case Kind::euclid_ball:
        os << "ball " << fmt(b.radius) << ' ' << b.center.size();
        for (Eigen::Index i = 0; i < b.center.size(); ++i) os << ' ' << fmt(b.center[i]);
        os << "\n";
        break;
      case Kind::epigraph_capped:
        os << "capped " << (b.nonsmooth == NonsmoothKind::nuclear ? "nuc" : "l1") << ' '
           << fmt(b.weight) << ' ' << fmt(b.norm_cap) << ' ' << b.rows << ' ' << b.cols
           << "\n";
        break;
      case Kind::ball_l1_epigraph:
        os << "ball_l1 " << fmt(b.radius) << ' ' << fmt(b.weight) << "\n";
        break;
      default:
        throw CapabilityError("dump_protocol: unsupported domain block");
    }
  }
  os << "steps " << protocol.size() << "\n";
  for (int t = 0; t < protocol.size(); ++t) {
    os << "gamma " << fmt(gammas[static_cast<size_t>(t)]) << "\n";
    const auto& pt = protocol.points[t];
    for (const auto& u : pt.u) {
      os << "y";
      for (Eigen::Index i = 0; i < u.size(); ++i) os << ' ' << fmt(u[i]);
      os << "\n";
    }
    os << "v";
    for (double v : pt.v) os << ' ' << fmt(v);
    os << "\n";
    for (const auto& f : protocol.field_u[t]) {
      os << "f";
      for (Eigen::Index i = 0; i < f.size(); ++i) os << ' ' << fmt(f[i]);
      os << "\n";
    }
  }
}

ProtocolDump read_protocol(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string tag;
  int version;
  is >> tag >> version;
  if (tag != "comprox-protocol" || version != 1)
    throw InputError("not a comprox protocol file: " + path);
  ProtocolDump out;
  int nblocks;
  is >> tag >> nblocks;
  std::vector<int> dims(nblocks);
  for (int i = 0; i < nblocks; ++i) is >> dims[i];
  int nslots;
  is >> tag >> nslots;
  out.protocol.field_v.resize(nslots);
  for (int i = 0; i < nslots; ++i) is >> out.protocol.field_v[i];
  int ndom;
  is >> tag >> ndom;
  for (int i = 0; i < ndom; ++i) {
    std::string kind;
    is >> kind;
    if (kind == "ball") {
      double radius;
      int dim;
      is >> radius >> dim;
      VectorXd c(dim);
      for (int j = 0; j < dim; ++j) is >> c[j];
      out.domain.blocks.push_back(ResolutionDomain::Block::ball(std::move(c), radius));
    } else if (kind == "capped") {
      std::string nk;
      double w, cap;
      int r, c;
      is >> nk >> w >> cap >> r >> c;
      out.domain.blocks.push_back(ResolutionDomain::Block::capped_epigraph(
          nk == "nuc" ? NonsmoothKind::nuclear : NonsmoothKind::l1, w, cap, r, c));
    } else if (kind == "ball_l1") {
      double radius, w;
      is >> radius >> w;
      out.domain.blocks.push_back(ResolutionDomain::Block::ball_l1(radius, w));
    } else {
      throw InputError("unknown domain block kind: " + kind);
    }
  }
  int steps;
  is >> tag >> steps;
  for (int t = 0; t < steps; ++t) {
    double g;
    is >> tag >> g;
    out.gammas.push_back(g);
    CompositePoint pt;
    for (int bl = 0; bl < nblocks; ++bl) {
      is >> tag;
      VectorXd u(dims[bl]);
      for (int j = 0; j < dims[bl]; ++j) is >> u[j];
      pt.u.push_back(std::move(u));
    }
    is >> tag;
    pt.v.resize(nslots);
    for (int j = 0; j < nslots; ++j) is >> pt.v[j];
    std::vector<VectorXd> fu;
    for (int bl = 0; bl < nblocks; ++bl) {
      is >> tag;
      VectorXd f(dims[bl]);
      for (int j = 0; j < dims[bl]; ++j) is >> f[j];
      fu.push_back(std::move(f));
    }
    out.protocol.append(std::move(pt), std::move(fu));
  }
  if (!is) throw InputError("truncated protocol file: " + path);
  return out;
}

}  // namespace comprox
