#include "comprox/certificates.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace comprox {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void ExecutionProtocol::append(CompositePoint y, std::vector<VectorXd> fu) {
  if (!points.empty() && y.u.size() != points.front().u.size())
    throw InputError("ExecutionProtocol: inconsistent block count");
  points.push_back(std::move(y));
  field_u.push_back(std::move(fu));
}

AccuracyCertificate AccuracyCertificate::proportional(const std::vector<double>& gammas) {
  double s = 0.0;
  for (double g : gammas) {
    if (g <= 0.0) throw InputError("proportional certificate: gammas must be > 0");
    s += g;
  }
  AccuracyCertificate c;
  c.weights.reserve(gammas.size());
  for (double g : gammas) c.weights.push_back(g / s);
  return c;
}

void AccuracyCertificate::validate() const {
  double s = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InputError("AccuracyCertificate: negative weight");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw InputError("AccuracyCertificate: weights sum to " + std::to_string(s));
}

void ProtocolSummary::reset() {
  weight_sum = inner_sum = 0.0;
  field_sum.clear();
  point_sum.clear();
  vpoint_sum.clear();
  steps = 0;
}

void ProtocolSummary::add(double gamma, const CompositePoint& y,
                          const std::vector<VectorXd>& fu) {
  if (field_sum.empty()) {
    field_sum.resize(y.u.size());
    point_sum.resize(y.u.size());
    for (size_t i = 0; i < y.u.size(); ++i) {
      field_sum[i] = VectorXd::Zero(y.u[i].size());
      point_sum[i] = VectorXd::Zero(y.u[i].size());
    }
    vpoint_sum.assign(y.v.size(), 0.0);
  }
  double ip = 0.0;
  for (size_t i = 0; i < y.u.size(); ++i) {
    ip += fu[i].dot(y.u[i]);
    field_sum[i] += gamma * fu[i];
    point_sum[i] += gamma * y.u[i];
  }
  for (size_t j = 0; j < y.v.size(); ++j) {
    ip += field_v[j] * y.v[j];
    vpoint_sum[j] += gamma * y.v[j];
  }
  inner_sum += gamma * ip;
  weight_sum += gamma;
  ++steps;
}

CompositePoint ProtocolSummary::averaged() const {
  if (steps == 0) throw InputError("ProtocolSummary: empty");
  CompositePoint x;
  x.u.reserve(point_sum.size());
  for (const auto& p : point_sum) x.u.push_back(p / weight_sum);
  x.v.reserve(vpoint_sum.size());
  for (double v : vpoint_sum) x.v.push_back(v / weight_sum);
  return x;
}

ProtocolSummary summarize(const ExecutionProtocol& protocol, const AccuracyCertificate& cert) {
  if (protocol.size() == 0) throw InputError("summarize: empty protocol");
  if (cert.weights.size() != static_cast<size_t>(protocol.size()))
    throw InputError("summarize: certificate length mismatch");
  cert.validate();
  ProtocolSummary s;
  s.field_v = protocol.field_v;
  for (int t = 0; t < protocol.size(); ++t)
    if (cert.weights[t] > 0.0) s.add(cert.weights[t], protocol.points[t], protocol.field_u[t]);
  // weights already sum to 1, so the accumulators are the lambda-averages
  return s;
}

ResolutionDomain::Block ResolutionDomain::Block::ball(VectorXd center, double radius) {
  Block b;
  b.kind = Kind::euclid_ball;
  b.center = std::move(center);
  b.radius = radius;
  return b;
}

ResolutionDomain::Block ResolutionDomain::Block::capped_epigraph(NonsmoothKind kind,
                                                                 double weight, double norm_cap,
                                                                 int rows, int cols) {
  Block b;
  b.kind = Kind::epigraph_capped;
  b.nonsmooth = kind;
  b.weight = weight;
  b.norm_cap = norm_cap;
  b.rows = rows;
  b.cols = cols;
  b.has_vslot = true;
  return b;
}

ResolutionDomain::Block ResolutionDomain::Block::ball_l1(double radius, double weight) {
  Block b;
  b.kind = Kind::ball_l1_epigraph;
  b.radius = radius;
  b.weight = weight;
  b.has_vslot = true;
  return b;
}

ResolutionDomain::Block ResolutionDomain::Block::point(VectorXd y, std::optional<double> tau) {
  Block b;
  b.kind = Kind::singleton;
  b.center = std::move(y);
  if (tau) {
    b.tau = *tau;
    b.has_vslot = true;
  }
  return b;
}

ResolutionDomain::Block ResolutionDomain::Block::bounds(VectorXd lo, VectorXd hi) {
  Block b;
  b.kind = Kind::box;
  b.center = std::move(lo);
  b.hi = std::move(hi);
  return b;
}

namespace {

double dual_of_nonsmooth(const VectorXd& c, const ResolutionDomain::Block& b) {
  switch (b.nonsmooth) {
    case NonsmoothKind::l1:
      return c.lpNorm<Eigen::Infinity>();
    case NonsmoothKind::nuclear: {
      Eigen::Map<const MatrixRM> C(c.data(), b.rows, b.cols);
      return singular_values(MatrixXd(C))[0];
    }
    default:
      throw CapabilityError("affine_max: unsupported nonsmooth kind on epigraph block");
  }
}

}  // namespace

double affine_max(const VectorXd& c, double d, const ResolutionDomain::Block& b) {
  using Kind = ResolutionDomain::Block::Kind;
  switch (b.kind) {
    case Kind::euclid_ball:
      return c.dot(b.center) + b.radius * c.norm();
    case Kind::epigraph_capped: {
      // sup over {Psi(y) <= t <= w * cap} of <c,y> + d t
      //   = max over t in [0, w*cap] of t * (||c||_* / w + d).
      const double dual = dual_of_nonsmooth(c, b);
      const double slope = dual + d * b.weight;  // times t / w
      if (std::isinf(b.norm_cap)) return slope <= 1e-12 ? 0.0 : kInf;
      return b.norm_cap * std::max(0.0, slope);
    }
    case Kind::ball_l1_epigraph: {
      // t = w * ||y||_1 active for d <= 0: per-coordinate gain |c_i| + d w.
      if (d > 1e-12)
        throw CapabilityError("affine_max: ball_l1_epigraph needs a nonpositive tau cost");
      double acc = 0.0;
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        const double gi = std::abs(c[i]) + d * b.weight;
        if (gi > 0.0) acc += gi * gi;
      }
      return b.radius * std::sqrt(acc);
    }
    case Kind::singleton:
      return c.dot(b.center) + (b.has_vslot ? d * b.tau : 0.0);
    case Kind::box: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < c.size(); ++i)
        acc += std::max(c[i] * b.center[i], c[i] * b.hi[i]);
      return acc;
    }
  }
  throw CapabilityError("affine_max: unsupported block descriptor");
}

double resolution(const ProtocolSummary& summary, const ResolutionDomain& domain) {
  if (summary.steps == 0) throw InputError("resolution: empty summary");
  if (domain.blocks.size() != summary.field_sum.size())
    throw InputError("resolution: domain block count mismatch");
  const double S = summary.weight_sum;
  double res = summary.inner_sum / S;
  int vslot = 0;
  for (size_t i = 0; i < domain.blocks.size(); ++i) {
    const auto& b = domain.blocks[i];
    const VectorXd c = -summary.field_sum[i] / S;
    double d = 0.0;
    if (b.has_vslot) {
      if (vslot >= static_cast<int>(summary.field_v.size()))
        throw InputError("resolution: more epigraph domain blocks than field slots");
      d = -summary.field_v[vslot++];
    }
    res += affine_max(c, d, b);
  }
  if (vslot != static_cast<int>(summary.field_v.size()))
    throw InputError("resolution: unmatched epigraph slots");
  return res;
}

double resolution(const ExecutionProtocol& protocol, const AccuracyCertificate& cert,
                  const ResolutionDomain& domain) {
  return resolution(summarize(protocol, cert), domain);
}

CompositePoint averaged_point(const ExecutionProtocol& protocol,
                              const AccuracyCertificate& cert) {
  return summarize(protocol, cert).averaged();
}

double eps_sad_exact(const CompositePoint& x, const SaddleOracles& oracles) {
  if (!oracles.primal_sup || !oracles.dual_inf)
    throw CapabilityError("eps_sad_exact: missing exact inner oracle");
  return oracles.primal_sup(x) - oracles.dual_inf(x);
}

double certificate_lower_bound(const ProtocolSummary& summary, const ResolutionDomain& domain,
                               double primal_sup_at_avg) {
  return primal_sup_at_avg - resolution(summary, domain);
}

double certificate_lower_bound(const ExecutionProtocol& protocol,
                               const AccuracyCertificate& cert, const ResolutionDomain& domain,
                               double primal_sup_at_avg) {
  return primal_sup_at_avg - resolution(protocol, cert, domain);
}

double theta_bound(const AggregatedSetup& setup, const std::vector<VectorXd>& u1,
                   const ResolutionDomain& domain) {
  using Kind = ResolutionDomain::Block::Kind;
  if (domain.blocks.size() != setup.blocks.size() || u1.size() != setup.blocks.size())
    throw InputError("theta_bound: block count mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < domain.blocks.size(); ++i) {
    const auto& b = domain.blocks[i];
    const double w = setup.blocks[i].weight;
    switch (b.kind) {
      case Kind::euclid_ball: {
        const double reach = (b.center - u1[i]).norm() + b.radius;
        acc += 0.5 * w * reach * reach;
        break;
      }
      case Kind::singleton:
        acc += 0.5 * w * (b.center - u1[i]).squaredNorm();
        break;
      case Kind::ball_l1_epigraph: {
        const double reach = u1[i].norm() + b.radius;
        acc += 0.5 * w * reach * reach;
        break;
      }
      case Kind::epigraph_capped: {
        if (std::isinf(b.norm_cap)) return kInf;
        // ||y||_2 <= ||y||_1 <= cap, and same for the nuclear/Frobenius pair.
        const double reach = u1[i].norm() + b.norm_cap;
        acc += 0.5 * w * reach * reach;
        break;
      }
      case Kind::box: {
        double sq = 0.0;
        for (Eigen::Index k = 0; k < b.center.size(); ++k) {
          const double lo = b.center[k] - u1[i][k], hi = b.hi[k] - u1[i][k];
          sq += std::max(lo * lo, hi * hi);
        }
        acc += 0.5 * w * sq;
        break;
      }
    }
  }
  return acc;
}

}  // namespace comprox
