#include "lgcalib/factors.hpp"

#include <algorithm>
#include <cmath>

#include "lgcalib/error.hpp"

namespace lgcalib {

namespace {

RigidTransform element_value(const ChainElement& e, const Values& values) {
  const RigidTransform& t = e.variable >= 0 ? values[static_cast<std::size_t>(e.variable)] : e.constant;
  return e.inverted ? t.inverse() : t;
}

struct ChainJacobian {
  RigidTransform total;
  // (variable id, left-twist map G): perturbing the variable by X * Exp(dx)
  // moves the chain to Exp(G dx) * total.
  std::vector<std::pair<int, Matrix6>> parts;
};

ChainJacobian chain_jacobian(const Chain& chain, const Values& values) {
  ChainJacobian out;
  RigidTransform prefix;
  for (const auto& e : chain) {
    const RigidTransform v = element_value(e, values);
    if (e.variable >= 0) {
      if (e.inverted) {
        out.parts.emplace_back(e.variable, -adjoint(prefix));
      } else {
        out.parts.emplace_back(e.variable, adjoint(prefix * v));
      }
    }
    prefix = prefix * v;
  }
  out.total = prefix;
  return out;
}

int block_slot(const std::vector<int>& blocks, int id) {
  return static_cast<int>(std::lower_bound(blocks.begin(), blocks.end(), id) - blocks.begin());
}

Matrix3 propagate(const Matrix3& r_a, const Matrix3& cov_a, const Matrix3& r_b, const Matrix3& cov_b) {
  return r_a * cov_a * r_a.transpose() + r_b * cov_b * r_b.transpose();
}

}  // namespace

RigidTransform evaluate_chain(const Chain& chain, const Values& values) {
  RigidTransform out;
  for (const auto& e : chain) out = out * element_value(e, values);
  return out;
}

std::vector<int> chain_variables(std::initializer_list<const Chain*> chains) {
  std::vector<int> ids;
  for (const Chain* c : chains) {
    for (const auto& e : *c) {
      if (e.variable >= 0) ids.push_back(e.variable);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------

ProductLogFactor::ProductLogFactor(Chain chain) : chain_(std::move(chain)) {
  blocks_ = chain_variables({&chain_});
}

Eigen::VectorXd ProductLogFactor::evaluate(const Values& values,
                                           std::vector<Eigen::MatrixXd>* jacobians) const {
  if (jacobians == nullptr) return log_map(evaluate_chain(chain_, values));
  const ChainJacobian cj = chain_jacobian(chain_, values);
  const Twist6 r = log_map(cj.total);
  // Left twist G dx becomes right twist Ad_{T^-1} G dx.
  const Matrix6 left_to_right = se3_right_jacobian_inverse(r) * adjoint(cj.total.inverse());
  jacobians->assign(blocks_.size(), Eigen::MatrixXd::Zero(6, 6));
  for (const auto& [id, g] : cj.parts) {
    (*jacobians)[static_cast<std::size_t>(block_slot(blocks_, id))] += left_to_right * g;
  }
  return r;
}

std::shared_ptr<ProductLogFactor> make_prior_factor(int variable, const RigidTransform& measurement) {
  return std::make_shared<ProductLogFactor>(
      Chain{ChainElement::fixed(measurement, true), ChainElement::var(variable)});
}

Matrix6 HeightObservation::covariance() const {
  Vector6 diag;
  diag << c_b, c_b, c_b, c_b, c_b, c_s;
  return diag.asDiagonal();
}

Matrix6 HeightObservation::information() const {
  Vector6 diag;
  diag << 1.0 / c_b, 1.0 / c_b, 1.0 / c_b, 1.0 / c_b, 1.0 / c_b, 1.0 / c_s;
  return diag.asDiagonal();
}

RigidTransform HeightObservation::measurement() const {
  Twist6 xi = Twist6::Zero();
  xi[5] = h_g;
  return exp_map(xi);
}

std::shared_ptr<ProductLogFactor> make_height_factor(int vl_g_variable, const HeightObservation& obs) {
  return std::make_shared<ProductLogFactor>(
      Chain{ChainElement::fixed(obs.measurement()), ChainElement::var(vl_g_variable, true)});
}

Twist6 height_residual(const RigidTransform& t_vl_g, const HeightObservation& obs) {
  return log_map(obs.measurement() * t_vl_g.inverse());
}

Chain motion_chain(const ChainElement& x, const ChainElement& gi, const ChainElement& gj,
                   const ChainElement& vi, const ChainElement& vj) {
  auto inv = [](ChainElement e) {
    e.inverted = !e.inverted;
    return e;
  };
  return Chain{x, inv(gj), gi, inv(x), inv(vi), vj};
}

std::shared_ptr<ProductLogFactor> make_motion_factor(const MotionFactorIds& ids) {
  return std::make_shared<ProductLogFactor>(
      motion_chain(ChainElement::var(ids.vl_g), ChainElement::var(ids.gins_i),
                   ChainElement::var(ids.gins_j), ChainElement::var(ids.vl_i), ChainElement::var(ids.vl_j)));
}

Twist6 motion_residual(const RigidTransform& t_vl_g, const RigidTransform& gins_i,
                       const RigidTransform& gins_j, const RigidTransform& vl_i,
                       const RigidTransform& vl_j) {
  return log_map(t_vl_g * gins_j.inverse() * gins_i * t_vl_g.inverse() * vl_i.inverse() * vl_j);
}

Matrix6 pose_covariance(double sigma_rot_rad, double sigma_trans_m) {
  Vector6 diag;
  const double r2 = sigma_rot_rad * sigma_rot_rad;
  const double t2 = sigma_trans_m * sigma_trans_m;
  diag << r2, r2, r2, t2, t2, t2;
  return diag.asDiagonal();
}

// ---------------------------------------------------------------------------

std::shared_ptr<ScanFrame> ScanFrame::build(const PointCloud& cloud, const CovarianceOptions& options) {
  auto frame = std::make_shared<ScanFrame>();
  frame->sensor_id = cloud.sensor_id;
  frame->timestamp = cloud.timestamp;
  frame->points = cloud.points;
  frame->covariances = estimate_covariances(cloud, options);
  frame->tree = KdTree(frame->points);
  return frame;
}

std::vector<Correspondence> build_correspondences(std::span<const Vector3> cloud_a,
                                                  std::span<const Vector3> cloud_b, double gate) {
  std::vector<Correspondence> out;
  if (cloud_a.empty() || cloud_b.empty()) return out;
  const KdTree tree(cloud_b);
  for (std::size_t i = 0; i < cloud_a.size(); ++i) {
    if (auto nb = tree.nearest(cloud_a[i], gate)) out.push_back({0, i, 1, nb->index});
  }
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> associate_frames(const ScanFrame& a,
                                                                      const RigidTransform& t_w_a,
                                                                      const ScanFrame& b,
                                                                      const RigidTransform& t_w_b,
                                                                      const AssociationOptions& options) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> found;
  if (a.points.empty() || b.points.empty() || options.max_per_pair == 0) return found;
  const RigidTransform b_from_a = t_w_b.inverse() * t_w_a;
  // Query at most twice the budget so dense frames stay cheap.
  const std::size_t query_stride = std::max<std::size_t>(1, a.points.size() / (2 * options.max_per_pair));
  for (std::size_t i = 0; i < a.points.size(); i += query_stride) {
    if (auto nb = b.tree.nearest(b_from_a * a.points[i], options.gate_m)) {
      found.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nb->index));
    }
  }
  if (found.size() <= options.max_per_pair) return found;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> kept;
  kept.reserve(options.max_per_pair);
  for (std::size_t k = 0; k < options.max_per_pair; ++k) {
    kept.push_back(found[k * found.size() / options.max_per_pair]);
  }
  return kept;
}

double MatchResidual::mahalanobis_sq() const { return d.dot(sigma.ldlt().solve(d)); }

MatchFactor::MatchFactor(Chain chain_a, const Vector3& p_a, const Matrix3& cov_a, Chain chain_b,
                         const Vector3& p_b, const Matrix3& cov_b)
    : chain_a_(std::move(chain_a)),
      chain_b_(std::move(chain_b)),
      p_a_(p_a),
      p_b_(p_b),
      cov_a_(cov_a),
      cov_b_(cov_b) {
  blocks_ = chain_variables({&chain_a_, &chain_b_});
}

MatchResidual MatchFactor::residual(const Values& values) const {
  const RigidTransform ta = evaluate_chain(chain_a_, values);
  const RigidTransform tb = evaluate_chain(chain_b_, values);
  MatchResidual r;
  r.d = ta * p_a_ - tb * p_b_;
  r.sigma = propagate(ta.rotation_matrix(), cov_a_, tb.rotation_matrix(), cov_b_);
  return r;
}

double MatchFactor::cost(const Values& values, const RobustKernel& kernel) const {
  const MatchResidual r = residual(values);
  return huber_weight(std::sqrt(std::max(0.0, r.mahalanobis_sq())), kernel.delta).rho;
}

Eigen::VectorXd MatchFactor::evaluate(const Values& values, std::vector<Eigen::MatrixXd>* jacobians) const {
  const ChainJacobian ja = chain_jacobian(chain_a_, values);
  const ChainJacobian jb = chain_jacobian(chain_b_, values);
  const Vector3 wa = ja.total * p_a_;
  const Vector3 wb = jb.total * p_b_;
  if (jacobians != nullptr) {
    jacobians->assign(blocks_.size(), Eigen::MatrixXd::Zero(3, 6));
    Eigen::Matrix<double, 3, 6> da, db;
    da << -skew(wa), Matrix3::Identity();
    db << -skew(wb), Matrix3::Identity();
    for (const auto& [id, g] : ja.parts) (*jacobians)[static_cast<std::size_t>(block_slot(blocks_, id))] += da * g;
    for (const auto& [id, g] : jb.parts) (*jacobians)[static_cast<std::size_t>(block_slot(blocks_, id))] -= db * g;
  }
  return wa - wb;
}

// ---------------------------------------------------------------------------

MatchPairTerm::MatchPairTerm(std::shared_ptr<const ScanFrame> a, Chain chain_a,
                             std::shared_ptr<const ScanFrame> b, Chain chain_b,
                             std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs)
    : a_(std::move(a)),
      b_(std::move(b)),
      chain_a_(std::move(chain_a)),
      chain_b_(std::move(chain_b)),
      pairs_(std::move(pairs)) {
  blocks_ = chain_variables({&chain_a_, &chain_b_});
}

// Both loops work in the rotated frame of `a`: d_a = R_a^T d and
// Sigma_a = C_a + R_ab C_b R_ab^T. The Mahalanobis norm is unchanged and one
// covariance rotation per correspondence is saved.
double MatchPairTerm::cost(const Values& values, const RobustKernel& kernel) const {
  const RigidTransform ta = evaluate_chain(chain_a_, values);
  const RigidTransform tb = evaluate_chain(chain_b_, values);
  const RigidTransform ab = ta.inverse() * tb;
  const Matrix3 rab = ab.rotation_matrix();
  const Vector3 tab = ab.translation();
  double total = 0.0;
  for (const auto& [ia, ib] : pairs_) {
    const Vector3 d = a_->points[ia] - (rab * b_->points[ib] + tab);
    const Matrix3 sigma = a_->covariances[ia] + rab * b_->covariances[ib] * rab.transpose();
    const double m2 = d.dot(sigma.inverse() * d);
    total += huber_weight(std::sqrt(std::max(0.0, m2)), kernel.delta).rho;
  }
  return total;
}

void MatchPairTerm::linearize(const Values& values, const RobustKernel& kernel, Linearization& out) const {
  const ChainJacobian ja = chain_jacobian(chain_a_, values);
  const ChainJacobian jb = chain_jacobian(chain_b_, values);
  const Matrix3 ra = ja.total.rotation_matrix();
  const RigidTransform rel = ja.total.inverse() * jb.total;
  const Matrix3 rab = rel.rotation_matrix();
  const Vector3 tab = rel.translation();

  // Pair-local origin keeps the lever arms short.
  Vector3 origin_a = Vector3::Zero();
  for (const auto& pr : pairs_) origin_a += a_->points[pr.first];
  if (!pairs_.empty()) origin_a /= static_cast<double>(pairs_.size());
  const Vector3 origin = ja.total * origin_a;

  // Point Jacobians are [-skew(u), I]; the 6x6 products are expanded blockwise.
  Matrix6 aa = Matrix6::Zero(), ab = Matrix6::Zero(), bb = Matrix6::Zero();
  Vector6 ga = Vector6::Zero(), gb = Vector6::Zero();
  double total = 0.0;
  for (const auto& [ia, ib] : pairs_) {
    const Vector3& pa = a_->points[ia];
    const Vector3 pb = rab * b_->points[ib] + tab;
    const Vector3 d = pa - pb;
    const Matrix3 info = (a_->covariances[ia] + rab * b_->covariances[ib] * rab.transpose()).inverse();
    const Vector3 info_d = info * d;
    const HuberValue h = huber_weight(std::sqrt(std::max(0.0, d.dot(info_d))), kernel.delta);
    total += h.rho;
    const Matrix3 w = h.weight * info;
    const Vector3 wd = h.weight * info_d;
    const Matrix3 sa = skew(pa - origin_a);
    const Matrix3 sb = skew(pb - origin_a);
    // A = -sa, so A^T = sa.
    const Matrix3 at_w = sa * w;
    const Matrix3 bt_w = sb * w;
    aa.topLeftCorner<3, 3>().noalias() -= at_w * sa;
    aa.topRightCorner<3, 3>() += at_w;
    aa.bottomRightCorner<3, 3>() += w;
    ab.topLeftCorner<3, 3>().noalias() -= at_w * sb;
    ab.topRightCorner<3, 3>() += at_w;
    ab.bottomLeftCorner<3, 3>().noalias() -= w * sb;
    ab.bottomRightCorner<3, 3>() += w;
    bb.topLeftCorner<3, 3>().noalias() -= bt_w * sb;
    bb.topRightCorner<3, 3>() += bt_w;
    bb.bottomRightCorner<3, 3>() += w;
    ga.head<3>().noalias() += sa * wd;
    ga.tail<3>() += wd;
    gb.head<3>().noalias() += sb * wd;
    gb.tail<3>() += wd;
  }
  aa.bottomLeftCorner<3, 3>() = aa.topRightCorner<3, 3>().transpose();
  bb.bottomLeftCorner<3, 3>() = bb.topRightCorner<3, 3>().transpose();

  // Back to world-aligned axes.
  Matrix6 rot = Matrix6::Zero();
  rot.topLeftCorner<3, 3>() = ra;
  rot.bottomRightCorner<3, 3>() = ra;
  aa = rot * aa * rot.transpose();
  ab = rot * ab * rot.transpose();
  bb = rot * bb * rot.transpose();
  ga = rot * ga;
  gb = rot * gb;

  const Matrix6 to_local = adjoint(RigidTransform::from_translation(-origin));
  const std::size_t nb = blocks_.size();
  std::vector<Matrix6> gsa(nb, Matrix6::Zero()), gsb(nb, Matrix6::Zero());
  for (const auto& [id, g] : ja.parts) gsa[static_cast<std::size_t>(block_slot(blocks_, id))] += to_local * g;
  for (const auto& [id, g] : jb.parts) gsb[static_cast<std::size_t>(block_slot(blocks_, id))] += to_local * g;

  const auto n = static_cast<Eigen::Index>(6 * nb);
  out.H.setZero(n, n);
  out.g.setZero(n);
  out.cost = total;
  const Matrix6 ba = ab.transpose();
  for (std::size_t v = 0; v < nb; ++v) {
    const auto cv = static_cast<Eigen::Index>(6 * v);
    out.g.segment<6>(cv) = gsa[v].transpose() * ga - gsb[v].transpose() * gb;
    const Matrix6 left_a = gsa[v].transpose() * aa - gsb[v].transpose() * ba;
    const Matrix6 left_b = gsa[v].transpose() * ab - gsb[v].transpose() * bb;
    for (std::size_t u = v; u < nb; ++u) {
      const auto cu = static_cast<Eigen::Index>(6 * u);
      const Matrix6 blk = left_a * gsa[u] - left_b * gsb[u];
      out.H.block<6, 6>(cv, cu) = blk;
      if (u != v) out.H.block<6, 6>(cu, cv) = blk.transpose();
    }
  }
}

std::vector<MatchFactor> MatchPairTerm::expand() const {
  std::vector<MatchFactor> out;
  out.reserve(pairs_.size());
  for (const auto& [ia, ib] : pairs_) {
    out.emplace_back(chain_a_, a_->points[ia], a_->covariances[ia], chain_b_, b_->points[ib],
                     b_->covariances[ib]);
  }
  return out;
}

}  // namespace lgcalib
