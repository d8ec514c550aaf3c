#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <memory>
#include <string>
#include <vector>

#include "lgcalib/kdtree.hpp"
#include "lgcalib/point_cloud.hpp"
#include "lgcalib/solver.hpp"

namespace lgcalib {

// ---------------------------------------------------------------------------
// Transform chains

/// One factor of a product of transforms: either a variable (by id) or a
/// constant, optionally inverted.
struct ChainElement {
  int variable = -1;
  RigidTransform constant;
  bool inverted = false;

  static ChainElement var(int id, bool inverted = false) { return {id, {}, inverted}; }
  static ChainElement fixed(const RigidTransform& t, bool inverted = false) { return {-1, t, inverted}; }
};

using Chain = std::vector<ChainElement>;

RigidTransform evaluate_chain(const Chain& chain, const Values& values);

/// Sorted distinct variable ids referenced by the chains.
std::vector<int> chain_variables(std::initializer_list<const Chain*> chains);

// ---------------------------------------------------------------------------
// Log-of-product factors: prior, height, motion

/// r = Log(E_1 * E_2 * ... * E_n) with analytic Jacobians
/// J = Jr^-1(r) * Ad_{S^-1} for a plain element and -Jr^-1(r) * Ad_{S^-1 X}
/// for an inverted one (S is the product after the element).
class ProductLogFactor : public ResidualFactor {
 public:
  explicit ProductLogFactor(Chain chain);

  const std::vector<int>& blocks() const override { return blocks_; }
  int dimension() const override { return 6; }
  Eigen::VectorXd evaluate(const Values& values, std::vector<Eigen::MatrixXd>* jacobians) const override;

  const Chain& chain() const { return chain_; }

 private:
  Chain chain_;
  std::vector<int> blocks_;
};

/// r = Log(measurement^-1 * X).
std::shared_ptr<ProductLogFactor> make_prior_factor(int variable, const RigidTransform& measurement);

struct HeightObservation {
  double h_g = 1.8;
  double c_b = 1e8;
  double c_s = 1e-3;

  /// Q = diag(c_b, c_b, c_b, c_b, c_b, c_s); the small slot is z-translation.
  Matrix6 covariance() const;
  Matrix6 information() const;
  RigidTransform measurement() const;
};

/// r = Log(Exp([0,0,0,0,0,h_G]) * T_vl_g^-1).
std::shared_ptr<ProductLogFactor> make_height_factor(int vl_g_variable, const HeightObservation& obs);
Twist6 height_residual(const RigidTransform& t_vl_g, const HeightObservation& obs);

struct MotionFactorIds {
  int vl_g = -1;
  int gins_i = -1;
  int gins_j = -1;
  int vl_i = -1;
  int vl_j = -1;
};

/// r = Log(X * G_j^-1 * G_i * X^-1 * V_i^-1 * V_j) with X = T_vl_g, G world
/// GINS poses and V world VLiDAR poses. Use motion_chain to mix in constants.
std::shared_ptr<ProductLogFactor> make_motion_factor(const MotionFactorIds& ids);
Chain motion_chain(const ChainElement& x, const ChainElement& gi, const ChainElement& gj,
                   const ChainElement& vi, const ChainElement& vj);
Twist6 motion_residual(const RigidTransform& t_vl_g, const RigidTransform& gins_i,
                       const RigidTransform& gins_j, const RigidTransform& vl_i,
                       const RigidTransform& vl_j);

/// Diagonal covariance with rotation sigma (radians) on slots 0-2 and
/// translation sigma (meters) on slots 3-5.
Matrix6 pose_covariance(double sigma_rot_rad, double sigma_trans_m);

// ---------------------------------------------------------------------------
// Matching

/// A keyframe prepared for matching: points and regularized covariances in
/// the sensor frame plus a search tree over the points.
struct ScanFrame {
  std::string sensor_id;
  double timestamp = 0.0;
  std::vector<Vector3> points;
  std::vector<PointCovariance> covariances;
  KdTree tree;

  static std::shared_ptr<ScanFrame> build(const PointCloud& cloud, const CovarianceOptions& options);
};

struct Correspondence {
  std::size_t frame_a = 0;
  std::size_t index_a = 0;
  std::size_t frame_b = 0;
  std::size_t index_b = 0;
};

/// Gated nearest neighbour in b for every point of a (both in world frame).
/// Frame ids in the result are 0 for a and 1 for b.
std::vector<Correspondence> build_correspondences(std::span<const Vector3> cloud_a,
                                                  std::span<const Vector3> cloud_b, double gate);

struct AssociationOptions {
  double gate_m = 1.0;
  std::size_t max_per_pair = 2000;
};

/// Pairs (index_a, index_b) of gated nearest neighbours between two frames
/// placed by t_w_a and t_w_b. At most max_per_pair pairs are kept, taken
/// deterministically by index stride.
std::vector<std::pair<std::uint32_t, std::uint32_t>> associate_frames(const ScanFrame& a,
                                                                      const RigidTransform& t_w_a,
                                                                      const ScanFrame& b,
                                                                      const RigidTransform& t_w_b,
                                                                      const AssociationOptions& options);

struct MatchResidual {
  Vector3 d = Vector3::Zero();
  Matrix3 sigma = Matrix3::Identity();
  double mahalanobis_sq() const;
};

/// Single correspondence d = chain_a(p_a) - chain_b(p_b) with propagated
/// covariance R_a S_a R_a^T + R_b S_b R_b^T. The residual exposed to the
/// solver interface is d; the covariance is treated as constant.
class MatchFactor : public ResidualFactor {
 public:
  MatchFactor(Chain chain_a, const Vector3& p_a, const Matrix3& cov_a, Chain chain_b,
              const Vector3& p_b, const Matrix3& cov_b);

  const std::vector<int>& blocks() const override { return blocks_; }
  int dimension() const override { return 3; }
  Eigen::VectorXd evaluate(const Values& values, std::vector<Eigen::MatrixXd>* jacobians) const override;

  MatchResidual residual(const Values& values) const;
  /// Robustified cost rho(sqrt(d^T Sigma^-1 d)).
  double cost(const Values& values, const RobustKernel& kernel) const;

 private:
  Chain chain_a_, chain_b_;
  Vector3 p_a_, p_b_;
  Matrix3 cov_a_, cov_b_;
  std::vector<int> blocks_;
};

/// All correspondences between two frames sharing their chains. Normal
/// equations are accumulated once per pair in world-twist form and then
/// mapped onto the variables, which is much cheaper than per-point factors.
class MatchPairTerm : public CostTerm {
 public:
  MatchPairTerm(std::shared_ptr<const ScanFrame> a, Chain chain_a, std::shared_ptr<const ScanFrame> b,
                Chain chain_b, std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs);

  const std::vector<int>& blocks() const override { return blocks_; }
  double cost(const Values& values, const RobustKernel& kernel) const override;
  void linearize(const Values& values, const RobustKernel& kernel, Linearization& out) const override;

  std::size_t size() const { return pairs_.size(); }
  /// Equivalent per-correspondence factors, for verification.
  std::vector<MatchFactor> expand() const;

 private:
  std::shared_ptr<const ScanFrame> a_, b_;
  Chain chain_a_, chain_b_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
  std::vector<int> blocks_;
};

}  // namespace lgcalib
