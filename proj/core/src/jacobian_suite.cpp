#include "lgcalib/jacobian_suite.hpp"

#include <algorithm>
#include <random>

#include "lgcalib/factors.hpp"

namespace lgcalib {
namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Vector3 vector(double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng_), u(rng_), u(rng_)};
  }

  RigidTransform transform(double max_angle, double max_trans) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vector3 axis(n(rng_), n(rng_), n(rng_));
    axis.normalize();
    std::uniform_real_distribution<double> ang(0.0, max_angle);
    Twist6 xi;
    xi.head<3>() = axis * ang(rng_);
    xi.tail<3>() = vector(max_trans);
    return exp_map(xi);
  }

  Matrix3 spd() {
    const Matrix3 r = transform(3.0, 0.0).rotation().toRotationMatrix();
    std::uniform_real_distribution<double> u(1e-3, 1.0);
    const Vector3 ev(u(rng_), u(rng_), u(rng_));
    return r * ev.asDiagonal() * r.transpose();
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<JacobianCheck> run_jacobian_suite(std::uint64_t seed, int configurations, double step) {
  Sampler s(seed);
  std::vector<JacobianCheck> out = {{"prior", configurations, 0.0},
                                    {"height", configurations, 0.0},
                                    {"motion", configurations, 0.0},
                                    {"match_lidar_gins", configurations, 0.0},
                                    {"match_multi_lidar", configurations, 0.0},
                                    {"match_joint_gins", configurations, 0.0},
                                    {"match_joint_vlidar", configurations, 0.0}};
  auto record = [&](std::size_t i, double e) { out[i].max_error = std::max(out[i].max_error, e); };
  const HeightObservation height;
  for (int c = 0; c < configurations; ++c) {
    Values v;
    for (int k = 0; k < 6; ++k) v.push_back(s.transform(1.0, 3.0));

    record(0, check_jacobian(*make_prior_factor(0, s.transform(1.0, 3.0)), v, step));
    record(1, check_jacobian(*make_height_factor(1, height), v, step));

    // Near-consistent motion keeps the log away from its cut at pi.
    Values mv = v;
    mv[3] = mv[1] * mv[0].inverse() * s.transform(0.3, 0.3);
    mv[4] = mv[2] * mv[0].inverse() * s.transform(0.3, 0.3);
    record(2, check_jacobian(*make_motion_factor({0, 1, 2, 3, 4}), mv, step));

    using E = ChainElement;
    auto match = [&](Chain a, Chain b) {
      const MatchFactor f(std::move(a), s.vector(10.0), s.spd(), std::move(b), s.vector(10.0), s.spd());
      return check_jacobian(f, v, step);
    };
    // LiDAR-GINS: GINS pose constant, shared extrinsic variable.
    record(3, match({E::fixed(s.transform(3.0, 20.0)), E::var(0)}, {E::fixed(s.transform(3.0, 20.0)), E::var(0)}));
    // Multi-LiDAR: base pose times sensor extrinsic.
    record(4, match({E::var(1), E::var(2)}, {E::var(3), E::fixed(s.transform(3.0, 2.0))}));
    // Joint, GINS side: G_i * X^-1 * T_VL_L0 * T_L0_Lm.
    record(5, match({E::var(1), E::var(0, true), E::fixed(s.transform(0.5, 2.0)), E::var(4)},
                    {E::var(2), E::var(0, true), E::fixed(s.transform(0.5, 2.0))}));
    // Joint, VLiDAR side: V_i * T_VL_L0 * T_L0_Lm.
    record(6, match({E::var(3), E::fixed(s.transform(0.5, 2.0)), E::var(5)},
                    {E::var(4), E::fixed(s.transform(0.5, 2.0))}));
  }
  return out;
}

}  // namespace lgcalib
