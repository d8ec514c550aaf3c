#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "lgcalib/calib_ml.hpp"
#include "lgcalib/factors.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/solver.hpp"

namespace lgcalib {

/// Values of the unified graph.
struct JointState {
  RigidTransform t_vl_g;
  RigidTransform t_vl_l0;                 // constant during the solve
  std::vector<RigidTransform> l0_lm;      // per sensor, identity for the base
  std::vector<RigidTransform> gins;       // W_G per keyframe
  std::vector<RigidTransform> vl;         // W_VL per keyframe

  /// T_G_L0 and T_G_Lm implied by the state.
  std::vector<RigidTransform> sensor_extrinsics() const;
};

/// X = T_VL_L0 * T_G_L0^-1, GINS poses at their measurements and
/// W_VL_k = W_L0_k * T_VL_L0^-1.
JointState initial_joint_state(const KeyframeSet& keyframes, const RigidTransform& t_g_l0,
                               const std::vector<RigidTransform>& l0_lm, const BasePoseSet& base_poses,
                               const RigidTransform& t_vl_l0);

struct JointOptions {
  FrameOptions frames;
  MatchingOptions matching;
  LmOptions lm;
  int rounds = 3;
  double converged_trans_m = 1e-4;
  double converged_rot_deg = 0.01;
  HeightObservation height;
  bool use_height = true;
  bool use_motion = true;
  double prior_sigma_rot_deg = 0.2;
  double prior_sigma_trans_m = 0.05;
  double motion_sigma_rot_deg = 0.001;
  double motion_sigma_trans_m = 0.0002;
};

enum class FactorFamily { kHeight, kMatchGins, kMatchVlidar, kMotion, kGinsPrior };
inline constexpr std::size_t kFactorFamilyCount = 5;
const char* family_name(FactorFamily family);

struct FactorGraph {
  Problem problem;
  int vl_g = -1;
  std::vector<int> l0_lm;  // -1 for the base sensor
  std::vector<int> gins;
  std::vector<int> vl;
  std::vector<std::vector<std::shared_ptr<const CostTerm>>> families{kFactorFamilyCount};
  std::size_t correspondences = 0;
  std::size_t motion_factors = 0;

  std::size_t free_variable_count() const;
};

/// Per-family robust costs; total() equals the problem cost.
struct FamilyCosts {
  double values[kFactorFamilyCount] = {};

  double operator[](FactorFamily f) const { return values[static_cast<std::size_t>(f)]; }
  double total() const;
};

/// frames[s][k] are the prepared keyframes of sensor s. Throws
/// kIncompleteStages when there are no keyframes or the state does not match
/// them.
FactorGraph assemble_graph(const KeyframeSet& keyframes, const JointState& state,
                           const std::vector<std::vector<std::shared_ptr<ScanFrame>>>& frames,
                           const JointOptions& options = {});

FamilyCosts family_costs(const FactorGraph& graph, const Values& values, const RobustKernel& kernel);

JointState state_from_values(const FactorGraph& graph, const Values& values, const JointState& like);

struct JointResult {
  JointState state;
  SolverReport report;  // last round
  int rounds = 0;
  std::size_t correspondences = 0;
  FamilyCosts initial_costs;  // first round, before LM
  FamilyCosts final_costs;    // last round, after LM
};

JointResult joint_optimize(const KeyframeSet& keyframes, const JointState& initial,
                           const JointOptions& options = {});

/// T_G_L0 = (T_L0_VL * T_VL_G)^-1 and T_G_Lm = T_G_L0 * T_L0_Lm.
std::vector<RigidTransform> compose_final_extrinsics(const RigidTransform& t_vl_g, const RigidTransform& t_vl_l0,
                                                     const std::vector<RigidTransform>& l0_lm);

}  // namespace lgcalib
