#include "lgcalib/joint.hpp"

#include <string>

#include "lgcalib/error.hpp"

namespace lgcalib {

std::vector<RigidTransform> JointState::sensor_extrinsics() const {
  return compose_final_extrinsics(t_vl_g, t_vl_l0, l0_lm);
}

JointState initial_joint_state(const KeyframeSet& keyframes, const RigidTransform& t_g_l0,
                               const std::vector<RigidTransform>& l0_lm, const BasePoseSet& base_poses,
                               const RigidTransform& t_vl_l0) {
  if (base_poses.size() != keyframes.size()) {
    throw CalibError(ErrorCode::kIncompleteStages, "base poses do not match the keyframes");
  }
  JointState s;
  s.t_vl_l0 = t_vl_l0;
  s.t_vl_g = t_vl_l0 * t_g_l0.inverse();
  s.l0_lm = l0_lm;
  s.gins = keyframes.gins;
  const RigidTransform l0_vl = t_vl_l0.inverse();
  for (const RigidTransform& p : base_poses.poses) s.vl.push_back(p * l0_vl);
  return s;
}

const char* family_name(FactorFamily family) {
  switch (family) {
    case FactorFamily::kHeight: return "height";
    case FactorFamily::kMatchGins: return "match_gins";
    case FactorFamily::kMatchVlidar: return "match_vlidar";
    case FactorFamily::kMotion: return "motion";
    case FactorFamily::kGinsPrior: return "gins_prior";
  }
  return "unknown";
}

std::size_t FactorGraph::free_variable_count() const {
  std::size_t n = 0;
  for (std::size_t v = 0; v < problem.num_variables(); ++v) n += !problem.variable(static_cast<int>(v)).fixed;
  return n;
}

double FamilyCosts::total() const {
  double t = 0.0;
  for (double v : values) t += v;
  return t;
}

FactorGraph assemble_graph(const KeyframeSet& keyframes, const JointState& state,
                           const std::vector<std::vector<std::shared_ptr<ScanFrame>>>& frames,
                           const JointOptions& options) {
  const std::size_t nk = keyframes.size();
  const std::size_t ns = keyframes.sensor_count();
  if (nk == 0) throw CalibError(ErrorCode::kIncompleteStages, "no keyframes to build the joint graph from");
  if (state.gins.size() != nk || state.vl.size() != nk || state.l0_lm.size() != ns || frames.size() != ns) {
    throw CalibError(ErrorCode::kIncompleteStages, "stage outputs do not match the keyframes");
  }
  for (const auto& f : frames) {
    if (f.size() != nk) throw CalibError(ErrorCode::kIncompleteStages, "missing prepared keyframes");
  }

  FactorGraph g;
  Problem& p = g.problem;
  g.vl_g = p.add_variable(VariableKind::kExtrinsic, state.t_vl_g, false, "T_VL_G");
  g.l0_lm.assign(ns, -1);
  for (std::size_t s = 0; s < ns; ++s) {
    if (s == keyframes.base) continue;
    g.l0_lm[s] = p.add_variable(VariableKind::kExtrinsic, state.l0_lm[s], false, "T_L0_" + keyframes.sensor_ids[s]);
  }
  for (std::size_t k = 0; k < nk; ++k) {
    g.gins.push_back(p.add_variable(VariableKind::kPose, state.gins[k], k == 0, "W_G[" + std::to_string(k) + "]"));
  }
  for (std::size_t k = 0; k < nk; ++k) {
    g.vl.push_back(p.add_variable(VariableKind::kPose, state.vl[k], k == 0, "W_VL[" + std::to_string(k) + "]"));
  }

  auto add = [&](FactorFamily family, std::shared_ptr<const CostTerm> term) {
    g.families[static_cast<std::size_t>(family)].push_back(term);
    p.add_term(std::move(term));
  };

  if (options.use_height) {
    add(FactorFamily::kHeight, std::make_shared<WeightedResidualTerm>(make_height_factor(g.vl_g, options.height),
                                                                      options.height.information()));
  }

  const Values values = p.values();
  const ChainElement vl_l0 = ChainElement::fixed(state.t_vl_l0);

  std::vector<FrameNode> gins_nodes;
  for (std::size_t k = 0; k < nk; ++k) {
    gins_nodes.push_back({frames[keyframes.base][k],
                          {ChainElement::var(g.gins[k]), ChainElement::var(g.vl_g, true), vl_l0},
                          keyframes.base, k});
  }
  MatchTermSet type2 = build_match_terms(
      gins_nodes, candidate_pairs(gins_nodes, values, options.matching.pair_radius_m), values, options.matching);
  for (auto& t : type2.terms) add(FactorFamily::kMatchGins, std::move(t));

  std::vector<FrameNode> vl_nodes;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t k = 0; k < nk; ++k) {
      Chain chain{ChainElement::var(g.vl[k]), vl_l0};
      if (g.l0_lm[s] >= 0) chain.push_back(ChainElement::var(g.l0_lm[s]));
      vl_nodes.push_back({frames[s][k], std::move(chain), s, k});
    }
  }
  MatchTermSet type3 =
      build_match_terms(vl_nodes, candidate_pairs(vl_nodes, values, options.matching.pair_radius_m), values,
                        options.matching);
  for (auto& t : type3.terms) add(FactorFamily::kMatchVlidar, std::move(t));
  g.correspondences = type2.correspondences + type3.correspondences;

  if (options.use_motion) {
    const Matrix6 info =
        pose_covariance(deg2rad(options.motion_sigma_rot_deg), options.motion_sigma_trans_m).inverse();
    for (std::size_t k = 0; k + 1 < nk; ++k) {
      const auto f = make_motion_factor({g.vl_g, g.gins[k], g.gins[k + 1], g.vl[k], g.vl[k + 1]});
      add(FactorFamily::kMotion, std::make_shared<WeightedResidualTerm>(f, info));
      ++g.motion_factors;
    }
  }

  const Matrix6 prior_info =
      pose_covariance(deg2rad(options.prior_sigma_rot_deg), options.prior_sigma_trans_m).inverse();
  for (std::size_t k = 1; k < nk; ++k) {
    add(FactorFamily::kGinsPrior,
        std::make_shared<WeightedResidualTerm>(make_prior_factor(g.gins[k], keyframes.gins[k]), prior_info));
  }
  return g;
}

FamilyCosts family_costs(const FactorGraph& graph, const Values& values, const RobustKernel& kernel) {
  FamilyCosts out;
  for (std::size_t f = 0; f < kFactorFamilyCount; ++f) {
    for (const auto& t : graph.families[f]) out.values[f] += t->cost(values, kernel);
  }
  return out;
}

JointState state_from_values(const FactorGraph& graph, const Values& values, const JointState& like) {
  JointState s = like;
  auto at = [&](int id) { return values[static_cast<std::size_t>(id)]; };
  s.t_vl_g = at(graph.vl_g);
  for (std::size_t m = 0; m < graph.l0_lm.size(); ++m) {
    if (graph.l0_lm[m] >= 0) s.l0_lm[m] = at(graph.l0_lm[m]);
  }
  for (std::size_t k = 0; k < graph.gins.size(); ++k) {
    s.gins[k] = at(graph.gins[k]);
    s.vl[k] = at(graph.vl[k]);
  }
  return s;
}

namespace {

bool moved(const RigidTransform& a, const RigidTransform& b, double trans_m, double rot_deg) {
  const ExtrinsicError e = extrinsic_error(a, b);
  return e.trans_m > trans_m || e.rot_deg > rot_deg;
}

}  // namespace

JointResult joint_optimize(const KeyframeSet& keyframes, const JointState& initial, const JointOptions& options) {
  if (keyframes.size() == 0) throw CalibError(ErrorCode::kIncompleteStages, "no keyframes");
  const std::size_t ns = keyframes.sensor_count();
  JointResult result;
  result.state = initial;

  std::vector<std::vector<std::shared_ptr<ScanFrame>>> frames(ns);
  for (int round = 0; round < options.rounds; ++round) {
    // Deskew with the extrinsics of the current state.
    const std::vector<RigidTransform> ext = result.state.sensor_extrinsics();
    for (std::size_t s = 0; s < ns; ++s) frames[s] = prepare_sensor_frames(keyframes, s, ext[s], options.frames);

    FactorGraph graph = assemble_graph(keyframes, result.state, frames, options);
    if (round == 0) result.initial_costs = family_costs(graph, graph.problem.values(), options.lm.kernel);
    result.report = lm_minimize(graph.problem, options.lm);
    result.correspondences = graph.correspondences;
    result.rounds = round + 1;
    const Values solved = graph.problem.values();
    result.final_costs = family_costs(graph, solved, options.lm.kernel);

    const JointState next = state_from_values(graph, solved, result.state);
    bool converged = !moved(next.t_vl_g, result.state.t_vl_g, options.converged_trans_m, options.converged_rot_deg);
    for (std::size_t s = 0; s < ns; ++s) {
      converged = converged &&
                  !moved(next.l0_lm[s], result.state.l0_lm[s], options.converged_trans_m, options.converged_rot_deg);
    }
    result.state = next;
    if (converged) break;
  }
  return result;
}

std::vector<RigidTransform> compose_final_extrinsics(const RigidTransform& t_vl_g, const RigidTransform& t_vl_l0,
                                                     const std::vector<RigidTransform>& l0_lm) {
  const RigidTransform g_l0 = (t_vl_l0.inverse() * t_vl_g).inverse();
  std::vector<RigidTransform> out;
  out.reserve(l0_lm.size());
  for (const RigidTransform& t : l0_lm) out.push_back(g_l0 * t);
  return out;
}

}  // namespace lgcalib
