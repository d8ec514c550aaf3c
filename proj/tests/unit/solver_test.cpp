#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lgcalib/error.hpp"
#include "lgcalib/factors.hpp"
#include "lgcalib/solver.hpp"
#include "test_util.hpp"

namespace lgcalib {
namespace {

TEST(Huber, ClosedForms) {
  const auto zero = huber_weight(0.0, 0.1);
  EXPECT_EQ(zero.rho, 0.0);
  EXPECT_EQ(zero.weight, 1.0);
  const auto at = huber_weight(0.1, 0.1);
  EXPECT_DOUBLE_EQ(at.rho, 0.01);
  const auto out = huber_weight(0.2, 0.1);
  EXPECT_NEAR(out.rho, 0.03, 1e-15);
  EXPECT_NEAR(out.weight, 0.5, 1e-15);
}

TEST(Huber, ContinuityAtThreshold) {
  for (double delta : {0.1, 1.0, 3.7}) {
    const auto lo = huber_weight(delta - 1e-12, delta);
    const auto hi = huber_weight(delta + 1e-12, delta);
    EXPECT_NEAR(lo.rho, hi.rho, 1e-10);
    // rho'(r) = 2 r weight(r)
    EXPECT_NEAR(2 * (delta - 1e-12) * lo.weight, 2 * (delta + 1e-12) * hi.weight, 1e-10);
  }
}

TEST(Lm, PriorConvergesToTarget) {
  std::mt19937_64 rng(41);
  const RigidTransform target = testing::random_transform(rng, 1.0, 3.0);
  Problem problem;
  const int x = problem.add_variable(VariableKind::kPose, RigidTransform());
  problem.add_term(std::make_shared<WeightedResidualTerm>(make_prior_factor(x, target), Matrix6::Identity()));
  const SolverReport report = lm_minimize(problem);
  EXPECT_TRUE(report.converged);
  EXPECT_LE(report.iterations, 3);
  EXPECT_LT(report.final_cost, 1e-18);
  EXPECT_LT((problem.variable(x).value.inverse() * target).angle(), 1e-9);
}

TEST(Lm, AllFixedDoesNothing) {
  Problem problem;
  const int x = problem.add_variable(VariableKind::kPose, RigidTransform(), true);
  problem.add_term(std::make_shared<WeightedResidualTerm>(
      make_prior_factor(x, RigidTransform::from_translation(1, 0, 0)), Matrix6::Identity()));
  const SolverReport report = lm_minimize(problem);
  EXPECT_EQ(report.iterations, 0);
  EXPECT_DOUBLE_EQ(report.initial_cost, 1.0);
  EXPECT_DOUBLE_EQ(report.final_cost, 1.0);
}

TEST(Lm, UnconstrainedVariableIsReported) {
  Problem problem;
  const int x = problem.add_variable(VariableKind::kPose, RigidTransform());
  problem.add_variable(VariableKind::kExtrinsic, RigidTransform(), false, "lonely");
  problem.add_term(std::make_shared<WeightedResidualTerm>(make_prior_factor(x, RigidTransform()),
                                                          Matrix6::Identity()));
  try {
    lm_minimize(problem);
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnconstrainedVariable);
  }
}

TEST(Lm, NonFiniteCostIsNumericalFailure) {
  Problem problem;
  const int x = problem.add_variable(VariableKind::kPose, RigidTransform());
  problem.add_term(std::make_shared<WeightedResidualTerm>(
      make_prior_factor(x, RigidTransform::from_translation(std::nan(""), 0, 0)), Matrix6::Identity()));
  try {
    lm_minimize(problem);
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumericalFailure);
  }
}

// Two overlapping synthetic clouds (three orthogonal planes) offset by 0.2 m.
struct TwoClouds {
  std::shared_ptr<ScanFrame> a, b;
};

TwoClouds corner_clouds(const Vector3& offset) {
  PointCloud cloud;
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 25; ++j) {
      const double u = 0.2 * i, v = 0.2 * j;
      cloud.points.emplace_back(u, v, 0.0);
      cloud.points.emplace_back(u, 0.0, v + 0.1);
      cloud.points.emplace_back(0.0, u + 0.1, v + 0.1);
    }
  }
  CovarianceOptions opt;
  TwoClouds out;
  out.a = ScanFrame::build(cloud, opt);
  for (auto& p : cloud.points) p -= offset;
  out.b = ScanFrame::build(cloud, opt);
  return out;
}

TEST(Lm, MatchingRecoversKnownOffset) {
  const Vector3 offset(0.2, 0.0, 0.0);
  const TwoClouds clouds = corner_clouds(offset);
  Problem problem;
  // Frame b is placed by a variable; the truth is a translation by +offset.
  const int x = problem.add_variable(VariableKind::kPose, RigidTransform());
  AssociationOptions assoc;
  assoc.gate_m = 1.0;
  assoc.max_per_pair = 100000;
  for (int round = 0; round < 10; ++round) {
    problem.clear_terms();
    auto pairs = associate_frames(*clouds.a, RigidTransform(), *clouds.b, problem.variable(x).value, assoc);
    problem.add_term(std::make_shared<MatchPairTerm>(clouds.a, Chain{}, clouds.b,
                                                     Chain{ChainElement::var(x)}, std::move(pairs)));
    lm_minimize(problem);
  }
  const RigidTransform est = problem.variable(x).value;
  EXPECT_LT((est.translation() - offset).norm(), 1e-6);
  EXPECT_LT(est.angle(), 1e-6);

  // Grid oracle over the x offset at 1 mm resolution with fixed association.
  auto pairs = associate_frames(*clouds.a, RigidTransform(), *clouds.b, est, assoc);
  const MatchPairTerm term(clouds.a, Chain{}, clouds.b, Chain{ChainElement::fixed(RigidTransform())}, pairs);
  double best_x = 0.0, best_cost = 1e300;
  for (int i = 0; i <= 400; ++i) {
    const double tx = 0.001 * i;
    Chain chain{ChainElement::fixed(RigidTransform::from_translation(tx, 0, 0))};
    const MatchPairTerm probe(clouds.a, Chain{}, clouds.b, chain, pairs);
    const double c = probe.cost({}, RobustKernel{});
    if (c < best_cost) {
      best_cost = c;
      best_x = tx;
    }
  }
  EXPECT_NEAR(est.translation().x(), best_x, 1e-3);
  (void)term;
}

TEST(Lm, AcceptedStepsNeverIncreaseCost) {
  std::mt19937_64 rng(42);
  Problem problem;
  const int x = problem.add_variable(VariableKind::kPose, testing::random_transform(rng, 2.0, 3.0));
  for (int i = 0; i < 5; ++i) {
    problem.add_term(std::make_shared<WeightedResidualTerm>(
        make_prior_factor(x, testing::random_transform(rng, 0.3, 0.5)), Matrix6::Identity()));
  }
  double last = problem.total_cost(RobustKernel{});
  LmOptions opt;
  opt.max_iterations = 1;
  for (int it = 0; it < 20; ++it) {
    const SolverReport r = lm_minimize(problem, opt);
    EXPECT_LE(r.final_cost, last);
    last = r.final_cost;
  }
}

TEST(CheckJacobian, PriorFactorIsExactToRoundoff) {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 20; ++i) {
    Values values{testing::random_transform(rng, 2.0, 3.0)};
    const auto f = make_prior_factor(0, testing::random_transform(rng, 2.0, 3.0));
    EXPECT_LT(check_jacobian(*f, values), 1e-8);
  }
  // At the measurement the residual is linear in the local coordinate, so a
  // wide step has no truncation error and little roundoff.
  const RigidTransform m = testing::random_transform(rng, 2.0, 3.0);
  EXPECT_LT(check_jacobian(*make_prior_factor(0, m), Values{m}, 1e-4), 1e-10);
}

TEST(Lm, ReductionIsThreadIndependent) {
  std::mt19937_64 rng(44);
  auto build = [&](std::uint64_t seed) {
    std::mt19937_64 r(seed);
    auto p = std::make_unique<Problem>();
    for (int v = 0; v < 6; ++v) p->add_variable(VariableKind::kPose, testing::random_transform(r, 0.5, 1.0));
    for (int k = 0; k < 40; ++k) {
      const int a = static_cast<int>(r() % 6), b = static_cast<int>(r() % 6);
      Chain chain{ChainElement::var(a, true), ChainElement::var(b), ChainElement::fixed(testing::random_transform(r, 0.2, 0.2))};
      p->add_term(std::make_shared<WeightedResidualTerm>(std::make_shared<ProductLogFactor>(chain),
                                                         Matrix6::Identity()));
    }
    p->set_fixed(0, true);
    return p;
  };
  auto p1 = build(7), p4 = build(7);
  LmOptions o1, o4;
  o4.threads = 4;
  const auto r1 = lm_minimize(*p1, o1);
  const auto r4 = lm_minimize(*p4, o4);
  EXPECT_EQ(r1.final_cost, r4.final_cost);
  EXPECT_EQ(r1.iterations, r4.iterations);
  for (std::size_t v = 0; v < p1->num_variables(); ++v) {
    EXPECT_EQ(p1->variable(static_cast<int>(v)).value.matrix(), p4->variable(static_cast<int>(v)).value.matrix());
  }
  (void)rng;
}

}  // namespace
}  // namespace lgcalib
