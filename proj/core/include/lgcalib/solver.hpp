#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lgcalib/se3.hpp"

namespace lgcalib {

using Values = std::vector<RigidTransform>;

enum class VariableKind { kPose, kExtrinsic };

struct VariableBlock {
  VariableKind kind = VariableKind::kExtrinsic;
  RigidTransform value;
  bool fixed = false;
  std::string name;
};

struct RobustKernel {
  double delta = 0.1;
};

struct HuberValue {
  double rho = 0.0;
  double weight = 1.0;
};

/// rho(r) = r^2 inside delta, 2 delta r - delta^2 outside; weight = rho'(r) / (2r).
HuberValue huber_weight(double residual_norm, double delta);

/// Local normal-equation contribution of one cost term, laid out by the
/// term's blocks() in order (6 columns each). The term's cost F is modelled
/// around the current values as F + 2 g.d + d.H.d for a stacked tangent step d.
struct Linearization {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double cost = 0.0;
};

class CostTerm {
 public:
  virtual ~CostTerm() = default;
  /// Distinct variable ids touched by the term.
  virtual const std::vector<int>& blocks() const = 0;
  virtual double cost(const Values& values, const RobustKernel& kernel) const = 0;
  virtual void linearize(const Values& values, const RobustKernel& kernel,
                         Linearization& out) const = 0;
};

/// A residual with analytic Jacobians with respect to right-multiplicative
/// perturbations X * Exp(d) of each referenced block.
class ResidualFactor {
 public:
  virtual ~ResidualFactor() = default;
  virtual const std::vector<int>& blocks() const = 0;
  virtual int dimension() const = 0;
  virtual Eigen::VectorXd evaluate(const Values& values,
                                   std::vector<Eigen::MatrixXd>* jacobians) const = 0;
};

/// Quadratic cost r^T W r on a ResidualFactor; no robust kernel.
class WeightedResidualTerm : public CostTerm {
 public:
  WeightedResidualTerm(std::shared_ptr<const ResidualFactor> factor, Eigen::MatrixXd information);

  const std::vector<int>& blocks() const override { return factor_->blocks(); }
  double cost(const Values& values, const RobustKernel& kernel) const override;
  void linearize(const Values& values, const RobustKernel& kernel,
                 Linearization& out) const override;

  const ResidualFactor& factor() const { return *factor_; }
  const Eigen::MatrixXd& information() const { return information_; }

 private:
  std::shared_ptr<const ResidualFactor> factor_;
  Eigen::MatrixXd information_;
};

class Problem {
 public:
  int add_variable(VariableKind kind, const RigidTransform& value, bool fixed = false,
                   std::string name = {});
  void add_term(std::shared_ptr<const CostTerm> term);
  void clear_terms() { terms_.clear(); }

  std::size_t num_variables() const { return variables_.size(); }
  const VariableBlock& variable(int id) const { return variables_.at(static_cast<std::size_t>(id)); }
  void set_value(int id, const RigidTransform& value);
  void set_fixed(int id, bool fixed);
  Values values() const;
  void set_values(const Values& values);

  const std::vector<std::shared_ptr<const CostTerm>>& terms() const { return terms_; }

  double total_cost(const RobustKernel& kernel, int threads = 1) const;

 private:
  std::vector<VariableBlock> variables_;
  std::vector<std::shared_ptr<const CostTerm>> terms_;
};

struct LmOptions {
  RobustKernel kernel;
  int max_iterations = 100;
  double relative_cost_tolerance = 1e-9;
  double gradient_tolerance = 1e-10;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  /// Keeps damping on directions the data does not constrain, so rounding
  /// noise cannot push them far.
  double min_lambda = 1e-7;
  double max_lambda = 1e16;
  int threads = 1;
  /// Throw kDegenerateGeometry when cond(H) exceeds this at the first
  /// linearization. Disabled when <= 0.
  double max_condition = 0.0;
};

struct SolverReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::string termination_reason;
  double condition_number = 0.0;
};

/// Levenberg-Marquardt on the manifold with update X <- X * Exp(d). Accepted
/// steps never increase the cost. Throws kUnconstrainedVariable when a free
/// block has no cost term and kNumericalFailure on non-finite costs or
/// derivatives.
SolverReport lm_minimize(Problem& problem, const LmOptions& options = {});

/// Largest |analytic - numeric| / max(1, |numeric|) over all Jacobian
/// entries, with central differences along X * Exp(+-step e_k).
double check_jacobian(const ResidualFactor& factor, const Values& values, double step = 1e-6);

}  // namespace lgcalib
