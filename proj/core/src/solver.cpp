#include "lgcalib/solver.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lgcalib/error.hpp"
#include "lgcalib/parallel.hpp"

namespace lgcalib {

HuberValue huber_weight(double residual_norm, double delta) {
  const double r = residual_norm;
  if (r <= delta) return {r * r, 1.0};
  return {2.0 * delta * r - delta * delta, delta / r};
}

WeightedResidualTerm::WeightedResidualTerm(std::shared_ptr<const ResidualFactor> factor,
                                           Eigen::MatrixXd information)
    : factor_(std::move(factor)), information_(std::move(information)) {}

double WeightedResidualTerm::cost(const Values& values, const RobustKernel&) const {
  const Eigen::VectorXd r = factor_->evaluate(values, nullptr);
  return r.dot(information_ * r);
}

void WeightedResidualTerm::linearize(const Values& values, const RobustKernel&,
                                     Linearization& out) const {
  std::vector<Eigen::MatrixXd> jac;
  const Eigen::VectorXd r = factor_->evaluate(values, &jac);
  const auto nb = static_cast<Eigen::Index>(jac.size());
  Eigen::MatrixXd J(r.size(), 6 * nb);
  for (Eigen::Index b = 0; b < nb; ++b) J.middleCols(6 * b, 6) = jac[static_cast<std::size_t>(b)];
  const Eigen::MatrixXd WJ = information_ * J;
  out.H.noalias() = J.transpose() * WJ;
  out.g.noalias() = WJ.transpose() * r;
  out.cost = r.dot(information_ * r);
}

int Problem::add_variable(VariableKind kind, const RigidTransform& value, bool fixed,
                          std::string name) {
  variables_.push_back(VariableBlock{kind, value, fixed, std::move(name)});
  return static_cast<int>(variables_.size() - 1);
}

void Problem::add_term(std::shared_ptr<const CostTerm> term) {
  for (int b : term->blocks()) {
    if (b < 0 || static_cast<std::size_t>(b) >= variables_.size()) {
      throw CalibError(ErrorCode::kOutOfRange, "cost term references unknown variable " + std::to_string(b));
    }
  }
  terms_.push_back(std::move(term));
}

void Problem::set_value(int id, const RigidTransform& value) {
  variables_.at(static_cast<std::size_t>(id)).value = value;
}

void Problem::set_fixed(int id, bool fixed) { variables_.at(static_cast<std::size_t>(id)).fixed = fixed; }

Values Problem::values() const {
  Values out;
  out.reserve(variables_.size());
  for (const auto& v : variables_) out.push_back(v.value);
  return out;
}

void Problem::set_values(const Values& values) {
  for (std::size_t i = 0; i < variables_.size(); ++i) variables_[i].value = values[i];
}

namespace {

double sum_costs(const std::vector<std::shared_ptr<const CostTerm>>& terms, const Values& values,
                 const RobustKernel& kernel, int threads) {
  std::vector<double> slots(terms.size(), 0.0);
  parallel_for(terms.size(), threads, [&](std::size_t i) { slots[i] = terms[i]->cost(values, kernel); });
  double total = 0.0;
  for (double c : slots) total += c;
  return total;
}

}  // namespace

double Problem::total_cost(const RobustKernel& kernel, int threads) const {
  return sum_costs(terms_, values(), kernel, threads);
}

SolverReport lm_minimize(Problem& problem, const LmOptions& options) {
  SolverReport report;
  const auto& terms = problem.terms();
  const std::size_t nv = problem.num_variables();

  std::vector<int> column(nv, -1);
  int n_free = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    if (!problem.variable(static_cast<int>(v)).fixed) column[v] = 6 * n_free++;
  }

  Values values = problem.values();
  report.initial_cost = sum_costs(terms, values, options.kernel, options.threads);
  report.final_cost = report.initial_cost;
  if (!std::isfinite(report.initial_cost)) {
    throw CalibError(ErrorCode::kNumericalFailure, "initial cost is not finite");
  }
  if (n_free == 0) {
    report.converged = true;
    report.termination_reason = "no free variables";
    return report;
  }

  std::vector<bool> touched(nv, false);
  for (const auto& t : terms) {
    for (int b : t->blocks()) touched[static_cast<std::size_t>(b)] = true;
  }
  for (std::size_t v = 0; v < nv; ++v) {
    if (column[v] >= 0 && !touched[v]) {
      const auto& var = problem.variable(static_cast<int>(v));
      throw CalibError(ErrorCode::kUnconstrainedVariable,
                       "variable " + std::to_string(v) + (var.name.empty() ? "" : " (" + var.name + ")") +
                           " has no cost term");
    }
  }

  const Eigen::Index n = 6 * n_free;
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd g(n);
  std::vector<Linearization> local(terms.size());
  double cost = report.initial_cost;
  double lambda = options.initial_lambda;

  auto assemble = [&]() {
    parallel_for(terms.size(), options.threads,
                 [&](std::size_t i) { terms[i]->linearize(values, options.kernel, local[i]); });
    H.setZero();
    g.setZero();
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const auto& blocks = terms[i]->blocks();
      const Linearization& L = local[i];
      for (std::size_t a = 0; a < blocks.size(); ++a) {
        const int ca = column[static_cast<std::size_t>(blocks[a])];
        if (ca < 0) continue;
        g.segment<6>(ca) += L.g.segment<6>(6 * static_cast<Eigen::Index>(a));
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          const int cb = column[static_cast<std::size_t>(blocks[b])];
          if (cb < 0) continue;
          H.block<6, 6>(ca, cb) +=
              L.H.block<6, 6>(6 * static_cast<Eigen::Index>(a), 6 * static_cast<Eigen::Index>(b));
        }
      }
    }
    if (!H.allFinite() || !g.allFinite()) {
      throw CalibError(ErrorCode::kNumericalFailure, "non-finite normal equations");
    }
  };

  bool first = true;
  for (;;) {
    assemble();
    if (first && options.max_condition > 0.0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
      const double lo = std::max(eig.eigenvalues().minCoeff(), 0.0);
      const double hi = eig.eigenvalues().maxCoeff();
      report.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
      if (report.condition_number > options.max_condition) {
        throw CalibError(ErrorCode::kDegenerateGeometry,
                         "normal equations condition number " + std::to_string(report.condition_number) +
                             " exceeds " + std::to_string(options.max_condition));
      }
    }
    first = false;

    if (g.norm() < options.gradient_tolerance) {
      report.converged = true;
      report.termination_reason = "gradient tolerance";
      break;
    }
    if (report.iterations >= options.max_iterations) {
      report.termination_reason = "max iterations";
      break;
    }

    // Damping scale is averaged over each rotation and translation triple, so
    // a direction along which the cost is flat (a gauge or unobservable
    // translation) stays an eigenvector of the damped system and receives no
    // step.
    const double diag_floor = 1e-9 * std::max(1.0, H.diagonal().maxCoeff());
    Eigen::VectorXd damping(n);
    for (Eigen::Index i = 0; i < n; i += 3) {
      damping.segment<3>(i).setConstant(std::max(H.diagonal().segment<3>(i).mean(), diag_floor));
    }
    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      Eigen::MatrixXd A = H;
      for (Eigen::Index i = 0; i < n; ++i) A(i, i) += lambda * damping[i];
      Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      Eigen::VectorXd step = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        lambda *= options.lambda_up;
        if (lambda > options.max_lambda) {
          stop = true;
          report.termination_reason = "damping overflow";
          break;
        }
        continue;
      }
      Values candidate = values;
      for (std::size_t v = 0; v < nv; ++v) {
        if (column[v] < 0) continue;
        candidate[v] = candidate[v] * exp_map(step.segment<6>(column[v]));
      }
      double new_cost = std::numeric_limits<double>::infinity();
      try {
        new_cost = sum_costs(terms, candidate, options.kernel, options.threads);
      } catch (const CalibError& e) {
        if (e.code() != ErrorCode::kAngleNearPi) throw;
      }
      if (std::isfinite(new_cost) && new_cost <= cost) {
        const double change = cost - new_cost;
        values = std::move(candidate);
        ++report.iterations;
        lambda = std::max(lambda * options.lambda_down, options.min_lambda);
        accepted = true;
        const double rel = cost > 0.0 ? change / cost : 0.0;
        cost = new_cost;
        if (rel < options.relative_cost_tolerance) {
          stop = true;
          report.converged = true;
          report.termination_reason = "relative cost change";
        }
      } else {
        lambda *= options.lambda_up;
        if (lambda > options.max_lambda) {
          stop = true;
          report.converged = true;
          report.termination_reason = "no further decrease";
          break;
        }
      }
    }
    if (stop) break;
  }

  problem.set_values(values);
  report.final_cost = cost;
  return report;
}

double check_jacobian(const ResidualFactor& factor, const Values& values, double step) {
  std::vector<Eigen::MatrixXd> analytic;
  factor.evaluate(values, &analytic);
  const auto& blocks = factor.blocks();
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto id = static_cast<std::size_t>(blocks[b]);
    for (int k = 0; k < 6; ++k) {
      Twist6 e = Twist6::Zero();
      e[k] = step;
      Values plus = values, minus = values;
      plus[id] = values[id] * exp_map(e);
      minus[id] = values[id] * exp_map(-e);
      const Eigen::VectorXd numeric =
          (factor.evaluate(plus, nullptr) - factor.evaluate(minus, nullptr)) / (2.0 * step);
      for (Eigen::Index r = 0; r < numeric.size(); ++r) {
        const double err = std::abs(analytic[b](r, k) - numeric[r]) / std::max(1.0, std::abs(numeric[r]));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace lgcalib
