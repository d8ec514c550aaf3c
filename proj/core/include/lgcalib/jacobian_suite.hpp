#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lgcalib {

struct JacobianCheck {
  std::string factor;
  int configurations = 0;
  double max_error = 0.0;  // worst check_jacobian value over the configurations
};

/// Finite-difference check of every shipped factor at `configurations`
/// random configurations drawn from `seed`. Matching factors are checked with
/// the chain shapes used by the calibration stages.
std::vector<JacobianCheck> run_jacobian_suite(std::uint64_t seed = 59, int configurations = 100,
                                              double step = 1e-6);

}  // namespace lgcalib
