#ifndef TASS_GRADCHECK_HPP
#define TASS_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace tass {

struct OpCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Finite-difference verification of every differentiable operation plus the
/// end-to-end composite (d=4, T=2, h=w=2, heads=2), repeated across
/// `n_seeds` seeds. Each row reports the worst relative error seen.
std::vector<OpCheckResult> run_gradcheck(std::uint64_t base_seed, double tol,
                                         double step = 1e-5,
                                         std::size_t n_seeds = 10);

}  // namespace tass

#endif  // TASS_GRADCHECK_HPP
