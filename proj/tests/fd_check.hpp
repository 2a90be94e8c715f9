#pragma once

#include <cmath>
#include <functional>

namespace vf::testing {

enum class FdResult { kPass, kKink, kFail };

// Central finite-difference check at eps=1e-4 against an analytic gradient,
// 1e-3 relative tolerance. ReLU makes the loss piecewise linear in any single
// parameter; when the probe interval straddles a kink the large-eps difference
// is meaningless, so a second difference at eps/100 arbitrates: agreement
// there classifies the probe as a kink crossing (caller re-draws), while
// disagreement is a genuine failure.
inline FdResult fd_check(const std::function<double(double)>& loss_at, double param,
                         double analytic) {
  const auto central = [&](double eps) {
    return (loss_at(param + eps) - loss_at(param - eps)) / (2.0 * eps);
  };
  const auto close = [&](double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-12});
    return std::abs(analytic - fd) <= 1e-3 * denom || std::abs(analytic - fd) <= 1e-10;
  };
  if (close(central(1e-4))) return FdResult::kPass;
  if (close(central(1e-6))) return FdResult::kKink;
  return FdResult::kFail;
}

}  // namespace vf::testing
