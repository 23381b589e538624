#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace vicon {

// Per-coordinate expansion into Gegenbauer polynomials C_0..C_{K-1}, used by
// the polynomial-input baseline. Coordinates left unexpanded pass through as-is.
struct GegenbauerTransform {
  double alpha = 0.5;
  std::size_t orders = 32;  // K per expanded coordinate
  std::array<bool, 4> expand{true, true, true, true};

  void validate() const;
  std::size_t output_dim() const noexcept;
};

/// C_0^alpha(x) .. C_{orders-1}^alpha(x) by the three-term recurrence.
void gegenbauer_values(double alpha, double x, std::span<double> values,
                       std::span<double> derivatives = {});

/// Expands a batch of 4-vectors. When `derivatives` is non-empty it receives
/// d(expanded)/d(source coordinate) in the same layout as `out`.
void gegenbauer_expand(const GegenbauerTransform& t, std::span<const double> coords, std::span<double> out,
                       std::span<double> derivatives = {});

std::vector<double> gegenbauer_expand(const GegenbauerTransform& t, std::span<const double> coords);

/// Chains gradients w.r.t. the expanded vector back to the 4 source coordinates.
void gegenbauer_chain(const GegenbauerTransform& t, std::span<const double> expanded_grads,
                      std::span<const double> derivatives, std::span<double> coord_grads);

}  // namespace vicon
