#pragma once

// A radiance field maps (u, v, x, y) to RGB. The losses are written against
// this interface so they run unchanged on the trained network and on the
// analytic ground-truth scene.

#include <cstdint>
#include <span>

#include "vicon/gegenbauer.hpp"
#include "vicon/siren.hpp"

namespace vicon {

class RadianceField {
 public:
  virtual ~RadianceField() = default;

  /// coords: 4 per sample; rgb: 3 per sample.
  virtual void evaluate(std::span<const double> coords, std::span<double> rgb) const = 0;

  /// grads[4s + k] = sum_c upstream[3s + c] * dF_c/dcoord_k.
  virtual void input_gradients(std::span<const double> coords, std::span<const double> upstream,
                               std::span<double> grads) const = 0;
};

class NetworkField final : public RadianceField {
 public:
  explicit NetworkField(const SirenNetwork& net, const GegenbauerTransform* transform = nullptr);

  void evaluate(std::span<const double> coords, std::span<double> rgb) const override;
  void input_gradients(std::span<const double> coords, std::span<const double> upstream,
                       std::span<double> grads) const override;

  /// Parameter gradients for a loss defined through `upstream_fn` on raw coordinates.
  GradientBundle parameter_pass(std::span<const double> coords, const UpstreamFn& upstream_fn) const;

  const SirenNetwork& network() const noexcept { return net_; }

 private:
  std::vector<double> network_inputs(std::span<const double> coords, std::vector<double>* derivs) const;

  const SirenNetwork& net_;
  const GegenbauerTransform* transform_;
};

/// Residuals with |r| at or below this are treated as exact zeros (subgradient 0).
inline constexpr double kResidualDeadZone = 1e-12;

/// Mean-over-channels absolute error for a batch of RGB samples.
/// Returns sum_s weight_s * mean_c |out - target| where weight_s = mask[s] (1 when mask is empty),
/// and writes upstream[3s + c] = scale * weight_s * sign(out - target) / 3.
double mae_with_upstream(std::span<const double> outputs, std::span<const double> targets,
                         std::span<const std::uint8_t> mask, double scale, std::span<double> upstream);

}  // namespace vicon
