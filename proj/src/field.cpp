#include "vicon/field.hpp"

#include <cmath>

#include "vicon/errors.hpp"

namespace vicon {

NetworkField::NetworkField(const SirenNetwork& net, const GegenbauerTransform* transform)
    : net_(net), transform_(transform) {
  const std::size_t expected = transform_ != nullptr ? transform_->output_dim() : 4;
  if (net_.input_dim() != expected) {
    throw DimensionError("field: network input_dim " + std::to_string(net_.input_dim()) +
                         " does not match coordinate pipeline width " + std::to_string(expected));
  }
  if (net_.output_dim() != 3) throw DimensionError("field: network must output RGB");
}

std::vector<double> NetworkField::network_inputs(std::span<const double> coords,
                                                 std::vector<double>* derivs) const {
  if (coords.size() % 4 != 0) throw DimensionError("field: coordinates must be 4-vectors");
  if (transform_ == nullptr) return {coords.begin(), coords.end()};
  std::vector<double> out(coords.size() / 4 * transform_->output_dim());
  if (derivs != nullptr) {
    derivs->resize(out.size());
    gegenbauer_expand(*transform_, coords, out, *derivs);
  } else {
    gegenbauer_expand(*transform_, coords, out);
  }
  return out;
}

void NetworkField::evaluate(std::span<const double> coords, std::span<double> rgb) const {
  if (transform_ == nullptr) {
    forward(net_, coords, rgb);
    return;
  }
  const auto inputs = network_inputs(coords, nullptr);
  forward(net_, inputs, rgb);
}

void NetworkField::input_gradients(std::span<const double> coords, std::span<const double> upstream,
                                   std::span<double> grads) const {
  if (grads.size() != coords.size()) throw DimensionError("field: gradient buffer size");
  if (transform_ == nullptr) {
    const auto g = backward(net_, coords, upstream, GradTargets::Inputs);
    std::copy(g.input_grads.begin(), g.input_grads.end(), grads.begin());
    return;
  }
  std::vector<double> derivs;
  const auto inputs = network_inputs(coords, &derivs);
  const auto g = backward(net_, inputs, upstream, GradTargets::Inputs);
  gegenbauer_chain(*transform_, g.input_grads, derivs, grads);
}

GradientBundle NetworkField::parameter_pass(std::span<const double> coords, const UpstreamFn& upstream_fn) const {
  if (transform_ == nullptr) return forward_backward(net_, coords, upstream_fn, GradTargets::Params);
  const auto inputs = network_inputs(coords, nullptr);
  return forward_backward(net_, inputs, upstream_fn, GradTargets::Params);
}

double mae_with_upstream(std::span<const double> outputs, std::span<const double> targets,
                         std::span<const std::uint8_t> mask, double scale, std::span<double> upstream) {
  const std::size_t n = outputs.size() / 3;
  if (outputs.size() != targets.size() || upstream.size() != outputs.size() || outputs.size() % 3 != 0 ||
      (!mask.empty() && mask.size() != n)) {
    throw DimensionError("mae: buffer size mismatch");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!mask.empty() && mask[s] == 0) {
      for (int c = 0; c < 3; ++c) upstream[3 * s + c] = 0.0;
      continue;
    }
    double sample = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double r = outputs[3 * s + c] - targets[3 * s + c];
      if (!std::isfinite(r)) throw NonFiniteError("mae: non-finite network output at sample " + std::to_string(s));
      sample += std::abs(r);
      const double sign = std::abs(r) <= kResidualDeadZone ? 0.0 : (r > 0.0 ? 1.0 : -1.0);
      upstream[3 * s + c] = scale * sign / 3.0;
    }
    total += sample / 3.0;
  }
  return total;
}

}  // namespace vicon
