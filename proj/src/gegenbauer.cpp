#include "vicon/gegenbauer.hpp"

#include <cmath>
#include <string>

#include "vicon/errors.hpp"

namespace vicon {
namespace {
constexpr double kDomainTolerance = 1e-9;
}

void GegenbauerTransform::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("gegenbauer: alpha must be positive");
  if (orders < 1) throw ConfigError("gegenbauer: need at least one polynomial order");
}

std::size_t GegenbauerTransform::output_dim() const noexcept {
  std::size_t dim = 0;
  for (bool e : expand) dim += e ? orders : 1;
  return dim;
}

void gegenbauer_values(double alpha, double x, std::span<double> values, std::span<double> derivatives) {
  const std::size_t k = values.size();
  const bool want_d = !derivatives.empty();
  if (want_d && derivatives.size() != k) throw DimensionError("gegenbauer: derivative buffer size");
  if (k == 0) return;
  values[0] = 1.0;
  if (want_d) derivatives[0] = 0.0;
  if (k == 1) return;
  values[1] = 2.0 * alpha * x;
  if (want_d) derivatives[1] = 2.0 * alpha;
  for (std::size_t n = 2; n < k; ++n) {
    const double nd = static_cast<double>(n);
    const double a = 2.0 * (nd + alpha - 1.0);
    const double b = nd + 2.0 * alpha - 2.0;
    values[n] = (a * x * values[n - 1] - b * values[n - 2]) / nd;
    if (want_d) {
      derivatives[n] = (a * (values[n - 1] + x * derivatives[n - 1]) - b * derivatives[n - 2]) / nd;
    }
  }
}

void gegenbauer_expand(const GegenbauerTransform& t, std::span<const double> coords, std::span<double> out,
                       std::span<double> derivatives) {
  t.validate();
  if (coords.size() % 4 != 0) throw DimensionError("gegenbauer: coordinates must be 4-vectors");
  const std::size_t batch = coords.size() / 4;
  const std::size_t dim = t.output_dim();
  if (out.size() != batch * dim) throw DimensionError("gegenbauer: output buffer size");
  const bool want_d = !derivatives.empty();
  if (want_d && derivatives.size() != out.size()) throw DimensionError("gegenbauer: derivative buffer size");
  for (std::size_t s = 0; s < batch; ++s) {
    std::size_t col = 0;
    for (std::size_t d = 0; d < 4; ++d) {
      const double x = coords[s * 4 + d];
      const std::size_t base = s * dim + col;
      if (!t.expand[d]) {
        out[base] = x;
        if (want_d) derivatives[base] = 1.0;
        ++col;
        continue;
      }
      if (!(std::abs(x) <= 1.0 + kDomainTolerance)) {
        throw DataError("gegenbauer: coordinate " + std::to_string(x) + " outside [-1, 1]");
      }
      gegenbauer_values(t.alpha, x, out.subspan(base, t.orders),
                        want_d ? derivatives.subspan(base, t.orders) : std::span<double>{});
      col += t.orders;
    }
  }
}

std::vector<double> gegenbauer_expand(const GegenbauerTransform& t, std::span<const double> coords) {
  std::vector<double> out(coords.size() / 4 * t.output_dim());
  gegenbauer_expand(t, coords, out);
  return out;
}

void gegenbauer_chain(const GegenbauerTransform& t, std::span<const double> expanded_grads,
                      std::span<const double> derivatives, std::span<double> coord_grads) {
  const std::size_t dim = t.output_dim();
  const std::size_t batch = coord_grads.size() / 4;
  if (expanded_grads.size() != batch * dim || derivatives.size() != batch * dim) {
    throw DimensionError("gegenbauer: chain buffer size");
  }
  for (std::size_t s = 0; s < batch; ++s) {
    std::size_t col = 0;
    for (std::size_t d = 0; d < 4; ++d) {
      const std::size_t width = t.expand[d] ? t.orders : 1;
      double g = 0.0;
      for (std::size_t n = 0; n < width; ++n) {
        g += expanded_grads[s * dim + col + n] * derivatives[s * dim + col + n];
      }
      coord_grads[s * 4 + d] = g;
      col += width;
    }
  }
}

}  // namespace vicon
