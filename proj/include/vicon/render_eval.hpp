#pragma once

// Rendering the field on coordinate lattices and image-quality metrics.

#include <cstdint>
#include <span>
#include <string>

#include "vicon/field.hpp"
#include "vicon/image_io.hpp"
#include "vicon/lightfield.hpp"

namespace vicon {

struct RenderRequest {
  double u = 0.0;
  double v = 0.0;
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  std::size_t width = 64;
  std::size_t height = 64;

  void validate() const;
  double x_at(std::size_t i) const;
  double y_at(std::size_t j) const;
};

/// Request matching a light field's own pixel lattice at angular (u, v).
RenderRequest lattice_request(const LightField& lf, Angular ang);

/// Evaluates the field on the lattice and clamps to [0, 1].
Image render_view(const RadianceField& field, const RenderRequest& req);
/// render_view for ranges wider than the trained frame. Pixels outside it are only
/// meaningful where out-of-frame correspondence samples were trained; a range of
/// exactly [-a, a] reduces to render_view.
Image render_extrapolated(const RadianceField& field, const RenderRequest& req);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all pixels and channels, capped at 99 dB.
double psnr(const Image& a, const Image& b, bool quantize8 = false);
/// PSNR restricted to pixels with mask != 0 (mask is width x height).
double psnr_masked(const Image& a, const Image& b, std::span<const std::uint8_t> mask);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over channels.
double ssim(const Image& a, const Image& b);

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
};

MetricReport evaluate_pair(const Image& a, const Image& b, bool quantize8 = false);
std::string metric_json(const MetricReport& m);

}  // namespace vicon
