#include "vicon/render_eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"

namespace vicon {

void RenderRequest::validate() const {
  if (width == 0 || height == 0) throw ConfigError("render: resolution must be at least 1x1");
  if (!std::isfinite(u) || !std::isfinite(v)) throw ConfigError("render: non-finite angular coordinate");
  if (!(x_max > x_min) || !(y_max > y_min) || !std::isfinite(x_max - x_min) || !std::isfinite(y_max - y_min)) {
    throw ConfigError("render: degenerate spatial range");
  }
}

double RenderRequest::x_at(std::size_t i) const {
  if (width == 1) return 0.5 * (x_min + x_max);
  return x_min + (x_max - x_min) * static_cast<double>(i) / static_cast<double>(width - 1);
}

double RenderRequest::y_at(std::size_t j) const {
  if (height == 1) return 0.5 * (y_min + y_max);
  return y_min + (y_max - y_min) * static_cast<double>(j) / static_cast<double>(height - 1);
}

RenderRequest lattice_request(const LightField& lf, Angular ang) {
  return {ang.u, ang.v, -lf.a(), lf.a(), -lf.a(), lf.a(), lf.width(), lf.height()};
}

Image render_view(const RadianceField& field, const RenderRequest& req) {
  req.validate();
  Image img(req.width, req.height, 3);
  // One row per task keeps the batch layout independent of the thread count.
  parallel_for(req.height, [&](std::size_t j) {
    std::vector<double> coords(4 * req.width);
    const double y = req.y_at(j);
    for (std::size_t i = 0; i < req.width; ++i) {
      coords[4 * i] = req.u;
      coords[4 * i + 1] = req.v;
      coords[4 * i + 2] = req.x_at(i);
      coords[4 * i + 3] = y;
    }
    std::span<double> row(img.data.data() + 3 * req.width * j, 3 * req.width);
    field.evaluate(coords, row);
    for (double& c : row) c = std::clamp(c, 0.0, 1.0);
  });
  return img;
}

Image render_extrapolated(const RadianceField& field, const RenderRequest& req) { return render_view(field, req); }

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": image dimensions differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.channels) + ")");
  }
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

double psnr(const Image& a, const Image& b, bool quantize8) {
  check_same(a, b, "psnr");
  if (a.data.empty()) throw DimensionError("psnr: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double x = a.data[i], y = b.data[i];
    if (quantize8) {
      x = to_byte(x) / 255.0;
      y = to_byte(y) / 255.0;
    }
    s += (x - y) * (x - y);
  }
  return psnr_from_mse(s / static_cast<double>(a.data.size()));
}

double psnr_masked(const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  check_same(a, b, "psnr");
  if (mask.size() != a.width * a.height) throw DimensionError("psnr: mask size mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (std::size_t c = 0; c < a.channels; ++c) {
      const double d = a.data[p * a.channels + c] - b.data[p * a.channels + c];
      s += d * d;
      ++n;
    }
  }
  if (n == 0) throw DimensionError("psnr: empty mask");
  return psnr_from_mse(s / static_cast<double>(n));
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b, "ssim");
  constexpr int kRadius = 5;
  constexpr std::size_t kWin = 2 * kRadius + 1;
  if (a.width < kWin || a.height < kWin) throw DimensionError("ssim: image smaller than the 11x11 window");
  std::array<double, kWin> g{};
  double gs = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    g[i + kRadius] = std::exp(-0.5 * i * i / (1.5 * 1.5));
    gs += g[i + kRadius];
  }
  for (double& x : g) x /= gs;
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const std::size_t w = a.width, h = a.height, ow = w - kWin + 1, oh = h - kWin + 1;
  double total = 0.0;
  // Horizontal then vertical pass of the five moment images.
  std::vector<std::array<double, 5>> horiz(ow * h);
  for (std::size_t c = 0; c < a.channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::array<double, 5> acc{};
        for (std::size_t k = 0; k < kWin; ++k) {
          const double p = a.at(x + k, y, c), q = b.at(x + k, y, c);
          acc[0] += g[k] * p;
          acc[1] += g[k] * q;
          acc[2] += g[k] * p * p;
          acc[3] += g[k] * q * q;
          acc[4] += g[k] * p * q;
        }
        horiz[y * ow + x] = acc;
      }
    }
    double sum = 0.0;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::array<double, 5> m{};
        for (std::size_t k = 0; k < kWin; ++k) {
          const auto& hv = horiz[(y + k) * ow + x];
          for (int i = 0; i < 5; ++i) m[i] += g[k] * hv[i];
        }
        const double vx = m[2] - m[0] * m[0], vy = m[3] - m[1] * m[1], cxy = m[4] - m[0] * m[1];
        sum += ((2.0 * m[0] * m[1] + C1) * (2.0 * cxy + C2)) /
               ((m[0] * m[0] + m[1] * m[1] + C1) * (vx + vy + C2));
      }
    }
    total += sum / static_cast<double>(ow * oh);
  }
  return total / static_cast<double>(a.channels);
}

MetricReport evaluate_pair(const Image& a, const Image& b, bool quantize8) {
  return {psnr(a, b, quantize8), ssim(a, b)};
}

std::string metric_json(const MetricReport& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "{\"psnr\": %.6f, \"ssim\": %.6f}", m.psnr, m.ssim);
  return buf;
}

}  // namespace vicon
