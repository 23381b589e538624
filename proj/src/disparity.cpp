#include "vicon/disparity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vicon/correspondence.hpp"
#include "vicon/errors.hpp"

namespace vicon {

void StereoConfig::validate() const {
  if (window < 3 || window % 2 == 0) throw ConfigError("stereo: window must be odd and >= 3");
  if (!(d_max >= 1.0) || !std::isfinite(d_max)) throw ConfigError("stereo: d_max must be >= 1");
  if (!(lr_threshold >= 0.0)) throw ConfigError("stereo: lr_threshold must be >= 0");
}

namespace {

Image flip_horizontal(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image transpose(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(x, y, c);
    }
  }
  return out;
}

DisparityMap flip_map(const DisparityMap& d) {
  DisparityMap out = d;
  for (std::size_t y = 0; y < d.height; ++y) {
    for (std::size_t x = 0; x < d.width; ++x) out.values[y * d.width + d.width - 1 - x] = d.at(x, y);
  }
  return out;
}

template <typename T>
std::vector<T> transpose_layer(const std::vector<T>& v, std::size_t w, std::size_t h) {
  std::vector<T> out(v.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[x * h + y] = v[y * w + x];
  }
  return out;
}

// Distance from v to the range spanned by img around x within half a pixel.
double half_interval_distance(const Image& img, std::size_t x, std::size_t y, std::size_t c, double v) {
  const double mid = img.at(x, y, c);
  const double lo_n = x > 0 ? 0.5 * (mid + img.at(x - 1, y, c)) : mid;
  const double hi_n = x + 1 < img.width ? 0.5 * (mid + img.at(x + 1, y, c)) : mid;
  const double lo = std::min({mid, lo_n, hi_n}), hi = std::max({mid, lo_n, hi_n});
  return std::max({0.0, v - hi, lo - v});
}

}  // namespace

DisparityMap block_match(const Image& left, const Image& right, const StereoConfig& cfg) {
  cfg.validate();
  if (!left.same_shape(right)) throw DimensionError("block_match: image shapes differ");
  const std::size_t w = left.width, h = left.height, ch = left.channels;
  const long r = static_cast<long>(cfg.window / 2);
  const long lw = static_cast<long>(w), lh = static_cast<long>(h);
  const long nd = static_cast<long>(std::floor(cfg.d_max)) + 1;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(w * h * static_cast<std::size_t>(nd), inf);
  std::vector<double> integral((w + 1) * (h + 1));
  // Windows are clipped to the image and to the columns where the shifted
  // window stays inside the right image; costs are normalized by area.
  for (long d = 0; d < nd && d < lw; ++d) {
    std::fill(integral.begin(), integral.end(), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
      double row = 0.0;
      for (std::size_t x = 0; x < w; ++x) {
        double diff = 0.0;
        if (static_cast<long>(x) >= d) {
          const std::size_t xr = x - static_cast<std::size_t>(d);
          for (std::size_t c = 0; c < ch; ++c) {
            if (!cfg.sampling_insensitive) {
              diff += std::abs(left.at(x, y, c) - right.at(xr, y, c));
              continue;
            }
            diff += std::min(half_interval_distance(left, x, y, c, right.at(xr, y, c)),
                             half_interval_distance(right, xr, y, c, left.at(x, y, c)));
          }
        }
        row += diff;
        integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
      }
    }
    auto box = [&](long cx, long cy) {
      const auto y0 = static_cast<std::size_t>(std::max(0L, cy - r));
      const auto y1 = static_cast<std::size_t>(std::min(lh, cy + r + 1));
      const auto x0 = static_cast<std::size_t>(std::max(d, cx - r));
      const auto x1 = static_cast<std::size_t>(std::min(lw, cx + r + 1));
      if (x1 <= x0 || y1 <= y0) return inf;
      const double s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] +
                       integral[y0 * (w + 1) + x0];
      return s / static_cast<double>((x1 - x0) * (y1 - y0));
    };
    // Off-centre windows only count when they are not clipped.
    auto whole = [&](long cx, long cy) { return cx - r >= d && cx + r < lw && cy - r >= 0 && cy + r < lh; };
    const long shift = cfg.shiftable ? r : 0;
    const long stride = std::max(1L, r);
    for (long y = 0; y < lh; ++y) {
      for (long x = d; x < lw; ++x) {
        double best = box(x, y);
        for (long oy = -shift; oy <= shift; oy += stride) {
          for (long ox = -shift; ox <= shift; ox += stride) {
            if ((ox != 0 || oy != 0) && whole(x + ox, y + oy)) best = std::min(best, box(x + ox, y + oy));
          }
        }
        cost[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * static_cast<std::size_t>(nd) +
             static_cast<std::size_t>(d)] = best;
      }
    }
  }

  DisparityMap out{w, h, std::vector<double>(w * h, 0.0), {}, false, cfg.d_max};
  for (std::size_t p = 0; p < w * h; ++p) {
    const double* c = &cost[p * static_cast<std::size_t>(nd)];
    long best = 0;
    for (long d = 1; d < nd; ++d) {
      if (c[d] < c[best]) best = d;
    }
    double value = static_cast<double>(best);
    if (cfg.subpixel && best > 0 && best + 1 < nd && c[best - 1] < inf && c[best + 1] < inf) {
      const double denom = c[best - 1] - 2.0 * c[best] + c[best + 1];
      if (denom > 0.0) value += std::clamp(0.5 * (c[best - 1] - c[best + 1]) / denom, -0.5, 0.5);
    }
    out.values[p] = std::clamp(value, 0.0, cfg.d_max);
  }
  return out;
}

DisparityMap block_match_right(const Image& left, const Image& right, const StereoConfig& cfg) {
  return flip_map(block_match(flip_horizontal(right), flip_horizontal(left), cfg));
}

OcclusionMask lr_consistency_occlusion(const DisparityMap& d, const DisparityMap& d_other, const StereoConfig& cfg,
                                       int direction) {
  if (d.width != d_other.width || d.height != d_other.height) {
    throw DimensionError("lr_consistency: map shapes differ");
  }
  if (direction != -1 && direction != 1) throw ConfigError("lr_consistency: direction must be -1 or +1");
  OcclusionMask m{d.width, d.height, std::vector<std::uint8_t>(d.values.size(), 0), {}};
  for (std::size_t y = 0; y < d.height; ++y) {
    for (std::size_t x = 0; x < d.width; ++x) {
      const double dv = d.at(x, y);
      const double xf = static_cast<double>(x) + direction * dv;
      const long xo = std::lround(xf);
      if (xo < 0 || xo >= static_cast<long>(d.width)) {
        m.bits[y * d.width + x] = 1;
        continue;
      }
      const double diff = std::abs(dv - d_other.at(static_cast<std::size_t>(xo), y));
      if (diff > cfg.lr_threshold) m.bits[y * d.width + x] = 1;
    }
  }
  return m;
}

DisparityMap refine_step(const DisparityMap& d, std::span<const double> grads, double lr) {
  if (d.frozen) throw ConfigError("refine_step: disparity map is frozen");
  if (grads.size() != d.values.size()) throw DimensionError("refine_step: gradient size mismatch");
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("refine_step: learning rate must be finite and >= 0");
  DisparityMap out = d;
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (!std::isfinite(grads[p])) {
      throw NonFiniteError("refine_step: non-finite gradient at pixel (" + std::to_string(p % d.width) + "," +
                           std::to_string(p / d.width) + ")");
    }
    if (grads[p] == 0.0) continue;
    out.values[p] = std::clamp(d.values[p] - lr * grads[p], 0.0, d.d_max);
  }
  return out;
}

GridPos stereo_partner(const LightField& lf, GridPos view) {
  if (lf.nu() >= 2) {
    return {static_cast<std::size_t>(view.iu) + 1 < lf.nu() ? view.iu + 1 : view.iu - 1, view.iv};
  }
  if (lf.nv() >= 2) {
    return {view.iu, static_cast<std::size_t>(view.iv) + 1 < lf.nv() ? view.iv + 1 : view.iv - 1};
  }
  throw ConfigError("stereo: a single-view light field has no stereo partner");
}

ViewEstimate estimate_view_disparity(const LightField& lf, std::size_t view, const StereoConfig& cfg) {
  const GridPos pos = lf.position_of(view);
  const GridPos partner = stereo_partner(lf, pos);
  const bool horizontal = lf.nu() >= 2;
  Image self = lf.view(view).pixels;
  Image other = lf.view(partner).pixels;
  if (!horizontal) {
    self = transpose(self);
    other = transpose(other);
  }
  const bool self_is_left = horizontal ? partner.iu > pos.iu : partner.iv > pos.iv;
  DisparityMap d, d_other;
  if (self_is_left) {
    d = block_match(self, other, cfg);
    d_other = block_match_right(self, other, cfg);
  } else {
    d = block_match_right(other, self, cfg);
    d_other = block_match(other, self, cfg);
  }
  auto occ = lr_consistency_occlusion(d, d_other, cfg, self_is_left ? -1 : 1);
  if (!horizontal) {
    d.values = transpose_layer(d.values, d.width, d.height);
    occ.bits = transpose_layer(occ.bits, occ.width, occ.height);
    std::swap(d.width, d.height);
    std::swap(occ.width, occ.height);
  }
  const std::size_t span_px = horizontal ? lf.width() : lf.height();
  const std::size_t n = horizontal ? lf.nu() : lf.nv();
  for (double& v : d.values) v = disparity_from_grid_shift(v, span_px, n, lf.a());
  d.d_max = disparity_from_grid_shift(cfg.d_max, span_px, n, lf.a());
  d.view_id = pos;
  occ.reference_view = partner;
  return {std::move(d), std::move(occ)};
}

std::vector<std::uint8_t> reference_in_frame(const LightField& lf, std::size_t view, GridPos reference,
                                             std::span<const double> disparity) {
  if (disparity.size() != lf.pixel_count()) throw DimensionError("reference_in_frame: disparity size mismatch");
  const MappingContext ctx{lf.a(), lf.width(), lf.height(), lf.angular(view), lf.angular(reference)};
  std::vector<std::uint8_t> in(lf.pixel_count(), 0);
  for (std::size_t p = 0; p < in.size(); ++p) {
    const auto m = map_coordinate(ctx, lf.x_coord(p % lf.width()), lf.y_coord(p / lf.width()), disparity[p]);
    in[p] = std::abs(m.x) <= lf.a() && std::abs(m.y) <= lf.a();
  }
  return in;
}

double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, std::span<const std::uint8_t> valid) {
  if (a.size() != b.size() || (!valid.empty() && valid.size() != a.size())) {
    throw DimensionError("mask_iou: size mismatch");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!valid.empty() && !valid[p]) continue;
    inter += a[p] && b[p];
    uni += a[p] || b[p];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_absolute_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("mean_absolute_difference: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace vicon
