#pragma once

// Two-plane light field: a grid of views indexed (iu, iv) with angular and
// spatial coordinates normalized to [-a, a].

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "vicon/image_io.hpp"

namespace vicon {

struct GridPos {
  int iu = 0;
  int iv = 0;
  bool operator==(const GridPos&) const = default;
};

struct ViewImage {
  Image pixels;                                  // w x h x 3, values in [0, 1]
  std::optional<std::vector<double>> disparity;  // w x h
  std::optional<std::vector<std::uint8_t>> occlusion;  // w x h, 1 = not visible in occlusion_ref
  std::optional<GridPos> occlusion_ref;
};

struct Angular {
  double u = 0.0;
  double v = 0.0;
};

/// -a + 2a*i/(n-1); 0 when n == 1. Throws ConfigError when i >= n.
double normalize_index(std::size_t i, std::size_t n, double a);

class LightField {
 public:
  LightField() = default;
  LightField(std::size_t nu, std::size_t nv, std::size_t width, std::size_t height, double a);

  std::size_t nu() const noexcept { return nu_; }
  std::size_t nv() const noexcept { return nv_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t view_count() const noexcept { return views_.size(); }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  double a() const noexcept { return a_; }

  std::size_t index_of(GridPos p) const;
  GridPos position_of(std::size_t index) const;
  Angular angular(std::size_t index) const;
  Angular angular(GridPos p) const { return angular(index_of(p)); }
  double x_coord(std::size_t px) const { return normalize_index(px, width_, a_); }
  double y_coord(std::size_t py) const { return normalize_index(py, height_, a_); }

  ViewImage& view(std::size_t index) { return views_.at(index); }
  const ViewImage& view(std::size_t index) const { return views_.at(index); }
  ViewImage& view(GridPos p) { return views_.at(index_of(p)); }
  const ViewImage& view(GridPos p) const { return views_.at(index_of(p)); }

  /// Rescales the coordinate range. Disparities are rescaled so that pixel shifts are preserved.
  void set_range(double a);

  /// Throws DataError naming the first offending view.
  void validate() const;

 private:
  std::size_t nu_ = 0;
  std::size_t nv_ = 0;
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  double a_ = 1.0;
  std::vector<ViewImage> views_;  // index = iv * nu + iu
};

LightField load_lightfield(const std::filesystem::path& manifest_path);

struct ManifestExtras {
  bool write_disparity = true;
  bool write_occlusion = true;
};

/// Writes images/layers next to a manifest.json in `dir`; returns the manifest path.
std::filesystem::path save_lightfield(const LightField& lf, const std::filesystem::path& dir,
                                      const ManifestExtras& extras = {});

struct PixelBatch {
  std::vector<double> coords;  // (u, v, x, y) per sample
  std::vector<double> colors;  // RGB per sample
  std::vector<std::size_t> view_ids;
  std::vector<std::size_t> pixel_indices;  // py * width + px

  std::size_t size() const noexcept { return view_ids.size(); }
};

/// Coordinates and color of one pixel.
void pixel_sample(const LightField& lf, std::size_t view, std::size_t pixel, double* coord, double* rgb);

// Samples (view, pixel) pairs uniformly over a subset of views.
class BatchSampler {
 public:
  BatchSampler(const LightField& lf, std::vector<std::size_t> views, std::uint64_t seed);

  PixelBatch sample(std::size_t size);
  /// Next `size` pairs in (view, pixel) order, wrapping around.
  PixelBatch sequential(std::size_t size);
  std::size_t population() const noexcept { return views_.size() * lf_->pixel_count(); }

 private:
  void append(PixelBatch& batch, std::size_t flat) const;

  const LightField* lf_;
  std::vector<std::size_t> views_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

}  // namespace vicon
