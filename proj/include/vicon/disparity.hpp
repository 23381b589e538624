#pragma once

// Disparity maps: block-matching initialization, left-right consistency
// occlusion masks and the SGD refinement update.

#include <cstdint>
#include <span>
#include <vector>

#include "vicon/lightfield.hpp"

namespace vicon {

struct DisparityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
  GridPos view_id;
  bool frozen = false;
  double d_max = 24.0;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

struct OcclusionMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 1 = occluded
  GridPos reference_view;
};

struct StereoConfig {
  std::size_t window = 9;
  double d_max = 24.0;  // pixels
  double lr_threshold = 1.0;
  bool subpixel = true;
  bool shiftable = true;             // minimum over windows anchored at the 3x3 corner/edge offsets
  bool sampling_insensitive = true;  // Birchfield-Tomasi pixel dissimilarity inside the SAD

  void validate() const;
};

/// Winner-take-all SAD matching with right(x) = left(x + d); values in pixels.
DisparityMap block_match(const Image& left, const Image& right, const StereoConfig& cfg);
/// Disparity of the right image: right(x) = left(x + d), indexed by right pixels.
DisparityMap block_match_right(const Image& left, const Image& right, const StereoConfig& cfg);

/// Occluded iff |d(x,y) - d_other(x + direction*d(x,y), y)| > threshold or the lookup leaves the frame.
/// direction = -1 for a left-view map checked against its right neighbour, +1 for the reverse.
OcclusionMask lr_consistency_occlusion(const DisparityMap& d, const DisparityMap& d_other, const StereoConfig& cfg,
                                       int direction = -1);

/// d <- clamp(d - lr * grad, 0, d_max). Throws NonFiniteError naming the pixel on a bad gradient.
DisparityMap refine_step(const DisparityMap& d, std::span<const double> grads, double lr);

struct ViewEstimate {
  DisparityMap disparity;  // correspondence units
  OcclusionMask occlusion;
};

/// Matches a view against its right grid neighbour (left neighbour on the last
/// column; vertical neighbours on single-column grids) and converts to correspondence units.
ViewEstimate estimate_view_disparity(const LightField& lf, std::size_t view, const StereoConfig& cfg);

/// Grid neighbour used as the stereo partner of `view`.
GridPos stereo_partner(const LightField& lf, GridPos view);

/// 1 where the pixel's correspondence under `disparity` lands inside the reference view's frame.
std::vector<std::uint8_t> reference_in_frame(const LightField& lf, std::size_t view, GridPos reference,
                                             std::span<const double> disparity);

/// Intersection over union of two masks restricted to `valid` (all pixels when empty); 1 when both are empty.
double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                std::span<const std::uint8_t> valid = {});

double mean_absolute_difference(std::span<const double> a, std::span<const double> b);

}  // namespace vicon
