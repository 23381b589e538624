#pragma once

// View correspondence: affine novel views, the disparity-scaled coordinate
// mapping, case classification and the masked losses L_C and L_D.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "vicon/field.hpp"
#include "vicon/lightfield.hpp"

namespace vicon {

struct AffineViewSpec {
  std::vector<double> alphas;
  std::vector<double> betas;
};

/// Returns (sum alpha_i u_i, sum beta_i v_i). Throws ConfigError on negative
/// weights, length mismatch or sums deviating from 1 by more than 1e-9.
Angular validate_affine(const AffineViewSpec& spec, std::span<const Angular> sources);

struct MappingContext {
  double a = 1.0;
  std::size_t w = 2;
  std::size_t h = 2;
  Angular source;
  Angular target;

  void validate() const;
  /// dx'/dd and dy'/dd.
  double dx_dd() const noexcept { return 2.0 * (source.u - target.u) / (static_cast<double>(w) * a); }
  double dy_dd() const noexcept { return 2.0 * (source.v - target.v) / (static_cast<double>(h) * a); }
};

struct Mapped {
  double x = 0.0;
  double y = 0.0;
};

/// x' = x + 2(u_i - u_j) d / (w a), y' = y + 2(v_i - v_j) d / (h a).
Mapped map_coordinate(const MappingContext& ctx, double x, double y, double d);

enum class CaseTag : std::uint8_t {
  InFrame,
  OutsideSource,
  OutsideNovel,
  OccludedInSource,
  OccludedInNovel,
};

const char* case_name(CaseTag tag) noexcept;
/// Cases that produce no sample.
inline bool case_dropped(CaseTag tag) noexcept {
  return tag == CaseTag::OutsideSource || tag == CaseTag::OccludedInSource;
}

using NovelOcclusionTest = std::function<bool(double x_mapped, double y_mapped)>;

/// (x, y) is the source-side lookup coordinate, (x', y') its image in the target view.
CaseTag classify_case(const MappingContext& ctx, double x, double y, double x_mapped, double y_mapped,
                      bool source_occluded, const NovelOcclusionTest& occluded_in_novel);

inline constexpr double kOcclusionMargin = 0.5;

// Forward splat of one view into a target view, keyed by disparity.
class SplatZBuffer {
 public:
  SplatZBuffer(const LightField& lf, std::size_t view, std::span<const double> disparity, Angular target,
               double margin = kOcclusionMargin);

  /// True when a splat with disparity > d + margin lies within half a pixel of (x', y').
  bool occluded(double x_mapped, double y_mapped, double d) const;

 private:
  double to_px(double c, std::size_t n) const noexcept { return (c + a_) * static_cast<double>(n - 1) / (2.0 * a_); }

  double a_;
  std::size_t w_, h_;
  double margin_;
  long x0_ = 0, y0_ = 0, cols_ = 0, rows_ = 0;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::array<double, 3>> splats_;  // px, py, d
};

struct CorrespondenceSample {
  std::array<double, 4> source_coord{};
  std::array<double, 4> mapped_coord{};
  std::array<double, 3> target_color{};
  bool indicator = true;
  CaseTag case_tag = CaseTag::InFrame;
  std::uint32_t source = 0;  // position in the source list
  std::uint32_t pixel = 0;
  double dx_dd = 0.0;
  double dy_dd = 0.0;
};

// Source views with their disparity and optional occlusion layers.
struct SourceSet {
  const LightField* lf = nullptr;
  std::vector<std::size_t> views;
  std::vector<std::vector<double>> disparity;        // per source
  std::vector<std::vector<std::uint8_t>> occlusion;  // per source; empty = none

  std::vector<Angular> angulars() const;
  /// Position in `views` of the source closest to `target` (ties: lowest index).
  std::size_t nearest(Angular target) const;
  void validate() const;
};

/// Sources from the light field's own layers; throws DataError when a disparity layer is missing.
SourceSet make_source_set(const LightField& lf, std::vector<std::size_t> views, bool use_occlusion = true);

struct CorrespondenceOptions {
  double occlusion_margin = kOcclusionMargin;
  bool keep_outside_novel = true;
};

/// Maps every pixel of every source into the target view. Dropped cases are omitted.
std::vector<CorrespondenceSample> build_correspondences(const SourceSet& sources, Angular target,
                                                        const CorrespondenceOptions& opt = {});
std::vector<CorrespondenceSample> build_correspondences(const SourceSet& sources, const AffineViewSpec& spec,
                                                        const CorrespondenceOptions& opt = {});

/// Correspondences between grid 4-neighbours among the sources, for L_D.
std::vector<CorrespondenceSample> build_known_view_pairs(const SourceSet& sources,
                                                         const CorrespondenceOptions& opt = {});

struct LossResult {
  double value = 0.0;
  std::vector<double> upstream;  // 3 per sample, dL/dF
};

/// (1/N) sum 1_A |F(p') - f(p)| with the per-channel mean; N counts masked samples.
LossResult correspondence_loss(const RadianceField& field, std::span<const CorrespondenceSample> samples);

struct DisparityGradient {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;  // per source, per pixel dL_D/dd
};

/// L_D over known-view correspondences and its gradient with respect to each source disparity.
DisparityGradient disparity_loss(const RadianceField& field, std::span<const CorrespondenceSample> samples,
                                 std::size_t source_count, std::size_t pixel_count);

/// Mapped coordinates, target colors and indicators of selected samples, packed for a network pass.
struct PackedSamples {
  std::vector<double> coords;
  std::vector<double> colors;
  std::vector<std::uint8_t> mask;
};
PackedSamples pack_samples(std::span<const CorrespondenceSample> samples, std::span<const std::size_t> pick = {});

/// CSV columns: view_i, pixel, case_tag, x', y', indicator.
void write_correspondence_csv(const SourceSet& sources, std::span<const CorrespondenceSample> samples,
                              const std::filesystem::path& path);

/// Shift in pixels between adjacent grid columns for a disparity d, and the inverse.
double grid_step_shift(double d, std::size_t w, std::size_t n, double a);
double disparity_from_grid_shift(double shift_px, std::size_t w, std::size_t n, double a);

}  // namespace vicon
