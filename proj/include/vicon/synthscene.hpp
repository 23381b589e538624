#pragma once

// Layered synthetic light fields: fronto-parallel textured planes with exact
// disparity, occlusion and wide field-of-view references.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vicon/field.hpp"
#include "vicon/lightfield.hpp"

namespace vicon {

enum class Pattern { Noise, Grating, Mixed };

struct TextureSpec {
  Pattern pattern = Pattern::Mixed;
  double frequency = 3.0;  // cycles per normalized unit at the base octave
  int octaves = 3;
  double contrast = 0.35;  // peak deviation from the mean color
  std::uint64_t salt = 0;  // mixed into the scene seed
};

struct PlaneMask {
  enum class Shape { Rect, Disk } shape = Shape::Rect;
  std::array<double, 2> center{0.0, 0.0};      // plane coordinates
  std::array<double, 2> half_size{0.35, 0.35};  // radius in [0] for disks
};

struct TexturedPlane {
  double disparity = 0.0;
  TextureSpec texture;
  std::optional<PlaneMask> mask;
};

struct SceneSpec {
  std::vector<TexturedPlane> layers;  // far to near
  std::size_t nu = 3, nv = 3;
  std::size_t width = 64, height = 64;
  double a = 1.0;
  std::uint64_t seed = 1;
  double fov_margin = 0.0;
  double texture_extent = 2.0;  // textures exist on [-extent*a, extent*a]^2

  void validate() const;
};

/// 3x3 views at 64x64, two planes with disparities 2 and 8.
SceneSpec default_scene();

SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& spec);
/// Applies top-level "key=value" overrides; values are JSON literals.
SceneSpec apply_scene_overrides(const SceneSpec& spec, const std::vector<std::string>& overrides);

// Analytic scene evaluation, usable as a radiance field.
class Scene final : public RadianceField {
 public:
  explicit Scene(SceneSpec spec);

  const SceneSpec& spec() const noexcept { return spec_; }

  /// Index of the nearest plane covering (u, v, x, y). Throws DataError when the
  /// texture lookup exceeds the texture extent.
  std::size_t visible_layer(double u, double v, double x, double y) const;
  std::array<double, 3> color(double u, double v, double x, double y) const;
  std::array<double, 3> texture(std::size_t layer, double tx, double ty) const;
  bool covers(std::size_t layer, double tx, double ty) const;
  /// Plane coordinate seen at (x, y) from (u, v).
  std::array<double, 2> plane_coord(std::size_t layer, double u, double v, double x, double y) const;

  void evaluate(std::span<const double> coords, std::span<double> rgb) const override;
  /// Central differences (h = 1e-6) on the analytic color.
  void input_gradients(std::span<const double> coords, std::span<const double> upstream,
                       std::span<double> grads) const override;

 private:
  double noise(std::uint64_t key, double x, double y) const;

  SceneSpec spec_;
  std::vector<double> u_shift_, v_shift_;  // per layer: 2d/(w a), 2d/(h a)
};

struct WideReference {
  std::size_t extension_x = 0;  // extra pixels per side
  std::size_t extension_y = 0;
  double range_x = 0.0;  // half-width of the wide frame
  double range_y = 0.0;
  std::vector<Image> views;  // same order as the light field
};

struct GeneratedScene {
  LightField lf;  // with GT disparity and occlusion layers
  WideReference wide;
};

GeneratedScene generate(const SceneSpec& spec);

/// Extra pixels per side of the wide reference for a margin.
std::size_t wide_extension(std::size_t n, double margin);
/// Normalized coordinate of wide-frame index i (may be outside [-a, a]).
double wide_coord(std::size_t i, std::size_t n, std::size_t extension, double a);

struct OracleResult {
  double x = 0.0;
  double y = 0.0;
  bool occluded = false;
};

/// Mapped coordinate and visibility of a source pixel in a target view by direct construction.
OracleResult oracle_correspondence(const Scene& scene, GridPos source, Angular target, std::size_t pixel);

/// Writes the light field, GT layers and wide references; returns the manifest path.
std::filesystem::path write_scene(const GeneratedScene& scene, const std::filesystem::path& dir);

}  // namespace vicon
