#include "vicon/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "json.hpp"
#include "vicon/disparity.hpp"
#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"

namespace vicon {
namespace {

using nlohmann::json;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform in [-1, 1].
double hash_unit(std::uint64_t key) { return static_cast<double>(splitmix(key) >> 11) * 0x1.0p-52 - 1.0; }

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

std::uint64_t channel_key(std::uint64_t seed, std::uint64_t salt, std::uint64_t channel, std::uint64_t octave) {
  return splitmix(splitmix(splitmix(seed ^ (salt * 0xD1B54A32D192ED03ULL)) + channel) + 0x100 * octave);
}

const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::Noise: return "noise";
    case Pattern::Grating: return "grating";
    case Pattern::Mixed: return "mixed";
  }
  return "mixed";
}

Pattern parse_pattern(const std::string& s) {
  if (s == "noise") return Pattern::Noise;
  if (s == "grating") return Pattern::Grating;
  if (s == "mixed") return Pattern::Mixed;
  throw ConfigError("scene: unknown texture pattern '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (layers.empty()) throw ConfigError("scene: at least one layer is required");
  if (nu == 0 || nv == 0) throw ConfigError("scene: grid must be at least 1x1");
  if (width < 2 || height < 2) throw ConfigError("scene: resolution must be at least 2x2");
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("scene: a must be positive");
  if (!(fov_margin >= 0.0) || !std::isfinite(fov_margin)) throw ConfigError("scene: fov_margin must be >= 0");
  if (!(texture_extent > 0.0)) throw ConfigError("scene: texture_extent must be positive");
  if (layers.front().mask) throw ConfigError("scene: the farthest layer must not have a mask");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (!(l.disparity >= 0.0) || !std::isfinite(l.disparity)) throw ConfigError("scene: disparity must be >= 0");
    if (i > 0 && !(l.disparity > layers[i - 1].disparity)) {
      throw ConfigError("scene: layer disparities must increase strictly from far to near");
    }
    if (!(l.texture.frequency > 0.0) || l.texture.octaves < 1 || l.texture.octaves > 8) {
      throw ConfigError("scene: texture frequency must be > 0 and octaves in [1, 8]");
    }
    if (!(l.texture.contrast >= 0.0 && l.texture.contrast <= 0.35)) {
      throw ConfigError("scene: texture contrast must be in [0, 0.35]");
    }
    if (l.mask && (l.mask->half_size[0] <= 0.0 || l.mask->half_size[1] <= 0.0)) {
      throw ConfigError("scene: mask size must be positive");
    }
  }
}

SceneSpec default_scene() {
  SceneSpec s;
  TexturedPlane far;
  far.disparity = 2.0;
  far.texture = {Pattern::Mixed, 3.0, 3, 0.35, 1};
  TexturedPlane near;
  near.disparity = 8.0;
  near.texture = {Pattern::Mixed, 4.0, 3, 0.35, 2};
  near.mask = PlaneMask{};
  s.layers = {far, near};
  return s;
}

SceneSpec scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene spec: ") + e.what());
  }
  reject_unknown(j, {"layers", "grid", "resolution", "a", "seed", "fov_margin", "texture_extent"}, "scene spec");
  SceneSpec s = default_scene();
  if (j.contains("grid")) {
    std::vector<std::size_t> g;
    read_opt(j, "grid", g, "scene spec");
    if (g.size() != 2) throw ConfigError("scene spec: grid must be [nu, nv]");
    s.nu = g[0];
    s.nv = g[1];
  }
  if (j.contains("resolution")) {
    std::vector<std::size_t> r;
    read_opt(j, "resolution", r, "scene spec");
    if (r.size() != 2) throw ConfigError("scene spec: resolution must be [w, h]");
    s.width = r[0];
    s.height = r[1];
  }
  read_opt(j, "a", s.a, "scene spec");
  read_opt(j, "seed", s.seed, "scene spec");
  read_opt(j, "fov_margin", s.fov_margin, "scene spec");
  read_opt(j, "texture_extent", s.texture_extent, "scene spec");
  if (j.contains("layers")) {
    if (!j["layers"].is_array()) throw ConfigError("scene spec: layers must be an array");
    s.layers.clear();
    for (const auto& lj : j["layers"]) {
      const std::string where = "scene spec layer " + std::to_string(s.layers.size());
      reject_unknown(lj, {"disparity", "texture", "mask"}, where);
      TexturedPlane l;
      l.texture.salt = s.layers.size() + 1;
      read_opt(lj, "disparity", l.disparity, where);
      if (lj.contains("texture")) {
        const auto& tj = lj["texture"];
        reject_unknown(tj, {"pattern", "frequency", "octaves", "contrast", "salt"}, where + " texture");
        std::string pattern = pattern_name(l.texture.pattern);
        read_opt(tj, "pattern", pattern, where);
        l.texture.pattern = parse_pattern(pattern);
        read_opt(tj, "frequency", l.texture.frequency, where);
        read_opt(tj, "octaves", l.texture.octaves, where);
        read_opt(tj, "contrast", l.texture.contrast, where);
        read_opt(tj, "salt", l.texture.salt, where);
      }
      if (lj.contains("mask") && !lj["mask"].is_null()) {
        const auto& mj = lj["mask"];
        reject_unknown(mj, {"shape", "center", "half_size"}, where + " mask");
        PlaneMask m;
        std::string shape = "rect";
        read_opt(mj, "shape", shape, where);
        if (shape == "rect") {
          m.shape = PlaneMask::Shape::Rect;
        } else if (shape == "disk") {
          m.shape = PlaneMask::Shape::Disk;
        } else {
          throw ConfigError(where + ": unknown mask shape '" + shape + "'");
        }
        read_opt(mj, "center", m.center, where);
        read_opt(mj, "half_size", m.half_size, where);
        l.mask = m;
      }
      s.layers.push_back(l);
    }
  }
  s.validate();
  return s;
}

std::string scene_to_json(const SceneSpec& s) {
  json j;
  j["grid"] = {s.nu, s.nv};
  j["resolution"] = {s.width, s.height};
  j["a"] = s.a;
  j["seed"] = s.seed;
  j["fov_margin"] = s.fov_margin;
  j["texture_extent"] = s.texture_extent;
  j["layers"] = json::array();
  for (const auto& l : s.layers) {
    json lj{{"disparity", l.disparity},
            {"texture",
             {{"pattern", pattern_name(l.texture.pattern)},
              {"frequency", l.texture.frequency},
              {"octaves", l.texture.octaves},
              {"contrast", l.texture.contrast},
              {"salt", l.texture.salt}}}};
    if (l.mask) {
      lj["mask"] = {{"shape", l.mask->shape == PlaneMask::Shape::Rect ? "rect" : "disk"},
                    {"center", l.mask->center},
                    {"half_size", l.mask->half_size}};
    }
    j["layers"].push_back(lj);
  }
  return j.dump(2);
}

SceneSpec apply_scene_overrides(const SceneSpec& spec, const std::vector<std::string>& overrides) {
  json j = json::parse(scene_to_json(spec));
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    json value = json::parse(o.substr(eq + 1), nullptr, false);
    if (value.is_discarded()) throw ConfigError("override '" + o + "': value is not valid JSON");
    j[o.substr(0, eq)] = value;
  }
  return scene_from_json(j.dump());
}

Scene::Scene(SceneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (const auto& l : spec_.layers) {
    u_shift_.push_back(2.0 * l.disparity / (static_cast<double>(spec_.width) * spec_.a));
    v_shift_.push_back(2.0 * l.disparity / (static_cast<double>(spec_.height) * spec_.a));
  }
}

double Scene::noise(std::uint64_t key, double x, double y) const {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = fade(x - fx), ty = fade(y - fy);
  auto corner = [&](std::int64_t cx, std::int64_t cy) {
    return hash_unit(key + static_cast<std::uint64_t>(cx) * 0x9E3779B97F4A7C15ULL +
                     static_cast<std::uint64_t>(cy) * 0xC2B2AE3D27D4EB4FULL);
  };
  const double a0 = corner(ix, iy), a1 = corner(ix + 1, iy);
  const double b0 = corner(ix, iy + 1), b1 = corner(ix + 1, iy + 1);
  const double top = a0 + (a1 - a0) * tx;
  const double bottom = b0 + (b1 - b0) * tx;
  return top + (bottom - top) * ty;
}

std::array<double, 3> Scene::texture(std::size_t layer, double tx, double ty) const {
  const double extent = spec_.texture_extent * spec_.a;
  if (!(std::abs(tx) <= extent && std::abs(ty) <= extent)) {
    throw DataError("scene: layer " + std::to_string(layer) + " needs texture at (" + std::to_string(tx) + ", " +
                    std::to_string(ty) + "), beyond the texture extent " + std::to_string(extent));
  }
  const auto& t = spec_.layers[layer].texture;
  std::array<double, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto key = channel_key(spec_.seed, t.salt, c, 0);
    const double mean = 0.5 + 0.15 * hash_unit(key ^ 0xABCDEF);
    double n = 0.0;
    if (t.pattern != Pattern::Grating) {
      double amp = 1.0, norm = 0.0, freq = t.frequency;
      for (int o = 0; o < t.octaves; ++o) {
        n += amp * noise(channel_key(spec_.seed, t.salt, c, static_cast<std::uint64_t>(o) + 1), freq * tx + 0.37,
                         freq * ty + 0.61);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
      }
      n /= norm;
    }
    double g = 0.0;
    if (t.pattern != Pattern::Noise) {
      const double theta = std::numbers::pi * (hash_unit(key ^ 0x1234) + 1.0);
      const double phase = std::numbers::pi * hash_unit(key ^ 0x5678);
      g = std::sin(2.0 * std::numbers::pi * t.frequency * (std::cos(theta) * tx + std::sin(theta) * ty) + phase);
    }
    const double combo = t.pattern == Pattern::Noise ? n : t.pattern == Pattern::Grating ? g : 0.6 * n + 0.4 * g;
    rgb[c] = std::clamp(mean + t.contrast * combo, 0.0, 1.0);
  }
  return rgb;
}

bool Scene::covers(std::size_t layer, double tx, double ty) const {
  const auto& m = spec_.layers[layer].mask;
  if (!m) return true;
  const double dx = tx - m->center[0], dy = ty - m->center[1];
  if (m->shape == PlaneMask::Shape::Rect) return std::abs(dx) <= m->half_size[0] && std::abs(dy) <= m->half_size[1];
  return dx * dx + dy * dy <= m->half_size[0] * m->half_size[0];
}

std::array<double, 2> Scene::plane_coord(std::size_t layer, double u, double v, double x, double y) const {
  return {x + u * u_shift_[layer], y + v * v_shift_[layer]};
}

std::size_t Scene::visible_layer(double u, double v, double x, double y) const {
  for (std::size_t l = spec_.layers.size(); l-- > 0;) {
    const auto t = plane_coord(l, u, v, x, y);
    if (covers(l, t[0], t[1])) return l;
  }
  return 0;
}

std::array<double, 3> Scene::color(double u, double v, double x, double y) const {
  const auto l = visible_layer(u, v, x, y);
  const auto t = plane_coord(l, u, v, x, y);
  return texture(l, t[0], t[1]);
}

void Scene::evaluate(std::span<const double> coords, std::span<double> rgb) const {
  if (coords.size() % 4 != 0 || rgb.size() != coords.size() / 4 * 3) throw DimensionError("scene: buffer sizes");
  for (std::size_t s = 0; s < coords.size() / 4; ++s) {
    const auto c = color(coords[4 * s], coords[4 * s + 1], coords[4 * s + 2], coords[4 * s + 3]);
    std::copy(c.begin(), c.end(), rgb.begin() + 3 * s);
  }
}

void Scene::input_gradients(std::span<const double> coords, std::span<const double> upstream,
                            std::span<double> grads) const {
  if (coords.size() % 4 != 0 || grads.size() != coords.size() || upstream.size() != coords.size() / 4 * 3) {
    throw DimensionError("scene: buffer sizes");
  }
  constexpr double h = 1e-6;
  for (std::size_t s = 0; s < coords.size() / 4; ++s) {
    for (std::size_t k = 0; k < 4; ++k) {
      std::array<double, 4> p{coords[4 * s], coords[4 * s + 1], coords[4 * s + 2], coords[4 * s + 3]};
      double acc = 0.0;
      if (upstream[3 * s] != 0.0 || upstream[3 * s + 1] != 0.0 || upstream[3 * s + 2] != 0.0) {
        p[k] = coords[4 * s + k] + h;
        const auto hi = color(p[0], p[1], p[2], p[3]);
        p[k] = coords[4 * s + k] - h;
        const auto lo = color(p[0], p[1], p[2], p[3]);
        for (std::size_t c = 0; c < 3; ++c) acc += upstream[3 * s + c] * (hi[c] - lo[c]) / (2.0 * h);
      }
      grads[4 * s + k] = acc;
    }
  }
}

std::size_t wide_extension(std::size_t n, double margin) {
  return static_cast<std::size_t>(std::lround(margin * static_cast<double>(n - 1) / 2.0));
}

double wide_coord(std::size_t i, std::size_t n, std::size_t extension, double a) {
  const double k = static_cast<double>(i) - static_cast<double>(extension);
  return -a + 2.0 * a * k / static_cast<double>(n - 1);
}

GeneratedScene generate(const SceneSpec& spec) {
  const Scene scene(spec);
  GeneratedScene out;
  out.lf = LightField(spec.nu, spec.nv, spec.width, spec.height, spec.a);
  auto& lf = out.lf;
  const std::size_t w = spec.width, h = spec.height;
  auto& wide = out.wide;
  wide.extension_x = wide_extension(w, spec.fov_margin);
  wide.extension_y = wide_extension(h, spec.fov_margin);
  wide.range_x = -wide_coord(0, w, wide.extension_x, spec.a);
  wide.range_y = -wide_coord(0, h, wide.extension_y, spec.a);
  wide.views.resize(lf.view_count());
  const bool has_partner = lf.nu() >= 2 || lf.nv() >= 2;

  parallel_for(lf.view_count(), [&](std::size_t view) {
    auto& vi = lf.view(view);
    const auto ang = lf.angular(view);
    std::vector<double> disp(lf.pixel_count());
    std::vector<std::uint8_t> occ(lf.pixel_count(), 0);
    std::optional<Angular> ref;
    if (has_partner) {
      vi.occlusion_ref = stereo_partner(lf, lf.position_of(view));
      ref = lf.angular(*vi.occlusion_ref);
    }
    for (std::size_t p = 0; p < lf.pixel_count(); ++p) {
      const double x = lf.x_coord(p % w), y = lf.y_coord(p / w);
      const auto l = scene.visible_layer(ang.u, ang.v, x, y);
      const auto t = scene.plane_coord(l, ang.u, ang.v, x, y);
      const auto rgb = scene.texture(l, t[0], t[1]);
      std::copy(rgb.begin(), rgb.end(), vi.pixels.data.begin() + 3 * p);
      disp[p] = spec.layers[l].disparity;
      if (ref) {
        const auto back = scene.plane_coord(l, -ref->u, -ref->v, t[0], t[1]);  // the point's position in the reference view
        for (std::size_t k = l + 1; k < spec.layers.size(); ++k) {
          const auto tk = scene.plane_coord(k, ref->u, ref->v, back[0], back[1]);
          if (scene.covers(k, tk[0], tk[1])) {
            occ[p] = 1;
            break;
          }
        }
      }
    }
    vi.disparity = std::move(disp);
    if (ref) vi.occlusion = std::move(occ);

    const std::size_t ww = w + 2 * wide.extension_x, wh = h + 2 * wide.extension_y;
    Image img(ww, wh, 3);
    for (std::size_t py = 0; py < wh; ++py) {
      const double y = wide_coord(py, h, wide.extension_y, spec.a);
      for (std::size_t px = 0; px < ww; ++px) {
        const auto rgb = scene.color(ang.u, ang.v, wide_coord(px, w, wide.extension_x, spec.a), y);
        std::copy(rgb.begin(), rgb.end(), img.data.begin() + 3 * (py * ww + px));
      }
    }
    wide.views[view] = std::move(img);
  });
  lf.validate();
  return out;
}

OracleResult oracle_correspondence(const Scene& scene, GridPos source, Angular target, std::size_t pixel) {
  const auto& s = scene.spec();
  if (pixel >= s.width * s.height) throw ConfigError("oracle: pixel out of range");
  const double u = normalize_index(static_cast<std::size_t>(source.iu), s.nu, s.a);
  const double v = normalize_index(static_cast<std::size_t>(source.iv), s.nv, s.a);
  const double x = normalize_index(pixel % s.width, s.width, s.a);
  const double y = normalize_index(pixel / s.width, s.height, s.a);
  const auto l = scene.visible_layer(u, v, x, y);
  const auto t = scene.plane_coord(l, u, v, x, y);
  const auto p = scene.plane_coord(l, -target.u, -target.v, t[0], t[1]);
  OracleResult r{p[0], p[1], false};
  for (std::size_t k = l + 1; k < s.layers.size() && !r.occluded; ++k) {
    const auto tk = scene.plane_coord(k, target.u, target.v, p[0], p[1]);
    r.occluded = scene.covers(k, tk[0], tk[1]);
  }
  return r;
}

std::filesystem::path write_scene(const GeneratedScene& scene, const std::filesystem::path& dir) {
  const auto manifest = save_lightfield(scene.lf, dir);
  const auto& lf = scene.lf;
  const bool wide = scene.wide.extension_x > 0 || scene.wide.extension_y > 0;
  if (!wide) return manifest;
  json doc;
  {
    std::ifstream f(manifest);
    doc = json::parse(f);
  }
  for (std::size_t i = 0; i < lf.view_count(); ++i) {
    const auto pos = lf.position_of(i);
    const std::string name = "wide_" + std::to_string(pos.iu) + "_" + std::to_string(pos.iv) + ".png";
    write_image(scene.wide.views[i], dir / name);
    for (auto& entry : doc["views"]) {
      if (entry["iu"] == pos.iu && entry["iv"] == pos.iv) entry["wide_image"] = name;
    }
  }
  doc["wide"] = {{"extension", {scene.wide.extension_x, scene.wide.extension_y}},
                 {"range", {scene.wide.range_x, scene.wide.range_y}}};
  std::ofstream f(manifest, std::ios::trunc);
  if (!f) throw IoError("cannot write " + manifest.string());
  f << doc.dump(2) << '\n';
  return manifest;
}

}  // namespace vicon
