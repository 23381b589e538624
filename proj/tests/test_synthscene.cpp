#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vicon/correspondence.hpp"
#include "vicon/disparity.hpp"
#include "vicon/errors.hpp"
#include "vicon/synthscene.hpp"

using namespace vicon;

namespace {

SceneSpec single_plane(double d) {
  SceneSpec s = default_scene();
  s.layers.resize(1);
  s.layers[0].disparity = d;
  s.width = s.height = 32;
  return s;
}

}  // namespace

TEST_CASE("default scene") {
  const auto s = default_scene();
  CHECK(s.nu == 3);
  CHECK(s.nv == 3);
  CHECK(s.width == 64);
  CHECK(s.height == 64);
  REQUIRE(s.layers.size() == 2);
  CHECK(s.layers[0].disparity == 2.0);
  CHECK(s.layers[1].disparity == 8.0);
  CHECK_FALSE(s.layers[0].mask.has_value());
  CHECK(s.layers[1].mask.has_value());
}

TEST_CASE("a single plane at zero disparity looks the same from every view") {
  const auto g = generate(single_plane(0.0));
  const auto& lf = g.lf;
  for (std::size_t v = 0; v < lf.view_count(); ++v) {
    CHECK(lf.view(v).pixels.data == lf.view(0).pixels.data);
    for (double d : *lf.view(v).disparity) CHECK(d == 0.0);
    for (auto o : *lf.view(v).occlusion) CHECK(o == 0);
  }
}

TEST_CASE("view colors are the plane texture at the shifted coordinate") {
  const double d = 3.0;
  const auto spec = single_plane(d);
  const Scene scene(spec);
  const auto g = generate(spec);
  const auto& lf = g.lf;
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  for (std::size_t v = 0; v < lf.view_count(); ++v) {
    const auto ang = lf.angular(v);
    for (std::size_t p = 0; p < lf.pixel_count(); p += 7) {
      const double x = lf.x_coord(p % spec.width), y = lf.y_coord(p / spec.width);
      const auto t = scene.texture(0, x + 2.0 * d * ang.u / (w * spec.a), y + 2.0 * d * ang.v / (h * spec.a));
      for (std::size_t c = 0; c < 3; ++c) CHECK(lf.view(v).pixels.data[3 * p + c] == doctest::Approx(t[c]).epsilon(1e-14));
    }
  }
}

TEST_CASE("adjacent views see an occlusion band six disparity units wide") {
  const auto spec = default_scene();
  const auto g = generate(spec);
  const auto& lf = g.lf;
  // (8 - 2) units between the planes, in pixels for one grid step.
  const double band = grid_step_shift(8.0 - 2.0, spec.width, spec.nu, spec.a);
  CHECK(band == doctest::Approx(6.0 * 63.0 / 64.0));
  for (std::size_t v = 0; v < lf.view_count(); ++v) {
    const auto& occ = *lf.view(v).occlusion;
    double total = 0.0;
    std::size_t rows = 0;
    for (std::size_t y = 0; y < spec.height; ++y) {
      std::size_t count = 0, first = spec.width, last = 0;
      for (std::size_t x = 0; x < spec.width; ++x) {
        if (!occ[y * spec.width + x]) continue;
        ++count;
        first = std::min(first, x);
        last = x;
      }
      if (count == 0) continue;
      ++rows;
      total += static_cast<double>(count);
      CHECK(last - first + 1 == count);
      CHECK(static_cast<double>(count) >= std::floor(band));
      CHECK(static_cast<double>(count) <= std::ceil(band));
    }
    REQUIRE(rows > 0);
    CHECK(std::abs(total / static_cast<double>(rows) - band) < 0.5);
  }
}

TEST_CASE("generation is deterministic under the seed") {
  auto spec = default_scene();
  spec.fov_margin = 0.2;
  const auto a = generate(spec), b = generate(spec);
  for (std::size_t v = 0; v < a.lf.view_count(); ++v) {
    CHECK(a.lf.view(v).pixels.data == b.lf.view(v).pixels.data);
    CHECK(*a.lf.view(v).disparity == *b.lf.view(v).disparity);
    CHECK(*a.lf.view(v).occlusion == *b.lf.view(v).occlusion);
    CHECK(a.wide.views[v].data == b.wide.views[v].data);
  }
  spec.seed = 2;
  CHECK(generate(spec).lf.view(0).pixels.data != a.lf.view(0).pixels.data);
}

TEST_CASE("wide references") {
  auto spec = default_scene();
  SUBCASE("zero margin equals the standard views bit for bit") {
    const auto g = generate(spec);
    CHECK(g.wide.extension_x == 0);
    for (std::size_t v = 0; v < g.lf.view_count(); ++v) CHECK(g.wide.views[v].data == g.lf.view(v).pixels.data);
  }
  SUBCASE("margin 0.2 extends each side and keeps the inner frame") {
    spec.fov_margin = 0.2;
    const auto g = generate(spec);
    const auto e = g.wide.extension_x;
    CHECK(e == wide_extension(64, 0.2));
    CHECK(e == 6);
    CHECK(g.wide.range_x == doctest::Approx(1.0 + 2.0 * 6.0 / 63.0));
    for (std::size_t v = 0; v < g.lf.view_count(); ++v) {
      const auto& wide = g.wide.views[v];
      const auto& img = g.lf.view(v).pixels;
      CHECK(wide.width == 64 + 2 * e);
      for (std::size_t y = 0; y < 64; y += 5) {
        for (std::size_t x = 0; x < 64; ++x) {
          for (std::size_t c = 0; c < 3; ++c) CHECK(wide.at(x + e, y + e, c) == doctest::Approx(img.at(x, y, c)).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("oracle_correspondence") {
  SUBCASE("zero disparity is the identity and never occluded") {
    const Scene scene(single_plane(0.0));
    for (std::size_t p = 0; p < 32 * 32; p += 13) {
      const auto r = oracle_correspondence(scene, {0, 2}, {0.7, -0.3}, p);
      CHECK(r.x == normalize_index(p % 32, 32, 1.0));
      CHECK(r.y == normalize_index(p / 32, 32, 1.0));
      CHECK_FALSE(r.occluded);
    }
  }
  SUBCASE("map_coordinate agrees on 10^4 random pixels") {
    const auto spec = default_scene();
    const Scene scene(spec);
    const auto g = generate(spec);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> view(0, 8), pixel(0, 64 * 64 - 1);
    std::uniform_real_distribution<double> ang(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const auto v = view(rng);
      const auto p = pixel(rng);
      const Angular target{ang(rng), ang(rng)};
      const auto r = oracle_correspondence(scene, g.lf.position_of(v), target, p);
      const MappingContext ctx{spec.a, spec.width, spec.height, g.lf.angular(v), target};
      const auto m = map_coordinate(ctx, g.lf.x_coord(p % 64), g.lf.y_coord(p / 64), (*g.lf.view(v).disparity)[p]);
      worst = std::max({worst, std::abs(m.x - r.x), std::abs(m.y - r.y)});
    }
    CHECK(worst < 1e-12);
  }
  SUBCASE("occlusion flags match the generated masks") {
    const auto spec = default_scene();
    const Scene scene(spec);
    const auto g = generate(spec);
    for (std::size_t v = 0; v < g.lf.view_count(); ++v) {
      const auto ref = g.lf.angular(*g.lf.view(v).occlusion_ref);
      const auto& occ = *g.lf.view(v).occlusion;
      for (std::size_t p = 0; p < g.lf.pixel_count(); ++p) {
        CHECK(oracle_correspondence(scene, g.lf.position_of(v), ref, p).occluded == (occ[p] != 0));
      }
    }
  }
  SUBCASE("pixel out of range") {
    const Scene scene(single_plane(0.0));
    CHECK_THROWS_AS(oracle_correspondence(scene, {0, 0}, {0, 0}, 32 * 32), ConfigError);
  }
}

TEST_CASE("scene JSON") {
  SUBCASE("round trip") {
    auto spec = default_scene();
    spec.fov_margin = 0.2;
    spec.layers[1].mask->shape = PlaneMask::Shape::Disk;
    const auto back = scene_from_json(scene_to_json(spec));
    CHECK(scene_to_json(back) == scene_to_json(spec));
    CHECK(generate(back).lf.view(4).pixels.data == generate(spec).lf.view(4).pixels.data);
  }
  SUBCASE("unknown keys, bad values and invalid scenes") {
    auto j = nlohmann::json::parse(scene_to_json(default_scene()));
    auto bad = j;
    bad["colour"] = 1;
    CHECK_THROWS_AS(scene_from_json(bad.dump()), ConfigError);
    bad = j;
    bad["layers"][0]["texture"]["sparkle"] = true;
    CHECK_THROWS_AS(scene_from_json(bad.dump()), ConfigError);
    bad = j;
    bad["layers"][1]["disparity"] = 1.0;
    CHECK_THROWS_AS(scene_from_json(bad.dump()), ConfigError);
    bad = j;
    bad["fov_margin"] = "wide";
    CHECK_THROWS_AS(scene_from_json(bad.dump()), ConfigError);
    CHECK_THROWS_AS(scene_from_json("{\"layers\": ["), ConfigError);
  }
  SUBCASE("overrides") {
    const auto spec = apply_scene_overrides(default_scene(), {"fov_margin=0.2", "seed=9"});
    CHECK(spec.fov_margin == 0.2);
    CHECK(spec.seed == 9);
    CHECK_THROWS_AS(apply_scene_overrides(default_scene(), {"fov_margin=wide"}), ConfigError);
    CHECK_THROWS_AS(apply_scene_overrides(default_scene(), {"depth=1"}), ConfigError);
  }
}

TEST_CASE("planes needing texture beyond the extent are rejected") {
  auto spec = default_scene();
  spec.texture_extent = 1.0;
  CHECK_THROWS_AS(generate(spec), DataError);
  spec.texture_extent = 2.0;
  spec.layers[0].mask = PlaneMask{};
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

TEST_CASE("write_scene emits the manifest, layers and wide references") {
  const test::TempDir dir("synthscene");
  auto spec = default_scene();
  spec.width = spec.height = 24;
  spec.fov_margin = 0.2;
  const auto g = generate(spec);
  const auto manifest = write_scene(g, dir.path());
  const auto back = load_lightfield(manifest);
  CHECK(back.view_count() == 9);
  for (std::size_t v = 0; v < 9; ++v) {
    CHECK(back.view(v).disparity.has_value());
    CHECK(back.view(v).occlusion.has_value());
    const auto pos = back.position_of(v);
    const auto wide = dir.path() / ("wide_" + std::to_string(pos.iu) + "_" + std::to_string(pos.iv) + ".png");
    CHECK(std::filesystem::exists(wide));
  }
  const auto doc = nlohmann::json::parse(std::ifstream(manifest));
  CHECK(doc.contains("wide"));
}
