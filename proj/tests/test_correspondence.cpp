#include <cmath>
#include <fstream>

#include "doctest.h"
#include "test_support.hpp"
#include "vicon/correspondence.hpp"
#include "vicon/errors.hpp"
#include "vicon/siren.hpp"
#include "vicon/synthscene.hpp"

using namespace vicon;

namespace {

class ConstantField final : public RadianceField {
 public:
  explicit ConstantField(std::array<double, 3> c) : c_(c) {}
  void evaluate(std::span<const double> coords, std::span<double> rgb) const override {
    for (std::size_t s = 0; s < coords.size() / 4; ++s) {
      for (int k = 0; k < 3; ++k) rgb[3 * s + k] = c_[k];
    }
  }
  void input_gradients(std::span<const double>, std::span<const double>, std::span<double> grads) const override {
    std::fill(grads.begin(), grads.end(), 0.0);
  }

 private:
  std::array<double, 3> c_;
};

SceneSpec single_plane(double d) {
  SceneSpec s = default_scene();
  s.layers.resize(1);
  s.layers[0].disparity = d;
  return s;
}

std::vector<std::size_t> all_views(const LightField& lf) {
  std::vector<std::size_t> v(lf.view_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

CorrespondenceSample sample_at(std::array<double, 4> p, std::array<double, 3> color, bool indicator = true) {
  CorrespondenceSample s;
  s.source_coord = p;
  s.mapped_coord = p;
  s.target_color = color;
  s.indicator = indicator;
  s.case_tag = indicator ? CaseTag::InFrame : CaseTag::OccludedInNovel;
  return s;
}

}  // namespace

TEST_CASE("validate_affine examples") {
  const std::vector<Angular> two{{-1.0, 0.0}, {1.0, 0.0}};
  SUBCASE("one-hot weights reproduce that source") {
    const Angular t = validate_affine({{0.0, 1.0}, {0.0, 1.0}}, two);
    CHECK(t.u == 1.0);
    CHECK(t.v == 0.0);
  }
  SUBCASE("midpoint") { CHECK(validate_affine({{0.5, 0.5}, {0.5, 0.5}}, two).u == 0.0); }
  SUBCASE("quarter weights") { CHECK(validate_affine({{0.25, 0.75}, {0.5, 0.5}}, two).u == doctest::Approx(0.5)); }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(validate_affine({{-0.5, 1.5}, {0.5, 0.5}}, two), ConfigError);
    CHECK_THROWS_AS(validate_affine({{0.5, 0.6}, {0.5, 0.5}}, two), ConfigError);
    CHECK_THROWS_AS(validate_affine({{1.0}, {1.0}}, two), ConfigError);
    CHECK_NOTHROW(validate_affine({{0.5 + 1e-10, 0.5}, {0.5, 0.5}}, two));
  }
}

TEST_CASE("map_coordinate examples") {
  MappingContext ctx{1.0, 256, 256, {0.25, 0.0}, {0.0, 0.0}};
  SUBCASE("zero disparity is the identity") {
    const auto m = map_coordinate(ctx, 0.3, -0.7, 0.0);
    CHECK(m.x == 0.3);
    CHECK(m.y == -0.7);
  }
  SUBCASE("zero baseline is the identity for any disparity") {
    const MappingContext same{1.0, 64, 64, {0.5, -0.5}, {0.5, -0.5}};
    const auto m = map_coordinate(same, 0.1, 0.2, 17.0);
    CHECK(m.x == 0.1);
    CHECK(m.y == 0.2);
  }
  SUBCASE("hand-evaluated offset") {
    const auto m = map_coordinate(ctx, 0.0, 0.0, 8.0);
    CHECK(m.x == doctest::Approx(0.015625).epsilon(1e-15));
    CHECK(m.y == 0.0);
  }
  SUBCASE("non-finite input is rejected") { CHECK_THROWS_AS(map_coordinate(ctx, 0.0, 0.0, NAN), DataError); }
  SUBCASE("baseline offsets compose additively") {
    const MappingContext ab{1.0, 64, 48, {0.3, 0.1}, {0.1, -0.2}};
    const MappingContext bc{1.0, 64, 48, {0.1, -0.2}, {-0.4, 0.5}};
    const MappingContext ac{1.0, 64, 48, {0.3, 0.1}, {-0.4, 0.5}};
    const auto m1 = map_coordinate(ab, 0.2, -0.3, 5.0);
    const auto m2 = map_coordinate(bc, m1.x, m1.y, 5.0);
    const auto direct = map_coordinate(ac, 0.2, -0.3, 5.0);
    CHECK(m2.x == doctest::Approx(direct.x).epsilon(1e-14));
    CHECK(m2.y == doctest::Approx(direct.y).epsilon(1e-14));
  }
}

TEST_CASE("classify_case examples") {
  const MappingContext ctx{1.0, 64, 64, {-1.0, 0.0}, {0.0, 0.0}};
  CHECK(classify_case(ctx, 0.9, 0.0, 1.5, 0.0, false, {}) == CaseTag::OutsideNovel);
  CHECK(classify_case(ctx, 0.9, 0.0, 1.0, 0.0, false, {}) == CaseTag::InFrame);
  CHECK(classify_case(ctx, 1.2, 0.0, 0.0, 0.0, false, {}) == CaseTag::OutsideSource);
  CHECK(classify_case(ctx, 0.1, 0.0, 0.2, 0.0, true, {}) == CaseTag::OccludedInSource);
  const NovelOcclusionTest always = [](double, double) { return true; };
  CHECK(classify_case(ctx, 0.1, 0.0, 0.2, 0.0, false, always) == CaseTag::OccludedInNovel);
  CHECK(case_dropped(CaseTag::OutsideSource));
  CHECK(case_dropped(CaseTag::OccludedInSource));
  CHECK_FALSE(case_dropped(CaseTag::OutsideNovel));
  CHECK_FALSE(case_dropped(CaseTag::OccludedInNovel));
}

TEST_CASE("foreground splat occludes a background pixel in the novel view") {
  const auto g = generate(default_scene());
  const auto& lf = g.lf;
  const std::size_t left = lf.index_of(GridPos{0, 1});
  const Angular target = lf.angular(GridPos{1, 1});
  const auto& disp = *lf.view(left).disparity;
  const SplatZBuffer zb(lf, left, disp, target);
  const MappingContext ctx{lf.a(), lf.width(), lf.height(), lf.angular(left), target};
  // Background pixels just right of the near plane's right edge land under the near plane.
  std::size_t occluded = 0;
  for (std::size_t p = 0; p < lf.pixel_count(); ++p) {
    if (disp[p] != 2.0) continue;
    const auto m = map_coordinate(ctx, lf.x_coord(p % lf.width()), lf.y_coord(p / lf.width()), disp[p]);
    const bool z = zb.occluded(m.x, m.y, disp[p]);
    occluded += z;
    const auto tag = classify_case(ctx, lf.x_coord(p % lf.width()), lf.y_coord(p / lf.width()), m.x, m.y, false,
                                   [&](double x, double y) { return zb.occluded(x, y, disp[p]); });
    CHECK((tag == CaseTag::OccludedInNovel) == z);
  }
  CHECK(occluded > 0);
  CHECK_FALSE(zb.occluded(0.0, 0.0, 8.0));  // the near plane itself
}

TEST_CASE("build_correspondences examples") {
  SUBCASE("zero disparity, midpoint novel view: every p' is (u_j, v_j, x, y) in frame") {
    const auto g = generate(single_plane(0.0));
    const auto src = make_source_set(g.lf, all_views(g.lf));
    AffineViewSpec mid{std::vector<double>(9, 0.0), std::vector<double>(9, 0.0)};
    mid.alphas[0] = mid.alphas[1] = mid.betas[0] = mid.betas[3] = 0.5;
    const auto samples = build_correspondences(src, mid);
    CHECK(samples.size() == 9 * g.lf.pixel_count());
    for (const auto& s : samples) {
      CHECK(s.case_tag == CaseTag::InFrame);
      CHECK(s.mapped_coord[0] == -0.5);
      CHECK(s.mapped_coord[1] == -0.5);
      CHECK(s.mapped_coord[2] == s.source_coord[2]);
      CHECK(s.mapped_coord[3] == s.source_coord[3]);
      CHECK(s.indicator);
    }
  }
  SUBCASE("single plane matches the generator's analytic correspondence") {
    const auto spec = single_plane(5.0);
    const auto g = generate(spec);
    const Scene scene(spec);
    const auto src = make_source_set(g.lf, all_views(g.lf));
    const Angular target{0.3, -0.6};
    const auto samples = build_correspondences(src, target);
    double worst = 0.0;
    for (const auto& s : samples) {
      const auto o = oracle_correspondence(scene, g.lf.position_of(src.views[s.source]), target, s.pixel);
      worst = std::max({worst, std::abs(o.x - s.mapped_coord[2]), std::abs(o.y - s.mapped_coord[3])});
      CHECK(s.indicator);
    }
    CHECK(worst < 1e-12);
  }
  SUBCASE("one-hot target reproduces the source view's own pixels") {
    const auto g = generate(default_scene());
    const auto src = make_source_set(g.lf, all_views(g.lf), false);
    AffineViewSpec hot{std::vector<double>(9, 0.0), std::vector<double>(9, 0.0)};
    hot.alphas[4] = hot.betas[4] = 1.0;
    const auto samples = build_correspondences(src, hot);
    std::size_t self = 0;
    for (const auto& s : samples) {
      if (src.views[s.source] != 4) continue;
      ++self;
      CHECK(s.mapped_coord == s.source_coord);
      const auto& px = g.lf.view(4).pixels;
      CHECK(s.target_color[0] == px.at(s.pixel % 64, s.pixel / 64, 0));
      CHECK(s.indicator);
    }
    CHECK(self == g.lf.pixel_count());
  }
  SUBCASE("case partition and indicator invariant") {
    const auto g = generate(default_scene());
    const auto src = make_source_set(g.lf, all_views(g.lf));
    const auto samples = build_correspondences(src, Angular{0.5, 0.5});
    std::array<std::size_t, 5> count{};
    for (const auto& s : samples) {
      ++count[static_cast<std::size_t>(s.case_tag)];
      CHECK_FALSE(case_dropped(s.case_tag));
      CHECK(s.indicator == (s.case_tag != CaseTag::OccludedInNovel));
      if (s.case_tag == CaseTag::OutsideNovel) {
        CHECK((std::abs(s.mapped_coord[2]) > 1.0 || std::abs(s.mapped_coord[3]) > 1.0));
      }
    }
    CHECK(count[static_cast<std::size_t>(CaseTag::InFrame)] > 0);
    CHECK(count[static_cast<std::size_t>(CaseTag::OutsideNovel)] > 0);
    CHECK(count[static_cast<std::size_t>(CaseTag::OccludedInNovel)] > 0);
    CHECK(samples.size() < 9 * g.lf.pixel_count());  // source-occluded pixels are dropped
  }
  SUBCASE("missing disparity layer") {
    LightField lf(2, 1, 4, 4, 1.0);
    for (std::size_t v = 0; v < 2; ++v) lf.view(v).pixels = Image(4, 4, 3, 0.5);
    CHECK_THROWS_AS(make_source_set(lf, {0, 1}), DataError);
  }
}

TEST_CASE("correspondence_loss examples") {
  const ConstantField half({0.5, 0.5, 0.5});
  SUBCASE("hand-evaluated single sample") {
    const std::vector<CorrespondenceSample> s{sample_at({0, 0, 0, 0}, {0.25, 0.5, 1.0})};
    const auto r = correspondence_loss(half, s);
    CHECK(r.value == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.upstream[0] == doctest::Approx(1.0 / 3.0));
    CHECK(r.upstream[1] == 0.0);
    CHECK(r.upstream[2] == doctest::Approx(-1.0 / 3.0));
  }
  SUBCASE("all indicators false") {
    const std::vector<CorrespondenceSample> s{sample_at({0, 0, 0, 0}, {0, 0, 0}, false),
                                              sample_at({0, 0, 0.1, 0}, {1, 1, 1}, false)};
    const auto r = correspondence_loss(half, s);
    CHECK(r.value == 0.0);
    for (double u : r.upstream) CHECK(u == 0.0);
  }
  SUBCASE("perfect fit") {
    const std::vector<CorrespondenceSample> s{sample_at({0, 0, 0, 0}, {0.5, 0.5, 0.5}),
                                              sample_at({0, 0, 0.3, 0.2}, {0.5, 0.5, 0.5})};
    CHECK(correspondence_loss(half, s).value == 0.0);
  }
  SUBCASE("N counts masked samples") {
    const std::vector<CorrespondenceSample> s{sample_at({0, 0, 0, 0}, {0.25, 0.5, 1.0}),
                                              sample_at({0, 0, 0, 0}, {0.25, 0.5, 1.0}, false)};
    CHECK(correspondence_loss(half, s).value == doctest::Approx(0.125));
  }
}

TEST_CASE("masked samples contribute exactly zero parameter gradient") {
  const std::vector<std::size_t> arch{4, 16, 16, 3};
  const auto net = init_weights(arch, 30.0, 5);
  const NetworkField field(net);
  const auto coords = test::uniform(4 * 40, -1, 1, 3);
  const auto colors = test::uniform(3 * 40, 0, 1, 4);
  std::vector<CorrespondenceSample> kept, all;
  for (std::size_t s = 0; s < 40; ++s) {
    auto c = sample_at({coords[4 * s], coords[4 * s + 1], coords[4 * s + 2], coords[4 * s + 3]},
                       {colors[3 * s], colors[3 * s + 1], colors[3 * s + 2]}, s % 3 != 0);
    all.push_back(c);
    if (c.indicator) kept.push_back(c);
  }
  const auto masked = correspondence_loss(field, all);
  for (std::size_t s = 0; s < all.size(); ++s) {
    if (all[s].indicator) continue;
    for (int k = 0; k < 3; ++k) CHECK(masked.upstream[3 * s + k] == 0.0);
  }
  const auto packed = pack_samples(all);
  const auto g = backward(net, packed.coords, masked.upstream);
  // Removing the masked samples leaves the gradient unchanged up to the 1/N normalization.
  const auto r_kept = correspondence_loss(field, kept);
  const auto g_kept = backward(net, pack_samples(kept).coords, r_kept.upstream);
  const double ratio = static_cast<double>(kept.size()) / static_cast<double>(all.size());
  for (std::size_t i = 0; i < g.param_grads.size(); ++i) {
    CHECK(g.param_grads[i] == doctest::Approx(g_kept.param_grads[i] * ratio).epsilon(1e-12));
  }
}

TEST_CASE("disparity_loss examples") {
  const std::vector<std::size_t> arch{4, 24, 24, 3};
  const auto net = init_weights(arch, 10.0, 12);
  const NetworkField field(net);

  SUBCASE("zero baseline gives zero disparity gradient") {
    const auto g = generate(default_scene());
    const auto src = make_source_set(g.lf, all_views(g.lf));
    const auto samples = build_correspondences(src, g.lf.angular(std::size_t{4}));
    std::vector<CorrespondenceSample> self;
    for (const auto& s : samples) {
      if (src.views[s.source] == 4) self.push_back(s);
    }
    const auto dg = disparity_loss(field, self, 9, g.lf.pixel_count());
    for (double v : dg.grads[4]) CHECK(v == 0.0);
  }
  SUBCASE("finite differences on d") {
    const auto g = generate(default_scene());
    const auto src = make_source_set(g.lf, all_views(g.lf));
    const auto pairs = build_known_view_pairs(src, {kOcclusionMargin, false});
    std::vector<CorrespondenceSample> samples;
    for (std::size_t i = 0; i < pairs.size(); i += 23) samples.push_back(pairs[i]);
    REQUIRE(samples.size() > 1000);
    const auto dg = disparity_loss(field, samples, 9, g.lf.pixel_count());
    const double h = 1e-5;
    std::size_t checked = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < 200; ++k) {
      const auto& s0 = samples[(k * 7919) % samples.size()];
      if (!s0.indicator) continue;
      // Shift every sample fed by this (source, pixel) as if d changed by +-h.
      auto shifted = [&](double delta) {
        auto copy = samples;
        for (auto& c : copy) {
          if (c.source != s0.source || c.pixel != s0.pixel) continue;
          c.mapped_coord[2] += c.dx_dd * delta;
          c.mapped_coord[3] += c.dy_dd * delta;
        }
        return disparity_loss(field, copy, 9, g.lf.pixel_count()).loss;
      };
      const double fd = (shifted(h) - shifted(-h)) / (2 * h);
      worst = std::max(worst, test::rel_err(dg.grads[s0.source][s0.pixel], fd, 1e-6));
      ++checked;
    }
    CHECK(checked > 100);
    CHECK(worst < 1e-5);
  }
  SUBCASE("masked sample contributes nothing") {
    auto s = sample_at({0.5, 0, 0.1, 0.2}, {0.1, 0.9, 0.4}, false);
    s.dx_dd = 0.03;
    const std::vector<CorrespondenceSample> v{s};
    const auto dg = disparity_loss(field, v, 1, 4);
    CHECK(dg.loss == 0.0);
    for (double x : dg.grads[0]) CHECK(x == 0.0);
  }
}

TEST_CASE("correspondence CSV dump") {
  const test::TempDir dir("corr_csv");
  const auto g = generate(default_scene());
  const auto src = make_source_set(g.lf, all_views(g.lf));
  const auto samples = build_correspondences(src, Angular{0.0, 0.0});
  write_correspondence_csv(src, samples, dir.path() / "c.csv");
  std::ifstream f(dir.path() / "c.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "view_i,pixel,case_tag,x_mapped,y_mapped,indicator");
  std::size_t rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows == samples.size());
}

TEST_CASE("grid shift conversion round trips") {
  CHECK(grid_step_shift(8.0, 64, 3, 1.0) == doctest::Approx(7.875));
  CHECK(disparity_from_grid_shift(grid_step_shift(3.3, 64, 3, 0.7), 64, 3, 0.7) == doctest::Approx(3.3));
  CHECK_THROWS_AS(disparity_from_grid_shift(1.0, 64, 1, 1.0), ConfigError);
}
