#include <cmath>

#include "doctest.h"
#include "metric_reference.hpp"
#include "test_support.hpp"
#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"
#include "vicon/render_eval.hpp"

using namespace vicon;

namespace {

SirenNetwork small_net() {
  const std::vector<std::size_t> arch{4, 16, 16, 3};
  return init_weights(arch, 30.0, 11);
}

}  // namespace

TEST_CASE("psnr examples") {
  const Image black(16, 16, 3, 0.0), white(16, 16, 3, 1.0);
  CHECK(psnr(black, black) == kPsnrCap);
  CHECK(psnr(black, white) == doctest::Approx(0.0).epsilon(1e-12));
  SUBCASE("MSE 0.01 gives 20 dB") {
    const Image a(12, 12, 3, 0.5), b(12, 12, 3, 0.6);
    CHECK(std::abs(psnr(a, b) - 20.0) < 1e-6);
  }
  SUBCASE("quantized comparison rounds to 8 bits first") {
    const Image a(12, 12, 3, 0.5), b(12, 12, 3, 0.5 + 1e-4);
    CHECK(psnr(a, b) < kPsnrCap);
    CHECK(psnr(a, b, true) == kPsnrCap);
  }
  SUBCASE("masked psnr only sees masked pixels") {
    Image a(4, 4, 3, 0.5), b(4, 4, 3, 0.5);
    b.at(0, 0, 0) = 0.0;
    std::vector<std::uint8_t> mask(16, 1);
    CHECK(psnr_masked(a, b, mask) < kPsnrCap);
    mask[0] = 0;
    CHECK(psnr_masked(a, b, mask) == kPsnrCap);
    CHECK_THROWS_AS(psnr_masked(a, b, std::vector<std::uint8_t>(16, 0)), DimensionError);
  }
  CHECK_THROWS_AS(psnr(Image(4, 4, 3), Image(4, 5, 3)), DimensionError);
}

TEST_CASE("psnr decreases as noise grows") {
  double last = kPsnrCap + 1;
  for (int k = 1; k <= 5; ++k) {
    const auto [a, b] = test::lcg_pair(9, 0.1 * k);
    const double p = psnr(a, b);
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("ssim examples") {
  test::Lcg g(4);
  const Image x = test::lcg_image(g, 20, 16);
  CHECK(ssim(x, x) == 1.0);
  const double c1 = 0.01 * 0.01;
  CHECK(ssim(Image(16, 16, 3, 0.0), Image(16, 16, 3, 1.0)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));
  CHECK(std::abs(ssim(Image(16, 16, 3, 0.0), Image(16, 16, 3, 1.0)) - 9.999e-5) < 1e-4);
  CHECK_THROWS_AS(ssim(Image(10, 16, 3), Image(10, 16, 3)), DimensionError);
  CHECK_THROWS_AS(ssim(Image(16, 16, 3), Image(16, 17, 3)), DimensionError);
}

TEST_CASE("metrics agree with scikit-image on random pairs") {
  for (const auto& r : test::kMetricReferences) {
    const auto [a, b] = test::lcg_pair(r.seed, 0.2 * static_cast<double>(r.seed));
    CHECK(std::abs(ssim(a, b) - r.ssim) < 1e-4);
    CHECK(std::abs(psnr(a, b) - r.psnr) < 1e-4);
  }
}

TEST_CASE("metrics are symmetric") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto [a, b] = test::lcg_pair(seed, 0.5);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("metric_json") {
  CHECK(metric_json({99.0, 1.0}) == R"({"psnr": 99.000000, "ssim": 1.000000})");
  const auto m = evaluate_pair(Image(12, 12, 3, 0.5), Image(12, 12, 3, 0.6));
  CHECK(m.psnr == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("render_view") {
  const auto net = small_net();
  const NetworkField field(net);
  SUBCASE("a 1x1 lattice is a single forward call at the centre") {
    const RenderRequest req{0.2, -0.3, -1.0, 0.5, -0.5, 1.0, 1, 1};
    const auto img = render_view(field, req);
    const std::vector<double> coord{0.2, -0.3, -0.25, 0.25};
    const auto out = forward(net, coord);
    for (int c = 0; c < 3; ++c) CHECK(img.at(0, 0, c) == std::clamp(out[c], 0.0, 1.0));
  }
  SUBCASE("every pixel equals the forward pass at its lattice coordinate") {
    const RenderRequest req{0.1, 0.4, -1.0, 1.0, -1.0, 1.0, 9, 7};
    const auto img = render_view(field, req);
    for (std::size_t j = 0; j < 7; ++j) {
      for (std::size_t i = 0; i < 9; ++i) {
        const std::vector<double> coord{0.1, 0.4, req.x_at(i), req.y_at(j)};
        const auto out = forward(net, coord);
        for (int c = 0; c < 3; ++c) CHECK(img.at(i, j, c) == std::clamp(out[c], 0.0, 1.0));
      }
    }
  }
  SUBCASE("pure and independent of the worker count") {
    const RenderRequest req{0.0, 0.0, -1.0, 1.0, -1.0, 1.0, 33, 21};
    set_num_threads(1);
    const auto a = render_view(field, req);
    set_num_threads(4);
    const auto b = render_view(field, req);
    set_num_threads(1);
    CHECK(a.data == b.data);
    CHECK(render_view(field, req).data == a.data);
    for (double v : a.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("invalid requests") {
    CHECK_THROWS_AS(render_view(field, {0, 0, -1, 1, -1, 1, 0, 4}), ConfigError);
    CHECK_THROWS_AS(render_view(field, {0, 0, 1, 1, -1, 1, 4, 4}), ConfigError);
    CHECK_THROWS_AS(render_view(field, {NAN, 0, -1, 1, -1, 1, 4, 4}), ConfigError);
  }
}

TEST_CASE("render_extrapolated") {
  const auto net = small_net();
  const NetworkField field(net);
  const RenderRequest inner{0.0, 0.0, -1.0, 1.0, -1.0, 1.0, 21, 21};
  CHECK(render_extrapolated(field, inner).data == render_view(field, inner).data);
  // The wide lattice at step 0.1 shares every inner lattice point.
  const RenderRequest wide{0.0, 0.0, -1.2, 1.2, -1.2, 1.2, 25, 25};
  const auto img = render_extrapolated(field, wide);
  const auto base = render_view(field, inner);
  for (std::size_t j = 0; j < 21; ++j) {
    for (std::size_t i = 0; i < 21; ++i) {
      CHECK(std::abs(wide.x_at(i + 2) - inner.x_at(i)) < 1e-15);
      for (int c = 0; c < 3; ++c) CHECK(img.at(i + 2, j + 2, c) == doctest::Approx(base.at(i, j, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("lattice_request matches the light field pixel centres") {
  const LightField lf(3, 3, 10, 6, 0.5);
  const auto req = lattice_request(lf, lf.angular(GridPos{2, 0}));
  CHECK(req.u == 0.5);
  CHECK(req.v == -0.5);
  for (std::size_t i = 0; i < 10; ++i) CHECK(req.x_at(i) == doctest::Approx(lf.x_coord(i)).epsilon(1e-15));
  for (std::size_t j = 0; j < 6; ++j) CHECK(req.y_at(j) == doctest::Approx(lf.y_coord(j)).epsilon(1e-15));
}
