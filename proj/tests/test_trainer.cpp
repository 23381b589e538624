#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"
#include "vicon/synthscene.hpp"
#include "vicon/trainer.hpp"

using namespace vicon;

namespace {

// Output is exactly `rgb` for every input.
SirenNetwork constant_net(std::array<double, 3> rgb) {
  std::vector<DenseLayer> layers{DenseLayer(4, 2), DenseLayer(2, 3)};
  layers[0].weights = {0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.2, 0.0};
  layers[1].biases = {rgb[0], rgb[1], rgb[2]};
  return SirenNetwork(std::move(layers), 30.0);
}

PixelBatch batch_of(const std::vector<std::array<double, 3>>& colors) {
  PixelBatch b;
  for (std::size_t i = 0; i < colors.size(); ++i) {
    b.coords.insert(b.coords.end(), {0.1 * static_cast<double>(i), -0.2, 0.3, 0.05});
    b.colors.insert(b.colors.end(), colors[i].begin(), colors[i].end());
    b.view_ids.push_back(0);
    b.pixel_indices.push_back(i);
  }
  return b;
}

LightField small_scene() {
  auto spec = default_scene();
  spec.width = spec.height = 24;
  return generate(spec).lf;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.width = 16;
  cfg.hidden_layers = 2;
  cfg.batch_size = 64;
  cfg.total_steps = 30;
  cfg.m = 2;
  cfg.refine_warmup = 10;
  cfg.refine_every = 5;
  cfg.holdout = {{1, 1}};
  cfg.checkpoint_every = 0;
  return cfg;
}

}  // namespace

TEST_CASE("reconstruction_loss examples") {
  const auto net = constant_net({0.5, 0.5, 0.5});
  const NetworkField field(net);
  SUBCASE("perfect fit gives zero loss and zero gradients") {
    const auto r = reconstruction_loss(field, batch_of({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}));
    CHECK(r.loss == 0.0);
    for (double g : r.grads.param_grads) CHECK(g == 0.0);
  }
  SUBCASE("constant offset of 0.1") {
    const auto r = reconstruction_loss(field, batch_of({{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}}));
    CHECK(r.loss == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("per-channel mean over two pixels") {
    const auto r = reconstruction_loss(field, batch_of({{0.2, 0.5, 0.5}, {0.5, 0.5, -0.1}}));
    CHECK(r.loss == doctest::Approx(0.15).epsilon(1e-12));
    // Output-bias gradient: mean over samples of sign(residual) / 3.
    const auto last = r.grads.layer(net, 1);
    CHECK(last.biases[0] == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
    CHECK(last.biases[1] == 0.0);
    CHECK(last.biases[2] == doctest::Approx(0.5 / 3.0).epsilon(1e-12));
  }
  SUBCASE("empty batch") { CHECK_THROWS_AS(reconstruction_loss(field, PixelBatch{}), ConfigError); }
}

TEST_CASE("loss weights and total_loss") {
  TrainConfig cfg;
  cfg.m = 0;
  auto w = loss_weights(cfg, 9);
  CHECK(w.lambda_c == 0.0);
  CHECK(total_loss(0.3, 0.7, w) == 0.3);
  cfg.m = 4;
  w = loss_weights(cfg, 4);
  CHECK(total_loss(0.2, 0.6, w) == doctest::Approx(0.4).epsilon(1e-15));
  cfg.m = 3;
  w = loss_weights(cfg, 9);
  CHECK(w.lambda_s + w.lambda_c == 1.0);
  CHECK(total_loss(0.2, 0.4, w) == doctest::Approx(0.25).epsilon(1e-15));
  cfg.lambda_auto = false;
  cfg.lambda_s = 0.3;
  cfg.lambda_c = 0.7;
  w = loss_weights(cfg, 9);
  CHECK(w.lambda_s == 0.3);
  CHECK(w.lambda_c == 0.7);
}

TEST_CASE("adam_step examples") {
  SirenNetwork net(std::vector<LayerShape>{{1, 1}}, 30.0);
  SUBCASE("first step with unit gradient moves by lr") {
    AdamState s(net);
    const std::vector<double> g{1.0, 1.0};
    adam_step(net, g, s, 1e-4);
    CHECK(s.step == 1);
    for (double p : net.parameters()) CHECK(std::abs(p + 1e-4) < 1e-11);
  }
  SUBCASE("zero gradients leave fresh parameters unchanged and decay the moments") {
    AdamState fresh(net);
    adam_step(net, std::vector<double>{0.0, 0.0}, fresh, 1e-3);
    for (double p : net.parameters()) CHECK(p == 0.0);
    AdamState s(net);
    adam_step(net, std::vector<double>{0.5, -2.0}, s, 1e-3);
    const auto m0 = s.m, v0 = s.v;
    adam_step(net, std::vector<double>{0.0, 0.0}, s, 1e-3);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(s.m[i] == doctest::Approx(0.9 * m0[i]).epsilon(1e-15));
      CHECK(s.v[i] == doctest::Approx(0.999 * v0[i]).epsilon(1e-15));
    }
  }
  SUBCASE("updates oppose the first moment") {
    const std::vector<std::size_t> arch{4, 8, 3};
    auto big = init_weights(arch, 30.0, 5);
    AdamState s(big);
    for (std::uint64_t k = 0; k < 5; ++k) {
      const auto g = test::uniform(big.parameter_count(), -1, 1, 100 + k);
      const std::vector<double> before(big.parameters().begin(), big.parameters().end());
      adam_step(big, g, s, 1e-3);
      for (std::size_t i = 0; i < g.size(); ++i) CHECK((big.parameters()[i] - before[i]) * s.m[i] <= 0.0);
    }
  }
  SUBCASE("non-finite gradients and shape mismatch") {
    AdamState s(net);
    CHECK_THROWS_AS(adam_step(net, std::vector<double>{NAN, 0.0}, s, 1e-4), NonFiniteError);
    CHECK_THROWS_AS(adam_step(net, std::vector<double>{1.0}, s, 1e-4), DimensionError);
  }
}

TEST_CASE("decay_lr follows the step schedule") {
  const TrainConfig cfg;
  CHECK(decay_lr(1e-4, 0, cfg) == 1e-4);
  CHECK(decay_lr(1e-4, 149, cfg) == 1e-4);
  CHECK(decay_lr(1e-4, 150, cfg) == doctest::Approx(0.9e-4).epsilon(1e-15));
  CHECK(decay_lr(1e-4, 450, cfg) == doctest::Approx(0.729e-4).epsilon(1e-15));
  CHECK(decay_lr(2.0, 450, cfg) == decay_lr(2.0, 599, cfg));
}

TEST_CASE("choose_novel_specs") {
  const LightField lf(3, 3, 8, 8, 1.0);
  std::vector<std::size_t> all(9), ring;
  for (std::size_t i = 0; i < 9; ++i) {
    all[i] = i;
    if (i != 4) ring.push_back(i);
  }
  auto angulars = [&](const std::vector<std::size_t>& views) {
    std::vector<Angular> a;
    for (auto v : views) a.push_back(lf.angular(v));
    return a;
  };
  SUBCASE("m=1 with the centre held out is its bilinear midpoint") {
    const auto specs = choose_novel_specs(lf, ring, 1, NovelStrategy::Midpoint, 0);
    REQUIRE(specs.size() == 1);
    const auto t = validate_affine(specs[0], angulars(ring));
    CHECK(t.u == doctest::Approx(0.0));
    CHECK(t.v == doctest::Approx(0.0));
    int corners = 0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      if (specs[0].alphas[i] == 0.0) continue;
      ++corners;
      CHECK(specs[0].alphas[i] == 0.25);
      CHECK(specs[0].betas[i] == 0.25);
    }
    CHECK(corners == 4);
  }
  SUBCASE("m=1 on a full grid picks a cell centre with weights 0.25 x 4") {
    const auto specs = choose_novel_specs(lf, all, 1, NovelStrategy::Midpoint, 0);
    const auto t = validate_affine(specs[0], angulars(all));
    CHECK(std::abs(t.u) == doctest::Approx(0.5));
    CHECK(std::abs(t.v) == doctest::Approx(0.5));
    std::size_t nonzero = 0;
    for (double a : specs[0].alphas) nonzero += a == 0.25 ? 1 : 0;
    CHECK(nonzero == 4);
  }
  SUBCASE("all midpoint specs validate and m beyond the supply is rejected") {
    const auto specs = choose_novel_specs(lf, all, 4, NovelStrategy::Midpoint, 0);
    for (const auto& s : specs) CHECK_NOTHROW(validate_affine(s, angulars(all)));
    CHECK_THROWS_AS(choose_novel_specs(lf, all, 5, NovelStrategy::Midpoint, 0), ConfigError);
    CHECK(choose_novel_specs(lf, all, 0, NovelStrategy::Midpoint, 0).empty());
  }
  SUBCASE("random mode draws convex weights deterministically") {
    const auto specs = choose_novel_specs(lf, all, 1000, NovelStrategy::Random, 7);
    CHECK(specs.size() == 1000);
    for (const auto& s : specs) {
      for (const auto* w : {&s.alphas, &s.betas}) {
        double sum = 0.0;
        for (double x : *w) {
          CHECK(x >= 0.0);
          sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
    const auto again = choose_novel_specs(lf, all, 1000, NovelStrategy::Random, 7);
    CHECK(again[999].alphas == specs[999].alphas);
  }
}

TEST_CASE("config JSON schema") {
  SUBCASE("round trip") {
    TrainConfig cfg = small_config();
    cfg.novel_strategy = NovelStrategy::Random;
    cfg.disparity_init = DisparityInit::BlockMatch;
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.holdout == cfg.holdout);
  }
  SUBCASE("unknown keys and wrong types") {
    CHECK_THROWS_AS(config_from_json(R"({"widht": 64})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"width": "wide"})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"m": -1})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"gegenbauer": 1})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"novel_strategy": "grid"})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"holdout": [[1]]})"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"adam_lr": 0})"), ConfigError);
    CHECK_THROWS_AS(config_from_json("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"m\": "), ConfigError);
  }
  SUBCASE("overrides") {
    const auto cfg = apply_overrides(TrainConfig{}, {"m=2", "novel_strategy=random", "holdout=[[0,1]]", "adam_lr=3e-4"});
    CHECK(cfg.m == 2);
    CHECK(cfg.novel_strategy == NovelStrategy::Random);
    CHECK(cfg.holdout == std::vector<GridPos>{{0, 1}});
    CHECK(cfg.adam_lr == 3e-4);
    CHECK_THROWS_AS(apply_overrides(TrainConfig{}, {"batch_size=big"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(TrainConfig{}, {"nokey"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(TrainConfig{}, {"colour=1"}), ConfigError);
  }
}

TEST_CASE("training is deterministic and independent of the worker count") {
  const auto lf = small_scene();
  const auto cfg = small_config();
  set_num_threads(1);
  const auto a = train(lf, cfg);
  const auto b = train(lf, cfg);
  set_num_threads(3);
  const auto c = train(lf, cfg);
  set_num_threads(1);
  CHECK(a.net == b.net);
  CHECK(a.net == c.net);
  CHECK(encode_checkpoint(a.net) == encode_checkpoint(c.net));
  REQUIRE(a.disparities.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.disparities[i].values == c.disparities[i].values);
  REQUIRE(a.report.rows.size() == cfg.total_steps);
  for (std::size_t i = 0; i < a.report.rows.size(); ++i) {
    CHECK(a.report.rows[i].step == i);
    CHECK(a.report.rows[i].l_s == c.report.rows[i].l_s);
    CHECK(a.report.rows[i].l_c == c.report.rows[i].l_c);
  }
  CHECK(a.report.rows.back().psnr_holdout.has_value());
  CHECK(a.report.rows[9].l_d.has_value() == false);
  CHECK(a.report.rows[14].l_d.has_value());

  auto other = cfg;
  other.seed = 2;
  CHECK_FALSE(train(lf, other).net == a.net);
}

TEST_CASE("network and disparity updates do not leak into each other") {
  const auto lf = small_scene();
  auto cfg = small_config();
  SUBCASE("L_D never moves the network") {
    cfg.m = 0;
    cfg.refine_disparity = true;
    const auto refined = train(lf, cfg);
    cfg.refine_disparity = false;
    const auto frozen = train(lf, cfg);
    CHECK(refined.net == frozen.net);
    bool moved = false;
    for (std::size_t i = 0; i < refined.disparities.size(); ++i) {
      moved = moved || refined.disparities[i].values != *lf.view(refined.sources[i]).disparity;
    }
    CHECK(moved);
  }
  SUBCASE("L_S and L_C never move the disparities") {
    cfg.refine_warmup = cfg.total_steps;
    const auto r = train(lf, cfg);
    for (std::size_t i = 0; i < r.disparities.size(); ++i) {
      CHECK(r.disparities[i].values == *lf.view(r.sources[i]).disparity);
    }
    for (const auto& row : r.report.rows) CHECK_FALSE(row.l_d.has_value());
  }
}

TEST_CASE("m=0 with refinement off is a plain SIREN fit") {
  const auto lf = small_scene();
  auto cfg = small_config();
  cfg.m = 0;
  cfg.refine_disparity = false;
  const auto r = train(lf, cfg);
  CHECK(r.disparities.empty());
  for (const auto& row : r.report.rows) CHECK(row.l_c == 0.0);
  CHECK(r.report.rows.back().l_s < r.report.rows.front().l_s);
}

TEST_CASE("divergence hands back the last finite network") {
  const auto lf = small_scene();
  auto cfg = small_config();
  cfg.adam_lr = 1e300;
  std::optional<SirenNetwork> saved;
  TrainHooks hooks;
  hooks.on_divergence = [&](const SirenNetwork& net) { saved = net; };
  CHECK_THROWS_AS(train(lf, cfg, hooks), NonFiniteError);
  REQUIRE(saved.has_value());
  CHECK(saved->all_finite());
}

TEST_CASE("checkpoint hook and report CSV") {
  const test::TempDir dir("trainer");
  const auto lf = small_scene();
  auto cfg = small_config();
  cfg.checkpoint_every = 10;
  std::vector<std::size_t> steps;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t step, const SirenNetwork&) { steps.push_back(step); };
  const auto r = train(lf, cfg, hooks);
  CHECK(steps == std::vector<std::size_t>{10, 20, 30});
  write_report_csv(r.report, dir.path() / "report.csv");
  std::ifstream f(dir.path() / "report.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "step,l_s,l_c,l_d,lr_adam,lr_sgd,psnr_holdout");
  std::size_t lines = 0;
  for (std::string line; std::getline(f, line);) ++lines;
  CHECK(lines == cfg.total_steps);
}

TEST_CASE("train rejects bad inputs") {
  auto lf = small_scene();
  auto cfg = small_config();
  SUBCASE("every view held out") {
    cfg.holdout.clear();
    for (int v = 0; v < 3; ++v) {
      for (int u = 0; u < 3; ++u) cfg.holdout.push_back({u, v});
    }
    CHECK_THROWS_AS(train(lf, cfg), ConfigError);
  }
  SUBCASE("layers requested but absent") {
    for (std::size_t v = 0; v < lf.view_count(); ++v) lf.view(v).disparity.reset();
    cfg.disparity_init = DisparityInit::Layers;
    CHECK_THROWS_AS(train(lf, cfg), DataError);
  }
}
