// vicon: scene generation, training, rendering, evaluation and disparity inspection.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vicon/correspondence.hpp"
#include "vicon/disparity.hpp"
#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"
#include "vicon/render_eval.hpp"
#include "vicon/synthscene.hpp"
#include "vicon/trainer.hpp"

namespace fs = std::filesystem;
using namespace vicon;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f || !(f << text)) throw IoError("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string grid_suffix(GridPos p) { return std::to_string(p.iu) + "_" + std::to_string(p.iv); }

std::pair<std::size_t, std::size_t> parse_resolution(const std::string& s) {
  const auto x = s.find_first_of("xX");
  std::size_t w = 0, h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    w = std::stoul(s.substr(0, x));
    h = std::stoul(s.substr(x + 1));
  } catch (const std::exception&) {
    throw ConfigError("--res must look like WxH, got '" + s + "'");
  }
  if (w == 0 || h == 0) throw ConfigError("--res must be at least 1x1");
  return {w, h};
}

Angular parse_angular(const std::string& s) {
  const auto c = s.find(',');
  try {
    if (c == std::string::npos) throw std::invalid_argument(s);
    return {std::stod(s.substr(0, c)), std::stod(s.substr(c + 1))};
  } catch (const std::exception&) {
    throw ConfigError("expected 'u,v', got '" + s + "'");
  }
}

struct GenArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int run_gen(const GenArgs& args) {
  SceneSpec spec = args.config.empty() ? default_scene() : scene_from_json(read_text(args.config));
  spec = apply_scene_overrides(spec, args.sets);
  if (args.seed) spec.seed = *args.seed;
  spec.validate();
  ensure_dir(args.out_dir);
  const auto manifest = write_scene(generate(spec), args.out_dir);
  std::cout << manifest.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::size_t> m;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  return apply_overrides(cfg, sets);
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg = resolve_config(args.config, args.sets);
  if (args.m) cfg.m = *args.m;
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  const LightField lf = load_lightfield(args.manifest);
  const fs::path out(args.out_dir);
  ensure_dir(out);
  write_text(out / "config.json", config_to_json(cfg) + "\n");

  const fs::path model = out / "model.vicn";
  TrainReport partial;
  TrainHooks hooks;
  hooks.on_row = [&](const ReportRow& r) {
    partial.rows.push_back(r);
    const bool last = r.step + 1 == cfg.total_steps;
    if (args.quiet || !(last || (r.step + 1) % 100 == 0)) return;
    std::fprintf(stderr, "step %zu l_s %.6f l_c %.6f", r.step + 1, r.l_s, r.l_c);
    if (r.l_d) std::fprintf(stderr, " l_d %.6f", *r.l_d);
    if (r.psnr_holdout) std::fprintf(stderr, " psnr %.3f ssim %.4f", *r.psnr_holdout, *r.ssim_holdout);
    std::fprintf(stderr, "\n");
  };
  hooks.on_checkpoint = [&](std::size_t, const SirenNetwork& net) { save_checkpoint(net, model); };
  hooks.on_divergence = [&](const SirenNetwork& last_good) {
    save_checkpoint(last_good, model);
    write_report_csv(partial, out / "report.csv");
  };

  const TrainResult result = train(lf, cfg, hooks);
  save_checkpoint(result.net, model);
  write_report_csv(result.report, out / "report.csv");
  for (const auto& d : result.disparities) {
    FloatMap map{d.width, d.height, 1, std::vector<float>(d.values.begin(), d.values.end())};
    write_pfm(map, out / ("disparity_" + grid_suffix(d.view_id) + ".pfm"));
  }
  std::cout << model.string() << "\n" << (out / "report.csv").string() << "\n";
  return 0;
}

struct RenderArgs {
  std::string model;
  double u = 0.0, v = 0.0;
  std::optional<double> a;
  std::optional<double> range;
  std::string res;
  std::string manifest;
  std::string config;
  bool allow_extrapolated_angular = false;
  std::string out;
  std::string out_dir = ".";
};

int run_render(const RenderArgs& args) {
  const SirenNetwork net = load_checkpoint(args.model);
  double a = 1.0;
  std::size_t base_w = 64, base_h = 64;
  std::optional<GegenbauerTransform> transform;
  if (!args.manifest.empty()) {
    const LightField lf = load_lightfield(args.manifest);
    a = lf.a();
    base_w = lf.width();
    base_h = lf.height();
  }
  if (!args.config.empty()) {
    const TrainConfig cfg = load_config(args.config);
    if (cfg.a > 0.0) a = cfg.a;
    if (cfg.gegenbauer) {
      GegenbauerTransform t;
      t.alpha = cfg.gegenbauer_alpha;
      t.orders = cfg.gegenbauer_orders;
      transform = t;
    }
  }
  if (args.a) a = *args.a;
  if (!(a > 0.0)) throw ConfigError("--a must be positive");
  if (!transform && net.input_dim() != 4) {
    if (net.input_dim() % 4 != 0) throw DataError("checkpoint input size " + std::to_string(net.input_dim()) + " is not 4 or 4*K");
    GegenbauerTransform t;
    t.orders = net.input_dim() / 4;
    transform = t;
  }
  if (transform && transform->output_dim() != net.input_dim()) {
    throw ConfigError("config Gegenbauer settings do not match the checkpoint input size");
  }
  if (!args.allow_extrapolated_angular && (std::abs(args.u) > a || std::abs(args.v) > a)) {
    throw ConfigError("angular position (" + std::to_string(args.u) + ", " + std::to_string(args.v) +
                      ") lies outside [-a, a] with a = " + std::to_string(a) +
                      "; the model is only trained on interpolated views (pass --allow-extrapolated-angular to "
                      "render anyway)");
  }
  const double r = args.range.value_or(a);
  if (!(r > 0.0)) throw ConfigError("--range must be positive");
  RenderRequest req;
  req.u = args.u;
  req.v = args.v;
  req.x_min = req.y_min = -r;
  req.x_max = req.y_max = r;
  if (!args.res.empty()) {
    std::tie(req.width, req.height) = parse_resolution(args.res);
  } else if (r > a) {
    // Same lattice as the generator's wide references: whole extra pixels at the source pitch.
    const std::size_t ex = wide_extension(base_w, r / a - 1.0), ey = wide_extension(base_h, r / a - 1.0);
    req.width = base_w + 2 * ex;
    req.height = base_h + 2 * ey;
    req.x_min = wide_coord(0, base_w, ex, a);
    req.x_max = -req.x_min;
    req.y_min = wide_coord(0, base_h, ey, a);
    req.y_max = -req.y_min;
  } else {
    auto scale = [&](std::size_t n) {
      return static_cast<std::size_t>(std::lround(static_cast<double>(n - 1) * r / a)) + 1;
    };
    req.width = scale(base_w);
    req.height = scale(base_h);
  }
  const bool wider = req.x_min < -a || req.x_max > a || req.y_min < -a || req.y_max > a;
  const NetworkField field(net, transform ? &*transform : nullptr);
  const Image img = wider ? render_extrapolated(field, req) : render_view(field, req);
  fs::path out = args.out.empty() ? fs::path(args.out_dir) / "render.png" : fs::path(args.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_image(img, out);
  std::cout << out.string() << "\n";
  return 0;
}

int run_eval(const std::string& a, const std::string& b, bool quantize8) {
  const Image ia = read_image(a);
  const Image ib = read_image(b);
  if (!ia.same_shape(ib)) {
    throw DimensionError("image sizes differ: " + std::to_string(ia.width) + "x" + std::to_string(ia.height) +
                         " vs " + std::to_string(ib.width) + "x" + std::to_string(ib.height));
  }
  std::cout << metric_json(evaluate_pair(ia, ib, quantize8)) << "\n";
  return 0;
}

struct DisparityArgs {
  std::string manifest;
  std::string config;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string dump_target;
};

int run_disparity(const DisparityArgs& args) {
  const TrainConfig cfg = resolve_config(args.config, args.sets);
  const StereoConfig stereo = cfg.stereo();
  LightField lf = load_lightfield(args.manifest);
  const fs::path out(args.out_dir);
  ensure_dir(out);
  LightField estimated = lf;
  for (std::size_t v = 0; v < lf.view_count(); ++v) {
    const GridPos pos = lf.position_of(v);
    const auto est = estimate_view_disparity(lf, v, stereo);
    FloatMap map{lf.width(), lf.height(), 1, std::vector<float>(est.disparity.values.begin(), est.disparity.values.end())};
    write_pfm(map, out / ("disparity_" + grid_suffix(pos) + ".pfm"));
    Image mask(lf.width(), lf.height(), 1);
    for (std::size_t p = 0; p < lf.pixel_count(); ++p) mask.data[p] = est.occlusion.bits[p] ? 1.0 : 0.0;
    write_image(mask, out / ("occlusion_" + grid_suffix(pos) + ".png"));

    std::ostringstream line;
    line.precision(6);
    line << std::fixed << "{\"view\": [" << pos.iu << ", " << pos.iv << "], \"reference\": ["
         << est.occlusion.reference_view.iu << ", " << est.occlusion.reference_view.iv << "]";
    const auto& view = lf.view(v);
    if (view.disparity) line << ", \"mae\": " << mean_absolute_difference(est.disparity.values, *view.disparity);
    if (view.occlusion && view.occlusion_ref && *view.occlusion_ref == est.occlusion.reference_view) {
      line << ", \"occlusion_iou\": " << mask_iou(est.occlusion.bits, *view.occlusion);
      if (view.disparity) {
        const auto in = reference_in_frame(lf, v, est.occlusion.reference_view, *view.disparity);
        line << ", \"occlusion_iou_in_frame\": " << mask_iou(est.occlusion.bits, *view.occlusion, in);
      }
    }
    line << "}";
    std::cout << line.str() << "\n";
    estimated.view(v).disparity = est.disparity.values;
    estimated.view(v).occlusion = est.occlusion.bits;
  }
  if (!args.dump_target.empty()) {
    std::vector<std::size_t> all(lf.view_count());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    const SourceSet src = make_source_set(estimated, all);
    const auto samples = build_correspondences(src, parse_angular(args.dump_target));
    write_correspondence_csv(src, samples, out / "correspondences.csv");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vicon: implicit light-field training with view correspondence"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads (1 = deterministic serial path)")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic layered light field");
  gen_cmd->add_option("--config", gen.config, "Scene spec JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--set", gen.sets, "Scene override key=value (JSON literal)");
  gen_cmd->add_option("--seed", gen.seed, "Scene seed");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit the light field");
  train_cmd->add_option("--manifest", tr.manifest, "Light-field manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", tr.sets, "Config override key=value");
  train_cmd->add_option("--m", tr.m, "Novel view count (0 = plain SIREN fit)");
  train_cmd->add_option("--seed", tr.seed, "Seed for every random stream");
  train_cmd->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "No progress lines");

  RenderArgs rd;
  auto* render_cmd = app.add_subcommand("render", "Render a view from a checkpoint");
  render_cmd->add_option("--model", rd.model, "Checkpoint (model.vicn)")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--u", rd.u, "Angular u");
  render_cmd->add_option("--v", rd.v, "Angular v");
  render_cmd->add_option("--a", rd.a, "Coordinate range a");
  render_cmd->add_option("--range", rd.range, "Spatial half-width; > a extrapolates the field of view");
  render_cmd->add_option("--res", rd.res, "Output resolution WxH");
  render_cmd->add_option("--manifest", rd.manifest, "Light field supplying a and the base resolution")
      ->check(CLI::ExistingFile);
  render_cmd->add_option("--config", rd.config, "Training config (a, Gegenbauer settings)")->check(CLI::ExistingFile);
  render_cmd->add_flag("--allow-extrapolated-angular", rd.allow_extrapolated_angular,
                       "Permit |u| or |v| beyond a");
  render_cmd->add_option("--out", rd.out, "Output image (.png/.ppm)");
  render_cmd->add_option("--out-dir", rd.out_dir, "Directory for render.png when --out is absent");

  std::string eval_a, eval_b;
  bool quantize8 = false;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of two images as JSON");
  eval_cmd->add_option("image_a", eval_a)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("image_b", eval_b)->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--quantize8", quantize8, "Compare after 8-bit quantization");

  DisparityArgs ds;
  auto* disp_cmd = app.add_subcommand("disparity", "Block-matching disparity and occlusion per view");
  disp_cmd->add_option("--manifest", ds.manifest, "Light-field manifest")->required()->check(CLI::ExistingFile);
  disp_cmd->add_option("--config", ds.config, "Training config JSON (stereo_* keys)")->check(CLI::ExistingFile);
  disp_cmd->add_option("--set", ds.sets, "Config override key=value");
  disp_cmd->add_option("--out-dir", ds.out_dir, "Output directory")->required();
  disp_cmd->add_option("--dump-correspondences", ds.dump_target,
                       "Write correspondences.csv for target angular 'u,v'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }

  try {
    set_num_threads(threads);
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*render_cmd) return run_render(rd);
    if (*eval_cmd) return run_eval(eval_a, eval_b, quantize8);
    if (*disp_cmd) return run_disparity(ds);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(ErrorKind::Io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
