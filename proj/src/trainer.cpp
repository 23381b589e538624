#include "vicon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "vicon/errors.hpp"
#include "vicon/kernels.hpp"
#include "vicon/render_eval.hpp"

namespace vicon {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Sum of per-chunk partial losses in chunk order.
class ChunkedSum {
 public:
  explicit ChunkedSum(std::size_t rows) : parts_((rows + kSirenChunkRows - 1) / kSirenChunkRows, 0.0) {}
  double& at(std::size_t first) { return parts_[first / kSirenChunkRows]; }
  double total() const {
    double s = 0.0;
    for (double p : parts_) s += p;
    return s;
  }

 private:
  std::vector<double> parts_;
};

}  // namespace

LossWeights loss_weights(const TrainConfig& cfg, std::size_t n) {
  if (!cfg.lambda_auto) return {cfg.lambda_s, cfg.lambda_c};
  if (n + cfg.m == 0) throw ConfigError("loss weights: no views");
  const double total = static_cast<double>(n + cfg.m);
  const double ls = static_cast<double>(n) / total;
  return {ls, 1.0 - ls};
}

double total_loss(double ls, double lc, const LossWeights& w) { return w.lambda_s * ls + w.lambda_c * lc; }

double decay_lr(double lr0, std::size_t step, const TrainConfig& cfg) {
  return lr0 * std::pow(cfg.gamma, static_cast<double>(step / cfg.decay_every));
}

AdamState::AdamState(const SirenNetwork& net, double b1, double b2, double eps)
    : m(net.parameter_count(), 0.0), v(net.parameter_count(), 0.0), beta1(b1), beta2(b2), epsilon(eps) {}

void adam_step(SirenNetwork& net, std::span<const double> grads, AdamState& state, double lr) {
  const auto params = net.parameters();
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam: gradient/state shape does not match the network");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NonFiniteError("adam: non-finite gradient at parameter " + std::to_string(i));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const kernels::AdamCoefficients k{lr, state.beta1, state.beta2, state.epsilon,
                                    1.0 - std::pow(state.beta1, t), 1.0 - std::pow(state.beta2, t)};
  kernels::adam_update(params, grads, state.m, state.v, k);
}

ReconstructionResult reconstruction_loss(const NetworkField& field, const PixelBatch& batch, double scale) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("reconstruction_loss: empty batch");
  ChunkedSum sum(n);
  const double per = scale / static_cast<double>(n);
  auto upstream = [&](std::size_t first, std::span<const double> out, std::span<double> up) {
    sum.at(first) = mae_with_upstream(out, std::span<const double>(batch.colors).subspan(3 * first, out.size()), {},
                                      per, up);
  };
  ReconstructionResult r;
  r.grads = field.parameter_pass(batch.coords, upstream);
  r.loss = sum.total() / static_cast<double>(n);
  return r;
}

std::vector<AffineViewSpec> choose_novel_specs(const LightField& lf, std::span<const std::size_t> sources,
                                               std::size_t m, NovelStrategy strategy, std::uint64_t seed) {
  std::vector<AffineViewSpec> specs;
  if (m == 0) return specs;
  const std::size_t n = sources.size();
  if (n == 0) throw ConfigError("novel views: no source views");
  if (strategy == NovelStrategy::Random) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t k = 0; k < m; ++k) {
      AffineViewSpec s{std::vector<double>(n), std::vector<double>(n)};
      for (auto* w : {&s.alphas, &s.betas}) {
        double total = 0.0;
        for (double& x : *w) total += (x = expo(rng));
        for (double& x : *w) x /= total;
      }
      specs.push_back(std::move(s));
    }
    return specs;
  }

  std::vector<int> slot(lf.view_count(), -1);
  for (std::size_t i = 0; i < n; ++i) slot.at(sources[i]) = static_cast<int>(i);
  const double nu1 = static_cast<double>(lf.nu() - 1), nv1 = static_cast<double>(lf.nv() - 1);

  struct Candidate {
    double gu, gv, lu, hu, lv, hv;
  };
  std::vector<Candidate> cands;
  auto add_level = [&](std::vector<Candidate> level) {
    const double cu = nu1 / 2.0, cv = nv1 / 2.0;
    std::stable_sort(level.begin(), level.end(), [&](const Candidate& a, const Candidate& b) {
      const double da = (a.gu - cu) * (a.gu - cu) + (a.gv - cv) * (a.gv - cv);
      const double db = (b.gu - cu) * (b.gu - cu) + (b.gv - cv) * (b.gv - cv);
      if (std::abs(da - db) > 1e-12) return da < db;
      if (a.gv != b.gv) return a.gv < b.gv;
      return a.gu < b.gu;
    });
    for (const auto& c : level) {
      const bool dup = std::any_of(cands.begin(), cands.end(), [&](const Candidate& o) {
        return std::abs(o.gu - c.gu) < 1e-9 && std::abs(o.gv - c.gv) < 1e-9;
      });
      const bool on_grid = c.gu == std::floor(c.gu) && c.gv == std::floor(c.gv);
      const bool is_source =
          on_grid && slot[lf.index_of({static_cast<int>(c.gu), static_cast<int>(c.gv)})] >= 0;
      if (!dup && !is_source) cands.push_back(c);
    }
  };
  auto bracket = [](double g, double lo, double hi) {
    if (lo != std::floor(lo) || hi != std::floor(hi)) return std::pair{std::floor(g), std::ceil(g)};
    return std::pair{lo, hi};
  };
  for (std::size_t level = 0;; ++level) {
    const double cells = std::ldexp(1.0, static_cast<int>(level));
    const double su = nu1 / cells, sv = nv1 / cells;
    if (std::max(su, sv) < 1.0) break;
    std::vector<Candidate> lv;
    const std::size_t count_u = lf.nu() > 1 ? static_cast<std::size_t>(cells) : 1;
    const std::size_t count_v = lf.nv() > 1 ? static_cast<std::size_t>(cells) : 1;
    for (std::size_t j = 0; j < count_v; ++j) {
      for (std::size_t i = 0; i < count_u; ++i) {
        const double gu = su * (static_cast<double>(i) + 0.5), gv = sv * (static_cast<double>(j) + 0.5);
        const auto [lu, hu] = bracket(gu, gu - su / 2, gu + su / 2);
        const auto [lvv, hv] = bracket(gv, gv - sv / 2, gv + sv / 2);
        lv.push_back({gu, gv, lu, hu, lvv, hv});
      }
    }
    add_level(std::move(lv));
  }
  {
    std::vector<Candidate> mids;
    const std::size_t cu = lf.nu() > 1 ? lf.nu() - 1 : 1, cv = lf.nv() > 1 ? lf.nv() - 1 : 1;
    for (std::size_t j = 0; j < cv; ++j) {
      for (std::size_t i = 0; i < cu; ++i) {
        const double gu = lf.nu() > 1 ? static_cast<double>(i) + 0.5 : 0.0;
        const double gv = lf.nv() > 1 ? static_cast<double>(j) + 0.5 : 0.0;
        mids.push_back({gu, gv, std::floor(gu), std::ceil(gu), std::floor(gv), std::ceil(gv)});
      }
    }
    add_level(std::move(mids));
  }
  if (m > cands.size()) {
    throw ConfigError("novel views: m=" + std::to_string(m) + " exceeds the " + std::to_string(cands.size()) +
                      " available midpoints");
  }

  auto source_at = [&](double gu, double gv) {
    return slot[lf.index_of({static_cast<int>(gu), static_cast<int>(gv)})];
  };
  // Source in column `gu` (or row `gv` when by_row) closest to the other coordinate.
  auto nearest_in_line = [&](double line, double other, bool by_row) {
    int best = -1;
    double best_d = 1e300;
    const std::size_t len = by_row ? lf.nu() : lf.nv();
    for (std::size_t k = 0; k < len; ++k) {
      const int s = by_row ? source_at(static_cast<double>(k), line) : source_at(line, static_cast<double>(k));
      const double d = std::abs(static_cast<double>(k) - other);
      if (s >= 0 && d < best_d) {
        best = s;
        best_d = d;
      }
    }
    if (best < 0) throw ConfigError("novel views: no source view on a bracketing grid line");
    return static_cast<std::size_t>(best);
  };
  for (std::size_t k = 0; k < m; ++k) {
    const auto& c = cands[k];
    const double wu = c.hu > c.lu ? (c.gu - c.lu) / (c.hu - c.lu) : 0.0;
    const double wv = c.hv > c.lv ? (c.gv - c.lv) / (c.hv - c.lv) : 0.0;
    AffineViewSpec s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    const int c00 = source_at(c.lu, c.lv), c10 = source_at(c.hu, c.lv);
    const int c01 = source_at(c.lu, c.hv), c11 = source_at(c.hu, c.hv);
    if (c00 >= 0 && c10 >= 0 && c01 >= 0 && c11 >= 0) {
      const double w[4] = {(1 - wu) * (1 - wv), wu * (1 - wv), (1 - wu) * wv, wu * wv};
      const int idx[4] = {c00, c10, c01, c11};
      for (int q = 0; q < 4; ++q) {
        s.alphas[static_cast<std::size_t>(idx[q])] += w[q];
        s.betas[static_cast<std::size_t>(idx[q])] += w[q];
      }
    } else {
      s.alphas[nearest_in_line(c.lu, c.gv, false)] += 1 - wu;
      s.alphas[nearest_in_line(c.hu, c.gv, false)] += wu;
      s.betas[nearest_in_line(c.lv, c.gu, true)] += 1 - wv;
      s.betas[nearest_in_line(c.hv, c.gu, true)] += wv;
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(10);
  f << "step,l_s,l_c,l_d,lr_adam,lr_sgd,psnr_holdout\n";
  for (const auto& r : report.rows) {
    f << r.step << ',' << r.l_s << ',' << r.l_c << ',';
    if (r.l_d) f << *r.l_d;
    f << ',' << r.lr_adam << ',' << r.lr_sgd << ',';
    if (r.psnr_holdout) f << *r.psnr_holdout;
    f << '\n';
  }
  if (!f) throw IoError("write failed for " + path.string());
}

HoldoutMetrics evaluate_views(const RadianceField& field, const LightField& lf, std::span<const std::size_t> views) {
  HoldoutMetrics h;
  if (views.empty()) return h;
  for (auto v : views) {
    const auto img = render_view(field, lattice_request(lf, lf.angular(v)));
    h.psnr += psnr(img, lf.view(v).pixels);
    h.ssim += ssim(img, lf.view(v).pixels);
  }
  h.psnr /= static_cast<double>(views.size());
  h.ssim /= static_cast<double>(views.size());
  return h;
}

NetworkField field_of(const TrainResult& result) {
  return NetworkField(result.net, result.transform ? &*result.transform : nullptr);
}

TrainResult train(const LightField& lf_in, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  LightField lf = lf_in;
  if (cfg.a > 0.0 && cfg.a != lf.a()) lf.set_range(cfg.a);
  lf.validate();

  TrainResult result;
  std::vector<bool> held(lf.view_count(), false);
  std::vector<std::size_t> holdout;
  for (const auto& h : cfg.holdout) {
    const auto idx = lf.index_of(h);
    if (!held[idx]) holdout.push_back(idx);
    held[idx] = true;
  }
  for (std::size_t v = 0; v < lf.view_count(); ++v) {
    if (!held[v]) result.sources.push_back(v);
  }
  if (result.sources.empty()) throw ConfigError("train: every view is held out");
  const auto& sources = result.sources;
  const std::size_t n = sources.size();

  if (cfg.gegenbauer) {
    GegenbauerTransform t;
    t.alpha = cfg.gegenbauer_alpha;
    t.orders = cfg.gegenbauer_orders;
    t.validate();
    result.transform = t;
  }
  const auto arch = cfg.architecture();
  result.net = init_weights(arch, cfg.omega0, cfg.seed);
  SirenNetwork& net = result.net;
  const NetworkField field(net, result.transform ? &*result.transform : nullptr);

  const bool need_correspondence = cfg.m > 0 || cfg.refine_disparity;
  SourceSet src;
  src.lf = &lf;
  src.views = sources;
  const std::size_t span_px = lf.nu() >= 2 ? lf.width() : lf.height();
  const std::size_t grid_n = lf.nu() >= 2 ? lf.nu() : lf.nv();
  const double d_max = grid_n >= 2 ? disparity_from_grid_shift(cfg.stereo_d_max, span_px, grid_n, lf.a()) : 0.0;
  if (need_correspondence) {
    for (auto v : sources) {
      const auto& view = lf.view(v);
      DisparityMap map{lf.width(), lf.height(), {}, lf.position_of(v), !cfg.refine_disparity, d_max};
      std::vector<std::uint8_t> occ;
      const bool use_layers = cfg.disparity_init == DisparityInit::Layers ||
                              (cfg.disparity_init == DisparityInit::Auto && view.disparity.has_value());
      if (use_layers) {
        if (!view.disparity) {
          const auto p = lf.position_of(v);
          throw DataError("train: view (" + std::to_string(p.iu) + "," + std::to_string(p.iv) +
                          ") has no disparity layer");
        }
        map.values = *view.disparity;
        if (cfg.use_source_occlusion && view.occlusion) occ = *view.occlusion;
      } else {
        auto est = estimate_view_disparity(lf, v, cfg.stereo());
        map.values = std::move(est.disparity.values);
        if (cfg.use_source_occlusion) occ = std::move(est.occlusion.bits);
      }
      for (double d : map.values) map.d_max = std::max(map.d_max, d);
      src.disparity.push_back(map.values);
      src.occlusion.push_back(std::move(occ));
      result.disparities.push_back(std::move(map));
    }
  }

  const auto weights = loss_weights(cfg, n);
  std::vector<Angular> targets;
  if (cfg.m > 0) {
    std::vector<Angular> ang;
    for (auto v : sources) ang.push_back(lf.angular(v));
    for (const auto& s : choose_novel_specs(lf, sources, cfg.m, cfg.novel_strategy, mix_seed(cfg.seed, 3))) {
      targets.push_back(validate_affine(s, ang));
    }
  }
  std::vector<CorrespondenceSample> corr, known;
  CorrespondenceOptions known_opt;
  known_opt.keep_outside_novel = false;
  auto rebuild = [&] {
    corr.clear();
    for (const auto& t : targets) {
      auto s = build_correspondences(src, t);
      corr.insert(corr.end(), s.begin(), s.end());
    }
    if (cfg.refine_disparity) known = build_known_view_pairs(src, known_opt);
  };
  if (need_correspondence) rebuild();

  BatchSampler sampler(lf, sources, mix_seed(cfg.seed, 1));
  std::mt19937_64 corr_rng(mix_seed(cfg.seed, 2));
  AdamState adam(net, cfg.beta1, cfg.beta2, cfg.epsilon);
  SirenNetwork last_good = net;
  const std::size_t batch = cfg.batch_size;

  try {
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
      ReportRow row;
      row.step = step;
      row.lr_adam = decay_lr(cfg.adam_lr, step, cfg);
      row.lr_sgd = decay_lr(cfg.sgd_lr, step, cfg);

      const auto pixels = sampler.sample(batch);
      auto rs = reconstruction_loss(field, pixels, weights.lambda_s);
      row.l_s = rs.loss;
      auto& grads = rs.grads.param_grads;

      if (weights.lambda_c > 0.0 && !corr.empty()) {
        std::uniform_int_distribution<std::size_t> pick_dist(0, corr.size() - 1);
        std::vector<std::size_t> pick(batch);
        for (auto& p : pick) p = pick_dist(corr_rng);
        const auto packed = pack_samples(corr, pick);
        ChunkedSum sum(batch);
        const double per = weights.lambda_c / static_cast<double>(batch);
        auto upstream = [&](std::size_t first, std::span<const double> out, std::span<double> up) {
          const std::size_t rows = out.size() / 3;
          sum.at(first) = mae_with_upstream(out, std::span<const double>(packed.colors).subspan(3 * first, out.size()),
                                            std::span<const std::uint8_t>(packed.mask).subspan(first, rows), per, up);
        };
        const auto gc = field.parameter_pass(packed.coords, upstream);
        row.l_c = sum.total() / static_cast<double>(batch);
        for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += gc.param_grads[i];
      }
      const double total = total_loss(row.l_s, row.l_c, weights);
      if (!std::isfinite(total)) throw NonFiniteError("train: non-finite loss at step " + std::to_string(step));
      adam_step(net, grads, adam, row.lr_adam);
      if (!net.all_finite()) throw NonFiniteError("train: non-finite weights after step " + std::to_string(step));
      last_good = net;

      if (cfg.refine_disparity && step + 1 > cfg.refine_warmup && (step + 1) % cfg.refine_every == 0 &&
          !known.empty()) {
        const auto dg = disparity_loss(field, known, n, lf.pixel_count());
        row.l_d = dg.loss;
        for (std::size_t i = 0; i < n; ++i) {
          result.disparities[i] = refine_step(result.disparities[i], dg.grads[i], row.lr_sgd);
          src.disparity[i] = result.disparities[i].values;
        }
        rebuild();
      }

      const bool last = step + 1 == cfg.total_steps;
      if (!holdout.empty() && (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0))) {
        const auto h = evaluate_views(field, lf, holdout);
        row.psnr_holdout = h.psnr;
        row.ssim_holdout = h.ssim;
      }
      if (hooks.on_row) hooks.on_row(row);
      result.report.rows.push_back(row);
      if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
        hooks.on_checkpoint(step + 1, net);
      }
    }
  } catch (const NonFiniteError&) {
    if (hooks.on_divergence) hooks.on_divergence(last_good);
    throw;
  }
  return result;
}

}  // namespace vicon
