#pragma once

// Training loop: L_S on source views, L_C on novel views, Adam on the
// network, SGD on the disparity maps driven by L_D.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vicon/correspondence.hpp"
#include "vicon/disparity.hpp"
#include "vicon/lightfield.hpp"
#include "vicon/siren.hpp"

namespace vicon {

enum class NovelStrategy { Midpoint, Random };
enum class DisparityInit { Auto, Layers, BlockMatch };

struct TrainConfig {
  // network
  std::size_t width = 128;
  std::size_t hidden_layers = 4;
  double omega0 = 30.0;
  bool gegenbauer = false;
  std::size_t gegenbauer_orders = 16;
  double gegenbauer_alpha = 0.5;

  // losses
  std::size_t m = 4;
  bool lambda_auto = true;
  double lambda_s = 1.0;
  double lambda_c = 0.0;
  NovelStrategy novel_strategy = NovelStrategy::Midpoint;
  bool use_source_occlusion = true;

  // optimization
  double adam_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double sgd_lr = 2e5;
  double gamma = 0.9;
  std::size_t decay_every = 150;
  std::size_t batch_size = 2048;
  std::size_t total_steps = 2000;
  std::uint64_t seed = 1;
  double a = 0.0;  // 0 keeps the light field's range

  // disparity
  bool refine_disparity = true;
  std::size_t refine_every = 10;
  std::size_t refine_warmup = 300;
  DisparityInit disparity_init = DisparityInit::Auto;
  std::size_t stereo_window = 9;
  double stereo_d_max = 24.0;  // pixels per grid step
  double stereo_lr_threshold = 1.0;

  // bookkeeping
  std::vector<GridPos> holdout;
  std::size_t eval_every = 0;  // 0 = only at the end
  std::size_t checkpoint_every = 500;

  void validate() const;
  std::vector<std::size_t> architecture() const;
  StereoConfig stereo() const;
};

std::string config_to_json(const TrainConfig& cfg);
/// Unknown keys and mistyped values raise ConfigError.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// Applies "key=value" overrides; values are JSON literals or bare strings.
TrainConfig apply_overrides(const TrainConfig& cfg, const std::vector<std::string>& overrides);

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_c = 0.0;
};

/// n/(n+m), m/(n+m) in auto mode, the configured values otherwise.
LossWeights loss_weights(const TrainConfig& cfg, std::size_t n);
double total_loss(double ls, double lc, const LossWeights& w);

/// lr0 * gamma^floor(step / decay_every).
double decay_lr(double lr0, std::size_t step, const TrainConfig& cfg);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const SirenNetwork& net, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8);
};

/// Bias-corrected Adam update in place. Throws NonFiniteError on a non-finite gradient.
void adam_step(SirenNetwork& net, std::span<const double> grads, AdamState& state, double lr);

struct ReconstructionResult {
  double loss = 0.0;
  GradientBundle grads;
};

/// Per-channel-mean MAE over a pixel batch with parameter gradients scaled by `scale`.
ReconstructionResult reconstruction_loss(const NetworkField& field, const PixelBatch& batch, double scale = 1.0);

/// Novel views as convex weights over `sources` (grid positions of the source views).
std::vector<AffineViewSpec> choose_novel_specs(const LightField& lf, std::span<const std::size_t> sources,
                                               std::size_t m, NovelStrategy strategy, std::uint64_t seed);

struct ReportRow {
  std::size_t step = 0;
  double l_s = 0.0;
  double l_c = 0.0;
  std::optional<double> l_d;
  double lr_adam = 0.0;
  double lr_sgd = 0.0;
  std::optional<double> psnr_holdout;
  std::optional<double> ssim_holdout;
};

struct TrainReport {
  std::vector<ReportRow> rows;
};

void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

struct TrainHooks {
  std::function<void(const ReportRow&)> on_row;
  std::function<void(std::size_t step, const SirenNetwork&)> on_checkpoint;
  /// Called with the last finite network before a NonFiniteError propagates.
  std::function<void(const SirenNetwork&)> on_divergence;
};

struct TrainResult {
  SirenNetwork net;
  std::vector<std::size_t> sources;       // view indices
  std::vector<DisparityMap> disparities;  // per source, refined
  TrainReport report;
  std::optional<GegenbauerTransform> transform;
};

TrainResult train(const LightField& lf, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Field for a trained result (applies the Gegenbauer transform when configured).
NetworkField field_of(const TrainResult& result);

/// Mean PSNR / SSIM of renders at the given views against their images.
struct HoldoutMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};
HoldoutMetrics evaluate_views(const RadianceField& field, const LightField& lf, std::span<const std::size_t> views);

}  // namespace vicon
