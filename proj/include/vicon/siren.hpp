#pragma once

// Sinusoidal MLP: every layer but the last applies sin(omega0 * (W x + b)),
// the last layer is affine. Forward and reverse passes are hand-derived and
// run over fixed-size row chunks through the kernels in kernels.hpp.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace vicon {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;   // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), biases(out_dim, 0.0) {}
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  bool operator==(const LayerShape&) const = default;
};

template <typename T>
struct LayerParams {
  LayerShape shape;
  std::span<T> weights;
  std::span<T> biases;
};

class SirenNetwork {
 public:
  SirenNetwork() = default;
  // Throws ConfigError/DimensionError on a broken layer chain or omega0 <= 0.
  SirenNetwork(std::vector<DenseLayer> layers, double omega0);
  SirenNetwork(std::vector<LayerShape> shapes, double omega0);

  std::size_t layer_count() const noexcept { return shapes_.size(); }
  const std::vector<LayerShape>& shapes() const noexcept { return shapes_; }
  double omega0() const noexcept { return omega0_; }
  std::size_t input_dim() const noexcept { return shapes_.empty() ? 0 : shapes_.front().in; }
  std::size_t output_dim() const noexcept { return shapes_.empty() ? 0 : shapes_.back().out; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  LayerParams<double> layer(std::size_t l);
  LayerParams<const double> layer(std::size_t l) const;

  // Flat parameter vector: per layer, row-major weights then biases.
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  bool all_finite() const noexcept;
  bool operator==(const SirenNetwork& other) const = default;

 private:
  void build_offsets();

  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  double omega0_ = 30.0;
};

/// Layer sizes including input and output, e.g. {4, 128, 128, 128, 128, 3}.
SirenNetwork init_weights(std::span<const std::size_t> arch, double omega0, std::uint64_t seed);

struct GradientBundle {
  std::vector<double> param_grads;  // same layout as SirenNetwork::parameters()
  std::vector<double> input_grads;  // batch x input_dim

  LayerParams<const double> layer(const SirenNetwork& shape_source, std::size_t l) const;
  bool all_finite() const noexcept;
};

enum class GradTargets : unsigned { Params = 1, Inputs = 2, Both = 3 };

/// Evaluates the network on a batch of row-major coordinates (input_dim each).
void forward(const SirenNetwork& net, std::span<const double> coords, std::span<double> out);
std::vector<double> forward(const SirenNetwork& net, std::span<const double> coords);

/// Receives a chunk of outputs starting at row `first` and writes dLoss/dOutput
/// for those rows into `upstream`. May be called concurrently for distinct chunks.
using UpstreamFn =
    std::function<void(std::size_t first, std::span<const double> outputs, std::span<double> upstream)>;

/// Fused forward + reverse pass. Parameter gradients are summed over the batch;
/// input gradients are per sample. The reduction order is fixed by chunk index.
GradientBundle forward_backward(const SirenNetwork& net, std::span<const double> coords,
                                const UpstreamFn& upstream_fn, GradTargets targets = GradTargets::Both);

/// Reverse pass for a given upstream gradient (batch x output_dim).
GradientBundle backward(const SirenNetwork& net, std::span<const double> coords,
                        std::span<const double> upstream, GradTargets targets = GradTargets::Both);

/// Rows per chunk in forward/backward; fixes the reduction order.
inline constexpr std::size_t kSirenChunkRows = 128;

// Binary checkpoint: "VICN", u32 version, u32 layer count, (u32 in, u32 out)
// per layer, f64 omega0, then per layer f64 weights and biases. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const SirenNetwork& net, const std::filesystem::path& path);
SirenNetwork load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const SirenNetwork& net);
SirenNetwork decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace vicon
