#include "vicon/siren.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vicon/errors.hpp"
#include "vicon/kernels.hpp"
#include "vicon/parallel.hpp"

namespace vicon {
namespace {

using kernels::ConstMatrixView;
using kernels::MatrixView;

void check_chain(const std::vector<LayerShape>& shapes, double omega0) {
  if (shapes.empty()) throw ConfigError("siren: network needs at least one layer");
  if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw ConfigError("siren: omega0 must be positive");
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    if (shapes[l].in == 0 || shapes[l].out == 0) {
      throw ConfigError("siren: layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l + 1 < shapes.size() && shapes[l].out != shapes[l + 1].in) {
      throw DimensionError("siren: layer " + std::to_string(l) + " output does not chain into layer " +
                           std::to_string(l + 1));
    }
  }
}

// Scratch buffers for one chunk; reused across calls on the same thread.
struct Workspace {
  std::vector<std::vector<double>> wt;    // per layer W^T (in x out)
  std::vector<std::vector<double>> act;   // per hidden layer sin(omega0 z), rows x out
  std::vector<std::vector<double>> dact;  // per hidden layer cos(omega0 z)
  std::vector<double> out;
  std::vector<double> upstream;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  std::vector<double> delta_t;
  std::vector<double> grads;
};

Workspace& thread_workspace() {
  thread_local Workspace ws;
  return ws;
}

// W^T for every layer; shared read-only by all chunks of one call.
std::vector<std::vector<double>> transposed_weights(const SirenNetwork& net) {
  std::vector<std::vector<double>> wt(net.layer_count());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto p = net.layer(l);
    auto& t = wt[l];
    t.resize(p.shape.in * p.shape.out);
    for (std::size_t r = 0; r < p.shape.out; ++r) {
      for (std::size_t c = 0; c < p.shape.in; ++c) t[c * p.shape.out + r] = p.weights[r * p.shape.in + c];
    }
  }
  return wt;
}

// Computes all layer outputs for `rows` samples, caching sin/cos of hidden layers.
void forward_chunk(const SirenNetwork& net, const std::vector<std::vector<double>>& wt,
                   const double* coords, std::size_t rows, Workspace& ws) {
  const std::size_t layers = net.layer_count();
  ws.act.resize(layers);
  ws.dact.resize(layers);
  const double omega = net.omega0();
  const double* input = coords;
  std::size_t input_cols = net.input_dim();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto p = net.layer(l);
    const std::size_t out_cols = p.shape.out;
    const bool last = l + 1 == layers;
    std::vector<double>& z = last ? ws.out : ws.act[l];
    z.resize(rows * out_cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(p.biases.begin(), p.biases.end(), z.begin() + static_cast<std::ptrdiff_t>(r * out_cols));
    }
    kernels::gemm(ConstMatrixView{input, rows, input_cols, input_cols},
                  ConstMatrixView{wt[l].data(), input_cols, out_cols, out_cols},
                  MatrixView{z.data(), rows, out_cols, out_cols}, true);
    if (!last) {
      auto& c = ws.dact[l];
      c.resize(z.size());
      for (double& v : z) v *= omega;
      kernels::sincos(z, z, c);
      input = z.data();
      input_cols = out_cols;
    }
  }
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// Reverse pass over one chunk. Parameter gradients are written (not added) into
// ws.grads; input gradients into input_grads when non-null.
void backward_chunk(const SirenNetwork& net, const double* coords, std::size_t rows,
                    const double* upstream, bool want_params, double* input_grads, Workspace& ws) {
  const std::size_t layers = net.layer_count();
  const double omega = net.omega0();
  if (want_params) ws.grads.assign(net.parameter_count(), 0.0);

  ws.delta.assign(upstream, upstream + rows * net.output_dim());
  std::size_t offset = net.parameter_count();
  for (std::size_t li = layers; li-- > 0;) {
    const auto p = net.layer(li);
    const std::size_t in = p.shape.in;
    const std::size_t out = p.shape.out;
    offset -= in * out + out;
    if (li + 1 < layers) {
      // delta currently holds dL/d(sin(omega z)); turn it into dL/dz.
      kernels::scaled_product(omega, ws.delta, ws.dact[li], ws.delta);
    }
    const double* layer_input = li == 0 ? coords : ws.act[li - 1].data();
    if (want_params) {
      transpose_into(ws.delta.data(), rows, out, ws.delta_t);
      kernels::gemm(ConstMatrixView{ws.delta_t.data(), out, rows, rows},
                    ConstMatrixView{layer_input, rows, in, in},
                    MatrixView{ws.grads.data() + offset, out, in, in}, false);
      double* bias_grad = ws.grads.data() + offset + in * out;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* d = ws.delta.data() + r * out;
        for (std::size_t c = 0; c < out; ++c) bias_grad[c] += d[c];
      }
    }
    if (li > 0 || input_grads != nullptr) {
      double* dst = nullptr;
      if (li == 0) {
        dst = input_grads;
      } else {
        ws.delta_prev.resize(rows * in);
        dst = ws.delta_prev.data();
      }
      kernels::gemm(ConstMatrixView{ws.delta.data(), rows, out, out},
                    ConstMatrixView{p.weights.data(), out, in, in}, MatrixView{dst, rows, in, in}, false);
      if (li > 0) std::swap(ws.delta, ws.delta_prev);
    }
  }
}

void check_batch(const SirenNetwork& net, std::span<const double> coords) {
  if (net.layer_count() == 0) throw ConfigError("siren: empty network");
  if (coords.size() % net.input_dim() != 0) {
    throw DimensionError("siren: coordinate buffer is not a multiple of input_dim " +
                         std::to_string(net.input_dim()));
  }
}

}  // namespace

SirenNetwork::SirenNetwork(std::vector<LayerShape> shapes, double omega0)
    : shapes_(std::move(shapes)), omega0_(omega0) {
  check_chain(shapes_, omega0_);
  build_offsets();
}

SirenNetwork::SirenNetwork(std::vector<DenseLayer> layers, double omega0) : omega0_(omega0) {
  for (const auto& layer : layers) {
    if (layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out) {
      throw DimensionError("siren: dense layer storage does not match its declared shape");
    }
    shapes_.push_back({layer.in, layer.out});
  }
  check_chain(shapes_, omega0_);
  build_offsets();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto p = layer(l);
    std::copy(layers[l].weights.begin(), layers[l].weights.end(), p.weights.begin());
    std::copy(layers[l].biases.begin(), layers[l].biases.end(), p.biases.begin());
  }
}

void SirenNetwork::build_offsets() {
  offsets_.clear();
  std::size_t total = 0;
  for (const auto& s : shapes_) {
    offsets_.push_back(total);
    total += s.in * s.out + s.out;
  }
  params_.assign(total, 0.0);
}

LayerParams<double> SirenNetwork::layer(std::size_t l) {
  const auto s = shapes_.at(l);
  std::span<double> all(params_);
  return {s, all.subspan(offsets_[l], s.in * s.out), all.subspan(offsets_[l] + s.in * s.out, s.out)};
}

LayerParams<const double> SirenNetwork::layer(std::size_t l) const {
  const auto s = shapes_.at(l);
  std::span<const double> all(params_);
  return {s, all.subspan(offsets_[l], s.in * s.out), all.subspan(offsets_[l] + s.in * s.out, s.out)};
}

bool SirenNetwork::all_finite() const noexcept {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

SirenNetwork init_weights(std::span<const std::size_t> arch, double omega0, std::uint64_t seed) {
  if (arch.size() < 2) throw ConfigError("siren: architecture needs input and output sizes");
  std::vector<LayerShape> shapes;
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    if (arch[i] == 0 || arch[i + 1] == 0) throw ConfigError("siren: layer sizes must be positive");
    shapes.push_back({arch[i], arch[i + 1]});
  }
  SirenNetwork net(std::move(shapes), omega0);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto p = net.layer(l);
    const double fan_in = static_cast<double>(p.shape.in);
    const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : p.weights) w = dist(rng);
    std::fill(p.biases.begin(), p.biases.end(), 0.0);
  }
  return net;
}

LayerParams<const double> GradientBundle::layer(const SirenNetwork& shape_source, std::size_t l) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < l; ++i) {
    const auto s = shape_source.shapes().at(i);
    offset += s.in * s.out + s.out;
  }
  const auto s = shape_source.shapes().at(l);
  std::span<const double> all(param_grads);
  return {s, all.subspan(offset, s.in * s.out), all.subspan(offset + s.in * s.out, s.out)};
}

bool GradientBundle::all_finite() const noexcept {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(param_grads.begin(), param_grads.end(), finite) &&
         std::all_of(input_grads.begin(), input_grads.end(), finite);
}

void forward(const SirenNetwork& net, std::span<const double> coords, std::span<double> out) {
  check_batch(net, coords);
  const std::size_t batch = coords.size() / net.input_dim();
  if (out.size() != batch * net.output_dim()) throw DimensionError("siren: output buffer size mismatch");
  const auto wt = transposed_weights(net);
  const std::size_t chunks = (batch + kSirenChunkRows - 1) / kSirenChunkRows;
  parallel_for(chunks, [&](std::size_t ci) {
    const std::size_t first = ci * kSirenChunkRows;
    const std::size_t rows = std::min(kSirenChunkRows, batch - first);
    Workspace& ws = thread_workspace();
    forward_chunk(net, wt, coords.data() + first * net.input_dim(), rows, ws);
    std::copy(ws.out.begin(), ws.out.end(), out.begin() + static_cast<std::ptrdiff_t>(first * net.output_dim()));
  });
}

std::vector<double> forward(const SirenNetwork& net, std::span<const double> coords) {
  check_batch(net, coords);
  std::vector<double> out(coords.size() / net.input_dim() * net.output_dim());
  forward(net, coords, out);
  return out;
}

GradientBundle forward_backward(const SirenNetwork& net, std::span<const double> coords,
                                const UpstreamFn& upstream_fn, GradTargets targets) {
  check_batch(net, coords);
  const std::size_t batch = coords.size() / net.input_dim();
  const bool want_params = (static_cast<unsigned>(targets) & static_cast<unsigned>(GradTargets::Params)) != 0;
  const bool want_inputs = (static_cast<unsigned>(targets) & static_cast<unsigned>(GradTargets::Inputs)) != 0;

  GradientBundle result;
  if (want_params) result.param_grads.assign(net.parameter_count(), 0.0);
  if (want_inputs) result.input_grads.assign(coords.size(), 0.0);

  const auto wt = transposed_weights(net);
  const std::size_t chunks = (batch + kSirenChunkRows - 1) / kSirenChunkRows;
  const std::size_t out_dim = net.output_dim();

  auto run_chunk = [&](std::size_t ci, Workspace& ws) {
    const std::size_t first = ci * kSirenChunkRows;
    const std::size_t rows = std::min(kSirenChunkRows, batch - first);
    const double* chunk_coords = coords.data() + first * net.input_dim();
    forward_chunk(net, wt, chunk_coords, rows, ws);
    ws.upstream.assign(rows * out_dim, 0.0);
    upstream_fn(first, ws.out, ws.upstream);
    for (std::size_t i = 0; i < ws.upstream.size(); ++i) {
      if (!std::isfinite(ws.upstream[i])) {
        throw NonFiniteError("siren: non-finite upstream gradient at sample " +
                             std::to_string(first + i / out_dim));
      }
    }
    double* input_grads = want_inputs ? result.input_grads.data() + first * net.input_dim() : nullptr;
    backward_chunk(net, chunk_coords, rows, ws.upstream.data(), want_params, input_grads, ws);
  };

  if (num_threads() <= 1 || chunks <= 1) {
    Workspace& ws = thread_workspace();
    for (std::size_t ci = 0; ci < chunks; ++ci) {
      run_chunk(ci, ws);
      if (want_params) {
        for (std::size_t i = 0; i < ws.grads.size(); ++i) result.param_grads[i] += ws.grads[i];
      }
    }
    return result;
  }

  std::vector<std::vector<double>> chunk_grads(want_params ? chunks : 0);
  parallel_for(chunks, [&](std::size_t ci) {
    Workspace& ws = thread_workspace();
    run_chunk(ci, ws);
    if (want_params) chunk_grads[ci] = ws.grads;
  });
  for (const auto& g : chunk_grads) {
    for (std::size_t i = 0; i < g.size(); ++i) result.param_grads[i] += g[i];
  }
  return result;
}

GradientBundle backward(const SirenNetwork& net, std::span<const double> coords,
                        std::span<const double> upstream, GradTargets targets) {
  check_batch(net, coords);
  const std::size_t batch = coords.size() / net.input_dim();
  if (upstream.size() != batch * net.output_dim()) throw DimensionError("siren: upstream size mismatch");
  const std::size_t out_dim = net.output_dim();
  return forward_backward(
      net, coords,
      [&](std::size_t first, std::span<const double> outputs, std::span<double> up) {
        std::copy_n(upstream.begin() + static_cast<std::ptrdiff_t>(first * out_dim), outputs.size(), up.begin());
      },
      targets);
}

}  // namespace vicon
