#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "vicon/errors.hpp"
#include "vicon/siren.hpp"

namespace vicon {
namespace {

constexpr char kMagic[4] = {'V', 'I', 'C', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) throw CorruptFileError("checkpoint: truncated payload");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const SirenNetwork& net) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& s : net.shapes()) {
    put_u32(out, static_cast<std::uint32_t>(s.in));
    put_u32(out, static_cast<std::uint32_t>(s.out));
  }
  put_f64(out, net.omega0());
  for (double v : net.parameters()) put_f64(out, v);
  return out;
}

SirenNetwork decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (expected \"VICN\")");
  }
  Reader in(bytes.subspan(4));
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = in.u32();
  if (count == 0) throw CorruptFileError("checkpoint: zero layers");
  in.need(static_cast<std::size_t>(count) * 8);
  std::vector<LayerShape> shapes;
  std::size_t params = 0;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto i = in.u32();
    const auto o = in.u32();
    if (i == 0 || o == 0) throw CorruptFileError("checkpoint: zero layer dimension");
    if (!shapes.empty() && shapes.back().out != i) {
      throw CorruptFileError("checkpoint: layer dimensions do not chain");
    }
    shapes.push_back({i, o});
    params += static_cast<std::size_t>(i) * o + o;
  }
  const double omega0 = in.f64();
  if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw CorruptFileError("checkpoint: invalid omega0");
  if (in.remaining() != params * 8) {
    throw CorruptFileError("checkpoint: payload length " + std::to_string(in.remaining()) +
                           " bytes does not match header (" + std::to_string(params * 8) + ")");
  }
  SirenNetwork net(std::move(shapes), omega0);
  for (double& v : net.parameters()) v = in.f64();
  return net;
}

void save_checkpoint(const SirenNetwork& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("checkpoint: write failed for " + path.string());
}

SirenNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace vicon
