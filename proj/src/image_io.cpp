#include "vicon/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "vicon/errors.hpp"

namespace vicon {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::string& header, const std::uint8_t* data,
                 std::size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoError("write failed for " + path.string());
}

// Whitespace/comment-separated header tokens of the netpbm family.
class HeaderTokens {
 public:
  HeaderTokens(const std::vector<std::uint8_t>& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

  std::string next() {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    std::string token;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) token.push_back(static_cast<char>(bytes_[pos_++]));
    if (token.empty()) throw DataError(what_ + ": truncated header");
    return token;
  }

  long integer() {
    const auto t = next();
    try {
      std::size_t used = 0;
      const long v = std::stol(t, &used);
      if (used != t.size() || v < 0) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw DataError(what_ + ": bad header field '" + t + "'");
    }
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size()) throw DataError(what_ + ": missing payload");
    return pos_ + 1;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

Image read_netpbm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  HeaderTokens tokens(bytes, path.string());
  const auto magic = tokens.next();
  std::size_t channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw DataError(path.string() + ": unsupported netpbm type " + magic);
  }
  const auto w = static_cast<std::size_t>(tokens.integer());
  const auto h = static_cast<std::size_t>(tokens.integer());
  const auto maxval = tokens.integer();
  if (w == 0 || h == 0) throw DataError(path.string() + ": empty image");
  if (maxval <= 0 || maxval > 255) throw DataError(path.string() + ": only 8-bit netpbm is supported");
  const std::size_t offset = tokens.payload_offset();
  const std::size_t need = w * h * channels;
  if (bytes.size() < offset + need) throw DataError(path.string() + ": truncated pixel data");
  Image img(w, h, channels);
  for (std::size_t i = 0; i < need; ++i) img.data[i] = static_cast<double>(bytes[offset + i]) / maxval;
  return img;
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError(path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::size_t channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError(path.string() + ": " + msg);
  }
  Image img(png.width, png.height, channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

std::uint8_t to_byte(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return read_netpbm(bytes, path);
  throw DataError(path.string() + ": unrecognized image format");
}

void write_image(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw DataError("write_image: need 1 or 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
      throw IoError(path.string() + ": " + png.message);
    }
    return;
  }
  if (ext == ".ppm" || ext == ".pgm") {
    const bool want_gray = ext == ".pgm";
    if (want_gray != (image.channels == 1)) {
      throw DataError("write_image: " + ext + " does not match channel count");
    }
    std::ostringstream header;
    header << (want_gray ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
    write_bytes(path, header.str(), bytes.data(), bytes.size());
    return;
  }
  throw DataError("write_image: unsupported extension '" + ext + "'");
}

FloatMap read_pfm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  HeaderTokens tokens(bytes, path.string());
  const auto magic = tokens.next();
  FloatMap map;
  if (magic == "Pf") {
    map.channels = 1;
  } else if (magic == "PF") {
    map.channels = 3;
  } else {
    throw DataError(path.string() + ": not a PFM file");
  }
  map.width = static_cast<std::size_t>(tokens.integer());
  map.height = static_cast<std::size_t>(tokens.integer());
  const auto scale_token = tokens.next();
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw DataError(path.string() + ": bad PFM scale '" + scale_token + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw DataError(path.string() + ": bad PFM scale");
  const bool little = scale < 0.0;
  const std::size_t offset = tokens.payload_offset();
  const std::size_t count = map.width * map.height * map.channels;
  if (bytes.size() < offset + count * 4) throw DataError(path.string() + ": truncated PFM payload");
  map.data.resize(count);
  const std::size_t row = map.width * map.channels;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + offset + 4 * i;
    const std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                                         std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24)
                                      : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 |
                                         std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24);
    const std::size_t file_row = i / row;
    const std::size_t mem_row = map.height - 1 - file_row;
    map.data[mem_row * row + i % row] = std::bit_cast<float>(bits);
  }
  return map;
}

void write_pfm(const FloatMap& map, const std::filesystem::path& path, bool little_endian) {
  if (map.channels != 1 && map.channels != 3) throw DataError("write_pfm: need 1 or 3 channels");
  if (map.data.size() != map.width * map.height * map.channels) throw DataError("write_pfm: size mismatch");
  std::ostringstream header;
  header << (map.channels == 1 ? "Pf" : "PF") << '\n'
         << map.width << ' ' << map.height << '\n'
         << (little_endian ? "-1.0" : "1.0") << '\n';
  std::vector<std::uint8_t> payload(map.data.size() * 4);
  const std::size_t row = map.width * map.channels;
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    const std::size_t file_row = i / row;
    const std::size_t mem_row = map.height - 1 - file_row;
    const auto bits = std::bit_cast<std::uint32_t>(map.data[mem_row * row + i % row]);
    std::uint8_t* p = payload.data() + 4 * i;
    for (int b = 0; b < 4; ++b) {
      const int shift = little_endian ? 8 * b : 8 * (3 - b);
      p[b] = static_cast<std::uint8_t>(bits >> shift);
    }
  }
  write_bytes(path, header.str(), payload.data(), payload.size());
}

}  // namespace vicon
