#include "vicon/lightfield.hpp"

#include <cmath>
#include <fstream>
#include "json.hpp"
#include <string>

#include "vicon/errors.hpp"

namespace vicon {
namespace {

using nlohmann::json;

std::string view_name(GridPos p) {
  return "(" + std::to_string(p.iu) + "," + std::to_string(p.iv) + ")";
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": bad value for '" + key + "': " + e.what());
  }
}

std::vector<double> load_disparity_layer(const std::filesystem::path& path, std::size_t w, std::size_t h,
                                         const std::string& where) {
  const auto map = read_pfm(path);
  if (map.width != w || map.height != h || map.channels != 1) {
    throw DataError(where + ": disparity layer " + path.string() + " has the wrong shape");
  }
  return {map.data.begin(), map.data.end()};
}

std::vector<std::uint8_t> load_occlusion_layer(const std::filesystem::path& path, std::size_t w, std::size_t h,
                                               const std::string& where) {
  const auto img = read_image(path);
  if (img.width != w || img.height != h) {
    throw DataError(where + ": occlusion layer " + path.string() + " has the wrong resolution");
  }
  std::vector<std::uint8_t> mask(w * h);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.data[i * img.channels] > 0.5 ? 1 : 0;
  return mask;
}

}  // namespace

double normalize_index(std::size_t i, std::size_t n, double a) {
  if (n == 0 || i >= n) {
    throw ConfigError("normalize_index: index " + std::to_string(i) + " out of range for size " + std::to_string(n));
  }
  if (n == 1) return 0.0;
  return -a + 2.0 * a * static_cast<double>(i) / static_cast<double>(n - 1);
}

LightField::LightField(std::size_t nu, std::size_t nv, std::size_t width, std::size_t height, double a)
    : nu_(nu), nv_(nv), width_(width), height_(height), a_(a), views_(nu * nv) {
  if (nu == 0 || nv == 0) throw ConfigError("lightfield: empty view grid");
  if (width == 0 || height == 0) throw ConfigError("lightfield: empty resolution");
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("lightfield: range a must be positive");
  for (auto& v : views_) v.pixels = Image(width, height, 3);
}

std::size_t LightField::index_of(GridPos p) const {
  if (p.iu < 0 || p.iv < 0 || static_cast<std::size_t>(p.iu) >= nu_ || static_cast<std::size_t>(p.iv) >= nv_) {
    throw ConfigError("lightfield: view " + view_name(p) + " outside the grid");
  }
  return static_cast<std::size_t>(p.iv) * nu_ + static_cast<std::size_t>(p.iu);
}

GridPos LightField::position_of(std::size_t index) const {
  if (index >= views_.size()) throw ConfigError("lightfield: view index out of range");
  return {static_cast<int>(index % nu_), static_cast<int>(index / nu_)};
}

Angular LightField::angular(std::size_t index) const {
  const auto p = position_of(index);
  return {normalize_index(static_cast<std::size_t>(p.iu), nu_, a_),
          normalize_index(static_cast<std::size_t>(p.iv), nv_, a_)};
}

void LightField::set_range(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("lightfield: range a must be positive");
  const double ratio = a / a_;
  for (auto& v : views_) {
    if (v.disparity) {
      for (double& d : *v.disparity) d *= ratio;
    }
  }
  a_ = a;
}

void LightField::validate() const {
  for (std::size_t i = 0; i < views_.size(); ++i) {
    const auto& v = views_[i];
    const std::string where = "view " + view_name(position_of(i));
    if (v.pixels.width != width_ || v.pixels.height != height_) {
      throw DataError(where + ": resolution " + std::to_string(v.pixels.width) + "x" +
                      std::to_string(v.pixels.height) + " differs from " + std::to_string(width_) + "x" +
                      std::to_string(height_));
    }
    if (v.pixels.channels != 3) throw DataError(where + ": expected an RGB image");
    for (double c : v.pixels.data) {
      if (!(c >= 0.0 && c <= 1.0)) throw DataError(where + ": pixel value outside [0, 1]");
    }
    if (v.disparity) {
      if (v.disparity->size() != pixel_count()) throw DataError(where + ": disparity layer size mismatch");
      for (double d : *v.disparity) {
        if (!std::isfinite(d) || d < 0.0) throw DataError(where + ": disparity must be finite and >= 0");
      }
    }
    if (v.occlusion && v.occlusion->size() != pixel_count()) {
      throw DataError(where + ": occlusion layer size mismatch");
    }
  }
}

LightField load_lightfield(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const std::string where = "manifest " + manifest_path.string();
  if (!doc.is_object()) throw DataError(where + ": top level must be an object");
  const auto a = required<double>(doc, "a", where);
  const auto grid = required<std::vector<std::size_t>>(doc, "grid", where);
  if (grid.size() != 2) throw DataError(where + ": grid must be [nu, nv]");
  const auto width = required<std::size_t>(doc, "width", where);
  const auto height = required<std::size_t>(doc, "height", where);
  if (!doc.contains("views") || !doc["views"].is_array()) throw DataError(where + ": missing views array");

  LightField lf;
  try {
    lf = LightField(grid[0], grid[1], width, height, a);
  } catch (const ConfigError& e) {
    throw DataError(where + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();
  std::vector<bool> seen(lf.view_count(), false);
  for (const auto& entry : doc["views"]) {
    const GridPos pos{required<int>(entry, "iu", where), required<int>(entry, "iv", where)};
    std::size_t index = 0;
    try {
      index = lf.index_of(pos);
    } catch (const ConfigError&) {
      throw DataError(where + ": view " + view_name(pos) + " outside the declared grid");
    }
    if (seen[index]) throw DataError(where + ": duplicate view " + view_name(pos));
    seen[index] = true;
    const std::string vwhere = where + ", view " + view_name(pos);
    auto& view = lf.view(index);
    view.pixels = read_image(base / required<std::string>(entry, "image", vwhere));
    if (view.pixels.channels == 1) {
      Image rgb(view.pixels.width, view.pixels.height, 3);
      for (std::size_t i = 0; i < view.pixels.data.size(); ++i) {
        for (int c = 0; c < 3; ++c) rgb.data[3 * i + c] = view.pixels.data[i];
      }
      view.pixels = std::move(rgb);
    }
    if (view.pixels.width != width || view.pixels.height != height) {
      throw DataError(vwhere + ": image is " + std::to_string(view.pixels.width) + "x" +
                      std::to_string(view.pixels.height) + ", manifest declares " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    if (entry.contains("disparity") && !entry["disparity"].is_null()) {
      view.disparity = load_disparity_layer(base / entry["disparity"].get<std::string>(), width, height, vwhere);
    }
    if (entry.contains("occlusion") && !entry["occlusion"].is_null()) {
      view.occlusion = load_occlusion_layer(base / entry["occlusion"].get<std::string>(), width, height, vwhere);
      if (entry.contains("occlusion_ref")) {
        const auto ref = entry["occlusion_ref"].get<std::vector<int>>();
        if (ref.size() != 2) throw DataError(vwhere + ": occlusion_ref must be [iu, iv]");
        view.occlusion_ref = GridPos{ref[0], ref[1]};
      }
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DataError(where + ": view " + view_name(lf.position_of(i)) + " missing");
  }
  lf.validate();
  return lf;
}

std::filesystem::path save_lightfield(const LightField& lf, const std::filesystem::path& dir,
                                      const ManifestExtras& extras) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  json doc;
  doc["a"] = lf.a();
  doc["grid"] = {lf.nu(), lf.nv()};
  doc["width"] = lf.width();
  doc["height"] = lf.height();
  doc["views"] = json::array();
  for (std::size_t i = 0; i < lf.view_count(); ++i) {
    const auto pos = lf.position_of(i);
    const std::string suffix = std::to_string(pos.iu) + "_" + std::to_string(pos.iv);
    const auto& view = lf.view(i);
    json entry{{"iu", pos.iu}, {"iv", pos.iv}, {"image", "view_" + suffix + ".png"}};
    write_image(view.pixels, dir / ("view_" + suffix + ".png"));
    if (extras.write_disparity && view.disparity) {
      FloatMap map{lf.width(), lf.height(), 1, {view.disparity->begin(), view.disparity->end()}};
      write_pfm(map, dir / ("disparity_" + suffix + ".pfm"));
      entry["disparity"] = "disparity_" + suffix + ".pfm";
    }
    if (extras.write_occlusion && view.occlusion) {
      Image mask(lf.width(), lf.height(), 1);
      for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = (*view.occlusion)[p] ? 1.0 : 0.0;
      write_image(mask, dir / ("occlusion_" + suffix + ".png"));
      entry["occlusion"] = "occlusion_" + suffix + ".png";
      if (view.occlusion_ref) entry["occlusion_ref"] = {view.occlusion_ref->iu, view.occlusion_ref->iv};
    }
    doc["views"].push_back(entry);
  }
  const auto path = dir / "manifest.json";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << doc.dump(2) << '\n';
  return path;
}

void pixel_sample(const LightField& lf, std::size_t view, std::size_t pixel, double* coord, double* rgb) {
  const auto ang = lf.angular(view);
  const std::size_t px = pixel % lf.width();
  const std::size_t py = pixel / lf.width();
  coord[0] = ang.u;
  coord[1] = ang.v;
  coord[2] = lf.x_coord(px);
  coord[3] = lf.y_coord(py);
  const auto& img = lf.view(view).pixels;
  for (int c = 0; c < 3; ++c) rgb[c] = img.data[pixel * 3 + c];
}

BatchSampler::BatchSampler(const LightField& lf, std::vector<std::size_t> views, std::uint64_t seed)
    : lf_(&lf), views_(std::move(views)), rng_(seed) {
  if (views_.empty() || lf.pixel_count() == 0) throw ConfigError("sampler: empty light field");
  for (auto v : views_) {
    if (v >= lf.view_count()) throw ConfigError("sampler: view index out of range");
  }
}

void BatchSampler::append(PixelBatch& batch, std::size_t flat) const {
  const std::size_t view = views_[flat / lf_->pixel_count()];
  const std::size_t pixel = flat % lf_->pixel_count();
  const std::size_t at = batch.view_ids.size();
  batch.coords.resize(4 * (at + 1));
  batch.colors.resize(3 * (at + 1));
  pixel_sample(*lf_, view, pixel, batch.coords.data() + 4 * at, batch.colors.data() + 3 * at);
  batch.view_ids.push_back(view);
  batch.pixel_indices.push_back(pixel);
}

PixelBatch BatchSampler::sample(std::size_t size) {
  if (size == 0) throw ConfigError("sampler: batch size must be >= 1");
  PixelBatch batch;
  batch.coords.reserve(4 * size);
  batch.colors.reserve(3 * size);
  std::uniform_int_distribution<std::size_t> pick(0, population() - 1);
  for (std::size_t i = 0; i < size; ++i) append(batch, pick(rng_));
  return batch;
}

PixelBatch BatchSampler::sequential(std::size_t size) {
  if (size == 0) throw ConfigError("sampler: batch size must be >= 1");
  PixelBatch batch;
  for (std::size_t i = 0; i < size; ++i) {
    append(batch, cursor_);
    cursor_ = (cursor_ + 1) % population();
  }
  return batch;
}

}  // namespace vicon
