#include "vicon/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "vicon/errors.hpp"
#include "vicon/parallel.hpp"

namespace vicon {

Angular validate_affine(const AffineViewSpec& spec, std::span<const Angular> sources) {
  if (spec.alphas.size() != sources.size() || spec.betas.size() != sources.size()) {
    throw ConfigError("affine spec: expected " + std::to_string(sources.size()) + " weights per axis");
  }
  double sa = 0.0, sb = 0.0;
  Angular out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const double al = spec.alphas[i];
    const double be = spec.betas[i];
    if (!std::isfinite(al) || !std::isfinite(be) || al < 0.0 || be < 0.0) {
      throw ConfigError("affine spec: weights must be finite and non-negative (interpolation only)");
    }
    sa += al;
    sb += be;
    out.u += al * sources[i].u;
    out.v += be * sources[i].v;
  }
  if (std::abs(sa - 1.0) > 1e-9 || std::abs(sb - 1.0) > 1e-9) {
    throw ConfigError("affine spec: weights must sum to 1");
  }
  return out;
}

void MappingContext::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("mapping: a must be positive");
  if (w < 2 || h < 2) throw ConfigError("mapping: resolution must be at least 2x2");
  if (!std::isfinite(source.u) || !std::isfinite(source.v) || !std::isfinite(target.u) ||
      !std::isfinite(target.v)) {
    throw ConfigError("mapping: non-finite angular coordinate");
  }
}

Mapped map_coordinate(const MappingContext& ctx, double x, double y, double d) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(d)) {
    throw DataError("map_coordinate: non-finite input");
  }
  return {x + 2.0 * (ctx.source.u - ctx.target.u) * d / (static_cast<double>(ctx.w) * ctx.a),
          y + 2.0 * (ctx.source.v - ctx.target.v) * d / (static_cast<double>(ctx.h) * ctx.a)};
}

const char* case_name(CaseTag tag) noexcept {
  switch (tag) {
    case CaseTag::InFrame: return "in-frame";
    case CaseTag::OutsideSource: return "outside-source";
    case CaseTag::OutsideNovel: return "outside-novel";
    case CaseTag::OccludedInSource: return "occluded-in-source";
    case CaseTag::OccludedInNovel: return "occluded-in-novel";
  }
  return "unknown";
}

CaseTag classify_case(const MappingContext& ctx, double x, double y, double x_mapped, double y_mapped,
                      bool source_occluded, const NovelOcclusionTest& occluded_in_novel) {
  if (std::abs(x) > ctx.a || std::abs(y) > ctx.a) return CaseTag::OutsideSource;
  if (source_occluded) return CaseTag::OccludedInSource;
  if (occluded_in_novel && occluded_in_novel(x_mapped, y_mapped)) return CaseTag::OccludedInNovel;
  if (std::abs(x_mapped) > ctx.a || std::abs(y_mapped) > ctx.a) return CaseTag::OutsideNovel;
  return CaseTag::InFrame;
}

SplatZBuffer::SplatZBuffer(const LightField& lf, std::size_t view, std::span<const double> disparity,
                           Angular target, double margin)
    : a_(lf.a()), w_(lf.width()), h_(lf.height()), margin_(margin) {
  if (disparity.size() != lf.pixel_count()) throw DimensionError("splat: disparity size mismatch");
  const MappingContext ctx{lf.a(), w_, h_, lf.angular(view), target};
  ctx.validate();
  splats_.resize(lf.pixel_count());
  std::vector<std::pair<long, long>> cells(splats_.size());
  long xmin = std::numeric_limits<long>::max(), ymin = xmin;
  long xmax = std::numeric_limits<long>::min(), ymax = xmax;
  for (std::size_t p = 0; p < splats_.size(); ++p) {
    const auto m = map_coordinate(ctx, lf.x_coord(p % w_), lf.y_coord(p / w_), disparity[p]);
    const double px = to_px(m.x, w_);
    const double py = to_px(m.y, h_);
    splats_[p] = {px, py, disparity[p]};
    cells[p] = {std::lround(px), std::lround(py)};
    xmin = std::min(xmin, cells[p].first);
    xmax = std::max(xmax, cells[p].first);
    ymin = std::min(ymin, cells[p].second);
    ymax = std::max(ymax, cells[p].second);
  }
  x0_ = xmin;
  y0_ = ymin;
  cols_ = xmax - xmin + 1;
  rows_ = ymax - ymin + 1;
  offsets_.assign(static_cast<std::size_t>(cols_ * rows_) + 1, 0);
  for (const auto& [cx, cy] : cells) ++offsets_[static_cast<std::size_t>((cy - y0_) * cols_ + (cx - x0_)) + 1];
  for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
  std::vector<std::array<double, 3>> sorted(splats_.size());
  auto fill = offsets_;
  for (std::size_t p = 0; p < splats_.size(); ++p) {
    const auto cell = static_cast<std::size_t>((cells[p].second - y0_) * cols_ + (cells[p].first - x0_));
    sorted[fill[cell]++] = splats_[p];
  }
  splats_ = std::move(sorted);
}

bool SplatZBuffer::occluded(double x_mapped, double y_mapped, double d) const {
  const double fx = to_px(x_mapped, w_);
  const double fy = to_px(y_mapped, h_);
  const long cx = std::lround(fx);
  const long cy = std::lround(fy);
  for (long y = cy - 1; y <= cy + 1; ++y) {
    if (y < y0_ || y >= y0_ + rows_) continue;
    for (long x = cx - 1; x <= cx + 1; ++x) {
      if (x < x0_ || x >= x0_ + cols_) continue;
      const auto cell = static_cast<std::size_t>((y - y0_) * cols_ + (x - x0_));
      for (auto i = offsets_[cell]; i < offsets_[cell + 1]; ++i) {
        const auto& s = splats_[i];
        if (s[2] > d + margin_ && std::abs(s[0] - fx) <= 0.5 && std::abs(s[1] - fy) <= 0.5) return true;
      }
    }
  }
  return false;
}

std::vector<Angular> SourceSet::angulars() const {
  std::vector<Angular> out;
  out.reserve(views.size());
  for (auto v : views) out.push_back(lf->angular(v));
  return out;
}

std::size_t SourceSet::nearest(Angular target) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto ang = lf->angular(views[i]);
    const double d = (ang.u - target.u) * (ang.u - target.u) + (ang.v - target.v) * (ang.v - target.v);
    if (d < best_d - 1e-15) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void SourceSet::validate() const {
  if (lf == nullptr || views.empty()) throw ConfigError("sources: empty source set");
  if (disparity.size() != views.size()) throw DataError("sources: missing disparity layer");
  if (!occlusion.empty() && occlusion.size() != views.size()) throw DataError("sources: occlusion layer count");
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i] >= lf->view_count()) throw ConfigError("sources: view index out of range");
    if (disparity[i].size() != lf->pixel_count()) {
      const auto p = lf->position_of(views[i]);
      throw DataError("sources: disparity layer missing or wrong size for view (" + std::to_string(p.iu) + "," +
                      std::to_string(p.iv) + ")");
    }
    if (!occlusion.empty() && !occlusion[i].empty() && occlusion[i].size() != lf->pixel_count()) {
      throw DataError("sources: occlusion layer size mismatch");
    }
  }
}

SourceSet make_source_set(const LightField& lf, std::vector<std::size_t> views, bool use_occlusion) {
  SourceSet s;
  s.lf = &lf;
  s.views = std::move(views);
  for (auto v : s.views) {
    const auto& view = lf.view(v);
    if (!view.disparity) {
      const auto p = lf.position_of(v);
      throw DataError("sources: view (" + std::to_string(p.iu) + "," + std::to_string(p.iv) +
                      ") has no disparity layer");
    }
    s.disparity.push_back(*view.disparity);
    s.occlusion.push_back(use_occlusion && view.occlusion ? *view.occlusion : std::vector<std::uint8_t>{});
  }
  s.validate();
  return s;
}

namespace {

// Maps all pixels of source `i` into `target`, testing novel occlusion against `zbuf`.
void map_source(const SourceSet& sources, std::size_t i, Angular target, const SplatZBuffer& zbuf,
                const CorrespondenceOptions& opt, std::vector<CorrespondenceSample>& out) {
  const auto& lf = *sources.lf;
  const std::size_t view = sources.views[i];
  const MappingContext ctx{lf.a(), lf.width(), lf.height(), lf.angular(view), target};
  ctx.validate();
  const auto& disp = sources.disparity[i];
  const auto* occ = sources.occlusion.empty() || sources.occlusion[i].empty() ? nullptr : &sources.occlusion[i];
  const auto& img = lf.view(view).pixels;
  for (std::size_t p = 0; p < lf.pixel_count(); ++p) {
    const double x = lf.x_coord(p % lf.width());
    const double y = lf.y_coord(p / lf.width());
    const double d = disp[p];
    const auto m = map_coordinate(ctx, x, y, d);
    const auto tag = classify_case(ctx, x, y, m.x, m.y, occ != nullptr && (*occ)[p] != 0,
                                   [&](double xm, double ym) { return zbuf.occluded(xm, ym, d); });
    if (case_dropped(tag)) continue;
    if (tag == CaseTag::OutsideNovel && !opt.keep_outside_novel) continue;
    CorrespondenceSample s;
    s.source_coord = {ctx.source.u, ctx.source.v, x, y};
    s.mapped_coord = {target.u, target.v, m.x, m.y};
    s.target_color = {img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]};
    s.case_tag = tag;
    s.indicator = tag != CaseTag::OccludedInNovel;
    s.source = static_cast<std::uint32_t>(i);
    s.pixel = static_cast<std::uint32_t>(p);
    s.dx_dd = ctx.dx_dd();
    s.dy_dd = ctx.dy_dd();
    out.push_back(s);
  }
}

}  // namespace

std::vector<CorrespondenceSample> build_correspondences(const SourceSet& sources, Angular target,
                                                        const CorrespondenceOptions& opt) {
  sources.validate();
  const std::size_t k = sources.nearest(target);
  const SplatZBuffer zbuf(*sources.lf, sources.views[k], sources.disparity[k], target, opt.occlusion_margin);
  std::vector<std::vector<CorrespondenceSample>> per(sources.views.size());
  parallel_for(per.size(), [&](std::size_t i) { map_source(sources, i, target, zbuf, opt, per[i]); });
  std::vector<CorrespondenceSample> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<CorrespondenceSample> build_correspondences(const SourceSet& sources, const AffineViewSpec& spec,
                                                        const CorrespondenceOptions& opt) {
  const auto ang = sources.angulars();
  return build_correspondences(sources, validate_affine(spec, ang), opt);
}

std::vector<CorrespondenceSample> build_known_view_pairs(const SourceSet& sources,
                                                         const CorrespondenceOptions& opt) {
  sources.validate();
  const auto& lf = *sources.lf;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < sources.views.size(); ++i) {
    const auto pi = lf.position_of(sources.views[i]);
    for (std::size_t j = 0; j < sources.views.size(); ++j) {
      const auto pj = lf.position_of(sources.views[j]);
      if (std::abs(pi.iu - pj.iu) + std::abs(pi.iv - pj.iv) == 1) pairs.emplace_back(i, j);
    }
  }
  std::vector<std::vector<CorrespondenceSample>> per(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t n) {
    const auto [i, j] = pairs[n];
    const auto target = lf.angular(sources.views[j]);
    const SplatZBuffer zbuf(lf, sources.views[j], sources.disparity[j], target, opt.occlusion_margin);
    map_source(sources, i, target, zbuf, opt, per[n]);
  });
  std::vector<CorrespondenceSample> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

PackedSamples pack_samples(std::span<const CorrespondenceSample> samples, std::span<const std::size_t> pick) {
  const std::size_t n = pick.empty() ? samples.size() : pick.size();
  PackedSamples out;
  out.coords.resize(4 * n);
  out.colors.resize(3 * n);
  out.mask.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& c = samples[pick.empty() ? s : pick[s]];
    std::copy(c.mapped_coord.begin(), c.mapped_coord.end(), out.coords.begin() + 4 * s);
    std::copy(c.target_color.begin(), c.target_color.end(), out.colors.begin() + 3 * s);
    out.mask[s] = c.indicator ? 1 : 0;
  }
  return out;
}

LossResult correspondence_loss(const RadianceField& field, std::span<const CorrespondenceSample> samples) {
  LossResult r;
  if (samples.empty()) return r;
  const auto packed = pack_samples(samples);
  std::vector<double> out(packed.colors.size());
  field.evaluate(packed.coords, out);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  r.upstream.resize(out.size());
  r.value = inv_n * mae_with_upstream(out, packed.colors, packed.mask, inv_n, r.upstream);
  return r;
}

DisparityGradient disparity_loss(const RadianceField& field, std::span<const CorrespondenceSample> samples,
                                 std::size_t source_count, std::size_t pixel_count) {
  DisparityGradient g;
  g.grads.assign(source_count, std::vector<double>(pixel_count, 0.0));
  if (samples.empty()) return g;
  const auto lc = correspondence_loss(field, samples);
  g.loss = lc.value;
  const auto packed = pack_samples(samples);
  std::vector<double> coord_grads(packed.coords.size());
  field.input_gradients(packed.coords, lc.upstream, coord_grads);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& c = samples[s];
    if (!c.indicator) continue;
    if (c.source >= source_count || c.pixel >= pixel_count) throw DimensionError("disparity_loss: sample index");
    const double gd = coord_grads[4 * s + 2] * c.dx_dd + coord_grads[4 * s + 3] * c.dy_dd;
    if (!std::isfinite(gd)) {
      throw NonFiniteError("disparity_loss: non-finite gradient at source " + std::to_string(c.source) + " pixel " +
                           std::to_string(c.pixel));
    }
    g.grads[c.source][c.pixel] += gd;
  }
  return g;
}

void write_correspondence_csv(const SourceSet& sources, std::span<const CorrespondenceSample> samples,
                              const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(17);
  f << "view_i,pixel,case_tag,x_mapped,y_mapped,indicator\n";
  for (const auto& s : samples) {
    f << sources.views.at(s.source) << ',' << s.pixel << ',' << case_name(s.case_tag) << ',' << s.mapped_coord[2]
      << ',' << s.mapped_coord[3] << ',' << (s.indicator ? 1 : 0) << '\n';
  }
  if (!f) throw IoError("write failed for " + path.string());
}

double grid_step_shift(double d, std::size_t w, std::size_t n, double a) {
  if (n < 2 || w < 2) return 0.0;
  return 2.0 * d * static_cast<double>(w - 1) / (static_cast<double>(w) * a * static_cast<double>(n - 1));
}

double disparity_from_grid_shift(double shift_px, std::size_t w, std::size_t n, double a) {
  if (n < 2 || w < 2) throw ConfigError("disparity conversion needs at least two views and two pixels");
  return shift_px * static_cast<double>(w) * a * static_cast<double>(n - 1) / (2.0 * static_cast<double>(w - 1));
}

}  // namespace vicon
