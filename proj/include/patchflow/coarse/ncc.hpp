#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "patchflow/errors.hpp"
#include "patchflow/io/raster.hpp"
#include "patchflow/io/tables.hpp"

namespace patchflow {

struct NccParams {
  int stride = 8;
  /// Template half-size; templates are (2w+1)^2 pixels.
  int template_radius = 7;
  /// Edge of the search window in B, centered on the keypoint.
  int search_window = 64;
  double min_conf = 0.5;
  /// Search radius when a displacement is carried to the next finer level.
  int refine_radius = 2;
};

namespace detail {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  double at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }

  static GrayImage from(const Raster& r) {
    GrayImage g{r.width, r.height, std::vector<double>(static_cast<std::size_t>(r.width) * r.height)};
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) g.px[static_cast<std::size_t>(y) * r.width + x] = r.gray(x, y);
    return g;
  }

  GrayImage half() const {
    GrayImage g{width / 2, height / 2, {}};
    g.px.resize(static_cast<std::size_t>(g.width) * g.height);
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        g.px[static_cast<std::size_t>(y) * g.width + x] =
            0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
    return g;
  }
};

struct Template {
  std::vector<double> values;  // zero-mean
  double norm = 0.0;
};

inline bool fits(const GrayImage& g, int x, int y, int w) {
  return x - w >= 0 && y - w >= 0 && x + w < g.width && y + w < g.height;
}

inline Template make_template(const GrayImage& g, int x, int y, int w) {
  Template t;
  t.values.reserve(static_cast<std::size_t>((2 * w + 1) * (2 * w + 1)));
  double mean = 0.0;
  for (int dy = -w; dy <= w; ++dy)
    for (int dx = -w; dx <= w; ++dx) {
      t.values.push_back(g.at(x + dx, y + dy));
      mean += t.values.back();
    }
  mean /= static_cast<double>(t.values.size());
  double ss = 0.0;
  for (double& v : t.values) {
    v -= mean;
    ss += v * v;
  }
  t.norm = std::sqrt(ss);
  return t;
}

// NCC of template `t` against the window of `g` centered at (x, y); -inf
// when the window leaves the image or is flat.
inline double ncc_at(const Template& t, const GrayImage& g, int x, int y, int w) {
  if (!fits(g, x, y, w)) return -std::numeric_limits<double>::infinity();
  double sum = 0.0, sum2 = 0.0, cross = 0.0;
  std::size_t k = 0;
  for (int dy = -w; dy <= w; ++dy)
    for (int dx = -w; dx <= w; ++dx, ++k) {
      const double v = g.at(x + dx, y + dy);
      sum += v;
      sum2 += v * v;
      cross += t.values[k] * v;
    }
  const double n = static_cast<double>(t.values.size());
  const double var = sum2 - sum * sum / n;
  if (var <= 1e-12 * n) return -std::numeric_limits<double>::infinity();
  return cross / (t.norm * std::sqrt(var));
}

struct Peak {
  int dx = 0, dy = 0;
  double score = -std::numeric_limits<double>::infinity();
};

inline Peak search(const Template& t, const GrayImage& g, int x, int y, int w, int cx, int cy, int r) {
  Peak best;
  for (int dy = cy - r; dy <= cy + r; ++dy)
    for (int dx = cx - r; dx <= cx + r; ++dx) {
      const double s = ncc_at(t, g, x + dx, y + dy, w);
      if (s > best.score) best = {dx, dy, s};
    }
  return best;
}

inline double parabola_offset(double l, double c, double r) {
  const double den = l - 2.0 * c + r;
  if (!std::isfinite(l) || !std::isfinite(r) || !(den < 0.0)) return 0.0;
  return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
}

}  // namespace detail

/// Dense grid matching from A to B by coarse-to-fine normalized
/// cross-correlation with sub-pixel quadratic peak refinement.
inline PixelMatchSet match_pixels(const Raster& a, const Raster& b, const NccParams& params = {}) {
  const int w = params.template_radius;
  if (params.stride <= 0 || w <= 0 || params.search_window <= 0 || params.refine_radius < 0)
    throw InvalidParams("NCC stride, template radius and search window must be positive");
  for (const Raster* r : {&a, &b})
    if (2 * w > std::min(r->width, r->height))
      throw ImageTooSmall("template radius " + std::to_string(w) + " exceeds half the size of image '" +
                          r->image_id + "'");

  PixelMatchSet out;
  out.source_image = a.image_id;
  out.target_image = b.image_id;

  const int half_window = params.search_window / 2;
  std::vector<detail::GrayImage> pa{detail::GrayImage::from(a)}, pb{detail::GrayImage::from(b)};
  // Stop coarsening once the residual search radius is small or a template
  // no longer fits.
  while ((half_window >> pa.size()) >= 2 * std::max(params.refine_radius, 1)) {
    const auto& la = pa.back();
    const auto& lb = pb.back();
    if (std::min({la.width, la.height, lb.width, lb.height}) / 2 < 4 * w + 2) break;
    pa.push_back(la.half());
    pb.push_back(lb.half());
  }
  const int top = static_cast<int>(pa.size()) - 1;

  for (int y = w; y + w < a.height; y += params.stride)
    for (int x = w; x + w < a.width; x += params.stride) {
      const detail::Template t0 = detail::make_template(pa[0], x, y, w);
      if (t0.norm <= 1e-9) continue;
      // Levels where the template does not fit hand their search radius on.
      int dx = 0, dy = 0;
      int r = (half_window + (1 << top) - 1) >> top;
      for (int l = top; l >= 1; --l) {
        const int xl = x >> l, yl = y >> l;
        const auto& la = pa[static_cast<std::size_t>(l)];
        detail::Peak p;
        if (detail::fits(la, xl, yl, w)) {
          const detail::Template tl = detail::make_template(la, xl, yl, w);
          if (tl.norm > 1e-9) p = detail::search(tl, pb[static_cast<std::size_t>(l)], xl, yl, w, dx >> l, dy >> l, r);
        }
        if (std::isfinite(p.score)) {
          dx = p.dx << l;
          dy = p.dy << l;
          r = params.refine_radius;
        } else {
          r = std::min(2 * r, half_window >> (l - 1));
        }
      }
      const detail::Peak p = detail::search(t0, pb[0], x, y, w, dx, dy, top == 0 ? half_window : r);
      if (!std::isfinite(p.score)) continue;
      const double conf = std::clamp(p.score, 0.0, 1.0);
      if (conf < params.min_conf) continue;
      const auto s = [&](int ox, int oy) { return detail::ncc_at(t0, pb[0], x + p.dx + ox, y + p.dy + oy, w); };
      // A perfect correlation is already exact; the windowed score is not
      // symmetric about its peak.
      const bool exact = p.score >= 1.0 - 1e-12;
      const double sx = exact ? 0.0 : detail::parabola_offset(s(-1, 0), p.score, s(1, 0));
      const double sy = exact ? 0.0 : detail::parabola_offset(s(0, -1), p.score, s(0, 1));
      out.matches.push_back({static_cast<double>(x), static_cast<double>(y), x + p.dx + sx, y + p.dy + sy, conf});
    }
  return out;
}

}  // namespace patchflow
