#include "spinqnd_app/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace spinqnd::app::svg {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr const char* kColors[] = {"#6a3d9a", "#1f78b4", "#33a02c", "#ff7f00", "#e31a1c",
                                   "#b15928", "#a6cee3", "#fb9a99"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  [[nodiscard]] double map(double v) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                         : (v - lo) / (hi - lo);
    return t;
  }
  [[nodiscard]] bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

Axis make_axis(const std::vector<double>& values, bool log) {
  Axis a;
  a.log = log;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    if (!a.usable(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {
    lo = log ? 1.0 : 0.0;
    hi = log ? 10.0 : 1.0;
  }
  if (hi <= lo) {
    const double pad = lo != 0.0 ? std::abs(lo) * 0.1 : 1.0;
    hi = lo + pad;
    lo = log ? lo / 2.0 : lo - pad;
  }
  if (!log) {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  a.lo = lo;
  a.hi = hi;
  return a;
}

}  // namespace

template <class... Args>
void emit(std::string& out, fmt::format_string<Args...> f, Args&&... args) {
  fmt::format_to(std::back_inserter(out), f, std::forward<Args>(args)...);
}

std::string render(const Plot& plot, std::size_t max_points) {
  std::vector<double> xs, ys;
  for (const auto& s : plot.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  for (const auto& r : plot.references) ys.push_back(r.y);
  const Axis ax = make_axis(xs, plot.log_x);
  const Axis ay = make_axis(ys, plot.log_y);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + ax.map(v) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - ay.map(v)) * ph; };

  std::string out;
  emit(out, R"svg(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)svg"
       "\n",
       kWidth, kHeight);
  emit(out, R"svg(<rect width="100%" height="100%" fill="white"/>)svg""\n");
  emit(out, R"svg(<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>)svg""\n",
       kLeft + pw / 2.0, escape(plot.title));
  emit(out, R"svg(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)svg""\n", kLeft, kTop,
       pw, ph);

  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double xv = ax.log ? std::pow(10.0, std::log10(ax.lo) + t * (std::log10(ax.hi) - std::log10(ax.lo)))
                             : ax.lo + t * (ax.hi - ax.lo);
    const double yv = ay.log ? std::pow(10.0, std::log10(ay.lo) + t * (std::log10(ay.hi) - std::log10(ay.lo)))
                             : ay.lo + t * (ay.hi - ay.lo);
    emit(out, R"svg(<text x="{}" y="{}" text-anchor="middle">{:.3g}</text>)svg""\n", kLeft + t * pw,
         kTop + ph + 18.0, xv);
    emit(out, R"svg(<text x="{}" y="{}" text-anchor="end">{:.3g}</text>)svg""\n", kLeft - 6.0,
         kTop + (1.0 - t) * ph + 4.0, yv);
  }
  emit(out, R"svg(<text x="{}" y="{}" text-anchor="middle">{}</text>)svg""\n", kLeft + pw / 2.0,
       kHeight - 16.0, escape(plot.x_label));
  emit(out, R"svg(<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>)svg""\n",
       kTop + ph / 2.0, kTop + ph / 2.0, escape(plot.y_label));

  double legend_y = kTop + 10.0;
  for (const auto& r : plot.references) {
    if (!ay.usable(r.y)) continue;
    emit(out, R"svg(<line x1="{}" x2="{}" y1="{:.2f}" y2="{:.2f}" stroke="black" stroke-dasharray="6 4"/>)svg""\n",
         kLeft, kLeft + pw, py(r.y), py(r.y));
    emit(out, R"svg(<text x="{}" y="{:.2f}">{}</text>)svg""\n", kLeft + pw + 8.0, py(r.y) + 4.0, escape(r.label));
  }

  std::size_t color = 0;
  for (const auto& s : plot.series) {
    const char* c = kColors[color++ % std::size(kColors)];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / std::max<std::size_t>(max_points, 1));
    if (s.points) {
      for (std::size_t i = 0; i < n; i += stride) {
        if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
        emit(out, R"svg(<circle cx="{:.2f}" cy="{:.2f}" r="3" fill="{}"/>)svg""\n", px(s.x[i]), py(s.y[i]), c);
      }
    } else {
      emit(out, R"svg(<polyline fill="none" stroke="{}" stroke-width="1.5" points=")svg", c);
      for (std::size_t i = 0; i < n; i += stride) {
        if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
        emit(out, "{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
      }
      emit(out, "\"/>\n");
    }
    if (!s.label.empty()) {
      emit(out, R"svg(<rect x="{}" y="{}" width="12" height="3" fill="{}"/>)svg""\n", kLeft + pw + 8.0, legend_y + 60.0, c);
      emit(out, R"svg(<text x="{}" y="{}">{}</text>)svg""\n", kLeft + pw + 24.0, legend_y + 65.0, escape(s.label));
      legend_y += 16.0;
    }
  }
  emit(out, "</svg>\n");
  return out;
}

}  // namespace spinqnd::app::svg
