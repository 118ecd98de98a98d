#include "droptune/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "droptune/errors.hpp"

namespace droptune::report {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 600.0;
constexpr double kPlotX = 90.0;
constexpr double kPlotY = 50.0;
constexpr double kPlotW = 520.0;
constexpr double kPlotH = 460.0;

std::string fmt(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.000" || s == "-0.0") s.erase(0, 1);
  return s;
}

std::string full_precision(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Maps a data interval onto a pixel interval.
struct Axis {
  double lo;
  double hi;
  double px_lo;
  double px_hi;
  double operator()(double v) const {
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

std::string svg_open(const std::string& title) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(kWidth, 0)
      << "\" height=\"" << fmt(kHeight, 0) << "\" viewBox=\"0 0 " << fmt(kWidth, 0) << ' '
      << fmt(kHeight, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<title>" << escape(title) << "</title>\n"
      << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << fmt(kWidth, 0) << "\" height=\""
      << fmt(kHeight, 0) << "\" fill=\"#ffffff\"/>\n"
      << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  return out.str();
}

void units_ticks(std::ostringstream& out, const Axis& x, double baseline) {
  std::vector<double> ticks;
  for (double k = std::ceil(x.lo); k <= std::floor(x.hi); k += 1.0) ticks.push_back(k);
  if (ticks.empty()) ticks = {x.lo, x.hi};
  for (const double k : ticks) {
    const double px = x(k);
    const auto units = static_cast<unsigned long long>(std::floor(std::exp2(k)));
    out << "<line class=\"tick\" x1=\"" << fmt(px) << "\" y1=\"" << fmt(baseline) << "\" x2=\""
        << fmt(px) << "\" y2=\"" << fmt(baseline + 5) << "\" stroke=\"#000000\"/>\n"
        << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(baseline + 18)
        << "\" text-anchor=\"middle\">" << units << "</text>\n";
  }
}

void dropout_ticks(std::ostringstream& out, const Axis& y, double left) {
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y(v);
    out << "<line class=\"tick\" x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(py) << "\" x2=\""
        << fmt(left) << "\" y2=\"" << fmt(py) << "\" stroke=\"#000000\"/>\n"
        << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(py + 4)
        << "\" text-anchor=\"end\">" << fmt(v, 3) << "</text>\n";
  }
}

void axis_labels(std::ostringstream& out, const std::string& x_label, const std::string& y_label) {
  out << "<text x=\"" << fmt(kPlotX + kPlotW / 2) << "\" y=\"" << fmt(kPlotY + kPlotH + 40)
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text x=\"24\" y=\"" << fmt(kPlotY + kPlotH / 2) << "\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 24 " << fmt(kPlotY + kPlotH / 2) << ")\">" << escape(y_label)
      << "</text>\n"
      << "<rect class=\"frame\" x=\"" << fmt(kPlotX) << "\" y=\"" << fmt(kPlotY) << "\" width=\""
      << fmt(kPlotW) << "\" height=\"" << fmt(kPlotH) << "\" fill=\"none\" stroke=\"#000000\"/>\n";
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

double color_position(double value, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

Rgb interpolate(const ColorStops& stops, double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [t](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround(a + t * (static_cast<double>(b) - a)));
  };
  return {channel(stops.low.r, stops.high.r), channel(stops.low.g, stops.high.g),
          channel(stops.low.b, stops.high.b)};
}

std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

void HeatmapSpec::validate() const {
  if (resolution < 1) throw DomainError("heatmap resolution must be >= 1");
  if (values.size() != resolution * resolution)
    throw DomainError("heatmap value count does not match resolution");
  for (const double v : values)
    if (!std::isfinite(v)) throw DomainError("heatmap contains a non-finite value");
  region.validate();
}

HeatmapSpec heatmap_from_grid(const surrogates::SurfaceGrid& grid, std::string title,
                              std::string value_label) {
  HeatmapSpec spec;
  spec.region = grid.region;
  spec.resolution = grid.resolution;
  spec.values = grid.values;
  spec.title = std::move(title);
  spec.value_label = std::move(value_label);
  return spec;
}

HeatmapSpec nearest_trial_heatmap(const std::vector<TrialRecord>& ledger, const SearchRegion& region,
                                  std::size_t resolution, Metric metric, std::string title) {
  const auto rows = completed(ledger);
  if (rows.empty()) throw DomainError("heatmap needs at least one completed trial");
  HeatmapSpec spec;
  spec.region = region;
  spec.resolution = resolution;
  spec.title = std::move(title);
  spec.value_label = metric == Metric::cost ? "cost" : "accuracy (%)";
  spec.values.resize(resolution * resolution);
  const double su = region.log2_units.span();
  const double sd = region.dropout.span();
  for (std::size_t row = 0; row < resolution; ++row) {
    const double d = surrogates::lattice_coordinate(region.dropout, row, resolution);
    for (std::size_t col = 0; col < resolution; ++col) {
      const double u = surrogates::lattice_coordinate(region.log2_units, col, resolution);
      double best = std::numeric_limits<double>::infinity();
      double value = 0.0;
      for (const auto& r : rows) {
        const double du = (std::log2(static_cast<double>(r.point.hidden_units)) - u) / su;
        const double dd = (r.point.dropout_rate - d) / sd;
        const double dist = du * du + dd * dd;
        if (dist < best) {
          best = dist;
          value = metric == Metric::cost ? r.cost : r.accuracy;
        }
      }
      spec.values[row * resolution + col] = value;
    }
  }
  return spec;
}

std::vector<OverlayPoint> overlay_points(const std::vector<TrialRecord>& ledger, Metric metric) {
  std::vector<OverlayPoint> out;
  for (const auto& r : completed(ledger))
    out.push_back({std::log2(static_cast<double>(r.point.hidden_units)), r.point.dropout_rate,
                   metric == Metric::cost ? r.cost : r.accuracy});
  return out;
}

std::string heatmap_svg(const HeatmapSpec& spec, const std::vector<OverlayPoint>& overlay) {
  spec.validate();
  const auto [min_it, max_it] = std::minmax_element(spec.values.begin(), spec.values.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const std::size_t res = spec.resolution;
  const double cw = kPlotW / static_cast<double>(res);
  const double ch = kPlotH / static_cast<double>(res);
  const Axis x{spec.region.log2_units.lo, spec.region.log2_units.hi, kPlotX, kPlotX + kPlotW};
  const Axis y{spec.region.dropout.lo, spec.region.dropout.hi, kPlotY + kPlotH, kPlotY};

  std::ostringstream out;
  out << svg_open(spec.title);
  out << "<g class=\"cells\" shape-rendering=\"crispEdges\">\n";
  for (std::size_t row = 0; row < res; ++row) {
    for (std::size_t col = 0; col < res; ++col) {
      const double v = spec.values[row * res + col];
      out << "<rect class=\"cell\" x=\"" << fmt(kPlotX + static_cast<double>(col) * cw)
          << "\" y=\"" << fmt(kPlotY + static_cast<double>(res - 1 - row) * ch) << "\" width=\""
          << fmt(cw) << "\" height=\"" << fmt(ch) << "\" fill=\""
          << hex(interpolate(spec.colors, color_position(v, lo, hi))) << "\"/>\n";
    }
  }
  out << "</g>\n";

  if (!overlay.empty()) {
    out << "<g class=\"points\" stroke=\"#000000\" stroke-width=\"0.8\">\n";
    for (const auto& p : overlay) {
      if (!spec.region.log2_units.contains(p.log2_units) || !spec.region.dropout.contains(p.dropout))
        continue;
      out << "<circle cx=\"" << fmt(x(p.log2_units)) << "\" cy=\"" << fmt(y(p.dropout))
          << "\" r=\"3\" fill=\"" << hex(interpolate(spec.colors, color_position(p.value, lo, hi)))
          << "\"/>\n";
    }
    out << "</g>\n";
  }

  axis_labels(out, spec.x_label, spec.y_label);
  units_ticks(out, x, kPlotY + kPlotH);
  dropout_ticks(out, y, kPlotX);

  // Colour bar.
  const double bar_x = kPlotX + kPlotW + 30;
  out << "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
      << "<stop offset=\"0\" stop-color=\"" << hex(spec.colors.low) << "\"/>"
      << "<stop offset=\"1\" stop-color=\"" << hex(spec.colors.high) << "\"/>"
      << "</linearGradient></defs>\n"
      << "<rect class=\"colorbar\" x=\"" << fmt(bar_x) << "\" y=\"" << fmt(kPlotY)
      << "\" width=\"16\" height=\"" << fmt(kPlotH) << "\" fill=\"url(#scale)\" stroke=\"#000000\"/>\n"
      << "<text x=\"" << fmt(bar_x + 8) << "\" y=\"" << fmt(kPlotY - 8)
      << "\" text-anchor=\"middle\">" << fmt(hi, 4) << "</text>\n"
      << "<text x=\"" << fmt(bar_x + 8) << "\" y=\"" << fmt(kPlotY + kPlotH + 16)
      << "\" text-anchor=\"middle\">" << fmt(lo, 4) << "</text>\n"
      << "<text x=\"" << fmt(bar_x + 8) << "\" y=\"" << fmt(kPlotY + kPlotH + 32)
      << "\" text-anchor=\"middle\">" << escape(spec.value_label) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void emit_heatmap_svg(const HeatmapSpec& spec, const std::vector<OverlayPoint>& overlay,
                      const std::filesystem::path& path) {
  write_text(path, heatmap_svg(spec, overlay));
}

void emit_scatter_csv(const std::vector<TrialRecord>& ledger, const std::filesystem::path& path) {
  if (ledger.empty()) throw DomainError("scatter CSV needs a non-empty ledger");
  std::ostringstream out;
  out << "units,dropout,cost,accuracy\n";
  for (const auto& r : completed(ledger))
    out << r.point.hidden_units << ',' << full_precision(r.point.dropout_rate) << ','
        << full_precision(r.cost) << ',' << full_precision(r.accuracy) << '\n';
  write_text(path, out.str());
}

void emit_grid_csv(const surrogates::SurfaceGrid& grid, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "log2_units,units,dropout,value\n";
  for (std::size_t row = 0; row < grid.resolution; ++row) {
    for (std::size_t col = 0; col < grid.resolution; ++col) {
      const double c = grid.log2_units_at(col);
      out << full_precision(c) << ',' << units_from_exponent(c) << ','
          << full_precision(grid.dropout_at(row)) << ',' << full_precision(grid.value(row, col))
          << '\n';
    }
  }
  write_text(path, out.str());
}

std::string linear_fit_svg(const std::vector<TrialRecord>& subset, const surrogates::LinearModel& model) {
  const auto rows = completed(subset);
  if (rows.empty()) throw DomainError("linear fit plot needs at least one point");
  double min_c = std::numeric_limits<double>::infinity();
  double max_c = -min_c;
  for (const auto& r : rows) {
    const double c = std::log2(static_cast<double>(r.point.hidden_units));
    min_c = std::min(min_c, c);
    max_c = std::max(max_c, c);
  }
  double lo = std::floor(min_c);
  double hi = std::ceil(max_c);
  if (!(hi > lo)) hi = lo + 1.0;
  const Axis x{lo, hi, kPlotX, kPlotX + kPlotW};
  const Axis y{0.0, 1.0, kPlotY + kPlotH, kPlotY};

  std::ostringstream out;
  out << svg_open("Linear fit: dropout = " + fmt(model.slope, 4) + " * log2(units) + " +
                  fmt(model.intercept, 4) + " (MAE " + fmt(model.mae, 4) + ")");
  out << "<defs><clipPath id=\"plot\"><rect x=\"" << fmt(kPlotX) << "\" y=\"" << fmt(kPlotY)
      << "\" width=\"" << fmt(kPlotW) << "\" height=\"" << fmt(kPlotH)
      << "\"/></clipPath></defs>\n";
  out << "<g class=\"points\" fill=\"#2c7bb6\" stroke=\"#000000\" stroke-width=\"0.5\">\n";
  for (const auto& r : rows) {
    const double c = std::log2(static_cast<double>(r.point.hidden_units));
    out << "<circle cx=\"" << fmt(x(c), 3) << "\" cy=\"" << fmt(y(r.point.dropout_rate), 3)
        << "\" r=\"3\"/>\n";
  }
  out << "</g>\n";
  out << "<path class=\"fit\" d=\"M " << fmt(x(lo), 3) << ' ' << fmt(y(model.predict(lo)), 3)
      << " L " << fmt(x(hi), 3) << ' ' << fmt(y(model.predict(hi)), 3)
      << "\" stroke=\"#d7191c\" stroke-width=\"2\" fill=\"none\" clip-path=\"url(#plot)\"/>\n";
  axis_labels(out, "hidden units (log2 scale)", "dropout rate");
  units_ticks(out, x, kPlotY + kPlotH);
  dropout_ticks(out, y, kPlotX);
  out << "</svg>\n";
  return out.str();
}

void emit_linear_fit_plot(const std::vector<TrialRecord>& subset, const surrogates::LinearModel& model,
                          const std::filesystem::path& path) {
  write_text(path, linear_fit_svg(subset, model));
}

void emit_inverse_curve_csv(const std::vector<surrogates::InverseCurvePoint>& curve,
                            const std::filesystem::path& path) {
  std::ostringstream out;
  out << "hidden_units,dropout\n";
  for (const auto& p : curve) out << p.hidden_units << ',' << full_precision(p.dropout) << '\n';
  write_text(path, out.str());
}

}  // namespace droptune::report
