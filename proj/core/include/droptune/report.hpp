#ifndef DROPTUNE_REPORT_HPP
#define DROPTUNE_REPORT_HPP

// Static artifacts: scatter/grid CSVs and standalone SVG 1.1 heatmaps and
// scatter plots. Output bytes depend only on the inputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "droptune/harness.hpp"
#include "droptune/sampler.hpp"
#include "droptune/surrogates.hpp"

namespace droptune::report {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

// min -> cool, max -> warm, linear in RGB.
struct ColorStops {
  Rgb low{44, 123, 182};
  Rgb high{215, 25, 28};
};

// Position of value on [lo, hi] clamped to [0, 1]; 0 when lo == hi.
double color_position(double value, double lo, double hi);
Rgb interpolate(const ColorStops& stops, double t);
std::string hex(const Rgb& c);

struct HeatmapSpec {
  SearchRegion region;
  std::size_t resolution = 0;
  std::vector<double> values;  // row-major, dropout index as the row
  std::string title;
  std::string x_label = "hidden units (log2 scale)";
  std::string y_label = "dropout rate";
  std::string value_label = "cost";
  ColorStops colors;

  // Throws DomainError when sizes disagree or a value is non-finite.
  void validate() const;
};

HeatmapSpec heatmap_from_grid(const surrogates::SurfaceGrid& grid, std::string title,
                              std::string value_label);

// Fills each lattice cell with the value of the nearest completed trial in
// normalized (log2 units, dropout) space. Used for raw sweep heatmaps.
enum class Metric { cost, accuracy };
HeatmapSpec nearest_trial_heatmap(const std::vector<TrialRecord>& ledger, const SearchRegion& region,
                                  std::size_t resolution, Metric metric, std::string title);

struct OverlayPoint {
  double log2_units = 0.0;
  double dropout = 0.0;
  double value = 0.0;
};

std::vector<OverlayPoint> overlay_points(const std::vector<TrialRecord>& ledger, Metric metric);

std::string heatmap_svg(const HeatmapSpec& spec, const std::vector<OverlayPoint>& overlay = {});
void emit_heatmap_svg(const HeatmapSpec& spec, const std::vector<OverlayPoint>& overlay,
                      const std::filesystem::path& path);

// Header units,dropout,cost,accuracy; one row per completed trial.
void emit_scatter_csv(const std::vector<TrialRecord>& ledger, const std::filesystem::path& path);

// Header log2_units,units,dropout,value; one row per lattice point.
void emit_grid_csv(const surrogates::SurfaceGrid& grid, const std::filesystem::path& path);

// Scatter of the selected trials in (log2 units, dropout) with the fitted
// line across the plotted range. Throws DomainError on an empty subset.
std::string linear_fit_svg(const std::vector<TrialRecord>& subset, const surrogates::LinearModel& model);
void emit_linear_fit_plot(const std::vector<TrialRecord>& subset, const surrogates::LinearModel& model,
                          const std::filesystem::path& path);

// hidden_units,dropout rows for the inverse model's query curve.
void emit_inverse_curve_csv(const std::vector<surrogates::InverseCurvePoint>& curve,
                            const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace droptune::report

#endif  // DROPTUNE_REPORT_HPP
