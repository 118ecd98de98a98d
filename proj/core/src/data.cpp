#include "droptune/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "droptune/errors.hpp"
#include "droptune/rng.hpp"

namespace droptune::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' ||
                        s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "?" || cell == "nan" ||
         cell == "NaN";
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() < 1) throw DomainError("dataset has no rows");
  if (labels.size() != features.rows())
    throw ShapeError("label count does not match feature rows");
  if (feature_names.size() != static_cast<std::size_t>(features.cols()))
    throw ShapeError("feature name count does not match feature columns");
  if (!features.allFinite()) throw SchemaError("dataset has non-finite features");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw SchemaError("label at row " + std::to_string(i) + " is not 0 or 1");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& row_indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(row_indices.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(row_indices.size()));
  for (std::size_t k = 0; k < row_indices.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(row_indices[k]);
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(src);
    out.labels[static_cast<Eigen::Index>(k)] = labels[src];
  }
  return out;
}

LoadResult load_csv(const std::filesystem::path& path,
                    std::string_view label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("missing header row in " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);

  const auto header = split_fields(line);
  std::size_t label_index = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_column) label_index = c;
  }
  if (label_index == header.size())
    throw SchemaError("label column '" + std::string(label_column) + "' not in header");

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_index) names.emplace_back(header[c]);

  std::vector<double> values;
  std::vector<double> labels;
  std::size_t dropped = 0;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError("row has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()),
                       row_number, fields.size());

    if (std::any_of(fields.begin(), fields.end(), is_missing)) {
      ++dropped;
      continue;
    }
    std::vector<double> parsed(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto cell = fields[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), parsed[c]);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(parsed[c]))
        throw ParseError("cannot parse '" + std::string(cell) + "' at row " +
                             std::to_string(row_number) + ", column " +
                             std::to_string(c + 1),
                         row_number, c + 1);
    }
    const double label = parsed[label_index];
    if (label != 0.0 && label != 1.0)
      throw SchemaError("label column '" + std::string(label_column) + "' has value " +
                        std::string(fields[label_index]) + " at row " +
                        std::to_string(row_number));
    labels.push_back(label);
    for (std::size_t c = 0; c < parsed.size(); ++c)
      if (c != label_index) values.push_back(parsed[c]);
  }

  const auto m = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(names.size());
  if (m == 0) throw DegenerateDataError("no complete rows in " + path.string());

  LoadResult result;
  result.dropped_rows = dropped;
  result.dataset.feature_names = std::move(names);
  result.dataset.features =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          values.data(), m, d);
  result.dataset.labels = Eigen::Map<Eigen::VectorXd>(labels.data(), m);
  return result;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of empty sample");
  if (q < 0.0 || q > 1.0) throw DomainError("quantile level outside [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Dataset iqr_filter(const Dataset& ds, double coefficient,
                   const std::vector<std::size_t>& columns) {
  if (!(coefficient > 0.0)) throw DomainError("IQR coefficient must be positive");
  std::vector<std::size_t> cols = columns;
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(ds.cols()));
    std::iota(cols.begin(), cols.end(), std::size_t{0});
  }

  std::vector<std::pair<double, double>> bounds;
  bounds.reserve(cols.size());
  for (const std::size_t c : cols) {
    if (c >= static_cast<std::size_t>(ds.cols()))
      throw DomainError("IQR column index " + std::to_string(c) + " out of range");
    const auto col = ds.features.col(static_cast<Eigen::Index>(c));
    std::vector<double> sorted(col.begin(), col.end());
    std::sort(sorted.begin(), sorted.end());
    const double q1 = quantile_sorted(sorted, 0.25);
    const double q3 = quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    bounds.emplace_back(q1 - coefficient * iqr, q3 + coefficient * iqr);
  }

  std::vector<std::size_t> keep;
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    bool inside = true;
    for (std::size_t k = 0; k < cols.size() && inside; ++k) {
      const double v = ds.features(r, static_cast<Eigen::Index>(cols[k]));
      inside = v >= bounds[k].first && v <= bounds[k].second;
    }
    if (inside) keep.push_back(static_cast<std::size_t>(r));
  }
  if (keep.empty()) throw DegenerateDataError("IQR filter removed every row");
  return ds.subset(keep);
}

FeatureStats compute_stats(const Dataset& train) {
  if (train.rows() < 1) throw DomainError("cannot standardize an empty dataset");
  FeatureStats stats;
  stats.mean = train.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train.features.rowwise() - stats.mean.transpose();
  stats.stddev = (centered.array().square().colwise().sum() /
                  static_cast<double>(train.rows()))
                     .sqrt()
                     .transpose();
  for (Eigen::Index c = 0; c < stats.stddev.size(); ++c) {
    const double scale = std::max(1.0, std::abs(stats.mean[c]));
    if (!(stats.stddev[c] > 1e-12 * scale)) {
      const std::string name = static_cast<std::size_t>(c) < train.feature_names.size()
                                   ? train.feature_names[static_cast<std::size_t>(c)]
                                   : std::to_string(c);
      throw SchemaError("feature '" + name + "' has zero variance");
    }
  }
  return stats;
}

Dataset apply_stats(const Dataset& ds, const FeatureStats& stats) {
  if (ds.cols() != stats.mean.size())
    throw ShapeError("feature count does not match standardization stats");
  Dataset out = ds;
  out.features = ((ds.features.rowwise() - stats.mean.transpose()).array().rowwise() /
                  stats.stddev.transpose().array())
                     .matrix();
  return out;
}

Standardized standardize(const Dataset& train, const std::vector<Dataset>& others) {
  Standardized out;
  out.stats = compute_stats(train);
  out.train = apply_stats(train, out.stats);
  out.others.reserve(others.size());
  for (const auto& ds : others) out.others.push_back(apply_stats(ds, out.stats));
  return out;
}

SplitIndices split_indices(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw DomainError("validation fraction must lie in (0, 1)");
  const auto m = static_cast<std::size_t>(ds.rows());

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < m; ++i)
    by_class[ds.labels[static_cast<Eigen::Index>(i)] == 1.0 ? 1 : 0].push_back(i);

  // Largest-remainder allocation so the total equals round(fraction * m).
  const auto total = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(m)));
  std::size_t quota[2];
  double remainder[2];
  for (int c = 0; c < 2; ++c) {
    const double exact = val_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
  }
  std::size_t assigned = quota[0] + quota[1];
  while (assigned < total) {
    const int c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
    ++assigned;
  }

  Rng rng(seed);
  SplitIndices out;
  for (int c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (quota[c] == 0 || quota[c] >= members.size())
      throw StratificationError("class " + std::to_string(c) +
                                " would be absent from one side of the split");
    for (std::size_t i = members.size() - 1; i > 0; --i)
      std::swap(members[i], members[rng.index(i + 1)]);
    out.val.insert(out.val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw StratificationError("dataset contains a single class");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

Split split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  const auto idx = split_indices(ds, val_fraction, seed);
  return {ds.subset(idx.train), ds.subset(idx.val)};
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::separable_blobs: return "blobs";
    case SyntheticKind::annulus: return "annulus";
  }
  return "?";
}

SyntheticKind synthetic_kind_from_string(std::string_view s) {
  if (s == "blobs" || s == "separable_blobs") return SyntheticKind::separable_blobs;
  if (s == "annulus") return SyntheticKind::annulus;
  throw DomainError("unknown synthetic dataset '" + std::string(s) + "'");
}

Dataset make_synthetic(SyntheticKind kind, std::size_t m, std::uint64_t seed) {
  if (m < 10) throw DomainError("synthetic datasets need at least 10 rows");
  Rng rng(seed);
  Dataset ds;
  ds.feature_names = {"x1", "x2"};
  ds.features.resize(static_cast<Eigen::Index>(m), 2);
  ds.labels.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const bool positive = (i % 2) == 0;
    ds.labels[r] = positive ? 1.0 : 0.0;
    switch (kind) {
      case SyntheticKind::separable_blobs: {
        const double centre = positive ? 2.0 : -2.0;
        ds.features(r, 0) = centre + 0.5 * rng.normal();
        ds.features(r, 1) = centre + 0.5 * rng.normal();
        break;
      }
      case SyntheticKind::annulus: {
        // Area-uniform radius within the disk or the ring.
        const double u = rng.uniform();
        const double radius =
            positive ? std::sqrt(u) : std::sqrt(1.69 + u * (4.0 - 1.69));
        const double angle = 2.0 * 3.14159265358979323846 * rng.uniform();
        ds.features(r, 0) = radius * std::cos(angle);
        ds.features(r, 1) = radius * std::sin(angle);
        break;
      }
    }
  }
  return ds;
}

}  // namespace droptune::data
