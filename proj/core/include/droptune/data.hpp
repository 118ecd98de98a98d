#ifndef DROPTUNE_DATA_HPP
#define DROPTUNE_DATA_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace droptune::data {

// Tabular binary-classification data. One row per example.
struct Dataset {
  Eigen::MatrixXd features;  // m x d
  Eigen::VectorXd labels;    // m, values 0.0 or 1.0
  std::vector<std::string> feature_names;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }

  // Throws SchemaError/DomainError when the invariants do not hold.
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& row_indices) const;
};

struct LoadResult {
  Dataset dataset;
  std::size_t dropped_rows = 0;  // rows with a missing cell
};

// Comma-separated, header row required. Empty, "NA" and "?" cells count as
// missing and drop the row.
LoadResult load_csv(const std::filesystem::path& path,
                    std::string_view label_column);

// Linear-interpolation quantile of already sorted values, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q);

// Drops every row with a value outside [Q1 - c*IQR, Q3 + c*IQR] in any of
// `columns` (all columns when empty). Bounds are computed once, on the input.
Dataset iqr_filter(const Dataset& ds, double coefficient = 2.5,
                   const std::vector<std::size_t>& columns = {});

// Per-feature mean and population standard deviation of the training split.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

FeatureStats compute_stats(const Dataset& train);
Dataset apply_stats(const Dataset& ds, const FeatureStats& stats);

struct Standardized {
  Dataset train;
  std::vector<Dataset> others;
  FeatureStats stats;
};

Standardized standardize(const Dataset& train,
                         const std::vector<Dataset>& others = {});

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Stratified by label; index lists are sorted ascending.
SplitIndices split_indices(const Dataset& ds, double val_fraction,
                           std::uint64_t seed);

struct Split {
  Dataset train;
  Dataset val;
};

Split split(const Dataset& ds, double val_fraction = 0.2, std::uint64_t seed = 0);

enum class SyntheticKind { separable_blobs, annulus };

std::string_view to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(std::string_view s);

// separable_blobs: two Gaussian clusters in 2-D, centres (+-2, +-2), sd 0.5.
// annulus: label 1 inside the unit disk, label 0 on the ring 1.3 < r < 2.
// Classes alternate so both are (almost) balanced.
Dataset make_synthetic(SyntheticKind kind, std::size_t m, std::uint64_t seed);

}  // namespace droptune::data

#endif  // DROPTUNE_DATA_HPP
