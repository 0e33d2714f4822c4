// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dreammap {

/// Unit carried by a grid of RSSI values.
enum class Unit { dBm, Normalized };

inline const char* unit_name(Unit u) { return u == Unit::dBm ? "dbm" : "norm"; }

inline int cell_index(int row, int col, int width) { return row * width + col; }

inline std::pair<int, int> cell_coords(int cell, int width) {
  return {cell / width, cell % width};
}

class MeasurementState;

/// Dense H×W field of RSSI values stored row-major. Immutable after
/// construction; construction validates shape and finiteness.
///
/// Values in normalized units are expected in [0, 1] at the data boundaries
/// (files, generated datasets). Model outputs reuse the tag with a linear
/// head, so the range is not a hard constructor check.
template <typename Scalar>
class GridMapT {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatView = Eigen::Map<
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  GridMapT() = default;

  GridMapT(int height, int width, Unit unit)
      : GridMapT(height, width, Vec::Zero(check_dims(height, width)), unit) {}

  GridMapT(int height, int width, Vec values, Unit unit)
      : height_(height), width_(width), unit_(unit), values_(std::move(values)) {
    check_dims(height, width);
    if (values_.size() != static_cast<Eigen::Index>(height) * width)
      throw std::invalid_argument("GridMap: value count does not match H*W");
    if (!values_.allFinite())
      throw std::invalid_argument("GridMap: non-finite value");
  }

  static GridMapT constant(int height, int width, Scalar v, Unit unit) {
    return GridMapT(height, width, Vec::Constant(check_dims(height, width), v), unit);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  Unit unit() const { return unit_; }

  Scalar operator()(int row, int col) const { return values_[row * width_ + col]; }
  Scalar operator[](int cell) const { return values_[cell]; }

  const Vec& values() const { return values_; }

  /// (H, W) matrix view over the row-major storage.
  MatView matrix() const { return MatView(values_.data(), height_, width_); }

  bool same_shape(const GridMapT& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const GridMapT& a, const GridMapT& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.unit_ == b.unit_ &&
           a.values_ == b.values_;
  }

 private:
  friend class MeasurementState;

  static Eigen::Index check_dims(int height, int width) {
    if (height < 1 || width < 1)
      throw std::invalid_argument("GridMap: dimensions must be >= 1");
    return static_cast<Eigen::Index>(height) * width;
  }

  Scalar& mutable_at(int cell) { return values_[cell]; }

  int height_ = 0;
  int width_ = 0;
  Unit unit_ = Unit::Normalized;
  Vec values_;
};

using GridMap = GridMapT<double>;

/// Measurement location as a normalized spatial coordinate plus its
/// row-major cell index.
struct ActionCoord {
  double row_norm = 0.0;
  double col_norm = 0.0;
  int cell_index = 0;
};

inline ActionCoord make_action(int cell, int height, int width) {
  if (cell < 0 || cell >= height * width)
    throw std::invalid_argument("make_action: cell out of range");
  auto [r, c] = cell_coords(cell, width);
  ActionCoord a;
  a.row_norm = height > 1 ? static_cast<double>(r) / (height - 1) : 0.0;
  a.col_norm = width > 1 ? static_cast<double>(c) / (width - 1) : 0.0;
  a.cell_index = cell;
  return a;
}

/// Visited set, sparse value map and binary mask, kept consistent: a cell is
/// in `visited` iff its mask is 1, and unvisited cells hold 0 in the value
/// map. Mutated only through apply_measurement.
class MeasurementState {
 public:
  MeasurementState(int height, int width, Unit unit = Unit::Normalized)
      : value_(height, width, unit), mask_(height, width, Unit::Normalized) {}

  int height() const { return value_.height(); }
  int width() const { return value_.width(); }
  int size() const { return value_.size(); }

  const std::vector<int>& visited() const { return visited_; }
  const GridMap& value_map() const { return value_; }
  const GridMap& mask() const { return mask_; }

  bool is_visited(int cell) const { return mask_[cell] != 0.0; }

  /// Cells not yet measured, in row-major order.
  std::vector<int> unmeasured_cells() const {
    std::vector<int> out;
    out.reserve(size() - static_cast<int>(visited_.size()));
    for (int i = 0; i < size(); ++i)
      if (!is_visited(i)) out.push_back(i);
    return out;
  }

  friend void apply_measurement(MeasurementState& state, int cell, double value);

 private:
  void apply(int cell, double value) {
    if (cell < 0 || cell >= size())
      throw std::invalid_argument("apply_measurement: cell out of range");
    if (is_visited(cell))
      throw std::invalid_argument("apply_measurement: cell measured twice");
    if (!std::isfinite(value))
      throw std::invalid_argument("apply_measurement: non-finite value");
    visited_.push_back(cell);
    value_.mutable_at(cell) = value;
    mask_.mutable_at(cell) = 1.0;
  }

  std::vector<int> visited_;
  GridMap value_;
  GridMap mask_;
};

/// Record one measurement: grows the visited set by exactly one cell and
/// leaves every other cell untouched.
inline void apply_measurement(MeasurementState& state, int cell, double value) {
  state.apply(cell, value);
}

/// Model input: the fully observed empty-environment reference plus the
/// current sparse measurement state, all on one (H, W) grid.
struct Observation {
  GridMap empty_ref;
  MeasurementState state;
};

inline Observation make_observation(GridMap empty_ref, MeasurementState state) {
  if (empty_ref.height() != state.height() || empty_ref.width() != state.width())
    throw std::invalid_argument("make_observation: channel shapes differ");
  return Observation{std::move(empty_ref), std::move(state)};
}

/// Provenance for an empty/occupied pair.
struct PairMeta {
  std::string source = "synthetic";  // synthetic | dataset
  std::uint64_t seed = 0;
  int scale = 1;
  double dbm_min = 0.0;  // normalization range; meaningful when maps are normalized
  double dbm_max = 0.0;
};

/// Fully observed empty map paired with the occupied map it predicts.
struct EnvironmentPair {
  GridMap empty;
  GridMap occupied;
  PairMeta meta;
};

inline void validate(const EnvironmentPair& pair) {
  if (!pair.empty.same_shape(pair.occupied))
    throw std::invalid_argument("EnvironmentPair: empty/occupied shapes differ");
  if (pair.empty.unit() != pair.occupied.unit())
    throw std::invalid_argument("EnvironmentPair: empty/occupied units differ");
  if (pair.empty.unit() == Unit::Normalized && !(pair.meta.dbm_min < pair.meta.dbm_max))
    throw std::invalid_argument("EnvironmentPair: normalized pair needs dbm_min < dbm_max");
}

}  // namespace dreammap
