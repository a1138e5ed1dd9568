#pragma once

#include <Eigen/Core>

#include "tsdiff/schedule.hpp"

namespace tsdiff {

/// Observed entries of an L x C window and their values. Every entry that is
/// not observed is a target entry, so obs and ta always partition the grid.
struct ObservationMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // L x C
  Window values;                                                 // L x C, zero where unobserved

  Eigen::Index length() const { return observed.rows(); }
  Eigen::Index channels() const { return observed.cols(); }
  Eigen::Index observed_count() const { return observed.count(); }

  /// 1.0 on observed entries, 0.0 elsewhere.
  Window indicator() const { return observed.cast<double>().matrix(); }

  /// All-unobserved mask of the given shape.
  static ObservationMask empty(Eigen::Index length, Eigen::Index channels);
};

/// Copies `window` into the observed entries of `mask`.
ObservationMask observe(ObservationMask mask, const Window& window);

}  // namespace tsdiff
