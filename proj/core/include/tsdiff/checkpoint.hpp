#pragma once

#include <iosfwd>
#include <string>

#include "tsdiff/model.hpp"

namespace tsdiff {

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout: a text header of `key value` lines opened by
/// `tsdiff-checkpoint <version>` and closed by `end_header` (provenance
/// entries appear as `provenance.<key> <value>`), followed by the
/// flat parameter vector as little-endian IEEE-754 binary32.
///
/// Parameters are held in double precision but stored as float, so saving
/// rounds them; `round_params_to_float` applies the same rounding in memory.
void save_checkpoint(const DiffusionModel& model, std::ostream& out);
void save_checkpoint(const DiffusionModel& model, const std::string& path);

DiffusionModel load_checkpoint(std::istream& in);
DiffusionModel load_checkpoint(const std::string& path);

void round_params_to_float(DenoiserParams& params);

}  // namespace tsdiff
