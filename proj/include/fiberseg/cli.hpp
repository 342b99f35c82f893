#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fiberseg/fiber_model.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kVolumeFormatVersion = 1;

/// Length and orientation statistics of the instances in a label volume;
/// each label's axis is the principal direction of its voxel cloud and its
/// length is the voxel extent along that axis (micrometers).
ModelStats label_statistics(const LabelVolume& labels);

/// Entry point of the command-line tool. args excludes the program name.
/// Returns the process exit code; errors are one line on `err`:
///   error: stage=<stage> message=<text>
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fiberseg
