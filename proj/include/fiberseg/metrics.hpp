#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "fiberseg/volume.hpp"

namespace fiberseg {

/// Joint label counts m_ij over an evaluation domain of n voxels.
struct ContingencyTable {
  std::map<std::uint32_t, std::uint64_t> truth_sizes;
  std::map<std::uint32_t, std::uint64_t> pred_sizes;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> joint;
  std::uint64_t n = 0;

  /// Associative merge for sharded accumulation.
  void merge(const ContingencyTable& other);
};

/// Contingency over all voxels, or only over voxels with truth != 0.
ContingencyTable contingency(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background);

/// R_a from a contingency table; 0/0 is 1 for identical partitions, else 0.
double adjusted_rand_index(const ContingencyTable& table);
double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background);

struct OverlapCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Requires binary {0,1} masks on the same grid.
OverlapCounts overlap_counts(const LabelVolume& truth, const LabelVolume& pred);

/// 2 TP / (2 TP + FN + FP); two empty masks score 1.
double dice(const LabelVolume& truth, const LabelVolume& pred);
double dice(const OverlapCounts& c);

/// Nonzero -> 1.
LabelVolume foreground_mask(const LabelVolume& labels);

struct MetricReport {
  double dice = 0.0;
  double ari = 0.0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  std::uint64_t n = 0;  ///< ARI evaluation domain size
  bool ignore_background = true;

  std::string to_json() const;
};

/// Dice on the foreground masks, ARI on the instance labels.
MetricReport evaluate(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background = true);

}  // namespace fiberseg
