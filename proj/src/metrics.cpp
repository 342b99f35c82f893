#include "fiberseg/metrics.hpp"

#include <unordered_map>

#include "json.hpp"

namespace fiberseg {

namespace {

using Wide = __int128;

Wide pairs(std::uint64_t m) { return static_cast<Wide>(m) * static_cast<Wide>(m - (m > 0 ? 1 : 0)) / 2; }

void require_binary(const LabelVolume& v, const char* which) {
  for (const auto x : v.data())
    if (x > 1) throw ParameterError(std::string("dice: ") + which + " mask is not binary");
}

}  // namespace

void ContingencyTable::merge(const ContingencyTable& other) {
  for (const auto& [k, c] : other.truth_sizes) truth_sizes[k] += c;
  for (const auto& [k, c] : other.pred_sizes) pred_sizes[k] += c;
  for (const auto& [k, c] : other.joint) joint[k] += c;
  n += other.n;
}

ContingencyTable contingency(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background) {
  require_same_grid(truth.grid(), pred.grid(), "contingency");
  std::unordered_map<std::uint64_t, std::uint64_t> joint;
  ContingencyTable t;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (ignore_background && truth[i] == 0) continue;
    ++joint[(static_cast<std::uint64_t>(truth[i]) << 32) | pred[i]];
    ++t.n;
  }
  for (const auto& [key, count] : joint) {
    const auto a = static_cast<std::uint32_t>(key >> 32);
    const auto b = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
    t.joint[{a, b}] += count;
    t.truth_sizes[a] += count;
    t.pred_sizes[b] += count;
  }
  return t;
}

double adjusted_rand_index(const ContingencyTable& table) {
  if (table.n < 2) throw ParameterError("adjusted_rand_index: evaluation domain has fewer than 2 voxels");
  Wide index = 0, t1 = 0, t2 = 0;
  for (const auto& [k, m] : table.joint) index += pairs(m);
  for (const auto& [k, m] : table.truth_sizes) t1 += pairs(m);
  for (const auto& [k, m] : table.pred_sizes) t2 += pairs(m);
  const Wide total = pairs(table.n);
  // (index - t1 t2 / P) / ((t1 + t2) / 2 - t1 t2 / P), scaled by 2P
  const Wide num = 2 * (index * total - t1 * t2);
  const Wide den = (t1 + t2) * total - 2 * t1 * t2;
  if (den == 0) {
    const bool identical =
        table.joint.size() == table.truth_sizes.size() && table.joint.size() == table.pred_sizes.size();
    return identical ? 1.0 : 0.0;
  }
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background) {
  return adjusted_rand_index(contingency(truth, pred, ignore_background));
}

OverlapCounts overlap_counts(const LabelVolume& truth, const LabelVolume& pred) {
  require_same_grid(truth.grid(), pred.grid(), "dice");
  require_binary(truth, "truth");
  require_binary(pred, "prediction");
  OverlapCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0, p = pred[i] != 0;
    if (t && p)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double dice(const OverlapCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fn + c.fp;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double dice(const LabelVolume& truth, const LabelVolume& pred) { return dice(overlap_counts(truth, pred)); }

LabelVolume foreground_mask(const LabelVolume& labels) {
  LabelVolume out(labels.grid());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != 0 ? 1u : 0u;
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::json j = {{"dice", dice}, {"ari", ari}, {"tp", tp}, {"fp", fp},
                      {"fn", fn},     {"n", n},     {"ignore_background", ignore_background}};
  return j.dump();
}

MetricReport evaluate(const LabelVolume& truth, const LabelVolume& pred, bool ignore_background) {
  require_same_grid(truth.grid(), pred.grid(), "evaluate");
  const auto counts = overlap_counts(foreground_mask(truth), foreground_mask(pred));
  const auto table = contingency(truth, pred, ignore_background);
  MetricReport r;
  r.dice = dice(counts);
  r.ari = adjusted_rand_index(table);
  r.tp = counts.tp;
  r.fp = counts.fp;
  r.fn = counts.fn;
  r.n = table.n;
  r.ignore_background = ignore_background;
  return r;
}

}  // namespace fiberseg
