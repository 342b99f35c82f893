#include "fiberseg/fiber_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "fiberseg/errors.hpp"
#include "json.hpp"

namespace fiberseg {

double segment_segment_distance_sq(Vec3 p1, Vec3 q1, Vec3 p2, Vec3 q2) {
  constexpr double eps = 1e-12;
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = dot(d1, d1);
  const double e = dot(d2, d2);
  const double f = dot(d2, r);
  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) {
    return dot(r, r);
  }
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      // parallel segments: denom == 0, any s works; pick 0
      s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 c1 = p1 + s * d1;
  const Vec3 c2 = p2 + t * d2;
  const Vec3 d = c1 - c2;
  return dot(d, d);
}

double Fiber::volume() const { return std::numbers::pi * radius * radius * length(); }

void ModelParams::validate() const {
  if (!(box_edge > 0.0)) throw ParameterError("box_edge must be > 0");
  if (!(radius > 0.0)) throw ParameterError("radius must be > 0");
  if (!(2.0 * radius < box_edge)) throw ParameterError("2*radius must be smaller than box_edge");
  if (!(mean_length > 0.0)) throw ParameterError("mean_length must be > 0");
  if (!(length_stddev >= 0.0)) throw ParameterError("length_stddev must be >= 0");
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw ParameterError("target_fraction must lie in (0,1)");
}

double FiberModel::fiber_volume() const {
  double v = 0.0;
  for (const auto& f : fibers) v += f.volume();
  return v;
}

double FiberModel::volume_fraction() const {
  const double e = params.box_edge;
  return fiber_volume() / (e * e * e);
}

bool capsules_overlap(const Fiber& a, const Fiber& b) {
  const double reach = a.radius + b.radius;
  return segment_segment_distance_sq(a.p0, a.p1, b.p0, b.p1) < reach * reach;
}

bool fiber_inside_box(const Fiber& f, double box_edge) {
  const double lo = f.radius, hi = box_edge - f.radius;
  auto in = [&](const Vec3& p) {
    return p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi && p.z >= lo && p.z <= hi;
  };
  return in(f.p0) && in(f.p1);
}

namespace {

// Uniform-grid broad phase. Accepted fibers are registered in the 27-cell
// neighborhood of every axis sample; a candidate only inspects the cells of
// its own samples. With cell size >= 4r and sample spacing <= cell/2 every
// overlapping pair shares at least one such cell.
class FiberGrid {
 public:
  FiberGrid(double box_edge, double radius) {
    cell_ = std::max(4.0 * radius, box_edge / 256.0);
    n_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(box_edge / cell_)));
    cells_.resize(n_ * n_ * n_);
    cell_stamp_.assign(cells_.size(), 0);
  }

  template <class Visit>
  void for_each_sample_cell(const Fiber& f, Visit&& visit) const {
    const Vec3 d = f.p1 - f.p0;
    const double len = norm(d);
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / (0.5 * cell_))));
    for (std::size_t i = 0; i <= steps; ++i) {
      const Vec3 p = f.p0 + (static_cast<double>(i) / static_cast<double>(steps)) * d;
      visit(coord(p.x), coord(p.y), coord(p.z));
    }
  }

  void insert(const Fiber& f, std::uint32_t slot) {
    const std::uint32_t stamp = slot + 1;
    for_each_sample_cell(f, [&](std::size_t cx, std::size_t cy, std::size_t cz) {
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto x = static_cast<std::ptrdiff_t>(cx) + dx;
            const auto y = static_cast<std::ptrdiff_t>(cy) + dy;
            const auto z = static_cast<std::ptrdiff_t>(cz) + dz;
            const auto n = static_cast<std::ptrdiff_t>(n_);
            if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) continue;
            const auto c = static_cast<std::size_t>(x + n * (y + n * z));
            if (cell_stamp_[c] == stamp) continue;
            cell_stamp_[c] = stamp;
            cells_[c].push_back(slot);
          }
    });
  }

  const std::vector<std::uint32_t>& cell(std::size_t cx, std::size_t cy, std::size_t cz) const {
    return cells_[cx + n_ * (cy + n_ * cz)];
  }

 private:
  std::size_t coord(double v) const {
    const double c = std::floor(v / cell_);
    if (c < 0.0) return 0;
    return std::min(n_ - 1, static_cast<std::size_t>(c));
  }

  double cell_ = 1.0;
  std::size_t n_ = 1;
  std::vector<std::vector<std::uint32_t>> cells_;
  std::vector<std::uint32_t> cell_stamp_;
};

}  // namespace

FiberModel generate_model(const ModelParams& params) {
  params.validate();
  FiberModel model;
  model.params = params;

  const double edge = params.box_edge;
  const double box_volume = edge * edge * edge;
  // longest capsule axis that fits anywhere: along the main diagonal
  const double max_length = std::sqrt(3.0) * (edge - 2.0 * params.radius);

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> length_dist(params.mean_length, params.length_stddev);

  auto sample_length = [&] {
    for (int tries = 0; tries < 100000; ++tries) {
      const double len = params.length_stddev > 0.0 ? length_dist(rng) : params.mean_length;
      if (len > 0.0 && len <= max_length) return len;
    }
    throw ParameterError("fiber length distribution never yields a length that fits the box");
  };

  FiberGrid grid(edge, params.radius);
  std::vector<std::uint64_t> tested(0);
  double fiber_volume = 0.0;
  double fraction = 0.0;

  // One attempt = one in-box candidate tested against the accepted fibers.
  // The length is drawn once per fiber and kept across failed attempts, while
  // position and direction are redrawn; redrawing the length too would favor
  // short fibers. Placements that leave the box are redrawn without counting,
  // up to kMaxBoxRedraws in a row, after which the attempt is spent and a new
  // length drawn.
  constexpr int kMaxBoxRedraws = 10000;
  double len = 0.0;
  bool need_length = true;
  while (model.attempts_used < params.max_attempts && fraction < params.target_fraction) {
    ++model.attempts_used;
    if (need_length) {
      len = sample_length();
      need_length = false;
    }
    Fiber f;
    f.radius = params.radius;
    bool inside = false;
    for (int redraw = 0; redraw < kMaxBoxRedraws && !inside; ++redraw) {
      const Vec3 center{edge * unit(rng), edge * unit(rng), edge * unit(rng)};
      const double cos_polar = 2.0 * unit(rng) - 1.0;
      const double azimuth = 2.0 * std::numbers::pi * unit(rng);
      const double sin_polar = std::sqrt(std::max(0.0, 1.0 - cos_polar * cos_polar));
      const Vec3 dir{sin_polar * std::cos(azimuth), sin_polar * std::sin(azimuth), cos_polar};
      f.p0 = center - (0.5 * len) * dir;
      f.p1 = center + (0.5 * len) * dir;
      inside = fiber_inside_box(f, edge);
    }
    if (!inside) {
      need_length = true;
      continue;
    }

    bool overlaps = false;
    grid.for_each_sample_cell(f, [&](std::size_t cx, std::size_t cy, std::size_t cz) {
      if (overlaps) return;
      for (const std::uint32_t slot : grid.cell(cx, cy, cz)) {
        if (tested[slot] == model.attempts_used) continue;
        tested[slot] = model.attempts_used;
        if (capsules_overlap(f, model.fibers[slot])) {
          overlaps = true;
          return;
        }
      }
    });
    if (overlaps) continue;

    const auto slot = static_cast<std::uint32_t>(model.fibers.size());
    f.id = slot + 1;
    model.fibers.push_back(f);
    need_length = true;
    tested.push_back(0);
    grid.insert(f, slot);
    fiber_volume += f.volume();
    fraction = fiber_volume / box_volume;
    model.fraction_history.push_back(fraction);
  }
  return model;
}

std::size_t audit_model(const FiberModel& m) {
  const auto& fibers = m.fibers;
  const auto n = static_cast<std::ptrdiff_t>(fibers.size());
  std::size_t violations = 0;
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : violations)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& a = fibers[static_cast<std::size_t>(i)];
    if (!fiber_inside_box(a, m.params.box_edge)) ++violations;
    for (std::ptrdiff_t j = i + 1; j < n; ++j)
      if (capsules_overlap(a, fibers[static_cast<std::size_t>(j)])) ++violations;
  }
  return violations;
}

double weight_fraction(double volume_fraction, double fiber_density, double matrix_density) {
  const double fiber_mass = fiber_density * volume_fraction;
  const double total = fiber_mass + matrix_density * (1.0 - volume_fraction);
  return total > 0.0 ? fiber_mass / total : 0.0;
}

AxisAngles axis_angles(const Vec3& direction) {
  Vec3 d = normalized(direction);
  if (d.z < 0.0 || (d.z == 0.0 && (d.y < 0.0 || (d.y == 0.0 && d.x < 0.0)))) d = -1.0 * d;
  const double theta = std::asin(std::clamp(d.z, -1.0, 1.0)) * 180.0 / std::numbers::pi;
  double phi = std::atan2(d.y, d.x) * 180.0 / std::numbers::pi;
  if (phi < 0.0) phi += 360.0;
  if (phi >= 360.0) phi -= 360.0;
  return {theta, phi};
}

namespace {

constexpr double kLengthBinUm = 25.0;

void add_to_histogram(Histogram& h, double value) {
  if (h.counts.empty()) return;
  auto bin = static_cast<std::ptrdiff_t>(std::floor((value - h.lo) / h.bin_width));
  bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
  ++h.counts[static_cast<std::size_t>(bin)];
}

}  // namespace

ModelStats describe_fibers(const std::vector<double>& lengths, const std::vector<Vec3>& axes) {
  ModelStats s;
  s.fiber_count = lengths.size();
  s.theta_hist = {0.0, 5.0, {}};
  s.phi_hist = {0.0, 10.0, {}};
  s.length_hist = {0.0, kLengthBinUm, {}};
  if (lengths.empty()) return s;

  s.theta_hist.counts.assign(18, 0);
  s.phi_hist.counts.assign(36, 0);
  s.min_length = *std::min_element(lengths.begin(), lengths.end());
  s.max_length = *std::max_element(lengths.begin(), lengths.end());
  double sum = 0.0;
  for (double l : lengths) sum += l;
  s.mean_length = sum / static_cast<double>(lengths.size());
  s.length_hist.counts.assign(
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(s.max_length / kLengthBinUm)) + 1), 0);
  for (double l : lengths) add_to_histogram(s.length_hist, l);
  for (const auto& a : axes) {
    const auto ang = axis_angles(a);
    add_to_histogram(s.theta_hist, ang.theta_deg);
    add_to_histogram(s.phi_hist, ang.phi_deg);
  }
  return s;
}

ModelStats model_statistics(const FiberModel& m) {
  std::vector<double> lengths;
  std::vector<Vec3> axes;
  lengths.reserve(m.fibers.size());
  axes.reserve(m.fibers.size());
  for (const auto& f : m.fibers) {
    lengths.push_back(f.length());
    axes.push_back(f.p1 - f.p0);
  }
  ModelStats s = describe_fibers(lengths, axes);
  const double e = m.params.box_edge;
  s.box_volume = e * e * e;
  s.fiber_volume = m.fiber_volume();
  s.volume_fraction = s.box_volume > 0.0 ? s.fiber_volume / s.box_volume : 0.0;
  s.weight_fraction = weight_fraction(s.volume_fraction);
  return s;
}

std::string stats_to_json(const ModelStats& s) {
  auto hist = [](const Histogram& h) {
    return nlohmann::json{{"lo", h.lo}, {"bin_width", h.bin_width}, {"counts", h.counts}};
  };
  nlohmann::json j = {
      {"fiber_count", s.fiber_count},
      {"min_length_um", s.min_length},
      {"max_length_um", s.max_length},
      {"mean_length_um", s.mean_length},
      {"box_volume_um3", s.box_volume},
      {"fiber_volume_um3", s.fiber_volume},
      {"volume_fraction", s.volume_fraction},
      {"weight_fraction", s.weight_fraction},
      {"length_histogram", hist(s.length_hist)},
      {"theta_histogram_deg", hist(s.theta_hist)},
      {"phi_histogram_deg", hist(s.phi_hist)},
  };
  return j.dump(2);
}

namespace {

struct Vec3f {
  float x, y, z;
};

Vec3f to_float(const Vec3& v) {
  return {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

void put_triangle(std::string& out, const Vec3f& a, const Vec3f& b, const Vec3f& c) {
  const Vec3 da{a.x, a.y, a.z}, db{b.x, b.y, b.z}, dc{c.x, c.y, c.z};
  Vec3 n = cross(db - da, dc - da);
  const double len = norm(n);
  if (len > 0.0) n = (1.0 / len) * n;
  for (const Vec3f& v : {to_float(n), a, b, c}) {
    put_f32(out, v.x);
    put_f32(out, v.y);
    put_f32(out, v.z);
  }
  out.push_back('\0');
  out.push_back('\0');
}

}  // namespace

std::string export_stl(const FiberModel& m, int segments_per_circle) {
  if (segments_per_circle < 3) throw ParameterError("segments_per_circle must be >= 3");
  const auto s = static_cast<std::size_t>(segments_per_circle);
  std::string out(80, '\0');
  const char* header = "fiberseg binary STL";
  std::memcpy(out.data(), header, std::strlen(header));
  put_u32(out, static_cast<std::uint32_t>(m.fibers.size() * 4 * s));
  out.reserve(out.size() + m.fibers.size() * 4 * s * 50);

  std::vector<Vec3f> bottom(s), top(s);
  for (const auto& f : m.fibers) {
    const Vec3 axis = normalized(f.p1 - f.p0);
    const Vec3 helper = std::abs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = normalized(cross(axis, helper));
    const Vec3 v = cross(axis, u);
    for (std::size_t i = 0; i < s; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(s);
      const Vec3 radial = f.radius * (std::cos(ang) * u + std::sin(ang) * v);
      bottom[i] = to_float(f.p0 + radial);
      top[i] = to_float(f.p1 + radial);
    }
    const Vec3f c0 = to_float(f.p0), c1 = to_float(f.p1);
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t j = (i + 1) % s;
      put_triangle(out, bottom[i], bottom[j], top[j]);
      put_triangle(out, bottom[i], top[j], top[i]);
      put_triangle(out, c1, top[i], top[j]);
      put_triangle(out, c0, bottom[j], bottom[i]);
    }
  }
  return out;
}

void write_fibers_csv(const std::vector<Fiber>& fibers, std::ostream& out) {
  out << "id,x0,y0,z0,x1,y1,z1,radius_um\n";
  char line[256];
  for (const auto& f : fibers) {
    std::snprintf(line, sizeof line, "%u,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", f.id, f.p0.x, f.p0.y,
                  f.p0.z, f.p1.x, f.p1.y, f.p1.z, f.radius);
    out << line;
  }
  if (!out) throw IoError("failed writing fiber CSV");
}

std::vector<Fiber> read_fibers_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("fiber CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,x0,y0,z0,x1,y1,z1,radius_um") throw IoError("fiber CSV: unexpected header \"" + line + "\"");

  std::vector<Fiber> fibers;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw IoError("fiber CSV line " + std::to_string(line_no) + ": bad number \"" + cell + "\"");
      }
    }
    if (values.size() != 8)
      throw IoError("fiber CSV line " + std::to_string(line_no) + ": expected 8 columns");
    Fiber f;
    f.id = static_cast<std::uint32_t>(values[0]);
    f.p0 = {values[1], values[2], values[3]};
    f.p1 = {values[4], values[5], values[6]};
    f.radius = values[7];
    if (f.id == 0 || !(f.radius > 0.0) || !(f.length() > 0.0))
      throw IoError("fiber CSV line " + std::to_string(line_no) + ": invalid fiber");
    fibers.push_back(f);
  }
  return fibers;
}

}  // namespace fiberseg
