#include "fiberseg/cli.hpp"

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "fiberseg/annotation.hpp"
#include "fiberseg/config.hpp"
#include "fiberseg/ct_sim.hpp"
#include "fiberseg/metrics.hpp"
#include "fiberseg/vesselness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace fiberseg {

ModelStats label_statistics(const LabelVolume& labels) {
  struct Moments {
    double n = 0, sx = 0, sy = 0, sz = 0, sxx = 0, syy = 0, szz = 0, sxy = 0, sxz = 0, syz = 0;
  };
  const auto& g = labels.grid();
  std::map<std::uint32_t, Moments> moments;
  for (std::size_t z = 0; z < g.nz(); ++z)
    for (std::size_t y = 0; y < g.ny(); ++y)
      for (std::size_t x = 0; x < g.nx(); ++x) {
        const auto l = labels(x, y, z);
        if (l == 0) continue;
        auto& m = moments[l];
        const double px = double(x), py = double(y), pz = double(z);
        m.n += 1;
        m.sx += px, m.sy += py, m.sz += pz;
        m.sxx += px * px, m.syy += py * py, m.szz += pz * pz;
        m.sxy += px * py, m.sxz += px * pz, m.syz += py * pz;
      }

  std::map<std::uint32_t, Vec3> axes;
  for (const auto& [l, m] : moments) {
    const double cx = m.sx / m.n, cy = m.sy / m.n, cz = m.sz / m.n;
    const double xx = m.sxx / m.n - cx * cx, yy = m.syy / m.n - cy * cy, zz = m.szz / m.n - cz * cz;
    const double xy = m.sxy / m.n - cx * cy, xz = m.sxz / m.n - cx * cz, yz = m.syz / m.n - cy * cz;
    const auto ev = symmetric_eigenvalues(xx, yy, zz, xy, xz, yz);
    const auto a = symmetric_eigenvector(xx, yy, zz, xy, xz, yz, ev[0]);
    axes[l] = {a[0], a[1], a[2]};
  }

  std::map<std::uint32_t, std::pair<double, double>> extent;
  for (std::size_t z = 0; z < g.nz(); ++z)
    for (std::size_t y = 0; y < g.ny(); ++y)
      for (std::size_t x = 0; x < g.nx(); ++x) {
        const auto l = labels(x, y, z);
        if (l == 0) continue;
        const double t = dot(axes[l], Vec3{double(x), double(y), double(z)});
        auto [it, fresh] = extent.try_emplace(l, t, t);
        if (!fresh) {
          it->second.first = std::min(it->second.first, t);
          it->second.second = std::max(it->second.second, t);
        }
      }

  std::vector<double> lengths;
  std::vector<Vec3> axis_list;
  for (const auto& [l, e] : extent) {
    lengths.push_back((e.second - e.first + 1.0) * g.voxel_size());
    axis_list.push_back(axes[l]);
  }
  return describe_fibers(lengths, axis_list);
}

namespace {

// Files written by the current stage; removed again if the stage fails.
class OutputSet {
 public:
  void add_file(const std::string& path) { paths_.push_back(path); }
  void add_volume(const std::string& stem) {
    const auto [j, r] = volume_paths(stem);
    add_file(j);
    add_file(r);
  }
  void remove_all() const {
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
  }

 private:
  std::vector<std::string> paths_;
};

void write_text(const std::string& path, const std::string& text, OutputSet& outputs) {
  outputs.add_file(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Fiber> load_fibers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_fibers_csv(in);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic fiber CT volumes, Frangi segmentation and Dice/ARI scoring", "fiberseg"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool version = false;
  app.add_option("--config", config_path, "Pipeline JSON config");
  app.add_option("--seed", seed, "Seed for model generation and noise");
  app.add_option("--threads", threads, "Maximum OpenMP threads")->check(CLI::NonNegativeNumber);
  app.add_flag("--version", version, "Print toolkit and format versions");

  std::string out_path, in_path, fibers_path, labels_path, truth_path, pred_path, annotations_path, sinogram_path;
  std::optional<std::size_t> angles;
  std::optional<double> threshold, sigma, rho;
  bool all_voxels = false;

  auto* generate = app.add_subcommand("generate", "Random fiber model -> fibers.csv, model.stl, stats.json");
  generate->add_option("--out", out_path, "Output directory")->required();

  auto* rasterize = app.add_subcommand("rasterize", "fibers.csv -> <out>/labels and <out>/attenuation volumes");
  rasterize->add_option("--fibers", fibers_path)->required();
  rasterize->add_option("--out", out_path, "Output directory")->required();

  auto* degrade_cmd = app.add_subcommand("degrade", "PSF blur + noise");
  degrade_cmd->add_option("--in", in_path, "Input volume stem")->required();
  degrade_cmd->add_option("--out", out_path, "Output volume stem")->required();

  auto* fbp = app.add_subcommand("fbp", "Parallel-beam projection and filtered back projection");
  fbp->add_option("--in", in_path, "Input volume stem")->required();
  fbp->add_option("--out", out_path, "Output volume stem")->required();
  fbp->add_option("--angles", angles, "Number of projection angles");
  fbp->add_option("--dump-sinogram", sinogram_path, "Also write sinograms to this stem");

  auto* annotate = app.add_subcommand("annotate", "Polyline annotations + gray volume -> label volume");
  annotate->add_option("--annotations", annotations_path)->required();
  annotate->add_option("--gray", in_path, "Gray volume stem")->required();
  annotate->add_option("--out", out_path, "Output label stem")->required();
  annotate->add_option("--threshold", threshold, "Region growing threshold");

  auto* segment = app.add_subcommand("segment", "Multi-scale Frangi vesselness, binarization, instances");
  segment->add_option("--in", in_path, "Gray volume stem")->required();
  segment->add_option("--out", out_path, "Output directory")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Dice and adjusted Rand index");
  evaluate_cmd->add_option("--truth", truth_path)->required();
  evaluate_cmd->add_option("--pred", pred_path)->required();
  evaluate_cmd->add_option("--out", out_path, "Also write the JSON report here");
  evaluate_cmd->add_flag("--all-voxels", all_voxels, "ARI over all voxels (background is a cluster)");

  auto* stats = app.add_subcommand("stats", "Length/orientation histograms");
  auto* stats_fibers = stats->add_option("--fibers", fibers_path);
  auto* stats_labels = stats->add_option("--labels", labels_path);
  stats_fibers->excludes(stats_labels);
  stats->add_option("--out", out_path, "Also write the JSON here");

  auto* orient = app.add_subcommand("orient", "Structure-tensor orientation field");
  orient->add_option("--in", in_path, "Gray volume stem")->required();
  orient->add_option("--out", out_path, "Output stem (.ox/.oy/.oz/.valid)")->required();
  orient->add_option("--sigma", sigma, "Gradient scale (voxels)");
  orient->add_option("--rho", rho, "Tensor smoothing scale (voxels)");

  std::vector<std::string> argv_storage{"fiberseg"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: stage=cli message=" << one_line(e.what()) << "\n";
    return 2;
  }

  if (version) {
    out << "fiberseg " << kToolkitVersion << " (volume format " << kVolumeFormatVersion << ")\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    err << "error: stage=cli message=a subcommand is required\n";
    return 2;
  }
  if (threads > 0) omp_set_num_threads(threads);

  const std::string stage = app.get_subcommands().front()->get_name();
  OutputSet outputs;
  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) {
      cfg.model.seed = *seed;
      cfg.degrade.noise_seed = *seed;
    }
    cfg.validate();

    if (stage == "generate") {
      ensure_dir(out_path);
      const FiberModel model = generate_model(cfg.model);
      std::ostringstream csv;
      write_fibers_csv(model.fibers, csv);
      write_text(out_path + "/fibers.csv", csv.str(), outputs);
      write_text(out_path + "/model.stl", export_stl(model), outputs);
      write_text(out_path + "/stats.json", stats_to_json(model_statistics(model)) + "\n", outputs);
      out << nlohmann::json{{"fibers", model.fibers.size()},
                            {"attempts", model.attempts_used},
                            {"volume_fraction", model.volume_fraction()}}
                 .dump()
          << "\n";
    } else if (stage == "rasterize") {
      ensure_dir(out_path);
      const auto fibers = load_fibers(fibers_path);
      const GridSpec grid = cfg.grid();
      const auto labels = rasterize_labels(fibers, cfg.model.box_edge, grid);
      outputs.add_volume(out_path + "/labels");
      write_volume(labels.labels, out_path + "/labels");
      const auto att = rasterize_attenuation(fibers, cfg.model.box_edge, grid, cfg.supersample, cfg.degrade.levels);
      outputs.add_volume(out_path + "/attenuation");
      write_volume(att, out_path + "/attenuation");
      out << nlohmann::json{{"dims", grid.dims()}, {"conflicts", labels.conflicts}}.dump() << "\n";
    } else if (stage == "degrade") {
      const Volume v = read_f32_volume(in_path);
      outputs.add_volume(out_path);
      write_volume(degrade(v, cfg.degrade), out_path);
    } else if (stage == "fbp") {
      const Volume v = read_f32_volume(in_path);
      std::vector<Sinogram> sinos;
      const Volume rec = simulate_fbp(v, angles.value_or(cfg.fbp_angles), sinogram_path.empty() ? nullptr : &sinos);
      outputs.add_volume(out_path);
      write_volume(rec, out_path);
      if (!sinogram_path.empty()) {
        const auto& first = sinos.front();
        Volume stack(GridSpec(first.n_detectors, first.n_angles, sinos.size(), v.grid().voxel_size()));
        std::size_t k = 0;
        for (const auto& s : sinos)
          for (const double value : s.values) stack[k++] = static_cast<float>(value);
        outputs.add_volume(sinogram_path);
        write_volume(stack, sinogram_path);
      }
    } else if (stage == "annotate") {
      const auto annotations = parse_annotations_json(read_text(annotations_path));
      const Volume gray = read_f32_volume(in_path);
      const auto seeds = render_polylines(annotations, gray.grid());
      const LabelVolume grown = region_grow(gray, seeds.labels, threshold.value_or(cfg.effective_annotation_threshold()));
      outputs.add_volume(out_path);
      write_volume(grown, out_path);
      out << nlohmann::json{{"annotations", annotations.size()}, {"seed_conflicts", seeds.conflicts}}.dump() << "\n";
    } else if (stage == "segment") {
      ensure_dir(out_path);
      const Volume gray = read_f32_volume(in_path);
      const Volume response = frangi_multiscale(gray, cfg.effective_scales(), cfg.vesselness, cfg.polarity);
      outputs.add_volume(out_path + "/vesselness");
      write_volume(response, out_path + "/vesselness");
      const auto bin = binarize(response, cfg.binarize);
      outputs.add_volume(out_path + "/mask");
      write_volume(bin.mask, out_path + "/mask");
      const auto cc = connected_components(bin.mask);
      outputs.add_volume(out_path + "/instances");
      write_volume(cc.labels, out_path + "/instances");
      out << nlohmann::json{{"threshold", bin.threshold}, {"components", cc.count}}.dump() << "\n";
    } else if (stage == "evaluate") {
      const LabelVolume truth = read_label_volume(truth_path);
      const LabelVolume pred = read_label_volume(pred_path);
      const bool ignore_bg = all_voxels ? false : cfg.ignore_background;
      const std::string report = evaluate(truth, pred, ignore_bg).to_json();
      out << report << "\n";
      if (!out_path.empty()) write_text(out_path, report + "\n", outputs);
    } else if (stage == "stats") {
      ModelStats s;
      if (!fibers_path.empty()) {
        FiberModel m;
        m.params = cfg.model;
        m.fibers = load_fibers(fibers_path);
        s = model_statistics(m);
      } else if (!labels_path.empty()) {
        s = label_statistics(read_label_volume(labels_path));
      } else {
        throw ParameterError("stats needs --fibers or --labels");
      }
      const std::string text = stats_to_json(s);
      out << text << "\n";
      if (!out_path.empty()) write_text(out_path, text + "\n", outputs);
    } else if (stage == "orient") {
      const Volume gray = read_f32_volume(in_path);
      const auto field = structure_tensor_orientation(gray, sigma.value_or(cfg.orientation_sigma),
                                                      rho.value_or(cfg.orientation_rho));
      for (const char* suffix : {".ox", ".oy", ".oz", ".valid"}) outputs.add_volume(out_path + suffix);
      write_orientation(field, out_path);
    }
  } catch (const std::exception& e) {
    outputs.remove_all();
    err << "error: stage=" << stage << " message=" << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fiberseg
