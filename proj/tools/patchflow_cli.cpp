#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "patchflow/evaluation/baselines.hpp"
#include "patchflow/evaluation/bundle.hpp"
#include "patchflow/evaluation/metrics.hpp"
#include "patchflow/evaluation/synthetic.hpp"
#include "patchflow/pipeline/pipeline.hpp"
#include "patchflow/pipeline/plots.hpp"

namespace pf = patchflow;

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& output) {
  pf::PipelineConfig c = pf::load_config(config_path, overrides);
  if (!output.empty()) c.output_dir = output;
  const pf::PipelineInputs in = pf::load_pipeline_inputs(c);
  spdlog::info("source {} points, target {} points", in.source.size(), in.target.size());
  const pf::PipelineResult r = pf::run_pipeline(c, in);
  pf::io::write_pipeline_outputs(c.output_dir, c, r);
  const double coverage = pf::spatial_coverage(r.dvf, in.source.points, r.resolution);
  std::cout << "estimated " << r.dvf.size() << " of " << in.source.size() << " points, coverage "
            << 100.0 * coverage << " %, wall " << r.timings.wall << " s\n";
  if (!c.inputs.observations.empty() && std::filesystem::exists(c.inputs.observations)) {
    const auto obs = pf::io::load_external_observations(c.inputs.observations);
    try {
      pf::EvaluationReport rep =
          pf::compare_mean_radius(r.dvf, obs, c.evaluation.radius, c.evaluation.radius_overrides);
      rep.coverage = coverage;
      pf::io::write_evaluation_csv((std::filesystem::path(c.output_dir) / "evaluation.csv").string(), rep);
      std::cout << pf::io::format_evaluation_table(rep);
    } catch (const pf::EmptyNeighborhood& e) {
      spdlog::warn("evaluation skipped: {}", e.what());
    }
  }
  std::cout << "outputs in " << c.output_dir << '\n';
  return 0;
}

struct EvalArgs {
  std::string dvf, observations, ground_truth, source, output, mode = "radius";
  double radius = 15.0;
  double voxel = 0.0;
};

/// Row-wise comparison with a ground-truth field; rows are paired by
/// position.
void report_ground_truth(const pf::DisplacementVectorField& dvf, const std::string& path) {
  const pf::DisplacementVectorField gt = pf::io::read_dvf(path);
  const pf::NNIndex index(gt.positions());
  std::vector<pf::Vec3> gt_vec;
  for (const auto& [id, e] : gt) gt_vec.push_back(e.vector);
  std::vector<double> err, mag;
  for (const auto& [id, e] : dvf) {
    const pf::Neighbor nb = index.nearest(e.position);
    if (nb.distance > 1e-6) throw pf::Error("estimate at a position absent from the ground truth");
    err.push_back((e.vector - gt_vec[nb.index]).norm());
    mag.push_back(std::abs(e.vector.norm() - gt_vec[nb.index].norm()));
  }
  if (err.empty()) throw pf::DegenerateInput("displacement field is empty");
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  std::cout << "ground truth: " << dvf.size() << " of " << gt.size() << " points estimated, median vector error "
            << median(err) << " m, median magnitude error " << median(mag) << " m\n";
}

int cmd_eval(const EvalArgs& a) {
  const pf::DisplacementVectorField dvf = pf::io::read_dvf(a.dvf);
  if (a.observations.empty() && a.ground_truth.empty())
    throw pf::ConfigError("eval: give --observations and/or --ground-truth");
  double coverage = -1.0;
  if (!a.source.empty()) {
    const pf::PointCloud src = pf::io::load_point_cloud(a.source);
    const double voxel = a.voxel > 0.0 ? a.voxel : pf::mean_scan_resolution(src.points);
    coverage = pf::spatial_coverage(dvf, src.points, voxel);
  }
  if (!a.observations.empty()) {
    const auto obs = pf::io::load_external_observations(a.observations);
    const std::vector<pf::Point3> pos = dvf.positions();
    pf::EvaluationReport rep =
        a.mode == "nn" ? pf::compare_nn(dvf, pos, obs) : pf::compare_mean_radius(dvf, obs, a.radius);
    rep.coverage = coverage;
    if (!a.output.empty()) pf::io::write_evaluation_csv(a.output, rep);
    std::cout << pf::io::format_evaluation_table(rep);
  } else if (coverage >= 0.0) {
    std::cout << "coverage " << 100.0 * coverage << " %\n";
  }
  if (!a.ground_truth.empty()) report_ground_truth(dvf, a.ground_truth);
  return 0;
}

struct SynthArgs {
  std::uint64_t seed = 42;
  std::string output;
  pf::SynthParams params;
};

int cmd_synth(const SynthArgs& a) {
  const pf::SyntheticScene sc = pf::synth_generate_scene(a.params, a.seed);
  pf::io::write_synthetic_bundle(a.output, sc);
  std::cout << "wrote " << sc.source.size() << " source points, " << sc.bodies.size() << " bodies, "
            << sc.source_images.size() << " images per epoch to " << a.output << " (spacing " << sc.spacing
            << " m)\n";
  return 0;
}

struct BaselineArgs {
  std::string method, source, target, output;
  pf::PiecewiseIcpParams icp;
  pf::M3c2Params m3c2;
};

int cmd_baseline(const BaselineArgs& a) {
  const pf::PointCloud p = pf::io::load_point_cloud(a.source), q = pf::io::load_point_cloud(a.target);
  if (a.method == "piecewise-icp") {
    const pf::DisplacementVectorField dvf = pf::baseline_piecewise_icp(p, q, a.icp);
    pf::io::write_dvf(a.output, dvf);
    std::cout << "piecewise ICP: " << dvf.size() << " of " << p.size() << " points estimated\n";
  } else {
    const auto rows = pf::baseline_m3c2(p, q, a.m3c2);
    pf::io::write_m3c2(a.output, rows);
    double mean = 0.0;
    for (const auto& r : rows) mean += r.distance;
    if (!rows.empty()) mean /= static_cast<double>(rows.size());
    std::cout << "M3C2: " << rows.size() << " core points, mean distance " << mean << " m\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense 3D displacement estimation from two point cloud epochs and their images"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  std::string config_path, run_output;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run the pipeline from a configuration file");
  run->add_option("-c,--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
  run->add_option("-s,--set", overrides, "Override as dotted.key=value (repeatable)");
  run->add_option("-o,--output", run_output, "Output directory (overrides output_dir)");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Compare a displacement field with observations or ground truth");
  eval->add_option("--dvf", ev.dvf, "Displacement field CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--observations", ev.observations, "Observation CSV")->check(CLI::ExistingFile);
  eval->add_option("--ground-truth", ev.ground_truth, "Ground-truth field CSV")->check(CLI::ExistingFile);
  eval->add_option("--source", ev.source, "Source cloud, enables coverage")->check(CLI::ExistingFile);
  eval->add_option("--voxel", ev.voxel, "Coverage voxel; default mean scan resolution");
  eval->add_option("--mode", ev.mode, "radius (mean within radius) or nn")
      ->check(CLI::IsMember({"radius", "nn"}))
      ->capture_default_str();
  eval->add_option("--radius", ev.radius, "Comparison radius in meters")->capture_default_str();
  eval->add_option("-o,--output", ev.output, "Evaluation CSV");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic two-epoch scene bundle");
  synth->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
  synth->add_option("-o,--output", sy.output, "Bundle directory")->required();
  synth->add_option("--points", sy.params.n_points, "Source point count")->capture_default_str();
  synth->add_option("--bodies", sy.params.n_bodies, "Number of moving bodies")->capture_default_str();
  synth->add_option("--extent", sy.params.extent, "Scene edge length in meters")->capture_default_str();
  synth->add_option("--motion-scale", sy.params.motion_scale, "Largest body translation")->capture_default_str();
  synth->add_option("--max-rotation", sy.params.max_rotation_deg, "Largest body rotation in degrees")
      ->capture_default_str();
  synth->add_option("--cameras", sy.params.cameras_per_epoch, "Rendered images per epoch")->capture_default_str();
  synth->add_option("--noise", sy.params.noise_sigma, "Point noise sigma; negative means 0.2 x spacing")
      ->capture_default_str();

  BaselineArgs bl;
  auto* base = app.add_subcommand("baseline", "Run a comparison method");
  base->add_option("method", bl.method, "piecewise-icp or m3c2")
      ->required()
      ->check(CLI::IsMember({"piecewise-icp", "m3c2"}));
  base->add_option("--source", bl.source, "Source cloud")->required()->check(CLI::ExistingFile);
  base->add_option("--target", bl.target, "Target cloud")->required()->check(CLI::ExistingFile);
  base->add_option("-o,--output", bl.output, "Output CSV")->required();
  base->add_option("--tile-size", bl.icp.tile_size, "Piecewise ICP tile size")->capture_default_str();
  base->add_option("--margin", bl.icp.margin, "Piecewise ICP target margin")->capture_default_str();
  base->add_option("--normal-radius", bl.m3c2.normal_radius, "M3C2 normal radius")->capture_default_str();
  base->add_option("--cylinder-radius", bl.m3c2.cylinder_radius, "M3C2 cylinder radius")->capture_default_str();
  base->add_option("--max-depth", bl.m3c2.max_depth, "M3C2 cylinder half length")->capture_default_str();
  base->add_option("--core-spacing", bl.m3c2.core_spacing, "M3C2 core point spacing; 0 uses every point")
      ->capture_default_str();

  std::string plot_dvf, plot_dir;
  auto* plots = app.add_subcommand("export-plots", "Write magnitude, azimuth and elevation maps");
  plots->add_option("--dvf", plot_dvf, "Displacement field CSV")->required()->check(CLI::ExistingFile);
  plots->add_option("-o,--output", plot_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) return cmd_run(config_path, overrides, run_output);
    if (*eval) return cmd_eval(ev);
    if (*synth) return cmd_synth(sy);
    if (*base) return cmd_baseline(bl);
    if (*plots) {
      std::filesystem::create_directories(plot_dir);
      pf::io::export_plot_data(plot_dir, pf::io::read_dvf(plot_dvf));
      std::cout << "plot data in " << plot_dir << '\n';
      return 0;
    }
  } catch (const pf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
