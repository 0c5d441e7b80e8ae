// rgbdi command line: generate | inpaint | evaluate | fuse.
#include "rgbdi/rgbdi.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rgbdi;

namespace {

void write_default_config(const fs::path& path, const std::vector<std::string>& videos, const std::string& out) {
  json j = {{"videos", videos}, {"output_dir", out}, {"seed", 0}};
  detail::write_json(path, j);
}

int cmd_generate(const std::string& scene_file, const std::string& preset, std::uint64_t seed, int frames,
                 int width, int height, bool exposure, const fs::path& out) {
  if (!scene_file.empty() && !preset.empty()) throw ConfigError("generate: give either --scene or --preset");
  StreetOptions so;
  so.frames = frames;
  so.width = width;
  so.height = height;
  so.exposure = exposure;
  if (preset == "dual") {
    const DualCapture dc = dual_street_scene(seed, so);
    SyntheticCapture target = render_sequence(dc.persistent);
    SyntheticCapture clear = render_sequence(dc.clear);
    apply_odometry_offset(clear.sequence, dc.odometry_offset);
    write_synthetic_dataset(out / "video_target", target);
    write_synthetic_dataset(out / "video_clear", clear);
    write_default_config(out / "config.json", {"video_target", "video_clear"}, "result");
    std::cout << "wrote " << (out / "video_target").string() << " and " << (out / "video_clear").string() << "\n";
    return 0;
  }
  SceneSpec spec;
  if (!scene_file.empty()) {
    spec = load_scene_spec(scene_file);
  } else if (preset.empty() || preset == "street") {
    spec = street_scene(seed, so);
  } else {
    throw ConfigError("generate: unknown preset '" + preset + "' (street, dual)");
  }
  const SyntheticCapture cap = render_sequence(spec);
  write_synthetic_dataset(out / "video", cap);
  write_default_config(out / "config.json", {"video"}, "result");
  std::cout << "wrote " << cap.sequence.size() << " frames to " << (out / "video").string()
            << " (background visibility " << background_visibility(cap) << ")\n";
  return 0;
}

int cmd_inpaint(const fs::path& config, const std::string& output) {
  PipelineConfig cfg = load_pipeline_config(config);
  if (!output.empty()) cfg.output_dir = output;
  if (cfg.output_dir.empty()) throw ConfigError("inpaint: no output_dir in config and no --out given");
  const PipelineResult r = run_pipeline(cfg);
  std::cout << "blank fraction: " << r.blank_fraction_before << " (own video) -> " << r.blank_fraction_after << "\n";
  if (r.metrics) std::cout << format_metrics_table({{"inpainted", *r.metrics}});
  return 0;
}

int cmd_evaluate(const fs::path& results, const fs::path& dataset, const std::string& json_out) {
  const CaptureSequence seq = load_dataset(dataset);
  const auto gt = load_ground_truth(dataset, seq);
  if (gt.empty()) throw DataError("evaluate: dataset has no gt/ directory");
  std::vector<RgbImage> res;
  std::vector<Mask> masks;
  for (const auto& f : seq.frames) {
    const fs::path p = results / frame_name(f.index);
    if (!fs::exists(p)) throw DataError("frame " + std::to_string(f.index) + ": missing result " + p.string());
    res.push_back(read_rgb_png(p));
    if (!res.back().same_shape(f.rgb)) throw DataError("frame " + std::to_string(f.index) + ": result size differs");
    masks.push_back(f.mask);
  }
  MetricsReport m;
  try {
    m = evaluate(res, gt, masks);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  std::cout << format_metrics_table({{results.filename().string(), m}});
  if (!json_out.empty()) detail::write_json(json_out, metrics_to_json(m));
  return 0;
}

int cmd_fuse(const fs::path& base_dir, const fs::path& extra_dir, const fs::path& out, double voxel) {
  const CaptureSequence base = load_dataset(base_dir);
  const CaptureSequence extra = load_dataset(extra_dir);
  FuseOptions fo;
  fo.stitch.voxel_size = voxel;
  const PointCloud base_map = stitch_map(base, fo.stitch);
  const FuseResult r = fuse_maps(base_map, extra, Pose::identity(), fo);
  write_ply(out / "merged.ply", r.merged);
  std::vector<int> idx;
  for (const auto& f : extra.frames) idx.push_back(f.index);
  write_poses(out / "poses_corrected.txt", idx, r.world_from_sensor);
  detail::write_json(out / "registration.json", {{"transform", detail::pose_to_json(r.registration.transform)},
                                                  {"rms_residual", r.registration.rms_residual},
                                                  {"initial_rms_residual", r.registration.initial_rms_residual},
                                                  {"inlier_fraction", r.registration.inlier_fraction},
                                                  {"overlap", r.overlap},
                                                  {"iterations", r.registration.iterations}});
  std::cout << "registered " << extra.size() << " frames: rms " << r.registration.rms_residual << " m, overlap "
            << r.overlap << ", merged map " << r.merged.size() << " points\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-guided video inpainting from lidar maps"};
  app.require_subcommand(1);

  std::string scene, preset;
  std::uint64_t seed = 0;
  int frames = 20, width = 320, height = 240;
  bool exposure = false;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Render a synthetic dataset from a scene file or preset");
  gen->add_option("--scene", scene, "Scene JSON (see docs/scene_schema.json)")->check(CLI::ExistingFile);
  gen->add_option("--preset", preset, "street or dual");
  gen->add_option("--seed", seed, "Preset seed");
  gen->add_option("--frames", frames, "Preset frame count")->check(CLI::PositiveNumber);
  gen->add_option("--width", width, "Preset image width")->check(CLI::PositiveNumber);
  gen->add_option("--height", height, "Preset image height")->check(CLI::PositiveNumber);
  gen->add_flag("--exposure", exposure, "Per-frame exposure gain/bias perturbation");
  gen->add_option("--out", gen_out, "Output directory")->required();

  std::string config, inp_out;
  auto* inp = app.add_subcommand("inpaint", "Run the pipeline from a config file");
  inp->add_option("--config", config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  inp->add_option("--out", inp_out, "Override output_dir");

  std::string results, dataset, json_out;
  auto* ev = app.add_subcommand("evaluate", "Masked-region MAE, RMSE, PSNR, SSIM of results against gt/");
  ev->add_option("--results", results, "Directory of %06d.png result frames")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--dataset", dataset, "Dataset with masks/ and gt/")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--json", json_out, "Also write metrics JSON here");

  std::string base, extra, fuse_out;
  double voxel = 0.05;
  auto* fu = app.add_subcommand("fuse", "Register a second capture into the first capture's map");
  fu->add_option("--base", base, "Reference dataset")->required()->check(CLI::ExistingDirectory);
  fu->add_option("--extra", extra, "Dataset to register")->required()->check(CLI::ExistingDirectory);
  fu->add_option("--out", fuse_out, "Output directory")->required();
  fu->add_option("--voxel", voxel, "Map voxel size, meters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(scene, preset, seed, frames, width, height, exposure, gen_out);
    if (*inp) return cmd_inpaint(config, inp_out);
    if (*ev) return cmd_evaluate(results, dataset, json_out);
    if (*fu) return cmd_fuse(base, extra, fuse_out, voxel);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
