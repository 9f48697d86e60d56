// burstdepth: depth from a burst, photo enhancement on top of it, synthetic
// bursts with ground truth, and depth evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>

#include "burstdepth/applications.hpp"
#include "burstdepth/error.hpp"
#include "burstdepth/io.hpp"
#include "burstdepth/network.hpp"
#include "burstdepth/pipeline.hpp"
#include "burstdepth/synthetic.hpp"
#include "burstdepth/training.hpp"

namespace fs = std::filesystem;
namespace bio = burstdepth::io;
using burstdepth::Error;
using burstdepth::ErrorCode;
using burstdepth::Image;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string frame_name(const std::string& stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d%s", stem.c_str(), index, ext);
  return buf;
}

// ---- shared input handling -------------------------------------------------

struct BurstInput {
  std::vector<Image> frames;
  bio::CalibrationFile calib;
};

BurstInput load_burst(const fs::path& dir, const fs::path& calib_path, int min_frames) {
  if (!fs::exists(calib_path)) throw UsageError("calibration file not found: " + calib_path.string());
  BurstInput in;
  in.calib = bio::read_calibration(calib_path);
  const auto paths = bio::list_frames(dir);
  if (static_cast<int>(paths.size()) < min_frames) {
    throw UsageError("need at least " + std::to_string(min_frames) + " frames in " + dir.string() + ", found " +
                     std::to_string(paths.size()));
  }
  for (const fs::path& p : paths) in.frames.push_back(bio::read_image(p));
  const Image& ref = in.frames.front();
  for (std::size_t i = 1; i < in.frames.size(); ++i) {
    if (!in.frames[i].same_shape(ref)) {
      throw Error(ErrorCode::kShapeMismatch, paths[i].filename().string() + " differs in size from " +
                                                 paths[0].filename().string());
    }
  }
  if ((in.calib.width > 0 && in.calib.width != ref.width()) ||
      (in.calib.height > 0 && in.calib.height != ref.height())) {
    throw Error(ErrorCode::kShapeMismatch, "calibration is for " + std::to_string(in.calib.width) + "x" +
                                               std::to_string(in.calib.height) + " but frames are " +
                                               std::to_string(ref.width()) + "x" + std::to_string(ref.height()));
  }
  return in;
}

struct PipelineFlags {
  std::string backend = "classical";
  std::string weights;
  std::string order = "ascending";
  bool average = false;
  burstdepth::MatcherConfig matcher;

  void add(CLI::App* cmd) {
    cmd->add_option("--backend", backend, "Residual estimator")
        ->check(CLI::IsMember({"classical", "learned"}))
        ->capture_default_str();
    cmd->add_option("--weights", weights, "Network weights for the learned backend");
    cmd->add_option("--order", order, "Frame processing order")
        ->check(CLI::IsMember({"ascending", "capture"}))
        ->capture_default_str();
    cmd->add_flag("--average", average, "Combine all frames' flows into the final depth");
    cmd->add_option("--patch", matcher.patch, "Matcher patch size (odd)")->capture_default_str();
    cmd->add_option("--search-range", matcher.search_range, "Matcher search range in pixels")
        ->capture_default_str();
  }

  burstdepth::PipelineConfig config() const {
    burstdepth::PipelineConfig cfg;
    if (backend == "learned") {
      if (weights.empty()) throw UsageError("--backend learned needs --weights");
      cfg.backend = burstdepth::EstimatorBackend::learned(
          std::make_shared<const burstdepth::ResidualNetwork>(burstdepth::ResidualNetwork::load(weights)));
    } else {
      cfg.backend = burstdepth::EstimatorBackend::classical(matcher);
    }
    cfg.order = order == "capture" ? burstdepth::FrameOrderPolicy::kCapture
                                   : burstdepth::FrameOrderPolicy::kAscendingBaseline;
    cfg.average_final_depth = average;
    return cfg;
  }
};

// ---- depth -----------------------------------------------------------------

struct DepthArgs {
  fs::path input, calib, output;
  bool flow_out = false;
  PipelineFlags pipeline;
};

int cmd_depth(const DepthArgs& a) {
  BurstInput in = load_burst(a.input, a.calib, 2);
  burstdepth::PipelineConfig cfg = a.pipeline.config();
  if (static_cast<int>(in.frames.size()) < cfg.min_frames) {
    throw UsageError("the pipeline needs at least " + std::to_string(cfg.min_frames) + " frames");
  }
  cfg.keep_flows = a.flow_out;
  const burstdepth::PipelineResult r = burstdepth::run(in.frames, in.calib.K, cfg);

  fs::create_directories(a.output);
  bio::write_pfm(a.output / "depth.pfm", bio::depth_to_pfm(r.depth, r.width, r.height));
  bio::write_image(a.output / "depth.png", bio::colorize_inverse_depth(r.inverse_depth));
  bio::write_poses(a.output / "poses.txt", r.geometry.poses);
  if (a.flow_out) {
    fs::create_directories(a.output / "flows");
    // Skipped frames have no refined flow; they are written fully masked.
    burstdepth::FlowField empty(r.width, r.height);
    for (std::size_t k = 0; k < empty.size(); ++k) empty.invalidate(k);
    for (std::size_t i = 1; i < r.flows.size(); ++i) {
      bio::write_flo(a.output / "flows" / frame_name("flow", static_cast<int>(i), ".flo"),
                     r.flows[i].size() ? r.flows[i] : empty);
    }
  }

  json summary;
  summary["frames"] = in.frames.size();
  summary["processed_frames"] = r.processed_frames;
  summary["skipped"] = json::array();
  for (const auto& s : r.skipped) summary["skipped"].push_back({{"frame", s.frame}, {"reason", s.reason}});
  summary["tracks"] = r.geometry.track_count;
  summary["rms_reprojection_px"] = r.geometry.bundle.final_rms_reprojection;
  summary["bundle_iterations"] = r.geometry.bundle.iterations;
  for (const auto& t : r.timings) summary["timings_s"][t.stage] = t.seconds;
  std::ofstream(a.output / "summary.json") << summary.dump(2) << '\n';

  std::printf("%zu frames, %zu processed, %zu skipped, %d tracks, reprojection RMS %.3f px, %.2f s\n",
              in.frames.size(), r.processed_frames.size(), r.skipped.size(), r.geometry.track_count,
              r.geometry.bundle.final_rms_reprojection, r.total_seconds());
  std::printf("wrote %s\n", (a.output / "depth.pfm").c_str());
  return 0;
}

// ---- enhance ---------------------------------------------------------------

struct EnhanceArgs {
  std::string mode;
  fs::path input, calib, output, depth_dir;
  bool estimate = false;
  double focal_depth = -1.0;
  double aperture = -1.0;
  double sigma = burstdepth::kDenoiseSigma;
  PipelineFlags pipeline;
};

int cmd_enhance(const EnhanceArgs& a) {
  if (a.depth_dir.empty() == !a.estimate) throw UsageError("give exactly one of --depth-dir and --estimate");
  if (a.mode == "refocus" && (a.focal_depth <= 0.0 || a.aperture < 0.0)) {
    throw UsageError("refocus needs --focal-depth > 0 and --aperture >= 0");
  }
  BurstInput in = load_burst(a.input, a.calib, a.mode == "refocus" ? 1 : 2);

  burstdepth::InverseDepthMap w;
  std::vector<burstdepth::SmallPose> poses;
  if (a.estimate) {
    const burstdepth::PipelineResult r = burstdepth::run(in.frames, in.calib.K, a.pipeline.config());
    w = r.inverse_depth;
    poses = r.geometry.poses;
  } else {
    const fs::path depth_path = a.depth_dir / "depth.pfm";
    if (!fs::exists(depth_path)) throw UsageError("missing depth: " + depth_path.string());
    w = bio::inverse_depth_from_pfm(bio::read_pfm(depth_path));
    if (!in.frames[0].same_size(w.width, w.height)) {
      throw Error(ErrorCode::kShapeMismatch, "depth map and frames differ in size");
    }
    if (a.mode != "refocus") {
      const fs::path pose_path = a.depth_dir / "poses.txt";
      if (!fs::exists(pose_path)) throw UsageError("missing poses: " + pose_path.string());
      poses = bio::read_poses(pose_path);
      if (poses.size() != in.frames.size()) {
        throw Error(ErrorCode::kShapeMismatch, "pose table has " + std::to_string(poses.size()) +
                                                   " entries for " + std::to_string(in.frames.size()) + " frames");
      }
    }
  }

  Image out;
  if (a.mode == "refocus") {
    out = burstdepth::synthetic_refocus(in.frames[0], w, a.focal_depth, a.aperture);
  } else {
    const burstdepth::AlignedBurst burst = burstdepth::align_to_reference(in.frames, in.calib.K, poses, w);
    out = a.mode == "denoise" ? burstdepth::denoise_weighted_average(burst, a.sigma)
                              : burstdepth::exposure_fuse(burst);
  }
  bio::write_image(a.output, out);
  std::printf("wrote %s\n", a.output.c_str());
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  fs::path output, scene;
  burstdepth::SceneOptions opt;
};

void apply_scene_spec(const fs::path& path, burstdepth::SceneOptions& opt) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open scene spec " + path.string());
  json spec;
  try {
    spec = json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("invalid scene spec: " + std::string(e.what()));
  }
  if (!spec.is_object()) throw UsageError("invalid scene spec: expected a JSON object");
  try {
    for (const auto& [key, value] : spec.items()) {
      if (key == "width") opt.width = value.get<int>();
      else if (key == "height") opt.height = value.get<int>();
      else if (key == "frames") opt.frames = value.get<int>();
      else if (key == "fx") opt.K.fx = value.get<double>();
      else if (key == "fy") opt.K.fy = value.get<double>();
      else if (key == "cx") opt.K.cx = value.get<double>();
      else if (key == "cy") opt.K.cy = value.get<double>();
      else if (key == "far_depth") opt.far_depth = value.get<double>();
      else if (key == "near_depth") opt.near_depth = value.get<double>();
      else if (key == "near_rect") {
        const auto r = value.get<std::vector<double>>();
        if (r.size() != 4) throw UsageError("invalid scene spec: near_rect needs [u0, v0, u1, v1]");
        opt.near_u0 = r[0], opt.near_v0 = r[1], opt.near_u1 = r[2], opt.near_v1 = r[3];
      } else if (key == "max_translation") opt.max_translation = value.get<double>();
      else if (key == "max_rotation") opt.max_rotation = value.get<double>();
      else if (key == "tz_fraction") opt.tz_fraction = value.get<double>();
      else if (key == "texture_cell") opt.texture_cell = value.get<double>();
      else if (key == "exposure_levels") opt.exposure_levels = value.get<int>();
      else if (key == "noise_sigma") opt.noise_sigma = value.get<double>();
      else if (key == "seed") opt.seed = value.get<std::uint64_t>();
      else throw UsageError("invalid scene spec: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError("invalid scene spec: " + std::string(e.what()));
  }
}

int cmd_synth(SynthArgs a, const CLI::App& cmd) {
  burstdepth::SceneOptions opt;
  if (!a.scene.empty()) apply_scene_spec(a.scene, opt);
  // Flags given on the command line win over the spec file.
  if (cmd.count("--frames")) opt.frames = a.opt.frames;
  if (cmd.count("--width")) opt.width = a.opt.width;
  if (cmd.count("--height")) opt.height = a.opt.height;
  if (cmd.count("--exposure-ramp")) opt.exposure_levels = a.opt.exposure_levels;
  if (cmd.count("--noise")) opt.noise_sigma = a.opt.noise_sigma;
  if (cmd.count("--seed")) opt.seed = a.opt.seed;

  burstdepth::SyntheticScene scene;
  try {
    if (opt.frames < 2 || opt.width < 16 || opt.height < 16) {
      throw Error(ErrorCode::kConfiguration, "scene needs >= 2 frames and >= 16x16 pixels");
    }
    scene = burstdepth::make_default_scene(opt);
    scene.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid scene spec: ") + e.what());
  }
  const burstdepth::RenderedBurst burst = burstdepth::render(scene);

  fs::create_directories(a.output / "frames");
  fs::create_directories(a.output / "gt_flows");
  for (std::size_t i = 0; i < burst.frames.size(); ++i) {
    bio::write_image(a.output / "frames" / frame_name("frame", static_cast<int>(i), ".png"), burst.frames[i]);
    if (i > 0) bio::write_flo(a.output / "gt_flows" / frame_name("flow", static_cast<int>(i), ".flo"), burst.flows[i]);
  }
  std::vector<double> depth(burst.depth.pixels().begin(), burst.depth.pixels().end());
  bio::write_pfm(a.output / "gt_depth.pfm", bio::depth_to_pfm(depth, scene.width, scene.height));
  bio::write_poses(a.output / "gt_poses.txt", scene.poses);
  bio::write_calibration(a.output / "calib.txt", {scene.K, scene.width, scene.height, "synthetic burst"});

  json manifest;
  manifest["seed"] = opt.seed;
  manifest["frames"] = burst.frames.size();
  manifest["width"] = scene.width;
  manifest["height"] = scene.height;
  manifest["K"] = {scene.K.fx, scene.K.fy, scene.K.cx, scene.K.cy};
  manifest["noise_sigma"] = scene.noise_sigma;
  manifest["exposure_levels"] = opt.exposure_levels;
  manifest["gains"] = scene.gains;
  manifest["texture_cell"] = scene.texture_cell;
  for (const auto& p : scene.planes) {
    json plane{{"depth", p.depth}, {"texture_seed", p.texture_seed}};
    if (p.bounded()) plane["extent"] = {p.u0, p.v0, p.u1, p.v1};
    manifest["planes"].push_back(plane);
  }
  std::ofstream(a.output / "manifest.json") << manifest.dump(2) << '\n';
  std::printf("wrote %zu frames of %dx%d to %s\n", burst.frames.size(), scene.width, scene.height,
              a.output.c_str());
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  fs::path gt;
  std::vector<fs::path> estimates;
  std::vector<std::string> labels;
  std::string json_out;
};

int cmd_eval(const EvalArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.estimates.size()) {
    throw UsageError("give one --label per --estimate");
  }
  const bio::PfmImage gt = bio::read_pfm(a.gt);
  if (gt.channels != 1) throw Error(ErrorCode::kShapeMismatch, "ground truth must be a 1-channel PFM");
  const std::vector<double> gt_depth(gt.data.begin(), gt.data.end());

  json rows = json::array();
  std::printf("%-24s %10s %10s %10s\n", "estimate", "rmse", "bad_%", "scale");
  for (std::size_t k = 0; k < a.estimates.size(); ++k) {
    const bio::PfmImage est = bio::read_pfm(a.estimates[k]);
    if (est.width != gt.width || est.height != gt.height || est.channels != 1) {
      throw Error(ErrorCode::kShapeMismatch, a.estimates[k].string() + " is " + std::to_string(est.width) + "x" +
                                                 std::to_string(est.height) + ", ground truth is " +
                                                 std::to_string(gt.width) + "x" + std::to_string(gt.height));
    }
    const std::vector<double> depth(est.data.begin(), est.data.end());
    const burstdepth::DepthErrors e = burstdepth::evaluate_depth(depth, gt_depth);
    const std::string label = a.labels.empty() ? a.estimates[k].string() : a.labels[k];
    std::printf("%-24s %10.5f %10.3f %10.5f\n", label.c_str(), e.rmse, e.bad_pixel_rate_percent, e.scale);
    json row{{"rmse", e.rmse}, {"bad_pixel_rate_percent", e.bad_pixel_rate_percent}, {"scale", e.scale}};
    if (a.estimates.size() > 1) row["estimate"] = label;
    rows.push_back(row);
  }
  if (!a.json_out.empty()) {
    const json doc = rows.size() == 1 ? rows[0] : rows;
    if (a.json_out == "-") {
      std::cout << doc.dump(2) << '\n';
    } else {
      std::ofstream os(a.json_out);
      if (!os) throw Error(ErrorCode::kIo, "cannot write " + a.json_out);
      os << doc.dump(2) << '\n';
    }
  }
  return 0;
}

// ---- train-toy -------------------------------------------------------------

struct TrainArgs {
  fs::path output;
  burstdepth::ToyDatasetConfig data;
  burstdepth::TrainingConfig train;
  bool augment = false;
  fs::path init;
};

int cmd_train(TrainArgs a) {
  a.data.seed = a.train.seed;
  if (!a.augment) a.train.augmentation = burstdepth::AugmentationConfig::none();
  const auto dataset = burstdepth::make_toy_dataset(a.data);
  burstdepth::ResidualNetwork net;
  if (a.init.empty()) {
    net.init_he(a.train.seed, 0.1);
  } else {
    net = burstdepth::ResidualNetwork::load(a.init);
  }
  const burstdepth::TrainingReport rep = burstdepth::train_toy(net, dataset, a.train);
  net.save(a.output);
  std::printf("%d iterations in %.1f s: EPE %.4f -> %.4f%s\n", a.train.iterations, rep.seconds, rep.initial_epe,
              rep.final_epe, rep.finite ? "" : " (non-finite loss encountered)");
  std::printf("wrote %s\n", a.output.c_str());
  return rep.finite ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth from auto-bracketed burst shots"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "burstdepth 0.1.0");

  DepthArgs depth;
  auto* depth_cmd = app.add_subcommand("depth", "Estimate reference-view depth and camera poses");
  depth_cmd->add_option("-i,--input", depth.input, "Directory of frames; the first by name is the reference")
      ->required();
  depth_cmd->add_option("-c,--calib", depth.calib, "Calibration file (key = value)")->required();
  depth_cmd->add_option("-o,--output", depth.output, "Output directory")->required();
  depth_cmd->add_flag("--flow-out", depth.flow_out, "Also write refined flows as .flo");
  depth.pipeline.add(depth_cmd);

  EnhanceArgs enhance;
  auto* enhance_cmd = app.add_subcommand("enhance", "Denoise, exposure-fuse or refocus using the depth");
  enhance_cmd->add_option("--mode", enhance.mode, "Application")
      ->check(CLI::IsMember({"denoise", "fuse", "refocus"}))
      ->required();
  enhance_cmd->add_option("-i,--input", enhance.input, "Directory of frames")->required();
  enhance_cmd->add_option("-c,--calib", enhance.calib, "Calibration file")->required();
  enhance_cmd->add_option("-o,--output", enhance.output, "Output PNG")->required();
  enhance_cmd->add_option("--depth-dir", enhance.depth_dir, "Output directory of a previous `depth` run");
  enhance_cmd->add_flag("--estimate", enhance.estimate, "Run the depth pipeline first");
  enhance_cmd->add_option("--focal-depth", enhance.focal_depth, "Refocus: depth kept sharp (scene units)");
  enhance_cmd->add_option("--aperture", enhance.aperture, "Refocus: blur sigma per unit inverse depth");
  enhance_cmd->add_option("--sigma", enhance.sigma, "Denoise: weight bandwidth on [0, 1] intensities")
      ->capture_default_str();
  enhance.pipeline.add(enhance_cmd);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic burst with ground truth");
  synth_cmd->add_option("-o,--output", synth.output, "Output directory")->required();
  synth_cmd->add_option("--scene", synth.scene, "JSON scene spec (keys as in SceneOptions)");
  synth_cmd->add_option("--frames", synth.opt.frames, "Frame count")->capture_default_str();
  synth_cmd->add_option("--width", synth.opt.width)->capture_default_str();
  synth_cmd->add_option("--height", synth.opt.height)->capture_default_str();
  synth_cmd->add_option("--exposure-ramp", synth.opt.exposure_levels, "Distinct exposure levels cycled over frames")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.opt.noise_sigma, "Signal-dependent noise sigma")->capture_default_str();
  synth_cmd->add_option("--seed", synth.opt.seed, "Scene and noise seed")->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score depth maps against ground truth after median scale alignment");
  eval_cmd->add_option("--gt", eval.gt, "Ground-truth depth PFM")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--estimate", eval.estimates, "Estimated depth PFM(s)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--label", eval.labels, "Row label per estimate");
  eval_cmd->add_option("--json", eval.json_out, "Write metrics as JSON to a file, or '-' for stdout");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the residual-flow network on synthetic affine pairs");
  train_cmd->add_option("-o,--output", train.output, "Weight file to write")->required();
  train_cmd->add_option("--iterations", train.train.iterations)->capture_default_str();
  train_cmd->add_option("--samples", train.data.samples)->capture_default_str();
  train_cmd->add_option("--size", train.data.width, "Sample width and height")->capture_default_str()
      ->each([&](const std::string&) { train.data.height = train.data.width; });
  train_cmd->add_option("--batch", train.train.batch)->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed)->capture_default_str();
  train_cmd->add_flag("--augment", train.augment, "Spatial, chromatic and noise augmentation");
  train_cmd->add_flag("--fine-tune", train.train.fine_tune, "Fine-tuning schedule with independent jitter");
  train_cmd->add_option("--init", train.init, "Start from these weights")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*depth_cmd) return cmd_depth(depth);
    if (*enhance_cmd) return cmd_enhance(enhance);
    if (*synth_cmd) return cmd_synth(synth, *synth_cmd);
    if (*eval_cmd) return cmd_eval(eval);
    if (*train_cmd) return cmd_train(train);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    // what() already leads with the stage name when there is one.
    std::fprintf(stderr, "error [%s]: %s\n", burstdepth::to_string(e.code()), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
