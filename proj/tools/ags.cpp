// ags: synthetic captures, joint scene/pose reconstruction, pose search and
// evaluation from the command line.

#include <CLI11.hpp>
#include <iostream>

#include "ags/errors.hpp"
#include "ags/renderer.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace ags::cli;

int main(int argc, char** argv) {
  CLI::App app{"Joint Gaussian scene and camera pose inference"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<fs::path> config_file;
  Overrides overrides;
  fs::path out;
  app.add_option("--config", config_file, "agsconfig/1 JSON file")->check(CLI::ExistingFile);
  app.add_option("--seed", overrides.seed, "Random seed");
  app.add_option("--steps", overrides.steps, "Optimization steps per reconstruction");
  app.add_option("--prior", overrides.prior, "oracle | remote | remote:URL");
  app.add_option("--threads", overrides.threads, "Worker thread cap");

  auto* gen = app.add_subcommand("generate", "Render a synthetic capture directory");
  gen->add_option("--out", out, "Output directory")->required();

  ReconstructPaths rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Recover the scene and poses from a capture");
  reconstruct->add_option("--capture", rec.capture, "Capture directory")->required();
  reconstruct->add_option("--poses", rec.poses, "Initial poses file (default: the capture's)");
  reconstruct->add_option("--out", out, "Output directory")->required();

  EvaluatePaths eval;
  auto* evaluate = app.add_subcommand("evaluate", "Score a reconstruction against the capture's ground truth");
  evaluate->add_option("--capture", eval.capture, "Capture directory")->required();
  evaluate->add_option("--result", eval.result, "Directory written by reconstruct")->required();
  evaluate->add_option("--out", out, "Output directory for metrics.json")->required();

  SearchPosePaths search;
  auto* search_pose = app.add_subcommand("search-pose", "Find the pose of one image against a fitted scene");
  search_pose->add_option("--scene", search.scene, "Scene file")->required();
  search_pose->add_option("--image", search.image, "PNG image")->required();
  search_pose->add_option("--poses", search.poses, "Inlier cameras file")->required();
  search_pose->add_option("--out", out, "Output directory for pose.json")->required();

  auto* show = app.add_subcommand("config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = parse_config(config_file, overrides);
    ags::set_render_threads(cfg.threads);
    if (*gen) {
      run_generate(cfg, out);
    } else if (*reconstruct) {
      rec.out = out;
      run_reconstruct(cfg, rec);
    } else if (*evaluate) {
      eval.out = out / "metrics.json";
      run_evaluate(cfg, eval);
    } else if (*search_pose) {
      search.out = out / "pose.json";
      run_search_pose(cfg, search);
    } else if (*show) {
      std::cout << config_to_json(cfg);
    }
  } catch (const ags::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
