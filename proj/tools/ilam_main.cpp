#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ilam/config.hpp"
#include "ilam/errors.hpp"
#include "ilam/evaluate.hpp"
#include "ilam/features.hpp"
#include "ilam/intensity_image.hpp"
#include "ilam/loop_closure.hpp"
#include "ilam/pipeline.hpp"
#include "ilam/scan_io.hpp"
#include "ilam/synth.hpp"

namespace {

ilam::Config load_or_default(const std::string& config_path) {
  if (config_path.empty()) return ilam::Config{};
  return ilam::load_config(config_path);
}

std::string descriptor_hex(const ilam::Descriptor& d) {
  std::string out;
  out.reserve(64);
  char buf[17];
  for (const uint64_t w : d.words) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(w));
    out += buf;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR intensity SLAM"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline over a scan directory");
  std::string run_scans, run_out, run_config, run_mode = "serial";
  std::optional<unsigned> run_seed;
  run->add_option("scans_dir", run_scans, "Directory of .oscn scans")->required();
  run->add_option("out_dir", run_out, "Output directory")->required();
  run->add_option("--config", run_config, "Config file (key = value)");
  run->add_option("--seed", run_seed, "Override the RANSAC seed");
  run->add_option("--pipeline", run_mode, "Execution mode")
      ->check(CLI::IsMember({"serial", "parallel"}));

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Translational APE of a trajectory");
  std::string eval_traj, eval_gt;
  double eval_max_dt = 0.05;
  evaluate->add_option("trajectory", eval_traj, "Estimated trajectory file")->required();
  evaluate->add_option("ground_truth", eval_gt, "Ground-truth trajectory file")->required();
  evaluate->add_option("--max-dt", eval_max_dt, "Timestamp association tolerance (s)");

  // synth-generate
  auto* synth = app.add_subcommand("synth-generate", "Render a synthetic scan sequence");
  std::string synth_scenario, synth_out;
  int synth_steps = 50;
  double synth_step_size = 0.2, synth_range_sigma = 0.01, synth_intensity_sigma = 2.0;
  std::optional<unsigned> synth_seed;
  synth->add_option("scenario", synth_scenario, "corridor | loop | slope | parking")
      ->required();
  synth->add_option("out_dir", synth_out, "Output directory")->required();
  synth->add_option("--steps", synth_steps, "Number of scans");
  synth->add_option("--step-size", synth_step_size, "Translation per step (m)");
  synth->add_option("--range-sigma", synth_range_sigma, "Range noise (m)");
  synth->add_option("--intensity-sigma", synth_intensity_sigma, "Intensity noise");
  synth->add_option("--seed", synth_seed, "Sequence RNG seed");

  // vocab-train
  auto* vocab = app.add_subcommand("vocab-train", "Train a descriptor vocabulary");
  std::string vocab_scans, vocab_out, vocab_config;
  std::optional<unsigned> vocab_seed;
  vocab->add_option("scans_dir", vocab_scans, "Directory of .oscn scans")->required();
  vocab->add_option("out_path", vocab_out, "Vocabulary output file")->required();
  vocab->add_option("--config", vocab_config, "Config file (key = value)");
  vocab->add_option("--seed", vocab_seed, "Clustering RNG seed");

  // scan-convert
  auto* convert = app.add_subcommand("scan-convert", "Convert an ASCII cloud to .oscn");
  std::string conv_in, conv_out;
  int conv_rows = 64, conv_cols = 1024;
  double conv_ts = 0.0;
  convert->add_option("input", conv_in, "ASCII cloud: x y z intensity ring per line")
      ->required();
  convert->add_option("output", conv_out, "Output .oscn path")->required();
  convert->add_option("--rows", conv_rows, "Scan rows (rings)");
  convert->add_option("--cols", conv_cols, "Scan columns");
  convert->add_option("--timestamp", conv_ts, "Scan timestamp (s)");

  // dump-image
  auto* dump_img = app.add_subcommand("dump-image", "Write the intensity image as a P5 graymap");
  std::string img_scan, img_out, img_config;
  dump_img->add_option("scan", img_scan, "Scan file (.oscn)")->required();
  dump_img->add_option("output", img_out, "Output .pgm path")->required();
  dump_img->add_option("--config", img_config, "Config file (key = value)");

  // dump-features
  auto* dump_feat = app.add_subcommand("dump-features", "Print detected features as text");
  std::string feat_scan, feat_config;
  dump_feat->add_option("scan", feat_scan, "Scan file (.oscn)")->required();
  dump_feat->add_option("--config", feat_config, "Config file (key = value)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ilam::Config cfg = load_or_default(run_config);
      if (run_seed) cfg.ransac_seed = *run_seed;
      const auto mode = run_mode == "parallel" ? ilam::PipelineMode::kParallel
                                               : ilam::PipelineMode::kSerial;
      const ilam::RunResult result = ilam::run_directory(run_scans, cfg, mode);
      ilam::write_run_outputs(result, run_out);
      std::cout << ilam::summary_text(result.summary);
    } else if (*evaluate) {
      const auto traj = ilam::read_trajectory(eval_traj);
      const auto gt = ilam::read_trajectory(eval_gt);
      const ilam::ApeStats stats = ilam::evaluate_ape(traj, gt, eval_max_dt);
      std::cout << "pairs  " << stats.pairs << "\n";
      std::cout << "mean   " << stats.mean << "\n";
      std::cout << "median " << stats.median << "\n";
      std::cout << "rmse   " << stats.rmse << "\n";
      std::cout << "max    " << stats.max << "\n";
    } else if (*synth) {
      ilam::synth::SequenceOptions opt;
      opt.steps = synth_steps;
      opt.step_size = synth_step_size;
      opt.range_sigma = synth_range_sigma;
      opt.intensity_sigma = synth_intensity_sigma;
      if (synth_seed) opt.seed = *synth_seed;
      ilam::synth::write_sequence(ilam::synth::parse_scenario(synth_scenario), opt, synth_out);
      std::cout << "wrote " << synth_steps << " scans to " << synth_out << "\n";
    } else if (*vocab) {
      ilam::Config cfg = load_or_default(vocab_config);
      const auto files = ilam::list_scan_files(vocab_scans);
      if (files.empty()) throw ilam::InvalidInput("no scan files in " + vocab_scans);
      std::vector<ilam::Descriptor> corpus;
      std::vector<int> frame_sizes;
      ilam::SequenceReader reader(files);
      while (auto scan = reader.next()) {
        const ilam::IntensityFrame frame = ilam::make_frame(*scan, cfg);
        for (const auto& f : frame.features) corpus.push_back(f.descriptor);
        frame_sizes.push_back(static_cast<int>(frame.features.size()));
      }
      const unsigned seed = vocab_seed.value_or(cfg.ransac_seed);
      const ilam::Vocabulary v = ilam::Vocabulary::train(corpus, cfg.vocab_branching,
                                                         cfg.vocab_depth, seed, frame_sizes);
      v.save(vocab_out);
      std::cout << "trained " << v.word_count() << " words from " << corpus.size()
                << " descriptors (" << files.size() << " scans)\n";
    } else if (*convert) {
      const ilam::OrganizedScan scan =
          ilam::import_ascii_cloud(conv_in, conv_rows, conv_cols, conv_ts);
      ilam::write_scan(scan, conv_out);
      std::cout << "wrote " << conv_out << " (" << scan.valid_count() << " valid points)\n";
    } else if (*dump_img) {
      const ilam::Config cfg = load_or_default(img_config);
      const ilam::OrganizedScan scan = ilam::read_scan(img_scan);
      const ilam::IntensityImage img = ilam::project(
          scan, ilam::NormalizationParams{cfg.intensity_cap, cfg.row_gain_equalize});
      ilam::write_pgm(img, img_out);
      std::cout << "wrote " << img_out << " (" << img.cols << "x" << img.rows << ")\n";
    } else if (*dump_feat) {
      const ilam::Config cfg = load_or_default(feat_config);
      const ilam::OrganizedScan scan = ilam::read_scan(feat_scan);
      const ilam::IntensityFrame frame = ilam::make_frame(scan, cfg);
      for (const auto& f : frame.features) {
        std::cout << f.row << " " << f.col << " " << f.response << " "
                  << descriptor_hex(f.descriptor) << " " << f.point3d.x() << " "
                  << f.point3d.y() << " " << f.point3d.z() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
