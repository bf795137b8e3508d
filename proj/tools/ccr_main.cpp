// Command-line front end for the counting / cropping / recognition pipeline.
// Every command reads one JSON config; flags override the file.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ccr/pipeline.hpp"
#include "ccr/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
  std::string config_path;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "pipeline config JSON")->required();
  cmd->add_flag("--force", flags.force, "overwrite existing outputs");
  cmd->add_option("--seed", flags.seed, "override the global seed");
  cmd->add_option("--threads", flags.threads, "override worker thread count");
  cmd->add_option("--out", flags.out, "override the command's output directory");
}

ccr::PipelineConfig load_config(const CommonFlags& flags, const char* out_target) {
  ccr::PipelineConfig cfg = ccr::PipelineConfig::load(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.resolve_seeds();
  }
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.out) {
    if (std::string(out_target) == "dataset") cfg.dataset_dir = *flags.out;
    else if (std::string(out_target) == "checkpoints") cfg.checkpoint_dir = *flags.out;
    else cfg.report_dir = *flags.out;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Count, crop and recognise pipeline"};
  app.set_version_flag("--version", ccr::kVersion);
  app.require_subcommand(1);

  CommonFlags gen_f, tc_f, pr_f, tr_f, tt_f, ev_f, lo_f, vz_f;
  std::string recog_mode;
  std::string track_part;
  int viz_frames = 12;

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic dataset");
  add_common(gen, gen_f);
  CLI::App* train_count = app.add_subcommand("train-count", "train the counting network");
  add_common(train_count, tc_f);
  CLI::App* propose = app.add_subcommand("propose", "write CAMs and crop proposals for every frame");
  add_common(propose, pr_f);
  CLI::App* train_recog = app.add_subcommand("train-recog", "train the identity recognition network");
  add_common(train_recog, tr_f);
  train_recog->add_option("--mode", recog_mode, "ccr (proposal crops) or baseline (resized frames)")
      ->required()
      ->check(CLI::IsMember({"ccr", "baseline"}));
  CLI::App* train_tracknets = app.add_subcommand("train-tracknets", "train face/body track classifiers");
  add_common(train_tracknets, tt_f);
  train_tracknets->add_option("--part", track_part, "train only one part")
      ->check(CLI::IsMember({"face", "body"}));
  CLI::App* eval = app.add_subcommand("eval", "evaluate all available methods and write the report");
  add_common(eval, ev_f);
  CLI::App* localise = app.add_subcommand("localise", "per-identity boxes and centroids on test frames");
  add_common(localise, lo_f);
  CLI::App* viz = app.add_subcommand("viz", "write CAM / proposal / localisation overlays");
  add_common(viz, vz_f);
  viz->add_option("--frames", viz_frames, "number of test frames to render");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      ccr::PipelineConfig cfg = load_config(gen_f, "dataset");
      ccr::Pipeline pipe(cfg);
      ccr::DatasetSummary s = pipe.run_gen(gen_f.force);
      std::printf("dataset: %d train / %d test frames at %s\n", s.train_frames, s.test_frames,
                  cfg.dataset_dir.c_str());
      std::printf("count histogram:");
      long long instances = 0;
      for (std::size_t n = 0; n < s.count_histogram.size(); ++n) {
        std::printf(" n=%zu:%d", n, s.count_histogram[n]);
        instances += static_cast<long long>(n) * s.count_histogram[n];
      }
      std::printf("  (sum n = %lld)\n", instances);
      std::printf("train f_i:");
      for (int f : s.train_instance_counts) std::printf(" %d", f);
      std::printf("\ntest  f_i:");
      for (int f : s.test_instance_counts) std::printf(" %d", f);
      std::printf("\n");
    } else if (train_count->parsed()) {
      ccr::Pipeline pipe(load_config(tc_f, "checkpoints"));
      ccr::TrainHistory h = pipe.run_train_count();
      std::printf("count net trained: final loss %.4f, train accuracy %.3f\n", h.epochs.back().loss,
                  h.epochs.back().metric);
    } else if (propose->parsed()) {
      ccr::Pipeline pipe(load_config(pr_f, "dataset"));
      auto proposals = pipe.run_propose();
      std::printf("wrote %zu proposals to %s\n", proposals.size(),
                  pipe.proposals_path().string().c_str());
    } else if (train_recog->parsed()) {
      ccr::Pipeline pipe(load_config(tr_f, "checkpoints"));
      ccr::TrainHistory h = pipe.run_train_recog(recog_mode);
      std::printf("recognition net (%s) trained: final loss %.4f, per-class accuracy %.3f\n",
                  recog_mode.c_str(), h.epochs.back().loss, h.epochs.back().metric);
    } else if (train_tracknets->parsed()) {
      ccr::Pipeline pipe(load_config(tt_f, "checkpoints"));
      std::optional<ccr::Part> only;
      if (!track_part.empty()) only = ccr::part_from_name(track_part);
      pipe.run_train_tracknets(only);
      std::printf("track classifiers trained\n");
    } else if (eval->parsed()) {
      ccr::Pipeline pipe(load_config(ev_f, "report"));
      ccr::Pipeline::EvalOutcome out = pipe.run_eval();
      ccr::print_comparison_table(out, std::cout);
      std::printf("report written to %s\n", pipe.report_path().string().c_str());
    } else if (localise->parsed()) {
      ccr::Pipeline pipe(load_config(lo_f, "report"));
      auto rows = pipe.run_localise();
      std::printf("wrote %zu localisations to %s\n", rows.size(),
                  pipe.localisations_path().string().c_str());
    } else if (viz->parsed()) {
      ccr::Pipeline pipe(load_config(vz_f, "report"));
      pipe.run_viz(viz_frames);
      std::printf("overlays written to %s\n", pipe.viz_dir().string().c_str());
    }
  } catch (const ccr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ccr::PrereqError& e) {
    std::fprintf(stderr, "missing prerequisite: %s\n", e.what());
    return kExitPrereq;
  } catch (const ccr::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
