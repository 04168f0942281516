#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skillstep/skillstep.hpp"

namespace ss = skillstep;

namespace {

constexpr uint64_t kBundleInitStream = 0x1417;

std::unique_ptr<ss::ModelBundle> make_bundle(const ss::TrainConfig& cfg,
                                             const ss::MazeSpec& spec) {
  return std::make_unique<ss::ModelBundle>(cfg.bundle_config(), spec,
                                           ss::derive_seed(cfg.seed, kBundleInitStream));
}

void print_eval(const char* label, const ss::EvalReport& rep) {
  if (rep.no_data) {
    std::printf("%s: no data\n", label);
    return;
  }
  std::printf("%s: episodes=%d mean=%.2f std=%.2f\n", label, rep.episodes,
              static_cast<double>(rep.mean), static_cast<double>(rep.stdev));
}

ss::EvalReport eval_on_shift(const ss::ModelBundle& b, const ss::TrainConfig& cfg,
                             const ss::MazeSpec& spec, ss::ShiftLevel level,
                             int episodes, uint64_t seed) {
  return ss::eval_zeroshot(b, spec, cfg.env_config(), ss::make_shift_config(spec, level),
                           episodes, seed);
}

int run_train(const ss::TrainConfig& cfg, const std::string& out_dir,
              const std::string& data_file, const std::string& resume_ckpt) {
  const ss::MazeSpec spec = cfg.maze();
  auto bundle = make_bundle(cfg, spec);
  ss::DatasetStore store;
  int resume_iteration = 0;
  if (!resume_ckpt.empty()) {
    if (data_file.empty())
      throw ss::UsageError("train: --resume requires --data with the matching "
                           "dataset snapshot");
    resume_iteration = ss::load_checkpoint(*bundle, resume_ckpt, cfg.hash(spec));
    store = ss::load_dataset(data_file);
  } else if (!data_file.empty()) {
    store = ss::load_dataset(data_file);
    if (store.maze_hash != spec.hash())
      throw ss::DataError("train: dataset was generated for a different maze");
  } else {
    store = ss::build_expert_dataset(cfg);
  }
  const ss::TrainResult res =
      ss::train_offline(cfg, *bundle, store, out_dir, resume_iteration);
  std::printf("train: iterations=%d epochs=%d first_epoch_loss=%.4f last_epoch_loss=%.4f\n",
              cfg.iterations, cfg.epochs_per_iteration,
              static_cast<double>(res.initial_epoch_loss),
              static_cast<double>(res.final_epoch_loss));
  std::printf("train: heldout_recon %.5f -> %.5f\n",
              static_cast<double>(res.heldout_recon_init),
              static_cast<double>(res.heldout_recon_final));
  for (size_t i = 0; i < res.coverage.size(); ++i)
    std::printf("coverage: iteration %zu bins %d\n", i, res.coverage[i]);
  for (size_t i = 0; i < res.iteration_evals.size(); ++i) {
    const std::string label = "eval(iteration " + std::to_string(i + 1) + ")";
    print_eval(label.c_str(), res.iteration_evals[i]);
  }
  std::printf("train: checkpoint %s\n", res.final_checkpoint.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill-step latent-model agent for the built-in point maze"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the expert dataset");
  std::string gen_out = "dataset.bin";
  gen->add_option("--out", gen_out, "Output dataset file");

  // train
  auto* train = app.add_subcommand("train", "Run iterative offline training");
  std::string train_out;
  std::string train_data;
  std::string train_resume;
  int64_t seed_override = -1;
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--data", train_data, "Existing dataset file");
  train->add_option("--resume", train_resume, "Checkpoint to resume from");
  train->add_option("--seed", seed_override, "Override the config seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Zero-shot evaluation of a checkpoint");
  std::string eval_ckpt;
  std::string eval_shift = "none";
  int eval_episodes = -1;
  int64_t eval_seed = -1;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--shift", eval_shift, "Goal shift: none|small|medium|large");
  eval->add_option("--episodes", eval_episodes, "Episode count");
  eval->add_option("--seed", eval_seed, "Episode sampling seed");

  // finetune
  auto* fine = app.add_subcommand("finetune", "Few-shot adaptation of a checkpoint");
  std::string fine_ckpt;
  std::string fine_shift = "large";
  std::string fine_out;
  int fine_shots = -1;
  int64_t fine_seed = -1;
  fine->add_option("--checkpoint", fine_ckpt, "Checkpoint file")->required();
  fine->add_option("--shift", fine_shift, "Goal shift for adaptation episodes");
  fine->add_option("--shots", fine_shots, "Adaptation episode count");
  fine->add_option("--out", fine_out, "Output directory");
  fine->add_option("--seed", fine_seed, "Adaptation seed");

  // coverage
  auto* cov = app.add_subcommand("coverage", "Goal-coverage series of a dataset");
  std::string cov_data;
  cov->add_option("--data", cov_data, "Dataset file")->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "Run an ablation arm");
  std::string abl_name;
  std::string abl_out;
  std::string abl_values = "1,5,10,40";
  abl->add_option("--name", abl_name,
                  "full|no-rollout|no-skill-step-dynamics|no-goal-generator|bc-only|h-sweep")
      ->required();
  abl->add_option("--out", abl_out, "Output directory");
  abl->add_option("--values", abl_values, "Comma-separated H values for h-sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    ss::TrainConfig cfg = ss::TrainConfig::load(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    const ss::MazeSpec spec = cfg.maze();

    if (gen->parsed()) {
      const ss::DatasetStore store = ss::build_expert_dataset(cfg);
      ss::save_dataset(store, gen_out);
      std::printf("gen-data: %d trajectories -> %s\n", store.size(), gen_out.c_str());
      return 0;
    }

    if (train->parsed()) {
      const std::string out = train_out.empty() ? ss::default_out_dir() : train_out;
      return run_train(cfg, out, train_data, train_resume);
    }

    if (eval->parsed()) {
      auto bundle = make_bundle(cfg, spec);
      ss::load_checkpoint(*bundle, eval_ckpt, cfg.hash(spec));
      const int episodes = eval_episodes >= 0 ? eval_episodes : cfg.eval_episodes;
      const uint64_t seed = eval_seed >= 0 ? static_cast<uint64_t>(eval_seed)
                                           : ss::derive_seed(cfg.seed, 0xe0a1);
      const auto rep = eval_on_shift(*bundle, cfg, spec,
                                     ss::shift_from_string(eval_shift), episodes, seed);
      print_eval(("eval shift=" + eval_shift).c_str(), rep);
      return 0;
    }

    if (fine->parsed()) {
      auto bundle = make_bundle(cfg, spec);
      ss::load_checkpoint(*bundle, fine_ckpt, cfg.hash(spec));
      const std::string out = fine_out.empty() ? ss::default_out_dir() : fine_out;
      std::filesystem::create_directories(out);
      const uint64_t seed = fine_seed >= 0 ? static_cast<uint64_t>(fine_seed)
                                           : ss::derive_seed(cfg.seed, 0xf1e7);
      const ss::ShiftLevel level = ss::shift_from_string(fine_shift);
      const ss::ShiftConfig shift = ss::make_shift_config(spec, level);
      const auto before = eval_on_shift(*bundle, cfg, spec, level, cfg.eval_episodes,
                                        ss::derive_seed(cfg.seed, 0xe0a1));
      print_eval("finetune zero-shot", before);
      ss::AdaptConfig acfg = cfg.adapt_config();
      if (fine_shots >= 0) acfg.shots = fine_shots;
      acfg.replay_path = out + "/replay.bin";
      const auto report =
          ss::finetune_fewshot(*bundle, spec, cfg.env_config(), shift, acfg, seed);
      std::printf("finetune: episodes=%d transitions=%d\n", report.episodes,
                  report.transitions);
      const auto after = eval_on_shift(*bundle, cfg, spec, level, cfg.eval_episodes,
                                       ss::derive_seed(cfg.seed, 0xe0a1));
      print_eval("finetune adapted", after);
      ss::save_checkpoint(*bundle, cfg.iterations, cfg.hash(spec), out + "/adapted.ckpt");
      std::printf("finetune: checkpoint %s/adapted.ckpt\n", out.c_str());
      return 0;
    }

    if (cov->parsed()) {
      const ss::DatasetStore store = ss::load_dataset(cov_data);
      int max_born = 0;
      for (const auto& t : store.trajectories)
        max_born = std::max(max_born, t.iteration_born);
      for (int k = 0; k <= max_born; ++k)
        std::printf("coverage: iteration %d bins %d\n", k,
                    ss::goal_coverage(store, cfg.coverage_bin, k));
      return 0;
    }

    if (abl->parsed()) {
      const std::string out = abl_out.empty() ? ss::default_out_dir() : abl_out;
      auto run_arm = [&](ss::TrainConfig arm_cfg, const std::string& arm_name) {
        const std::string arm_out = out + "/" + arm_name;
        const ss::MazeSpec arm_spec = arm_cfg.maze();
        auto bundle = make_bundle(arm_cfg, arm_spec);
        ss::DatasetStore store = ss::build_expert_dataset(arm_cfg);
        ss::train_offline(arm_cfg, *bundle, store, arm_out);
        for (ss::ShiftLevel lvl : {ss::ShiftLevel::kNone, ss::ShiftLevel::kSmall,
                                   ss::ShiftLevel::kMedium, ss::ShiftLevel::kLarge}) {
          const auto rep =
              eval_on_shift(*bundle, arm_cfg, arm_spec, lvl, arm_cfg.eval_episodes,
                            ss::derive_seed(arm_cfg.seed, 0xe0a1));
          std::printf("ablate %s shift=%s mean=%.2f std=%.2f\n", arm_name.c_str(),
                      ss::to_string(lvl), static_cast<double>(rep.mean),
                      static_cast<double>(rep.stdev));
        }
      };
      if (abl_name == "h-sweep") {
        std::vector<int> values;
        std::stringstream ss_vals(abl_values);
        std::string tok;
        while (std::getline(ss_vals, tok, ',')) values.push_back(std::stoi(tok));
        if (values.empty()) throw ss::UsageError("ablate: empty h-sweep value list");
        for (int h : values) {
          ss::TrainConfig arm = cfg;
          arm.skill_horizon = h;
          run_arm(arm, "h" + std::to_string(h));
        }
      } else if (abl_name == "full") {
        ss::TrainConfig arm = cfg;
        arm.ablation = "";
        run_arm(arm, "full");
      } else if (ss::known_ablations().count(abl_name)) {
        ss::TrainConfig arm = cfg;
        arm.ablation = abl_name;
        run_arm(arm, abl_name);
      } else {
        throw ss::UsageError("ablate: unknown arm '" + abl_name + "'");
      }
      return 0;
    }
  } catch (const ss::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 64;
  } catch (const ss::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 65;
  } catch (const ss::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 66;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 70;
  }
  return 0;
}
