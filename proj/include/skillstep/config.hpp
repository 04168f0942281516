#pragma once

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillstep/bundle.hpp"
#include "skillstep/policy.hpp"
#include "skillstep/rollout.hpp"

namespace skillstep {

struct LossWeights {
  float skill = 1.0f;
  float prior = 0.02f;
  float model = 0.5f;
  float sg = 1.0f;
};

inline const std::set<std::string>& known_ablations() {
  static const std::set<std::string> k = {"", "no-rollout", "no-skill-step-dynamics",
                                          "no-goal-generator", "bc-only"};
  return k;
}

struct TrainConfig {
  uint64_t seed = 0;
  int skill_horizon = 10;
  int z_dim = 8;
  int h_dim = 16;
  std::vector<int> hidden = {128, 64};
  std::vector<int> latent_hidden = {64, 64};
  float beta = 0.02f;
  float alpha = 0.1f;
  float consistency_weight = 1.0f;
  float lr = 3e-4f;
  int batch_size = 64;
  int epochs_per_iteration = 40;
  int batches_per_epoch = 120;
  int iterations = 3;
  float ema_rate = 0.05f;
  float grad_clip = 10.0f;
  int expert_trajectories = 500;
  float gamma = 0.99f;
  int episode_horizon = 400;
  float success_radius = 1.0f;
  int eval_episodes = 20;
  std::string relabel = "future";
  float coverage_bin = 0.25f;
  int rollout_branches = 16;
  int rollout_skills = 3;
  bool rollout_decode = true;
  LossWeights weights;
  std::string ablation;
  std::string maze_file;
  int adapt_shots = 25;
  int adapt_updates = 50;
  int adapt_batch = 32;

  void validate() const {
    if (skill_horizon < 1) throw ConfigError("config: skill_horizon must be >= 1");
    if (z_dim < 1 || h_dim < 1) throw ConfigError("config: latent dims must be >= 1");
    if (batch_size < 1 || epochs_per_iteration < 1 || batches_per_epoch < 1)
      throw ConfigError("config: batch/epoch counts must be >= 1");
    if (iterations < 1) throw ConfigError("config: iterations must be >= 1");
    if (lr <= 0.0f) throw ConfigError("config: lr must be positive");
    if (expert_trajectories < 1)
      throw ConfigError("config: expert_trajectories must be >= 1");
    if (gamma <= 0.0f || gamma > 1.0f) throw ConfigError("config: gamma must be in (0, 1]");
    if (episode_horizon < 1) throw ConfigError("config: episode_horizon must be >= 1");
    if (success_radius <= 0.0f) throw ConfigError("config: success_radius must be positive");
    if (eval_episodes < 0) throw ConfigError("config: eval_episodes must be >= 0");
    if (relabel != "final" && relabel != "future")
      throw ConfigError("config: relabel must be 'final' or 'future'");
    if (coverage_bin <= 0.0f) throw ConfigError("config: coverage_bin must be positive");
    if (rollout_branches < 0 || rollout_skills < 0)
      throw ConfigError("config: rollout counts must be >= 0");
    if (!known_ablations().count(ablation))
      throw ConfigError("config: unknown ablation '" + ablation + "'");
    if (adapt_shots < 0 || adapt_updates < 1 || adapt_batch < 1)
      throw ConfigError("config: adaptation knobs out of range");
    if (ema_rate < 0.0f || ema_rate > 1.0f)
      throw ConfigError("config: ema_rate must lie in [0, 1]");
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    static const std::set<std::string> keys = {
        "seed",          "skill_horizon",      "z_dim",
        "h_dim",         "hidden",             "latent_hidden",
        "beta",
        "alpha",         "consistency_weight", "lr",
        "batch_size",    "epochs_per_iteration", "batches_per_epoch",
        "iterations",    "ema_rate",           "grad_clip",
        "expert_trajectories", "gamma",        "episode_horizon",
        "success_radius", "eval_episodes",     "relabel",
        "coverage_bin",  "rollout_branches",   "rollout_skills",
        "rollout_decode", "weights",           "ablation",
        "maze_file",     "adapt_shots",        "adapt_updates",
        "adapt_batch"};
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, val] : j.items()) {
      if (!keys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
      (void)val;
    }
    try {
      c.seed = j.value("seed", c.seed);
      c.skill_horizon = j.value("skill_horizon", c.skill_horizon);
      c.z_dim = j.value("z_dim", c.z_dim);
      c.h_dim = j.value("h_dim", c.h_dim);
      c.hidden = j.value("hidden", c.hidden);
      c.latent_hidden = j.value("latent_hidden", c.latent_hidden);
      c.beta = j.value("beta", c.beta);
      c.alpha = j.value("alpha", c.alpha);
      c.consistency_weight = j.value("consistency_weight", c.consistency_weight);
      c.lr = j.value("lr", c.lr);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.epochs_per_iteration = j.value("epochs_per_iteration", c.epochs_per_iteration);
      c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
      c.iterations = j.value("iterations", c.iterations);
      c.ema_rate = j.value("ema_rate", c.ema_rate);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.expert_trajectories = j.value("expert_trajectories", c.expert_trajectories);
      c.gamma = j.value("gamma", c.gamma);
      c.episode_horizon = j.value("episode_horizon", c.episode_horizon);
      c.success_radius = j.value("success_radius", c.success_radius);
      c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
      c.relabel = j.value("relabel", c.relabel);
      c.coverage_bin = j.value("coverage_bin", c.coverage_bin);
      c.rollout_branches = j.value("rollout_branches", c.rollout_branches);
      c.rollout_skills = j.value("rollout_skills", c.rollout_skills);
      c.rollout_decode = j.value("rollout_decode", c.rollout_decode);
      if (j.contains("weights")) {
        const auto& w = j.at("weights");
        static const std::set<std::string> wkeys = {"skill", "prior", "model", "sg"};
        for (const auto& [key, val] : w.items()) {
          if (!wkeys.count(key))
            throw ConfigError("config: unknown weights key '" + key + "'");
          (void)val;
        }
        c.weights.skill = w.value("skill", c.weights.skill);
        c.weights.prior = w.value("prior", c.weights.prior);
        c.weights.model = w.value("model", c.weights.model);
        c.weights.sg = w.value("sg", c.weights.sg);
      }
      c.ablation = j.value("ablation", c.ablation);
      c.maze_file = j.value("maze_file", c.maze_file);
      c.adapt_shots = j.value("adapt_shots", c.adapt_shots);
      c.adapt_updates = j.value("adapt_updates", c.adapt_updates);
      c.adapt_batch = j.value("adapt_batch", c.adapt_batch);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static TrainConfig from_text(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    return from_json(j);
  }

  static TrainConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["skill_horizon"] = skill_horizon;
    j["z_dim"] = z_dim;
    j["h_dim"] = h_dim;
    j["hidden"] = hidden;
    j["latent_hidden"] = latent_hidden;
    j["beta"] = beta;
    j["alpha"] = alpha;
    j["consistency_weight"] = consistency_weight;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["epochs_per_iteration"] = epochs_per_iteration;
    j["batches_per_epoch"] = batches_per_epoch;
    j["iterations"] = iterations;
    j["ema_rate"] = ema_rate;
    j["grad_clip"] = grad_clip;
    j["expert_trajectories"] = expert_trajectories;
    j["gamma"] = gamma;
    j["episode_horizon"] = episode_horizon;
    j["success_radius"] = success_radius;
    j["eval_episodes"] = eval_episodes;
    j["relabel"] = relabel;
    j["coverage_bin"] = coverage_bin;
    j["rollout_branches"] = rollout_branches;
    j["rollout_skills"] = rollout_skills;
    j["rollout_decode"] = rollout_decode;
    j["weights"] = {{"skill", weights.skill},
                    {"prior", weights.prior},
                    {"model", weights.model},
                    {"sg", weights.sg}};
    j["ablation"] = ablation;
    j["maze_file"] = maze_file;
    j["adapt_shots"] = adapt_shots;
    j["adapt_updates"] = adapt_updates;
    j["adapt_batch"] = adapt_batch;
    return j;
  }

  /// Hash over the canonical config rendering and the maze definition; pinned
  /// into checkpoints so stale files are rejected.
  uint64_t hash(const MazeSpec& spec) const {
    return fnv1a(to_json().dump(), fnv1a(spec.to_text()));
  }

  MazeSpec maze() const {
    return maze_file.empty() ? default_maze() : MazeSpec::load(maze_file);
  }

  BundleConfig bundle_config() const {
    BundleConfig b;
    b.skill_horizon = skill_horizon;
    b.z_dim = z_dim;
    b.h_dim = h_dim;
    b.hidden = hidden;
    b.latent_hidden = latent_hidden;
    b.use_skill_step_dynamics = ablation != "no-skill-step-dynamics";
    b.use_goal_generator = ablation != "no-goal-generator";
    return b;
  }

  EnvConfig env_config() const {
    EnvConfig e;
    e.gamma = gamma;
    e.horizon = episode_horizon;
    e.success_radius = success_radius;
    return e;
  }

  RolloutConfig rollout_config() const {
    RolloutConfig r;
    r.branches = ablation == "no-rollout" ? 0 : rollout_branches;
    r.skills = rollout_skills;
    r.decode = rollout_decode;
    r.seed = derive_seed(seed, 0x8011);
    return r;
  }

  AdaptConfig adapt_config() const {
    AdaptConfig a;
    a.shots = adapt_shots;
    a.updates_per_episode = adapt_updates;
    a.batch_size = adapt_batch;
    a.lr = lr;
    a.alpha = alpha;
    a.consistency_weight = consistency_weight;
    a.gamma = gamma;
    a.target_rate = ema_rate;
    return a;
  }

  RelabelMode relabel_mode() const {
    return relabel == "final" ? RelabelMode::kFinal : RelabelMode::kFuture;
  }

  bool use_consistency() const { return ablation != "bc-only"; }
};

/// Default output directory, overridable through SKILLSTEP_OUT.
inline std::string default_out_dir() {
  const char* env = std::getenv("SKILLSTEP_OUT");
  return env && *env ? env : "runs";
}

}  // namespace skillstep
