#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "fieldev/fdenv.hpp"
#include "fieldev/nn/adam.hpp"
#include "fieldev/nn/checkpoint.hpp"
#include "fieldev/nn/network.hpp"
#include "fieldev/parallel.hpp"
#include "fieldev/policy.hpp"

namespace fieldev {

struct PPOConfig {
  int episodes_per_iter = 320;
  int minibatch_episodes = 160;
  double lr = 1e-3;
  double clip = 0.2;
  double gamma = 1.0;
  double lambda = 0.95;
  int epochs = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int workers = 40;
  double reward_scale = 1e-8;
  bool location_always_on = true;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
};

struct Transition {
  Observation observation;
  ActionMask mask;
  Action action;
  double log_prob = 0.0;  // behaviour policy
  double reward = 0.0;    // scaled
  double value = 0.0;
  bool done = false;
  int stage = 0;
};

struct Episode {
  std::vector<Transition> transitions;
  double npv = 0.0;  // dollars
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

// values[t] = V(s_t); the state after a done transition is worth 0.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double gamma, double lambda);

double clipped_surrogate(double ratio, double advantage, double eps);
// d surrogate / d ratio: 0 where the clipped branch is selected.
double clipped_surrogate_grad(double ratio, double advantage, double eps);

// Mean 0, unit population std; all zeros when the input has no spread.
void normalize_advantages(std::vector<double>& values);

// Seed of episode `episode` in training iteration `iteration`.
std::uint64_t episode_seed(std::uint64_t base, std::uint64_t iteration, std::uint64_t episode);

struct CollectOptions {
  bool greedy = false;
  int workers = 1;
  bool location_always_on = true;
  double reward_scale = 1e-8;
};

// Rolls out `count` complete episodes; episode e uses seeds[e]. The result
// is ordered by episode and independent of the worker count.
std::vector<Episode> collect(const nn::Network& net, const nn::ParamSet& params,
                             const EnvConfig& env, std::span<const std::uint64_t> seeds,
                             const CollectOptions& options,
                             std::shared_ptr<SimulationCounter> counter = nullptr);

struct IterationMetrics {
  double mean_npv = 0.0;
  double max_npv = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  // Largest |ratio - 1| seen in the first minibatch of the first epoch.
  double first_minibatch_ratio_dev = 0.0;
  std::vector<double> epoch_entropy;  // mean entropy at the start of each epoch
};

// Fills advantages/targets, normalizes advantages over the batch and runs
// epochs x minibatch Adam steps on `params`. Throws TrainingError on a
// non-finite loss.
IterationMetrics train_iteration(const nn::Network& net, nn::ParamSet& params,
                                 nn::AdamState& adam, std::vector<Episode>& batch,
                                 const PPOConfig& config, std::uint64_t shuffle_seed);

struct CurveRow {
  int iteration = 0;
  double mean_npv = 0.0;
  double max_npv = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  std::uint64_t sims_total = 0;
};

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows);
std::vector<CurveRow> read_curve_csv(const std::filesystem::path& path);

struct TrainOptions {
  int iterations = 0;
  std::optional<std::filesystem::path> output_dir;  // curve.csv and checkpoints
  int checkpoint_every = 1;
  bool resume = false;
  std::uint64_t init_seed = 1;
  const std::atomic<bool>* stop = nullptr;  // finish the current iteration, then return
  std::function<void(const CurveRow&)> on_iteration;
  // Episode NPVs (dollars) of each collected batch, before the update.
  std::function<void(int iteration, const std::vector<double>& npvs)> on_batch;
};

struct TrainResult {
  nn::ParamSet params;
  nn::AdamState adam;
  std::vector<CurveRow> curve;
  int iterations_done = 0;  // total, including resumed ones
  bool interrupted = false;
};

TrainResult train(const nn::Network& net, const EnvConfig& env, const PPOConfig& config,
                  const TrainOptions& options,
                  std::shared_ptr<SimulationCounter> counter = nullptr);

struct PolicyStage {
  Action action;         // what was executed
  bool forced = false;
  Action policy_action;  // the policy's greedy choice in the same state
  double reward = 0.0;   // dollars
  bool collided = false;
};

struct PolicyRollout {
  std::vector<PolicyStage> stages;
  double npv = 0.0;
  SimState final_state;
};

// Greedy (per-head argmax) episode. Stages present in `forced` (0-based)
// execute the given action instead of the policy's.
PolicyRollout greedy_rollout(const nn::Network& net, const nn::ParamSet& params,
                             const EnvConfig& env, const std::map<int, Action>& forced = {},
                             bool location_always_on = true,
                             std::shared_ptr<SimulationCounter> counter = nullptr);

inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kCurveFile = "curve.csv";

}  // namespace fieldev
