#include "fieldev/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "fieldev/binary_io.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/parallel.hpp"

namespace fieldev {

void PPOConfig::validate() const {
  if (episodes_per_iter < 1) throw ConfigError("ppo.episodes_per_iter must be >= 1");
  if (minibatch_episodes < 1 || minibatch_episodes > episodes_per_iter)
    throw ConfigError("ppo.minibatch_episodes must lie in [1, episodes_per_iter]");
  if (!(lr > 0.0)) throw ConfigError("ppo.lr must be positive");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo.clip must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo.lambda must lie in [0, 1]");
  if (epochs < 1) throw ConfigError("ppo.epochs must be >= 1");
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0))
    throw ConfigError("ppo loss coefficients must be >= 0");
  if (workers < 1) throw ConfigError("ppo.workers must be >= 1");
  if (!(reward_scale > 0.0)) throw ConfigError("ppo.reward_scale must be positive");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw InvalidArgument("gae: length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.value_targets.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next = (t + 1 < n && !dones[t]) ? values[t + 1] : 0.0;
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next * live - values[t];
    running = delta + gamma * lambda * live * running;
    out.advantages[t] = running;
    out.value_targets[t] = running + values[t];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  if (clipped * advantage < ratio * advantage) return 0.0;
  return advantage;
}

void normalize_advantages(std::vector<double>& values) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  const bool flat = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
  for (double& v : values) v = flat ? 0.0 : (v - mean) / sd;
}

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t iteration, std::uint64_t episode) {
  return mix_seed(mix_seed(base, iteration), episode);
}

int effective_workers(int requested) {
  int n = std::max(1, requested);
  if (const char* env = std::getenv("FIELDEV_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<long>(n, cap);
  }
  return n;
}

namespace {

Episode run_episode(const nn::Network& net, const nn::ParamSet& params, FieldDevEnv& env,
                    std::uint64_t seed, const CollectOptions& options) {
  std::mt19937_64 rng(seed);
  Episode ep;
  env.reset(seed);
  std::vector<double> raw;
  while (!env.done()) {
    Transition tr;
    tr.observation = env.observation();
    tr.mask = env.action_mask();
    tr.stage = env.stage();
    const auto out = net.forward(params, tr.observation.maps, tr.observation.vector);
    const ActionDistribution dist(out, tr.mask, options.location_always_on);
    tr.action = options.greedy ? dist.greedy() : dist.sample(rng);
    tr.log_prob = dist.log_prob(tr.action);
    tr.value = out.value;
    const auto step = env.step(tr.action);
    raw.push_back(step.reward);
    tr.reward = step.reward * options.reward_scale;
    tr.done = step.done;
    ep.transitions.push_back(std::move(tr));
  }
  ep.npv = episode_npv(raw);
  return ep;
}

}  // namespace

std::vector<Episode> collect(const nn::Network& net, const nn::ParamSet& params,
                             const EnvConfig& env, std::span<const std::uint64_t> seeds,
                             const CollectOptions& options,
                             std::shared_ptr<SimulationCounter> counter) {
  std::vector<Episode> out(seeds.size());
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(seeds.size())));
  std::vector<std::unique_ptr<FieldDevEnv>> envs(static_cast<std::size_t>(workers));
  for (auto& e : envs) e = std::make_unique<FieldDevEnv>(env, counter);
  // Each worker owns one environment; episodes are assigned round-robin.
  parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t w) {
    for (std::size_t e = w; e < seeds.size(); e += static_cast<std::size_t>(workers)) {
      out[e] = run_episode(net, params, *envs[w], seeds[e], options);
    }
  });
  return out;
}

namespace {

struct Sample {
  const Transition* tr;
  double advantage;
  double target;
};

struct Accum {
  nn::ParamSet grad;
  double policy = 0, value = 0, entropy = 0, clipped = 0, kl = 0, max_dev = 0;
};

constexpr std::size_t kGradChunks = 8;

}  // namespace

IterationMetrics train_iteration(const nn::Network& net, nn::ParamSet& params,
                                 nn::AdamState& adam, std::vector<Episode>& batch,
                                 const PPOConfig& config, std::uint64_t shuffle_seed) {
  config.validate();
  IterationMetrics m;
  if (batch.empty()) return m;

  std::vector<double> all_adv;
  m.max_npv = -std::numeric_limits<double>::infinity();
  for (auto& ep : batch) {
    const std::size_t len = ep.transitions.size();
    std::vector<double> r(len), v(len);
    auto d = std::make_unique<bool[]>(len);
    for (std::size_t t = 0; t < len; ++t) {
      r[t] = ep.transitions[t].reward;
      v[t] = ep.transitions[t].value;
      d[t] = ep.transitions[t].done;
    }
    auto g = compute_gae(r, v, std::span<const bool>(d.get(), len), config.gamma, config.lambda);
    ep.advantages = std::move(g.advantages);
    ep.value_targets = std::move(g.value_targets);
    all_adv.insert(all_adv.end(), ep.advantages.begin(), ep.advantages.end());
    m.mean_npv += ep.npv;
    m.max_npv = std::max(m.max_npv, ep.npv);
  }
  m.mean_npv /= static_cast<double>(batch.size());
  normalize_advantages(all_adv);
  {
    std::size_t k = 0;
    for (auto& ep : batch)
      for (auto& a : ep.advantages) a = all_adv[k++];
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  const int workers = effective_workers(config.workers);
  std::vector<std::size_t> order(batch.size());
  double weight_total = 0.0;
  bool first = true;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_entropy = 0.0;
    std::size_t epoch_count = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.minibatch_episodes)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.minibatch_episodes));
      std::vector<Sample> samples;
      for (std::size_t o = start; o < stop; ++o) {
        const auto& ep = batch[order[o]];
        for (std::size_t t = 0; t < ep.transitions.size(); ++t)
          samples.push_back({&ep.transitions[t], ep.advantages[t], ep.value_targets[t]});
      }
      if (samples.empty()) continue;
      const double n = static_cast<double>(samples.size());

      // Fixed chunking keeps the summation order independent of threads.
      const std::size_t chunks = std::min(kGradChunks, samples.size());
      std::vector<Accum> acc(chunks);
      parallel_for(chunks, workers, [&](std::size_t c) {
        Accum& a = acc[c];
        a.grad = params.zeros_like();
        nn::ForwardCache cache;
        for (std::size_t s = c; s < samples.size(); s += chunks) {
          const Sample& smp = samples[s];
          const Transition& tr = *smp.tr;
          const auto out = net.forward(params, tr.observation.maps, tr.observation.vector, &cache);
          const ActionDistribution dist(out, tr.mask, config.location_always_on);
          const double logp = dist.log_prob(tr.action);
          const double ratio = std::exp(logp - tr.log_prob);
          const double surr = clipped_surrogate(ratio, smp.advantage, config.clip);
          const double h = dist.entropy();
          const double verr = out.value - smp.target;
          a.policy += -surr;
          a.value += verr * verr;
          a.entropy += h;
          a.kl += tr.log_prob - logp;
          if (std::abs(ratio - 1.0) > config.clip) a.clipped += 1.0;
          a.max_dev = std::max(a.max_dev, std::abs(ratio - 1.0));

          nn::OutputGrad og;
          og.location.assign(out.location_logits.size(), 0.0);
          const double dsurr = clipped_surrogate_grad(ratio, smp.advantage, config.clip) * ratio;
          dist.accumulate_grad(tr.action, -dsurr / n, -config.entropy_coef / n, og);
          og.value = 2.0 * config.value_coef * verr / n;
          net.backward_into(params, cache, og, a.grad);
        }
      });

      nn::ParamSet grad = params.zeros_like();
      double pol = 0, val = 0, ent = 0, clipped = 0, kl = 0, dev = 0;
      for (const auto& a : acc) {
        grad.add_scaled(a.grad, 1.0);
        pol += a.policy;
        val += a.value;
        ent += a.entropy;
        clipped += a.clipped;
        kl += a.kl;
        dev = std::max(dev, a.max_dev);
      }
      const double loss = pol / n + config.value_coef * val / n - config.entropy_coef * ent / n;
      if (!std::isfinite(loss) || !grad.all_finite()) {
        std::ostringstream os;
        os << "non-finite loss in epoch " << epoch << " (policy " << pol / n << ", value "
           << val / n << ", entropy " << ent / n << ")";
        throw TrainingError(os.str());
      }
      if (first) {
        m.first_minibatch_ratio_dev = dev;
        first = false;
      }
      m.policy_loss += pol;
      m.value_loss += val;
      m.entropy += ent;
      m.clip_fraction += clipped;
      m.kl += kl;
      weight_total += n;
      epoch_entropy += ent;
      epoch_count += samples.size();

      nn::adam_step(params, grad, adam, adam_cfg);
    }
    m.epoch_entropy.push_back(epoch_count ? epoch_entropy / static_cast<double>(epoch_count) : 0.0);
  }
  if (weight_total > 0) {
    m.policy_loss /= weight_total;
    m.value_loss /= weight_total;
    m.entropy /= weight_total;
    m.clip_fraction /= weight_total;
    m.kl /= weight_total;
  }
  return m;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows) {
  std::ostringstream os;
  os << "iteration,mean_npv,max_npv,policy_loss,value_loss,entropy,clip_fraction,kl,sims_total\n";
  os << std::setprecision(12);
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.mean_npv << ',' << r.max_npv << ',' << r.policy_loss << ','
       << r.value_loss << ',' << r.entropy << ',' << r.clip_fraction << ',' << r.kl << ','
       << r.sims_total << '\n';
  }
  write_text(path, os.str());
}

std::vector<CurveRow> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<CurveRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    CurveRow r;
    if (!(is >> r.iteration >> r.mean_npv >> r.max_npv >> r.policy_loss >> r.value_loss >>
          r.entropy >> r.clip_fraction >> r.kl >> r.sims_total)) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": malformed curve row");
    }
    rows.push_back(r);
  }
  return rows;
}

TrainResult train(const nn::Network& net, const EnvConfig& env, const PPOConfig& config,
                  const TrainOptions& options, std::shared_ptr<SimulationCounter> counter) {
  config.validate();
  env.validate();
  if (options.iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (!counter) counter = std::make_shared<SimulationCounter>();

  TrainResult result;
  std::uint64_t sims_base = 0;
  namespace fs = std::filesystem;
  std::optional<fs::path> ckpt_path, curve_path;
  if (options.output_dir) {
    ckpt_path = *options.output_dir / kCheckpointFile;
    curve_path = *options.output_dir / kCurveFile;
    if (!options.resume) fs::create_directories(*options.output_dir);
  }

  if (options.resume) {
    if (!ckpt_path || !fs::exists(*ckpt_path))
      throw LifecycleError("resume requested but no checkpoint exists in the output directory");
    auto ck = nn::load_checkpoint(*ckpt_path, net);
    result.params = std::move(ck.params);
    result.adam = std::move(ck.adam);
    result.iterations_done = static_cast<int>(ck.iteration);
    sims_base = ck.sims_total;
    if (fs::exists(*curve_path)) {
      for (const auto& r : read_curve_csv(*curve_path))
        if (r.iteration <= result.iterations_done) result.curve.push_back(r);
    }
  } else {
    result.params = net.init_params(options.init_seed);
    result.adam = nn::AdamState::like(result.params);
  }

  const std::uint64_t episodes_before = counter->episodes();
  auto save = [&] {
    if (!ckpt_path) return;
    nn::Checkpoint ck;
    ck.spec_hash = net.spec_hash();
    ck.params = result.params;
    ck.adam = result.adam;
    ck.iteration = static_cast<std::uint64_t>(result.iterations_done);
    ck.sims_total = sims_base + (counter->episodes() - episodes_before);
    nn::save_checkpoint(*ckpt_path, ck);
  };

  CollectOptions copt;
  copt.workers = effective_workers(config.workers);
  copt.location_always_on = config.location_always_on;
  copt.reward_scale = config.reward_scale;

  if (curve_path) write_curve_csv(*curve_path, result.curve);
  while (result.iterations_done < options.iterations) {
    if (options.stop && options.stop->load()) {
      result.interrupted = true;
      break;
    }
    const int it = result.iterations_done + 1;
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.episodes_per_iter));
    for (std::size_t e = 0; e < seeds.size(); ++e)
      seeds[e] = episode_seed(config.seed, static_cast<std::uint64_t>(it), e);
    auto batch = collect(net, result.params, env, seeds, copt, counter);
    if (options.on_batch) {
      std::vector<double> npvs;
      for (const auto& ep : batch) npvs.push_back(ep.npv);
      options.on_batch(it, npvs);
    }
    const auto m = train_iteration(net, result.params, result.adam, batch, config,
                                   mix_seed(config.seed ^ 0x7261696eULL, static_cast<std::uint64_t>(it)));
    CurveRow row{it, m.mean_npv, m.max_npv, m.policy_loss, m.value_loss, m.entropy,
                 m.clip_fraction, m.kl, sims_base + (counter->episodes() - episodes_before)};
    result.curve.push_back(row);
    result.iterations_done = it;
    if (curve_path) write_curve_csv(*curve_path, result.curve);
    if (options.checkpoint_every > 0 && it % options.checkpoint_every == 0) save();
    if (options.on_iteration) options.on_iteration(row);
  }
  save();
  return result;
}

PolicyRollout greedy_rollout(const nn::Network& net, const nn::ParamSet& params,
                             const EnvConfig& env, const std::map<int, Action>& forced,
                             bool location_always_on, std::shared_ptr<SimulationCounter> counter) {
  for (const auto& [stage, action] : forced) {
    if (stage < 0 || stage >= env.stages)
      throw InvalidArgument("forced stage " + std::to_string(stage + 1) + " outside 1.." +
                            std::to_string(env.stages));
    if (action.decision < 0 || action.decision > 2)
      throw InvalidArgument("forced decision must be 0, 1 or 2");
  }
  FieldDevEnv e(env, std::move(counter));
  e.reset();
  PolicyRollout out;
  std::vector<double> rewards;
  while (!e.done()) {
    const auto obs = e.observation();
    const auto out_heads = net.forward(params, obs.maps, obs.vector);
    const ActionDistribution dist(out_heads, e.action_mask(), location_always_on);
    PolicyStage st;
    st.policy_action = dist.greedy();
    const auto f = forced.find(e.stage());
    st.forced = f != forced.end();
    st.action = st.forced ? f->second : st.policy_action;
    const auto step = e.step(st.action);
    st.reward = step.reward;
    st.collided = step.info.collided;
    rewards.push_back(step.reward);
    out.stages.push_back(st);
  }
  out.npv = episode_npv(rewards);
  out.final_state = e.state();
  return out;
}

}  // namespace fieldev
