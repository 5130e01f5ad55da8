#pragma once

// Experiment harness: the milestone training protocol over multiple seeds,
// greedy evaluation, cross-seed aggregation with 95% confidence intervals,
// deterministic CSV output and the evaluation-time error-rate sweep.
// Seeds can run on a small worker pool (ACER_LAB_THREADS); results are
// merged in seed order so the output does not depend on scheduling.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "acerlab/acer.hpp"
#include "acerlab/gpsarsa.hpp"

namespace acerlab {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string agent = "acer";  // acer | gpsarsa | random
  Hyperparameters hyper;
  GpConfig gp;
  double error_rate = 0.0;
  bool mask_enabled = true;
  ActionMode mode = ActionMode::summary;
  int total_dialogues = 4000;
  int milestones = 20;
  int eval_dialogues = 100;
  int n_seeds = 15;
  std::uint64_t base_seed = 1;

  int milestone_size() const { return total_dialogues / milestones; }

  void validate() const {
    if (agent != "acer" && agent != "gpsarsa" && agent != "random")
      throw config_error("unknown agent: " + agent);
    if (milestones < 1 || total_dialogues < milestones)
      throw config_error("bad milestone layout");
    if (total_dialogues % milestones != 0)
      throw config_error("total_dialogues must be divisible by milestones");
    if (eval_dialogues < 1) throw config_error("eval_dialogues must be >= 1");
    if (n_seeds < 1) throw config_error("n_seeds must be >= 1");
    hyper.validate();
    gp.validate();
  }

  EnvConfig env_config(std::uint64_t seed = 0) const {
    EnvConfig e;
    e.error_rate = error_rate;
    e.mask_enabled = mask_enabled;
    e.mode = mode;
    e.seed = seed;
    return e;
  }

  nlohmann::json to_json() const {
    return {{"agent", agent},
            {"hyper", hyper.to_json()},
            {"gp",
             {{"gamma", gp.gamma}, {"sigma2", gp.sigma2}, {"nu", gp.nu}, {"jitter", gp.jitter}}},
            {"error_rate", error_rate},
            {"mask_enabled", mask_enabled},
            {"mode", mode == ActionMode::master ? "master" : "summary"},
            {"total_dialogues", total_dialogues},
            {"milestones", milestones},
            {"eval_dialogues", eval_dialogues},
            {"n_seeds", n_seeds},
            {"base_seed", base_seed}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("agent", c.agent);
    if (j.contains("hyper")) c.hyper = Hyperparameters::from_json(j.at("hyper"));
    if (j.contains("gp")) {
      const auto& g = j.at("gp");
      if (g.contains("gamma")) c.gp.gamma = g.at("gamma").get<double>();
      if (g.contains("sigma2")) c.gp.sigma2 = g.at("sigma2").get<double>();
      if (g.contains("nu")) c.gp.nu = g.at("nu").get<double>();
      if (g.contains("jitter")) c.gp.jitter = g.at("jitter").get<double>();
    }
    get("error_rate", c.error_rate);
    get("mask_enabled", c.mask_enabled);
    if (j.contains("mode")) {
      std::string m = j.at("mode").get<std::string>();
      if (m == "master")
        c.mode = ActionMode::master;
      else if (m == "summary")
        c.mode = ActionMode::summary;
      else
        throw config_error("unknown mode: " + m);
    }
    get("total_dialogues", c.total_dialogues);
    get("milestones", c.milestones);
    get("eval_dialogues", c.eval_dialogues);
    get("n_seeds", c.n_seeds);
    get("base_seed", c.base_seed);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

inline int harness_threads() {
  const char* s = std::getenv("ACER_LAB_THREADS");
  if (!s || !*s) return 1;
  int n = std::atoi(s);
  if (n < 1) throw config_error("ACER_LAB_THREADS must be a positive integer");
  return n;
}

// Run fn(i) for i in [0, n); each index runs exactly once.  Exceptions are
// captured and rethrown on the caller's thread.
template <typename Fn>
inline void parallel_for(int n, Fn fn) {
  const int workers = std::min(harness_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct MilestonePoint {
  double success = 0.0;
  double reward = 0.0;
  double turns = 0.0;
};

// Greedy rollouts of a trained network on a fresh environment.
inline MilestonePoint evaluate_greedy(const Ontology& ont, const EnvConfig& env_cfg,
                                      const NetworkParams& params, int n_dialogues,
                                      std::uint64_t eval_seed) {
  DialogueEnv env(ont, env_cfg);
  const bool master = env_cfg.mode == ActionMode::master;
  MilestonePoint p;
  for (int d = 0; d < n_dialogues; ++d) {
    auto [belief, mask] = env.reset(derive_seed(eval_seed, std::uint64_t(d)));
    double ret = 0.0;
    while (!env.done()) {
      PolicyOutput o = forward(params, env.featurize(belief), mask);
      int best = -1;
      for (int a = 0; a < int(o.pi.size()); ++a)
        if (mask[std::size_t(a)] && (best < 0 || o.pi[std::size_t(a)] > o.pi[std::size_t(best)]))
          best = a;
      MasterAction act = master ? env.actions().master_at(best)
                                : env.summary_to_master(belief, env.actions().summary_at(best));
      auto res = env.step(act);
      ret += res.reward;
      belief = std::move(res.belief);
      mask = std::move(res.mask);
      if (res.done) break;
    }
    p.success += env.last_success() ? 1.0 : 0.0;
    p.reward += ret;
    p.turns += env.turns();
  }
  p.success /= n_dialogues;
  p.reward /= n_dialogues;
  p.turns /= n_dialogues;
  return p;
}

// Uniform-random policy over the valid actions (no learning).
inline MilestonePoint evaluate_random(const Ontology& ont, const EnvConfig& env_cfg,
                                      int n_dialogues, std::uint64_t eval_seed) {
  DialogueEnv env(ont, env_cfg);
  const bool master = env_cfg.mode == ActionMode::master;
  Rng rng(derive_seed(eval_seed, 0x72616e64ULL));
  MilestonePoint p;
  for (int d = 0; d < n_dialogues; ++d) {
    auto [belief, mask] = env.reset(derive_seed(eval_seed, std::uint64_t(d)));
    double ret = 0.0;
    while (!env.done()) {
      int n_valid = count_true(mask);
      int pick = rng.uniform_int(n_valid);
      int action = -1;
      for (int a = 0; a < int(mask.size()); ++a) {
        if (!mask[std::size_t(a)]) continue;
        if (pick-- == 0) {
          action = a;
          break;
        }
      }
      MasterAction act = master ? env.actions().master_at(action)
                                : env.summary_to_master(belief, env.actions().summary_at(action));
      auto res = env.step(act);
      ret += res.reward;
      belief = std::move(res.belief);
      mask = std::move(res.mask);
      if (res.done) break;
    }
    p.success += env.last_success() ? 1.0 : 0.0;
    p.reward += ret;
    p.turns += env.turns();
  }
  p.success /= n_dialogues;
  p.reward /= n_dialogues;
  p.turns /= n_dialogues;
  return p;
}

// Greedy (posterior-mean) rollouts of a GP model.
inline MilestonePoint evaluate_gp(const Ontology& ont, const EnvConfig& env_cfg,
                                  const GpModel& model, int n_dialogues,
                                  std::uint64_t eval_seed) {
  DialogueEnv env(ont, env_cfg);
  const bool master = env_cfg.mode == ActionMode::master;
  MilestonePoint p;
  for (int d = 0; d < n_dialogues; ++d) {
    auto [belief, mask] = env.reset(derive_seed(eval_seed, std::uint64_t(d)));
    double ret = 0.0;
    while (!env.done()) {
      Vec features = env.featurize(belief);
      int best = -1;
      double best_val = 0.0;
      for (int a = 0; a < int(mask.size()); ++a) {
        if (!mask[std::size_t(a)]) continue;
        GpPoint x;
        x.features = features;
        x.features.push_back(1.0);
        if (master) {
          MasterAction ma = env.actions().master_at(a);
          x.summary = env.actions().index_summary(ma.summary);
          x.payload = ma.payload;
          x.has_payload = ma.has_payload;
        } else {
          x.summary = a;
        }
        double val = model.posterior(x).mean;
        if (best < 0 || val > best_val) {
          best = a;
          best_val = val;
        }
      }
      MasterAction act = master ? env.actions().master_at(best)
                                : env.summary_to_master(belief, env.actions().summary_at(best));
      auto res = env.step(act);
      ret += res.reward;
      belief = std::move(res.belief);
      mask = std::move(res.mask);
      if (res.done) break;
    }
    p.success += env.last_success() ? 1.0 : 0.0;
    p.reward += ret;
    p.turns += env.turns();
  }
  p.success /= n_dialogues;
  p.reward /= n_dialogues;
  p.turns /= n_dialogues;
  return p;
}

// ---------------------------------------------------------------------------
// Per-seed runs
// ---------------------------------------------------------------------------

struct SeedOutcome {
  std::vector<MilestonePoint> milestones;
  NetworkParams final_params;  // trained network (acer only)
};

inline SeedOutcome run_acer_seed(const ExperimentConfig& cfg, const Ontology& ont,
                                 int seed_index) {
  const std::uint64_t seed = derive_seed(cfg.base_seed, std::uint64_t(seed_index));
  DialogueEnv env(ont, cfg.env_config(seed));
  AcerTrainer trainer(env, cfg.hyper, seed);
  SeedOutcome out;
  trainer.run(cfg.total_dialogues, cfg.milestone_size(),
              [&](int /*episodes*/, const AcerTrainer& t) {
                out.milestones.push_back(evaluate_greedy(
                    ont, cfg.env_config(), t.params(), cfg.eval_dialogues,
                    derive_seed(seed, 0x6576616cULL + std::uint64_t(out.milestones.size()))));
              });
  out.final_params = trainer.params();
  return out;
}

inline SeedOutcome run_random_seed(const ExperimentConfig& cfg, const Ontology& ont,
                                   int seed_index) {
  const std::uint64_t seed = derive_seed(cfg.base_seed, std::uint64_t(seed_index));
  SeedOutcome out;
  for (int m = 0; m < cfg.milestones; ++m)
    out.milestones.push_back(evaluate_random(ont, cfg.env_config(), cfg.eval_dialogues,
                                             derive_seed(seed, 0x6576616cULL + std::uint64_t(m))));
  return out;
}

inline SeedOutcome run_gpsarsa_seed(const ExperimentConfig& cfg, const Ontology& ont,
                                    int seed_index) {
  const std::uint64_t seed = derive_seed(cfg.base_seed, std::uint64_t(seed_index));
  DialogueEnv env(ont, cfg.env_config(seed));
  GpSarsaAgent agent(env, cfg.gp, seed);
  SeedOutcome out;
  const int ms = cfg.milestone_size();
  for (int d = 0; d < cfg.total_dialogues; ++d) {
    agent.run_episode(true, false);
    if ((d + 1) % ms == 0)
      out.milestones.push_back(evaluate_gp(
          ont, cfg.env_config(), agent.model(), cfg.eval_dialogues,
          derive_seed(seed, 0x6576616cULL + std::uint64_t(out.milestones.size()))));
  }
  return out;
}

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<SeedOutcome> seeds;        // in seed order
  std::vector<std::string> seed_errors;  // "" = seed completed

  bool all_ok() const {
    for (const auto& e : seed_errors)
      if (!e.empty()) return false;
    return true;
  }
};

// A numeric failure in one seed is recorded and the remaining seeds still
// run; the caller decides the exit status from all_ok().
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Ontology& ont) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  res.seeds.resize(std::size_t(cfg.n_seeds));
  res.seed_errors.assign(std::size_t(cfg.n_seeds), "");
  parallel_for(cfg.n_seeds, [&](int i) {
    try {
      if (cfg.agent == "acer")
        res.seeds[std::size_t(i)] = run_acer_seed(cfg, ont, i);
      else if (cfg.agent == "gpsarsa")
        res.seeds[std::size_t(i)] = run_gpsarsa_seed(cfg, ont, i);
      else
        res.seeds[std::size_t(i)] = run_random_seed(cfg, ont, i);
    } catch (const std::exception& e) {
      res.seed_errors[std::size_t(i)] = e.what();
      res.seeds[std::size_t(i)] = SeedOutcome{};
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Aggregation and output
// ---------------------------------------------------------------------------

struct Aggregate {
  double mean = 0.0;
  bool has_ci = false;
  double ci95 = 0.0;  // 1.96 * sd / sqrt(n), sample sd
};

inline Aggregate aggregate_ci(const Vec& values) {
  Aggregate a;
  const int n = int(values.size());
  if (n == 0) throw input_error("aggregate_ci: no values");
  for (double v : values) a.mean += v;
  a.mean /= n;
  if (n < 2) return a;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.has_ci = true;
  a.ci95 = 1.96 * std::sqrt(ss / double(n - 1)) / std::sqrt(double(n));
  return a;
}

namespace detail {

inline void append_agg(std::string& line, const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%.6f,", a.mean);
  line += buf;
  if (a.has_ci) {
    std::snprintf(buf, sizeof buf, "%.6f", a.ci95);
    line += buf;
  } else {
    line += "na";
  }
}

}  // namespace detail

inline std::string milestone_csv(const ExperimentResult& res) {
  std::string out =
      "milestone,dialogues,success_mean,success_ci95,reward_mean,reward_ci95,"
      "turns_mean,turns_ci95\n";
  const int M = res.config.milestones;
  for (int m = 0; m < M; ++m) {
    Vec succ, rew, trn;
    for (const auto& s : res.seeds) {
      if (int(s.milestones.size()) <= m) continue;  // failed seed
      succ.push_back(s.milestones[std::size_t(m)].success);
      rew.push_back(s.milestones[std::size_t(m)].reward);
      trn.push_back(s.milestones[std::size_t(m)].turns);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%d", m + 1, (m + 1) * res.config.milestone_size());
    std::string line = buf;
    detail::append_agg(line, aggregate_ci(succ));
    detail::append_agg(line, aggregate_ci(rew));
    detail::append_agg(line, aggregate_ci(trn));
    line += "\n";
    out += line;
  }
  return out;
}

// Evaluate trained networks across a range of semantic error rates.
struct SweepRow {
  double error_rate = 0.0;
  Aggregate success, reward, turns;
};

inline std::vector<SweepRow> error_rate_sweep(const ExperimentConfig& cfg, const Ontology& ont,
                                              const std::vector<NetworkParams>& nets,
                                              const Vec& error_rates) {
  if (nets.empty()) throw input_error("error_rate_sweep: no trained networks");
  std::vector<SweepRow> rows(error_rates.size());
  parallel_for(int(error_rates.size()), [&](int i) {
    EnvConfig env_cfg = cfg.env_config();
    env_cfg.error_rate = error_rates[std::size_t(i)];
    Vec succ, rew, trn;
    for (std::size_t s = 0; s < nets.size(); ++s) {
      MilestonePoint p =
          evaluate_greedy(ont, env_cfg, nets[s], cfg.eval_dialogues,
                          derive_seed(cfg.base_seed, 0x73776565ULL + 131 * s + std::size_t(i)));
      succ.push_back(p.success);
      rew.push_back(p.reward);
      trn.push_back(p.turns);
    }
    rows[std::size_t(i)] = {error_rates[std::size_t(i)], aggregate_ci(succ), aggregate_ci(rew),
                            aggregate_ci(trn)};
  });
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "error_rate,success_mean,success_ci95,reward_mean,reward_ci95,turns_mean,turns_ci95\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", r.error_rate);
    std::string line = buf;
    detail::append_agg(line, r.success);
    detail::append_agg(line, r.reward);
    detail::append_agg(line, r.turns);
    line += "\n";
    out += line;
  }
  return out;
}

inline nlohmann::json experiment_manifest(const ExperimentResult& res,
                                          const std::string& ontology_name) {
  nlohmann::json j;
  j["config"] = res.config.to_json();
  j["ontology"] = ontology_name;
  j["seeds"] = res.config.n_seeds;
  nlohmann::json finals = nlohmann::json::array();
  for (const auto& s : res.seeds) {
    if (s.milestones.empty()) continue;
    finals.push_back(s.milestones.back().success);
  }
  j["final_success_per_seed"] = finals;
  j["seed_errors"] = res.seed_errors;
  return j;
}

}  // namespace acerlab
