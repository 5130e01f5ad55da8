#pragma once

// Off-policy actor-critic trainer: Retrace targets, truncated importance
// sampling with bias correction, critic regression, entropy bonus,
// linearised trust-region projection and the soft average-policy update.

#include <functional>

#include "acerlab/common.hpp"
#include "acerlab/dialenv.hpp"
#include "acerlab/policynet.hpp"
#include "acerlab/replay.hpp"

#include <nlohmann/json.hpp>

namespace acerlab {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

struct Hyperparameters {
  double alpha = 0.001;     // learning rate
  double beta = 0.99;       // average-policy soft-update weight
  double gamma = 0.99;      // discount
  double delta = 1.0;       // KL-increase bound
  double c = 5.0;           // IS truncation threshold (policy gradient)
  double lambda = 1.0;      // trace decay
  double trace_clip = 1.0;  // IS clip inside the Retrace traces
  int n = 1;                // training steps per episode
  int batch_size = 64;      // episodes per training step
  int replay_capacity = 2000;
  double entropy_coef = 0.01;
  double eps_start = 0.95;
  double eps_end = 0.0;
  bool store_mixed_mu = true;  // store the eps-mixed behaviour distribution
                               // (false: store raw pi as mu)
  int h1 = 130;
  int h2 = 50;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("gamma out of (0,1]");
    if (!(c > 0.0)) throw config_error("c must be > 0");
    if (!(delta > 0.0)) throw config_error("delta must be > 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw config_error("beta out of [0,1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw config_error("lambda out of [0,1]");
    if (n < 1) throw config_error("n must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"alpha", alpha},
            {"beta", beta},
            {"gamma", gamma},
            {"delta", delta},
            {"c", c},
            {"lambda", lambda},
            {"trace_clip", trace_clip},
            {"n", n},
            {"batch_size", batch_size},
            {"replay_capacity", replay_capacity},
            {"entropy_coef", entropy_coef},
            {"eps_start", eps_start},
            {"eps_end", eps_end},
            {"store_mixed_mu", store_mixed_mu},
            {"h1", h1},
            {"h2", h2}};
  }

  static Hyperparameters from_json(const nlohmann::json& j) {
    Hyperparameters h;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("alpha", h.alpha);
    get("beta", h.beta);
    get("gamma", h.gamma);
    get("delta", h.delta);
    get("c", h.c);
    get("lambda", h.lambda);
    get("trace_clip", h.trace_clip);
    get("n", h.n);
    get("batch_size", h.batch_size);
    get("replay_capacity", h.replay_capacity);
    get("entropy_coef", h.entropy_coef);
    get("eps_start", h.eps_start);
    get("eps_end", h.eps_end);
    get("store_mixed_mu", h.store_mixed_mu);
    get("h1", h.h1);
    get("h2", h.h2);
    h.validate();
    return h;
  }

  void save(std::ostream& os) const {
    io::write_f64(os, alpha);
    io::write_f64(os, beta);
    io::write_f64(os, gamma);
    io::write_f64(os, delta);
    io::write_f64(os, c);
    io::write_f64(os, lambda);
    io::write_f64(os, trace_clip);
    io::write_u32(os, std::uint32_t(n));
    io::write_u32(os, std::uint32_t(batch_size));
    io::write_u32(os, std::uint32_t(replay_capacity));
    io::write_f64(os, entropy_coef);
    io::write_f64(os, eps_start);
    io::write_f64(os, eps_end);
    io::write_u32(os, store_mixed_mu ? 1u : 0u);
    io::write_u32(os, std::uint32_t(h1));
    io::write_u32(os, std::uint32_t(h2));
  }

  static Hyperparameters load(std::istream& is) {
    Hyperparameters h;
    h.alpha = io::read_f64(is);
    h.beta = io::read_f64(is);
    h.gamma = io::read_f64(is);
    h.delta = io::read_f64(is);
    h.c = io::read_f64(is);
    h.lambda = io::read_f64(is);
    h.trace_clip = io::read_f64(is);
    h.n = int(io::read_u32(is));
    h.batch_size = int(io::read_u32(is));
    h.replay_capacity = int(io::read_u32(is));
    h.entropy_coef = io::read_f64(is);
    h.eps_start = io::read_f64(is);
    h.eps_end = io::read_f64(is);
    h.store_mixed_mu = io::read_u32(is) != 0;
    h.h1 = int(io::read_u32(is));
    h.h2 = int(io::read_u32(is));
    return h;
  }
};

// ---------------------------------------------------------------------------
// Estimator primitives
// ---------------------------------------------------------------------------

inline double is_weight(double pi_prob, double mu_prob) {
  if (mu_prob <= 0.0) throw input_error("is_weight: stored mu(a|b) is not positive");
  return pi_prob / mu_prob;
}

inline double truncate(double rho, double c) { return std::min(c, rho); }

// [(rho - c) / rho]_+ ; tends to 1 as rho -> inf
inline double bias_weight(double rho, double c) {
  if (rho <= c) return 0.0;
  return (rho - c) / rho;
}

// Backward Retrace recursion over one episode with terminal Q = V = 0.
// traces c_s = lambda * min(clip, rho_s).
inline Vec retrace_targets(const Vec& rewards, const Vec& rho, const Vec& q_taken, const Vec& v,
                           double gamma, double lambda, double clip = 1.0) {
  const int n = int(rewards.size());
  if (n == 0) throw input_error("retrace_targets: empty episode");
  Vec qret(std::size_t(n), 0.0);
  qret[std::size_t(n - 1)] = rewards[std::size_t(n - 1)];
  for (int t = n - 2; t >= 0; --t) {
    const double c_next = lambda * std::min(clip, rho[std::size_t(t + 1)]);
    qret[std::size_t(t)] = rewards[std::size_t(t)] + gamma * v[std::size_t(t + 1)] +
                           gamma * c_next * (qret[std::size_t(t + 1)] - q_taken[std::size_t(t + 1)]);
  }
  return qret;
}

// Lambda-return recursion R_t = r_t + (1-lambda) gamma V_{t+1}
//                              + lambda gamma rho_{t+1} R_{t+1};  R_last = r_last.
inline Vec lambda_returns(const Vec& rewards, const Vec& v, const Vec& rho, double gamma,
                          double lambda) {
  const int n = int(rewards.size());
  if (n == 0) throw input_error("lambda_returns: empty episode");
  Vec r(std::size_t(n), 0.0);
  r[std::size_t(n - 1)] = rewards[std::size_t(n - 1)];
  for (int t = n - 2; t >= 0; --t)
    r[std::size_t(t)] = rewards[std::size_t(t)] + (1.0 - lambda) * gamma * v[std::size_t(t + 1)] +
                        lambda * gamma * rho[std::size_t(t + 1)] * r[std::size_t(t + 1)];
  return r;
}

// Euclidean projection of g onto { z : k^T z <= delta }.
inline Vec trust_region_project(const Vec& g, const Vec& k, double delta) {
  const double kk = norm2_sq(k);
  if (kk <= 0.0) return g;
  const double s = std::max(0.0, (dot(k, g) - delta) / kk);
  Vec z = g;
  axpy(-s, k, z);
  return z;
}

// ---------------------------------------------------------------------------
// Per-episode analysis and gradients
// ---------------------------------------------------------------------------

// Everything the estimator derives from one episode at the current policy.
// actor_coeff[t][a] is the frozen coefficient multiplying log pi(a|b_t) in
// the surrogate objective (truncated-IS term at a_t plus bias-correction
// terms over all valid actions); the entropy bonus is not frozen and is
// handled separately.
struct EpisodeComputation {
  std::vector<PolicyOutput> out;   // forward results per step
  Vec rho;                         // IS weight of the taken action
  Vec rho_bar;                     // truncated at c
  Vec qret;                        // Retrace targets
  Vec advantage;                   // Q^ret - V
  std::vector<Vec> actor_coeff;
  Vec critic_coeff;                // 2 (Q^ret - Q(b_t, a_t)) at the taken action
};

inline EpisodeComputation analyze_episode(const NetworkParams& params, const EpisodeRecord& ep,
                                          const Hyperparameters& h) {
  const int n = ep.length();
  EpisodeComputation comp;
  comp.out.reserve(std::size_t(n));
  comp.rho.resize(std::size_t(n));
  comp.rho_bar.resize(std::size_t(n));
  Vec rewards(std::size_t(n), 0.0), q_taken(std::size_t(n), 0.0), v(std::size_t(n), 0.0);
  for (int t = 0; t < n; ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    comp.out.push_back(forward(params, tr.features, tr.mask));
    const PolicyOutput& o = comp.out.back();
    comp.rho[std::size_t(t)] = is_weight(o.pi[std::size_t(tr.action)], tr.mu_action);
    comp.rho_bar[std::size_t(t)] = truncate(comp.rho[std::size_t(t)], h.c);
    rewards[std::size_t(t)] = tr.reward;
    q_taken[std::size_t(t)] = o.q[std::size_t(tr.action)];
    v[std::size_t(t)] = o.v;
  }
  comp.qret = retrace_targets(rewards, comp.rho, q_taken, v, h.gamma, h.lambda, h.trace_clip);
  comp.advantage.resize(std::size_t(n));
  comp.actor_coeff.resize(std::size_t(n));
  comp.critic_coeff.resize(std::size_t(n));
  for (int t = 0; t < n; ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    const PolicyOutput& o = comp.out[std::size_t(t)];
    comp.advantage[std::size_t(t)] = comp.qret[std::size_t(t)] - o.v;
    Vec coeff(o.pi.size(), 0.0);
    coeff[std::size_t(tr.action)] =
        comp.rho_bar[std::size_t(t)] * comp.advantage[std::size_t(t)];
    for (std::size_t a = 0; a < o.pi.size(); ++a) {
      if (!tr.mask[a] || o.pi[a] <= 0.0) continue;
      // bias-correction: actions the behaviour policy could not reach get
      // the limiting weight 1
      const double w = tr.mu[a] > 0.0 ? bias_weight(o.pi[a] / tr.mu[a], h.c) : 1.0;
      if (w == 0.0) continue;
      coeff[a] += o.pi[a] * w * (o.q[a] - o.v);
    }
    comp.actor_coeff[std::size_t(t)] = std::move(coeff);
    comp.critic_coeff[std::size_t(t)] = 2.0 * (comp.qret[std::size_t(t)] - q_taken[std::size_t(t)]);
  }
  return comp;
}

// Accumulate the actor ascent gradient g and critic ascent gradient dtheta
// for one episode (summed over transitions).  Returns the episode length.
inline int accumulate_episode_gradients(const NetworkParams& params, const EpisodeRecord& ep,
                                        const Hyperparameters& h, Vec& g, Vec& dtheta) {
  const int n = ep.length();
  EpisodeComputation comp = analyze_episode(params, ep, h);
  Vec u_q;
  for (int t = 0; t < n; ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    ForwardCache c;
    PolicyOutput o = forward(params, tr.features, tr.mask, &c);
    Vec u_pi = comp.actor_coeff[std::size_t(t)];
    if (h.entropy_coef != 0.0) {
      for (std::size_t a = 0; a < o.pi.size(); ++a)
        if (tr.mask[a] && o.pi[a] > 0.0)
          u_pi[a] += h.entropy_coef * (-o.pi[a] * (std::log(o.pi[a]) + 1.0));
    }
    u_q.assign(o.pi.size(), 0.0);
    u_q[std::size_t(tr.action)] = comp.critic_coeff[std::size_t(t)];
    Vec zero(o.pi.size(), 0.0);
    backward_accum(params, c, tr.mask, o.pi, u_pi, zero, g);
    backward_accum(params, c, tr.mask, o.pi, zero, u_q, dtheta);
  }
  return n;
}

// Surrogate objectives with frozen coefficients; their finite differences
// match the accumulated gradients (used by the gradient test suite).
inline double actor_surrogate(const NetworkParams& params, const EpisodeRecord& ep,
                              const Hyperparameters& h, const EpisodeComputation& frozen) {
  double s = 0.0;
  for (int t = 0; t < ep.length(); ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    PolicyOutput o = forward(params, tr.features, tr.mask);
    const Vec& coeff = frozen.actor_coeff[std::size_t(t)];
    for (std::size_t a = 0; a < o.pi.size(); ++a) {
      if (!tr.mask[a] || o.pi[a] <= 0.0) continue;
      if (coeff[a] != 0.0) s += coeff[a] * std::log(o.pi[a]);
      s += h.entropy_coef * (-o.pi[a] * std::log(o.pi[a]));
    }
  }
  return s;
}

inline double critic_surrogate(const NetworkParams& params, const EpisodeRecord& ep,
                               const EpisodeComputation& frozen) {
  double s = 0.0;
  for (int t = 0; t < ep.length(); ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    PolicyOutput o = forward(params, tr.features, tr.mask);
    const double d = frozen.qret[std::size_t(t)] - o.q[std::size_t(tr.action)];
    s -= d * d;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct EpisodeLogRow {
  int episode = 0;
  double eps = 0.0;
  double ret = 0.0;
  bool success = false;
  int turns = 0;
};

struct TrainStepStats {
  double kl = 0.0;
  double kg = 0.0;        // k^T g before projection
  double kz = 0.0;        // k^T z after projection
  double k_norm_sq = 0.0;
  int transitions = 0;
};

class AcerTrainer {
 public:
  AcerTrainer(DialogueEnv& env, Hyperparameters hyper, std::uint64_t seed)
      : env_(&env), hyper_(hyper), rng_(derive_seed(seed, 0x7261696eULL)), seed_(seed) {
    hyper_.validate();
    NetworkDims dims;
    dims.input = env.feature_dim();
    dims.h1 = hyper.h1;
    dims.h2 = hyper.h2;
    dims.summary_actions = env.actions().n_summary();
    dims.payload_actions =
        env.config().mode == ActionMode::master ? env.actions().n_payload() : 0;
    current_ = NetworkParams::init(dims, derive_seed(seed, 0x696e6974ULL));
    avg_ = current_;  // omega_a := omega at t = 0
    adam_ = AdamState::fresh(current_.size());
    memory_ = ReplayMemory(hyper.replay_capacity);
  }

  const NetworkParams& params() const { return current_; }
  const NetworkParams& avg_params() const { return avg_; }
  const ReplayMemory& memory() const { return memory_; }
  const Hyperparameters& hyper() const { return hyper_; }
  int episodes_done() const { return episodes_done_; }

  double epsilon_at(int episode, int total) const {
    if (total <= 1) return hyper_.eps_end;
    double t = double(episode) / double(total - 1);
    return hyper_.eps_start + (hyper_.eps_end - hyper_.eps_start) * t;
  }

  // Generate one eps-greedy episode from the environment and store it.
  EpisodeRecord generate_episode(double eps) {
    Rng ep_rng(derive_seed(seed_, std::uint64_t(episodes_done_) + 1));
    auto [belief, mask] = env_->reset(derive_seed(seed_, 0x656e76ULL + std::uint64_t(episodes_done_)));
    EpisodeRecord ep;
    const bool master = env_->config().mode == ActionMode::master;
    while (!env_->done() && ep.length() < env_->config().max_turns) {
      Vec features = env_->featurize(belief);
      PolicyOutput o = forward(current_, features, mask);
      const int na = int(o.pi.size());
      // greedy action among valid
      int greedy = -1;
      for (int a = 0; a < na; ++a)
        if (mask[std::size_t(a)] && (greedy < 0 || o.pi[std::size_t(a)] > o.pi[std::size_t(greedy)]))
          greedy = a;
      if (greedy < 0) throw invalid_mask_error("no valid action");
      const int n_valid = count_true(mask);
      // behaviour distribution
      Vec mu(std::size_t(na), 0.0);
      for (int a = 0; a < na; ++a)
        if (mask[std::size_t(a)]) mu[std::size_t(a)] = eps / double(n_valid);
      mu[std::size_t(greedy)] += 1.0 - eps;
      // sample from mu
      int action = greedy;
      if (eps > 0.0 && ep_rng.uniform() < eps) {
        int pick = ep_rng.uniform_int(n_valid);
        for (int a = 0; a < na; ++a) {
          if (!mask[std::size_t(a)]) continue;
          if (pick-- == 0) {
            action = a;
            break;
          }
        }
      }
      Transition tr;
      tr.features = std::move(features);
      tr.action = action;
      tr.mask = mask;
      if (hyper_.store_mixed_mu) {
        tr.mu_action = mu[std::size_t(action)];
        tr.mu = std::move(mu);
      } else {
        tr.mu_action = o.pi[std::size_t(action)];
        tr.mu = o.pi;
      }
      MasterAction act = master ? env_->actions().master_at(action)
                                : env_->summary_to_master(
                                      belief, env_->actions().summary_at(action));
      auto res = env_->step(act);
      tr.reward = res.reward;
      belief = std::move(res.belief);
      mask = std::move(res.mask);
      ep.transitions.push_back(std::move(tr));
      if (res.done) break;
    }
    ep.finalize();
    return ep;
  }

  TrainStepStats train_step() {
    TrainStepStats stats;
    std::vector<int> batch = memory_.sample(hyper_.batch_size, rng_);
    if (batch.empty()) return stats;
    Vec g(current_.size(), 0.0), dtheta(current_.size(), 0.0);
    int total = 0;
    std::vector<Vec> beliefs;
    std::vector<Mask> masks;
    for (int idx : batch) {
      const EpisodeRecord& ep = memory_.episode(idx);
      total += accumulate_episode_gradients(current_, ep, hyper_, g, dtheta);
      for (const auto& tr : ep.transitions) {
        beliefs.push_back(tr.features);
        masks.push_back(tr.mask);
      }
    }
    scale(g, 1.0 / double(total));
    scale(dtheta, 1.0 / double(total));
    Vec k;
    stats.kl = kl_and_grad(avg_, current_, beliefs, masks, k);
    Vec z = trust_region_project(g, k, hyper_.delta);
    stats.kg = dot(k, g);
    stats.kz = dot(k, z);
    stats.k_norm_sq = norm2_sq(k);
    stats.transitions = total;
    axpy(1.0, dtheta, z);  // combined ascent direction
    if (!all_finite(z)) throw numeric_error("train_step: non-finite update");
    adam_step(current_, z, adam_, hyper_.alpha);
    soft_update_average(avg_, current_, hyper_.beta);
    return stats;
  }

  using MilestoneCallback = std::function<void(int /*episodes_done*/, const AcerTrainer&)>;
  using LogCallback = std::function<void(const EpisodeLogRow&)>;

  void run(int total_dialogues, int milestone_size = 0, MilestoneCallback on_milestone = {},
           LogCallback on_log = {}) {
    for (int d = episodes_done_; d < total_dialogues; ++d) {
      const double eps = epsilon_at(d, total_dialogues);
      EpisodeRecord ep = generate_episode(eps);
      EpisodeLogRow row{d, eps, ep.total_return, env_->last_success(), env_->turns()};
      memory_.store(std::move(ep));
      for (int i = 0; i < hyper_.n; ++i) train_step();
      ++episodes_done_;
      if (on_log) on_log(row);
      if (on_milestone && milestone_size > 0 && episodes_done_ % milestone_size == 0)
        on_milestone(episodes_done_, *this);
    }
  }

  // ---- snapshots ----------------------------------------------------------

  void save(std::ostream& os) const {
    io::write_u32(os, 0x414c534eU);  // "ALSN"
    io::write_u32(os, 1u);
    hyper_.save(os);
    io::write_u32(os, std::uint32_t(episodes_done_));
    io::write_u64(os, seed_);
    io::write_u64(os, rng_.state());
    current_.save(os);
    avg_.save(os);
    adam_.save(os);
    memory_.save(os);
  }

  void load(std::istream& is) {
    if (io::read_u32(is) != 0x414c534eU) throw input_error("bad snapshot magic");
    if (io::read_u32(is) != 1u) throw input_error("unsupported snapshot version");
    hyper_ = Hyperparameters::load(is);
    episodes_done_ = int(io::read_u32(is));
    seed_ = io::read_u64(is);
    rng_.set_state(io::read_u64(is));
    current_ = NetworkParams::load(is);
    avg_ = NetworkParams::load(is);
    adam_ = AdamState::load(is);
    memory_ = ReplayMemory::load(is);
  }

 private:
  DialogueEnv* env_;
  Hyperparameters hyper_;
  NetworkParams current_{};
  NetworkParams avg_{};
  AdamState adam_{};
  ReplayMemory memory_{2000};
  Rng rng_;
  std::uint64_t seed_;
  int episodes_done_ = 0;
};

}  // namespace acerlab
