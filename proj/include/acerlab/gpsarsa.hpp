#pragma once

// Gaussian-process SARSA baseline.  Linear belief kernel times an action
// delta (with a payload-overlap factor in the master space), dictionary
// sparsification by the kernel residual, a subset-of-regressors posterior
// over temporal-difference rows and Thompson-style action selection.

#include "acerlab/common.hpp"
#include "acerlab/dialenv.hpp"

namespace acerlab {

// ---------------------------------------------------------------------------
// Kernel
// ---------------------------------------------------------------------------

// One state-action point.  The belief feature vector is augmented with a
// constant 1 by the agent so the kernel can express biases.
struct GpPoint {
  Vec features;
  int summary = 0;            // summary-action index
  std::uint16_t payload = 0;  // informable-slot bitmask (inform actions)
  bool has_payload = false;
};

// Overlap between the delivered slot sets, counting the implicit name slot:
// |A  ^ B| / sqrt(|A| |B|).  Non-inform actions agree exactly or not at all.
inline double payload_similarity(std::uint16_t a, std::uint16_t b) {
  int na = 1, nb = 1, common = 1;  // the name slot is always delivered
  for (int s = 0; s < 16; ++s) {
    const bool ba = a & (1u << s), bb = b & (1u << s);
    na += ba;
    nb += bb;
    common += ba && bb;
  }
  return double(common) / std::sqrt(double(na) * double(nb));
}

inline double gp_kernel(const GpPoint& x, const GpPoint& y) {
  if (x.summary != y.summary) return 0.0;
  double k = dot(x.features, y.features);
  if (x.has_payload && y.has_payload) k *= payload_similarity(x.payload, y.payload);
  return k;
}

// ---------------------------------------------------------------------------
// Dense symmetric helpers (row-major, small dimensions)
// ---------------------------------------------------------------------------

namespace detail {

// In-place Cholesky A = L L^T (lower).  Returns false if not positive
// definite.
inline bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[std::size_t(i) * n + j];
      for (int k = 0; k < j; ++k) s -= a[std::size_t(i) * n + k] * a[std::size_t(j) * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        a[std::size_t(i) * n + j] = std::sqrt(s);
      } else {
        a[std::size_t(i) * n + j] = s / a[std::size_t(j) * n + j];
      }
    }
    for (int j = i + 1; j < n; ++j) a[std::size_t(i) * n + j] = 0.0;
  }
  return true;
}

// Solve L L^T x = b given the Cholesky factor.
inline Vec chol_solve(const std::vector<double>& L, int n, const Vec& b) {
  Vec y(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double s = b[std::size_t(i)];
    for (int k = 0; k < i; ++k) s -= L[std::size_t(i) * n + k] * y[std::size_t(k)];
    y[std::size_t(i)] = s / L[std::size_t(i) * n + i];
  }
  Vec x(std::size_t(n), 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[std::size_t(i)];
    for (int k = i + 1; k < n; ++k) s -= L[std::size_t(k) * n + i] * x[std::size_t(k)];
    x[std::size_t(i)] = s / L[std::size_t(i) * n + i];
  }
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct GpConfig {
  double gamma = 0.99;
  double sigma2 = 1.0;  // TD noise variance
  double nu = 0.1;      // dictionary admission threshold
  double jitter = 1e-8;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("gamma out of (0,1]");
    if (sigma2 <= 0.0) throw config_error("sigma2 must be > 0");
    if (nu < 0.0) throw config_error("nu must be >= 0");
  }
};

class GpModel {
 public:
  explicit GpModel(GpConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const GpConfig& config() const { return cfg_; }
  int dict_size() const { return int(dict_.size()); }
  const GpPoint& dict_point(int i) const { return dict_[std::size_t(i)]; }
  const std::vector<double>& kdd() const { return kdd_; }

  Vec k_vec(const GpPoint& x) const {
    Vec k(dict_.size());
    for (std::size_t i = 0; i < dict_.size(); ++i) k[i] = gp_kernel(x, dict_[i]);
    return k;
  }

  // Kernel residual of x against the dictionary span.
  double residual(const GpPoint& x) const {
    const double kxx = gp_kernel(x, x);
    if (dict_.empty()) return kxx;
    Vec k = k_vec(x);
    Vec a = detail::chol_solve(kdd_chol_, dict_size(), k);
    return kxx - dot(k, a);
  }

  // Admit x when its residual exceeds nu.  Returns true if admitted.
  bool maybe_admit(const GpPoint& x) {
    if (residual(x) <= cfg_.nu) return false;
    const int n = dict_size();
    std::vector<double> kdd(std::size_t(n + 1) * (n + 1));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) kdd[std::size_t(i) * (n + 1) + j] = kdd_[std::size_t(i) * n + j];
    for (int i = 0; i < n; ++i) {
      const double k = gp_kernel(x, dict_[std::size_t(i)]);
      kdd[std::size_t(i) * (n + 1) + n] = k;
      kdd[std::size_t(n) * (n + 1) + i] = k;
    }
    kdd[std::size_t(n) * (n + 1) + n] = gp_kernel(x, x) + cfg_.jitter;
    std::vector<double> chol = kdd;
    if (!detail::cholesky(chol, n + 1))
      throw numeric_error("gp: dictionary kernel matrix lost positive definiteness");
    dict_.push_back(x);
    kdd_ = std::move(kdd);
    kdd_chol_ = std::move(chol);
    // pad the accumulated statistics
    std::vector<double> m(std::size_t(n + 1) * (n + 1), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m[std::size_t(i) * (n + 1) + j] = m_[std::size_t(i) * n + j];
    m_ = std::move(m);
    b_.push_back(0.0);
    posterior_fresh_ = false;
    return true;
  }

  // Fold one episode into the posterior.  Temporal-difference rows
  //   h_t = k_D(x_t) - gamma k_D(x_{t+1}),   h_last = k_D(x_last)
  // regress the immediate rewards; terminal value is zero.
  void episode_update(const std::vector<GpPoint>& xs, const Vec& rewards) {
    if (xs.size() != rewards.size() || xs.empty())
      throw input_error("gp update: empty or mismatched episode");
    for (const auto& x : xs) maybe_admit(x);
    const int n = dict_size();
    const std::size_t T = xs.size();
    std::vector<Vec> kd(T);
    for (std::size_t t = 0; t < T; ++t) kd[t] = k_vec(xs[t]);
    for (std::size_t t = 0; t < T; ++t) {
      Vec h = kd[t];
      if (t + 1 < T) axpy(-cfg_.gamma, kd[t + 1], h);
      for (int i = 0; i < n; ++i) {
        b_[std::size_t(i)] += h[std::size_t(i)] * rewards[t];
        for (int j = 0; j <= i; ++j) {
          const double v = h[std::size_t(i)] * h[std::size_t(j)];
          m_[std::size_t(i) * n + j] += v;
          if (i != j) m_[std::size_t(j) * n + i] += v;
        }
      }
    }
    posterior_fresh_ = false;
  }

  // Posterior over the dictionary weights: precision P = K_DD + M / sigma2,
  // mean w = P^-1 b / sigma2.  Q(x) ~ N(k_D(x)^T w, k_D(x)^T P^-1 k_D(x)).
  void refresh_posterior() const {
    const int n = dict_size();
    p_chol_.assign(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        p_chol_[std::size_t(i) * n + j] =
            kdd_[std::size_t(i) * n + j] + m_[std::size_t(i) * n + j] / cfg_.sigma2;
    for (int i = 0; i < n; ++i) p_chol_[std::size_t(i) * n + i] += cfg_.jitter;
    if (n > 0 && !detail::cholesky(p_chol_, n))
      throw numeric_error("gp: posterior precision lost positive definiteness");
    Vec rhs = b_;
    scale(rhs, 1.0 / cfg_.sigma2);
    w_ = n > 0 ? detail::chol_solve(p_chol_, n, rhs) : Vec{};
    posterior_fresh_ = true;
  }

  struct Posterior {
    double mean = 0.0;
    double var = 0.0;
  };

  Posterior posterior(const GpPoint& x) const {
    if (!posterior_fresh_) refresh_posterior();
    Posterior p;
    if (dict_.empty()) {
      p.var = gp_kernel(x, x);
      return p;
    }
    Vec k = k_vec(x);
    p.mean = dot(k, w_);
    Vec a = detail::chol_solve(p_chol_, dict_size(), k);
    p.var = std::max(0.0, dot(k, a));
    return p;
  }

  // Health checks used by the test suites.
  bool kdd_is_positive_definite() const {
    if (dict_.empty()) return true;
    std::vector<double> c = kdd_;
    return detail::cholesky(c, dict_size());
  }
  bool precision_is_positive_definite() const {
    if (dict_.empty()) return true;
    const int n = dict_size();
    std::vector<double> p(std::size_t(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        p[std::size_t(i) * n + j] =
            kdd_[std::size_t(i) * n + j] + m_[std::size_t(i) * n + j] / cfg_.sigma2;
    return detail::cholesky(p, n);
  }

  void save(std::ostream& os) const {
    io::write_u32(os, 0x414c4750U);  // "ALGP"
    io::write_u32(os, 1u);
    io::write_f64(os, cfg_.gamma);
    io::write_f64(os, cfg_.sigma2);
    io::write_f64(os, cfg_.nu);
    io::write_f64(os, cfg_.jitter);
    io::write_u64(os, dict_.size());
    for (const auto& p : dict_) {
      io::write_vec(os, p.features);
      io::write_u32(os, std::uint32_t(p.summary));
      io::write_u32(os, std::uint32_t(p.payload));
      io::write_u32(os, p.has_payload ? 1u : 0u);
    }
    const int n = dict_size();
    for (int i = 0; i < n * n; ++i) io::write_f64(os, kdd_[std::size_t(i)]);
    for (int i = 0; i < n * n; ++i) io::write_f64(os, m_[std::size_t(i)]);
    io::write_vec(os, b_);
  }

  static GpModel load(std::istream& is) {
    if (io::read_u32(is) != 0x414c4750U) throw input_error("bad gp magic");
    if (io::read_u32(is) != 1u) throw input_error("unsupported gp version");
    GpConfig cfg;
    cfg.gamma = io::read_f64(is);
    cfg.sigma2 = io::read_f64(is);
    cfg.nu = io::read_f64(is);
    cfg.jitter = io::read_f64(is);
    GpModel m(cfg);
    std::uint64_t n = io::read_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      GpPoint p;
      p.features = io::read_vec(is);
      p.summary = int(io::read_u32(is));
      p.payload = std::uint16_t(io::read_u32(is));
      p.has_payload = io::read_u32(is) != 0;
      m.dict_.push_back(std::move(p));
    }
    m.kdd_.resize(std::size_t(n) * n);
    for (auto& v : m.kdd_) v = io::read_f64(is);
    m.m_.resize(std::size_t(n) * n);
    for (auto& v : m.m_) v = io::read_f64(is);
    m.b_ = io::read_vec(is);
    if (n > 0) {
      m.kdd_chol_ = m.kdd_;
      if (!detail::cholesky(m.kdd_chol_, int(n)))
        throw numeric_error("gp load: dictionary kernel matrix not positive definite");
    }
    return m;
  }

 private:
  GpConfig cfg_;
  std::vector<GpPoint> dict_;
  std::vector<double> kdd_;       // K_DD
  std::vector<double> kdd_chol_;  // Cholesky of K_DD (+ jitter on admission)
  std::vector<double> m_;         // sum of h h^T
  Vec b_;                         // sum of h r
  mutable std::vector<double> p_chol_;
  mutable Vec w_;
  mutable bool posterior_fresh_ = false;
};

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

class GpSarsaAgent {
 public:
  GpSarsaAgent(DialogueEnv& env, GpConfig cfg, std::uint64_t seed)
      : env_(&env), model_(cfg), rng_(derive_seed(seed, 0x67707361ULL)), seed_(seed) {}

  const GpModel& model() const { return model_; }
  GpModel& model() { return model_; }
  int episodes_done() const { return episodes_done_; }

  GpPoint make_point(const Vec& features, int action) const {
    GpPoint p;
    p.features = features;
    p.features.push_back(1.0);  // bias feature
    if (env_->config().mode == ActionMode::master) {
      MasterAction a = env_->actions().master_at(action);
      p.summary = env_->actions().index_summary(a.summary);
      p.payload = a.payload;
      p.has_payload = a.has_payload;
    } else {
      p.summary = action;
    }
    return p;
  }

  // Thompson-style selection: sample Q per valid action from the posterior
  // and take the argmax.  greedy = posterior mean only.
  int select_action(const Vec& features, const Mask& mask, bool greedy = false) {
    int best = -1;
    double best_val = 0.0;
    for (int a = 0; a < int(mask.size()); ++a) {
      if (!mask[std::size_t(a)]) continue;
      GpModel::Posterior post = model_.posterior(make_point(features, a));
      double val = greedy ? post.mean : post.mean + std::sqrt(post.var) * rng_.normal();
      if (best < 0 || val > best_val) {
        best = a;
        best_val = val;
      }
    }
    if (best < 0) throw invalid_mask_error("gp: no valid action");
    return best;
  }

  struct EpisodeStats {
    double ret = 0.0;
    bool success = false;
    int turns = 0;
  };

  EpisodeStats run_episode(bool learn = true, bool greedy = false) {
    auto [belief, mask] = env_->reset(derive_seed(seed_, 0x657076ULL + std::uint64_t(episodes_done_)));
    std::vector<GpPoint> xs;
    Vec rewards;
    const bool master = env_->config().mode == ActionMode::master;
    EpisodeStats st;
    while (!env_->done()) {
      Vec features = env_->featurize(belief);
      int action = select_action(features, mask, greedy);
      xs.push_back(make_point(features, action));
      MasterAction act = master
                             ? env_->actions().master_at(action)
                             : env_->summary_to_master(belief, env_->actions().summary_at(action));
      auto res = env_->step(act);
      rewards.push_back(res.reward);
      st.ret += res.reward;
      belief = std::move(res.belief);
      mask = std::move(res.mask);
      if (res.done) break;
    }
    st.success = env_->last_success();
    st.turns = env_->turns();
    ++episodes_done_;
    if (learn) model_.episode_update(xs, rewards);
    return st;
  }

 private:
  DialogueEnv* env_;
  GpModel model_;
  Rng rng_;
  std::uint64_t seed_;
  int episodes_done_ = 0;
};

}  // namespace acerlab
