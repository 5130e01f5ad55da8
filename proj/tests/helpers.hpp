#pragma once

// Shared oracles and fixtures for the unit and acceptance suites.

#include <functional>

#include "acerlab/acer.hpp"
#include "acerlab/gpsarsa.hpp"
#include "acerlab/harness.hpp"

namespace testutil {

using namespace acerlab;

// Central finite difference of a scalar function over the flat parameters.
inline Vec finite_difference(NetworkParams params, const std::function<double(const NetworkParams&)>& f,
                             double step = 1e-5) {
  Vec grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params.flat[i];
    params.flat[i] = saved + step;
    const double hi = f(params);
    params.flat[i] = saved - step;
    const double lo = f(params);
    params.flat[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

// Max relative error between an analytic and a reference gradient, with an
// absolute floor so near-zero entries do not blow up the ratio.
inline double max_rel_error(const Vec& analytic, const Vec& reference, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(floor, std::max(std::abs(analytic[i]), std::abs(reference[i])));
    worst = std::max(worst, std::abs(analytic[i] - reference[i]) / denom);
  }
  return worst;
}

// Quadratic-time direct Retrace evaluation:
//   Q^ret_t = Q_t + sum_{s>=t} gamma^{s-t} (prod_{u=t+1..s} c_u) delta_s,
//   delta_s = r_s + gamma V_{s+1} - Q_s,  V_N = 0.
inline Vec retrace_direct(const Vec& rewards, const Vec& rho, const Vec& q_taken, const Vec& v,
                          double gamma, double lambda, double clip) {
  const int n = int(rewards.size());
  Vec out(std::size_t(n), 0.0);
  for (int t = 0; t < n; ++t) {
    double acc = q_taken[std::size_t(t)];
    double w = 1.0;
    for (int s = t; s < n; ++s) {
      if (s > t) w *= gamma * lambda * std::min(clip, rho[std::size_t(s)]);
      const double v_next = s + 1 < n ? v[std::size_t(s + 1)] : 0.0;
      acc += w * (rewards[std::size_t(s)] + gamma * v_next - q_taken[std::size_t(s)]);
    }
    out[std::size_t(t)] = acc;
  }
  return out;
}

// Random synthetic episode for a given network (dialogue-free), with the
// stored mu drawn independently of pi.
inline EpisodeRecord random_episode(const NetworkParams& params, int len, Rng& rng,
                                    bool mu_equals_pi = false, double mask_drop = 0.3) {
  const int na = params.dims.master_actions();
  EpisodeRecord ep;
  for (int t = 0; t < len; ++t) {
    Transition tr;
    tr.features.resize(std::size_t(params.dims.input));
    for (auto& x : tr.features) x = rng.uniform(-1.0, 1.0);
    tr.mask.assign(std::size_t(na), 1);
    for (auto& m : tr.mask)
      if (rng.uniform() < mask_drop) m = 0;
    tr.mask[std::size_t(rng.uniform_int(na))] = 1;  // keep at least one valid
    PolicyOutput o = forward(params, tr.features, tr.mask);
    if (mu_equals_pi) {
      tr.mu = o.pi;
    } else {
      tr.mu.assign(std::size_t(na), 0.0);
      double z = 0.0;
      for (int a = 0; a < na; ++a)
        if (tr.mask[std::size_t(a)]) {
          tr.mu[std::size_t(a)] = 0.05 + rng.uniform();
          z += tr.mu[std::size_t(a)];
        }
      for (auto& p : tr.mu) p /= z;
    }
    // sample the action from mu
    double u = rng.uniform(), csum = 0.0;
    tr.action = -1;
    for (int a = 0; a < na; ++a) {
      csum += tr.mu[std::size_t(a)];
      if (u <= csum) {
        tr.action = a;
        break;
      }
    }
    if (tr.action < 0)
      for (int a = na - 1; a >= 0; --a)
        if (tr.mu[std::size_t(a)] > 0.0) {
          tr.action = a;
          break;
        }
    tr.mu_action = tr.mu[std::size_t(tr.action)];
    tr.reward = rng.uniform(-2.0, 2.0);
    ep.transitions.push_back(std::move(tr));
  }
  ep.finalize();
  return ep;
}

}  // namespace testutil
