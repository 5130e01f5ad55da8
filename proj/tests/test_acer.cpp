#include <doctest.h>

#include <sstream>

#include "helpers.hpp"

using namespace acerlab;

namespace {

NetworkParams tiny_net(int payloads, std::uint64_t seed) {
  NetworkDims d;
  d.input = 4;
  d.h1 = 3;
  d.h2 = 3;
  d.summary_actions = payloads > 0 ? 6 : 3;
  d.payload_actions = payloads;
  return NetworkParams::init(d, seed);
}

Hyperparameters small_hyper() {
  Hyperparameters h;
  h.h1 = 3;
  h.h2 = 3;
  return h;
}

}  // namespace

TEST_CASE("importance weight primitives") {
  CHECK(is_weight(0.3, 0.1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(is_weight(0.2, 0.2) == 1.0);
  CHECK_THROWS_AS(is_weight(0.1, 0.0), input_error);
  CHECK(truncate(10.0, 5.0) == 5.0);
  CHECK(truncate(2.0, 5.0) == 2.0);
  CHECK(bias_weight(10.0, 5.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bias_weight(3.0, 5.0) == 0.0);
  CHECK(bias_weight(5.0, 5.0) == 0.0);

  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    double rho = rng.uniform(0.0, 50.0);
    double c = rng.uniform(0.1, 10.0);
    double w = bias_weight(rho, c);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    CHECK(truncate(rho, c) <= c);
  }
}

TEST_CASE("retrace: single step and empty input") {
  Vec q = retrace_targets({3.5}, {2.0}, {1.0}, {0.5}, 0.99, 1.0);
  CHECK(q == Vec{3.5});
  CHECK_THROWS_AS(retrace_targets({}, {}, {}, {}, 0.99, 1.0), input_error);
}

TEST_CASE("retrace recursion matches the direct evaluation") {
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 1 + rng.uniform_int(25);
    Vec r(std::size_t(n), 0.0), rho(std::size_t(n), 0.0), q(std::size_t(n), 0.0),
        v(std::size_t(n), 0.0);
    for (int t = 0; t < n; ++t) {
      r[std::size_t(t)] = rng.uniform(-2.0, 2.0);
      rho[std::size_t(t)] = rng.uniform(0.0, 4.0);
      q[std::size_t(t)] = rng.uniform(-3.0, 3.0);
      v[std::size_t(t)] = rng.uniform(-3.0, 3.0);
    }
    double lambda = rng.uniform();
    double clip = rng.uniform(0.5, 2.0);
    Vec a = retrace_targets(r, rho, q, v, 0.99, lambda, clip);
    Vec b = testutil::retrace_direct(r, rho, q, v, 0.99, lambda, clip);
    for (int t = 0; t < n; ++t)
      CHECK(a[std::size_t(t)] == doctest::Approx(b[std::size_t(t)]).epsilon(1e-10));
  }
}

TEST_CASE("retrace collapses to discounted monte carlo on-policy") {
  // rho = 1, V = Q at every step: the correction telescopes away
  Rng rng(3);
  const int n = 12;
  Vec r(n, 0.0), rho(n, 1.0), q(n, 0.0);
  for (int t = 0; t < n; ++t) {
    r[std::size_t(t)] = rng.uniform(-2.0, 2.0);
    q[std::size_t(t)] = rng.uniform(-3.0, 3.0);
  }
  Vec qret = retrace_targets(r, rho, q, q, 0.99, 1.0);
  for (int t = 0; t < n; ++t) {
    double mc = 0.0;
    for (int s = n - 1; s >= t; --s) mc = r[std::size_t(s)] + 0.99 * mc;
    CHECK(qret[std::size_t(t)] == doctest::Approx(mc).epsilon(1e-12));
  }
}

TEST_CASE("lambda returns") {
  // lambda = 0: one-step TD targets
  Vec td = lambda_returns({1.0, 2.0, 3.0}, {10.0, 20.0, 30.0}, {0.5, 0.7, 0.9}, 0.9, 0.0);
  CHECK(td[2] == 3.0);
  CHECK(td[1] == doctest::Approx(2.0 + 0.9 * 30.0).epsilon(1e-12));
  CHECK(td[0] == doctest::Approx(1.0 + 0.9 * 20.0).epsilon(1e-12));

  // lambda = 0.5, unrolled by hand
  Vec r{1.0, -1.0, 2.0, 0.5};
  Vec v{0.2, 0.4, -0.3, 0.1};
  Vec rho{1.0, 2.0, 0.5, 1.5};
  double gamma = 0.9, lambda = 0.5;
  Vec out = lambda_returns(r, v, rho, gamma, lambda);
  double r3 = 0.5;
  double r2 = 2.0 + 0.5 * gamma * 0.1 + lambda * gamma * 1.5 * r3;
  double r1 = -1.0 + 0.5 * gamma * (-0.3) + lambda * gamma * 0.5 * r2;
  double r0 = 1.0 + 0.5 * gamma * 0.4 + lambda * gamma * 2.0 * r1;
  CHECK(out[3] == doctest::Approx(r3).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(r2).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(r1).epsilon(1e-12));
  CHECK(out[0] == doctest::Approx(r0).epsilon(1e-12));
}

TEST_CASE("trust region projection") {
  // inactive constraint
  Vec g{1.0, 1.0};
  CHECK(trust_region_project(g, {0.1, 0.1}, 5.0) == g);
  // worked example
  Vec z = trust_region_project({3.0, 4.0}, {0.0, 2.0}, 2.0);
  CHECK(z[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(1.0).epsilon(1e-12));
  // zero constraint direction
  CHECK(trust_region_project(g, {0.0, 0.0}, 1.0) == g);

  // projection lands in the feasible set and is the closest feasible point
  Rng rng(4);
  for (int rep = 0; rep < 2000; ++rep) {
    int dim = 1 + rng.uniform_int(8);
    Vec gg(std::size_t(dim), 0.0), k(std::size_t(dim), 0.0);
    for (int i = 0; i < dim; ++i) {
      gg[std::size_t(i)] = rng.uniform(-3.0, 3.0);
      k[std::size_t(i)] = rng.uniform(-3.0, 3.0);
    }
    double delta = rng.uniform(0.0, 2.0);
    Vec zz = trust_region_project(gg, k, delta);
    CHECK(dot(k, zz) <= delta + 1e-9);
    // random feasible competitor
    Vec y = zz;
    for (int i = 0; i < dim; ++i) y[std::size_t(i)] += rng.uniform(-1.0, 1.0);
    double ky = dot(k, y);
    if (ky > delta) {  // pull back to the boundary
      double kk = norm2_sq(k);
      axpy(-(ky - delta) / kk, k, y);
    }
    double dz = 0.0, dy = 0.0;
    for (int i = 0; i < dim; ++i) {
      dz += (gg[std::size_t(i)] - zz[std::size_t(i)]) * (gg[std::size_t(i)] - zz[std::size_t(i)]);
      dy += (gg[std::size_t(i)] - y[std::size_t(i)]) * (gg[std::size_t(i)] - y[std::size_t(i)]);
    }
    CHECK(dz <= dy + 1e-9);
  }
}

TEST_CASE("episode analysis: coefficients and identities") {
  Rng rng(5);
  NetworkParams p = tiny_net(0, 77);
  Hyperparameters h = small_hyper();
  EpisodeRecord ep = testutil::random_episode(p, 8, rng);
  EpisodeComputation comp = analyze_episode(p, ep, h);
  for (int t = 0; t < ep.length(); ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    const PolicyOutput& o = comp.out[std::size_t(t)];
    CHECK(comp.rho[std::size_t(t)] ==
          doctest::Approx(o.pi[std::size_t(tr.action)] / tr.mu_action).epsilon(1e-12));
    CHECK(comp.rho_bar[std::size_t(t)] <= h.c);
    CHECK(comp.advantage[std::size_t(t)] ==
          doctest::Approx(comp.qret[std::size_t(t)] - o.v).epsilon(1e-12));
    CHECK(comp.critic_coeff[std::size_t(t)] ==
          doctest::Approx(2.0 * (comp.qret[std::size_t(t)] - o.q[std::size_t(tr.action)]))
              .epsilon(1e-12));
  }
}

TEST_CASE("no bias correction when the behaviour policy equals pi") {
  // rho = 1 <= c, so the correction sum vanishes and only the taken action
  // carries a coefficient
  Rng rng(6);
  NetworkParams p = tiny_net(0, 78);
  Hyperparameters h = small_hyper();
  EpisodeRecord ep = testutil::random_episode(p, 10, rng, /*mu_equals_pi=*/true);
  EpisodeComputation comp = analyze_episode(p, ep, h);
  for (int t = 0; t < ep.length(); ++t) {
    const Transition& tr = ep.transitions[std::size_t(t)];
    int nonzero = 0;
    for (std::size_t a = 0; a < comp.actor_coeff[std::size_t(t)].size(); ++a)
      if (comp.actor_coeff[std::size_t(t)][a] != 0.0) ++nonzero;
    CHECK(nonzero <= 1);
    CHECK(comp.rho[std::size_t(t)] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(comp.actor_coeff[std::size_t(t)][std::size_t(tr.action)] ==
          doctest::Approx(comp.advantage[std::size_t(t)]).epsilon(1e-12));
  }
}

TEST_CASE("accumulated gradients match finite differences of the surrogates") {
  Rng rng(7);
  for (int payloads : {0, 4}) {
    NetworkParams p = tiny_net(payloads, 79 + payloads);
    Hyperparameters h = small_hyper();
    EpisodeRecord ep = testutil::random_episode(p, 5, rng);
    EpisodeComputation frozen = analyze_episode(p, ep, h);
    Vec g(p.size(), 0.0), dtheta(p.size(), 0.0);
    accumulate_episode_gradients(p, ep, h, g, dtheta);

    Vec g_fd = testutil::finite_difference(
        p, [&](const NetworkParams& q) { return actor_surrogate(q, ep, h, frozen); });
    CHECK(testutil::max_rel_error(g, g_fd) < 1e-4);

    Vec d_fd = testutil::finite_difference(
        p, [&](const NetworkParams& q) { return critic_surrogate(q, ep, frozen); });
    CHECK(testutil::max_rel_error(dtheta, d_fd) < 1e-4);
  }
}

TEST_CASE("hyperparameter validation and serialization") {
  Hyperparameters h;
  h.gamma = 1.5;
  CHECK_THROWS_AS(h.validate(), config_error);
  h = Hyperparameters{};
  h.c = 0.0;
  CHECK_THROWS_AS(h.validate(), config_error);
  h = Hyperparameters{};
  h.batch_size = 0;
  CHECK_THROWS_AS(h.validate(), config_error);

  h = Hyperparameters{};
  h.alpha = 0.0005;
  h.delta = 2.5;
  h.store_mixed_mu = false;
  Hyperparameters j = Hyperparameters::from_json(h.to_json());
  CHECK(j.alpha == h.alpha);
  CHECK(j.delta == h.delta);
  CHECK(j.store_mixed_mu == h.store_mixed_mu);

  std::stringstream ss;
  h.save(ss);
  Hyperparameters b = Hyperparameters::load(ss);
  CHECK(b.alpha == h.alpha);
  CHECK(b.delta == h.delta);
  CHECK(b.eps_start == h.eps_start);
  CHECK(b.store_mixed_mu == h.store_mixed_mu);

  // partial json keeps defaults elsewhere
  Hyperparameters part = Hyperparameters::from_json({{"c", 3.0}});
  CHECK(part.c == 3.0);
  CHECK(part.alpha == 0.001);
}

TEST_CASE("epsilon schedule is linear from start to end") {
  Ontology ont = Ontology::toy();
  DialogueEnv env(ont, EnvConfig{});
  AcerTrainer tr(env, Hyperparameters{}, 1);
  CHECK(tr.epsilon_at(0, 4000) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(tr.epsilon_at(3999, 4000) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tr.epsilon_at(1, 3) == doctest::Approx(0.475).epsilon(1e-12));
}

TEST_CASE("stored behaviour distribution is the epsilon mixture") {
  Ontology ont = Ontology::toy();
  DialogueEnv env(ont, EnvConfig{});
  AcerTrainer tr(env, Hyperparameters{}, 2);
  EpisodeRecord ep = tr.generate_episode(0.4);
  for (const auto& t : ep.transitions) {
    double s = 0.0;
    int n_valid = count_true(t.mask);
    for (std::size_t a = 0; a < t.mu.size(); ++a) {
      s += t.mu[a];
      if (!t.mask[a]) CHECK(t.mu[a] == 0.0);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t.mu_action >= 0.4 / n_valid - 1e-12);
    // every entry is either eps/n or (1-eps) + eps/n
    for (std::size_t a = 0; a < t.mu.size(); ++a) {
      if (!t.mask[a]) continue;
      double base = 0.4 / n_valid;
      bool ok = std::abs(t.mu[a] - base) < 1e-12 || std::abs(t.mu[a] - (0.6 + base)) < 1e-12;
      CHECK(ok);
    }
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  Ontology ont = Ontology::toy();
  DialogueEnv e1(ont, EnvConfig{}), e2(ont, EnvConfig{});
  AcerTrainer t1(e1, Hyperparameters{}, 42), t2(e2, Hyperparameters{}, 42);
  t1.run(30);
  t2.run(30);
  CHECK(t1.params().flat == t2.params().flat);
  CHECK(t1.avg_params().flat == t2.avg_params().flat);
}

TEST_CASE("snapshot round trip resumes identically") {
  Ontology ont = Ontology::toy();
  DialogueEnv e1(ont, EnvConfig{}), e2(ont, EnvConfig{}), e3(ont, EnvConfig{});
  AcerTrainer t1(e1, Hyperparameters{}, 9);
  std::stringstream ss;
  t1.run(40, 20, [&](int done, const AcerTrainer& t) {
    if (done == 20) t.save(ss);
  });

  AcerTrainer t2(e2, Hyperparameters{}, 1);  // contents replaced by load
  t2.load(ss);
  CHECK(t2.episodes_done() == 20);

  // resuming the loaded snapshot reproduces the uninterrupted run
  t2.run(40);
  AcerTrainer t3(e3, Hyperparameters{}, 9);
  t3.run(40);
  CHECK(t1.params().flat == t3.params().flat);
  CHECK(t2.params().flat == t3.params().flat);
  CHECK(t2.avg_params().flat == t3.avg_params().flat);
  CHECK(t2.memory().n_transitions() == t3.memory().n_transitions());
}

TEST_CASE("short training run stays finite and logs consistently") {
  Ontology ont = Ontology::toy();
  DialogueEnv env(ont, EnvConfig{});
  AcerTrainer tr(env, Hyperparameters{}, 3);
  int rows = 0, milestones = 0;
  tr.run(
      100, 50, [&](int, const AcerTrainer&) { ++milestones; },
      [&](const EpisodeLogRow& row) {
        ++rows;
        CHECK(row.ret == doctest::Approx(20.0 * (row.success ? 1 : 0) - row.turns).epsilon(1e-9));
      });
  CHECK(rows == 100);
  CHECK(milestones == 2);
  CHECK(all_finite(tr.params().flat));
  CHECK(all_finite(tr.avg_params().flat));
}
