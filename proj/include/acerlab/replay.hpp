#pragma once

// Episodic experience replay: whole dialogue trajectories with the behaviour
// policy's probabilities, bounded FIFO eviction counted in transitions,
// uniform episode sampling.

#include <deque>

#include "acerlab/common.hpp"

namespace acerlab {

struct Transition {
  Vec features;     // belief feature vector b_t
  int action = 0;   // action index in the active space
  double reward = 0.0;
  double mu_action = 0.0;  // mu(a_t | b_t)
  Vec mu;                  // full behaviour distribution mu(. | b_t)
  Mask mask;               // execution mask at t

  void validate() const {
    if (mu_action <= 0.0) throw input_error("transition: mu(a|b) must be > 0");
    double s = 0.0;
    for (double p : mu) s += p;
    if (std::abs(s - 1.0) > 1e-9) throw input_error("transition: mu does not sum to 1");
  }
};

struct EpisodeRecord {
  std::vector<Transition> transitions;
  bool terminal = true;
  double total_return = 0.0;  // cached sum of rewards

  int length() const { return int(transitions.size()); }

  void finalize() {
    total_return = 0.0;
    for (const auto& t : transitions) total_return += t.reward;
  }

  void validate(int max_len = 25) const {
    if (transitions.empty()) throw input_error("episode: empty");
    if (length() > max_len) throw input_error("episode: longer than the turn limit");
    double s = 0.0;
    for (const auto& t : transitions) {
      t.validate();
      s += t.reward;
    }
    if (std::abs(s - total_return) > 1e-9) throw input_error("episode: cached return stale");
  }
};

class ReplayMemory {
 public:
  explicit ReplayMemory(int capacity_transitions = 2000) : capacity_(capacity_transitions) {}

  int capacity() const { return capacity_; }
  int n_episodes() const { return int(episodes_.size()); }
  int n_transitions() const { return total_transitions_; }
  bool empty() const { return episodes_.empty(); }
  const EpisodeRecord& episode(int i) const { return episodes_[std::size_t(i)]; }

  void store(EpisodeRecord episode) {
    episode.validate();
    if (episode.length() > capacity_)
      throw input_error("episode longer than replay capacity");
    episodes_.push_back(std::move(episode));
    total_transitions_ += episodes_.back().length();
    while (total_transitions_ > capacity_) {
      total_transitions_ -= episodes_.front().length();
      episodes_.pop_front();
    }
  }

  // Uniform sampling of episode indices: without replacement when enough
  // episodes exist, with replacement otherwise.  Empty memory -> empty batch.
  std::vector<int> sample(int batch_size, Rng& rng) const {
    std::vector<int> out;
    if (episodes_.empty()) return out;
    const int n = n_episodes();
    if (n >= batch_size) {
      std::vector<int> idx(std::size_t(n), 0);
      for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
      for (int i = 0; i < batch_size; ++i) {
        int j = i + rng.uniform_int(n - i);
        std::swap(idx[std::size_t(i)], idx[std::size_t(j)]);
        out.push_back(idx[std::size_t(i)]);
      }
    } else {
      for (int i = 0; i < batch_size; ++i) out.push_back(rng.uniform_int(n));
    }
    return out;
  }

  void save(std::ostream& os) const {
    io::write_u32(os, 0x414c524dU);  // "ALRM"
    io::write_u32(os, 1u);
    io::write_u32(os, std::uint32_t(capacity_));
    io::write_u64(os, episodes_.size());
    for (const auto& ep : episodes_) {
      io::write_u32(os, std::uint32_t(ep.transitions.size()));
      io::write_u32(os, ep.terminal ? 1u : 0u);
      io::write_f64(os, ep.total_return);
      for (const auto& t : ep.transitions) {
        io::write_vec(os, t.features);
        io::write_u32(os, std::uint32_t(t.action));
        io::write_f64(os, t.reward);
        io::write_f64(os, t.mu_action);
        io::write_vec(os, t.mu);
        io::write_u64(os, t.mask.size());
        for (char c : t.mask) os.put(c);
      }
    }
  }

  static ReplayMemory load(std::istream& is) {
    if (io::read_u32(is) != 0x414c524dU) throw input_error("bad replay magic");
    if (io::read_u32(is) != 1u) throw input_error("unsupported replay version");
    ReplayMemory m(int(io::read_u32(is)));
    std::uint64_t n = io::read_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      EpisodeRecord ep;
      std::uint32_t len = io::read_u32(is);
      ep.terminal = io::read_u32(is) != 0;
      ep.total_return = io::read_f64(is);
      for (std::uint32_t t = 0; t < len; ++t) {
        Transition tr;
        tr.features = io::read_vec(is);
        tr.action = int(io::read_u32(is));
        tr.reward = io::read_f64(is);
        tr.mu_action = io::read_f64(is);
        tr.mu = io::read_vec(is);
        std::uint64_t ms = io::read_u64(is);
        tr.mask.resize(ms);
        for (auto& c : tr.mask) c = char(is.get());
        ep.transitions.push_back(std::move(tr));
      }
      m.episodes_.push_back(std::move(ep));
      m.total_transitions_ += int(len);
    }
    return m;
  }

 private:
  int capacity_;
  std::deque<EpisodeRecord> episodes_;
  int total_transitions_ = 0;
};

}  // namespace acerlab
