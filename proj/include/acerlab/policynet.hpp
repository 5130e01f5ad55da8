#pragma once

// Dense feedforward actor-critic network with a shared ReLU trunk, a softmax
// policy head and a linear Q head.  The master variant adds payload heads
// whose outputs are composed with the summary heads into the full action
// space.  Gradients are exact reverse-mode derivatives of the fixed
// architecture; everything is double precision.

#include <algorithm>
#include <limits>

#include "acerlab/common.hpp"

namespace acerlab {

// ---------------------------------------------------------------------------
// Masked softmax
// ---------------------------------------------------------------------------

// Masked entries are exactly zero; unmasked entries are proportional to
// exp(logit), stabilised by max subtraction.
inline Vec masked_softmax(const Vec& logits, const Mask& mask) {
  if (logits.size() != mask.size()) throw config_error("masked_softmax: size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    if (std::isnan(logits[i])) throw numeric_error("masked_softmax: NaN logit");
    mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity())
    throw invalid_mask_error("masked_softmax: all actions masked");
  Vec p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) p[i] /= z;
  return p;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct NetworkDims {
  int input = 0;
  int h1 = 130;
  int h2 = 50;
  int summary_actions = 0;
  int payload_actions = 0;  // 0 for the summary architecture, 256 for master

  bool master() const { return payload_actions > 0; }
  int n_inform_kinds() const { return 4; }
  int n_noninform() const { return summary_actions - n_inform_kinds(); }
  // master space: non-inform actions first, then 4 inform kinds x payloads
  int master_actions() const {
    return master() ? n_noninform() + n_inform_kinds() * payload_actions : summary_actions;
  }
  bool operator==(const NetworkDims&) const = default;
};

// All weights live in one flat vector; named spans address the blocks.
// Flat layout (row-major matrices, weight then bias per layer):
//   w1[h1 x input] b1[h1] w2[h2 x h1] b2[h2]
//   pi_w[A x h2] pi_b[A] q_w[A x h2] q_b[A]
//   [ ppi_w[P x h2] ppi_b[P] pq_w[P x h2] pq_b[P] ]   (master only)
struct NetworkParams {
  NetworkDims dims;
  Vec flat;

  struct Block {
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  Block w1, b1, w2, b2, pi_w, pi_b, q_w, q_b, ppi_w, ppi_b, pq_w, pq_b;

  static NetworkParams zeros(const NetworkDims& d) {
    NetworkParams p;
    p.dims = d;
    p.layout();
    p.flat.assign(p.total_size_, 0.0);
    return p;
  }

  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
  static NetworkParams init(const NetworkDims& d, std::uint64_t seed) {
    NetworkParams p = zeros(d);
    Rng rng(seed);
    auto fill = [&](Block w, Block b, int fan_in) {
      double s = 1.0 / std::sqrt(double(fan_in));
      for (std::size_t i = 0; i < w.size; ++i) p.flat[w.offset + i] = rng.uniform(-s, s);
      for (std::size_t i = 0; i < b.size; ++i) p.flat[b.offset + i] = rng.uniform(-s, s);
    };
    fill(p.w1, p.b1, d.input);
    fill(p.w2, p.b2, d.h1);
    fill(p.pi_w, p.pi_b, d.h2);
    fill(p.q_w, p.q_b, d.h2);
    if (d.master()) {
      fill(p.ppi_w, p.ppi_b, d.h2);
      fill(p.pq_w, p.pq_b, d.h2);
    }
    return p;
  }

  std::size_t size() const { return flat.size(); }

  double* block(Block b) { return flat.data() + b.offset; }
  const double* block(Block b) const { return flat.data() + b.offset; }

  // Parameter blocks that define the policy (trunk + pi heads).  Used for
  // the average-policy soft update; gradients address the same ranges.
  std::vector<Block> pi_blocks() const {
    std::vector<Block> v{w1, b1, w2, b2, pi_w, pi_b};
    if (dims.master()) {
      v.push_back(ppi_w);
      v.push_back(ppi_b);
    }
    return v;
  }

  void save(std::ostream& os) const {
    io::write_u32(os, 0x414c4e50u);  // "ALNP"
    io::write_u32(os, 1u);           // version
    io::write_u32(os, std::uint32_t(dims.input));
    io::write_u32(os, std::uint32_t(dims.h1));
    io::write_u32(os, std::uint32_t(dims.h2));
    io::write_u32(os, std::uint32_t(dims.summary_actions));
    io::write_u32(os, std::uint32_t(dims.payload_actions));
    io::write_vec(os, flat);
  }

  static NetworkParams load(std::istream& is) {
    if (io::read_u32(is) != 0x414c4e50u) throw input_error("bad network magic");
    if (io::read_u32(is) != 1u) throw input_error("unsupported network version");
    NetworkDims d;
    d.input = int(io::read_u32(is));
    d.h1 = int(io::read_u32(is));
    d.h2 = int(io::read_u32(is));
    d.summary_actions = int(io::read_u32(is));
    d.payload_actions = int(io::read_u32(is));
    NetworkParams p = zeros(d);
    Vec flat = io::read_vec(is);
    if (flat.size() != p.flat.size()) throw input_error("network size mismatch");
    p.flat = std::move(flat);
    return p;
  }

 private:
  std::size_t total_size_ = 0;

  void layout() {
    const auto& d = dims;
    std::size_t off = 0;
    auto place = [&](Block& b, std::size_t n) {
      b.offset = off;
      b.size = n;
      off += n;
    };
    place(w1, std::size_t(d.h1) * d.input);
    place(b1, std::size_t(d.h1));
    place(w2, std::size_t(d.h2) * d.h1);
    place(b2, std::size_t(d.h2));
    place(pi_w, std::size_t(d.summary_actions) * d.h2);
    place(pi_b, std::size_t(d.summary_actions));
    place(q_w, std::size_t(d.summary_actions) * d.h2);
    place(q_b, std::size_t(d.summary_actions));
    if (d.master()) {
      place(ppi_w, std::size_t(d.payload_actions) * d.h2);
      place(ppi_b, std::size_t(d.payload_actions));
      place(pq_w, std::size_t(d.payload_actions) * d.h2);
      place(pq_b, std::size_t(d.payload_actions));
    }
    total_size_ = off;
  }
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct PolicyOutput {
  Vec pi;    // distribution over the active action space (masked entries 0)
  Vec q;     // raw Q values over the active action space
  double v;  // sum_a pi(a) q(a)
};

struct ForwardCache {
  Vec x;                       // input
  Vec z1, a1;                  // pre/post-activation of h1
  Vec z2, a2;                  // pre/post-activation of h2
  Vec pi_logits, q_out;        // summary heads
  Vec ppi_logits, pq_out;      // payload heads (master only)
  Vec pi_s, pi_p;              // head softmaxes (unmasked; master only for pi_p)
};

namespace detail {

// y = W x + b for row-major W[rows x cols]
inline void affine(const double* W, const double* b, const Vec& x, Vec& y, int rows, int cols) {
  y.resize(std::size_t(rows));
  for (int r = 0; r < rows; ++r) {
    const double* wr = W + std::size_t(r) * cols;
    double s = b[r];
    for (int c = 0; c < cols; ++c) s += wr[c] * x[std::size_t(c)];
    y[std::size_t(r)] = s;
  }
}

inline void relu(const Vec& z, Vec& a) {
  a.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

inline Vec softmax(const Vec& logits) {
  Mask all(logits.size(), 1);
  return masked_softmax(logits, all);
}

}  // namespace detail

inline void forward_heads(const NetworkParams& p, const Vec& belief, ForwardCache& c) {
  const auto& d = p.dims;
  if (int(belief.size()) != d.input)
    throw config_error("forward: belief dimension " + std::to_string(belief.size()) +
                       " != input " + std::to_string(d.input));
  c.x = belief;
  detail::affine(p.block(p.w1), p.block(p.b1), c.x, c.z1, d.h1, d.input);
  detail::relu(c.z1, c.a1);
  detail::affine(p.block(p.w2), p.block(p.b2), c.a1, c.z2, d.h2, d.h1);
  detail::relu(c.z2, c.a2);
  detail::affine(p.block(p.pi_w), p.block(p.pi_b), c.a2, c.pi_logits, d.summary_actions, d.h2);
  detail::affine(p.block(p.q_w), p.block(p.q_b), c.a2, c.q_out, d.summary_actions, d.h2);
  if (d.master()) {
    detail::affine(p.block(p.ppi_w), p.block(p.ppi_b), c.a2, c.ppi_logits, d.payload_actions, d.h2);
    detail::affine(p.block(p.pq_w), p.block(p.pq_b), c.a2, c.pq_out, d.payload_actions, d.h2);
  }
}

inline PolicyOutput forward_summary(const NetworkParams& p, const Vec& belief, const Mask& mask,
                                    ForwardCache* cache = nullptr) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  forward_heads(p, belief, c);
  if (int(mask.size()) != p.dims.summary_actions)
    throw config_error("forward_summary: mask size mismatch");
  PolicyOutput out;
  out.pi = masked_softmax(c.pi_logits, mask);
  out.q = c.q_out;
  out.v = dot(out.pi, out.q);
  return out;
}

// Composed master-space forward.  For non-inform summary action A the master
// entry is (pi_s(A), Q_s(A)); for inform kind k with payload P it is
// (pi_s(A_k) * pi_p(P), Q_s(A_k) + Q_p(P)).  The mask is applied to the
// composed vector by zeroing and renormalising.
inline PolicyOutput forward_master(const NetworkParams& p, const Vec& belief, const Mask& mask,
                                   ForwardCache* cache = nullptr) {
  const auto& d = p.dims;
  if (!d.master()) throw config_error("forward_master on a summary network");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  forward_heads(p, belief, c);
  const int nm = d.master_actions();
  if (int(mask.size()) != nm) throw config_error("forward_master: mask size mismatch");
  c.pi_s = detail::softmax(c.pi_logits);
  c.pi_p = detail::softmax(c.ppi_logits);

  PolicyOutput out;
  out.pi.assign(std::size_t(nm), 0.0);
  out.q.assign(std::size_t(nm), 0.0);
  const int nn = d.n_noninform();
  double z = 0.0;
  for (int i = 0; i < nn; ++i) {
    out.q[std::size_t(i)] = c.q_out[std::size_t(i)];
    if (mask[std::size_t(i)]) {
      out.pi[std::size_t(i)] = c.pi_s[std::size_t(i)];
      z += out.pi[std::size_t(i)];
    }
  }
  for (int k = 0; k < d.n_inform_kinds(); ++k) {
    const int a = nn + k;  // summary index of this inform kind
    for (int pl = 0; pl < d.payload_actions; ++pl) {
      const int i = nn + k * d.payload_actions + pl;
      out.q[std::size_t(i)] = c.q_out[std::size_t(a)] + c.pq_out[std::size_t(pl)];
      if (mask[std::size_t(i)]) {
        out.pi[std::size_t(i)] = c.pi_s[std::size_t(a)] * c.pi_p[std::size_t(pl)];
        z += out.pi[std::size_t(i)];
      }
    }
  }
  if (z <= 0.0) throw invalid_mask_error("forward_master: all actions masked");
  for (auto& v : out.pi) v /= z;
  out.v = dot(out.pi, out.q);
  return out;
}

inline PolicyOutput forward(const NetworkParams& p, const Vec& belief, const Mask& mask,
                            ForwardCache* cache = nullptr) {
  return p.dims.master() ? forward_master(p, belief, mask, cache)
                         : forward_summary(p, belief, mask, cache);
}

// ---------------------------------------------------------------------------
// Backward pass
//
// Computes the gradient of  <u_pi, log pi> + <u_q, Q>  with respect to every
// parameter, where pi is the masked (renormalised) policy over the active
// action space.  Masked entries of the upstream gradients are ignored.
// ---------------------------------------------------------------------------

namespace detail {

struct HeadGrads {
  Vec d_pi_logits;   // summary pi head
  Vec d_q_out;       // summary q head
  Vec d_ppi_logits;  // payload pi head (master)
  Vec d_pq_out;      // payload q head (master)
};

inline void backprop_trunk(const NetworkParams& p, const ForwardCache& c, const HeadGrads& hg,
                           Vec& grad) {
  const auto& d = p.dims;
  // dh2 accumulates from all heads
  Vec dh2(std::size_t(d.h2), 0.0);
  auto head_back = [&](NetworkParams::Block wblk, NetworkParams::Block bblk, const Vec& dout,
                       int rows) {
    if (dout.empty()) return;
    const double* W = p.flat.data() + wblk.offset;
    double* gW = grad.data() + wblk.offset;
    double* gB = grad.data() + bblk.offset;
    for (int r = 0; r < rows; ++r) {
      const double g = dout[std::size_t(r)];
      if (g == 0.0) continue;
      gB[r] += g;
      const double* wr = W + std::size_t(r) * d.h2;
      double* gwr = gW + std::size_t(r) * d.h2;
      for (int j = 0; j < d.h2; ++j) {
        gwr[j] += g * c.a2[std::size_t(j)];
        dh2[std::size_t(j)] += g * wr[j];
      }
    }
  };
  head_back(p.pi_w, p.pi_b, hg.d_pi_logits, d.summary_actions);
  head_back(p.q_w, p.q_b, hg.d_q_out, d.summary_actions);
  if (d.master()) {
    head_back(p.ppi_w, p.ppi_b, hg.d_ppi_logits, d.payload_actions);
    head_back(p.pq_w, p.pq_b, hg.d_pq_out, d.payload_actions);
  }

  // through h2 ReLU
  Vec dz2(std::size_t(d.h2));
  for (int j = 0; j < d.h2; ++j)
    dz2[std::size_t(j)] = c.z2[std::size_t(j)] > 0.0 ? dh2[std::size_t(j)] : 0.0;

  // w2, b2 and dh1
  Vec dh1(std::size_t(d.h1), 0.0);
  {
    const double* W = p.flat.data() + p.w2.offset;
    double* gW = grad.data() + p.w2.offset;
    double* gB = grad.data() + p.b2.offset;
    for (int r = 0; r < d.h2; ++r) {
      const double g = dz2[std::size_t(r)];
      if (g == 0.0) continue;
      gB[r] += g;
      const double* wr = W + std::size_t(r) * d.h1;
      double* gwr = gW + std::size_t(r) * d.h1;
      for (int j = 0; j < d.h1; ++j) {
        gwr[j] += g * c.a1[std::size_t(j)];
        dh1[std::size_t(j)] += g * wr[j];
      }
    }
  }

  // through h1 ReLU, then w1, b1
  {
    double* gW = grad.data() + p.w1.offset;
    double* gB = grad.data() + p.b1.offset;
    for (int r = 0; r < d.h1; ++r) {
      const double g = c.z1[std::size_t(r)] > 0.0 ? dh1[std::size_t(r)] : 0.0;
      if (g == 0.0) continue;
      gB[r] += g;
      double* gwr = gW + std::size_t(r) * d.input;
      for (int j = 0; j < d.input; ++j) gwr[j] += g * c.x[std::size_t(j)];
    }
  }
}

}  // namespace detail

// Summary-architecture backward.  `pi` must be the masked policy returned by
// forward_summary for the same cache.
inline void backward_summary_accum(const NetworkParams& p, const ForwardCache& c, const Mask& mask,
                                   const Vec& pi, const Vec& u_pi, const Vec& u_q, Vec& grad) {
  const auto& d = p.dims;
  detail::HeadGrads hg;
  double usum = 0.0;
  for (int a = 0; a < d.summary_actions; ++a)
    if (mask[std::size_t(a)]) usum += u_pi[std::size_t(a)];
  hg.d_pi_logits.assign(std::size_t(d.summary_actions), 0.0);
  hg.d_q_out.assign(std::size_t(d.summary_actions), 0.0);
  for (int a = 0; a < d.summary_actions; ++a) {
    if (!mask[std::size_t(a)]) continue;
    hg.d_pi_logits[std::size_t(a)] = u_pi[std::size_t(a)] - usum * pi[std::size_t(a)];
    hg.d_q_out[std::size_t(a)] = u_q[std::size_t(a)];
  }
  detail::backprop_trunk(p, c, hg, grad);
}

// Master-architecture backward over the composed action space.
inline void backward_master_accum(const NetworkParams& p, const ForwardCache& c, const Mask& mask,
                                  const Vec& pi_master, const Vec& u_pi, const Vec& u_q,
                                  Vec& grad) {
  const auto& d = p.dims;
  const int nn = d.n_noninform();
  const int P = d.payload_actions;

  // aggregate upstream and composed-pi mass by summary action and payload
  Vec a_sum(std::size_t(d.summary_actions), 0.0), w_sum(std::size_t(d.summary_actions), 0.0);
  Vec b_sum(std::size_t(P), 0.0), v_sum(std::size_t(P), 0.0);
  Vec qa_sum(std::size_t(d.summary_actions), 0.0), qp_sum(std::size_t(P), 0.0);
  double usum = 0.0, b_inf = 0.0, w_inf = 0.0;

  for (int i = 0; i < nn; ++i) {
    if (!mask[std::size_t(i)]) continue;
    a_sum[std::size_t(i)] += u_pi[std::size_t(i)];
    w_sum[std::size_t(i)] += pi_master[std::size_t(i)];
    usum += u_pi[std::size_t(i)];
    qa_sum[std::size_t(i)] += u_q[std::size_t(i)];
  }
  for (int k = 0; k < d.n_inform_kinds(); ++k) {
    const int a = nn + k;
    for (int pl = 0; pl < P; ++pl) {
      const int i = nn + k * P + pl;
      if (!mask[std::size_t(i)]) continue;
      qa_sum[std::size_t(a)] += u_q[std::size_t(i)];
      qp_sum[std::size_t(pl)] += u_q[std::size_t(i)];
      const double u = u_pi[std::size_t(i)];
      const double w = pi_master[std::size_t(i)];
      a_sum[std::size_t(a)] += u;
      w_sum[std::size_t(a)] += w;
      b_sum[std::size_t(pl)] += u;
      v_sum[std::size_t(pl)] += w;
      usum += u;
      b_inf += u;
      w_inf += w;
    }
  }

  detail::HeadGrads hg;
  hg.d_pi_logits.assign(std::size_t(d.summary_actions), 0.0);
  hg.d_q_out = qa_sum;
  hg.d_ppi_logits.assign(std::size_t(P), 0.0);
  hg.d_pq_out = qp_sum;
  for (int a = 0; a < d.summary_actions; ++a)
    hg.d_pi_logits[std::size_t(a)] = a_sum[std::size_t(a)] - usum * w_sum[std::size_t(a)];
  for (int pl = 0; pl < P; ++pl)
    hg.d_ppi_logits[std::size_t(pl)] = (b_sum[std::size_t(pl)] - usum * v_sum[std::size_t(pl)]) -
                                       (b_inf - usum * w_inf) * c.pi_p[std::size_t(pl)];
  detail::backprop_trunk(p, c, hg, grad);
}

inline void backward_accum(const NetworkParams& p, const ForwardCache& c, const Mask& mask,
                           const Vec& pi, const Vec& u_pi, const Vec& u_q, Vec& grad) {
  if (u_pi.size() != pi.size() || u_q.size() != pi.size() || mask.size() != pi.size())
    throw config_error("backward: upstream gradient shape mismatch");
  if (p.dims.master())
    backward_master_accum(p, c, mask, pi, u_pi, u_q, grad);
  else
    backward_summary_accum(p, c, mask, pi, u_pi, u_q, grad);
}

// Convenience single-shot backward (fresh forward, fresh gradient).
inline Vec backward(const NetworkParams& p, const Vec& belief, const Mask& mask, const Vec& u_pi,
                    const Vec& u_q) {
  ForwardCache c;
  PolicyOutput out = forward(p, belief, mask, &c);
  Vec grad(p.size(), 0.0);
  backward_accum(p, c, mask, out.pi, u_pi, u_q, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  Vec m, v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState fresh(std::size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }

  void save(std::ostream& os) const {
    io::write_vec(os, m);
    io::write_vec(os, v);
    io::write_u64(os, step);
    io::write_f64(os, beta1);
    io::write_f64(os, beta2);
    io::write_f64(os, eps);
  }

  static AdamState load(std::istream& is) {
    AdamState s;
    s.m = io::read_vec(is);
    s.v = io::read_vec(is);
    s.step = io::read_u64(is);
    s.beta1 = io::read_f64(is);
    s.beta2 = io::read_f64(is);
    s.eps = io::read_f64(is);
    return s;
  }
};

// Ascent step: params += lr * mhat / (sqrt(vhat) + eps).
inline void adam_step(NetworkParams& params, const Vec& grad, AdamState& state, double lr) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw config_error("adam_step: shape mismatch");
  if (!all_finite(grad)) throw numeric_error("adam_step: non-finite gradient");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.flat[i] += lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Average policy
// ---------------------------------------------------------------------------

// avg <- beta * avg + (1 - beta) * current, applied to the policy-relevant
// blocks only (trunk + pi heads).
inline void soft_update_average(NetworkParams& avg, const NetworkParams& current, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw config_error("soft_update_average: beta out of range");
  if (!(avg.dims == current.dims)) throw config_error("soft_update_average: dims mismatch");
  for (auto blk : avg.pi_blocks())
    for (std::size_t i = blk.offset; i < blk.offset + blk.size; ++i)
      avg.flat[i] = beta * avg.flat[i] + (1.0 - beta) * current.flat[i];
}

// ---------------------------------------------------------------------------
// KL divergence from the average policy
// ---------------------------------------------------------------------------

// Batch-mean KL(pi_avg || pi_current) and its gradient with respect to the
// current parameters (the average network is a constant).
inline double kl_and_grad(const NetworkParams& avg, const NetworkParams& current,
                          const std::vector<Vec>& beliefs, const std::vector<Mask>& masks,
                          Vec& grad_out) {
  if (beliefs.size() != masks.size() || beliefs.empty())
    throw config_error("kl_and_grad: empty or mismatched batch");
  grad_out.assign(current.size(), 0.0);
  double kl = 0.0;
  const double inv_n = 1.0 / double(beliefs.size());
  ForwardCache cc;
  for (std::size_t s = 0; s < beliefs.size(); ++s) {
    PolicyOutput pa = forward(avg, beliefs[s], masks[s]);
    PolicyOutput pc = forward(current, beliefs[s], masks[s], &cc);
    Vec u_pi(pc.pi.size(), 0.0);
    for (std::size_t i = 0; i < pc.pi.size(); ++i) {
      if (!masks[s][i] || pa.pi[i] <= 0.0) continue;
      kl += inv_n * pa.pi[i] * (std::log(pa.pi[i]) - std::log(pc.pi[i]));
      u_pi[i] = -inv_n * pa.pi[i];
    }
    Vec u_q(pc.pi.size(), 0.0);
    backward_accum(current, cc, masks[s], pc.pi, u_pi, u_q, grad_out);
  }
  return kl;
}

}  // namespace acerlab
