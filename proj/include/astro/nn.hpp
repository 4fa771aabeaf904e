#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "astro/errors.hpp"
#include "astro/rng.hpp"
#include "astro/tensor.hpp"

// Forward and reverse-mode rules for every layer the model stack uses. Each
// kernel is a pure function pair (forward fills a cache, backward consumes it)
// so the composed model controls all memory and ordering. Everything runs in
// double precision; gradient correctness is enforced by central-difference
// checks in the test suite.
namespace astro {

constexpr double kProbClamp = 1e-7;  // keeps log() finite in the loss

// ---------------------------------------------------------------------------
// Parameter storage

// Named parameter tensors with paired gradients and Adam moment state. The
// flat index enumerates every trainable scalar in registration order, which
// gives gradient checking a stable bijection.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value, grad, m, v;
  };

  size_t add(const std::string& name, std::vector<size_t> shape) {
    for (const auto& e : entries_)
      if (e.name == name) throw ValidationError("ParamStore: duplicate parameter '" + name + "'");
    Entry e;
    e.name = name;
    e.value = Tensor(shape);
    e.grad = Tensor(shape);
    e.m = Tensor(shape);
    e.v = Tensor(shape);
    offsets_.push_back(flat_size_);
    flat_size_ += e.value.numel();
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  size_t count() const { return entries_.size(); }
  size_t flat_size() const { return flat_size_; }

  Entry& entry(size_t id) { return entries_[id]; }
  const Entry& entry(size_t id) const { return entries_[id]; }
  Tensor& value(size_t id) { return entries_[id].value; }
  const Tensor& value(size_t id) const { return entries_[id].value; }
  Tensor& grad(size_t id) { return entries_[id].grad; }
  const Tensor& grad(size_t id) const { return entries_[id].grad; }

  size_t find(const std::string& name) const {
    for (size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    throw ValidationError("ParamStore: no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.zero();
  }

  std::pair<size_t, size_t> locate(size_t flat) const {
    if (flat >= flat_size_) throw ValidationError("ParamStore: flat index out of range");
    size_t id = offsets_.size() - 1;
    while (offsets_[id] > flat) --id;
    return {id, flat - offsets_[id]};
  }

  double get_flat(size_t flat) const {
    auto [id, off] = locate(flat);
    return entries_[id].value.data[off];
  }
  void set_flat(size_t flat, double v) {
    auto [id, off] = locate(flat);
    entries_[id].value.data[off] = v;
  }
  double grad_flat(size_t flat) const {
    auto [id, off] = locate(flat);
    return entries_[id].grad.data[off];
  }

  size_t adam_steps = 0;

 private:
  std::vector<Entry> entries_;
  std::vector<size_t> offsets_;
  size_t flat_size_ = 0;
};

// Uniform fan-in initialization, +-1/sqrt(fan_in).
inline void init_uniform_fanin(Tensor& w, size_t fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.data) v = rng.uniform(-s, s);
}

// ---------------------------------------------------------------------------
// Elementwise kernels

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void sigmoid_forward(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
}

// dx = dy * y * (1 - y), using the forward output.
inline void sigmoid_backward(const double* y, const double* dy, double* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
}

inline void relu_forward(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_forward_inplace(double* x, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (x[i] < 0.0) x[i] = 0.0;
}

// Mask from the forward output: positive activations pass gradient through.
inline void relu_backward(const double* y, const double* dy, double* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

inline void relu_backward_inplace(const double* y, double* dy, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (y[i] <= 0.0) dy[i] = 0.0;
}

// ---------------------------------------------------------------------------
// Affine

// y (rows x d_out) = x (rows x d_in) * w (d_in x d_out) + b.
inline void linear_forward(const double* x, size_t rows, const Tensor& w, const Tensor& b,
                           double* y) {
  const size_t d_in = w.shape[0], d_out = w.shape[1];
  matmul(x, w.ptr(), y, rows, d_in, d_out);
  for (size_t r = 0; r < rows; ++r) {
    double* yr = y + r * d_out;
    for (size_t j = 0; j < d_out; ++j) yr[j] += b.data[j];
  }
}

// Accumulates dw/db; writes dx when non-null.
inline void linear_backward(const double* x, const double* dy, size_t rows, const Tensor& w,
                            Tensor& dw, Tensor& db, double* dx) {
  const size_t d_in = w.shape[0], d_out = w.shape[1];
  matmul_tn_acc(x, dy, dw.ptr(), rows, d_in, d_out);
  for (size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * d_out;
    for (size_t j = 0; j < d_out; ++j) db.data[j] += dyr[j];
  }
  if (dx) matmul_nt(dy, w.ptr(), dx, rows, d_out, d_in);
}

// Tensor-level convenience with shape validation (library surface; the model
// uses the raw forms above on preallocated workspace buffers).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape.empty() || x.shape.back() != w.shape[0])
    throw ValidationError("linear: input shape " + shape_str(x.shape) +
                          " incompatible with weight shape " + shape_str(w.shape));
  if (b.numel() != w.shape[1])
    throw ValidationError("linear: bias shape " + shape_str(b.shape) +
                          " incompatible with weight shape " + shape_str(w.shape));
  const size_t rows = x.numel() / w.shape[0];
  std::vector<size_t> out_shape = x.shape;
  out_shape.back() = w.shape[1];
  Tensor y(out_shape);
  linear_forward(x.ptr(), rows, w, b, y.ptr());
  return y;
}

// ---------------------------------------------------------------------------
// Graph convolution: y = op * h * w + b, with op the normalized propagation
// operator. The op*h product is cached for the weight gradient.

inline void gcn_forward(const Tensor& op, const double* h, size_t n, const Tensor& w,
                        const Tensor& b, double* p_cache, double* y) {
  const size_t d_in = w.shape[0];
  matmul(op.ptr(), h, p_cache, n, n, d_in);
  linear_forward(p_cache, n, w, b, y);
}

// dh (n x d_in, accumulated) = op^T * (dy * w^T); dw += (op*h)^T * dy.
inline void gcn_backward(const Tensor& op, const double* p_cache, const double* dy, size_t n,
                         const Tensor& w, Tensor& dw, Tensor& db, double* dp_scratch,
                         double* dh) {
  const size_t d_in = w.shape[0], d_out = w.shape[1];
  matmul_tn_acc(p_cache, dy, dw.ptr(), n, d_in, d_out);
  for (size_t r = 0; r < n; ++r) {
    const double* dyr = dy + r * d_out;
    for (size_t j = 0; j < d_out; ++j) db.data[j] += dyr[j];
  }
  if (dh) {
    matmul_nt(dy, w.ptr(), dp_scratch, n, d_out, d_in);
    matmul_tn_acc(op.ptr(), dp_scratch, dh, n, n, d_in);
  }
}

inline Tensor gcn_layer(const Tensor& h, const Tensor& op, const Tensor& w, const Tensor& b) {
  if (op.shape.size() != 2 || op.shape[0] != op.shape[1])
    throw ValidationError("gcn_layer: operator must be square, got " + shape_str(op.shape));
  if (h.shape.size() != 2 || h.shape[0] != op.shape[0])
    throw ValidationError("gcn_layer: node features " + shape_str(h.shape) +
                          " incompatible with operator " + shape_str(op.shape));
  if (h.shape[1] != w.shape[0])
    throw ValidationError("gcn_layer: feature width " + shape_str(h.shape) +
                          " incompatible with weight " + shape_str(w.shape));
  const size_t n = h.shape[0];
  Tensor p({n, w.shape[0]});
  Tensor y({n, w.shape[1]});
  gcn_forward(op, h.ptr(), n, w, b, p.ptr(), y.ptr());
  return y;
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM. Gate column order [input | forget | cell | output].

struct LstmDirCache {
  // All B x T x * , indexed by input position (not processing order).
  Tensor gates;  // post-activation i,f,g,o packed as 4*dh columns
  Tensor c;      // cell state
  Tensor tc;     // tanh(c)
  Tensor h;      // hidden output per step

  void resize(size_t bsz, size_t t_len, size_t dh) {
    gates = Tensor({bsz, t_len, 4 * dh});
    c = Tensor({bsz, t_len, dh});
    tc = Tensor({bsz, t_len, dh});
    h = Tensor({bsz, t_len, dh});
  }
};

namespace detail {

// Gathers a time slice (B x width) out of a B x T x width sequence.
inline void gather_step(const double* seq, size_t bsz, size_t t_len, size_t width, size_t pos,
                        double* out) {
  for (size_t b = 0; b < bsz; ++b)
    std::memcpy(out + b * width, seq + (b * t_len + pos) * width, width * sizeof(double));
}

inline void scatter_step_add(const double* in, size_t bsz, size_t t_len, size_t width,
                             size_t pos, double* seq) {
  for (size_t b = 0; b < bsz; ++b) {
    double* dst = seq + (b * t_len + pos) * width;
    const double* src = in + b * width;
    for (size_t j = 0; j < width; ++j) dst[j] += src[j];
  }
}

}  // namespace detail

// One direction over x_seq (B x T x d_in). When reverse, processing runs from
// the last position to the first; cache slots stay aligned to input positions
// so cache.h[b, t, :] is always the direction's output for position t.
inline void lstm_dir_forward(const double* x_seq, size_t bsz, size_t t_len, size_t d_in,
                             size_t dh, const Tensor& wx, const Tensor& wh, const Tensor& b,
                             bool reverse, LstmDirCache& cache) {
  cache.resize(bsz, t_len, dh);
  std::vector<double> xg(bsz * d_in), z(bsz * 4 * dh);
  std::vector<double> h_prev(bsz * dh, 0.0), c_prev(bsz * dh, 0.0);

  for (size_t s = 0; s < t_len; ++s) {
    const size_t pos = reverse ? t_len - 1 - s : s;
    detail::gather_step(x_seq, bsz, t_len, d_in, pos, xg.data());
    matmul(xg.data(), wx.ptr(), z.data(), bsz, d_in, 4 * dh);
    matmul(h_prev.data(), wh.ptr(), z.data(), bsz, dh, 4 * dh, /*accumulate=*/true);
    for (size_t r = 0; r < bsz; ++r) {
      double* zr = z.data() + r * 4 * dh;
      for (size_t j = 0; j < 4 * dh; ++j) zr[j] += b.data[j];
    }
    for (size_t r = 0; r < bsz; ++r) {
      const double* zr = z.data() + r * 4 * dh;
      double* gates = cache.gates.ptr() + (r * t_len + pos) * 4 * dh;
      double* c = cache.c.ptr() + (r * t_len + pos) * dh;
      double* tc = cache.tc.ptr() + (r * t_len + pos) * dh;
      double* h = cache.h.ptr() + (r * t_len + pos) * dh;
      const double* cp = c_prev.data() + r * dh;
      for (size_t j = 0; j < dh; ++j) {
        const double gi = sigmoid(zr[j]);
        const double gf = sigmoid(zr[dh + j]);
        const double gg = std::tanh(zr[2 * dh + j]);
        const double go = sigmoid(zr[3 * dh + j]);
        gates[j] = gi;
        gates[dh + j] = gf;
        gates[2 * dh + j] = gg;
        gates[3 * dh + j] = go;
        c[j] = gf * cp[j] + gi * gg;
        tc[j] = std::tanh(c[j]);
        h[j] = go * tc[j];
      }
    }
    detail::gather_step(cache.h.ptr(), bsz, t_len, dh, pos, h_prev.data());
    detail::gather_step(cache.c.ptr(), bsz, t_len, dh, pos, c_prev.data());
  }
}

// Backpropagation through time for one direction. dout_seq is B x T x dh
// aligned to input positions; dx_seq (B x T x d_in) is accumulated when given.
inline void lstm_dir_backward(const double* x_seq, size_t bsz, size_t t_len, size_t d_in,
                              size_t dh, const Tensor& wx, const Tensor& wh,
                              const LstmDirCache& cache, bool reverse,
                              const double* dout_seq, Tensor& dwx, Tensor& dwh, Tensor& db,
                              double* dx_seq) {
  std::vector<double> xg(bsz * d_in), hp(bsz * dh);
  std::vector<double> dz(bsz * 4 * dh), dh_rec(bsz * dh, 0.0), dc_rec(bsz * dh, 0.0);
  std::vector<double> dxg(bsz * d_in);

  for (size_t s = t_len; s-- > 0;) {
    const size_t pos = reverse ? t_len - 1 - s : s;
    const bool first_step = (s == 0);
    const size_t prev_pos = reverse ? pos + 1 : pos - 1;

    for (size_t r = 0; r < bsz; ++r) {
      const double* gates = cache.gates.ptr() + (r * t_len + pos) * 4 * dh;
      const double* tc = cache.tc.ptr() + (r * t_len + pos) * dh;
      const double* dout = dout_seq + (r * t_len + pos) * dh;
      const double* cprev =
          first_step ? nullptr : cache.c.ptr() + (r * t_len + prev_pos) * dh;
      double* dzr = dz.data() + r * 4 * dh;
      double* dhr = dh_rec.data() + r * dh;
      double* dcr = dc_rec.data() + r * dh;
      for (size_t j = 0; j < dh; ++j) {
        const double gi = gates[j], gf = gates[dh + j], gg = gates[2 * dh + j],
                     go = gates[3 * dh + j];
        const double dht = dout[j] + dhr[j];
        const double dc = dcr[j] + dht * go * (1.0 - tc[j] * tc[j]);
        const double cp = first_step ? 0.0 : cprev[j];
        dzr[j] = dc * gg * gi * (1.0 - gi);                    // input gate
        dzr[dh + j] = dc * cp * gf * (1.0 - gf);               // forget gate
        dzr[2 * dh + j] = dc * gi * (1.0 - gg * gg);           // cell candidate
        dzr[3 * dh + j] = dht * tc[j] * go * (1.0 - go);       // output gate
        dcr[j] = dc * gf;
      }
    }

    detail::gather_step(x_seq, bsz, t_len, d_in, pos, xg.data());
    matmul_tn_acc(xg.data(), dz.data(), dwx.ptr(), bsz, d_in, 4 * dh);
    if (!first_step) {
      detail::gather_step(cache.h.ptr(), bsz, t_len, dh, prev_pos, hp.data());
      matmul_tn_acc(hp.data(), dz.data(), dwh.ptr(), bsz, dh, 4 * dh);
      matmul_nt(dz.data(), wh.ptr(), dh_rec.data(), bsz, 4 * dh, dh);
    } else {
      std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    }
    for (size_t r = 0; r < bsz; ++r) {
      const double* dzr = dz.data() + r * 4 * dh;
      for (size_t j = 0; j < 4 * dh; ++j) db.data[j] += dzr[j];
    }
    if (dx_seq) {
      matmul_nt(dz.data(), wx.ptr(), dxg.data(), bsz, 4 * dh, d_in);
      detail::scatter_step_add(dxg.data(), bsz, t_len, d_in, pos, dx_seq);
    }
  }
}

struct BiLstmCache {
  LstmDirCache fwd, bwd;
};

// Full bidirectional pass: out[b, t, :] = [forward_t || backward_t].
inline void bilstm_forward(const double* x_seq, size_t bsz, size_t t_len, size_t d_in,
                           size_t dh, const Tensor& fwx, const Tensor& fwh, const Tensor& fb,
                           const Tensor& bwx, const Tensor& bwh, const Tensor& bb,
                           BiLstmCache& cache, double* out /* B x T x 2dh */) {
  lstm_dir_forward(x_seq, bsz, t_len, d_in, dh, fwx, fwh, fb, false, cache.fwd);
  lstm_dir_forward(x_seq, bsz, t_len, d_in, dh, bwx, bwh, bb, true, cache.bwd);
  for (size_t b = 0; b < bsz; ++b)
    for (size_t t = 0; t < t_len; ++t) {
      double* dst = out + (b * t_len + t) * 2 * dh;
      std::memcpy(dst, cache.fwd.h.ptr() + (b * t_len + t) * dh, dh * sizeof(double));
      std::memcpy(dst + dh, cache.bwd.h.ptr() + (b * t_len + t) * dh, dh * sizeof(double));
    }
}

inline void bilstm_backward(const double* x_seq, size_t bsz, size_t t_len, size_t d_in,
                            size_t dh, const Tensor& fwx, const Tensor& fwh,
                            const Tensor& bwx, const Tensor& bwh, const BiLstmCache& cache,
                            const double* dout /* B x T x 2dh */, Tensor& dfwx, Tensor& dfwh,
                            Tensor& dfb, Tensor& dbwx, Tensor& dbwh, Tensor& dbb,
                            double* dx_seq) {
  std::vector<double> dpart(bsz * t_len * dh);
  for (size_t b = 0; b < bsz; ++b)
    for (size_t t = 0; t < t_len; ++t)
      std::memcpy(dpart.data() + (b * t_len + t) * dh, dout + (b * t_len + t) * 2 * dh,
                  dh * sizeof(double));
  lstm_dir_backward(x_seq, bsz, t_len, d_in, dh, fwx, fwh, cache.fwd, false, dpart.data(),
                    dfwx, dfwh, dfb, dx_seq);
  for (size_t b = 0; b < bsz; ++b)
    for (size_t t = 0; t < t_len; ++t)
      std::memcpy(dpart.data() + (b * t_len + t) * dh,
                  dout + (b * t_len + t) * 2 * dh + dh, dh * sizeof(double));
  lstm_dir_backward(x_seq, bsz, t_len, d_in, dh, bwx, bwh, cache.bwd, true, dpart.data(),
                    dbwx, dbwh, dbb, dx_seq);
}

// Single-sequence convenience wrapper (T x d_in -> T x 2dh).
inline Tensor bilstm(const Tensor& g_seq, const Tensor& fwx, const Tensor& fwh,
                     const Tensor& fb, const Tensor& bwx, const Tensor& bwh,
                     const Tensor& bb) {
  if (g_seq.shape.size() != 2)
    throw ValidationError("bilstm: expected T x d input, got " + shape_str(g_seq.shape));
  const size_t t_len = g_seq.shape[0], d_in = g_seq.shape[1];
  const size_t dh = fwh.shape[0];
  BiLstmCache cache;
  Tensor out({t_len, 2 * dh});
  bilstm_forward(g_seq.ptr(), 1, t_len, d_in, dh, fwx, fwh, fb, bwx, bwh, bb, cache,
                 out.ptr());
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention over a single fused vector. With one key the
// per-head softmax is identically 1, so the layer reduces to the value and
// output projections; the query/key projections cannot influence the output
// and receive exactly zero gradient. The machinery is still executed
// literally so the cached attention weights can be inspected.

struct MhaCache {
  Tensor v;     // B x d, value projection (equals concatenated head outputs)
  Tensor attn;  // B x heads, always exactly 1.0
};

inline void mha_forward(const double* z, size_t bsz, size_t d, size_t heads,
                        const Tensor& wq, const Tensor& bq, const Tensor& wk,
                        const Tensor& bk, const Tensor& wv, const Tensor& bv,
                        const Tensor& wo, const Tensor& bo, MhaCache& cache, double* out) {
  if (heads == 0 || d % heads != 0)
    throw ValidationError("mha_single: model width " + std::to_string(d) +
                          " not divisible by " + std::to_string(heads) + " heads");
  const size_t dh = d / heads;
  cache.v = Tensor({bsz, d});
  cache.attn = Tensor({bsz, heads});
  std::vector<double> q(bsz * d), k(bsz * d);
  linear_forward(z, bsz, wq, bq, q.data());
  linear_forward(z, bsz, wk, bk, k.data());
  linear_forward(z, bsz, wv, bv, cache.v.ptr());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (size_t r = 0; r < bsz; ++r) {
    for (size_t hd = 0; hd < heads; ++hd) {
      double logit = 0.0;
      for (size_t j = 0; j < dh; ++j)
        logit += q[r * d + hd * dh + j] * k[r * d + hd * dh + j];
      logit *= scale;
      // softmax over the single key
      const double weight = std::exp(logit - logit);
      cache.attn.at(r, hd) = weight;
      const double* vh = cache.v.ptr() + r * d + hd * dh;
      double* oh = out + r * d + hd * dh;  // concatenated head outputs, pre-projection
      for (size_t j = 0; j < dh; ++j) oh[j] = weight * vh[j];
    }
  }
  // out currently holds concat_heads(attn * v) == v; apply the output projection
  std::vector<double> concat(out, out + bsz * d);
  linear_forward(concat.data(), bsz, wo, bo, out);
}

inline void mha_backward(const double* z, size_t bsz, size_t d, const Tensor& wv,
                         const Tensor& wo, const MhaCache& cache, const double* dout,
                         Tensor& dwv, Tensor& dbv, Tensor& dwo, Tensor& dbo, double* dz) {
  std::vector<double> dv(bsz * d);
  linear_backward(cache.v.ptr(), dout, bsz, wo, dwo, dbo, dv.data());
  linear_backward(z, dv.data(), bsz, wv, dwv, dbv, dz);
  // query/key gradients are identically zero: the softmax of a single logit is
  // the constant 1, so no gradient flows through the attention weights.
}

// Library-surface wrapper for one vector.
inline Tensor mha_single(const Tensor& z, size_t heads, const Tensor& wq, const Tensor& bq,
                         const Tensor& wk, const Tensor& bk, const Tensor& wv,
                         const Tensor& bv, const Tensor& wo, const Tensor& bo) {
  const size_t d = z.numel();
  MhaCache cache;
  Tensor out({d});
  mha_forward(z.ptr(), 1, d, heads, wq, bq, wk, bk, wv, bv, wo, bo, cache, out.ptr());
  return out;
}

// ---------------------------------------------------------------------------
// Weighted binary cross-entropy. Probabilities are clamped to
// [kProbClamp, 1 - kProbClamp]; the clamp also zeroes the gradient outside.

inline double weighted_bce(const double* p, const int* y, size_t n, double w_pos) {
  if (n == 0) throw ValidationError("weighted_bce: empty batch");
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    acc += y[i] ? w_pos * std::log(pc) : std::log(1.0 - pc);
  }
  return -acc / static_cast<double>(n);
}

inline void weighted_bce_backward(const double* p, const int* y, size_t n, double w_pos,
                                  double* dp) {
  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) {
      dp[i] = 0.0;  // clamped region
      continue;
    }
    dp[i] = y[i] ? -w_pos / p[i] * inv_n : (1.0 / (1.0 - p[i])) * inv_n;
  }
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected adaptive-moment update over every parameter.
inline void adam_step(ParamStore& store, const AdamConfig& cfg = {}) {
  store.adam_steps += 1;
  const double t = static_cast<double>(store.adam_steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t id = 0; id < store.count(); ++id) {
    auto& e = store.entry(id);
    for (size_t i = 0; i < e.value.numel(); ++i) {
      const double g = e.grad.data[i];
      e.m.data[i] = cfg.beta1 * e.m.data[i] + (1.0 - cfg.beta1) * g;
      e.v.data[i] = cfg.beta2 * e.v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m.data[i] / bc1;
      const double vhat = e.v.data[i] / bc2;
      e.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_flat_index = 0;
  size_t n_checked = 0;
};

// Compares the analytic gradients currently stored in `store` (the caller
// runs one backward pass first) against central differences of f. Relative
// error uses max(|analytic|, |numeric|, 1e-6) as denominator so near-zero
// gradients are judged on an absolute scale.
template <typename F>
GradCheckReport grad_check(F&& f, ParamStore& store, double h = 1e-4) {
  GradCheckReport report;
  for (size_t i = 0; i < store.flat_size(); ++i) {
    const double saved = store.get_flat(i);
    store.set_flat(i, saved + h);
    const double f_plus = f();
    store.set_flat(i, saved - h);
    const double f_minus = f();
    store.set_flat(i, saved);
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic = store.grad_flat(i);
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    const double rel = std::fabs(analytic - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      auto [id, off] = store.locate(i);
      report.worst_param = store.entry(id).name;
      report.worst_flat_index = i;
    }
    ++report.n_checked;
  }
  return report;
}

}  // namespace astro
