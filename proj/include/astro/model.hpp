#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "astro/errors.hpp"
#include "astro/ingest.hpp"
#include "astro/metrics.hpp"
#include "astro/nn.hpp"
#include "astro/rng.hpp"
#include "astro/score_set.hpp"
#include "astro/tensor.hpp"
#include "astro/topology.hpp"

namespace astro {

// ---------------------------------------------------------------------------
// Configuration

struct AstroConfig {
  size_t n_nodes = 51;
  size_t n_features = 1;
  size_t window = 10;
  size_t d_in = 32;      // per-node projection width
  size_t d_g = 32;       // graph-conv hidden width
  size_t d_h = 32;       // recurrent hidden width per direction
  size_t n_heads = 4;
  size_t fuse_dim = 64;  // fused-representation width fed to attention
  std::vector<size_t> fc_widths = {64, 32, 16};
  size_t batch = 64;
  double lr = 1e-3;
  size_t epochs = 30;
  double w_pos = 1.0;    // positive-class weight in the loss
  uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  bool operator==(const AstroConfig&) const = default;

  void validate() const {
    if (n_nodes == 0 || n_features == 0 || window == 0 || d_in == 0 || d_g == 0 ||
        d_h == 0 || fuse_dim == 0 || batch == 0)
      throw ValidationError("model config: all dimensions must be positive");
    if (fc_widths.size() != 3)
      throw ValidationError("model config: exactly three hidden FC widths expected");
    for (size_t w : fc_widths)
      if (w == 0) throw ValidationError("model config: FC widths must be positive");
    if (n_heads == 0 || fuse_dim % n_heads != 0)
      throw ValidationError("model config: fused width " + std::to_string(fuse_dim) +
                            " must be divisible by " + std::to_string(n_heads) + " heads");
    if (!(w_pos > 0.0)) throw ValidationError("model config: w_pos must be > 0");
  }

  AdamConfig adam() const { return AdamConfig{lr, adam_beta1, adam_beta2, adam_eps}; }
};

inline nlohmann::json to_json(const AstroConfig& c) {
  return nlohmann::json{{"n_nodes", c.n_nodes},     {"n_features", c.n_features},
                        {"window", c.window},       {"d_in", c.d_in},
                        {"d_g", c.d_g},             {"d_h", c.d_h},
                        {"n_heads", c.n_heads},     {"fuse_dim", c.fuse_dim},
                        {"fc_widths", c.fc_widths}, {"batch", c.batch},
                        {"lr", c.lr},               {"epochs", c.epochs},
                        {"w_pos", c.w_pos},         {"seed", c.seed},
                        {"adam_beta1", c.adam_beta1},
                        {"adam_beta2", c.adam_beta2},
                        {"adam_eps", c.adam_eps}};
}

inline AstroConfig astro_config_from_json(const nlohmann::json& j) {
  AstroConfig c;
  try {
    c.n_nodes = j.value("n_nodes", c.n_nodes);
    c.n_features = j.value("n_features", c.n_features);
    c.window = j.value("window", c.window);
    c.d_in = j.value("d_in", c.d_in);
    c.d_g = j.value("d_g", c.d_g);
    c.d_h = j.value("d_h", c.d_h);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.fuse_dim = j.value("fuse_dim", c.fuse_dim);
    c.fc_widths = j.value("fc_widths", c.fc_widths);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.w_pos = j.value("w_pos", c.w_pos);
    c.seed = j.value("seed", c.seed);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: malformed document: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// The composed network. Per window: per-node MLP projection, two graph
// convolutions with ReLU, mean pooling over nodes per time step, a
// bidirectional LSTM over the pooled sequence, fusion of the last pooled
// vector with the last recurrent state, a ReLU projection to fuse_dim,
// single-vector multi-head attention, three ReLU FC layers and a sigmoid head.

class AstroModel {
 public:
  AstroModel(const AstroConfig& cfg, const TopologyGraph& graph) : cfg_(cfg) {
    cfg_.validate();
    if (graph.n_nodes != cfg_.n_nodes)
      throw ValidationError("model: graph has " + std::to_string(graph.n_nodes) +
                            " nodes, config expects " + std::to_string(cfg_.n_nodes));
    op_ = normalized_operator(graph);
    register_params();
  }

  // Seeded fan-in-uniform initialization; forget-gate biases start at +1.
  void init_params(uint64_t seed) {
    Rng rng(derive_seed(seed, 0x11));
    auto init_w = [&](size_t id, size_t fan_in) {
      init_uniform_fanin(store_.value(id), fan_in, rng);
    };
    init_w(ids_.mlp_w1, cfg_.n_features);
    init_w(ids_.mlp_w2, cfg_.d_in);
    init_w(ids_.gcn1_w, cfg_.d_in);
    init_w(ids_.gcn2_w, cfg_.d_g);
    init_w(ids_.lf_wx, cfg_.d_g);
    init_w(ids_.lf_wh, cfg_.d_h);
    init_w(ids_.lb_wx, cfg_.d_g);
    init_w(ids_.lb_wh, cfg_.d_h);
    init_w(ids_.fuse_w, fuse_in());
    init_w(ids_.att_wq, cfg_.fuse_dim);
    init_w(ids_.att_wk, cfg_.fuse_dim);
    init_w(ids_.att_wv, cfg_.fuse_dim);
    init_w(ids_.att_wo, cfg_.fuse_dim);
    size_t prev = cfg_.fuse_dim;
    for (size_t i = 0; i < 3; ++i) {
      init_w(ids_.fc_w[i], prev);
      prev = cfg_.fc_widths[i];
    }
    init_w(ids_.head_w, prev);
    for (auto& dir_b : {ids_.lf_b, ids_.lb_b}) {
      Tensor& b = store_.value(dir_b);
      for (size_t j = cfg_.d_h; j < 2 * cfg_.d_h; ++j) b.data[j] = 1.0;
    }
  }

  const AstroConfig& config() const { return cfg_; }
  const Tensor& op() const { return op_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Scores in [0,1], one per window in the batch.
  std::vector<double> forward(const Tensor& x) {
    const size_t bsz = check_input(x);
    run_forward(x, bsz);
    return std::vector<double>(ws_.p.begin(), ws_.p.begin() + bsz);
  }

  double loss(const Tensor& x, const std::vector<int>& y) {
    const size_t bsz = check_input(x);
    if (y.size() != bsz)
      throw ValidationError("model: label count does not match batch size");
    run_forward(x, bsz);
    return weighted_bce(ws_.p.data(), y.data(), bsz, cfg_.w_pos);
  }

  // Forward + loss + full reverse pass; gradients are accumulated into the
  // store after zeroing.
  double loss_and_grad(const Tensor& x, const std::vector<int>& y) {
    const size_t bsz = check_input(x);
    if (y.size() != bsz)
      throw ValidationError("model: label count does not match batch size");
    store_.zero_grad();
    run_forward(x, bsz);
    const double loss_value = weighted_bce(ws_.p.data(), y.data(), bsz, cfg_.w_pos);
    run_backward(y, bsz);
    return loss_value;
  }

  // Deterministic batch inference over a window subset.
  ScoreSet score_windows(const WindowStream& windows, const std::vector<size_t>& ids,
                         size_t batch_size = 0) {
    if (batch_size == 0) batch_size = cfg_.batch;
    ScoreSet out;
    out.scores.reserve(ids.size());
    for (size_t at = 0; at < ids.size(); at += batch_size) {
      const size_t take = std::min(batch_size, ids.size() - at);
      std::vector<size_t> chunk(ids.begin() + at, ids.begin() + at + take);
      WindowBatch b = windows.gather(chunk);
      const auto scores = forward(b.x);
      for (size_t i = 0; i < take; ++i) {
        out.scores.push_back(scores[i]);
        out.labels.push_back(b.y[i]);
        out.origin_indices.push_back(b.origin_indices[i]);
      }
    }
    return out;
  }

  struct ParamIds {
    size_t mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    size_t gcn1_w, gcn1_b, gcn2_w, gcn2_b;
    size_t lf_wx, lf_wh, lf_b, lb_wx, lb_wh, lb_b;
    size_t fuse_w, fuse_b;
    size_t att_wq, att_bq, att_wk, att_bk, att_wv, att_bv, att_wo, att_bo;
    size_t fc_w[3], fc_b[3];
    size_t head_w, head_b;
  };
  const ParamIds& ids() const { return ids_; }

 private:
  size_t fuse_in() const { return cfg_.d_g + 2 * cfg_.d_h; }

  void register_params() {
    auto& c = cfg_;
    ids_.mlp_w1 = store_.add("mlp.w1", {c.n_features, c.d_in});
    ids_.mlp_b1 = store_.add("mlp.b1", {c.d_in});
    ids_.mlp_w2 = store_.add("mlp.w2", {c.d_in, c.d_in});
    ids_.mlp_b2 = store_.add("mlp.b2", {c.d_in});
    ids_.gcn1_w = store_.add("gcn1.w", {c.d_in, c.d_g});
    ids_.gcn1_b = store_.add("gcn1.b", {c.d_g});
    ids_.gcn2_w = store_.add("gcn2.w", {c.d_g, c.d_g});
    ids_.gcn2_b = store_.add("gcn2.b", {c.d_g});
    ids_.lf_wx = store_.add("lstm.fwd.wx", {c.d_g, 4 * c.d_h});
    ids_.lf_wh = store_.add("lstm.fwd.wh", {c.d_h, 4 * c.d_h});
    ids_.lf_b = store_.add("lstm.fwd.b", {4 * c.d_h});
    ids_.lb_wx = store_.add("lstm.bwd.wx", {c.d_g, 4 * c.d_h});
    ids_.lb_wh = store_.add("lstm.bwd.wh", {c.d_h, 4 * c.d_h});
    ids_.lb_b = store_.add("lstm.bwd.b", {4 * c.d_h});
    ids_.fuse_w = store_.add("fuse.w", {fuse_in(), c.fuse_dim});
    ids_.fuse_b = store_.add("fuse.b", {c.fuse_dim});
    ids_.att_wq = store_.add("attn.wq", {c.fuse_dim, c.fuse_dim});
    ids_.att_bq = store_.add("attn.bq", {c.fuse_dim});
    ids_.att_wk = store_.add("attn.wk", {c.fuse_dim, c.fuse_dim});
    ids_.att_bk = store_.add("attn.bk", {c.fuse_dim});
    ids_.att_wv = store_.add("attn.wv", {c.fuse_dim, c.fuse_dim});
    ids_.att_bv = store_.add("attn.bv", {c.fuse_dim});
    ids_.att_wo = store_.add("attn.wo", {c.fuse_dim, c.fuse_dim});
    ids_.att_bo = store_.add("attn.bo", {c.fuse_dim});
    size_t prev = c.fuse_dim;
    for (size_t i = 0; i < 3; ++i) {
      ids_.fc_w[i] = store_.add("fc" + std::to_string(i + 1) + ".w", {prev, c.fc_widths[i]});
      ids_.fc_b[i] = store_.add("fc" + std::to_string(i + 1) + ".b", {c.fc_widths[i]});
      prev = c.fc_widths[i];
    }
    ids_.head_w = store_.add("head.w", {prev, 1});
    ids_.head_b = store_.add("head.b", {1});
  }

  size_t check_input(const Tensor& x) const {
    if (x.shape.size() != 4)
      throw ValidationError("model input: expected B x N x F x T tensor, got " +
                            shape_str(x.shape));
    if (x.shape[1] != cfg_.n_nodes || x.shape[2] != cfg_.n_features ||
        x.shape[3] != cfg_.window) {
      std::ostringstream os;
      os << "model input: shape " << shape_str(x.shape) << " does not match config (N="
         << cfg_.n_nodes << ", F=" << cfg_.n_features << ", T=" << cfg_.window << ")";
      throw ValidationError(os.str());
    }
    if (x.shape[0] == 0) throw ValidationError("model input: empty batch");
    return x.shape[0];
  }

  struct Workspace {
    size_t cap = 0;
    // per-time-step stacks, each T x (B*N) x width
    std::vector<Tensor> xt, h1, h2, p1, g1, p2, g2;
    Tensor gseq, lstm_out;     // B x T x d_g, B x T x 2dh
    BiLstmCache lstm;
    Tensor zfuse, zprime, a;   // B x fuse_in, B x fuse, B x fuse
    MhaCache mha;
    std::vector<Tensor> fc;    // post-ReLU activations, B x width
    std::vector<double> logit, p;
    // backward scratch
    Tensor dgseq, dlstm_out;
    std::vector<double> d_a, d_b, gcn_scratch;
  };

  void ensure_workspace(size_t bsz) {
    if (bsz <= ws_.cap) return;
    const auto& c = cfg_;
    const size_t rows = bsz * c.n_nodes;
    auto stack = [&](std::vector<Tensor>& v, size_t width) {
      v.assign(c.window, Tensor({rows, width}));
    };
    stack(ws_.xt, c.n_features);
    stack(ws_.h1, c.d_in);
    stack(ws_.h2, c.d_in);
    stack(ws_.p1, c.d_in);
    stack(ws_.g1, c.d_g);
    stack(ws_.p2, c.d_g);
    stack(ws_.g2, c.d_g);
    ws_.gseq = Tensor({bsz, c.window, c.d_g});
    ws_.lstm_out = Tensor({bsz, c.window, 2 * c.d_h});
    ws_.zfuse = Tensor({bsz, fuse_in()});
    ws_.zprime = Tensor({bsz, c.fuse_dim});
    ws_.a = Tensor({bsz, c.fuse_dim});
    ws_.fc.assign(3, Tensor());
    for (size_t i = 0; i < 3; ++i) ws_.fc[i] = Tensor({bsz, c.fc_widths[i]});
    ws_.logit.assign(bsz, 0.0);
    ws_.p.assign(bsz, 0.0);
    ws_.dgseq = Tensor({bsz, c.window, c.d_g});
    ws_.dlstm_out = Tensor({bsz, c.window, 2 * c.d_h});
    size_t scratch = std::max({rows * c.d_in, rows * c.d_g, bsz * fuse_in(),
                               bsz * c.fuse_dim, bsz * 2 * c.d_h});
    for (size_t w : c.fc_widths) scratch = std::max(scratch, bsz * w);
    ws_.d_a.assign(scratch, 0.0);
    ws_.d_b.assign(scratch, 0.0);
    ws_.gcn_scratch.assign(c.n_nodes * std::max(c.d_in, c.d_g), 0.0);
    ws_.cap = bsz;
  }

  const Tensor& v(size_t id) const { return store_.value(id); }
  Tensor& g(size_t id) { return store_.grad(id); }

  void run_forward(const Tensor& x, size_t bsz) {
    ensure_workspace(bsz);
    const auto& c = cfg_;
    const size_t n = c.n_nodes, f = c.n_features, t_len = c.window;
    const size_t rows = bsz * n;

    for (size_t t = 0; t < t_len; ++t) {
      // gather node features for step t: row (b*N + n), col f
      double* xt = ws_.xt[t].ptr();
      const double* xp = x.ptr();
      for (size_t r = 0; r < rows; ++r)
        for (size_t ff = 0; ff < f; ++ff) xt[r * f + ff] = xp[(r * f + ff) * t_len + t];

      linear_forward(xt, rows, v(ids_.mlp_w1), v(ids_.mlp_b1), ws_.h1[t].ptr());
      relu_forward_inplace(ws_.h1[t].ptr(), rows * c.d_in);
      linear_forward(ws_.h1[t].ptr(), rows, v(ids_.mlp_w2), v(ids_.mlp_b2),
                     ws_.h2[t].ptr());

      for (size_t b = 0; b < bsz; ++b) {
        gcn_forward(op_, ws_.h2[t].row(b * n), n, v(ids_.gcn1_w), v(ids_.gcn1_b),
                    ws_.p1[t].row(b * n), ws_.g1[t].row(b * n));
      }
      relu_forward_inplace(ws_.g1[t].ptr(), rows * c.d_g);
      for (size_t b = 0; b < bsz; ++b) {
        gcn_forward(op_, ws_.g1[t].row(b * n), n, v(ids_.gcn2_w), v(ids_.gcn2_b),
                    ws_.p2[t].row(b * n), ws_.g2[t].row(b * n));
      }
      relu_forward_inplace(ws_.g2[t].ptr(), rows * c.d_g);

      // mean-pool node embeddings into the sequence tensor
      const double inv_n = 1.0 / static_cast<double>(n);
      for (size_t b = 0; b < bsz; ++b) {
        double* gt = ws_.gseq.ptr() + (b * t_len + t) * c.d_g;
        std::fill(gt, gt + c.d_g, 0.0);
        for (size_t node = 0; node < n; ++node) {
          const double* src = ws_.g2[t].row(b * n + node);
          for (size_t j = 0; j < c.d_g; ++j) gt[j] += src[j];
        }
        for (size_t j = 0; j < c.d_g; ++j) gt[j] *= inv_n;
      }
    }

    bilstm_forward(ws_.gseq.ptr(), bsz, t_len, c.d_g, c.d_h, v(ids_.lf_wx), v(ids_.lf_wh),
                   v(ids_.lf_b), v(ids_.lb_wx), v(ids_.lb_wh), v(ids_.lb_b), ws_.lstm,
                   ws_.lstm_out.ptr());

    // z_fuse = [g_{T-1} || h_temp]
    for (size_t b = 0; b < bsz; ++b) {
      double* zf = ws_.zfuse.row(b);
      const double* gt = ws_.gseq.ptr() + (b * t_len + (t_len - 1)) * c.d_g;
      const double* ht = ws_.lstm_out.ptr() + (b * t_len + (t_len - 1)) * 2 * c.d_h;
      std::memcpy(zf, gt, c.d_g * sizeof(double));
      std::memcpy(zf + c.d_g, ht, 2 * c.d_h * sizeof(double));
    }

    linear_forward(ws_.zfuse.ptr(), bsz, v(ids_.fuse_w), v(ids_.fuse_b), ws_.zprime.ptr());
    relu_forward_inplace(ws_.zprime.ptr(), bsz * c.fuse_dim);

    mha_forward(ws_.zprime.ptr(), bsz, c.fuse_dim, c.n_heads, v(ids_.att_wq), v(ids_.att_bq),
                v(ids_.att_wk), v(ids_.att_bk), v(ids_.att_wv), v(ids_.att_bv),
                v(ids_.att_wo), v(ids_.att_bo), ws_.mha, ws_.a.ptr());

    const double* prev = ws_.a.ptr();
    for (size_t i = 0; i < 3; ++i) {
      linear_forward(prev, bsz, v(ids_.fc_w[i]), v(ids_.fc_b[i]), ws_.fc[i].ptr());
      relu_forward_inplace(ws_.fc[i].ptr(), bsz * cfg_.fc_widths[i]);
      prev = ws_.fc[i].ptr();
    }
    linear_forward(prev, bsz, v(ids_.head_w), v(ids_.head_b), ws_.logit.data());
    sigmoid_forward(ws_.logit.data(), ws_.p.data(), bsz);
  }

  void run_backward(const std::vector<int>& y, size_t bsz) {
    const auto& c = cfg_;
    const size_t n = c.n_nodes, f = c.n_features, t_len = c.window;
    const size_t rows = bsz * n;
    double* da = ws_.d_a.data();
    double* db = ws_.d_b.data();

    // loss -> sigmoid -> head
    weighted_bce_backward(ws_.p.data(), y.data(), bsz, c.w_pos, da);
    sigmoid_backward(ws_.p.data(), da, db, bsz);  // db = dlogit
    const double* top = ws_.fc[2].ptr();
    linear_backward(top, db, bsz, v(ids_.head_w), g(ids_.head_w), g(ids_.head_b), da);

    // FC stack in reverse; da currently holds d(fc3 output)
    for (size_t i = 3; i-- > 0;) {
      relu_backward_inplace(ws_.fc[i].ptr(), da, bsz * c.fc_widths[i]);
      const double* below = i == 0 ? ws_.a.ptr() : ws_.fc[i - 1].ptr();
      linear_backward(below, da, bsz, v(ids_.fc_w[i]), g(ids_.fc_w[i]), g(ids_.fc_b[i]), db);
      std::swap(da, db);
    }

    // attention (query/key projections have zero gradient by construction)
    mha_backward(ws_.zprime.ptr(), bsz, c.fuse_dim, v(ids_.att_wv), v(ids_.att_wo), ws_.mha,
                 da, g(ids_.att_wv), g(ids_.att_bv), g(ids_.att_wo), g(ids_.att_bo), db);
    std::swap(da, db);

    // fusion projection
    relu_backward_inplace(ws_.zprime.ptr(), da, bsz * c.fuse_dim);
    linear_backward(ws_.zfuse.ptr(), da, bsz, v(ids_.fuse_w), g(ids_.fuse_w), g(ids_.fuse_b),
                    db);
    std::swap(da, db);

    // split the fused gradient back to g_{T-1} and the last recurrent state
    ws_.dgseq.zero();
    ws_.dlstm_out.zero();
    for (size_t b = 0; b < bsz; ++b) {
      const double* dz = da + b * fuse_in();
      double* dgt = ws_.dgseq.ptr() + (b * t_len + (t_len - 1)) * c.d_g;
      double* dht = ws_.dlstm_out.ptr() + (b * t_len + (t_len - 1)) * 2 * c.d_h;
      for (size_t j = 0; j < c.d_g; ++j) dgt[j] += dz[j];
      for (size_t j = 0; j < 2 * c.d_h; ++j) dht[j] += dz[c.d_g + j];
    }

    bilstm_backward(ws_.gseq.ptr(), bsz, t_len, c.d_g, c.d_h, v(ids_.lf_wx), v(ids_.lf_wh),
                    v(ids_.lb_wx), v(ids_.lb_wh), ws_.lstm, ws_.dlstm_out.ptr(),
                    g(ids_.lf_wx), g(ids_.lf_wh), g(ids_.lf_b), g(ids_.lb_wx),
                    g(ids_.lb_wh), g(ids_.lb_b), ws_.dgseq.ptr());

    // spatial stack per time step
    for (size_t t = 0; t < t_len; ++t) {
      // un-pool: dg2[(b,node),:] = dgseq[b,t,:] / N
      const double inv_n = 1.0 / static_cast<double>(n);
      for (size_t b = 0; b < bsz; ++b) {
        const double* dgt = ws_.dgseq.ptr() + (b * t_len + t) * c.d_g;
        for (size_t node = 0; node < n; ++node) {
          double* dst = da + (b * n + node) * c.d_g;
          for (size_t j = 0; j < c.d_g; ++j) dst[j] = dgt[j] * inv_n;
        }
      }
      relu_backward_inplace(ws_.g2[t].ptr(), da, rows * c.d_g);
      std::fill(db, db + rows * c.d_g, 0.0);
      for (size_t b = 0; b < bsz; ++b)
        gcn_backward(op_, ws_.p2[t].row(b * n), da + b * n * c.d_g, n, v(ids_.gcn2_w),
                     g(ids_.gcn2_w), g(ids_.gcn2_b), ws_.gcn_scratch.data(),
                     db + b * n * c.d_g);
      std::swap(da, db);

      relu_backward_inplace(ws_.g1[t].ptr(), da, rows * c.d_g);
      std::fill(db, db + rows * c.d_in, 0.0);
      for (size_t b = 0; b < bsz; ++b)
        gcn_backward(op_, ws_.p1[t].row(b * n), da + b * n * c.d_g, n, v(ids_.gcn1_w),
                     g(ids_.gcn1_w), g(ids_.gcn1_b), ws_.gcn_scratch.data(),
                     db + b * n * c.d_in);
      std::swap(da, db);

      // per-node MLP
      linear_backward(ws_.h1[t].ptr(), da, rows, v(ids_.mlp_w2), g(ids_.mlp_w2),
                      g(ids_.mlp_b2), db);
      std::swap(da, db);
      relu_backward_inplace(ws_.h1[t].ptr(), da, rows * c.d_in);
      linear_backward(ws_.xt[t].ptr(), da, rows, v(ids_.mlp_w1), g(ids_.mlp_w1),
                      g(ids_.mlp_b1), nullptr);
    }
  }

  AstroConfig cfg_;
  Tensor op_;
  ParamStore store_;
  ParamIds ids_;
  Workspace ws_;
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_f1 = -1.0;
  size_t best_epoch = 0;
  std::vector<Tensor> best_values;  // snapshot aligned with the store's entries
};

inline void snapshot_params(const ParamStore& store, std::vector<Tensor>& out) {
  out.clear();
  for (size_t i = 0; i < store.count(); ++i) out.push_back(store.value(i));
}

inline void restore_params(ParamStore& store, const std::vector<Tensor>& snap) {
  if (snap.size() != store.count())
    throw ValidationError("restore_params: snapshot does not match parameter layout");
  for (size_t i = 0; i < snap.size(); ++i) store.value(i) = snap[i];
}

// Mini-batch gradient descent over the training windows with per-epoch
// validation F1 at tau = 0.5. The best-validation snapshot is kept alongside
// the final parameters. Non-finite loss aborts with the offending batch index.
inline TrainResult train(AstroModel& model, const WindowStream& windows,
                         const std::vector<size_t>& train_ids,
                         const std::vector<size_t>& val_ids) {
  const AstroConfig& cfg = model.config();
  if (train_ids.empty()) throw ValidationError("train: empty training split");
  TrainResult result;
  Rng shuffle_rng(derive_seed(cfg.seed, 0x22));
  std::vector<size_t> order = train_ids;
  const AdamConfig adam = cfg.adam();

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t n_batches = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch) {
      const size_t take = std::min(cfg.batch, order.size() - at);
      std::vector<size_t> ids(order.begin() + at, order.begin() + at + take);
      WindowBatch batch = windows.gather(ids);
      const double loss = model.loss_and_grad(batch.x, batch.y);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", batch " << n_batches;
        throw std::runtime_error(os.str());
      }
      if (cfg.lr != 0.0) adam_step(model.params(), adam);
      loss_sum += loss;
      ++n_batches;
    }

    double val_f1 = 0.0;
    if (!val_ids.empty()) {
      ScoreSet val = model.score_windows(windows, val_ids);
      std::vector<int> pred(val.size());
      for (size_t i = 0; i < val.size(); ++i) pred[i] = val.scores[i] >= 0.5 ? 1 : 0;
      val_f1 = f1_score(pred, val.labels);
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(n_batches), val_f1});
    if (val_f1 > result.best_val_f1) {
      result.best_val_f1 = val_f1;
      result.best_epoch = epoch;
      snapshot_params(model.params(), result.best_values);
    }
  }
  if (result.best_values.empty()) snapshot_params(model.params(), result.best_values);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "ASTRO1", length-prefixed config JSON, then each
// named tensor as (name, rank, dims..., row-major doubles). Loading validates
// the stored config and tensor shapes against the expected layout.

struct Checkpoint {
  AstroConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const AstroConfig& cfg,
                            const ParamStore& store,
                            const std::vector<std::pair<std::string, Tensor>>& extras = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("checkpoint: cannot write '" + path + "'");
  out.write("ASTRO1", 6);
  const std::string cfg_json = to_json(cfg).dump();
  detail::write_u64(out, cfg_json.size());
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  detail::write_u64(out, store.count() + extras.size());
  auto write_tensor = [&](const std::string& name, const Tensor& t) {
    detail::write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64(out, t.shape.size());
    for (size_t d : t.shape) detail::write_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  };
  for (size_t i = 0; i < store.count(); ++i)
    write_tensor(store.entry(i).name, store.value(i));
  for (const auto& [name, t] : extras) write_tensor(name, t);
  if (!out) throw std::runtime_error("checkpoint: write failure on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot open '" + path + "'");
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "ASTRO1")
    throw ValidationError("checkpoint: '" + path + "' is not an ASTRO1 checkpoint");
  const uint64_t cfg_len = detail::read_u64(in);
  std::string cfg_json(cfg_len, '\0');
  in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw ValidationError("checkpoint: truncated config in '" + path + "'");
  Checkpoint chk;
  try {
    chk.config = astro_config_from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint: bad config block: " + std::string(e.what()));
  }
  const uint64_t count = detail::read_u64(in);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = detail::read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t rank = detail::read_u64(in);
    std::vector<size_t> shape(rank);
    for (auto& d : shape) d = detail::read_u64(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint: truncated tensor '" + name + "'");
    chk.tensors.emplace_back(std::move(name), std::move(t));
  }
  return chk;
}

// Builds a model from a checkpoint, rejecting config or shape mismatches.
// When expected_config is given it must equal the stored one.
inline AstroModel model_from_checkpoint(const Checkpoint& chk, const TopologyGraph& graph,
                                        const AstroConfig* expected_config = nullptr) {
  if (expected_config && !(*expected_config == chk.config))
    throw ValidationError("checkpoint: stored model config does not match the run config");
  AstroModel model(chk.config, graph);
  ParamStore& store = model.params();
  for (size_t i = 0; i < store.count(); ++i) {
    auto& e = store.entry(i);
    const Tensor* t = chk.find(e.name);
    if (!t) throw ValidationError("checkpoint: missing tensor '" + e.name + "'");
    if (t->shape != e.value.shape)
      throw ValidationError("checkpoint: tensor '" + e.name + "' has shape " +
                            shape_str(t->shape) + ", expected " + shape_str(e.value.shape));
    e.value = *t;
  }
  return model;
}

}  // namespace astro
