#include "sfg/denoiser.hpp"

#include <atomic>
#include <cmath>
#include <optional>

#include "sfg/errors.hpp"
#include "sfg/rng.hpp"

namespace sfg {

namespace {

constexpr double kLayerNormEps = 1e-5;

std::atomic<std::uint64_t> g_forward_passes{0};

std::string block_name(int l, const char* suffix) {
  return "block" + std::to_string(l) + "." + suffix;
}

// ---- small kernels ---------------------------------------------------------

Tensor slice_cols(const Tensor& t, std::size_t c0, std::size_t width) {
  if (c0 == 0 && width == t.cols()) return t;
  Tensor out = Tensor::matrix(t.rows(), width);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = t(r, c0 + c);
  return out;
}

void put_cols(Tensor& dst, const Tensor& src, std::size_t c0) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) dst(r, c0 + c) = src(r, c);
}

void add_row_vector(Tensor& m, const Tensor& v) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += v[c];
  }
}

void accumulate_col_sums(const Tensor& m, Tensor& into, double weight) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) into[c] += weight * row[c];
  }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  Tensor y = matmul(x, w);
  if (b) add_row_vector(y, *b);
  return y;
}

// dx = dy·wᵀ; dw += weight·xᵀ·dy; db += weight·Σ_rows dy.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor* db,
                       double weight) {
  axpy(weight, matmul_tn(x, dy), dw);
  if (db) accumulate_col_sums(dy, *db, weight);
  return matmul_nt(dy, w);
}

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> rstd;
};

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = Tensor::matrix(n, d);
  Tensor xhat = Tensor::matrix(n, d);
  std::vector<double> rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (row[c] - mean) * rstd[r];
      y(r, c) = xhat(r, c) * gain[c] + bias[c];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy,
                           Tensor& dgain, Tensor& dbias, double weight) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Tensor dx = Tensor::matrix(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < n; ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = dy(r, c);
      dgain[c] += weight * g * cache.xhat(r, c);
      dbias[c] += weight * g;
      dxhat[c] = g * gain[c];
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * cache.xhat(r, c);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      dx(r, c) = cache.rstd[r] * (dxhat[c] - mean_dxhat - cache.xhat(r, c) * mean_dxhat_xhat);
    }
  }
  return dx;
}

double silu(double a) { return a / (1.0 + std::exp(-a)); }

double silu_grad(double a) {
  const double s = 1.0 / (1.0 + std::exp(-a));
  return s * (1.0 + a * (1.0 - s));
}

// ---- attention -------------------------------------------------------------

struct AttentionWeights {
  const Tensor& wq;
  const Tensor& wk;
  const Tensor& wv;
  const Tensor& wo;
};

struct AttentionCache {
  Tensor x_q, x_kv;
  Tensor q, k, v;
  std::vector<Tensor> probs;    // per head, pre-override
  std::vector<int> selected;    // override column per row, empty if none
  double override_factor = 1.0; // −a when an override ran
  Tensor ctx;                   // concatenated per-head outputs, before wo
};

// Picks, per row, the largest of columns 1..n-1 (ties to the lowest index)
// of the head-averaged weights.
std::vector<int> argmax_non_bos(const Tensor& avg) {
  std::vector<int> sel(avg.rows());
  for (std::size_t p = 0; p < avg.rows(); ++p) {
    std::size_t best = 1;
    for (std::size_t i = 2; i < avg.cols(); ++i) {
      if (avg(p, i) > avg(p, best)) best = i;
    }
    sel[p] = static_cast<int>(best);
  }
  return sel;
}

Tensor attention_forward(const Tensor& x_q, const Tensor& x_kv, const AttentionWeights& w,
                         int heads, const OverrideSpec* override_spec, AttentionCache& cache,
                         AttentionRecord* record) {
  cache.x_q = x_q;
  cache.x_kv = x_kv;
  cache.q = matmul(x_q, w.wq);
  cache.k = matmul(x_kv, w.wk);
  cache.v = matmul(x_kv, w.wv);
  const std::size_t width = cache.q.cols();
  const std::size_t dh = width / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t rows = x_q.rows(), keys = x_kv.rows();

  cache.probs.clear();
  Tensor avg = Tensor::matrix(rows, keys);
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    Tensor scores = matmul_nt(slice_cols(cache.q, c0, dh), slice_cols(cache.k, c0, dh));
    for (double& s : scores.values()) s *= inv_sqrt;
    cache.probs.push_back(softmax_rows(scores));
    axpy(1.0 / heads, cache.probs.back(), avg);
  }

  cache.selected.clear();
  cache.override_factor = 1.0;
  const bool do_override = override_spec && override_spec->enabled && keys >= 2;
  if (do_override) {
    cache.selected = argmax_non_bos(avg);
    cache.override_factor = -override_spec->scale;
  }

  cache.ctx = Tensor::matrix(rows, width);
  Tensor applied_avg = do_override ? Tensor::matrix(rows, keys) : Tensor();
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    const Tensor* used = &cache.probs[static_cast<std::size_t>(h)];
    Tensor modified;
    if (do_override) {
      modified = *used;
      for (std::size_t p = 0; p < rows; ++p) {
        const auto s = static_cast<std::size_t>(cache.selected[p]);
        modified(p, s) *= cache.override_factor;
      }
      axpy(1.0 / heads, modified, applied_avg);
      used = &modified;
    }
    put_cols(cache.ctx, matmul(*used, slice_cols(cache.v, c0, dh)), c0);
  }

  if (record) {
    record->weights = avg;
    record->applied = do_override ? std::move(applied_avg) : avg;
    record->selected = cache.selected;
  }
  return matmul(cache.ctx, w.wo);
}

struct AttentionGrads {
  Tensor& wq;
  Tensor& wk;
  Tensor& wv;
  Tensor& wo;
};

// Returns d x_q; adds d x_kv into *dx_kv when given.
Tensor attention_backward(const AttentionCache& cache, const AttentionWeights& w, int heads,
                          const Tensor& dout, AttentionGrads g, double weight, Tensor* dx_kv) {
  axpy(weight, matmul_tn(cache.ctx, dout), g.wo);
  const Tensor dctx = matmul_nt(dout, w.wo);

  const std::size_t width = cache.q.cols();
  const std::size_t dh = width / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dq = Tensor::matrix(cache.q.rows(), width);
  Tensor dk = Tensor::matrix(cache.k.rows(), width);
  Tensor dv = Tensor::matrix(cache.v.rows(), width);

  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dh;
    const Tensor& probs = cache.probs[static_cast<std::size_t>(h)];
    const Tensor dctx_h = slice_cols(dctx, c0, dh);
    const Tensor v_h = slice_cols(cache.v, c0, dh);

    Tensor used = probs;
    for (std::size_t p = 0; p < cache.selected.size(); ++p) {
      used(p, static_cast<std::size_t>(cache.selected[p])) *= cache.override_factor;
    }
    put_cols(dv, matmul_tn(used, dctx_h), c0);

    Tensor dprobs = matmul_nt(dctx_h, v_h);
    for (std::size_t p = 0; p < cache.selected.size(); ++p) {
      dprobs(p, static_cast<std::size_t>(cache.selected[p])) *= cache.override_factor;
    }
    Tensor dscores = Tensor::matrix(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      const double inner = dot(dprobs.row(r), probs.row(r));
      for (std::size_t c = 0; c < probs.cols(); ++c) {
        dscores(r, c) = probs(r, c) * (dprobs(r, c) - inner) * inv_sqrt;
      }
    }
    put_cols(dq, matmul(dscores, slice_cols(cache.k, c0, dh)), c0);
    put_cols(dk, matmul_tn(dscores, slice_cols(cache.q, c0, dh)), c0);
  }

  axpy(weight, matmul_tn(cache.x_q, dq), g.wq);
  axpy(weight, matmul_tn(cache.x_kv, dk), g.wk);
  axpy(weight, matmul_tn(cache.x_kv, dv), g.wv);
  Tensor dx_q = matmul_nt(dq, w.wq);
  if (dx_kv) {
    axpy(1.0, matmul_nt(dk, w.wk), *dx_kv);
    axpy(1.0, matmul_nt(dv, w.wv), *dx_kv);
  }
  return dx_q;
}

// ---- network ---------------------------------------------------------------

struct BlockCache {
  LayerNormCache ln1, ln2, ln3;
  Tensor u1, u2, u3;
  AttentionCache self_attn, cross_attn;
  Tensor mlp_pre;  // P×H before SiLU
  Tensor mlp_act;  // P×H after SiLU
};

struct NetworkCache {
  Tensor z;
  std::vector<double> phi;
  std::vector<BlockCache> blocks;
  LayerNormCache ln_out;
  Tensor u_out;
};

AttentionWeights self_weights(const ParamSet& w, int l) {
  return {w.at(block_name(l, "self.wq")), w.at(block_name(l, "self.wk")),
          w.at(block_name(l, "self.wv")), w.at(block_name(l, "self.wo"))};
}

AttentionWeights cross_weights(const ParamSet& w, int l) {
  return {w.at(block_name(l, "cross.wq")), w.at(block_name(l, "cross.wk")),
          w.at(block_name(l, "cross.wv")), w.at(block_name(l, "cross.wo"))};
}

void check_inputs(const DenoiserParams& params, const Tensor& z, const TextEmbeddings& c) {
  const ModelConfig& cfg = params.config();
  if (z.rank() != 2 || z.rows() != static_cast<std::size_t>(cfg.patches()) ||
      z.cols() != static_cast<std::size_t>(cfg.latent_dim)) {
    throw DimensionError("denoiser: latent shape " + shape_string(z.shape()) + " does not match model " +
                         std::to_string(cfg.patches()) + "x" + std::to_string(cfg.latent_dim));
  }
  if (c.vectors.rank() != 2 || c.rows() < 1 || c.dim() != static_cast<std::size_t>(cfg.text_dim)) {
    throw DimensionError("denoiser: text embeddings shape " + shape_string(c.vectors.shape()) +
                         " does not match text_dim " + std::to_string(cfg.text_dim));
  }
}

Tensor network_forward(const DenoiserParams& params, const Tensor& z, double lambda,
                       const TextEmbeddings& c, const OverrideSpec& override_spec,
                       NetworkCache* cache, std::vector<AttentionRecord>* records) {
  check_inputs(params, z, c);
  g_forward_passes.fetch_add(1, std::memory_order_relaxed);
  const ModelConfig& cfg = params.config();
  const ParamSet& w = params.weights();

  NetworkCache local;
  NetworkCache& nc = cache ? *cache : local;
  nc.z = z;
  nc.phi = time_features(lambda, cfg.time_features);
  nc.blocks.assign(static_cast<std::size_t>(cfg.layers), {});

  Tensor temb = w.at("time.b");
  const Tensor& time_w = w.at("time.w");
  for (std::size_t f = 0; f < nc.phi.size(); ++f)
    for (std::size_t c2 = 0; c2 < temb.size(); ++c2) temb[c2] += nc.phi[f] * time_w(f, c2);

  Tensor h = linear(z, w.at("in.w"), &w.at("in.b"));
  axpy(1.0, w.at("pos"), h);
  add_row_vector(h, temb);

  if (records) records->assign(static_cast<std::size_t>(cfg.layers), {});
  for (int l = 0; l < cfg.layers; ++l) {
    BlockCache& bc = nc.blocks[static_cast<std::size_t>(l)];
    bc.u1 = layer_norm(h, w.at(block_name(l, "ln1.g")), w.at(block_name(l, "ln1.b")), &bc.ln1);
    axpy(1.0, attention_forward(bc.u1, bc.u1, self_weights(w, l), cfg.heads, nullptr, bc.self_attn, nullptr), h);

    bc.u2 = layer_norm(h, w.at(block_name(l, "ln2.g")), w.at(block_name(l, "ln2.b")), &bc.ln2);
    AttentionRecord* rec = records ? &(*records)[static_cast<std::size_t>(l)] : nullptr;
    axpy(1.0, attention_forward(bc.u2, c.vectors, cross_weights(w, l), cfg.heads, &override_spec,
                                bc.cross_attn, rec),
         h);

    bc.u3 = layer_norm(h, w.at(block_name(l, "ln3.g")), w.at(block_name(l, "ln3.b")), &bc.ln3);
    bc.mlp_pre = linear(bc.u3, w.at(block_name(l, "mlp.w1")), &w.at(block_name(l, "mlp.b1")));
    bc.mlp_act = bc.mlp_pre;
    for (double& v : bc.mlp_act.values()) v = silu(v);
    axpy(1.0, linear(bc.mlp_act, w.at(block_name(l, "mlp.w2")), &w.at(block_name(l, "mlp.b2"))), h);
  }

  nc.u_out = layer_norm(h, w.at("out.ln.g"), w.at("out.ln.b"), &nc.ln_out);
  return linear(nc.u_out, w.at("out.w"), &w.at("out.b"));
}

void network_backward(const DenoiserParams& params, const NetworkCache& nc, const Tensor& dout,
                      ParamSet& g, double weight) {
  const ModelConfig& cfg = params.config();
  const ParamSet& w = params.weights();

  Tensor du = linear_backward(nc.u_out, w.at("out.w"), dout, g.at("out.w"), &g.at("out.b"), weight);
  Tensor dh = layer_norm_backward(nc.ln_out, w.at("out.ln.g"), du, g.at("out.ln.g"), g.at("out.ln.b"), weight);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const BlockCache& bc = nc.blocks[static_cast<std::size_t>(l)];

    // MLP branch.
    Tensor dact = linear_backward(bc.mlp_act, w.at(block_name(l, "mlp.w2")), dh,
                                  g.at(block_name(l, "mlp.w2")), &g.at(block_name(l, "mlp.b2")), weight);
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= silu_grad(bc.mlp_pre[i]);
    Tensor du3 = linear_backward(bc.u3, w.at(block_name(l, "mlp.w1")), dact,
                                 g.at(block_name(l, "mlp.w1")), &g.at(block_name(l, "mlp.b1")), weight);
    axpy(1.0, layer_norm_backward(bc.ln3, w.at(block_name(l, "ln3.g")), du3,
                                  g.at(block_name(l, "ln3.g")), g.at(block_name(l, "ln3.b")), weight),
         dh);

    // Cross-attention branch; the text embeddings are frozen.
    AttentionGrads cg{g.at(block_name(l, "cross.wq")), g.at(block_name(l, "cross.wk")),
                      g.at(block_name(l, "cross.wv")), g.at(block_name(l, "cross.wo"))};
    Tensor du2 = attention_backward(bc.cross_attn, cross_weights(w, l), cfg.heads, dh, cg, weight, nullptr);
    axpy(1.0, layer_norm_backward(bc.ln2, w.at(block_name(l, "ln2.g")), du2,
                                  g.at(block_name(l, "ln2.g")), g.at(block_name(l, "ln2.b")), weight),
         dh);

    // Self-attention branch; queries, keys and values share one input.
    AttentionGrads sg{g.at(block_name(l, "self.wq")), g.at(block_name(l, "self.wk")),
                      g.at(block_name(l, "self.wv")), g.at(block_name(l, "self.wo"))};
    Tensor du1_kv = Tensor::matrix(dh.rows(), dh.cols());
    Tensor du1 = attention_backward(bc.self_attn, self_weights(w, l), cfg.heads, dh, sg, weight, &du1_kv);
    axpy(1.0, du1_kv, du1);
    axpy(1.0, layer_norm_backward(bc.ln1, w.at(block_name(l, "ln1.g")), du1,
                                  g.at(block_name(l, "ln1.g")), g.at(block_name(l, "ln1.b")), weight),
         dh);
  }

  // Input projection, positions and time embedding.
  axpy(weight, dh, g.at("pos"));
  linear_backward(nc.z, w.at("in.w"), dh, g.at("in.w"), &g.at("in.b"), weight);
  Tensor dtemb = Tensor::vector(dh.cols());
  accumulate_col_sums(dh, dtemb, 1.0);
  Tensor& gtw = g.at("time.w");
  for (std::size_t f = 0; f < nc.phi.size(); ++f)
    for (std::size_t c = 0; c < dtemb.size(); ++c) gtw(f, c) += weight * nc.phi[f] * dtemb[c];
  axpy(weight, dtemb, g.at("time.b"));
}

}  // namespace

void ModelConfig::validate() const {
  if (grid_h < 1 || grid_w < 1 || latent_dim < 1 || width < 1 || layers < 1 || heads < 1 ||
      mlp_hidden < 1 || text_dim < 1 || time_features < 2) {
    throw ConfigError("model dimensions must be positive");
  }
  if (width % heads != 0) throw ConfigError("model width must be divisible by heads");
  if (time_features % 2 != 0) throw ConfigError("time_features must be even");
}

OverrideSpec OverrideSpec::with_scale(double a) {
  if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("segmentation-free scale must be >= 0");
  return {true, a};
}

std::vector<double> time_features(double lambda, int count) {
  // Log-spaced angular frequencies from 0.05 to 2 cover λ in roughly [−20, 20].
  const int half = count / 2;
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / (half - 1);
    const double freq = std::exp(std::log(0.05) + frac * (std::log(2.0) - std::log(0.05)));
    out[static_cast<std::size_t>(k)] = std::sin(lambda * freq);
    out[static_cast<std::size_t>(half + k)] = std::cos(lambda * freq);
  }
  return out;
}

DenoiserParams DenoiserParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  DenoiserParams p;
  p.config_ = config;
  Rng root(seed, 0xD0);
  std::uint64_t next_stream = 0;
  const auto sz = [](int v) { return static_cast<std::size_t>(v); };
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.layers);

  auto gaussian = [&](std::string name, std::size_t rows, std::size_t cols, double stddev) {
    Rng r = root.substream(next_stream++);
    p.weights_.add(std::move(name), scale(randn(r, {rows, cols}), stddev));
  };
  auto constant = [&](std::string name, std::size_t n, double v) {
    ++next_stream;
    p.weights_.add(std::move(name), Tensor::vector(n, v));
  };
  const auto fan_in = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  const std::size_t d = sz(config.width);
  gaussian("in.w", sz(config.latent_dim), d, fan_in(config.latent_dim));
  constant("in.b", d, 0.0);
  gaussian("pos", sz(config.patches()), d, 0.5);
  gaussian("time.w", sz(config.time_features), d, fan_in(config.time_features));
  constant("time.b", d, 0.0);
  for (int l = 0; l < config.layers; ++l) {
    constant(block_name(l, "ln1.g"), d, 1.0);
    constant(block_name(l, "ln1.b"), d, 0.0);
    gaussian(block_name(l, "self.wq"), d, d, fan_in(config.width));
    gaussian(block_name(l, "self.wk"), d, d, fan_in(config.width));
    gaussian(block_name(l, "self.wv"), d, d, fan_in(config.width));
    gaussian(block_name(l, "self.wo"), d, d, fan_in(config.width) * residual_scale);
    constant(block_name(l, "ln2.g"), d, 1.0);
    constant(block_name(l, "ln2.b"), d, 0.0);
    gaussian(block_name(l, "cross.wq"), d, d, fan_in(config.width));
    gaussian(block_name(l, "cross.wk"), sz(config.text_dim), d, fan_in(config.text_dim));
    gaussian(block_name(l, "cross.wv"), sz(config.text_dim), d, fan_in(config.text_dim));
    gaussian(block_name(l, "cross.wo"), d, d, fan_in(config.width) * residual_scale);
    constant(block_name(l, "ln3.g"), d, 1.0);
    constant(block_name(l, "ln3.b"), d, 0.0);
    gaussian(block_name(l, "mlp.w1"), d, sz(config.mlp_hidden), fan_in(config.width));
    constant(block_name(l, "mlp.b1"), sz(config.mlp_hidden), 0.0);
    gaussian(block_name(l, "mlp.w2"), sz(config.mlp_hidden), d, fan_in(config.mlp_hidden) * residual_scale);
    constant(block_name(l, "mlp.b2"), d, 0.0);
  }
  constant("out.ln.g", d, 1.0);
  constant("out.ln.b", d, 0.0);
  gaussian("out.w", d, sz(config.latent_dim), fan_in(config.width));
  constant("out.b", sz(config.latent_dim), 0.0);
  return p;
}

ParamSet DenoiserParams::to_params() const {
  ParamSet out;
  const ModelConfig& c = config_;
  out.add("config", Tensor({9}, {double(c.grid_h), double(c.grid_w), double(c.latent_dim), double(c.width),
                                 double(c.layers), double(c.heads), double(c.mlp_hidden), double(c.text_dim),
                                 double(c.time_features)}));
  out.merge(weights_, "");
  return out;
}

DenoiserParams DenoiserParams::from_params(const ParamSet& params) {
  const Tensor& c = params.at("config");
  if (c.size() != 9) throw FormatError("denoiser config has wrong length");
  ModelConfig cfg;
  int* fields[] = {&cfg.grid_h, &cfg.grid_w,     &cfg.latent_dim, &cfg.width,        &cfg.layers,
                   &cfg.heads,  &cfg.mlp_hidden, &cfg.text_dim,   &cfg.time_features};
  for (std::size_t i = 0; i < 9; ++i) *fields[i] = static_cast<int>(c[i]);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model config invalid: ") + e.what());
  }

  // Shapes come from a freshly initialised model of the same config.
  DenoiserParams p = init(cfg, 0);
  for (std::size_t i = 0; i < p.weights_.size(); ++i) {
    const Tensor& loaded = params.at(p.weights_.name(i));
    if (!loaded.same_shape(p.weights_.tensor(i))) {
      throw FormatError("checkpoint tensor " + p.weights_.name(i) + " has shape " +
                        shape_string(loaded.shape()));
    }
    p.weights_.tensor(i) = loaded;
  }
  return p;
}

CrossAttentionResult cross_attention(const Tensor& patches, const TextEmbeddings& c,
                                     const OverrideSpec& override_spec, const DenoiserParams& params,
                                     int layer) {
  const ModelConfig& cfg = params.config();
  if (layer < 0 || layer >= cfg.layers) throw DomainError("cross_attention: layer out of range");
  require_matrix(patches, "cross_attention");
  if (patches.cols() != static_cast<std::size_t>(cfg.width) ||
      c.dim() != static_cast<std::size_t>(cfg.text_dim)) {
    throw DimensionError("cross_attention: input widths do not match the model");
  }
  AttentionCache cache;
  CrossAttentionResult out;
  out.out = attention_forward(patches, c.vectors, cross_weights(params.weights(), layer), cfg.heads,
                              &override_spec, cache, &out.record);
  return out;
}

ScoreResult predict_score_lambda(const Tensor& z, double lambda, const TextEmbeddings& c,
                                 const OverrideSpec& override_spec, const DenoiserParams& params) {
  ScoreResult out;
  out.score = network_forward(params, z, lambda, c, override_spec, nullptr, &out.attention);
  return out;
}

ScoreResult predict_score(const Tensor& z, int t, const NoiseSchedule& sched, const TextEmbeddings& c,
                          const OverrideSpec& override_spec, const DenoiserParams& params) {
  return predict_score_lambda(z, sched.lambda(t), c, override_spec, params);
}

double denoising_loss(const DenoiserParams& params, const Tensor& z_t, double lambda,
                      const TextEmbeddings& c, const Tensor& eps) {
  const Tensor pred = network_forward(params, z_t, lambda, c, OverrideSpec::disabled(), nullptr, nullptr);
  require_same_shape(pred, eps, "denoising_loss");
  return squared_norm(sub(pred, eps)) / static_cast<double>(eps.size());
}

double denoising_loss_grad(const DenoiserParams& params, const Tensor& z_t, double lambda,
                           const TextEmbeddings& c, const Tensor& eps, ParamSet& grad, double weight) {
  NetworkCache cache;
  const Tensor pred = network_forward(params, z_t, lambda, c, OverrideSpec::disabled(), &cache, nullptr);
  require_same_shape(pred, eps, "denoising_loss_grad");
  Tensor diff = sub(pred, eps);
  const double n = static_cast<double>(eps.size());
  const double loss = squared_norm(diff) / n;
  for (double& v : diff.values()) v *= 2.0 / n;
  network_backward(params, cache, diff, grad, weight);
  return loss;
}

std::uint64_t forward_pass_count() { return g_forward_passes.load(std::memory_order_relaxed); }

}  // namespace sfg
