#include "fluidfm/fm/forecaster.hpp"

#include <atomic>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/util/binio.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::fm {

using nlohmann::json;
using namespace fluidfm::tensor;

void ForecasterConfig::validate() const {
  require(t_in > 0 && in_channels > 0 && embed_dim > 0 && n_blocks > 0 && n_heads > 0,
          Err::InvalidAttr, "forecaster extents must be positive");
  require(t_in % patch_t == 0, Err::InvalidAttr, "T_in must be divisible by patch_t");
  require(input_h % patch_h == 0 && input_w % patch_w == 0, Err::InvalidAttr,
          "input resolution must be divisible by the patch size");
  require(embed_dim % n_heads == 0, Err::InvalidAttr, "embed_dim must split across heads");
  require(eff_window_t() > 0 && eff_window_h() > 0 && eff_window_w() > 0, Err::InvalidAttr,
          "zero-size window");
  require(tokens_t() % eff_window_t() == 0 && tokens_h() % eff_window_h() == 0 &&
              tokens_w() % eff_window_w() == 0,
          Err::InvalidAttr, "token grid must tile by the window");
}

int64_t ForecasterConfig::param_count() const {
  const int64_t e = embed_dim;
  const int64_t k = in_channels * patch_t * patch_h * patch_w;
  const int64_t r = mlp_ratio * e;
  const int64_t dec = in_channels * patch_h * patch_w;
  const int64_t per_block = 4 * e            // two layer norms
                            + e * 3 * e + 3 * e  // qkv
                            + e * e + e          // proj
                            + e * r + r + r * e + e  // mlp
                            + rel_bias_size() * n_heads;
  return e * k + e           // tokenizer
         + n_tokens() * e    // positional embedding
         + n_blocks * per_block
         + 2 * e             // final norm
         + e * dec + dec;    // decoder
}

std::string ForecasterConfig::to_json() const {
  json j;
  j["t_in"] = t_in;
  j["in_channels"] = in_channels;
  j["patch"] = {patch_t, patch_h, patch_w};
  j["embed_dim"] = embed_dim;
  j["n_blocks"] = n_blocks;
  j["n_heads"] = n_heads;
  j["window"] = {window_t, window_h, window_w};
  j["mlp_ratio"] = mlp_ratio;
  j["input"] = {input_h, input_w};
  return j.dump();
}

ForecasterConfig ForecasterConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ForecasterConfig c;
  c.t_in = j.at("t_in").get<int64_t>();
  c.in_channels = j.at("in_channels").get<int64_t>();
  const auto patch = j.at("patch").get<std::vector<int64_t>>();
  c.patch_t = patch[0];
  c.patch_h = patch[1];
  c.patch_w = patch[2];
  c.embed_dim = j.at("embed_dim").get<int64_t>();
  c.n_blocks = j.at("n_blocks").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  const auto window = j.at("window").get<std::vector<int64_t>>();
  c.window_t = window[0];
  c.window_h = window[1];
  c.window_w = window[2];
  c.mlp_ratio = j.at("mlp_ratio").get<int64_t>();
  const auto input = j.at("input").get<std::vector<int64_t>>();
  c.input_h = input[0];
  c.input_w = input[1];
  return c;
}

ForecasterWeights ForecasterWeights::init(const ForecasterConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int64_t e = config.embed_dim;
  const int64_t k = config.in_channels * config.patch_t * config.patch_h * config.patch_w;
  const int64_t r = config.mlp_ratio * e;
  const int64_t dec = config.in_channels * config.patch_h * config.patch_w;
  const double sigma = 0.02;

  ForecasterWeights w;
  w.config = config;
  auto noise = [&](std::vector<int64_t> shape, std::string_view name) {
    Rng stream = rng.split(name);
    w.params.push_back(Tensor::randn(std::move(shape), stream, sigma).with_grad());
  };
  auto fill = [&](std::vector<int64_t> shape, double value) {
    w.params.push_back(Tensor::full(std::move(shape), value).with_grad());
  };

  noise({e, k}, "tokenizer_kernel");
  fill({e}, 0.0);                          // tokenizer bias
  noise({config.n_tokens(), e}, "pos_embed");
  for (int64_t b = 0; b < config.n_blocks; ++b) {
    const std::string base = "block" + std::to_string(b);
    fill({e}, 1.0);                        // ln1 gamma
    fill({e}, 0.0);                        // ln1 beta
    noise({e, 3 * e}, base + "/qkv_w");
    fill({3 * e}, 0.0);
    noise({e, e}, base + "/proj_w");
    fill({e}, 0.0);
    fill({e}, 1.0);                        // ln2 gamma
    fill({e}, 0.0);                        // ln2 beta
    noise({e, r}, base + "/mlp_w1");
    fill({r}, 0.0);
    noise({r, e}, base + "/mlp_w2");
    fill({e}, 0.0);
    fill({config.rel_bias_size(), config.n_heads}, 0.0);  // relative position bias
  }
  fill({e}, 1.0);  // final ln gamma
  fill({e}, 0.0);  // final ln beta
  noise({e, dec}, "decoder_w");
  fill({dec}, 0.0);

  require(w.param_count() == config.param_count(), Err::InvalidAttr,
          "parameter count drifted from the analytic formula");
  return w;
}

int64_t ForecasterWeights::param_count() const {
  int64_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

tensor::Tensor& ForecasterWeights::block_param(int64_t block, int64_t which) {
  return params[static_cast<size_t>(kBlockBase + block * kPerBlock + which)];
}

const tensor::Tensor& ForecasterWeights::block_param(int64_t block, int64_t which) const {
  return params[static_cast<size_t>(kBlockBase + block * kPerBlock + which)];
}

namespace {

// per-block parameter offsets within a block's 13 slots
enum BlockSlot {
  kLn1Gamma = 0, kLn1Beta, kQkvW, kQkvB, kProjW, kProjB,
  kLn2Gamma, kLn2Beta, kMlpW1, kMlpB1, kMlpW2, kMlpB2, kRelBias,
};

struct WindowPlan {
  int64_t nw = 0, wvol = 0;
  std::vector<int64_t> partition;    // window-major order -> token index
  std::vector<int64_t> unpartition;  // inverse permutation
  Tensor mask;                       // [nw*heads, wvol, wvol], undefined when unshifted
  std::vector<int64_t> relbias_index;
};

/// Window partition bookkeeping for one parity (unshifted / shifted).
WindowPlan build_plan(const ForecasterConfig& c, bool shifted) {
  const int64_t gt = c.tokens_t(), gh = c.tokens_h(), gw = c.tokens_w();
  const int64_t wt = c.eff_window_t(), wh = c.eff_window_h(), ww = c.eff_window_w();
  // shift by half the window along dims the window does not already cover
  const int64_t st = shifted && wt < gt ? wt / 2 : 0;
  const int64_t sh = shifted && wh < gh ? wh / 2 : 0;
  const int64_t sw = shifted && ww < gw ? ww / 2 : 0;
  WindowPlan plan;
  plan.wvol = wt * wh * ww;
  plan.nw = (gt / wt) * (gh / wh) * (gw / ww);
  plan.partition.resize(static_cast<size_t>(plan.nw * plan.wvol));
  plan.unpartition.resize(plan.partition.size());

  auto flat = [&](int64_t t, int64_t h, int64_t w) { return (t * gh + h) * gw + w; };
  int64_t kk = 0;
  for (int64_t bt = 0; bt < gt; bt += wt) {
    for (int64_t bh = 0; bh < gh; bh += wh) {
      for (int64_t bw = 0; bw < gw; bw += ww) {
        for (int64_t dt = 0; dt < wt; ++dt) {
          for (int64_t dh = 0; dh < wh; ++dh) {
            for (int64_t dw = 0; dw < ww; ++dw) {
              // rolled grid position -> original token
              const int64_t ot = (bt + dt + st) % gt;
              const int64_t oh = (bh + dh + sh) % gh;
              const int64_t ow = (bw + dw + sw) % gw;
              plan.partition[static_cast<size_t>(kk)] = flat(ot, oh, ow);
              ++kk;
            }
          }
        }
      }
    }
  }
  for (size_t i = 0; i < plan.partition.size(); ++i) {
    plan.unpartition[static_cast<size_t>(plan.partition[i])] = int64_t(i);
  }

  // relative-position index shared by every window
  plan.relbias_index.resize(static_cast<size_t>(plan.wvol * plan.wvol));
  auto intra = [&](int64_t k, int64_t& dt, int64_t& dh, int64_t& dw) {
    dt = k / (wh * ww);
    dh = (k / ww) % wh;
    dw = k % ww;
  };
  for (int64_t a = 0; a < plan.wvol; ++a) {
    int64_t at, ah, aw;
    intra(a, at, ah, aw);
    for (int64_t b = 0; b < plan.wvol; ++b) {
      int64_t bt, bh, bw;
      intra(b, bt, bh, bw);
      const int64_t rt = at - bt + wt - 1;
      const int64_t rh = ah - bh + wh - 1;
      const int64_t rw = aw - bw + ww - 1;
      plan.relbias_index[static_cast<size_t>(a * plan.wvol + b)] =
          (rt * (2 * wh - 1) + rh) * (2 * ww - 1) + rw;
    }
  }

  if (shifted && (st | sh | sw) != 0) {
    // forbid attention between tokens that were not neighbors before rolling
    auto region = [](int64_t coord, int64_t g, int64_t w, int64_t s) -> int64_t {
      if (s == 0) return 0;
      if (coord < g - w) return 0;
      return coord < g - s ? 1 : 2;
    };
    std::vector<double> mask(static_cast<size_t>(plan.nw * c.n_heads * plan.wvol * plan.wvol), 0.0);
    for (int64_t w = 0; w < plan.nw; ++w) {
      for (int64_t a = 0; a < plan.wvol; ++a) {
        const int64_t oa = plan.partition[static_cast<size_t>(w * plan.wvol + a)];
        const int64_t ra = region(oa / (gh * gw), gt, wt, st) * 9 +
                           region((oa / gw) % gh, gh, wh, sh) * 3 +
                           region(oa % gw, gw, ww, sw);
        for (int64_t b = 0; b < plan.wvol; ++b) {
          const int64_t ob = plan.partition[static_cast<size_t>(w * plan.wvol + b)];
          const int64_t rb = region(ob / (gh * gw), gt, wt, st) * 9 +
                             region((ob / gw) % gh, gh, wh, sh) * 3 +
                             region(ob % gw, gw, ww, sw);
          if (ra != rb) {
            for (int64_t head = 0; head < c.n_heads; ++head) {
              mask[static_cast<size_t>((((w * c.n_heads) + head) * plan.wvol + a) * plan.wvol + b)] =
                  -1e9;
            }
          }
        }
      }
    }
    plan.mask = Tensor::from_data({plan.nw * c.n_heads, plan.wvol, plan.wvol},
                                  std::move(mask));
  }
  return plan;
}

Tensor block_forward(const ForecasterWeights& w, int64_t b, const Tensor& x,
                     const WindowPlan& plan) {
  const ForecasterConfig& c = w.config;
  const int64_t e = c.embed_dim, heads = c.n_heads, dh = e / heads;
  const int64_t nw = plan.nw, wvol = plan.wvol;

  Tensor h = layer_norm(x, w.block_param(b, kLn1Gamma), w.block_param(b, kLn1Beta));
  h = gather_rows(h, plan.partition);
  Tensor qkv = add_bias(matmul(h, w.block_param(b, kQkvW)), w.block_param(b, kQkvB));
  qkv = reshape(qkv, {nw, wvol, 3, heads, dh});
  auto head_view = [&](int64_t which) {
    Tensor part = slice(qkv, 2, which, 1);                 // [nw, wvol, 1, heads, dh]
    part = reshape(part, {nw, wvol, heads, dh});
    part = transpose(part, {0, 2, 1, 3});                  // [nw, heads, wvol, dh]
    return reshape(part, {nw * heads, wvol, dh});
  };
  Tensor q = head_view(0), k = head_view(1), v = head_view(2);

  // learned relative-position bias, shared across windows
  Tensor bias = gather_rows(w.block_param(b, kRelBias), plan.relbias_index);
  bias = transpose(bias, {1, 0});
  bias = reshape(bias, {heads, wvol, wvol});
  bias = repeat_leading(bias, nw);
  bias = reshape(bias, {nw * heads, wvol, wvol});

  std::optional<Tensor> mask;
  if (plan.mask.defined()) mask = plan.mask;
  Tensor ctx = attention(q, k, v, 1.0 / std::sqrt(double(dh)), mask, bias);
  ctx = reshape(ctx, {nw, heads, wvol, dh});
  ctx = transpose(ctx, {0, 2, 1, 3});
  ctx = reshape(ctx, {nw * wvol, e});
  Tensor proj = add_bias(matmul(ctx, w.block_param(b, kProjW)), w.block_param(b, kProjB));
  proj = gather_rows(proj, plan.unpartition);
  Tensor x1 = add(x, proj);

  Tensor m = layer_norm(x1, w.block_param(b, kLn2Gamma), w.block_param(b, kLn2Beta));
  m = add_bias(matmul(m, w.block_param(b, kMlpW1)), w.block_param(b, kMlpB1));
  m = gelu(m);
  m = add_bias(matmul(m, w.block_param(b, kMlpW2)), w.block_param(b, kMlpB2));
  return add(x1, m);
}

/// Shared trunk: tokenize, positional embedding, attention blocks, final
/// norm. Returns [N, E].
Tensor trunk(const ForecasterWeights& w, const Tensor& frames) {
  const ForecasterConfig& c = w.config;
  require(frames.rank() == 4 && frames.dim(0) == c.t_in && frames.dim(1) == c.in_channels &&
              frames.dim(2) == c.input_h && frames.dim(3) == c.input_w,
          Err::ShapeMismatch, "forecaster input must be [T_in, C, H, W]");
  const WindowPlan plain = build_plan(c, false);
  const WindowPlan shifted = build_plan(c, true);

  Tensor x = patchify_conv3d(frames, w.params[ForecasterWeights::kTokenizerKernel],
                             w.params[ForecasterWeights::kTokenizerBias], c.patch_t,
                             c.patch_h, c.patch_w);
  x = add(x, w.params[ForecasterWeights::kPosEmbed]);
  for (int64_t b = 0; b < c.n_blocks; ++b) {
    x = block_forward(w, b, x, b % 2 == 0 ? plain : shifted);
  }
  const int64_t fin = w.final_ln_index();
  return layer_norm(x, w.params[static_cast<size_t>(fin)], w.params[static_cast<size_t>(fin + 1)]);
}

}  // namespace

Tensor forward(const ForecasterWeights& w, const Tensor& frames) {
  const ForecasterConfig& c = w.config;
  Tensor x = trunk(w, frames);
  const int64_t spatial = c.tokens_h() * c.tokens_w();
  Tensor last = slice(x, 0, (c.tokens_t() - 1) * spatial, spatial);  // [Nh*Nw, E]
  const int64_t fin = w.final_ln_index();
  Tensor y = add_bias(matmul(last, w.params[static_cast<size_t>(fin + 2)]), w.params[static_cast<size_t>(fin + 3)]);
  y = reshape(y, {c.tokens_h(), c.tokens_w(), c.in_channels, c.patch_h, c.patch_w});
  y = transpose(y, {2, 0, 3, 1, 4});
  return reshape(y, {c.in_channels, c.input_h, c.input_w});
}

Tensor rollout(const ForecasterWeights& w, const Tensor& seed_frames, int64_t n_steps) {
  require(n_steps >= 1, Err::InvalidAttr, "rollout needs at least one step");
  const ForecasterConfig& c = w.config;
  Tensor window = seed_frames;
  std::vector<Tensor> preds;
  preds.reserve(static_cast<size_t>(n_steps));
  for (int64_t s = 0; s < n_steps; ++s) {
    Tensor next = forward(w, window);
    Tensor next_frame = reshape(next, {1, c.in_channels, c.input_h, c.input_w});
    preds.push_back(next_frame);
    const Tensor parts[2] = {slice(window, 0, 1, c.t_in - 1), next_frame};
    window = concat(std::span<const Tensor>(parts, 2), 0);
  }
  if (preds.size() == 1) return preds[0];
  return concat(std::span<const Tensor>(preds.data(), preds.size()), 0);
}

namespace {
std::atomic<int64_t> g_pad_invocations{0};
}

int64_t pad_to_input_invocations() { return g_pad_invocations.load(); }

Tensor pad_to_input(const Tensor& frames, int64_t t_in) {
  require(frames.rank() >= 1, Err::ShapeMismatch, "pad_to_input needs frames");
  const int64_t t = frames.dim(0);
  require(t >= 2, Err::TooFewFrames, "pad_to_input needs at least two frames");
  require(t <= t_in, Err::InvalidAttr, "more frames than T_in");
  g_pad_invocations.fetch_add(1);
  std::vector<double> positions(static_cast<size_t>(t_in));
  for (int64_t i = 0; i < t_in; ++i) {
    positions[static_cast<size_t>(i)] = double(i) * double(t - 1) / double(t_in - 1);
  }
  // exact endpoints: clamp the analytic positions
  positions.front() = 0.0;
  positions.back() = double(t - 1);
  return lerp_axis0(frames, positions);
}

Tensor extract_feature_map(const ForecasterWeights& w, const Tensor& frames) {
  const ForecasterConfig& c = w.config;
  Tensor x = trunk(w, frames);
  const int64_t spatial = c.tokens_h() * c.tokens_w();
  Tensor last = slice(x, 0, (c.tokens_t() - 1) * spatial, spatial);
  return reshape(last, {c.tokens_h(), c.tokens_w(), c.embed_dim});
}

void ForecasterWeights::save(const std::string& path) const {
  json meta;
  meta["config"] = json::parse(config.to_json());
  meta["stats_mean"] = stats.mean;
  meta["stats_std"] = stats.stdev;
  meta["has_stats"] = has_stats;
  meta["trained_epochs"] = trained_epochs;
  meta["manifest"] = json::parse(manifest.to_json());

  auto os = open_out(path);
  write_magic(os, "FMCK");
  write_u32(os, 1);
  write_string(os, meta.dump());
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(param_count()));
  for (const Tensor& p : params) {
    for (double v : p.data()) flat.push_back(float(v));
  }
  write_u64(os, flat.size());
  write_f32_array(os, flat);
  require(bool(os), Err::IoError, "short write: " + path);
}

ForecasterWeights ForecasterWeights::load(const std::string& path) {
  auto is = open_in(path);
  expect_magic(is, "FMCK", path);
  const uint32_t version = read_u32(is);
  require(version == 1, Err::IoError, "unsupported checkpoint version");
  const json meta = json::parse(read_string(is));
  ForecasterWeights w = init(ForecasterConfig::from_json(meta.at("config").dump()), 0);
  w.stats.mean = meta.at("stats_mean").get<std::array<double, 4>>();
  w.stats.stdev = meta.at("stats_std").get<std::array<double, 4>>();
  w.has_stats = meta.at("has_stats").get<bool>();
  w.trained_epochs = meta.at("trained_epochs").get<int64_t>();
  w.manifest = TrainingManifest::from_json(meta.at("manifest").dump());

  const uint64_t n = read_u64(is);
  require(n == uint64_t(w.param_count()), Err::IoError, "checkpoint parameter count mismatch");
  const std::vector<float> flat = read_f32_array(is, n);
  size_t offset = 0;
  for (Tensor& p : w.params) {
    std::vector<double> data(static_cast<size_t>(p.size()));
    for (size_t i = 0; i < data.size(); ++i) data[i] = double(flat[offset + i]);
    offset += data.size();
    p = make_tensor(p.shape(), std::move(data), true);
  }
  return w;
}

}  // namespace fluidfm::fm
