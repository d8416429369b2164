#include "gstz/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gstz/rng.hpp"

namespace gstz {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ELU keeps the whole stack C1, which the finite-difference gradient checks
// rely on.
void elu_inplace(ChannelStack& t) {
  for (double& x : t.data()) {
    if (x < 0.0) x = std::expm1(x);
  }
}

// Gradient through ELU given post-activation values: y > 0 -> 1, else y + 1.
void elu_backward_inplace(const ChannelStack& act, ChannelStack& grad) {
  const auto& a = act.data();
  auto& g = grad.data();
  for (size_t i = 0; i < g.size(); ++i) {
    if (a[i] <= 0.0) g[i] *= a[i] + 1.0;
  }
}

void avgpool2(const ChannelStack& in, ChannelStack& out) {
  const int C = in.channels(), H = in.height() / 2, W = in.width() / 2;
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H; ++r) {
      for (int col = 0; col < W; ++col) {
        out.at(c, r, col) = 0.25 * (in.at(c, 2 * r, 2 * col) +
                                    in.at(c, 2 * r, 2 * col + 1) +
                                    in.at(c, 2 * r + 1, 2 * col) +
                                    in.at(c, 2 * r + 1, 2 * col + 1));
      }
    }
  }
}

void avgpool2_backward(const ChannelStack& gout, ChannelStack& gin) {
  const int C = gout.channels(), H = gout.height(), W = gout.width();
  std::fill(gin.data().begin(), gin.data().end(), 0.0);
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H; ++r) {
      for (int col = 0; col < W; ++col) {
        const double g = 0.25 * gout.at(c, r, col);
        gin.at(c, 2 * r, 2 * col) = g;
        gin.at(c, 2 * r, 2 * col + 1) = g;
        gin.at(c, 2 * r + 1, 2 * col) = g;
        gin.at(c, 2 * r + 1, 2 * col + 1) = g;
      }
    }
  }
}

void upsample2(const ChannelStack& in, ChannelStack& out) {
  const int C = in.channels(), H = out.height(), W = out.width();
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H; ++r) {
      const auto src = in.channel(c);
      const double* srow = src.data() + static_cast<size_t>(r / 2) * in.width();
      double* drow = out.channel(c).data() + static_cast<size_t>(r) * W;
      for (int col = 0; col < W; ++col) drow[col] = srow[col / 2];
    }
  }
}

void upsample2_backward(const ChannelStack& gout, ChannelStack& gin) {
  const int C = gout.channels(), H = gout.height(), W = gout.width();
  std::fill(gin.data().begin(), gin.data().end(), 0.0);
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H; ++r) {
      for (int col = 0; col < W; ++col) {
        gin.at(c, r / 2, col / 2) += gout.at(c, r, col);
      }
    }
  }
}

void check_finite(std::span<const double> g) {
  for (double x : g) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(
          "non-finite gradient rejected (training divergence)");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution primitives

void conv2d_forward(const ChannelStack& in, std::span<const double> w,
                    std::span<const double> b, int out_channels, int ksize,
                    int dilation, ChannelStack& out) {
  const int inC = in.channels(), H = in.height(), W = in.width();
  const int half = ksize / 2;
  for (int oc = 0; oc < out_channels; ++oc) {
    auto dst = out.channel(oc);
    std::fill(dst.begin(), dst.end(), b[oc]);
  }
  for (int oc = 0; oc < out_channels; ++oc) {
    for (int ic = 0; ic < inC; ++ic) {
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          const double wv =
              w[((static_cast<size_t>(oc) * inC + ic) * ksize + ky) * ksize + kx];
          if (wv == 0.0) continue;
          const int dy = (ky - half) * dilation;
          const int dx = (kx - half) * dilation;
          const int r0 = std::max(0, -dy), r1 = std::min(H, H - dy);
          const int c0 = std::max(0, -dx), c1 = std::min(W, W - dx);
          const auto src = in.channel(ic);
          auto dst = out.channel(oc);
          for (int r = r0; r < r1; ++r) {
            const double* s =
                src.data() + static_cast<size_t>(r + dy) * W + (c0 + dx);
            double* d = dst.data() + static_cast<size_t>(r) * W + c0;
            const int n = c1 - c0;
            for (int i = 0; i < n; ++i) d[i] += wv * s[i];
          }
        }
      }
    }
  }
}

void conv2d_backward(const ChannelStack& in, std::span<const double> w,
                     const ChannelStack& grad_out, int ksize, int dilation,
                     ChannelStack& grad_in, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const int inC = in.channels(), H = in.height(), W = in.width();
  const int outC = grad_out.channels();
  const int half = ksize / 2;
  std::fill(grad_in.data().begin(), grad_in.data().end(), 0.0);
  for (int oc = 0; oc < outC; ++oc) {
    const auto g = grad_out.channel(oc);
    double acc = 0.0;
    for (double x : g) acc += x;
    grad_b[oc] += acc;
  }
  for (int oc = 0; oc < outC; ++oc) {
    for (int ic = 0; ic < inC; ++ic) {
      for (int ky = 0; ky < ksize; ++ky) {
        for (int kx = 0; kx < ksize; ++kx) {
          const size_t wi =
              ((static_cast<size_t>(oc) * inC + ic) * ksize + ky) * ksize + kx;
          const double wv = w[wi];
          const int dy = (ky - half) * dilation;
          const int dx = (kx - half) * dilation;
          const int r0 = std::max(0, -dy), r1 = std::min(H, H - dy);
          const int c0 = std::max(0, -dx), c1 = std::min(W, W - dx);
          const auto src = in.channel(ic);
          const auto g = grad_out.channel(oc);
          auto gi = grad_in.channel(ic);
          double wacc = 0.0;
          for (int r = r0; r < r1; ++r) {
            const double* s =
                src.data() + static_cast<size_t>(r + dy) * W + (c0 + dx);
            double* gip =
                gi.data() + static_cast<size_t>(r + dy) * W + (c0 + dx);
            const double* gp = g.data() + static_cast<size_t>(r) * W + c0;
            const int n = c1 - c0;
            for (int i = 0; i < n; ++i) {
              wacc += gp[i] * s[i];
              gip[i] += wv * gp[i];
            }
          }
          grad_w[wi] += wacc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// LinearFeatureModel

LinearFeatureModel::LinearFeatureModel(int horizon, GridSpec spec,
                                       int in_channels, uint64_t init_seed)
    : horizon_(horizon), in_channels_(in_channels), spec_(spec),
      params_(static_cast<size_t>(horizon) * (in_channels + 1), 0.0) {
  CounterRng rng(derive_seed(init_seed, 0x11ULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  for (size_t i = 0; i < params_.size(); ++i) {
    params_[i] = bound * (2.0 * rng.uniform(i) - 1.0);
  }
  // Biases start at zero: untrained maps sit at mid-gray.
  for (int t = 0; t < horizon_; ++t) {
    params_[static_cast<size_t>(t) * (in_channels_ + 1) + in_channels_] = 0.0;
  }
}

std::string LinearFeatureModel::architecture_tag() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "linear t=%d in=%d h=%d w=%d res=%g",
                horizon_, in_channels_, spec_.height, spec_.width,
                spec_.resolution);
  return buf;
}

SpatioTemporalCostmap LinearFeatureModel::forward(
    const ObservationStack& obs) const {
  if (obs.channels.channels() != in_channels_ ||
      obs.spec.height != spec_.height || obs.spec.width != spec_.width) {
    throw std::invalid_argument("observation shape does not match model");
  }
  const int n = obs.spec.cells();
  SpatioTemporalCostmap cm{obs.spec, horizon_,
                           ChannelStack(horizon_, obs.spec.height, obs.spec.width)};
  for (int t = 0; t < horizon_; ++t) {
    const double* wt = params_.data() + static_cast<size_t>(t) * (in_channels_ + 1);
    auto out = cm.maps.channel(t);
    std::fill(out.begin(), out.end(), wt[in_channels_]);
    for (int c = 0; c < in_channels_; ++c) {
      const auto x = obs.channels.channel(c);
      const double w = wt[c];
      for (int i = 0; i < n; ++i) out[i] += w * x[i];
    }
    for (int i = 0; i < n; ++i) out[i] = logistic(out[i]);
  }
  return cm;
}

std::vector<double> LinearFeatureModel::backward(
    const ObservationStack& obs, const ChannelStack& grad_out) const {
  const SpatioTemporalCostmap cm = forward(obs);
  const int n = obs.spec.cells();
  std::vector<double> grad(params_.size(), 0.0);
  for (int t = 0; t < horizon_; ++t) {
    const auto j = cm.maps.channel(t);
    const auto g = grad_out.channel(t);
    double* gt = grad.data() + static_cast<size_t>(t) * (in_channels_ + 1);
    std::vector<double> gz(n);
    for (int i = 0; i < n; ++i) gz[i] = g[i] * j[i] * (1.0 - j[i]);
    for (int c = 0; c < in_channels_; ++c) {
      const auto x = obs.channels.channel(c);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += gz[i] * x[i];
      gt[c] += acc;
    }
    double bacc = 0.0;
    for (int i = 0; i < n; ++i) bacc += gz[i];
    gt[in_channels_] += bacc;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// ConvEncoderDecoderModel

void ConvEncoderDecoderModel::compute_layout() {
  int off = 0;
  auto take = [&off](int n) {
    const int at = off;
    off += n;
    return at;
  };
  const int cin = in_channels_ + 2;  // + coordinate channels
  layout_.affine_scale = take(in_channels_);
  layout_.affine_shift = take(in_channels_);
  layout_.enc1_w = take(9 * cin * dims_.c1);
  layout_.enc1_b = take(dims_.c1);
  layout_.enc2_w = take(9 * dims_.c1 * dims_.c2);
  layout_.enc2_b = take(dims_.c2);
  layout_.bott_w = take(9 * dims_.c2 * dims_.c3);
  layout_.bott_b = take(dims_.c3);
  layout_.gc_w = take(dims_.c3 * dims_.c3);
  layout_.gc_b = take(dims_.c3);
  layout_.dec1_w = take(9 * (dims_.c3 + dims_.c2) * dims_.c2);
  layout_.dec1_b = take(dims_.c2);
  layout_.dec2_w = take(9 * (dims_.c2 + dims_.c1) * dims_.c1);
  layout_.dec2_b = take(dims_.c1);
  layout_.head_w = take(dims_.c1 * horizon_);
  layout_.head_b = take(horizon_);
  layout_.total = off;
}

ConvEncoderDecoderModel::ConvEncoderDecoderModel(int horizon, GridSpec spec,
                                                 int in_channels,
                                                 ConvModelDims dims,
                                                 uint64_t init_seed)
    : horizon_(horizon), in_channels_(in_channels), spec_(spec), dims_(dims) {
  if (spec_.height % 4 != 0 || spec_.width % 4 != 0) {
    throw std::invalid_argument("grid dimensions must be divisible by 4");
  }
  compute_layout();
  params_.assign(layout_.total, 0.0);

  CounterRng rng(derive_seed(init_seed, 0xc0717ULL));
  uint64_t k = 0;
  auto init_uniform = [&](int at, int count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < count; ++i) {
      params_[at + i] = bound * (2.0 * rng.uniform(k++) - 1.0);
    }
  };
  const int cin = in_channels_ + 2;
  init_uniform(layout_.enc1_w, 9 * cin * dims_.c1, 9 * cin);
  init_uniform(layout_.enc2_w, 9 * dims_.c1 * dims_.c2, 9 * dims_.c1);
  init_uniform(layout_.bott_w, 9 * dims_.c2 * dims_.c3, 9 * dims_.c2);
  init_uniform(layout_.gc_w, dims_.c3 * dims_.c3, dims_.c3);
  init_uniform(layout_.dec1_w, 9 * (dims_.c3 + dims_.c2) * dims_.c2,
               9 * (dims_.c3 + dims_.c2));
  init_uniform(layout_.dec2_w, 9 * (dims_.c2 + dims_.c1) * dims_.c1,
               9 * (dims_.c2 + dims_.c1));
  init_uniform(layout_.head_w, dims_.c1 * horizon_, dims_.c1);
  // Input affine starts as [0,1] -> [-1,1]; biases stay zero.
  for (int c = 0; c < in_channels_; ++c) {
    params_[layout_.affine_scale + c] = 2.0;
    params_[layout_.affine_shift + c] = -1.0;
  }
}

std::string ConvEncoderDecoderModel::architecture_tag() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "conv_ed t=%d in=%d h=%d w=%d res=%g c1=%d c2=%d c3=%d",
                horizon_, in_channels_, spec_.height, spec_.width,
                spec_.resolution, dims_.c1, dims_.c2, dims_.c3);
  return buf;
}

struct ConvEncoderDecoderModel::Workspace {
  ChannelStack xin;   // affine-standardized input + coords
  ChannelStack a1;    // enc1 activations, full res
  ChannelStack p1;    // pooled
  ChannelStack a2;    // enc2 activations, half res
  ChannelStack p2;
  ChannelStack a3;    // bottleneck activations, quarter res
  std::vector<double> gc_in;   // pooled global features
  std::vector<double> gc_out;  // fc output
  ChannelStack a3g;   // a3 + broadcast gc
  ChannelStack cat1;  // upsample(a3g) ++ a2
  ChannelStack d1;
  ChannelStack cat2;  // upsample(d1) ++ a1
  ChannelStack d2;
  ChannelStack logits;  // horizon x H x W
  ChannelStack out;     // logistic(logits)
};

void ConvEncoderDecoderModel::run_forward(const ObservationStack& obs,
                                          Workspace& ws) const {
  if (obs.channels.channels() != in_channels_ ||
      obs.spec.height != spec_.height || obs.spec.width != spec_.width) {
    throw std::invalid_argument("observation shape does not match model");
  }
  const int H = obs.spec.height, W = obs.spec.width;
  const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
  const double* P = params_.data();
  const int cin = in_channels_ + 2;

  ws.xin = ChannelStack(cin, H, W);
  for (int c = 0; c < in_channels_; ++c) {
    const double sc = P[layout_.affine_scale + c];
    const double sh = P[layout_.affine_shift + c];
    const auto src = obs.channels.channel(c);
    auto dst = ws.xin.channel(c);
    for (size_t i = 0; i < src.size(); ++i) dst[i] = sc * src[i] + sh;
  }
  // Fixed coordinate channels (ego-centric position).
  {
    auto cx = ws.xin.channel(in_channels_);
    auto cy = ws.xin.channel(in_channels_ + 1);
    const GridSpec& g = obs.spec;
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        cx[static_cast<size_t>(r) * W + c] =
            (c - g.center_col()) / (0.5 * W);
        cy[static_cast<size_t>(r) * W + c] =
            (r - g.center_row()) / (0.5 * H);
      }
    }
  }

  ws.a1 = ChannelStack(dims_.c1, H, W);
  conv2d_forward(ws.xin, {P + layout_.enc1_w, static_cast<size_t>(9 * cin * dims_.c1)},
                 {P + layout_.enc1_b, static_cast<size_t>(dims_.c1)}, dims_.c1, 3, 1,
                 ws.a1);
  elu_inplace(ws.a1);

  ws.p1 = ChannelStack(dims_.c1, H2, W2);
  avgpool2(ws.a1, ws.p1);

  ws.a2 = ChannelStack(dims_.c2, H2, W2);
  conv2d_forward(ws.p1,
                 {P + layout_.enc2_w, static_cast<size_t>(9 * dims_.c1 * dims_.c2)},
                 {P + layout_.enc2_b, static_cast<size_t>(dims_.c2)}, dims_.c2, 3, 1,
                 ws.a2);
  elu_inplace(ws.a2);

  ws.p2 = ChannelStack(dims_.c2, H4, W4);
  avgpool2(ws.a2, ws.p2);

  ws.a3 = ChannelStack(dims_.c3, H4, W4);
  conv2d_forward(ws.p2,
                 {P + layout_.bott_w, static_cast<size_t>(9 * dims_.c2 * dims_.c3)},
                 {P + layout_.bott_b, static_cast<size_t>(dims_.c3)}, dims_.c3, 3, 2,
                 ws.a3);
  elu_inplace(ws.a3);

  // Global context: average pool -> dense -> broadcast add.
  const double inv_hw = 1.0 / (static_cast<double>(H4) * W4);
  ws.gc_in.assign(dims_.c3, 0.0);
  for (int c = 0; c < dims_.c3; ++c) {
    double acc = 0.0;
    for (double v : ws.a3.channel(c)) acc += v;
    ws.gc_in[c] = acc * inv_hw;
  }
  ws.gc_out.assign(dims_.c3, 0.0);
  for (int o = 0; o < dims_.c3; ++o) {
    double acc = P[layout_.gc_b + o];
    const double* w = P + layout_.gc_w + static_cast<size_t>(o) * dims_.c3;
    for (int i = 0; i < dims_.c3; ++i) acc += w[i] * ws.gc_in[i];
    ws.gc_out[o] = acc;
  }
  ws.a3g = ws.a3;
  for (int c = 0; c < dims_.c3; ++c) {
    const double add = ws.gc_out[c];
    for (double& v : ws.a3g.channel(c)) v += add;
  }

  ws.cat1 = ChannelStack(dims_.c3 + dims_.c2, H2, W2);
  {
    ChannelStack up(dims_.c3, H2, W2);
    upsample2(ws.a3g, up);
    for (int c = 0; c < dims_.c3; ++c) {
      auto src = up.channel(c);
      std::copy(src.begin(), src.end(), ws.cat1.channel(c).begin());
    }
    for (int c = 0; c < dims_.c2; ++c) {
      auto src = ws.a2.channel(c);
      std::copy(src.begin(), src.end(), ws.cat1.channel(dims_.c3 + c).begin());
    }
  }

  ws.d1 = ChannelStack(dims_.c2, H2, W2);
  conv2d_forward(ws.cat1,
                 {P + layout_.dec1_w,
                  static_cast<size_t>(9 * (dims_.c3 + dims_.c2) * dims_.c2)},
                 {P + layout_.dec1_b, static_cast<size_t>(dims_.c2)}, dims_.c2, 3, 1,
                 ws.d1);
  elu_inplace(ws.d1);

  ws.cat2 = ChannelStack(dims_.c2 + dims_.c1, H, W);
  {
    ChannelStack up(dims_.c2, H, W);
    upsample2(ws.d1, up);
    for (int c = 0; c < dims_.c2; ++c) {
      auto src = up.channel(c);
      std::copy(src.begin(), src.end(), ws.cat2.channel(c).begin());
    }
    for (int c = 0; c < dims_.c1; ++c) {
      auto src = ws.a1.channel(c);
      std::copy(src.begin(), src.end(), ws.cat2.channel(dims_.c2 + c).begin());
    }
  }

  ws.d2 = ChannelStack(dims_.c1, H, W);
  conv2d_forward(ws.cat2,
                 {P + layout_.dec2_w,
                  static_cast<size_t>(9 * (dims_.c2 + dims_.c1) * dims_.c1)},
                 {P + layout_.dec2_b, static_cast<size_t>(dims_.c1)}, dims_.c1, 3, 1,
                 ws.d2);
  elu_inplace(ws.d2);

  ws.logits = ChannelStack(horizon_, H, W);
  conv2d_forward(ws.d2,
                 {P + layout_.head_w, static_cast<size_t>(dims_.c1 * horizon_)},
                 {P + layout_.head_b, static_cast<size_t>(horizon_)}, horizon_, 1, 1,
                 ws.logits);

  ws.out = ws.logits;
  for (double& v : ws.out.data()) v = logistic(v);
}

SpatioTemporalCostmap ConvEncoderDecoderModel::forward(
    const ObservationStack& obs) const {
  Workspace ws;
  run_forward(obs, ws);
  return SpatioTemporalCostmap{obs.spec, horizon_, std::move(ws.out)};
}

std::vector<double> ConvEncoderDecoderModel::backward(
    const ObservationStack& obs, const ChannelStack& grad_out) const {
  Workspace ws;
  run_forward(obs, ws);
  const int H = obs.spec.height, W = obs.spec.width;
  const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
  const double* P = params_.data();
  const int cin = in_channels_ + 2;
  std::vector<double> grad(params_.size(), 0.0);
  double* G = grad.data();

  // dL/dlogits through the logistic head.
  ChannelStack g_logits = grad_out;
  {
    const auto& j = ws.out.data();
    auto& g = g_logits.data();
    for (size_t i = 0; i < g.size(); ++i) g[i] *= j[i] * (1.0 - j[i]);
  }

  ChannelStack g_d2(dims_.c1, H, W);
  conv2d_backward(ws.d2, {P + layout_.head_w, static_cast<size_t>(dims_.c1 * horizon_)},
                  g_logits, 1, 1, g_d2,
                  {G + layout_.head_w, static_cast<size_t>(dims_.c1 * horizon_)},
                  {G + layout_.head_b, static_cast<size_t>(horizon_)});
  elu_backward_inplace(ws.d2, g_d2);

  ChannelStack g_cat2(dims_.c2 + dims_.c1, H, W);
  conv2d_backward(ws.cat2,
                  {P + layout_.dec2_w,
                   static_cast<size_t>(9 * (dims_.c2 + dims_.c1) * dims_.c1)},
                  g_d2, 3, 1, g_cat2,
                  {G + layout_.dec2_w,
                   static_cast<size_t>(9 * (dims_.c2 + dims_.c1) * dims_.c1)},
                  {G + layout_.dec2_b, static_cast<size_t>(dims_.c1)});

  // Split cat2 gradient into the upsample branch and the enc1 skip.
  ChannelStack g_a1 = ChannelStack(dims_.c1, H, W);
  ChannelStack g_d1(dims_.c2, H2, W2);
  {
    ChannelStack g_up(dims_.c2, H, W);
    for (int c = 0; c < dims_.c2; ++c) {
      auto src = g_cat2.channel(c);
      std::copy(src.begin(), src.end(), g_up.channel(c).begin());
    }
    for (int c = 0; c < dims_.c1; ++c) {
      auto src = g_cat2.channel(dims_.c2 + c);
      std::copy(src.begin(), src.end(), g_a1.channel(c).begin());
    }
    upsample2_backward(g_up, g_d1);
  }
  elu_backward_inplace(ws.d1, g_d1);

  ChannelStack g_cat1(dims_.c3 + dims_.c2, H2, W2);
  conv2d_backward(ws.cat1,
                  {P + layout_.dec1_w,
                   static_cast<size_t>(9 * (dims_.c3 + dims_.c2) * dims_.c2)},
                  g_d1, 3, 1, g_cat1,
                  {G + layout_.dec1_w,
                   static_cast<size_t>(9 * (dims_.c3 + dims_.c2) * dims_.c2)},
                  {G + layout_.dec1_b, static_cast<size_t>(dims_.c2)});

  ChannelStack g_a3g(dims_.c3, H4, W4);
  ChannelStack g_a2(dims_.c2, H2, W2);
  {
    ChannelStack g_up(dims_.c3, H2, W2);
    for (int c = 0; c < dims_.c3; ++c) {
      auto src = g_cat1.channel(c);
      std::copy(src.begin(), src.end(), g_up.channel(c).begin());
    }
    for (int c = 0; c < dims_.c2; ++c) {
      auto src = g_cat1.channel(dims_.c3 + c);
      std::copy(src.begin(), src.end(), g_a2.channel(c).begin());
    }
    upsample2_backward(g_up, g_a3g);
  }

  // Global context backward: broadcast-add means the per-channel sums feed
  // both the residual path and the fc path.
  ChannelStack g_a3 = g_a3g;
  {
    std::vector<double> g_gc_out(dims_.c3, 0.0);
    for (int c = 0; c < dims_.c3; ++c) {
      double acc = 0.0;
      for (double v : g_a3g.channel(c)) acc += v;
      g_gc_out[c] = acc;
    }
    std::vector<double> g_gc_in(dims_.c3, 0.0);
    for (int o = 0; o < dims_.c3; ++o) {
      G[layout_.gc_b + o] += g_gc_out[o];
      const double* w = P + layout_.gc_w + static_cast<size_t>(o) * dims_.c3;
      double* gw = G + layout_.gc_w + static_cast<size_t>(o) * dims_.c3;
      for (int i = 0; i < dims_.c3; ++i) {
        gw[i] += g_gc_out[o] * ws.gc_in[i];
        g_gc_in[i] += g_gc_out[o] * w[i];
      }
    }
    const double inv_hw = 1.0 / (static_cast<double>(H4) * W4);
    for (int c = 0; c < dims_.c3; ++c) {
      const double add = g_gc_in[c] * inv_hw;
      for (double& v : g_a3.channel(c)) v += add;
    }
  }
  elu_backward_inplace(ws.a3, g_a3);

  ChannelStack g_p2(dims_.c2, H4, W4);
  conv2d_backward(ws.p2,
                  {P + layout_.bott_w, static_cast<size_t>(9 * dims_.c2 * dims_.c3)},
                  g_a3, 3, 2, g_p2,
                  {G + layout_.bott_w, static_cast<size_t>(9 * dims_.c2 * dims_.c3)},
                  {G + layout_.bott_b, static_cast<size_t>(dims_.c3)});

  {
    ChannelStack g_a2_pool(dims_.c2, H2, W2);
    avgpool2_backward(g_p2, g_a2_pool);
    auto& a = g_a2.data();
    const auto& b = g_a2_pool.data();
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  elu_backward_inplace(ws.a2, g_a2);

  ChannelStack g_p1(dims_.c1, H2, W2);
  conv2d_backward(ws.p1,
                  {P + layout_.enc2_w, static_cast<size_t>(9 * dims_.c1 * dims_.c2)},
                  g_a2, 3, 1, g_p1,
                  {G + layout_.enc2_w, static_cast<size_t>(9 * dims_.c1 * dims_.c2)},
                  {G + layout_.enc2_b, static_cast<size_t>(dims_.c2)});
  {
    ChannelStack g_a1_pool(dims_.c1, H, W);
    avgpool2_backward(g_p1, g_a1_pool);
    auto& a = g_a1.data();
    const auto& b = g_a1_pool.data();
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  elu_backward_inplace(ws.a1, g_a1);

  ChannelStack g_xin(cin, H, W);
  conv2d_backward(ws.xin,
                  {P + layout_.enc1_w, static_cast<size_t>(9 * cin * dims_.c1)},
                  g_a1, 3, 1, g_xin,
                  {G + layout_.enc1_w, static_cast<size_t>(9 * cin * dims_.c1)},
                  {G + layout_.enc1_b, static_cast<size_t>(dims_.c1)});

  // Input affine gradient.
  for (int c = 0; c < in_channels_; ++c) {
    const auto x = obs.channels.channel(c);
    const auto g = g_xin.channel(c);
    double gs = 0.0, gh = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      gs += g[i] * x[i];
      gh += g[i];
    }
    G[layout_.affine_scale + c] += gs;
    G[layout_.affine_shift + c] += gh;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Adam

void AdamOptimizer::step(std::span<double> params,
                         std::span<const double> grad) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("gradient size does not match parameters");
  }
  check_finite(grad);
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = cfg_.coupled_l2
                         ? grad[i] + cfg_.weight_decay * params[i]
                         : grad[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    double update = mhat / (std::sqrt(vhat) + cfg_.eps);
    if (!cfg_.coupled_l2) update += cfg_.weight_decay * params[i];
    params[i] -= cfg_.lr * update;
  }
}

}  // namespace gstz
