#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gstz/grid.hpp"

namespace gstz {

// Differentiable map from an observation stack to a spatiotemporal costmap.
// forward is deterministic given parameters; backward returns the gradient of
// a scalar loss w.r.t. the parameters given the per-cell gradient w.r.t. the
// output costmap.
class RewardModel {
 public:
  virtual ~RewardModel() = default;

  // Parseable architecture tag, also stored in checkpoints.
  virtual std::string architecture_tag() const = 0;
  virtual int horizon() const = 0;
  virtual int input_channels() const = 0;
  virtual const GridSpec& grid_spec() const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  virtual SpatioTemporalCostmap forward(const ObservationStack& obs) const = 0;
  virtual std::vector<double> backward(const ObservationStack& obs,
                                       const ChannelStack& grad_out) const = 0;

  virtual std::unique_ptr<RewardModel> clone() const = 0;
};

// Per-timestep logistic regression over the input channels, shared spatially:
// J(t, r, c) = sigmoid(sum_k w[t][k] * x[k][r][c] + b[t]).
class LinearFeatureModel : public RewardModel {
 public:
  LinearFeatureModel(int horizon, GridSpec spec = {},
                     int in_channels = kObsChannels, uint64_t init_seed = 0);

  std::string architecture_tag() const override;
  int horizon() const override { return horizon_; }
  int input_channels() const override { return in_channels_; }
  const GridSpec& grid_spec() const override { return spec_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  SpatioTemporalCostmap forward(const ObservationStack& obs) const override;
  std::vector<double> backward(const ObservationStack& obs,
                               const ChannelStack& grad_out) const override;
  std::unique_ptr<RewardModel> clone() const override {
    return std::make_unique<LinearFeatureModel>(*this);
  }

 private:
  int horizon_;
  int in_channels_;
  GridSpec spec_;
  std::vector<double> params_;  // horizon x (in_channels + 1), bias last
};

struct ConvModelDims {
  int c1 = 6;
  int c2 = 12;
  int c3 = 16;
};

// Small encoder-decoder with skip connections: two 2x downsampling stages, a
// dilated bottleneck with a global-context pathway, two upsampling stages, a
// 1x1 head squashed through a logistic. A trainable per-channel input affine
// (initialized to map [0,1] -> [-1,1]) standardizes the inputs, and two fixed
// coordinate channels give the translation-equivariant stack access to the
// ego-centric position.
class ConvEncoderDecoderModel : public RewardModel {
 public:
  ConvEncoderDecoderModel(int horizon, GridSpec spec = {},
                          int in_channels = kObsChannels, ConvModelDims dims = {},
                          uint64_t init_seed = 0);

  std::string architecture_tag() const override;
  int horizon() const override { return horizon_; }
  int input_channels() const override { return in_channels_; }
  const GridSpec& grid_spec() const override { return spec_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  SpatioTemporalCostmap forward(const ObservationStack& obs) const override;
  std::vector<double> backward(const ObservationStack& obs,
                               const ChannelStack& grad_out) const override;
  std::unique_ptr<RewardModel> clone() const override {
    return std::make_unique<ConvEncoderDecoderModel>(*this);
  }

  const ConvModelDims& dims() const { return dims_; }

 private:
  struct Workspace;
  void run_forward(const ObservationStack& obs, Workspace& ws) const;

  int horizon_;
  int in_channels_;
  GridSpec spec_;
  ConvModelDims dims_;
  std::vector<double> params_;

  // Flat parameter layout offsets.
  struct Layout {
    int affine_scale, affine_shift;
    int enc1_w, enc1_b;
    int enc2_w, enc2_b;
    int bott_w, bott_b;
    int gc_w, gc_b;
    int dec1_w, dec1_b;
    int dec2_w, dec2_b;
    int head_w, head_b;
    int total;
  } layout_{};
  void compute_layout();
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  // L2 inside the gradient instead of a decoupled step. Inside the IRL loop
  // the regularizer must flip the sign of the net gradient once the zeroing
  // drift saturates the output head; a decoupled step cannot do that under
  // Adam's per-coordinate normalization, and training freezes at exact
  // saturation.
  bool coupled_l2 = true;
};

// Adam with decoupled weight decay. Rejects non-finite gradients (training
// divergence signal) by throwing std::runtime_error.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<double> params, std::span<const double> grad);
  void step(RewardModel& model, std::span<const double> grad) {
    step(model.parameters(), grad);
  }

  const AdamConfig& config() const { return cfg_; }
  long iterations() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Convolution primitives shared by the model and its tests. Zero padding,
// stride 1, square 3x3 (or 1x1) kernels, optional dilation.
void conv2d_forward(const ChannelStack& in, std::span<const double> w,
                    std::span<const double> b, int out_channels, int ksize,
                    int dilation, ChannelStack& out);
void conv2d_backward(const ChannelStack& in, std::span<const double> w,
                     const ChannelStack& grad_out, int ksize, int dilation,
                     ChannelStack& grad_in, std::span<double> grad_w,
                     std::span<double> grad_b);

// Checkpoint format: "GSTZ" magic, u32 version, architecture tag, u32 param
// count, f32 little-endian parameters.
void save_checkpoint(const RewardModel& model, const std::string& path);
std::unique_ptr<RewardModel> load_checkpoint(const std::string& path);
std::unique_ptr<RewardModel> make_model_from_tag(const std::string& tag);

}  // namespace gstz
