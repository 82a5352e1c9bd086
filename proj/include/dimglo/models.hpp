#pragma once

#include <string>
#include <vector>

#include "dimglo/common.hpp"

namespace dimglo {

/// Parameter blocks are plain matrices (biases are column matrices) so the
/// optimizer, checkpoints and gradient checks share one flat view.
using ParamRefs = std::vector<Matrix*>;
using ConstParamRefs = std::vector<const Matrix*>;
using GradientBlocks = std::vector<Matrix>;

Vector flatten_params(const ConstParamRefs& params);
void unflatten_params(const Vector& flat, const ParamRefs& params);
Vector flatten_blocks(const GradientBlocks& blocks);

/// Feedforward encoder with tanh hidden layers and an L2-normalized output
/// (norm stabilized by +1e-12 so a zero pre-norm row degrades to zero
/// output instead of dividing by zero).
class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(int input_dim, const std::vector<int>& hidden_dims,
               int feature_dim, Rng& rng);

  struct Cache {
    Matrix inputs;
    std::vector<Matrix> hidden;  // post-activation per hidden layer
    Matrix pre_norm;
    Vector norms;
  };

  Matrix forward(const Matrix& inputs, Cache* cache = nullptr) const;

  /// Parameter gradients for a batch, chaining grad_features through the
  /// normalization Jacobian and the layers. Also returns input gradients
  /// via grad_inputs when non-null.
  GradientBlocks backward(const Cache& cache, const Matrix& grad_features,
                          Matrix* grad_inputs = nullptr) const;

  ParamRefs params();
  ConstParamRefs params() const;
  int input_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols()); }
  int feature_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows()); }

 private:
  std::vector<Matrix> weights_;  // layer l: out x in
  std::vector<Matrix> biases_;   // layer l: out x 1
};

/// Two affine layers, ReLU after the first, scalar output per feature row.
class DiscriminatorModel {
 public:
  DiscriminatorModel() = default;
  DiscriminatorModel(int feature_dim, int hidden_dim, Rng& rng);

  struct Cache {
    Matrix inputs;
    Matrix hidden;  // post-ReLU
  };

  Vector forward(const Matrix& features, Cache* cache = nullptr) const;

  /// Parameter gradients plus input-feature gradients (needed to train the
  /// encoder through the confusion objective).
  GradientBlocks backward(const Cache& cache, const Vector& grad_scores,
                          Matrix* grad_inputs = nullptr) const;

  ParamRefs params();
  ConstParamRefs params() const;
  int input_dim() const { return w1_.size() == 0 ? 0 : static_cast<int>(w1_.cols()); }

 private:
  Matrix w1_, b1_, w2_, b2_;
};

/// Affine map feature_dim -> class logits.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int feature_dim, int classes, Rng& rng);

  struct Cache {
    Matrix inputs;
  };

  Matrix forward(const Matrix& features, Cache* cache = nullptr) const;
  GradientBlocks backward(const Cache& cache, const Matrix& grad_logits,
                          Matrix* grad_inputs = nullptr) const;

  ParamRefs params();
  ConstParamRefs params() const;
  int classes() const { return static_cast<int>(w_.rows()); }

 private:
  Matrix w_, b_;
};

/// Bias-corrected Adam moments over a fixed parameter-block layout.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long long step = 0;
  double lr = 3.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ConstParamRefs& params, double lr);
};

void adam_step(const ParamRefs& params, const GradientBlocks& grads,
               AdamState& state);

// Checkpoints: magic bytes, a dims header, then row-major doubles.
void save_checkpoint(const std::string& path, const EncoderModel& encoder,
                     const DiscriminatorModel& dnet,
                     const ClassifierHead& classifier);
void load_checkpoint(const std::string& path, EncoderModel& encoder,
                     DiscriminatorModel& dnet, ClassifierHead& classifier);

}  // namespace dimglo
