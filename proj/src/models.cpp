#include "dimglo/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dimglo {

namespace {

constexpr double kNormEpsilon = 1e-12;
constexpr char kCheckpointMagic[8] = {'D', 'G', 'C', 'K', 'P', 'T', '0', '1'};

Matrix init_weight(int out_dim, int in_dim, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Matrix w(out_dim, in_dim);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * dist(rng);
  }
  return w;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteInputError(what);
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  return (x * w.transpose()).rowwise() + b.col(0).transpose();
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

Matrix read_matrix(std::ifstream& in) {
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw IoError("checkpoint truncated");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  }
  if (!in) throw IoError("checkpoint truncated");
  return m;
}

}  // namespace

Vector flatten_params(const ConstParamRefs& params) {
  Eigen::Index total = 0;
  for (const Matrix* p : params) total += p->size();
  Vector flat(total);
  Eigen::Index at = 0;
  for (const Matrix* p : params) {
    flat.segment(at, p->size()) = Eigen::Map<const Vector>(p->data(), p->size());
    at += p->size();
  }
  return flat;
}

void unflatten_params(const Vector& flat, const ParamRefs& params) {
  Eigen::Index at = 0;
  for (Matrix* p : params) {
    if (at + p->size() > flat.size()) {
      throw ShapeMismatchError("unflatten_params: flat vector too short");
    }
    Eigen::Map<Vector>(p->data(), p->size()) = flat.segment(at, p->size());
    at += p->size();
  }
  if (at != flat.size()) {
    throw ShapeMismatchError("unflatten_params: flat vector too long");
  }
}

Vector flatten_blocks(const GradientBlocks& blocks) {
  ConstParamRefs refs;
  refs.reserve(blocks.size());
  for (const Matrix& b : blocks) refs.push_back(&b);
  return flatten_params(refs);
}

// ---------------------------------------------------------------------------
// EncoderModel
// ---------------------------------------------------------------------------

EncoderModel::EncoderModel(int input_dim, const std::vector<int>& hidden_dims,
                           int feature_dim, Rng& rng) {
  int in_dim = input_dim;
  for (int h : hidden_dims) {
    weights_.push_back(init_weight(h, in_dim, rng));
    biases_.push_back(Matrix::Zero(h, 1));
    in_dim = h;
  }
  weights_.push_back(init_weight(feature_dim, in_dim, rng));
  biases_.push_back(Matrix::Zero(feature_dim, 1));
}

Matrix EncoderModel::forward(const Matrix& inputs, Cache* cache) const {
  check_finite(inputs, "EncoderModel::forward: non-finite input");
  if (inputs.cols() != weights_.front().cols()) {
    throw DimensionMismatchError("EncoderModel::forward: input dim mismatch");
  }
  if (cache) {
    cache->inputs = inputs;
    cache->hidden.clear();
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    h = affine(h, weights_[l], biases_[l]).array().tanh();
    if (cache) cache->hidden.push_back(h);
  }
  Matrix pre = affine(h, weights_.back(), biases_.back());
  Vector norms = pre.rowwise().norm();
  Matrix features(pre.rows(), pre.cols());
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    features.row(i) = pre.row(i) / (norms(i) + kNormEpsilon);
  }
  if (cache) {
    cache->pre_norm = std::move(pre);
    cache->norms = std::move(norms);
  }
  return features;
}

GradientBlocks EncoderModel::backward(const Cache& cache,
                                      const Matrix& grad_features,
                                      Matrix* grad_inputs) const {
  if (cache.pre_norm.rows() != grad_features.rows() ||
      cache.pre_norm.cols() != grad_features.cols()) {
    throw CacheMismatchError("EncoderModel::backward: cache shape mismatch");
  }
  const Eigen::Index batch = grad_features.rows();

  // Exact Jacobian of p / (||p|| + eps):
  //   grad_p = g/(n+eps) - p (p.g) / (n (n+eps)^2)
  Matrix grad_pre(batch, grad_features.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double n = cache.norms(i);
    const double stabilized = n + kNormEpsilon;
    grad_pre.row(i) = grad_features.row(i) / stabilized;
    if (n > kNormEpsilon) {
      const double radial = cache.pre_norm.row(i).dot(grad_features.row(i));
      grad_pre.row(i) -=
          cache.pre_norm.row(i) * (radial / (n * stabilized * stabilized));
    }
  }

  GradientBlocks grads(2 * weights_.size());
  Matrix grad_h = std::move(grad_pre);
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Matrix& layer_in = l == 0 ? cache.inputs : cache.hidden[l - 1];
    grads[2 * l] = grad_h.transpose() * layer_in;             // dW
    grads[2 * l + 1] = grad_h.colwise().sum().transpose();    // db
    if (l > 0 || grad_inputs) {
      grad_h = grad_h * weights_[l];
      if (l > 0) {
        grad_h.array() *= (1.0 - cache.hidden[l - 1].array().square());
      }
    }
  }
  if (grad_inputs) *grad_inputs = std::move(grad_h);
  return grads;
}

ParamRefs EncoderModel::params() {
  ParamRefs refs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    refs.push_back(&weights_[l]);
    refs.push_back(&biases_[l]);
  }
  return refs;
}

ConstParamRefs EncoderModel::params() const {
  ConstParamRefs refs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    refs.push_back(&weights_[l]);
    refs.push_back(&biases_[l]);
  }
  return refs;
}

// ---------------------------------------------------------------------------
// DiscriminatorModel
// ---------------------------------------------------------------------------

DiscriminatorModel::DiscriminatorModel(int feature_dim, int hidden_dim,
                                       Rng& rng)
    : w1_(init_weight(hidden_dim, feature_dim, rng)),
      b1_(Matrix::Zero(hidden_dim, 1)),
      w2_(init_weight(1, hidden_dim, rng)),
      b2_(Matrix::Zero(1, 1)) {}

Vector DiscriminatorModel::forward(const Matrix& features, Cache* cache) const {
  check_finite(features, "DiscriminatorModel::forward: non-finite input");
  if (features.cols() != w1_.cols()) {
    throw DimensionMismatchError("DiscriminatorModel::forward: dim mismatch");
  }
  Matrix hidden = affine(features, w1_, b1_).cwiseMax(0.0);
  Vector scores = (hidden * w2_.transpose()).col(0).array() + b2_(0, 0);
  if (cache) {
    cache->inputs = features;
    cache->hidden = std::move(hidden);
  }
  return scores;
}

GradientBlocks DiscriminatorModel::backward(const Cache& cache,
                                            const Vector& grad_scores,
                                            Matrix* grad_inputs) const {
  if (cache.hidden.rows() != grad_scores.size()) {
    throw CacheMismatchError("DiscriminatorModel::backward: cache mismatch");
  }
  GradientBlocks grads(4);
  grads[2] = grad_scores.transpose() * cache.hidden;  // dW2 (1 x H)
  grads[3] = Matrix::Constant(1, 1, grad_scores.sum());
  Matrix grad_hidden = grad_scores * w2_;  // (B x H)
  grad_hidden.array() *= (cache.hidden.array() > 0.0).cast<double>();
  grads[0] = grad_hidden.transpose() * cache.inputs;
  grads[1] = grad_hidden.colwise().sum().transpose();
  if (grad_inputs) *grad_inputs = grad_hidden * w1_;
  return grads;
}

ParamRefs DiscriminatorModel::params() { return {&w1_, &b1_, &w2_, &b2_}; }
ConstParamRefs DiscriminatorModel::params() const {
  return {&w1_, &b1_, &w2_, &b2_};
}

// ---------------------------------------------------------------------------
// ClassifierHead
// ---------------------------------------------------------------------------

ClassifierHead::ClassifierHead(int feature_dim, int classes, Rng& rng)
    : w_(init_weight(classes, feature_dim, rng)), b_(Matrix::Zero(classes, 1)) {}

Matrix ClassifierHead::forward(const Matrix& features, Cache* cache) const {
  check_finite(features, "ClassifierHead::forward: non-finite input");
  if (features.cols() != w_.cols()) {
    throw DimensionMismatchError("ClassifierHead::forward: dim mismatch");
  }
  if (cache) cache->inputs = features;
  return affine(features, w_, b_);
}

GradientBlocks ClassifierHead::backward(const Cache& cache,
                                        const Matrix& grad_logits,
                                        Matrix* grad_inputs) const {
  if (cache.inputs.rows() != grad_logits.rows()) {
    throw CacheMismatchError("ClassifierHead::backward: cache mismatch");
  }
  GradientBlocks grads(2);
  grads[0] = grad_logits.transpose() * cache.inputs;
  grads[1] = grad_logits.colwise().sum().transpose();
  if (grad_inputs) *grad_inputs = grad_logits * w_;
  return grads;
}

ParamRefs ClassifierHead::params() { return {&w_, &b_}; }
ConstParamRefs ClassifierHead::params() const { return {&w_, &b_}; }

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const ConstParamRefs& params, double lr) {
  AdamState state;
  state.lr = lr;
  for (const Matrix* p : params) {
    state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return state;
}

void adam_step(const ParamRefs& params, const GradientBlocks& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeMismatchError("adam_step: block count mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw ShapeMismatchError("adam_step: gradient shape mismatch");
    }
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = state.m[i] / bc1;
    const Matrix v_hat = state.v[i] / bc2;
    p.array() -=
        state.lr * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const EncoderModel& encoder,
                     const DiscriminatorModel& dnet,
                     const ClassifierHead& classifier) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  auto write_model = [&](const ConstParamRefs& refs) {
    const std::uint32_t count = static_cast<std::uint32_t>(refs.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const Matrix* p : refs) write_matrix(out, *p);
  };
  write_model(encoder.params());
  write_model(dnet.params());
  write_model(classifier.params());
  if (!out) throw IoError("write failed: " + path);
}

void load_checkpoint(const std::string& path, EncoderModel& encoder,
                     DiscriminatorModel& dnet, ClassifierHead& classifier) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("bad checkpoint magic: " + path);
  }
  auto read_model = [&](const ParamRefs& refs) {
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count != refs.size()) {
      throw IoError("checkpoint layout mismatch: " + path);
    }
    for (Matrix* p : refs) {
      Matrix m = read_matrix(in);
      if (m.rows() != p->rows() || m.cols() != p->cols()) {
        throw IoError("checkpoint shape mismatch: " + path);
      }
      *p = std::move(m);
    }
  };
  read_model(encoder.params());
  read_model(dnet.params());
  read_model(classifier.params());
}

}  // namespace dimglo
