#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "mlcvqa/common.hpp"
#include "mlcvqa/parallel.hpp"

namespace mlcvqa {

struct ModelConfig {
  Eigen::Index input_dim = 4960;
  Eigen::Index proj_dim = 128;
  Eigen::Index kernel = 3;
  Eigen::Index n_conv_layers = 2;
  Eigen::Index mlp_hidden = 64;

  /// Same-length temporal padding.
  Eigen::Index padding() const { return (kernel - 1) / 2; }

  void validate() const {
    if (input_dim < 1 || proj_dim < 1 || mlp_hidden < 1 || n_conv_layers < 0) {
      throw InvalidArgument("model dimensions must be positive");
    }
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be odd");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// 1-D convolution over time, stride 1, zero padding (kernel-1)/2.
/// taps[k] is the out x in weight applied at time offset k - padding.
template <typename Scalar>
struct Conv1d {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> taps;
  Vector bias;

  static Conv1d zeros(Eigen::Index in, Eigen::Index out, Eigen::Index kernel) {
    Conv1d c;
    c.taps.assign(static_cast<std::size_t>(kernel), Matrix::Zero(out, in));
    c.bias = Vector::Zero(out);
    return c;
  }

  Eigen::Index in_channels() const { return taps.front().cols(); }
  Eigen::Index out_channels() const { return taps.front().rows(); }
  Eigen::Index padding() const { return (static_cast<Eigen::Index>(taps.size()) - 1) / 2; }

  /// x is channels x time.
  Matrix apply(const Matrix& x) const {
    const Eigen::Index t = x.cols();
    Matrix out = bias.replicate(1, t);
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const Eigen::Index offset = static_cast<Eigen::Index>(k) - padding();
      const Eigen::Index first = std::max<Eigen::Index>(0, -offset);
      const Eigen::Index last = std::min<Eigen::Index>(t, t - offset);
      if (last <= first) continue;
      out.middleCols(first, last - first).noalias() += taps[k] * x.middleCols(first + offset, last - first);
    }
    return out;
  }

  /// Accumulates parameter gradients into `grad` and returns d(loss)/dx.
  Matrix backward(const Matrix& x, const Matrix& dout, Conv1d& grad, bool need_input_grad = true) const {
    const Eigen::Index t = x.cols();
    Matrix dx;
    if (need_input_grad) dx = Matrix::Zero(x.rows(), t);
    grad.bias += dout.rowwise().sum();
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const Eigen::Index offset = static_cast<Eigen::Index>(k) - padding();
      const Eigen::Index first = std::max<Eigen::Index>(0, -offset);
      const Eigen::Index last = std::min<Eigen::Index>(t, t - offset);
      if (last <= first) continue;
      const auto d = dout.middleCols(first, last - first);
      grad.taps[k].noalias() += d * x.middleCols(first + offset, last - first).transpose();
      if (need_input_grad) dx.middleCols(first + offset, last - first).noalias() += taps[k].transpose() * d;
    }
    return dx;
  }
};

template <typename Scalar>
struct Dense {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weight;  // out x in
  Vector bias;

  static Dense zeros(Eigen::Index in, Eigen::Index out) { return {Matrix::Zero(out, in), Vector::Zero(out)}; }
};

/// Parameters of the quality head: projection conv, n_conv_layers conv
/// layers, and a two-layer per-step MLP. Also used as the gradient type.
template <typename Scalar>
struct QualityModel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ModelConfig config;
  Conv1d<Scalar> proj;
  std::vector<Conv1d<Scalar>> convs;
  Dense<Scalar> hidden;
  Dense<Scalar> head;

  static QualityModel zeros(const ModelConfig& cfg) {
    cfg.validate();
    QualityModel m;
    m.config = cfg;
    m.proj = Conv1d<Scalar>::zeros(cfg.input_dim, cfg.proj_dim, cfg.kernel);
    for (Eigen::Index i = 0; i < cfg.n_conv_layers; ++i) {
      m.convs.push_back(Conv1d<Scalar>::zeros(cfg.proj_dim, cfg.proj_dim, cfg.kernel));
    }
    m.hidden = Dense<Scalar>::zeros(cfg.proj_dim, cfg.mlp_hidden);
    m.head = Dense<Scalar>::zeros(cfg.mlp_hidden, 1);
    return m;
  }

  /// Calls fn(tensor) on every parameter block in a fixed order: for each
  /// conv (projection first) its taps then bias, then hidden weight, hidden
  /// bias, head weight, head bias.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    auto conv = [&](Conv1d<Scalar>& c) {
      for (auto& tap : c.taps) fn(tap);
      fn(c.bias);
    };
    conv(proj);
    for (auto& c : convs) conv(c);
    fn(hidden.weight);
    fn(hidden.bias);
    fn(head.weight);
    fn(head.bias);
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<QualityModel*>(this)->for_each_tensor([&](auto& t) { fn(std::as_const(t)); });
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for_each_tensor([&](const auto& t) { n += t.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for_each_tensor([&](const auto& t) { s += t.squaredNorm(); });
    return s;
  }

  void set_zero() {
    for_each_tensor([](auto& t) { t.setZero(); });
  }

  /// this += alpha * other, tensor by tensor.
  void add_scaled(const QualityModel& other, Scalar alpha) {
    std::vector<const Matrix*> mats;
    std::vector<const Vector*> vecs;
    other.for_each_tensor([&](const auto& t) {
      if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Matrix>) {
        mats.push_back(&t);
      } else {
        vecs.push_back(&t);
      }
    });
    std::size_t mi = 0, vi = 0;
    for_each_tensor([&](auto& t) {
      if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Matrix>) {
        t += alpha * *mats[mi++];
      } else {
        t += alpha * *vecs[vi++];
      }
    });
  }

  template <typename Other>
  QualityModel<Other> cast() const {
    auto out = QualityModel<Other>::zeros(config);
    auto conv = [](const Conv1d<Scalar>& from, Conv1d<Other>& to) {
      for (std::size_t k = 0; k < from.taps.size(); ++k) to.taps[k] = from.taps[k].template cast<Other>();
      to.bias = from.bias.template cast<Other>();
    };
    conv(proj, out.proj);
    for (std::size_t i = 0; i < convs.size(); ++i) conv(convs[i], out.convs[i]);
    out.hidden = {hidden.weight.template cast<Other>(), hidden.bias.template cast<Other>()};
    out.head = {head.weight.template cast<Other>(), head.bias.template cast<Other>()};
    return out;
  }
};

/// Kaiming-uniform (fan-in, ReLU gain) weights with bound sqrt(6 / fan_in),
/// zero biases. Deterministic given the seed.
template <typename Scalar>
QualityModel<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  auto m = QualityModel<Scalar>::zeros(cfg);
  Rng rng = make_rng(seed, 0);
  auto fill = [&](auto& w, Eigen::Index fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
  };
  auto conv = [&](Conv1d<Scalar>& c) {
    const Eigen::Index fan_in = c.in_channels() * static_cast<Eigen::Index>(c.taps.size());
    for (auto& tap : c.taps) fill(tap, fan_in);
  };
  conv(m.proj);
  for (auto& c : m.convs) conv(c);
  fill(m.hidden.weight, cfg.proj_dim);
  fill(m.head.weight, cfg.mlp_hidden);
  return m;
}

inline double kaiming_bound(Eigen::Index fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

template <typename Scalar>
struct Prediction {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> per_step;
  Scalar score = 0;
};

/// Intermediate values of one forward pass, channels x time.
template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix input;
  std::vector<Matrix> pre;   // pre-activations: projection, convs..., hidden
  std::vector<Matrix> post;  // ReLU outputs, parallel to pre
  Prediction<Scalar> prediction;
};

/// x is time x features (one row per window).
template <typename Scalar, typename Derived>
ForwardCache<Scalar> forward_cached(const QualityModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  using Matrix = typename ForwardCache<Scalar>::Matrix;
  if (x.cols() != model.config.input_dim) {
    throw InvalidArgument("input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(model.config.input_dim));
  }
  if (x.rows() < 1) throw InvalidArgument("input has no time steps");
  ForwardCache<Scalar> cache;
  cache.input = x.transpose().template cast<Scalar>();
  const Matrix* current = &cache.input;
  auto push = [&](Matrix z) {
    cache.pre.push_back(std::move(z));
    cache.post.push_back(cache.pre.back().cwiseMax(Scalar(0)));
    current = &cache.post.back();
  };
  cache.pre.reserve(model.convs.size() + 2);
  cache.post.reserve(model.convs.size() + 2);
  push(model.proj.apply(*current));
  for (const auto& conv : model.convs) push(conv.apply(*current));
  push((model.hidden.weight * *current).colwise() + model.hidden.bias);
  const Matrix out = (model.head.weight * *current).colwise() + model.head.bias;
  cache.prediction.per_step = out.row(0).transpose();
  cache.prediction.score = cache.prediction.per_step.mean();
  return cache;
}

template <typename Scalar, typename Derived>
Prediction<Scalar> forward(const QualityModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  return forward_cached(model, x).prediction;
}

/// Smooth L1: quadratic inside unit error, linear outside.
template <typename Scalar>
Scalar smooth_l1(Scalar y, Scalar y_hat) {
  const Scalar d = std::abs(y - y_hat);
  return d < Scalar(1) ? Scalar(0.5) * d * d : d - Scalar(0.5);
}

/// d smooth_l1 / d y_hat.
template <typename Scalar>
Scalar smooth_l1_grad(Scalar y, Scalar y_hat) {
  const Scalar d = y_hat - y;
  if (std::abs(d) < Scalar(1)) return d;
  return d > 0 ? Scalar(1) : Scalar(-1);
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss = 0;
  Scalar score = 0;
  QualityModel<Scalar> grad;
};

/// Exact reverse-mode gradient of smooth_l1(y, forward(model, x).score).
/// Gradients are added into `grad` (which must have the model's shapes).
template <typename Scalar, typename Derived>
Scalar accumulate_gradient(const QualityModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, Scalar y,
                           QualityModel<Scalar>& grad, Scalar weight = Scalar(1), Scalar* score_out = nullptr) {
  using Matrix = typename ForwardCache<Scalar>::Matrix;
  const ForwardCache<Scalar> cache = forward_cached(model, x);
  const Scalar score = cache.prediction.score;
  if (score_out) *score_out = score;
  const Eigen::Index t = cache.input.cols();
  const Scalar dscore = weight * smooth_l1_grad(y, score);

  const std::size_t hidden_index = cache.pre.size() - 1;
  const Matrix& hidden_out = cache.post[hidden_index];
  const Matrix dout = Matrix::Constant(1, t, dscore / static_cast<Scalar>(t));
  grad.head.weight.noalias() += dout * hidden_out.transpose();
  grad.head.bias += dout.rowwise().sum();

  Matrix dz = (model.head.weight.transpose() * dout).cwiseProduct(
      (cache.pre[hidden_index].array() > Scalar(0)).matrix().template cast<Scalar>());
  const Matrix& conv_out = cache.post[hidden_index - 1];
  grad.hidden.weight.noalias() += dz * conv_out.transpose();
  grad.hidden.bias += dz.rowwise().sum();
  Matrix da = model.hidden.weight.transpose() * dz;

  for (std::size_t layer = hidden_index; layer-- > 0;) {
    dz = da.cwiseProduct((cache.pre[layer].array() > Scalar(0)).matrix().template cast<Scalar>());
    const Matrix& input = layer == 0 ? cache.input : cache.post[layer - 1];
    if (layer == 0) {
      model.proj.backward(input, dz, grad.proj, /*need_input_grad=*/false);
    } else {
      da = model.convs[layer - 1].backward(input, dz, grad.convs[layer - 1]);
    }
  }
  return weight * smooth_l1(y, score);
}

template <typename Scalar, typename Derived>
LossAndGradient<Scalar> backward(const QualityModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, Scalar y) {
  LossAndGradient<Scalar> out;
  out.grad = QualityModel<Scalar>::zeros(model.config);
  out.loss = accumulate_gradient(model, x, y, out.grad, Scalar(1), &out.score);
  return out;
}

/// Mean loss and mean gradient over a batch. Samples are processed in
/// fixed blocks of four whose partial sums are added in block order, so the
/// result does not depend on `workers`.
template <typename Scalar, typename MatrixType>
LossAndGradient<Scalar> batch_gradient(const QualityModel<Scalar>& model, const std::vector<const MatrixType*>& xs,
                                       const std::vector<Scalar>& ys, unsigned workers = 1) {
  if (xs.empty() || xs.size() != ys.size()) throw InvalidArgument("batch inputs and targets disagree");
  constexpr std::size_t kBlock = 4;
  const std::size_t blocks = (xs.size() + kBlock - 1) / kBlock;
  const Scalar weight = Scalar(1) / static_cast<Scalar>(xs.size());
  std::vector<QualityModel<Scalar>> partial(blocks);
  std::vector<Scalar> losses(blocks, Scalar(0));
  parallel_for(blocks, workers, [&](std::size_t b) {
    partial[b] = QualityModel<Scalar>::zeros(model.config);
    const std::size_t end = std::min(xs.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      losses[b] += accumulate_gradient(model, *xs[i], ys[i], partial[b], weight);
    }
  });
  LossAndGradient<Scalar> out;
  out.grad = std::move(partial[0]);
  out.loss = losses[0];
  for (std::size_t b = 1; b < blocks; ++b) {
    out.grad.add_scaled(partial[b], Scalar(1));
    out.loss += losses[b];
  }
  return out;
}

/// "MLQM" checkpoint: version, config block, float32 parameters in
/// for_each_tensor order.
void save_model(const QualityModel<double>& model, const std::filesystem::path& path);
QualityModel<double> load_model(const std::filesystem::path& path);

}  // namespace mlcvqa
