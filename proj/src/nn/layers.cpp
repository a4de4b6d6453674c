#include "pehl/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace pehl::nn {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  return m;
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(fan_in, fan_out, limit, rng);
}

Embedding Embedding::init(int dim, Rng& rng) {
  return Embedding{Param("embedding", uniform_matrix(256, dim, 0.05, rng))};
}

Matrix Embedding::forward(ByteSeq bytes) const {
  Matrix out(static_cast<Eigen::Index>(bytes.size()), table.value.cols());
  for (std::size_t t = 0; t < bytes.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = table.value.row(bytes[t]);
  }
  return out;
}

void Embedding::backward(ByteSeq bytes, const Matrix& grad_out) {
  for (std::size_t t = 0; t < bytes.size(); ++t) {
    table.grad.row(bytes[t]) += grad_out.row(static_cast<Eigen::Index>(t));
  }
}

Affine Affine::init(int in, int out, Rng& rng, const std::string& name) {
  return Affine{Param(name + ".W", glorot_uniform(in, out, rng)),
                Param(name + ".b", Matrix::Zero(1, out))};
}

Matrix Affine::forward(const Matrix& x) const {
  if (x.cols() != weight.value.rows()) throw std::invalid_argument("affine: inner dimension mismatch");
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Affine::backward(const Matrix& x, const Matrix& grad_out) {
  weight.grad.noalias() += x.transpose() * grad_out;
  bias.grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight.value.transpose();
}

BatchNorm BatchNorm::init(int units, const std::string& name) {
  BatchNorm bn;
  bn.gamma = Param(name + ".gamma", Matrix::Ones(1, units));
  bn.beta = Param(name + ".beta", Matrix::Zero(1, units));
  bn.running_mean = RowVector::Zero(units);
  bn.running_var = RowVector::Ones(units);
  return bn;
}

Matrix BatchNorm::forward(const Matrix& x, Mode mode, Cache* cache) const {
  RowVector mean;
  RowVector var;
  if (mode != Mode::infer) {
    if (x.rows() < 2) throw std::invalid_argument("batch norm: batch statistics need a batch of >= 2");
    const double n = static_cast<double>(x.rows());
    mean = x.colwise().sum() / n;
    var = (x.rowwise() - mean).array().square().colwise().sum() / n;
  } else {
    mean = running_mean;
    var = running_var;
  }
  const RowVector inv_std = (var.array() + epsilon).rsqrt().matrix();
  Matrix x_hat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix y = x_hat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = inv_std;
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->train = mode != Mode::infer;
  }
  return y;
}

void BatchNorm::update_running(const Cache& cache) {
  if (!cache.train) return;
  running_mean = momentum * running_mean + (1.0 - momentum) * cache.batch_mean;
  running_var = momentum * running_var + (1.0 - momentum) * cache.batch_var;
}

void NormStatistics::add(const BatchNorm::Cache& cache, Eigen::Index rows) {
  if (!cache.train || rows < 2) throw std::invalid_argument("norm statistics: need batch statistics");
  const double m = static_cast<double>(rows);
  if (batches_ == 0) {
    mean_sum_ = RowVector::Zero(cache.batch_mean.size());
    var_sum_ = RowVector::Zero(cache.batch_var.size());
  }
  mean_sum_ += cache.batch_mean;
  var_sum_ += cache.batch_var * (m / (m - 1.0));
  ++batches_;
}

void NormStatistics::apply(BatchNorm& bn) const {
  if (batches_ == 0) return;
  bn.running_mean = mean_sum_ / static_cast<double>(batches_);
  bn.running_var = var_sum_ / static_cast<double>(batches_);
}

Matrix BatchNorm::backward(const Matrix& grad_out, const Cache& cache) {
  gamma.grad.row(0) += (grad_out.array() * cache.x_hat.array()).colwise().sum().matrix();
  beta.grad.row(0) += grad_out.colwise().sum();
  const RowVector scale = (gamma.value.row(0).array() * cache.inv_std.array()).matrix();
  if (!cache.train) {
    return grad_out.array().rowwise() * scale.array();
  }
  const double n = static_cast<double>(grad_out.rows());
  const RowVector sum_dy = grad_out.colwise().sum();
  const RowVector sum_dy_xhat = (grad_out.array() * cache.x_hat.array()).colwise().sum().matrix();
  Matrix dx = (n * grad_out.array()).matrix();
  dx.rowwise() -= sum_dy;
  dx.array() -= cache.x_hat.array().rowwise() * sum_dy_xhat.array();
  dx.array().rowwise() *= (scale.array() / n);
  return dx;
}

Matrix elu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v >= 0.0 ? v : std::expm1(v); });
}

Matrix elu_backward(const Matrix& y, const Matrix& grad_out) {
  return grad_out.binaryExpr(y, [](double g, double out) { return out >= 0.0 ? g : g * (out + 1.0); });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must lie in [0, 1)");
  if (mode != Mode::train || p == 0.0) return Matrix::Ones(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform01(rng) < p ? 0.0 : keep;
  }
  return m;
}

DecovResult decov_penalty(const Matrix& h, double weight) {
  if (h.rows() < 2) throw std::invalid_argument("decov: batch must have >= 2 rows");
  const double n = static_cast<double>(h.rows());
  const RowVector mean = h.colwise().sum() / n;
  const Matrix centered = h.rowwise() - mean;
  Matrix cov = centered.transpose() * centered / n;
  const double frob = cov.squaredNorm();
  const double diag = cov.diagonal().squaredNorm();
  DecovResult r;
  r.loss = weight * 0.5 * (frob - diag);
  cov.diagonal().setZero();
  r.grad = (2.0 * weight / n) * (centered * cov);
  return r;
}

double add_l2(Param& p, double weight) {
  if (weight == 0.0) return 0.0;
  p.grad += 2.0 * weight * p.value;
  return weight * p.value.squaredNorm();
}

double add_l1(Param& p, double weight) {
  if (weight == 0.0) return 0.0;
  p.grad += weight * p.value.unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
  return weight * p.value.cwiseAbs().sum();
}

void Adam::step(const ParamList& params) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * p.grad;
    v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= opt_.learning_rate * (m_[k].array() / c1) /
                       ((v_[k].array() / c2).sqrt() + opt_.epsilon);
  }
}

double global_norm(const ParamList& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(const ParamList& params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params) p->grad *= scale;
  }
  return norm;
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace pehl::nn
