#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pehl/rng.hpp"

namespace pehl::nn {

// Rows are samples (or timesteps), columns are units.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using ByteSeq = std::span<const std::uint8_t>;

// population: no dropout, batch-norm batch statistics; used to measure the
// statistics that infer mode then applies.
enum class Mode { train, infer, population };

/// A trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamList = std::vector<Param*>;

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng);

/// 256 x dim lookup table indexed by byte value.
struct Embedding {
  Param table;

  static Embedding init(int dim, Rng& rng);  // uniform in [-0.05, 0.05]
  int dim() const { return static_cast<int>(table.value.cols()); }

  Matrix forward(ByteSeq bytes) const;  // bytes.size() x dim
  void backward(ByteSeq bytes, const Matrix& grad_out);
};

/// y = x W + b with W stored in x out.
struct Affine {
  Param weight;
  Param bias;

  static Affine init(int in, int out, Rng& rng, const std::string& name);

  Matrix forward(const Matrix& x) const;
  // Accumulates dW, db and returns dx.
  Matrix backward(const Matrix& x, const Matrix& grad_out);
};

struct BatchNorm {
  Param gamma;
  Param beta;
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  struct Cache {
    Matrix x_hat;
    RowVector inv_std;
    RowVector batch_mean;
    RowVector batch_var;  // biased
    bool train = false;
  };

  static BatchNorm init(int units, const std::string& name);

  // Train mode normalizes with the batch statistics; infer mode with the
  // running averages. The running averages change only in update_running.
  Matrix forward(const Matrix& x, Mode mode, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& grad_out, const Cache& cache);
  void update_running(const Cache& cache);
};

/// Inference statistics as population averages over a pass through data:
/// the mean of batch means and the mean of unbiased batch variances.
class NormStatistics {
 public:
  void add(const BatchNorm::Cache& cache, Eigen::Index rows);
  // Overwrites the running statistics; no-op when nothing was added.
  void apply(BatchNorm& bn) const;

 private:
  RowVector mean_sum_;
  RowVector var_sum_;
  std::size_t batches_ = 0;
};

Matrix elu(const Matrix& x);
// Derivative expressed through the forward output y = elu(x).
Matrix elu_backward(const Matrix& y, const Matrix& grad_out);

Matrix sigmoid(const Matrix& x);
double sigmoid(double x);

/// Inverted dropout: each entry is 0 with probability p, else 1/(1-p).
/// All ones outside train mode or when p == 0 (no random draws are consumed then).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Mode mode, Rng& rng);

struct DecovResult {
  double loss = 0.0;
  Matrix grad;
};

/// weight * 1/2 (||C||_F^2 - ||diag C||^2) with C the 1/N batch covariance of h.
DecovResult decov_penalty(const Matrix& h, double weight);

// Adds weight * sum(w^2) to the loss and its gradient to p.grad.
double add_l2(Param& p, double weight);
// Adds weight * sum(|w|); subgradient 0 at w == 0.
double add_l1(Param& p, double weight);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created on the first step and are
/// matched to parameters by position in the list.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  void step(const ParamList& params);
  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

double global_norm(const ParamList& params);

// Scales every gradient by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_global_norm(const ParamList& params, double max_norm);

void zero_grads(const ParamList& params);

}  // namespace pehl::nn
