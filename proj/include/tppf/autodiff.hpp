#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tppf/rng.hpp"

namespace tppf {

/// Flat parameter vector with a registry of named matrix-shaped blocks.
class Params {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
  };

  /// Registers a zero-initialized block and returns its index.
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  std::size_t find(const std::string& name) const;

  Eigen::Index size() const { return values_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  Eigen::Map<Eigen::MatrixXd> block(std::size_t index);
  Eigen::Map<const Eigen::MatrixXd> block(std::size_t index) const;

  /// Binary checkpoint: 8-byte little-endian header length, a JSON header
  /// listing {name, shape, offset}, then the raw float64 payload.
  void save(const std::string& path) const;
  /// Loads a checkpoint whose registry matches this one exactly.
  void load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  Eigen::VectorXd values_;
};

/// Elementwise tanh through a single vectorized exp. Absolute error is
/// about 1e-16; used everywhere the library needs tanh so that tape and
/// plain evaluations agree bit for bit.
Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& x);

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Eigen::MatrixXd& value() const;
  double scalar() const;
};

/// Reverse-mode recorder over matrix-valued nodes. Elementwise binary ops
/// broadcast a 1x1 operand, a column vector against a matrix with the same
/// row count, or a row vector against a matrix with the same column count.
class Tape {
 public:
  explicit Tape(const Params* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Eigen::MatrixXd value);
  Var scalar(double value);
  /// Leaf whose gradient is kept after backward() (see grad()).
  Var input(Eigen::MatrixXd value);
  /// Leaf bound to a registered parameter block.
  Var param(std::size_t block);
  Var param(const std::string& name);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  /// Sum of all entries (1x1).
  Var sum(Var a);
  /// Column sums (1 x cols).
  Var sum_rows(Var a);
  /// Vertical concatenation.
  Var concat_rows(Var a, Var b);
  /// 1 x (B*block) row -> 1 x B row of log(mean(exp(.))) over consecutive blocks.
  Var log_mean_exp_blocks(Var a, Eigen::Index block);
  /// Picks entries by flat column-major index into a 1 x indices.size() row.
  Var gather(Var a, const std::vector<Eigen::Index>& flat_indices);
  /// Same value; the reverse sweep treats it as a constant.
  Var stop_gradient(Var a);

  const Eigen::MatrixXd& value(Var v) const;

  /// Reverse sweep from `output`, seeded with d(objective)/d(output). Parameter
  /// gradients are accumulated into `param_grad` (length params.size()).
  void backward(Var output, const Eigen::MatrixXd& seed, Eigen::VectorXd* param_grad);
  /// Scalar objective: seed 1.
  void backward(Var output, Eigen::VectorXd* param_grad);
  /// Gradient of the last backward() objective with respect to an input() leaf.
  const Eigen::MatrixXd& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    leaf,
    input,
    param,
    add,
    sub,
    mul,
    div,
    matmul,
    neg,
    scale,
    shift,
    tanh,
    exp,
    log,
    square,
    sum,
    sum_rows,
    concat_rows,
    lme_blocks,
    gather,
    stop,
  };
  struct Node {
    Op op = Op::leaf;
    std::size_t a = 0;
    std::size_t b = 0;
    double c = 0.0;
    std::size_t block = 0;
    Eigen::MatrixXd value;
    std::vector<Eigen::Index> indices;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  Eigen::MatrixXd broadcast(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) const;
  static Eigen::MatrixXd reduce_to(const Eigen::MatrixXd& g, Eigen::Index rows, Eigen::Index cols);
  void check_broadcast(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) const;

  const Params* params_;
  std::vector<Node> nodes_;
  std::vector<Eigen::MatrixXd> grads_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // elementwise
Var operator-(Var a);
Var matmul(Var a, Var b);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var stop_gradient(Var a);

/// Dense feed-forward network with two hidden layers of width h:
///   h1 = tanh(W1 x + b1), h2 = tanh(W2 h1 + b2), out = W3 [h1; h2] + b3.
/// Hidden layers are concatenated into the output layer; the input is not.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::size_t in, std::size_t hidden, std::size_t out, std::string prefix);

  /// Registers the weight blocks (zero-initialized) in `params`.
  void register_params(Params& params);
  /// Glorot-normal hidden weights; the output layer stays zero so the
  /// initial output is identically zero.
  void init(Params& params, Rng& rng) const;

  /// inputs: in x B. Returns out x B.
  Var forward(Tape& tape, Var inputs) const;
  Eigen::MatrixXd forward(const Params& params, const Eigen::MatrixXd& inputs) const;
  /// Scalar convenience for a single input column of a 1-output net.
  double forward_scalar(const Params& params, const Eigen::VectorXd& input) const;

  std::size_t in() const { return in_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t out() const { return out_; }

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  std::size_t out_ = 0;
  std::string prefix_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update. Throws ErrorCode::numeric on a
/// non-finite gradient, leaving params and state untouched.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, const AdamConfig& config);

}  // namespace tppf
