#pragma once

// Dense vectors/matrices, a parameter store with Adam state, and a small
// reverse-mode tape covering the operations the encoders and decoders need.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "infune/rng.hpp"

namespace infune {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ParamStore {
 public:
  using Id = std::size_t;

  Id add(std::string name, Matrix init);
  Id find(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(Id id) const { return entries_.at(id).name; }

  Matrix& value(Id id) { return entries_.at(id).value; }
  const Matrix& value(Id id) const { return entries_.at(id).value; }
  Matrix& grad(Id id) { return entries_.at(id).grad; }
  const Matrix& grad(Id id) const { return entries_.at(id).grad; }

  // Adam moment accumulators, same shape as the value.
  Matrix& first_moment(Id id) { return entries_.at(id).m; }
  const Matrix& first_moment(Id id) const { return entries_.at(id).m; }
  Matrix& second_moment(Id id) { return entries_.at(id).v; }
  const Matrix& second_moment(Id id) const { return entries_.at(id).v; }

  void zero_grad();

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

 private:
  struct Entry {
    std::string name;
    Matrix value, grad, m, v;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, Id> index_;
  std::uint64_t step_ = 0;
  std::uint64_t seed_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Applies one Adam update from the accumulated gradients and increments the
/// step counter. Throws TrainingError naming the parameter if any gradient is
/// non-finite; in that case nothing is modified.
void adam_step(ParamStore& params, const AdamConfig& cfg);

/// Handle to a node recorded on a Tape.
struct Var {
  std::int32_t index = -1;
};

class Tape {
 public:
  explicit Tape(ParamStore& params) : params_(&params) {}

  Var constant(Vector value);
  /// Whole parameter viewed as a column vector (bias vectors).
  Var param(ParamStore::Id id);
  /// Row `r` of a matrix parameter as a column vector (embedding lookup).
  Var row(ParamStore::Id id, Eigen::Index r);

  Var matvec(ParamStore::Id weight, Var x);
  Var add(Var a, Var b);
  Var tanh(Var a);
  Var concat(std::span<const Var> parts);
  Var mean(std::span<const Var> parts);
  Var dot(Var a, Var b);
  Var norm(Var a);
  /// max{0, cos(a, b)}; zero value and gradient when either norm vanishes or cos <= 0.
  Var cos_plus(Var a, Var b);
  Var squared_error(Var prediction, double target);
  Var sum(std::span<const Var> scalars);
  Var scale(Var a, double factor);

  const Vector& value(Var v) const { return nodes_.at(v.index).value; }
  double scalar(Var v) const;
  /// Gradient of the last backward() loss w.r.t. a recorded node.
  const Vector& grad(Var v) const { return nodes_.at(v.index).grad; }

  /// Reverse sweep from a scalar node; parameter gradients are accumulated
  /// into the store (call ParamStore::zero_grad() between steps).
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    constant, param, row, matvec, add, tanh, concat, mean, dot, norm, cos_plus, sq_err, sum, scale
  };
  struct Node {
    explicit Node(Op o) : op(o) {}
    Op op;
    std::int32_t a = -1, b = -1;
    ParamStore::Id param = 0;
    Eigen::Index row = 0;
    double c = 0.0;  // op-specific scalar (target, factor, cached cosine)
    std::vector<std::int32_t> inputs;
    Vector value;
    Vector grad;
  };
  Var push(Node n);
  void check_dims(Var a, Var b, const char* op) const;

  ParamStore* params_;
  std::vector<Node> nodes_;
};

/// Value and subgradient of the truncated cosine, without a tape.
struct CosPlusResult {
  double value = 0.0;
  Vector grad_a;
  Vector grad_b;
};
CosPlusResult cos_plus_with_grad(const Vector& a, const Vector& b);
double cos_plus(const Vector& a, const Vector& b);

/// W2 * tanh(W1 * x + b1) + b2
Vector mlp2_forward(const Vector& x, const Matrix& w1, const Vector& b1, const Matrix& w2,
                    const Vector& b2);

/// Two-layer perceptron whose weights live in a ParamStore under `<prefix>.W1` etc.
class Mlp2 {
 public:
  Mlp2() = default;
  static Mlp2 create(ParamStore& params, const std::string& prefix, Eigen::Index in,
                     Eigen::Index hidden, Eigen::Index out, Rng& rng);
  /// Re-attach to weights already present in `params` (checkpoint reload).
  static Mlp2 bind(const ParamStore& params, const std::string& prefix);

  Var forward(Tape& tape, Var x) const;
  Vector eval(const ParamStore& params, const Vector& x) const;

  Eigen::Index in_dim(const ParamStore& params) const { return params.value(w1_).cols(); }
  Eigen::Index out_dim(const ParamStore& params) const { return params.value(w2_).rows(); }

  ParamStore::Id w1() const { return w1_; }
  ParamStore::Id b1() const { return b1_; }
  ParamStore::Id w2() const { return w2_; }
  ParamStore::Id b2() const { return b2_; }

 private:
  ParamStore::Id w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix init_uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);
/// N(0, stddev^2) entries.
Matrix init_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

}  // namespace infune
