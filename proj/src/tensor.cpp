#include "infune/tensor.hpp"

#include <cmath>
#include <random>

#include "infune/error.hpp"

namespace infune {

// ---------------------------------------------------------------- ParamStore

ParamStore::Id ParamStore::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.m = Matrix::Zero(init.rows(), init.cols());
  e.v = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  const Id id = entries_.size();
  entries_.push_back(std::move(e));
  index_.emplace(std::move(name), id);
  return id;
}

ParamStore::Id ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

void adam_step(ParamStore& params, const AdamConfig& cfg) {
  for (ParamStore::Id id = 0; id < params.size(); ++id) {
    if (!params.grad(id).allFinite())
      throw TrainingError("non-finite gradient for parameter '" + params.name(id) + "'");
  }
  const std::uint64_t t = params.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (ParamStore::Id id = 0; id < params.size(); ++id) {
    const Matrix& g = params.grad(id);
    Matrix& m = params.first_moment(id);
    Matrix& v = params.second_moment(id);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params.value(id).array() -=
        cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    if (!params.value(id).allFinite())
      throw TrainingError("parameter '" + params.name(id) + "' became non-finite");
  }
  params.set_step(t);
}

// ---------------------------------------------------------------------- Tape

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check_dims(Var a, Var b, const char* op) const {
  if (value(a).size() != value(b).size())
    throw ConfigError(std::string("shape mismatch in ") + op + ": " +
                      std::to_string(value(a).size()) + " vs " + std::to_string(value(b).size()));
}

double Tape::scalar(Var v) const {
  const Vector& x = value(v);
  if (x.size() != 1) throw ContractError("tape node is not a scalar");
  return x[0];
}

Var Tape::constant(Vector value) {
  Node n(Op::constant);
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(ParamStore::Id id) {
  const Matrix& p = params_->value(id);
  Node n(Op::param);
  n.param = id;
  n.value = Eigen::Map<const Vector>(p.data(), p.size());
  return push(std::move(n));
}

Var Tape::row(ParamStore::Id id, Eigen::Index r) {
  const Matrix& p = params_->value(id);
  if (r < 0 || r >= p.rows()) throw ContractError("embedding row out of range");
  Node n(Op::row);
  n.param = id;
  n.row = r;
  n.value = p.row(r).transpose();
  return push(std::move(n));
}

Var Tape::matvec(ParamStore::Id weight, Var x) {
  const Matrix& w = params_->value(weight);
  if (w.cols() != value(x).size())
    throw ConfigError("shape mismatch in matvec: weight '" + params_->name(weight) + "' has " +
                      std::to_string(w.cols()) + " columns, input has " +
                      std::to_string(value(x).size()));
  Node n(Op::matvec);
  n.param = weight;
  n.a = x.index;
  n.value = w * value(x);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_dims(a, b, "add");
  Node n(Op::add);
  n.a = a.index;
  n.b = b.index;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n(Op::tanh);
  n.a = a.index;
  n.value = value(a).array().tanh();
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  Node n(Op::concat);
  Eigen::Index total = 0;
  for (Var p : parts) {
    n.inputs.push_back(p.index);
    total += value(p).size();
  }
  n.value.resize(total);
  Eigen::Index off = 0;
  for (Var p : parts) {
    const Vector& v = value(p);
    n.value.segment(off, v.size()) = v;
    off += v.size();
  }
  return push(std::move(n));
}

Var Tape::mean(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("mean of zero vectors");
  Node n(Op::mean);
  n.value = Vector::Zero(value(parts.front()).size());
  for (Var p : parts) {
    check_dims(parts.front(), p, "mean");
    n.inputs.push_back(p.index);
    n.value += value(p);
  }
  n.value /= static_cast<double>(parts.size());
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check_dims(a, b, "dot");
  Node n(Op::dot);
  n.a = a.index;
  n.b = b.index;
  n.value = Vector::Constant(1, value(a).dot(value(b)));
  return push(std::move(n));
}

Var Tape::norm(Var a) {
  Node n(Op::norm);
  n.a = a.index;
  n.value = Vector::Constant(1, value(a).norm());
  return push(std::move(n));
}

Var Tape::cos_plus(Var a, Var b) {
  check_dims(a, b, "cos_plus");
  const Vector& va = value(a);
  const Vector& vb = value(b);
  const double na = va.norm(), nb = vb.norm();
  double c = 0.0;
  if (na > 0.0 && nb > 0.0) c = va.dot(vb) / (na * nb);
  Node n(Op::cos_plus);
  n.a = a.index;
  n.b = b.index;
  n.c = c;
  n.value = Vector::Constant(1, c > 0.0 ? c : 0.0);
  return push(std::move(n));
}

Var Tape::squared_error(Var prediction, double target) {
  Node n(Op::sq_err);
  n.a = prediction.index;
  n.c = target;
  const double d = scalar(prediction) - target;
  n.value = Vector::Constant(1, d * d);
  return push(std::move(n));
}

Var Tape::sum(std::span<const Var> scalars) {
  Node n(Op::sum);
  double s = 0.0;
  for (Var v : scalars) {
    n.inputs.push_back(v.index);
    s += scalar(v);
  }
  n.value = Vector::Constant(1, s);
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Node n(Op::scale);
  n.a = a.index;
  n.c = factor;
  n.value = value(a) * factor;
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw ContractError("backward() needs a scalar loss");
  for (auto& n : nodes_) n.grad = Vector::Zero(n.value.size());
  nodes_[loss.index].grad[0] = 1.0;

  for (std::int32_t k = loss.index; k >= 0; --k) {
    Node& n = nodes_[k];
    const Vector& g = n.grad;
    switch (n.op) {
      case Op::constant:
        break;
      case Op::param: {
        Matrix& pg = params_->grad(n.param);
        Eigen::Map<Vector>(pg.data(), pg.size()) += g;
        break;
      }
      case Op::row:
        params_->grad(n.param).row(n.row) += g.transpose();
        break;
      case Op::matvec: {
        const Vector& x = nodes_[n.a].value;
        params_->grad(n.param).noalias() += g * x.transpose();
        nodes_[n.a].grad.noalias() += params_->value(n.param).transpose() * g;
        break;
      }
      case Op::add:
        nodes_[n.a].grad += g;
        nodes_[n.b].grad += g;
        break;
      case Op::tanh:
        nodes_[n.a].grad.array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::concat: {
        Eigen::Index off = 0;
        for (auto idx : n.inputs) {
          auto sz = nodes_[idx].value.size();
          nodes_[idx].grad += g.segment(off, sz);
          off += sz;
        }
        break;
      }
      case Op::mean: {
        const double w = 1.0 / static_cast<double>(n.inputs.size());
        for (auto idx : n.inputs) nodes_[idx].grad += w * g;
        break;
      }
      case Op::dot:
        nodes_[n.a].grad += g[0] * nodes_[n.b].value;
        nodes_[n.b].grad += g[0] * nodes_[n.a].value;
        break;
      case Op::norm: {
        const double nv = n.value[0];
        if (nv > 0.0) nodes_[n.a].grad += (g[0] / nv) * nodes_[n.a].value;
        break;
      }
      case Op::cos_plus: {
        if (n.c <= 0.0) break;  // truncated zone, including the boundary
        const Vector& va = nodes_[n.a].value;
        const Vector& vb = nodes_[n.b].value;
        const double na = va.norm(), nb = vb.norm();
        nodes_[n.a].grad += g[0] * (vb / (na * nb) - (n.c / (na * na)) * va);
        nodes_[n.b].grad += g[0] * (va / (na * nb) - (n.c / (nb * nb)) * vb);
        break;
      }
      case Op::sq_err:
        nodes_[n.a].grad[0] += g[0] * 2.0 * (nodes_[n.a].value[0] - n.c);
        break;
      case Op::sum:
        for (auto idx : n.inputs) nodes_[idx].grad[0] += g[0];
        break;
      case Op::scale:
        nodes_[n.a].grad += n.c * g;
        break;
    }
  }
}

// ------------------------------------------------------------ free functions

CosPlusResult cos_plus_with_grad(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ConfigError("shape mismatch in cos_plus");
  CosPlusResult out;
  out.grad_a = Vector::Zero(a.size());
  out.grad_b = Vector::Zero(b.size());
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return out;
  const double c = a.dot(b) / (na * nb);
  if (c <= 0.0) return out;
  out.value = c;
  out.grad_a = b / (na * nb) - (c / (na * na)) * a;
  out.grad_b = a / (na * nb) - (c / (nb * nb)) * b;
  return out;
}

double cos_plus(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ConfigError("shape mismatch in cos_plus");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = a.dot(b) / (na * nb);
  return c > 0.0 ? c : 0.0;
}

Vector mlp2_forward(const Vector& x, const Matrix& w1, const Vector& b1, const Matrix& w2,
                    const Vector& b2) {
  if (w1.cols() != x.size() || w1.rows() != b1.size() || w2.cols() != w1.rows() ||
      w2.rows() != b2.size())
    throw ConfigError("shape mismatch in two-layer perceptron");
  Vector hidden = (w1 * x + b1).array().tanh();
  return w2 * hidden + b2;
}

Matrix init_uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Matrix init_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

// ---------------------------------------------------------------------- Mlp2

Mlp2 Mlp2::create(ParamStore& params, const std::string& prefix, Eigen::Index in,
                  Eigen::Index hidden, Eigen::Index out, Rng& rng) {
  if (in <= 0 || hidden <= 0 || out <= 0) throw ConfigError("perceptron dims must be positive");
  Mlp2 m;
  m.w1_ = params.add(prefix + ".W1", init_uniform_fan_in(hidden, in, in, rng));
  m.b1_ = params.add(prefix + ".b1", init_uniform_fan_in(hidden, 1, in, rng));
  m.w2_ = params.add(prefix + ".W2", init_uniform_fan_in(out, hidden, hidden, rng));
  m.b2_ = params.add(prefix + ".b2", init_uniform_fan_in(out, 1, hidden, rng));
  return m;
}

Mlp2 Mlp2::bind(const ParamStore& params, const std::string& prefix) {
  Mlp2 m;
  m.w1_ = params.find(prefix + ".W1");
  m.b1_ = params.find(prefix + ".b1");
  m.w2_ = params.find(prefix + ".W2");
  m.b2_ = params.find(prefix + ".b2");
  return m;
}

Var Mlp2::forward(Tape& tape, Var x) const {
  Var h = tape.tanh(tape.add(tape.matvec(w1_, x), tape.param(b1_)));
  return tape.add(tape.matvec(w2_, h), tape.param(b2_));
}

Vector Mlp2::eval(const ParamStore& params, const Vector& x) const {
  const Matrix& b1 = params.value(b1_);
  const Matrix& b2 = params.value(b2_);
  return mlp2_forward(x, params.value(w1_), Eigen::Map<const Vector>(b1.data(), b1.size()),
                      params.value(w2_), Eigen::Map<const Vector>(b2.data(), b2.size()));
}

}  // namespace infune
