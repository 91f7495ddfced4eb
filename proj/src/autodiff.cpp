#include "tppf/autodiff.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "tppf/error.hpp"

namespace tppf {

Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& x) {
  const Eigen::ArrayXXd t = (-2.0 * x.abs()).exp();
  return x.sign() * (1.0 - t) / (1.0 + t);
}

// ---------------------------------------------------------------- Params

std::size_t Params::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  require(rows > 0 && cols > 0, "Params: block '" + name + "' must be non-empty");
  for (const auto& e : entries_) require(e.name != name, "Params: duplicate block '" + name + "'");
  Entry e{name, rows, cols, values_.size()};
  entries_.push_back(e);
  Eigen::VectorXd grown = Eigen::VectorXd::Zero(values_.size() + rows * cols);
  grown.head(values_.size()) = values_;
  values_ = std::move(grown);
  return entries_.size() - 1;
}

std::size_t Params::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  fail(ErrorCode::invalid_argument, "Params: no block named '" + name + "'");
}

Eigen::Map<Eigen::MatrixXd> Params::block(std::size_t index) {
  const Entry& e = entries_.at(index);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Eigen::MatrixXd> Params::block(std::size_t index) const {
  const Entry& e = entries_.at(index);
  return {values_.data() + e.offset, e.rows, e.cols};
}

namespace {
static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian hosts");

nlohmann::json registry_json(const std::vector<Params::Entry>& entries) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries)
    tensors.push_back({{"name", e.name}, {"shape", {e.rows, e.cols}}, {"offset", e.offset}});
  return tensors;
}
}  // namespace

void Params::save(const std::string& path) const {
  nlohmann::json header = {{"format", "tppf-params"},
                           {"version", 1},
                           {"dtype", "float64-le"},
                           {"order", "column-major"},
                           {"tensors", registry_json(entries_)}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
  if (!out) fail(ErrorCode::io, "failed writing '" + path + "'");
}

void Params::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) fail(ErrorCode::io, "checkpoint '" + path + "': bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != "tppf-params" || header.value("tensors", nlohmann::json()) != registry_json(entries_))
    fail(ErrorCode::io, "checkpoint '" + path + "' does not match the parameter registry");
  Eigen::VectorXd values(values_.size());
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) fail(ErrorCode::io, "checkpoint '" + path + "': truncated payload");
  values_ = std::move(values);
}

// ---------------------------------------------------------------- Tape

const Eigen::MatrixXd& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  const auto& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::scalar on a non-scalar node");
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) fail(ErrorCode::invalid_argument, "Var does not belong to this tape");
  return nodes_[v.id];
}

const Eigen::MatrixXd& Tape::value(Var v) const { return node(v).value; }

Var Tape::constant(Eigen::MatrixXd value) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar(double value) { return constant(Eigen::MatrixXd::Constant(1, 1, value)); }

Var Tape::input(Eigen::MatrixXd value) {
  Node n;
  n.op = Op::input;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(std::size_t block) {
  require(params_ != nullptr, "Tape has no parameter set");
  Node n;
  n.op = Op::param;
  n.block = block;
  n.value = params_->block(block);
  return push(std::move(n));
}

Var Tape::param(const std::string& name) {
  require(params_ != nullptr, "Tape has no parameter set");
  return param(params_->find(name));
}

void Tape::check_broadcast(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) const {
  const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
  const bool cols_ok = a.cols() == b.cols() || a.cols() == 1 || b.cols() == 1;
  if (!rows_ok || !cols_ok)
    fail(ErrorCode::invalid_argument, std::string("Tape::") + op + ": shape mismatch " + std::to_string(a.rows()) +
                                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                          std::to_string(b.cols()));
}

Eigen::MatrixXd Tape::broadcast(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) const {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Eigen::MatrixXd::Constant(rows, cols, m(0, 0));
  if (m.cols() == 1) return m.replicate(1, cols);
  return m.replicate(rows, 1);
}

Eigen::MatrixXd Tape::reduce_to(const Eigen::MatrixXd& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Eigen::MatrixXd::Constant(1, 1, g.sum());
  if (cols == 1) return g.rowwise().sum();
  return g.colwise().sum();
}

namespace {
Eigen::Index bdim(Eigen::Index a, Eigen::Index b) { return a == 1 ? b : a; }
}  // namespace

Var Tape::add(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  check_broadcast(va, vb, "add");
  const Eigen::Index r = bdim(va.rows(), vb.rows()), c = bdim(va.cols(), vb.cols());
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  if (va.rows() == r && va.cols() == c && vb.cols() == 1 && vb.rows() == r) {
    // Bias column, the common case inside networks.
    n.value = va;
    n.value.colwise() += vb.col(0);
  } else {
    n.value = broadcast(va, r, c) + broadcast(vb, r, c);
  }
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  check_broadcast(va, vb, "sub");
  const Eigen::Index r = bdim(va.rows(), vb.rows()), c = bdim(va.cols(), vb.cols());
  Node n;
  n.op = Op::sub;
  n.a = a.id;
  n.b = b.id;
  n.value = broadcast(va, r, c) - broadcast(vb, r, c);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  check_broadcast(va, vb, "mul");
  const Eigen::Index r = bdim(va.rows(), vb.rows()), c = bdim(va.cols(), vb.cols());
  Node n;
  n.op = Op::mul;
  n.a = a.id;
  n.b = b.id;
  n.value = broadcast(va, r, c).cwiseProduct(broadcast(vb, r, c));
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  check_broadcast(va, vb, "div");
  const Eigen::Index r = bdim(va.rows(), vb.rows()), c = bdim(va.cols(), vb.cols());
  Node n;
  n.op = Op::div;
  n.a = a.id;
  n.b = b.id;
  n.value = broadcast(va, r, c).cwiseQuotient(broadcast(vb, r, c));
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.cols() != vb.rows())
    fail(ErrorCode::invalid_argument, "Tape::matmul: inner dimensions " + std::to_string(va.cols()) + " and " +
                                          std::to_string(vb.rows()) + " differ");
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::scale;
  n.a = a.id;
  n.c = c;
  n.value = c * value(a);
  return push(std::move(n));
}

Var Tape::shift(Var a, double c) {
  Node n;
  n.op = Op::shift;
  n.a = a.id;
  n.c = c;
  n.value = value(a).array() + c;
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::tanh;
  n.a = a.id;
  n.value = tanh_array(value(a).array()).matrix();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::exp;
  n.a = a.id;
  n.value = value(a).array().exp();
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::log;
  n.a = a.id;
  n.value = value(a).array().log();
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::square;
  n.a = a.id;
  n.value = value(a).array().square();
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.a = a.id;
  n.value = Eigen::MatrixXd::Constant(1, 1, value(a).sum());
  return push(std::move(n));
}

Var Tape::sum_rows(Var a) {
  Node n;
  n.op = Op::sum_rows;
  n.a = a.id;
  n.value = value(a).colwise().sum();
  return push(std::move(n));
}

Var Tape::concat_rows(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  require(va.cols() == vb.cols(), "Tape::concat_rows: column counts differ");
  Node n;
  n.op = Op::concat_rows;
  n.a = a.id;
  n.b = b.id;
  n.value.resize(va.rows() + vb.rows(), va.cols());
  n.value.topRows(va.rows()) = va;
  n.value.bottomRows(vb.rows()) = vb;
  return push(std::move(n));
}

Var Tape::log_mean_exp_blocks(Var a, Eigen::Index block) {
  const auto& va = value(a);
  require(va.rows() == 1 && block > 0 && va.cols() % block == 0, "Tape::log_mean_exp_blocks: bad shape");
  const Eigen::Index groups = va.cols() / block;
  Node n;
  n.op = Op::lme_blocks;
  n.a = a.id;
  n.c = static_cast<double>(block);
  n.value.resize(1, groups);
  const double log_block = std::log(static_cast<double>(block));
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto seg = va.row(0).segment(g * block, block);
    const double hi = seg.maxCoeff();
    if (!std::isfinite(hi)) {
      n.value(0, g) = hi;
      continue;
    }
    n.value(0, g) = hi + std::log((seg.array() - hi).exp().sum()) - log_block;
  }
  return push(std::move(n));
}

Var Tape::gather(Var a, const std::vector<Eigen::Index>& flat_indices) {
  const auto& va = value(a);
  Node n;
  n.op = Op::gather;
  n.a = a.id;
  n.indices = flat_indices;
  n.value.resize(1, static_cast<Eigen::Index>(flat_indices.size()));
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    require(flat_indices[i] >= 0 && flat_indices[i] < va.size(), "Tape::gather: index out of range");
    n.value(0, static_cast<Eigen::Index>(i)) = va.data()[flat_indices[i]];
  }
  return push(std::move(n));
}

Var Tape::stop_gradient(Var a) {
  Node n;
  n.op = Op::stop;
  n.a = a.id;
  n.value = value(a);
  return push(std::move(n));
}

void Tape::backward(Var output, Eigen::VectorXd* param_grad) {
  const auto& v = value(output);
  require(v.rows() == 1 && v.cols() == 1, "Tape::backward: objective must be scalar; pass a seed otherwise");
  backward(output, Eigen::MatrixXd::Ones(1, 1), param_grad);
}

void Tape::backward(Var output, const Eigen::MatrixXd& seed, Eigen::VectorXd* param_grad) {
  const Node& out = node(output);
  require(seed.rows() == out.value.rows() && seed.cols() == out.value.cols(), "Tape::backward: seed shape mismatch");
  if (param_grad && params_) {
    if (param_grad->size() != params_->size()) *param_grad = Eigen::VectorXd::Zero(params_->size());
  }
  grads_.assign(nodes_.size(), Eigen::MatrixXd());
  grads_[output.id] = seed;

  auto accumulate = [this](std::size_t id, auto&& g) {
    if (nodes_[id].op == Op::leaf) return;
    if (grads_[id].size() == 0)
      grads_[id] = std::forward<decltype(g)>(g);
    else
      grads_[id] += g;
  };

  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (grads_[i].size() == 0) continue;
    const Node& n = nodes_[i];
    const Eigen::MatrixXd& g = grads_[i];
    switch (n.op) {
      case Op::leaf:
      case Op::input:
      case Op::stop:
        break;
      case Op::param:
        if (param_grad && params_) {
          const auto& e = params_->entries()[n.block];
          Eigen::Map<Eigen::MatrixXd>(param_grad->data() + e.offset, e.rows, e.cols) += g;
        }
        break;
      case Op::add: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        if (va.rows() == g.rows() && va.cols() == g.cols())
          accumulate(n.a, g);
        else
          accumulate(n.a, reduce_to(g, va.rows(), va.cols()));
        if (vb.rows() == g.rows() && vb.cols() == g.cols())
          accumulate(n.b, g);
        else
          accumulate(n.b, reduce_to(g, vb.rows(), vb.cols()));
        break;
      }
      case Op::sub: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        accumulate(n.a, reduce_to(g, va.rows(), va.cols()));
        accumulate(n.b, reduce_to(-g, vb.rows(), vb.cols()));
        break;
      }
      case Op::mul: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        accumulate(n.a, reduce_to(g.cwiseProduct(broadcast(vb, g.rows(), g.cols())), va.rows(), va.cols()));
        accumulate(n.b, reduce_to(g.cwiseProduct(broadcast(va, g.rows(), g.cols())), vb.rows(), vb.cols()));
        break;
      }
      case Op::div: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        const Eigen::MatrixXd bb = broadcast(vb, g.rows(), g.cols());
        accumulate(n.a, reduce_to(g.cwiseQuotient(bb), va.rows(), va.cols()));
        accumulate(n.b, reduce_to((-g.cwiseProduct(n.value)).cwiseQuotient(bb), vb.rows(), vb.cols()));
        break;
      }
      case Op::matmul: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        Eigen::MatrixXd ga = g * vb.transpose();
        Eigen::MatrixXd gb = va.transpose() * g;
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
      case Op::neg:
      case Op::scale:
        accumulate(n.a, n.c * g);
        break;
      case Op::shift:
        accumulate(n.a, g);
        break;
      case Op::tanh:
        accumulate(n.a, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::exp:
        accumulate(n.a, g.cwiseProduct(n.value));
        break;
      case Op::log:
        accumulate(n.a, g.cwiseQuotient(nodes_[n.a].value));
        break;
      case Op::square:
        accumulate(n.a, 2.0 * g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::sum: {
        const auto& va = nodes_[n.a].value;
        accumulate(n.a, Eigen::MatrixXd::Constant(va.rows(), va.cols(), g(0, 0)));
        break;
      }
      case Op::sum_rows: {
        const auto& va = nodes_[n.a].value;
        accumulate(n.a, g.replicate(va.rows(), 1));
        break;
      }
      case Op::concat_rows: {
        const Eigen::Index ra = nodes_[n.a].value.rows();
        const Eigen::Index rb = nodes_[n.b].value.rows();
        accumulate(n.a, g.topRows(ra));
        accumulate(n.b, g.bottomRows(rb));
        break;
      }
      case Op::lme_blocks: {
        const auto& va = nodes_[n.a].value;
        const auto block = static_cast<Eigen::Index>(n.c);
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(1, va.cols());
        for (Eigen::Index grp = 0; grp < n.value.cols(); ++grp) {
          const double y = n.value(0, grp);
          if (!std::isfinite(y)) continue;
          for (Eigen::Index j = 0; j < block; ++j) {
            const Eigen::Index col = grp * block + j;
            ga(0, col) = g(0, grp) * std::exp(va(0, col) - y) / static_cast<double>(block);
          }
        }
        accumulate(n.a, std::move(ga));
        break;
      }
      case Op::gather: {
        const auto& va = nodes_[n.a].value;
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(va.rows(), va.cols());
        for (std::size_t j = 0; j < n.indices.size(); ++j) ga.data()[n.indices[j]] += g(0, static_cast<Eigen::Index>(j));
        accumulate(n.a, std::move(ga));
        break;
      }
    }
  }
}

const Eigen::MatrixXd& Tape::grad(Var v) const {
  static const Eigen::MatrixXd empty;
  node(v);
  if (v.id >= grads_.size()) return empty;
  return grads_[v.id];
}

namespace {
Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) fail(ErrorCode::invalid_argument, "Vars belong to different tapes");
  return *a.tape;
}
}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b).add(a, b); }
Var operator-(Var a, Var b) { return same_tape(a, b).sub(a, b); }
Var operator*(Var a, Var b) { return same_tape(a, b).mul(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }
Var matmul(Var a, Var b) { return same_tape(a, b).matmul(a, b); }
Var tanh(Var a) { return a.tape->tanh(a); }
Var exp(Var a) { return a.tape->exp(a); }
Var log(Var a) { return a.tape->log(a); }
Var stop_gradient(Var a) { return a.tape->stop_gradient(a); }

// ---------------------------------------------------------------- DenseNet

DenseNet::DenseNet(std::size_t in, std::size_t hidden, std::size_t out, std::string prefix)
    : in_(in), hidden_(hidden), out_(out), prefix_(std::move(prefix)) {
  require(in > 0 && hidden > 0 && out > 0, "DenseNet: widths must be positive");
}

void DenseNet::register_params(Params& params) {
  const auto h = static_cast<Eigen::Index>(hidden_);
  w1_ = params.add(prefix_ + ".w1", h, static_cast<Eigen::Index>(in_));
  b1_ = params.add(prefix_ + ".b1", h, 1);
  w2_ = params.add(prefix_ + ".w2", h, h);
  b2_ = params.add(prefix_ + ".b2", h, 1);
  w3_ = params.add(prefix_ + ".w3", static_cast<Eigen::Index>(out_), 2 * h);
  b3_ = params.add(prefix_ + ".b3", static_cast<Eigen::Index>(out_), 1);
}

void DenseNet::init(Params& params, Rng& rng) const {
  auto glorot = [&](std::size_t block) {
    auto w = params.block(block);
    const double sd = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * rng.normal();
  };
  glorot(w1_);
  glorot(w2_);
  params.block(b1_).setZero();
  params.block(b2_).setZero();
  params.block(w3_).setZero();
  params.block(b3_).setZero();
}

Var DenseNet::forward(Tape& tape, Var inputs) const {
  require(inputs.value().rows() == static_cast<Eigen::Index>(in_),
          "DenseNet: input width " + std::to_string(inputs.value().rows()) + " != " + std::to_string(in_));
  Var h1 = tanh(matmul(tape.param(w1_), inputs) + tape.param(b1_));
  Var h2 = tanh(matmul(tape.param(w2_), h1) + tape.param(b2_));
  return matmul(tape.param(w3_), tape.concat_rows(h1, h2)) + tape.param(b3_);
}

Eigen::MatrixXd DenseNet::forward(const Params& params, const Eigen::MatrixXd& inputs) const {
  require(inputs.rows() == static_cast<Eigen::Index>(in_),
          "DenseNet: input width " + std::to_string(inputs.rows()) + " != " + std::to_string(in_));
  const auto w1 = params.block(w1_);
  const auto w2 = params.block(w2_);
  const auto w3 = params.block(w3_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  Eigen::MatrixXd h1 = w1 * inputs;
  h1.colwise() += params.block(b1_).col(0);
  h1 = tanh_array(h1.array()).matrix();
  Eigen::MatrixXd h2 = w2 * h1;
  h2.colwise() += params.block(b2_).col(0);
  h2 = tanh_array(h2.array()).matrix();
  Eigen::MatrixXd out = w3.leftCols(h) * h1;
  out.noalias() += w3.rightCols(h) * h2;
  out.colwise() += params.block(b3_).col(0);
  return out;
}

double DenseNet::forward_scalar(const Params& params, const Eigen::VectorXd& input) const {
  require(out_ == 1, "DenseNet::forward_scalar needs a single output");
  Eigen::MatrixXd in(input.size(), 1);
  in.col(0) = input;
  return forward(params, in)(0, 0);
}

// ---------------------------------------------------------------- Adam

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, const AdamConfig& config) {
  require(grad.size() == params.size(), "adam_step: gradient and parameter sizes differ");
  if (!grad.allFinite()) fail(ErrorCode::numeric, "adam_step: non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.t = 0;
  }
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  params.array() -= config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

}  // namespace tppf
