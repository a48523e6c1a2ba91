#include "dgda/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dgda {

std::string TensorShape::str() const {
  std::ostringstream os;
  switch (rank) {
    case 0: os << "[]"; break;
    case 1: os << "[" << rows << "]"; break;
    default: os << "[" << rows << " x " << cols << "]"; break;
  }
  return os.str();
}

namespace {

[[noreturn]] void bad_shapes(const char* op, const TensorShape& a) {
  throw ContractViolation(std::string(op) + ": unsupported shape " + a.str());
}

[[noreturn]] void bad_shapes(const char* op, const TensorShape& a,
                             const TensorShape& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " + a.str() +
                          " and " + b.str());
}

Tape* common_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid())
    throw ContractViolation(std::string(op) + ": tensor not bound to a tape");
  if (a.tape() != b.tape())
    throw ContractViolation(std::string(op) + ": operands on different tapes");
  return a.tape();
}

Tape* own_tape(const char* op, const Tensor& a) {
  if (!a.valid())
    throw ContractViolation(std::string(op) + ": tensor not bound to a tape");
  return a.tape();
}

// Accumulates an expression into the gradient of node `id`, skipping inputs
// that do not track gradients (constants never allocate grad storage).
template <typename Expr>
void accum(Tape& t, int id, const Expr& g) {
  if (!t.node(id).requires_grad) return;
  t.grad_of(id) += g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor accessors
// ---------------------------------------------------------------------------

const Matrix& Tensor::value() const { return tape_->node(id_).value; }
const TensorShape& Tensor::shape() const { return tape_->node(id_).shape; }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

double Tensor::scalar() const {
  if (rank() != 0)
    throw ContractViolation("scalar: tensor has shape " + shape().str());
  return value()(0, 0);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tensor Tape::emplace(Matrix value, TensorShape shape, std::vector<int> inputs,
                     std::function<void(Tape&, const Node&)> vjp) {
  if (consumed_)
    throw ContractViolation("tape already consumed by backward(); reset() first");
  Node n;
  n.value = std::move(value);
  n.shape = shape;
  bool needs = false;
  for (int i : inputs) needs = needs || nodes_[static_cast<std::size_t>(i)].requires_grad;
  n.requires_grad = needs && grad_enabled_;
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.vjp = std::move(vjp);
  }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::constant(Matrix m, TensorShape shape) {
  return input(std::move(m), shape, false);
}

Tensor Tape::constant(const Matrix& m) {
  return input(m, TensorShape::matrix(m.rows(), m.cols()), false);
}

Tensor Tape::constant_vector(const Eigen::VectorXd& v) {
  Matrix m = v;
  return input(std::move(m), TensorShape::vector(v.size()), false);
}

Tensor Tape::constant_scalar(double x) {
  Matrix m(1, 1);
  m(0, 0) = x;
  return input(std::move(m), TensorShape::scalar(), false);
}

Tensor Tape::input(Matrix m, TensorShape shape, bool requires_grad) {
  if (m.rows() != shape.rows || m.cols() != shape.cols)
    throw ContractViolation("input: storage does not match shape " + shape.str());
  if (consumed_)
    throw ContractViolation("tape already consumed by backward(); reset() first");
  Node n;
  n.value = std::move(m);
  n.shape = shape;
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::watch(Parameter& p) {
  auto it = watched_.find(&p);
  if (it != watched_.end()) return Tensor(this, it->second);
  Tensor t = input(p.value, p.shape, true);
  nodes_.back().param = &p;
  watched_.emplace(&p, t.id());
  return t;
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

GradMap Tape::backward(const Tensor& loss) {
  if (!grad_enabled_)
    throw ContractViolation("backward: gradients are disabled on this tape");
  if (loss.tape() != this)
    throw ContractViolation("backward: loss recorded on a different tape");
  if (loss.rank() != 0)
    throw ContractViolation("backward: loss must be a scalar, got " +
                            loss.shape().str());
  grad_of(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 || !n.vjp) continue;
    n.vjp(*this, n);
  }
  GradMap out;
  for (int id = 0; id <= loss.id(); ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.param == nullptr) continue;
    if (n.grad.size() == 0) continue;
    out[n.param->name] = n.grad;
  }
  consumed_ = true;
  return out;
}

void Tape::reset() {
  nodes_.clear();
  watched_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("matmul", a, b);
  if (a.rank() != 2 || b.rank() < 1 || a.cols() != b.value().rows())
    bad_shapes("matmul", a.shape(), b.shape());
  TensorShape out = b.rank() == 1 ? TensorShape::vector(a.rows())
                                  : TensorShape::matrix(a.rows(), b.cols());
  int ia = a.id(), ib = b.id();
  return t->emplace(a.value() * b.value(), out, {ia, ib},
                    [ia, ib](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad * tp.node(ib).value.transpose());
                      accum(tp, ib, tp.node(ia).value.transpose() * n.grad);
                    });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("add", a, b);
  if (a.shape() != b.shape()) bad_shapes("add", a.shape(), b.shape());
  int ia = a.id(), ib = b.id();
  return t->emplace(a.value() + b.value(), a.shape(), {ia, ib},
                    [ia, ib](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad);
                      accum(tp, ib, n.grad);
                    });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  Tape* t = common_tape("add_rowvec", m, v);
  if (m.rank() != 2 || v.rank() != 1 || v.rows() != m.cols())
    bad_shapes("add_rowvec", m.shape(), v.shape());
  Matrix out = m.value();
  out.rowwise() += v.value().col(0).transpose();
  int im = m.id(), iv = v.id();
  return t->emplace(std::move(out), m.shape(), {im, iv},
                    [im, iv](Tape& tp, const Tape::Node& n) {
                      accum(tp, im, n.grad);
                      accum(tp, iv, n.grad.colwise().sum().transpose());
                    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("sub", a, b);
  if (a.shape() != b.shape()) bad_shapes("sub", a.shape(), b.shape());
  int ia = a.id(), ib = b.id();
  return t->emplace(a.value() - b.value(), a.shape(), {ia, ib},
                    [ia, ib](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad);
                      accum(tp, ib, -n.grad);
                    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("hadamard", a, b);
  if (a.shape() != b.shape()) bad_shapes("hadamard", a.shape(), b.shape());
  int ia = a.id(), ib = b.id();
  return t->emplace(a.value().cwiseProduct(b.value()), a.shape(), {ia, ib},
                    [ia, ib](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad.cwiseProduct(tp.node(ib).value));
                      accum(tp, ib, n.grad.cwiseProduct(tp.node(ia).value));
                    });
}

Tensor scalar_mul(const Tensor& a, double c) {
  Tape* t = own_tape("scalar_mul", a);
  int ia = a.id();
  return t->emplace(a.value() * c, a.shape(), {ia},
                    [ia, c](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad * c);
                    });
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("concat_lastdim", a, b);
  if (a.rank() == 1 && b.rank() == 1) {
    Matrix out(a.rows() + b.rows(), 1);
    out.topRows(a.rows()) = a.value();
    out.bottomRows(b.rows()) = b.value();
    int ia = a.id(), ib = b.id();
    Index na = a.rows(), nb = b.rows();
    return t->emplace(std::move(out), TensorShape::vector(na + nb), {ia, ib},
                      [ia, ib, na, nb](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, n.grad.topRows(na));
                        accum(tp, ib, n.grad.bottomRows(nb));
                      });
  }
  if (a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows()) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a.value();
    out.rightCols(b.cols()) = b.value();
    int ia = a.id(), ib = b.id();
    Index ca = a.cols(), cb = b.cols();
    return t->emplace(std::move(out), TensorShape::matrix(a.rows(), ca + cb),
                      {ia, ib}, [ia, ib, ca, cb](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, n.grad.leftCols(ca));
                        accum(tp, ib, n.grad.rightCols(cb));
                      });
  }
  bad_shapes("concat_lastdim", a.shape(), b.shape());
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  Tape* t = own_tape("concat_rows", parts.front());
  Index cols = parts.front().rank() == 1 ? parts.front().rows() : parts.front().cols();
  Index rows = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.tape() != t)
      throw ContractViolation("concat_rows: operands on different tapes");
    Index c = p.rank() == 1 ? p.rows() : p.cols();
    if (p.rank() == 0 || c != cols)
      bad_shapes("concat_rows", parts.front().shape(), p.shape());
    rows += p.rank() == 1 ? 1 : p.rows();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  Index at = 0;
  std::vector<Index> spans;
  spans.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.rank() == 1) {
      out.row(at) = p.value().col(0).transpose();
      spans.push_back(1);
      at += 1;
    } else {
      out.middleRows(at, p.rows()) = p.value();
      spans.push_back(p.rows());
      at += p.rows();
    }
  }
  std::vector<int> ranks;
  ranks.reserve(parts.size());
  for (const Tensor& p : parts) ranks.push_back(p.rank());
  return t->emplace(std::move(out), TensorShape::matrix(rows, cols), ids,
                    [ids, spans, ranks](Tape& tp, const Tape::Node& n) {
                      Index at2 = 0;
                      for (std::size_t k = 0; k < ids.size(); ++k) {
                        if (ranks[k] == 1)
                          accum(tp, ids[k], n.grad.row(at2).transpose());
                        else
                          accum(tp, ids[k], n.grad.middleRows(at2, spans[k]));
                        at2 += spans[k];
                      }
                    });
}

Tensor row_sum(const Tensor& a) {
  Tape* t = own_tape("row_sum", a);
  int ia = a.id();
  if (a.rank() == 2) {
    Matrix out = a.value().rowwise().sum();
    Index c = a.cols();
    return t->emplace(std::move(out), TensorShape::vector(a.rows()), {ia},
                      [ia, c](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, n.grad * Matrix::Ones(1, c));
                      });
  }
  if (a.rank() == 1) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    Index r = a.rows();
    return t->emplace(std::move(out), TensorShape::scalar(), {ia},
                      [ia, r](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, Matrix::Constant(r, 1, n.grad(0, 0)));
                      });
  }
  bad_shapes("row_sum", a.shape());
}

Tensor mean_all(const Tensor& a) {
  Tape* t = own_tape("mean_all", a);
  if (a.size() == 0) throw ContractViolation("mean_all: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  int ia = a.id();
  Index r = a.value().rows(), c = a.value().cols();
  double inv = 1.0 / static_cast<double>(a.size());
  return t->emplace(std::move(out), TensorShape::scalar(), {ia},
                    [ia, r, c, inv](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, Matrix::Constant(r, c, n.grad(0, 0) * inv));
                    });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise(const char* op, const Tensor& a, Fwd fwd, Bwd bwd) {
  Tape* t = own_tape(op, a);
  int ia = a.id();
  return t->emplace(fwd(a.value()), a.shape(), {ia},
                    [ia, bwd](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, bwd(n, tp.node(ia).value));
                    });
}

}  // namespace

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any())
    throw DomainError("log: non-positive input");
  return elementwise(
      "log", a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Tape::Node& n, const Matrix& x) -> Matrix {
        return n.grad.array() / x.array();
      });
}

Tensor exp(const Tensor& a) {
  return elementwise(
      "exp", a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Tape::Node& n, const Matrix& x) -> Matrix {
        (void)x;
        return n.grad.cwiseProduct(n.value);
      });
}

Tensor sigmoid(const Tensor& a) {
  auto fwd = [](const Matrix& x) -> Matrix {
    // split by sign for stability
    return x.unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
    });
  };
  return elementwise("sigmoid", a, fwd,
                     [](const Tape::Node& n, const Matrix& x) -> Matrix {
                       (void)x;
                       return n.grad.array() * n.value.array() *
                              (1.0 - n.value.array());
                     });
}

Tensor tanh(const Tensor& a) {
  return elementwise(
      "tanh", a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Tape::Node& n, const Matrix& x) -> Matrix {
        (void)x;
        return n.grad.array() * (1.0 - n.value.array().square());
      });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  auto fwd = [slope](const Matrix& x) -> Matrix {
    return x.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
  };
  return elementwise("leaky_relu", a, fwd,
                     [slope](const Tape::Node& n, const Matrix& x) -> Matrix {
                       Matrix mask = x.unaryExpr(
                           [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
                       return n.grad.cwiseProduct(mask);
                     });
}

Tensor inner_product(const Tensor& a, const Tensor& b) {
  Tape* t = common_tape("inner_product", a, b);
  if (a.rank() != 1 || b.rank() != 1 || a.rows() != b.rows())
    bad_shapes("inner_product", a.shape(), b.shape());
  Matrix out(1, 1);
  out(0, 0) = a.value().col(0).dot(b.value().col(0));
  int ia = a.id(), ib = b.id();
  return t->emplace(std::move(out), TensorShape::scalar(), {ia, ib},
                    [ia, ib](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, n.grad(0, 0) * tp.node(ib).value);
                      accum(tp, ib, n.grad(0, 0) * tp.node(ia).value);
                    });
}

Tensor transpose(const Tensor& a) {
  Tape* t = own_tape("transpose", a);
  int ia = a.id();
  if (a.rank() == 2) {
    return t->emplace(a.value().transpose(),
                      TensorShape::matrix(a.cols(), a.rows()), {ia},
                      [ia](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, n.grad.transpose());
                      });
  }
  if (a.rank() == 1) {
    return t->emplace(a.value().transpose(), TensorShape::matrix(1, a.rows()),
                      {ia}, [ia](Tape& tp, const Tape::Node& n) {
                        accum(tp, ia, n.grad.transpose());
                      });
  }
  bad_shapes("transpose", a.shape());
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
  Tape* t = own_tape("slice_rows", a);
  if (a.rank() == 0 || begin < 0 || count < 1 || begin + count > a.rows())
    throw ContractViolation("slice_rows: range [" + std::to_string(begin) +
                            ", +" + std::to_string(count) + ") out of " +
                            a.shape().str());
  int ia = a.id();
  TensorShape out = a.rank() == 1 ? TensorShape::vector(count)
                                  : TensorShape::matrix(count, a.cols());
  return t->emplace(a.value().middleRows(begin, count), out, {ia},
                    [ia, begin, count](Tape& tp, const Tape::Node& n) {
                      if (!tp.node(ia).requires_grad) return;
                      tp.grad_of(ia).middleRows(begin, count) += n.grad;
                    });
}

Tensor select_rows(const Tensor& a, const std::vector<int>& ids) {
  Tape* t = own_tape("select_rows", a);
  if (a.rank() != 2) bad_shapes("select_rows", a.shape());
  Matrix out(static_cast<Index>(ids.size()), a.cols());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= a.rows())
      throw ContractViolation("select_rows: index " + std::to_string(ids[j]) +
                              " out of " + a.shape().str());
    out.row(static_cast<Index>(j)) = a.value().row(ids[j]);
  }
  int ia = a.id();
  return t->emplace(std::move(out),
                    TensorShape::matrix(static_cast<Index>(ids.size()), a.cols()),
                    {ia}, [ia, ids](Tape& tp, const Tape::Node& n) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix& g = tp.grad_of(ia);
                      for (std::size_t j = 0; j < ids.size(); ++j)
                        g.row(ids[j]) += n.grad.row(static_cast<Index>(j));
                    });
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
  Tape* t = common_tape("scale_rows", a, v);
  if (a.rank() != 2 || v.rank() != 1 || v.rows() != a.rows())
    bad_shapes("scale_rows", a.shape(), v.shape());
  Matrix out = a.value().array().colwise() * v.value().col(0).array();
  int ia = a.id(), iv = v.id();
  return t->emplace(std::move(out), a.shape(), {ia, iv},
                    [ia, iv](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia,
                            (n.grad.array().colwise() *
                             tp.node(iv).value.col(0).array())
                                .matrix());
                      accum(tp, iv, n.grad.cwiseProduct(tp.node(ia).value)
                                        .rowwise()
                                        .sum());
                    });
}

Tensor block_mean(const Tensor& a, Index l) {
  Tape* t = own_tape("block_mean", a);
  if (a.rank() != 2 || l < 1 || a.rows() % l != 0)
    throw ContractViolation("block_mean: block " + std::to_string(l) +
                            " does not divide " + a.shape().str());
  Index n = a.rows() / l;
  Matrix out = Matrix::Zero(n, a.cols());
  for (Index i = 0; i < n; ++i)
    out.row(i) = a.value().middleRows(i * l, l).colwise().mean();
  int ia = a.id();
  return t->emplace(std::move(out), TensorShape::matrix(n, a.cols()), {ia},
                    [ia, l, n](Tape& tp, const Tape::Node& n_) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix& g = tp.grad_of(ia);
                      double inv = 1.0 / static_cast<double>(l);
                      for (Index i = 0; i < n; ++i)
                        g.middleRows(i * l, l).rowwise() +=
                            inv * n_.grad.row(i);
                    });
}

Tensor block_repeat(const Tensor& a, Index l) {
  Tape* t = own_tape("block_repeat", a);
  if (a.rank() != 2 || l < 1) bad_shapes("block_repeat", a.shape());
  Index n = a.rows();
  Matrix out(n * l, a.cols());
  for (Index i = 0; i < n; ++i)
    out.middleRows(i * l, l).rowwise() = a.value().row(i);
  int ia = a.id();
  return t->emplace(std::move(out), TensorShape::matrix(n * l, a.cols()), {ia},
                    [ia, l, n](Tape& tp, const Tape::Node& n_) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix& g = tp.grad_of(ia);
                      for (Index i = 0; i < n; ++i)
                        g.row(i) += n_.grad.middleRows(i * l, l).colwise().sum();
                    });
}

Tensor block_rowsum(const Tensor& a, Index l) {
  Tape* t = own_tape("block_rowsum", a);
  if (a.rank() != 2 || l < 1 || a.rows() % l != 0)
    throw ContractViolation("block_rowsum: block " + std::to_string(l) +
                            " does not divide " + a.shape().str());
  Index n = a.rows() / l;
  Matrix out = Matrix::Zero(n, a.cols());
  for (Index i = 0; i < n; ++i)
    out.row(i) = a.value().middleRows(i * l, l).colwise().sum();
  int ia = a.id();
  return t->emplace(std::move(out), TensorShape::matrix(n, a.cols()), {ia},
                    [ia, l, n](Tape& tp, const Tape::Node& n_) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix& g = tp.grad_of(ia);
                      for (Index i = 0; i < n; ++i)
                        g.middleRows(i * l, l).rowwise() += n_.grad.row(i);
                    });
}

Tensor segment_mean(const Tensor& a, const std::vector<int>& offsets) {
  Tape* t = own_tape("segment_mean", a);
  if (a.rank() != 2 || offsets.size() < 2 || offsets.front() != 0 ||
      offsets.back() != a.rows())
    throw ContractViolation("segment_mean: bad offsets for " + a.shape().str());
  Index n = static_cast<Index>(offsets.size()) - 1;
  Matrix out = Matrix::Zero(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    int b = offsets[static_cast<std::size_t>(i)];
    int e = offsets[static_cast<std::size_t>(i) + 1];
    if (e <= b) throw ContractViolation("segment_mean: empty segment");
    out.row(i) = a.value().middleRows(b, e - b).colwise().mean();
  }
  int ia = a.id();
  return t->emplace(std::move(out), TensorShape::matrix(n, a.cols()), {ia},
                    [ia, offsets, n](Tape& tp, const Tape::Node& n_) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix& g = tp.grad_of(ia);
                      for (Index i = 0; i < n; ++i) {
                        int b = offsets[static_cast<std::size_t>(i)];
                        int e = offsets[static_cast<std::size_t>(i) + 1];
                        g.middleRows(b, e - b).rowwise() +=
                            n_.grad.row(i) / static_cast<double>(e - b);
                      }
                    });
}

Tensor reshape(const Tensor& a, TensorShape shape) {
  Tape* t = own_tape("reshape", a);
  if (shape.size() != a.size())
    bad_shapes("reshape", a.shape(), shape);
  // storage is row-major and contiguous, so this is a relabeling
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), shape.rows, shape.cols);
  int ia = a.id();
  Index r = a.value().rows(), c = a.value().cols();
  return t->emplace(std::move(out), shape, {ia},
                    [ia, r, c](Tape& tp, const Tape::Node& n) {
                      accum(tp, ia, Eigen::Map<const Matrix>(n.grad.data(), r, c));
                    });
}

Tensor softmax(const Tensor& a, int axis) {
  Tape* t = own_tape("softmax", a);
  if (!a.value().allFinite())
    throw DomainError("softmax: non-finite logits");
  if (a.rank() == 0) bad_shapes("softmax", a.shape());
  if (axis != 0 && axis != 1)
    throw ContractViolation("softmax: axis must be 0 or 1");
  // a vector is a single distribution down its one storage column
  bool rowwise = a.rank() == 2 && axis == 1;
  Matrix out = a.value();
  auto normalize = [](Eigen::VectorXd v) -> Eigen::VectorXd {
    double m = v.maxCoeff();
    v = (v.array() - m).exp();
    return v / v.sum();
  };
  if (rowwise) {
    for (Index i = 0; i < out.rows(); ++i)
      out.row(i) = normalize(out.row(i).transpose()).transpose();
  } else {
    for (Index j = 0; j < out.cols(); ++j) out.col(j) = normalize(out.col(j));
  }
  int ia = a.id();
  return t->emplace(std::move(out), a.shape(), {ia},
                    [ia, rowwise](Tape& tp, const Tape::Node& n) {
                      if (!tp.node(ia).requires_grad) return;
                      Matrix dx(n.value.rows(), n.value.cols());
                      if (rowwise) {
                        for (Index i = 0; i < n.value.rows(); ++i) {
                          double dot = n.grad.row(i).dot(n.value.row(i));
                          dx.row(i) = n.value.row(i).cwiseProduct(
                              (n.grad.row(i).array() - dot).matrix());
                        }
                      } else {
                        for (Index j = 0; j < n.value.cols(); ++j) {
                          double dot = n.grad.col(j).dot(n.value.col(j));
                          dx.col(j) = n.value.col(j).cwiseProduct(
                              (n.grad.col(j).array() - dot).matrix());
                        }
                      }
                      tp.grad_of(ia) += dx;
                    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo < hi)) throw ContractViolation("clamp: lo must be below hi");
  auto fwd = [lo, hi](const Matrix& x) -> Matrix {
    return x.cwiseMax(lo).cwiseMin(hi);
  };
  return elementwise("clamp", a, fwd,
                     [lo, hi](const Tape::Node& n, const Matrix& x) -> Matrix {
                       Matrix mask = x.unaryExpr([lo, hi](double v) {
                         return (v > lo && v < hi) ? 1.0 : 0.0;
                       });
                       return n.grad.cwiseProduct(mask);
                     });
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(Matrix& value, const Matrix& grad, AdamSlot& slot, double lr,
               double beta1, double beta2, double eps) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols())
    throw ContractViolation("adam_step: grad shape mismatch");
  if (slot.m.size() == 0) {
    slot.m = Matrix::Zero(value.rows(), value.cols());
    slot.v = Matrix::Zero(value.rows(), value.cols());
  }
  slot.t += 1;
  slot.m = beta1 * slot.m + (1.0 - beta1) * grad;
  slot.v = beta2 * slot.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
  Matrix mhat = slot.m / c1;
  Matrix vhat = slot.v / c2;
  value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
}

void Adam::add_params(const std::vector<Parameter*>& ps) {
  for (Parameter* p : ps) params_.push_back(p);
}

void Adam::step(const GradMap& grads) {
  for (Parameter* p : params_) {
    auto it = grads.find(p->name);
    if (it == grads.end()) continue;
    adam_step(p->value, it->second, slots_[p->name], lr_, beta1_, beta2_, eps_);
  }
}

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x632be59bd9b4e019ULL)));
}

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

double normal(Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

Matrix init_uniform(Rng& rng, Index rows, Index cols, Index fan_in) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -bound, bound);
  return m;
}

}  // namespace dgda
