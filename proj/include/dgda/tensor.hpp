#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgda {

/// Row-major storage so on-disk layouts and reshapes are buffer-preserving.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Dense shapes of rank 0, 1 or 2. Storage is always a row-major matrix:
/// rank 0 -> 1x1, rank 1 of size n -> n x 1, rank 2 -> rows x cols.
struct TensorShape {
  int rank = 2;
  Index rows = 0;
  Index cols = 0;

  static TensorShape scalar() { return {0, 1, 1}; }
  static TensorShape vector(Index n) { return {1, n, 1}; }
  static TensorShape matrix(Index r, Index c) { return {2, r, c}; }

  Index size() const { return rows * cols; }
  bool operator==(const TensorShape&) const = default;
  std::string str() const;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; the value itself is
/// immutable once created.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  const TensorShape& shape() const;
  int rank() const { return shape().rank; }
  Index rows() const { return shape().rows; }
  Index cols() const { return shape().cols; }
  Index size() const { return shape().size(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  /// Rank-0 convenience accessor.
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// A named learnable value. Lives outside any tape; requires_grad is
/// implicitly true. Names must be unique within one model.
struct Parameter {
  std::string name;
  TensorShape shape;
  Matrix value;

  Parameter() = default;
  Parameter(std::string n, Matrix v, TensorShape s)
      : name(std::move(n)), shape(s), value(std::move(v)) {}
};

using GradMap = std::map<std::string, Matrix>;

/// Append-only record of one forward computation (a Wengert list). Inputs of
/// a node always precede it, so the reverse sweep needs no explicit sort.
/// Reset per training step; a tape whose backward() ran refuses new nodes
/// until reset.
class Tape {
 public:
  struct Node {
    Matrix value;
    TensorShape shape;
    Matrix grad;  // lazily allocated during backward
    bool requires_grad = false;
    Parameter* param = nullptr;  // set only on watched leaves
    std::vector<int> inputs;
    std::function<void(Tape&, const Node&)> vjp;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient tracking.
  Tensor constant(Matrix m, TensorShape shape);
  Tensor constant(const Matrix& m);              // rank 2
  Tensor constant_vector(const Eigen::VectorXd& v);
  Tensor constant_scalar(double x);

  /// Generic leaf; requires_grad makes it a differentiable input.
  Tensor input(Matrix m, TensorShape shape, bool requires_grad);

  /// Leaf bound to a Parameter; its gradient is reported under the
  /// parameter's name by backward().
  Tensor watch(Parameter& p);

  /// Reverse sweep from a scalar loss. Returns the gradient of the loss
  /// w.r.t. every watched parameter that the loss depends on. The tape is
  /// consumed: record ops again only after reset().
  GradMap backward(const Tensor& loss);

  void reset();

  /// With gradients disabled, ops still compute values but record no
  /// backward rules; backward() on such a tape is a contract violation.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t num_nodes() const { return nodes_.size(); }

  // --- internal, used by the op builders ---
  Tensor emplace(Matrix value, TensorShape shape, std::vector<int> inputs,
                 std::function<void(Tape&, const Node&)> vjp);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Matrix& grad_of(int id);

 private:
  std::deque<Node> nodes_;  // deque: stable references across appends
  std::map<Parameter*, int> watched_;
  bool consumed_ = false;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Primitive ops. Each records a vector-Jacobian rule on the tape. Shapes
// follow standard dense-algebra semantics; mismatches throw ContractViolation
// naming the op and the offending shapes.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a length-c vector to every row of an r x c matrix (bias broadcast).
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
/// Concatenates along the last dimension: vectors end to end, matrices by
/// columns (row counts must match).
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
/// Stacks matrices (or vectors, as rows) on top of each other.
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Sums each row of a matrix into a vector; a vector sums to a scalar.
Tensor row_sum(const Tensor& a);
/// Mean over all entries -> scalar.
Tensor mean_all(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor inner_product(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
/// Gathers rows by index; repeats allowed.
Tensor select_rows(const Tensor& a, const std::vector<int>& ids);
/// Scales row i of a by v[i].
Tensor scale_rows(const Tensor& a, const Tensor& v);
/// Means of consecutive l-row blocks: (n*l) x c -> n x c.
Tensor block_mean(const Tensor& a, Index l);
/// Repeats each row l times: n x c -> (n*l) x c.
Tensor block_repeat(const Tensor& a, Index l);
/// Sums of consecutive l-row blocks: (n*l) x c -> n x c.
Tensor block_rowsum(const Tensor& a, Index l);
/// Means over variable-length consecutive row segments. offsets has one
/// entry per segment plus a final end offset; offsets.front()==0 and
/// offsets.back()==rows(a).
Tensor segment_mean(const Tensor& a, const std::vector<int>& offsets);
Tensor reshape(const Tensor& a, TensorShape shape);
/// Stable softmax along axis (1 = per row, 0 = per column); a vector is one
/// distribution. Non-finite logits are a domain error.
Tensor softmax(const Tensor& a, int axis = 1);
/// Elementwise clamp into [lo, hi]; gradient passes only strictly inside.
Tensor clamp(const Tensor& a, double lo, double hi);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamSlot {
  Matrix m;
  Matrix v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update of a single value.
void adam_step(Matrix& value, const Matrix& grad, AdamSlot& slot, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Adam over a fixed parameter group. Parameters absent from a GradMap are
/// left untouched (their moments do not decay), which is what makes
/// freeze-by-exclusion exact.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add_param(Parameter* p) { params_.push_back(p); }
  void add_params(const std::vector<Parameter*>& ps);
  const std::vector<Parameter*>& params() const { return params_; }

  void step(const GradMap& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Parameter*> params_;
  std::map<std::string, AdamSlot> slots_;
};

// ---------------------------------------------------------------------------
// RNG and initialization
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Derives an independent stream so that consumers do not perturb each
/// other's sequences when one of them is disabled.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) entries.
Matrix init_uniform(Rng& rng, Index rows, Index cols, Index fan_in);

}  // namespace dgda
