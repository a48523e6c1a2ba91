#include "dgda/tensor.hpp"

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oracles.hpp"

using namespace dgda;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

// Keeps elementwise kinks (relu corner, clamp bounds) away from FD probes.
Matrix away_from(Matrix m, std::initializer_list<double> kinks,
                 double margin = 1e-3) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      for (double k : kinks)
        if (std::abs(m(i, j) - k) < margin)
          m(i, j) = k + (m(i, j) >= k ? margin : -margin) * 2.0;
  return m;
}

Parameter make_param(const std::string& name, Matrix v, TensorShape s) {
  return Parameter(name, std::move(v), s);
}

using BuildFn = std::function<Tensor(Tape&, std::vector<Parameter>&)>;

double fd_check(std::vector<Parameter> params, const BuildFn& build) {
  Tape tape;
  Tensor loss = build(tape, params);
  GradMap analytic = tape.backward(loss);
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  GradMap fd = oracle::fd_gradients(
      ptrs, [&] { Tape t; return build(t, params).scalar(); });
  return oracle::max_rel_error(analytic, fd);
}

// Scalarizes an op output with fixed random weights so transposed or
// misrouted gradient entries cannot cancel out.
Tensor weighted(Tape& t, const Tensor& out, const Matrix& w) {
  return mean_all(hadamard(out, t.constant(w, out.shape())));
}

constexpr int kInstances = 50;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("primitive forward identities") {
  Tape t;
  Rng rng(7);
  Matrix a = random_matrix(rng, 3, 4);
  Tensor A = t.constant(a);
  Tensor I = t.constant(Matrix::Identity(3, 3));
  CHECK((matmul(I, A).value() - a).cwiseAbs().maxCoeff() == 0.0);

  Matrix x(2, 1);
  x << -1.0, 2.0;
  Tensor lx = leaky_relu(t.input(x, TensorShape::vector(2), false), 0.01);
  CHECK(lx.value()(0, 0) == doctest::Approx(-0.01));
  CHECK(lx.value()(1, 0) == doctest::Approx(2.0));

  Matrix u(3, 1), v(3, 1);
  u << 1, 2, 3;
  v << 4, 5, 6;
  Tensor ip = inner_product(t.input(u, TensorShape::vector(3), false),
                            t.input(v, TensorShape::vector(3), false));
  CHECK(ip.scalar() == doctest::Approx(32.0));
}

TEST_CASE("softmax values and invariants") {
  Tape t;
  Matrix z = Matrix::Zero(3, 1);
  Tensor s = softmax(t.input(z, TensorShape::vector(3), false));
  for (int i = 0; i < 3; ++i)
    CHECK(s.value()(i, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Matrix l(2, 1);
  l << std::log(1.0), std::log(3.0);
  Tensor s2 = softmax(t.input(l, TensorShape::vector(2), false));
  CHECK(std::abs(s2.value()(0, 0) - 0.25) < 1e-14);
  CHECK(std::abs(s2.value()(1, 0) - 0.75) < 1e-14);

  Rng rng = make_rng(11, 0);
  for (int k = 0; k < 200; ++k) {
    Matrix logits = random_matrix(rng, 4, 5, -30.0, 30.0);
    Tape tp;
    Tensor sm = softmax(tp.constant(logits), 1);
    for (Index i = 0; i < 4; ++i) {
      CHECK(std::abs(sm.value().row(i).sum() - 1.0) < 1e-12);
      CHECK(sm.value().row(i).minCoeff() >= 0.0);
    }
    // invariance under a constant shift of the logits
    double c = uniform(rng, -50.0, 50.0);
    Tensor sm2 = softmax(tp.constant(Matrix(logits.array() + c)), 1);
    CHECK((sm.value() - sm2.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward basics") {
  // d(x'x)/dx = 2x
  {
    Tape t;
    Matrix x(2, 1);
    x << 1, 2;
    Parameter px = make_param("x", x, TensorShape::vector(2));
    Tensor tx = t.watch(px);
    GradMap g = t.backward(inner_product(tx, tx));
    CHECK(g["x"](0, 0) == doctest::Approx(2.0));
    CHECK(g["x"](1, 0) == doctest::Approx(4.0));
  }
  // d(sum sigmoid(x))/dx at 0 = 1/4
  {
    Tape t;
    Parameter px = make_param("x", Matrix::Zero(3, 1), TensorShape::vector(3));
    GradMap g = t.backward(row_sum(sigmoid(t.watch(px))));
    for (int i = 0; i < 3; ++i) CHECK(g["x"](i, 0) == doctest::Approx(0.25));
  }
}

TEST_CASE("random mlp matches finite differences") {
  Rng rng = make_rng(23, 1);
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<Parameter> ps;
    ps.push_back(make_param("w1", random_matrix(rng, 3, 2), TensorShape::matrix(3, 2)));
    ps.push_back(make_param("b1", random_matrix(rng, 3, 1), TensorShape::vector(3)));
    ps.push_back(make_param("w2", random_matrix(rng, 1, 3), TensorShape::matrix(1, 3)));
    ps.push_back(make_param("b2", random_matrix(rng, 1, 1), TensorShape::vector(1)));
    ps.push_back(make_param("x", random_matrix(rng, 2, 1), TensorShape::vector(2)));
    auto build = [](Tape& t, std::vector<Parameter>& p) {
      Tensor h = tanh(add(matmul(t.watch(p[0]), t.watch(p[4])), t.watch(p[1])));
      Tensor y = add(matmul(t.watch(p[2]), h), t.watch(p[3]));
      return mean_all(tanh(y));
    };
    CHECK(fd_check(ps, build) < kTol);
  }
}

TEST_CASE("every primitive passes finite-difference checks") {
  Rng rng = make_rng(101, 2);

  auto mat_param = [&](const std::string& n, Index r, Index c,
                       double lo = -2.0, double hi = 2.0) {
    return make_param(n, random_matrix(rng, r, c, lo, hi),
                      TensorShape::matrix(r, c));
  };
  auto vec_param = [&](const std::string& n, Index r, double lo = -2.0,
                       double hi = 2.0) {
    return make_param(n, random_matrix(rng, r, 1, lo, hi),
                      TensorShape::vector(r));
  };

  SUBCASE("matmul") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 2, 4);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, matmul(t.watch(p[0]), t.watch(p[1])), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3), mat_param("b", 3, 4)}, build) < kTol);
    }
    for (int k = 0; k < kInstances; ++k) {  // matrix * vector
      Matrix w = random_matrix(rng, 3, 1);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, matmul(t.watch(p[0]), t.watch(p[1])), w);
      };
      CHECK(fd_check({mat_param("a", 3, 2), vec_param("b", 2)}, build) < kTol);
    }
  }

  SUBCASE("add sub hadamard") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 3, 2);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        Tensor s = add(t.watch(p[0]), t.watch(p[1]));
        s = sub(s, hadamard(t.watch(p[0]), t.watch(p[1])));
        return weighted(t, s, w);
      };
      CHECK(fd_check({mat_param("a", 3, 2), mat_param("b", 3, 2)}, build) < kTol);
    }
  }

  SUBCASE("add_rowvec") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 3, 4);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, add_rowvec(t.watch(p[0]), t.watch(p[1])), w);
      };
      CHECK(fd_check({mat_param("m", 3, 4), vec_param("v", 4)}, build) < kTol);
    }
  }

  SUBCASE("scalar_mul") {
    for (int k = 0; k < kInstances; ++k) {
      double c = uniform(rng, -3.0, 3.0);
      Matrix w = random_matrix(rng, 2, 3);
      auto build = [c, w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, scalar_mul(t.watch(p[0]), c), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3)}, build) < kTol);
    }
  }

  SUBCASE("concat") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 5, 1);
      Matrix w2 = random_matrix(rng, 2, 5);
      Matrix w3 = random_matrix(rng, 5, 3);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, concat_lastdim(t.watch(p[0]), t.watch(p[1])), w);
      };
      CHECK(fd_check({vec_param("a", 2), vec_param("b", 3)}, build) < kTol);
      auto build2 = [w2](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, concat_lastdim(t.watch(p[0]), t.watch(p[1])), w2);
      };
      CHECK(fd_check({mat_param("a", 2, 2), mat_param("b", 2, 3)}, build2) < kTol);
      auto build3 = [w3](Tape& t, std::vector<Parameter>& p) {
        return weighted(
            t, concat_rows({t.watch(p[0]), t.watch(p[1]), t.watch(p[2])}), w3);
      };
      CHECK(fd_check({mat_param("a", 2, 3), mat_param("b", 2, 3),
                      vec_param("c", 3)},
                     build3) < kTol);
    }
  }

  SUBCASE("reductions") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 3, 1);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, row_sum(t.watch(p[0])), w);
      };
      CHECK(fd_check({mat_param("a", 3, 4)}, build) < kTol);
      auto build2 = [](Tape& t, std::vector<Parameter>& p) {
        return row_sum(t.watch(p[0]));
      };
      CHECK(fd_check({vec_param("a", 4)}, build2) < kTol);
      auto build3 = [](Tape& t, std::vector<Parameter>& p) {
        return mean_all(t.watch(p[0]));
      };
      CHECK(fd_check({mat_param("a", 2, 5)}, build3) < kTol);
    }
  }

  SUBCASE("elementwise nonlinearities") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 2, 3);
      auto p_log = make_param("a", random_matrix(rng, 2, 3, 0.1, 3.0),
                              TensorShape::matrix(2, 3));
      auto build_log = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, log(t.watch(p[0])), w);
      };
      CHECK(fd_check({p_log}, build_log) < kTol);

      auto build_exp = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, exp(t.watch(p[0])), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3)}, build_exp) < kTol);

      auto build_sig = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, sigmoid(t.watch(p[0])), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3, -6.0, 6.0)}, build_sig) < kTol);

      auto build_tanh = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, tanh(t.watch(p[0])), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3, -4.0, 4.0)}, build_tanh) < kTol);

      double slope = uniform(rng, 0.005, 0.2);
      auto p_lr = make_param("a", away_from(random_matrix(rng, 2, 3), {0.0}),
                             TensorShape::matrix(2, 3));
      auto build_lr = [w, slope](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, leaky_relu(t.watch(p[0]), slope), w);
      };
      CHECK(fd_check({p_lr}, build_lr) < kTol);
    }
  }

  SUBCASE("inner_product transpose") {
    for (int k = 0; k < kInstances; ++k) {
      auto build = [](Tape& t, std::vector<Parameter>& p) {
        return inner_product(t.watch(p[0]), t.watch(p[1]));
      };
      CHECK(fd_check({vec_param("a", 4), vec_param("b", 4)}, build) < kTol);
      Matrix w = random_matrix(rng, 3, 2);
      auto build2 = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, transpose(t.watch(p[0])), w);
      };
      CHECK(fd_check({mat_param("a", 2, 3)}, build2) < kTol);
    }
  }

  SUBCASE("row selection ops") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 2, 3);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, slice_rows(t.watch(p[0]), 1, 2), w);
      };
      CHECK(fd_check({mat_param("a", 4, 3)}, build) < kTol);

      std::vector<int> ids = {3, 0, 0, 2};
      Matrix w2 = random_matrix(rng, 4, 3);
      auto build2 = [w2, ids](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, select_rows(t.watch(p[0]), ids), w2);
      };
      CHECK(fd_check({mat_param("a", 4, 3)}, build2) < kTol);

      Matrix w3 = random_matrix(rng, 3, 2);
      auto build3 = [w3](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, scale_rows(t.watch(p[0]), t.watch(p[1])), w3);
      };
      CHECK(fd_check({mat_param("a", 3, 2), vec_param("v", 3)}, build3) < kTol);
    }
  }

  SUBCASE("block ops") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 2, 3);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, block_mean(t.watch(p[0]), 3), w);
      };
      CHECK(fd_check({mat_param("a", 6, 3)}, build) < kTol);

      Matrix w2 = random_matrix(rng, 6, 3);
      auto build2 = [w2](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, block_repeat(t.watch(p[0]), 3), w2);
      };
      CHECK(fd_check({mat_param("a", 2, 3)}, build2) < kTol);

      auto build3 = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, block_rowsum(t.watch(p[0]), 2), w);
      };
      CHECK(fd_check({mat_param("a", 4, 3)}, build3) < kTol);

      std::vector<int> offsets = {0, 1, 4, 5};
      Matrix w4 = random_matrix(rng, 3, 2);
      auto build4 = [w4, offsets](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, segment_mean(t.watch(p[0]), offsets), w4);
      };
      CHECK(fd_check({mat_param("a", 5, 2)}, build4) < kTol);
    }
  }

  SUBCASE("reshape softmax clamp") {
    for (int k = 0; k < kInstances; ++k) {
      Matrix w = random_matrix(rng, 2, 6);
      auto build = [w](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, reshape(t.watch(p[0]), TensorShape::matrix(2, 6)), w);
      };
      CHECK(fd_check({mat_param("a", 4, 3)}, build) < kTol);

      Matrix w2 = random_matrix(rng, 3, 4);
      int axis = k % 2;
      auto build2 = [w2, axis](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, softmax(t.watch(p[0]), axis), w2);
      };
      CHECK(fd_check({mat_param("a", 3, 4, -3.0, 3.0)}, build2) < kTol);

      auto p_cl = make_param(
          "a", away_from(random_matrix(rng, 3, 4), {-0.5, 0.5}),
          TensorShape::matrix(3, 4));
      Matrix w3 = random_matrix(rng, 3, 4);
      auto build3 = [w3](Tape& t, std::vector<Parameter>& p) {
        return weighted(t, clamp(t.watch(p[0]), -0.5, 0.5), w3);
      };
      CHECK(fd_check({p_cl}, build3) < kTol);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves value in place") {
    Matrix v = Matrix::Constant(2, 2, 1.5);
    AdamSlot slot;
    Matrix before = v;
    for (int i = 0; i < 10; ++i)
      adam_step(v, Matrix::Zero(2, 2), slot, 0.1);
    CHECK((v - before).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single step from zero state") {
    // hand evaluation of the recurrence: mhat = vhat = g, so the update is
    // -lr * g / (|g| + eps)
    Matrix v = Matrix::Zero(1, 1);
    AdamSlot slot;
    adam_step(v, Matrix::Constant(1, 1, 1.0), slot, 0.0005);
    CHECK(v(0, 0) == doctest::Approx(-0.0005 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("constant gradient approaches lr-sized updates") {
    Matrix v = Matrix::Zero(1, 1);
    AdamSlot slot;
    double lr = 0.0005;
    double prev = 0.0;
    double delta = 0.0;
    for (int i = 0; i < 500; ++i) {
      prev = v(0, 0);
      adam_step(v, Matrix::Constant(1, 1, 0.37), slot, lr);
      delta = std::abs(v(0, 0) - prev);
    }
    CHECK(delta == doctest::Approx(lr).epsilon(1e-3));
  }
}

TEST_CASE("deterministic trajectories") {
  auto run = [] {
    Rng rng = make_rng(42, 0);
    Parameter w = Parameter("w", init_uniform(rng, 3, 3, 3), TensorShape::matrix(3, 3));
    Matrix x = random_matrix(rng, 3, 2);
    Adam opt(0.01);
    opt.add_param(&w);
    for (int step = 0; step < 25; ++step) {
      Tape t;
      Tensor y = matmul(t.watch(w), t.constant(x));
      GradMap g = t.backward(mean_all(hadamard(y, y)));
      opt.step(g);
    }
    return w.value;
  };
  Matrix a = run();
  Matrix b = run();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 9) == 0);
}

TEST_CASE("contract violations and domain errors") {
  Tape t;
  Tensor a = t.constant(Matrix::Zero(2, 3));
  Tensor b = t.constant(Matrix::Zero(2, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"),
                       ContractViolation);
  CHECK_THROWS_AS(add(a, b), ContractViolation);
  CHECK_THROWS_AS(log(t.constant(Matrix::Constant(1, 1, -1.0))), DomainError);
  CHECK_THROWS_AS(log(t.constant(Matrix::Zero(1, 1))), DomainError);
  Matrix nan_m = Matrix::Constant(2, 1, std::nan(""));
  CHECK_THROWS_AS(softmax(t.input(nan_m, TensorShape::vector(2), false)),
                  DomainError);

  // backward demands a true scalar
  Tape t2;
  Parameter p = make_param("p", Matrix::Ones(2, 1), TensorShape::vector(2));
  Tensor v = t2.watch(p);
  CHECK_THROWS_AS(t2.backward(v), ContractViolation);

  // a consumed tape refuses further recording until reset
  Tape t3;
  Parameter q = make_param("q", Matrix::Ones(1, 1), TensorShape::scalar());
  Tensor s = t3.watch(q);
  t3.backward(mean_all(s));
  CHECK_THROWS_AS(scalar_mul(s, 2.0), ContractViolation);
  t3.reset();
  CHECK_NOTHROW(t3.constant_scalar(1.0));
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Tape t;
  Parameter p = make_param("x", Matrix::Constant(1, 1, 3.0), TensorShape::scalar());
  Tensor x = t.watch(p);
  // f = x*x + x  ->  f' = 2x + 1 = 7
  Tensor f = add(hadamard(x, x), x);
  GradMap g = t.backward(mean_all(f));
  CHECK(g["x"](0, 0) == doctest::Approx(7.0));
}

TEST_CASE("no-grad tapes record values only") {
  Tape t;
  t.set_grad_enabled(false);
  Parameter p = make_param("x", Matrix::Ones(2, 1), TensorShape::vector(2));
  Tensor x = t.watch(p);
  Tensor y = mean_all(sigmoid(x));
  CHECK(y.scalar() == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK_THROWS_AS(t.backward(y), ContractViolation);
}
