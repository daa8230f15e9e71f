#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "difftad/autodiff.hpp"
#include "difftad/rng.hpp"

using namespace difftad;
using ad::Mat;
using ad::Var;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

using GraphFn = std::function<Var(ad::Tape&, const std::vector<Var>&)>;

// Central finite differences of a scalar graph with respect to every entry of
// every input matrix.
void check_gradients(const GraphFn& fn, std::vector<Mat> inputs, double h = 1e-6,
                     double tol = 1e-6) {
  std::vector<Mat> analytic;
  {
    ad::Tape tape;
    std::vector<Var> vars;
    for (const Mat& m : inputs) vars.push_back(ad::constant(tape, m));
    Var loss = fn(tape, vars);
    REQUIRE(loss.rows() == 1);
    REQUIRE(loss.cols() == 1);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }
  auto value = [&](const std::vector<Mat>& ins) {
    ad::Tape tape;
    std::vector<Var> vars;
    for (const Mat& m : ins) vars.push_back(ad::constant(tape, m));
    return fn(tape, vars).val()(0, 0);
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
        double orig = inputs[k](i, j);
        inputs[k](i, j) = orig + h;
        double fp = value(inputs);
        inputs[k](i, j) = orig - h;
        double fm = value(inputs);
        inputs[k](i, j) = orig;
        double num = (fp - fm) / (2.0 * h);
        double a = analytic[k](i, j);
        double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3});
        INFO("input ", k, " entry (", i, ",", j, "): analytic ", a, " numeric ", num);
        CHECK(rel < tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("value bookkeeping: add, sub, mul, scale") {
  ad::Tape tape;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  Var va = ad::constant(tape, a), vb = ad::constant(tape, b);
  CHECK(ad::add(va, vb).val()(1, 1) == 12.0);
  CHECK(ad::sub(va, vb).val()(0, 0) == -4.0);
  CHECK(ad::mul(va, vb).val()(0, 1) == 12.0);
  CHECK(ad::scale(va, 0.5).val()(1, 0) == 1.5);
  CHECK(ad::sum(va).val()(0, 0) == 10.0);
}

TEST_CASE("elementwise op gradients") {
  Rng rng(42);
  Mat a = random_mat(rng, 3, 4);
  Mat b = random_mat(rng, 3, 4).array() + 3.0;  // keep divisors/log args positive

  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::mul(v[0], v[1]));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::div(v[0], v[1]));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::sub(v[0], v[1])));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::exp_(ad::scale(v[0], 0.3)));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::log_(v[0]));
  }, {b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::sigmoid(v[0]));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::gelu(v[0]));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::abs_(v[0]));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::cwise_min(v[0], v[1]));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::cwise_max(v[0], v[1]));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::clamp_min(v[0], 0.1));
  }, {a});
}

TEST_CASE("matmul and shaping gradients") {
  Rng rng(43);
  Mat a = random_mat(rng, 3, 4);
  Mat b = random_mat(rng, 4, 2);
  Mat row = random_mat(rng, 1, 2);

  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::matmul(v[0], v[1]));
  }, {a, b});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::add_rowvec(ad::matmul(v[0], v[1]), v[2])));
  }, {a, b, row});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::transpose(v[0])));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::block(v[0], 1, 1, 2, 3)));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::concat_rows({v[0], v[0]})));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::concat_cols({v[0], v[0]})));
  }, {a});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::gather_rows(v[0], {2, 0, 2})));
  }, {a});
}

TEST_CASE("softmax, log-sum-exp and pick gradients") {
  Rng rng(44);
  Mat logits = random_mat(rng, 4, 5);
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::softmax_rows(v[0])));
  }, {logits});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::log_sum_exp_rows(v[0]));
  }, {logits});
  // cross-entropy shape: lse - picked logit
  std::vector<int> target{1, 0, 4, 2};
  check_gradients([target](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::sub(ad::log_sum_exp_rows(v[0]), ad::pick_per_row(v[0], target)));
  }, {logits});
}

TEST_CASE("softmax rows sum to one and cross-entropy is consistent") {
  Rng rng(45);
  Mat logits = random_mat(rng, 6, 4);
  ad::Tape tape;
  Var p = ad::softmax_rows(ad::constant(tape, logits));
  for (Eigen::Index i = 0; i < 6; ++i) {
    CHECK(p.val().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(p.val()(i, j) > 0.0);
  }
}

TEST_CASE("layer norm gradient and normalization") {
  Rng rng(46);
  Mat x = random_mat(rng, 3, 6);
  Mat gain = random_mat(rng, 1, 6).array() + 2.0;
  Mat bias = random_mat(rng, 1, 6);
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::layer_norm_rows(v[0], v[1], v[2])));
  }, {x, gain, bias});

  ad::Tape tape;
  Var ones = ad::constant(tape, Mat::Ones(1, 6));
  Var zeros = ad::constant(tape, Mat::Zero(1, 6));
  Var out = ad::layer_norm_rows(ad::constant(tape, x), ones, zeros);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(out.val().row(i).mean() == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("im2col3 windows and gradients") {
  Rng rng(47);
  Mat x = random_mat(rng, 5, 2);
  {
    ad::Tape tape;
    Var u = ad::im2col3(ad::constant(tape, x), 1);
    CHECK(u.rows() == 5);
    CHECK(u.cols() == 6);
    // first row is zero-padded on the left
    CHECK(u.val()(0, 0) == 0.0);
    CHECK(u.val()(0, 2) == x(0, 0));
    CHECK(u.val()(0, 4) == x(1, 0));
    Var v = ad::im2col3(ad::constant(tape, x), 2);
    CHECK(v.rows() == 3);  // ceil(5/2)
  }
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::im2col3(v[0], 1)));
  }, {x});
  check_gradients([](ad::Tape&, const std::vector<Var>& v) {
    return ad::sum(ad::square(ad::im2col3(v[0], 2)));
  }, {x});
}

TEST_CASE("composite attention-like graph gradient") {
  Rng rng(48);
  Mat q = random_mat(rng, 3, 4), k = random_mat(rng, 5, 4), v = random_mat(rng, 5, 4);
  check_gradients([](ad::Tape&, const std::vector<Var>& in) {
    Var scores = ad::scale(ad::matmul(in[0], ad::transpose(in[1])), 0.5);
    Var att = ad::matmul(ad::softmax_rows(scores), in[2]);
    return ad::sum(ad::square(att));
  }, {q, k, v}, 1e-6, 2e-6);
}

TEST_CASE("gradient accumulates over reused nodes") {
  ad::Tape tape;
  Mat a(1, 1);
  a << 3.0;
  Var x = ad::constant(tape, a);
  Var y = ad::add(ad::mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 7
  tape.backward(ad::sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("backward requires a scalar loss") {
  ad::Tape tape;
  Var x = ad::constant(tape, Mat::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}
