#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mphil/rng.hpp"
#include "mphil/tape.hpp"
#include "test_util.hpp"

using namespace mphil;
using mphil::test::fd_check;
using mphil::test::random_tensor;

namespace {

/// Scalar-loop segment_sum used as the independent oracle.
Tensor segment_sum_oracle(const Tensor& values, const std::vector<std::size_t>& ids,
                          std::size_t num_segments) {
  Tensor out(num_segments, values.cols());
  for (std::size_t e = 0; e < ids.size(); ++e)
    for (std::size_t j = 0; j < values.cols(); ++j)
      out.at(ids[e], j) += values.at(e, j);
  return out;
}

/// FD-checks d(sum(op(x) .* r))/dx for a single-input op.
test::FdReport fd_check_unary_graph(const std::function<Var(Tape&, Var)>& op,
                                    const Tensor& x, const Tensor& r) {
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var vx = t.leaf(in[0], true);
    Var y = op(t, vx);
    Var s = t.sum_all(t.mul(y, t.constant(r)));
    return t.value(s).data()[0];
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var vx = t.leaf(in[0], true);
    Var y = op(t, vx);
    Var s = t.sum_all(t.mul(y, t.constant(r)));
    t.backward(s);
    return std::vector<Tensor>{t.grad(vx)};
  };
  return fd_check(f, analytic, {x});
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tape t;
  Var i2 = t.constant(Tensor{{1, 0}, {0, 1}});
  Var x = t.constant(Tensor{{3, -2}, {5, 7}});
  CHECK(t.value(t.matmul(i2, x)).values() == t.value(x).values());

  Var a = t.constant(Tensor{{1, 2}, {3, 4}});
  Var b = t.constant(Tensor{{0}, {1}});
  const Tensor& c = t.value(t.matmul(a, b));
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);
  CHECK(c.at(0, 0) == doctest::Approx(2.0));
  CHECK(c.at(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Tensor(5, 4));
  Var b = t.constant(Tensor(3, 2));
  CHECK_THROWS_WITH_AS(t.matmul(a, b),
                       doctest::Contains("[5x4]"), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
  RngStream rng(11);
  Tensor a = random_tensor(5, 4, rng);
  Tensor b = random_tensor(4, 3, rng);
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var va = t.leaf(in[0], true);
    Var vb = t.leaf(in[1], true);
    return t.value(t.sum_all(t.matmul(va, vb))).data()[0];
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var va = t.leaf(in[0], true);
    Var vb = t.leaf(in[1], true);
    t.backward(t.sum_all(t.matmul(va, vb)));
    return std::vector<Tensor>{t.grad(va), t.grad(vb)};
  };
  CHECK(fd_check(f, analytic, {a, b}).max_rel_err < 1e-6);
}

TEST_CASE("unary ops: fixed points") {
  Tape t;
  Var x = t.constant(Tensor::row({0.0, -3.0, 3.0}));
  const Tensor& sig = t.value(t.sigmoid(x));
  CHECK(sig.at(0, 0) == doctest::Approx(0.5));
  const Tensor& rel = t.value(t.relu(x));
  CHECK(rel.at(0, 1) == 0.0);
  CHECK(rel.at(0, 2) == 3.0);
}

TEST_CASE("log rejects non-positive entries naming the index") {
  Tape t;
  Var x = t.constant(Tensor::row({1.0, 0.0}));
  CHECK_THROWS_WITH_AS(t.log(x), doctest::Contains("index 1"), std::domain_error);
}

TEST_CASE("unary gradients vs finite differences") {
  RngStream rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor x = random_tensor(3, 3, rng);
    Tensor r = random_tensor(3, 3, rng);
    auto expu = [](Tape& t, Var v) { return t.exp(v); };
    CHECK(fd_check_unary_graph(expu, x, r).max_rel_err < 1e-6);
    auto sig = [](Tape& t, Var v) { return t.sigmoid(v); };
    CHECK(fd_check_unary_graph(sig, x, r).max_rel_err < 1e-6);
    Tensor xpos = random_tensor(3, 3, rng, 0.2, 2.0);
    auto lg = [](Tape& t, Var v) { return t.log(v); };
    CHECK(fd_check_unary_graph(lg, xpos, r).max_rel_err < 1e-6);
  }
}

TEST_CASE("softmax_rows: symmetry, closed form, normalization") {
  Tape t;
  Var eq = t.constant(Tensor::row({4.2, 4.2, 4.2}));
  const Tensor& u = t.value(t.softmax_rows(eq));
  for (std::size_t j = 0; j < 3; ++j) CHECK(u.at(0, j) == doctest::Approx(1.0 / 3));

  Var x = t.constant(Tensor::row({0.0, std::log(3.0)}));
  const Tensor& y = t.value(t.softmax_rows(x));
  CHECK(y.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  RngStream rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Var xr = t.constant(random_tensor(4, 5, rng, -30.0, 30.0));
    const Tensor& yr = t.value(t.softmax_rows(xr));
    for (std::size_t i = 0; i < yr.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < yr.cols(); ++j) s += yr.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax_rows gradient vs finite differences") {
  RngStream rng(5);
  Tensor x = random_tensor(3, 4, rng);
  Tensor r = random_tensor(3, 4, rng);
  auto op = [](Tape& t, Var v) { return t.softmax_rows(v); };
  CHECK(fd_check_unary_graph(op, x, r).max_rel_err < 1e-6);
}

TEST_CASE("l2_normalize_rows: 3-4-5 triangle, idempotence, degenerate row") {
  Tape t;
  Var v = t.constant(Tensor::row({3.0, 4.0}));
  const Tensor& y = t.value(t.l2_normalize_rows(v));
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  Var once = t.l2_normalize_rows(t.constant(Tensor::row({-2.0, 1.0, 0.5})));
  Var twice = t.l2_normalize_rows(once);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(std::abs(t.value(twice).at(0, j) - t.value(once).at(0, j)) <= 1e-12);

  Var zero = t.constant(Tensor::row({0.0, 0.0}));
  CHECK_THROWS_AS(t.l2_normalize_rows(zero), std::domain_error);
}

TEST_CASE("l2_normalize_rows: unit norms and gradient check") {
  RngStream rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = random_tensor(4, 6, rng, -2.0, 2.0);
    Tape t;
    const Tensor& y = t.value(t.l2_normalize_rows(t.constant(x)));
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) sq += y.at(i, j) * y.at(i, j);
      CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-9);
    }
    Tensor r = random_tensor(4, 6, rng);
    auto op = [](Tape& tt, Var v) { return tt.l2_normalize_rows(v); };
    CHECK(fd_check_unary_graph(op, x, r).max_rel_err < 1e-6);
  }
}

TEST_CASE("segment_sum: hand case, loop oracle, index error") {
  Tape t;
  Var v = t.constant(Tensor{{1}, {2}, {3}});
  const Tensor& out = t.value(t.segment_sum(v, {0, 1, 0}, 2));
  CHECK(out.at(0, 0) == 4.0);
  CHECK(out.at(1, 0) == 2.0);

  // single segment == column-wise total
  Var w = t.constant(Tensor{{1, 2}, {3, 4}, {5, 6}});
  const Tensor& tot = t.value(t.segment_sum(w, {0, 0, 0}, 1));
  CHECK(tot.at(0, 0) == 9.0);
  CHECK(tot.at(0, 1) == 12.0);

  CHECK_THROWS_AS(t.segment_sum(v, {0, 2, 0}, 2), std::out_of_range);

  RngStream rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t e = 1 + rng.uniform_index(12);
    const std::size_t segs = 1 + rng.uniform_index(5);
    const std::size_t d = 1 + rng.uniform_index(4);
    Tensor vals = random_tensor(e, d, rng);
    std::vector<std::size_t> ids(e);
    for (auto& id : ids) id = rng.uniform_index(segs);
    Tape tt;
    const Tensor& got = tt.value(tt.segment_sum(tt.constant(vals), ids, segs));
    const Tensor want = segment_sum_oracle(vals, ids, segs);
    CHECK(got.values() == want.values());  // exact: same summation order
  }
}

TEST_CASE("segment_sum backward scatters to source rows") {
  RngStream rng(17);
  Tensor vals = random_tensor(6, 3, rng);
  Tensor r = random_tensor(3, 3, rng);
  std::vector<std::size_t> ids{2, 0, 1, 0, 2, 2};
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var v = t.leaf(in[0], true);
    Var s = t.sum_all(t.mul(t.segment_sum(v, ids, 3), t.constant(r)));
    return t.value(s).data()[0];
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var v = t.leaf(in[0], true);
    Var s = t.sum_all(t.mul(t.segment_sum(v, ids, 3), t.constant(r)));
    t.backward(s);
    return std::vector<Tensor>{t.grad(v)};
  };
  CHECK(fd_check(f, analytic, {vals}).max_rel_err < 1e-6);
}

TEST_CASE("reduce: mean, max tie rule, gradients") {
  Tape t;
  Var x = t.constant(Tensor::row({2.0, 4.0}));
  CHECK(t.value(t.reduce(ReduceKind::mean, x, Axis::cols)).at(0, 0) == 3.0);

  Var ties = t.leaf(Tensor::row({1.0, 5.0, 5.0}), true);
  Var mx = t.reduce(ReduceKind::max, ties, Axis::cols);
  CHECK(t.value(mx).at(0, 0) == 5.0);
  t.backward(mx);
  Tensor g = t.grad(ties);
  CHECK(g.at(0, 0) == 0.0);
  CHECK(g.at(0, 1) == 1.0);  // first of the tied entries
  CHECK(g.at(0, 2) == 0.0);

  // mean gradient = 1/n per entry
  RngStream rng(21);
  Tensor xr = random_tensor(4, 5, rng);
  Tape t2;
  Var vx = t2.leaf(xr, true);
  t2.backward(t2.sum_all(t2.reduce(ReduceKind::mean, vx, Axis::rows)));
  Tensor gm = t2.grad(vx);
  for (std::size_t i = 0; i < gm.size(); ++i)
    CHECK(gm.data()[i] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor r = random_tensor(1, 5, rng);
  auto op = [](Tape& tt, Var v) { return tt.reduce(ReduceKind::max, v, Axis::rows); };
  CHECK(fd_check_unary_graph(op, xr, r).max_rel_err < 1e-6);
}

TEST_CASE("reduce on an empty axis throws") {
  Tape t;
  Var empty = t.constant(Tensor(0, 3));
  CHECK_THROWS_AS(t.reduce(ReduceKind::sum, empty, Axis::rows), std::invalid_argument);
}

TEST_CASE("backward: ones for sum, 2x for sum of squares, fan-out adds") {
  Tape t;
  Var x = t.leaf(Tensor{{1.0, -2.0}, {0.5, 3.0}}, true);
  t.backward(t.sum_all(x));
  Tensor g = t.grad(x);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 1.0);

  Tape t2;
  Var x2 = t2.leaf(Tensor{{1.0, -2.0}, {0.5, 3.0}}, true);
  t2.backward(t2.sum_all(t2.mul(x2, x2)));  // x feeds both mul inputs
  Tensor g2 = t2.grad(x2);
  CHECK(g2.at(0, 0) == doctest::Approx(2.0));
  CHECK(g2.at(0, 1) == doctest::Approx(-4.0));
  CHECK(g2.at(1, 0) == doctest::Approx(1.0));
  CHECK(g2.at(1, 1) == doctest::Approx(6.0));

  // two-consumer fan-out equals the sum of both paths
  Tape t3;
  Var x3 = t3.leaf(Tensor::row({2.0}), true);
  Var double_use = t3.add(t3.scale(x3, 3.0), t3.mul(x3, x3));  // 3x + x^2
  t3.backward(t3.sum_all(double_use));
  CHECK(t3.grad(x3).at(0, 0) == doctest::Approx(3.0 + 2.0 * 2.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Var x = t.leaf(Tensor(2, 2), true);
  CHECK_THROWS_WITH_AS(t.backward(x), doctest::Contains("[2x2]"), std::invalid_argument);
}

TEST_CASE("non-finite values are rejected at creation") {
  CHECK_THROWS_AS(Tensor(1, 1, {std::numeric_limits<double>::quiet_NaN()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor(1, 1, {std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
}

TEST_CASE("misc op gradients: transpose, div_colvec, scalar_mul, add_rowvec, clamp_min") {
  RngStream rng(31);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(3, 1, rng, 0.5, 2.0);
  Tensor bias = random_tensor(1, 4, rng);
  Tensor s = random_tensor(1, 1, rng, 0.5, 1.5);
  Tensor r = random_tensor(3, 4, rng);

  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var va = t.leaf(in[0], true);
    Var vb = t.leaf(in[1], true);
    Var vbias = t.leaf(in[2], true);
    Var vs = t.leaf(in[3], true);
    Var y = t.div_colvec(t.add_rowvec(t.scalar_mul(vs, va), vbias), vb);
    Var z = t.transpose(t.clamp_min(y, -0.2));
    return t.value(t.sum_all(t.mul(z, t.constant(r)))).data()[0];
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var va = t.leaf(in[0], true);
    Var vb = t.leaf(in[1], true);
    Var vbias = t.leaf(in[2], true);
    Var vs = t.leaf(in[3], true);
    Var y = t.div_colvec(t.add_rowvec(t.scalar_mul(vs, va), vbias), vb);
    Var z = t.transpose(t.clamp_min(y, -0.2));
    t.backward(t.sum_all(t.mul(z, t.constant(r))));
    return std::vector<Tensor>{t.grad(va), t.grad(vb), t.grad(vbias), t.grad(vs)};
  };
  // r is [3x4] but z is [4x3]; fix by multiplying with transposed constant
  Tensor rt(4, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) rt.at(j, i) = r.at(i, j);
  r = rt;
  CHECK(fd_check(f, analytic, {a, b, bias, s}).max_rel_err < 1e-6);
}

TEST_CASE("gather and concat gradients") {
  RngStream rng(37);
  Tensor x = random_tensor(5, 3, rng);
  std::vector<std::size_t> ids{4, 0, 0, 2};
  Tensor r = random_tensor(4 + 5, 3, rng);
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var v = t.leaf(in[0], true);
    Var g = t.gather_rows(v, ids);
    Var c = t.concat_rows({g, v});
    return t.value(t.sum_all(t.mul(c, t.constant(r)))).data()[0];
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var v = t.leaf(in[0], true);
    Var g = t.gather_rows(v, ids);
    Var c = t.concat_rows({g, v});
    t.backward(t.sum_all(t.mul(c, t.constant(r))));
    return std::vector<Tensor>{t.grad(v)};
  };
  CHECK(fd_check(f, analytic, {x}).max_rel_err < 1e-6);

  CHECK_THROWS_AS(
      [&] {
        Tape t;
        Var v = t.constant(x);
        t.gather_rows(v, {7});
      }(),
      std::out_of_range);
}
