#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mphil/losses.hpp"
#include "test_util.hpp"

using namespace mphil;
using mphil::test::fd_check;
using mphil::test::random_tensor;
using mphil::test::random_unit_rows;

namespace {

BankVars bank_from_blocks(Tape& tape, const std::vector<Tensor>& blocks,
                          bool requires_grad) {
  BankVars bank;
  for (const Tensor& b : blocks) bank.class_protos.push_back(tape.leaf(b, requires_grad));
  return bank;
}

}  // namespace

TEST_CASE("loss_ipm: closed forms") {
  // one sample sitting on its lone true-class prototype, wrong class antipodal
  Tape t;
  Tensor mu0{{1.0, 0.0}};
  Tensor mu1{{-1.0, 0.0}};
  BankVars bank = bank_from_blocks(t, {mu0, mu1}, false);
  Var zhat = t.constant(Tensor{{1.0, 0.0}});
  Var loss = loss_ipm(t, zhat, {0}, bank, 1.0);
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)));
  CHECK(t.value(loss).at(0, 0) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(t.value(loss).at(0, 0) == doctest::Approx(0.126928).epsilon(1e-4));

  // equidistant from the only two prototypes -> ln 2
  Tape t2;
  BankVars b2 = bank_from_blocks(t2, {Tensor{{1.0, 0.0}}, Tensor{{0.0, 1.0}}}, false);
  Var zeq = t2.constant(Tensor{{std::sqrt(0.5), std::sqrt(0.5)}});
  CHECK(t2.value(loss_ipm(t2, zeq, {0}, b2, 1.0)).at(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_ipm: positive, monotone in the true-class similarity") {
  RngStream rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tape t;
    std::vector<Tensor> blocks = {random_unit_rows(2, 4, rng), random_unit_rows(2, 4, rng)};
    BankVars bank = bank_from_blocks(t, blocks, false);
    Tensor z = random_unit_rows(3, 4, rng);
    Var loss = loss_ipm(t, t.constant(z), {0, 1, 0}, bank, 0.5);
    CHECK(t.value(loss).at(0, 0) > 0.0);
  }

  // nudging z toward its true prototype lowers the loss
  Tape t;
  std::vector<Tensor> blocks = {Tensor{{1.0, 0.0}}, Tensor{{0.0, 1.0}}};
  BankVars bank = bank_from_blocks(t, blocks, false);
  auto eval = [&](double x) {
    Tape tt;
    BankVars b = bank_from_blocks(tt, blocks, false);
    Tensor z(1, 2);
    z.at(0, 0) = x;
    z.at(0, 1) = std::sqrt(1.0 - x * x);
    return tt.value(loss_ipm(tt, tt.constant(z), {0}, b, 1.0)).at(0, 0);
  };
  double prev = eval(0.1);
  for (double x : {0.3, 0.5, 0.7, 0.9}) {
    const double cur = eval(x);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("loss_ps: closed form, class swap symmetry, K = 1 fallback") {
  // identical same-class prototypes, orthogonal cross-class pairs, tau = 1
  Tensor c0{{1.0, 0.0}, {1.0, 0.0}};
  Tensor c1{{0.0, 1.0}, {0.0, 1.0}};
  Tape t;
  BankVars bank = bank_from_blocks(t, {c0, c1}, false);
  const double expect = std::log(2.0) - 1.0;  // -log(e / 2)
  CHECK(t.value(loss_ps(t, bank, 1.0)).at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(t.value(loss_ps(t, bank, 1.0)).at(0, 0) == doctest::Approx(-0.30685).epsilon(1e-4));

  // swapping the class blocks leaves the loss unchanged
  RngStream rng(5);
  std::vector<Tensor> blocks = {random_unit_rows(3, 4, rng), random_unit_rows(3, 4, rng)};
  Tape ta, tb;
  BankVars ba = bank_from_blocks(ta, {blocks[0], blocks[1]}, false);
  BankVars bb = bank_from_blocks(tb, {blocks[1], blocks[0]}, false);
  CHECK(ta.value(loss_ps(ta, ba, 0.5)).at(0, 0) ==
        doctest::Approx(tb.value(loss_ps(tb, bb, 0.5)).at(0, 0)).epsilon(1e-12));

  // K = 1: numerator replaced by exp(1/tau), flagged in stats
  Tape tk;
  LossStats stats;
  BankVars bk = bank_from_blocks(tk, {Tensor{{1.0, 0.0}}, Tensor{{0.0, 1.0}}}, false);
  Var l = loss_ps(tk, bk, 1.0, &stats);
  CHECK(stats.ps_k1_fallback);
  // each term: -log(e / exp(0)) = -1
  CHECK(tk.value(l).at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("loss_ps gradient vs finite differences") {
  RngStream rng(7);
  std::vector<Tensor> blocks = {random_unit_rows(2, 4, rng), random_unit_rows(2, 4, rng)};
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    BankVars bank = bank_from_blocks(t, in, true);
    return t.value(loss_ps(t, bank, 0.5)).at(0, 0);
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    BankVars bank = bank_from_blocks(t, in, true);
    t.backward(loss_ps(t, bank, 0.5));
    return std::vector<Tensor>{t.grad(bank.class_protos[0]), t.grad(bank.class_protos[1])};
  };
  CHECK(fd_check(f, analytic, blocks).max_rel_err < 1e-4);
}

TEST_CASE("loss_ipm gradient vs finite differences") {
  RngStream rng(9);
  std::vector<Tensor> inputs = {random_unit_rows(3, 4, rng), random_unit_rows(2, 4, rng),
                                random_unit_rows(2, 4, rng)};
  std::vector<int> labels{0, 1, 1};
  auto f = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var z = t.leaf(in[0], true);
    BankVars bank = bank_from_blocks(t, {in[1], in[2]}, true);
    return t.value(loss_ipm(t, z, labels, bank, 0.5)).at(0, 0);
  };
  auto analytic = [&](const std::vector<Tensor>& in) {
    Tape t;
    Var z = t.leaf(in[0], true);
    BankVars bank = bank_from_blocks(t, {in[1], in[2]}, true);
    t.backward(loss_ipm(t, z, labels, bank, 0.5));
    return std::vector<Tensor>{t.grad(z), t.grad(bank.class_protos[0]),
                               t.grad(bank.class_protos[1])};
  };
  CHECK(fd_check(f, analytic, inputs).max_rel_err < 1e-4);
}

TEST_CASE("loss_cls: perfect prediction, uniform prediction, loop oracle") {
  Tape t;
  Tensor perfect{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(t.value(loss_cls(t, t.constant(perfect), {0, 1})).at(0, 0) ==
        doctest::Approx(0.0).epsilon(1e-12));

  const std::size_t C = 3;
  Tensor uniform = Tensor::full(4, C, 1.0 / C);
  // (ln C)/C per sample under the 1/(BC) normalization
  CHECK(t.value(loss_cls(t, t.constant(uniform), {0, 1, 2, 0})).at(0, 0) ==
        doctest::Approx(std::log(double(C)) / C).epsilon(1e-12));

  RngStream rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t batch = 1 + rng.uniform_index(6);
    Tensor p = random_tensor(batch, C, rng, 0.01, 1.0);
    for (std::size_t i = 0; i < batch; ++i) {  // normalize rows
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += p.at(i, c);
      for (std::size_t c = 0; c < C; ++c) p.at(i, c) /= s;
    }
    std::vector<int> labels(batch);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_index(C));
    Tape tt;
    const double got = tt.value(loss_cls(tt, tt.constant(p), labels)).at(0, 0);
    double want = 0.0;
    for (std::size_t i = 0; i < batch; ++i) want += std::log(p.at(i, labels[i]));
    want *= -1.0 / static_cast<double>(batch * C);
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("loss_cls: clamped probabilities are counted and finite") {
  Tape t;
  Tensor p{{1.0, 0.0}};  // true class has probability zero
  LossStats stats;
  Var l = loss_cls(t, t.constant(p), {1}, &stats);
  CHECK(stats.cls_clamp_count == 1);
  CHECK(std::isfinite(t.value(l).at(0, 0)));
  CHECK(t.value(l).at(0, 0) > 0.0);
}

TEST_CASE("total_loss: degenerate beta, linearity, default") {
  Tape t;
  Var a = t.constant(Tensor::scalar(0.7));
  Var b = t.constant(Tensor::scalar(-0.2));
  Var c = t.constant(Tensor::scalar(0.4));
  CHECK(t.value(total_loss(t, a, b, c, 0.0)).at(0, 0) == doctest::Approx(0.5));
  const double l1 = t.value(total_loss(t, a, b, c, 0.3)).at(0, 0);
  Var a2 = t.constant(Tensor::scalar(1.4));
  Var b2 = t.constant(Tensor::scalar(-0.4));
  Var c2 = t.constant(Tensor::scalar(0.8));
  CHECK(t.value(total_loss(t, a2, b2, c2, 0.3)).at(0, 0) == doctest::Approx(2.0 * l1));
  CHECK_THROWS_AS(total_loss(t, a, b, c, -0.1), std::invalid_argument);
  CHECK(LossConfig{}.beta == 0.1);
}
