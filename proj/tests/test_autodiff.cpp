#include <cmath>
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "unilp/autodiff.hpp"
#include "unilp/errors.hpp"
#include "unilp/rng.hpp"

using namespace unilp;
using namespace unilp::ad;

namespace {

using Build = std::function<Var(Tape&)>;

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) { return normal_tensor(rng, r, c, 1.0); }

// Reduces a matrix to a scalar through fixed random projections.
Var project(Tape& t, Var x, std::uint64_t seed) {
  Rng rng(seed);
  Var left = t.constant(random_tensor(rng, 1, x.rows()));
  Var right = t.constant(random_tensor(rng, x.cols(), 1));
  return matmul(matmul(left, x), right);
}

double grad_error(ParamStore& ps, const Build& build) {
  Tape tape(&ps);
  Var loss = build(tape);
  tape.backward(loss);
  const Grads analytic = tape.param_grads();
  auto value = [&](const ParamStore& p) {
    Tape t(&p, false);
    return build(t).item();
  };
  const auto r = finite_difference_check(ps, value, analytic);
  CHECK(r.compared > 0);
  return r.max_rel_error;
}

ParamStore two_params(std::uint64_t seed, std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc) {
  Rng rng(seed);
  ParamStore ps;
  ps.add("a", random_tensor(rng, ar, ac));
  ps.add("b", random_tensor(rng, br, bc));
  return ps;
}

}  // namespace

TEST_CASE("primitive values") {
  Tape t;
  auto v = [&](std::vector<double> xs) {
    const std::size_t n = xs.size();
    return t.constant(Tensor(1, n, std::move(xs)));
  };
  const auto sm = softmax(v({0, 0, 0})).value();
  for (double x : sm.data) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(leaky_relu(v({-2}), 0.01).item() == doctest::Approx(-0.02));
  CHECK(bce(v({0.5}), 1.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce(v({0.0}), 0.0).item() == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(std::isfinite(bce(v({0.0}), 1.0).item()));
  CHECK(sigmoid(v({0})).item() == 0.5);
  CHECK(sum(v({1, 2, 3})).item() == 6.0);
  const auto m = matmul(t.constant(Tensor(2, 2, {1, 2, 3, 4})), t.constant(Tensor(2, 1, {1, 1}))).value();
  CHECK(m.data == std::vector<double>{3, 7});
  const auto nm = neighbor_mean(t.constant(Tensor(3, 1, {1, 2, 4})), std::vector<std::uint32_t>{0, 2, 2, 3},
                                std::vector<std::uint32_t>{1, 2, 0})
                      .value();
  CHECK(nm.data == std::vector<double>{3, 0, 1});
  const auto sg = segment_mean(t.constant(Tensor(3, 1, {1, 2, 4})), std::vector<std::uint32_t>{0, 2, 3}).value();
  CHECK(sg.data == std::vector<double>{1.5, 4});
}

TEST_CASE("softmax is shift invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Tensor x = random_tensor(rng, 2, 7);
    Tensor y = x;
    const double c = rng.uniform(-50, 50);
    for (double& e : y.data) e += c;
    const auto a = softmax(t.constant(x)).value();
    const auto b = softmax(t.constant(y)).value();
    double row0 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-12);
    for (std::size_t j = 0; j < 7; ++j) row0 += a(0, j);
    CHECK(row0 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("shape errors and non-finite values") {
  Tape t;
  Var a = t.constant(Tensor(2, 3, 1.0));
  CHECK_THROWS_AS(matmul(a, a), NumericError);
  CHECK_THROWS_AS(add(a, t.constant(Tensor(3, 2))), NumericError);
  CHECK_THROWS_AS(slice_cols(a, 2, 5), NumericError);
  CHECK_THROWS_AS(t.backward(a), NumericError);
  Var big = t.constant(Tensor(1, 1, 1e200));
  CHECK_THROWS_AS(matmul(big, big), NumericError);
  CHECK_THROWS_AS(t.constant(Tensor(1, 1, std::nan(""))), NumericError);
}

TEST_CASE("primitive gradients match central differences") {
  const std::uint32_t idx[] = {2, 0, 2, 1};
  const std::uint32_t offsets[] = {0, 2, 3, 3, 5};
  const std::uint32_t nbrs[] = {1, 3, 0, 0, 1};
  const std::uint32_t segs[] = {0, 1, 4};
  struct Case {
    const char* name;
    std::size_t ar, ac, br, bc;
    Build build;
  };
  const std::vector<Case> cases = {
      {"matmul", 3, 4, 4, 2, [](Tape& t) { return project(t, matmul(t.param(0), t.param(1)), 1); }},
      {"add", 3, 4, 3, 4, [](Tape& t) { return project(t, add(t.param(0), t.param(1)), 2); }},
      {"add_row", 3, 4, 1, 4, [](Tape& t) { return project(t, add_row(t.param(0), t.param(1)), 3); }},
      {"scale", 3, 4, 1, 1, [](Tape& t) { return project(t, scale(t.param(0), -1.7), 4); }},
      {"concat", 3, 2, 3, 5, [](Tape& t) { return project(t, concat_cols(t.param(0), t.param(1)), 5); }},
      {"slice_cols", 3, 6, 1, 1, [](Tape& t) { return project(t, slice_cols(t.param(0), 1, 4), 6); }},
      {"repeat_rows", 1, 4, 1, 1, [](Tape& t) { return project(t, repeat_rows(t.param(0), 3), 7); }},
      {"transpose", 3, 4, 1, 1, [](Tape& t) { return project(t, transpose(t.param(0)), 8); }},
      {"mean_rows", 3, 4, 1, 1, [](Tape& t) { return project(t, mean_rows(t.param(0)), 9); }},
      {"sum", 3, 4, 1, 1, [](Tape& t) { return scale(sum(t.param(0)), 0.3); }},
      {"leaky_relu", 3, 4, 1, 1, [](Tape& t) { return project(t, leaky_relu(t.param(0), 0.01), 10); }},
      {"sigmoid", 3, 4, 1, 1, [](Tape& t) { return project(t, sigmoid(t.param(0)), 11); }},
      {"softmax", 3, 4, 1, 1, [](Tape& t) { return project(t, softmax(t.param(0)), 12); }},
      {"embed_lookup", 3, 4, 1, 1, [&](Tape& t) { return project(t, embed_lookup(t.param(0), idx), 13); }},
      {"stack_rows", 1, 4, 1, 4,
       [](Tape& t) {
         const Var rows[] = {t.param(0), t.param(1), t.param(0)};
         return project(t, stack_rows(rows), 14);
       }},
      {"neighbor_mean", 4, 3, 1, 1,
       [&](Tape& t) { return project(t, neighbor_mean(t.param(0), offsets, nbrs), 15); }},
      {"segment_mean", 4, 3, 1, 1, [&](Tape& t) { return project(t, segment_mean(t.param(0), segs), 16); }},
      {"slice_rows", 4, 3, 1, 1, [](Tape& t) { return project(t, slice_rows(t.param(0), 1, 3), 17); }},
      {"bce", 1, 1, 1, 1, [](Tape& t) { return add(bce(sigmoid(t.param(0)), 1.0), bce(sigmoid(t.param(1)), 0.0)); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CAPTURE(c.name);
      ParamStore ps = two_params(100 + seed, c.ar, c.ac, c.br, c.bc);
      CHECK(grad_error(ps, c.build) < 1e-6);
    }
  }
}

TEST_CASE("backward edge cases") {
  ParamStore ps = two_params(1, 2, 2, 1, 1);
  Tape t(&ps);
  Var c = t.constant(Tensor(1, 1, 4.0));
  t.backward(c);
  for (const auto& g : t.param_grads()) {
    for (double x : g.data) CHECK(x == 0.0);
  }
  Tape u(&ps);
  CHECK(u.param("a").id() == u.param(0).id());
  CHECK_THROWS(u.param("missing"));

  // sum(W x) w.r.t. W is x broadcast across rows
  ParamStore w;
  w.add("w", Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  Tape v(&w);
  Var x = v.constant(Tensor(3, 1, {0.5, -1, 2}));
  v.backward(sum(matmul(v.param(0), x)));
  CHECK(v.param_grads()[0].data == std::vector<double>{0.5, -1, 2, 0.5, -1, 2});
}

TEST_CASE("optimizer steps") {
  ParamStore ps;
  ps.add("p", Tensor(1, 1, 1.0));
  OptimState sgd{OptimizerKind::Sgd, 0.1};
  step(sgd, ps, {Tensor(1, 1, 2.0)});
  CHECK(ps["p"].data[0] == doctest::Approx(0.8).epsilon(1e-15));

  ParamStore pa;
  pa.add("p", Tensor(1, 1, 1.0));
  OptimState adam{OptimizerKind::Adam, 0.1};
  step(adam, pa, {Tensor(1, 1, 1.0)});
  CHECK(pa["p"].data[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));

  ParamStore z;
  z.add("p", Tensor(2, 2, 3.0));
  OptimState s2{OptimizerKind::Sgd, 0.5};
  OptimState a2{OptimizerKind::Adam, 0.5};
  step(s2, z, {Tensor(2, 2, 0.0)});
  CHECK(z["p"].data == std::vector<double>(4, 3.0));
  step(a2, z, {Tensor(2, 2, 0.0)});
  for (double x : z["p"].data) CHECK(std::abs(x - 3.0) <= 1e-12);

  OptimState bad{OptimizerKind::Adam, 0.1};
  CHECK_THROWS_AS(step(bad, z, {Tensor(2, 2, std::nan(""))}), NumericError);
  CHECK(z["p"].data == std::vector<double>(4, 3.0));
  CHECK_THROWS_AS(step(bad, z, {Tensor(1, 2, 0.0)}), NumericError);
}

TEST_CASE("training steps are bit-reproducible") {
  auto run = [] {
    ParamStore ps = two_params(9, 3, 4, 4, 1);
    OptimState opt;
    opt.lr = 0.01;
    for (int i = 0; i < 25; ++i) {
      Tape t(&ps);
      Var loss = project(t, leaky_relu(matmul(t.param(0), t.param(1))), 3);
      t.backward(loss);
      step(opt, ps, t.param_grads());
    }
    return ps;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  ParamStore ps = two_params(5, 3, 3, 1, 7);
  const auto path = std::filesystem::temp_directory_path() / "unilp_ckpt_test.json";
  save_checkpoint(path, {{"note", "x"}}, ps);
  auto [config, loaded] = load_checkpoint(path);
  CHECK(config["note"] == "x");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& a = ps[ps.name(i)];
    const auto& b = loaded[ps.name(i)];
    REQUIRE(a.shape() == b.shape());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a.data[j] - b.data[j]) <= 1e-12);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint("/nonexistent/ckpt.json"));
}
