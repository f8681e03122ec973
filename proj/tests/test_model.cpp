#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "unilp/errors.hpp"
#include "unilp/model.hpp"
#include "unilp/rng.hpp"

using namespace unilp;
using namespace unilp::ad;

namespace {

ModelConfig small_config(std::size_t f = 8) {
  ModelConfig c;
  c.embed_dim = c.hidden_dim = c.attention_dim = c.mlp_hidden = f;
  return c;
}

// Labeled subgraphs of random pairs from one random graph.
std::vector<LabeledSubgraph> subgraph_pool(std::size_t count, std::uint64_t seed, std::uint32_t radius = 1) {
  const Graph g = testing::random_graph(30, 0.12, seed);
  Rng rng(seed + 1);
  std::vector<LabeledSubgraph> out;
  while (out.size() < count) {
    const auto u = static_cast<NodeId>(rng.uniform_index(30));
    const auto v = static_cast<NodeId>(rng.uniform_index(30));
    if (u != v) out.push_back(extract_labeled(g, {u, v}, {radius, true}));
  }
  return out;
}

ContextSet make_context(const std::vector<LabeledSubgraph>& pool, std::size_t n_pos, std::size_t n_neg,
                        std::size_t offset = 1) {
  ContextSet c;
  for (std::size_t i = 0; i < n_pos; ++i) c.positives.push_back(pool[(offset + i) % pool.size()]);
  for (std::size_t i = 0; i < n_neg; ++i) c.negatives.push_back(pool[(offset + n_pos + i) % pool.size()]);
  return c;
}

ContextSet flipped(const ContextSet& c) {
  ContextSet f = c;
  std::swap(f.positives, f.negatives);
  f.flipped = !c.flipped;
  return f;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("model config validation and JSON") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.radius = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.hidden_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.heads = 4;
  c.mode = ModelMode::NoContext;
  c.max_nodes_per_hop = 17;
  const ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  auto doc = to_json(c);
  doc["hidden_size"] = 3;
  CHECK_THROWS_AS(model_config_from_json(doc), ConfigError);
  CHECK(parse_mode("ICL") == ModelMode::InContext);
  CHECK(parse_mode(mode_name(ModelMode::NoContext)) == ModelMode::NoContext);
  CHECK_THROWS_AS(parse_mode("gat"), ConfigError);
}

TEST_CASE("parameter layout and adoption") {
  const ModelConfig c = small_config();
  const UniLP m(c, 3);
  CHECK(m.params()["embed"].shape() == std::vector<std::size_t>{c.vocab.size(), 8});
  CHECK(m.params()["attn.key"].shape() == std::vector<std::size_t>{16, 8});
  CHECK(m.params()["attn.value"].shape() == std::vector<std::size_t>{8, 8});
  CHECK(m.params()["label.plus"].shape() == std::vector<std::size_t>{1, 8});
  for (double x : m.params()["enc0.bias"].data) CHECK(x == 0.0);
  CHECK(UniLP(c, 3).params() == m.params());
  CHECK_FALSE(UniLP(c, 4).params() == m.params());

  const UniLP adopted(c, m.params());
  CHECK(adopted.params() == m.params());
  ModelConfig wider = c;
  wider.hidden_dim = 9;
  CHECK_THROWS_AS(UniLP(wider, m.params()), DataError);
}

TEST_CASE("attention weights sum to one") {
  const auto pool = subgraph_pool(60, 11);
  const UniLP m(small_config(), 5);
  for (std::size_t size : {1, 2, 3, 17, 60, 199, 400}) {
    const ContextSet ctx = make_context(pool, (size + 1) / 2, size / 2);
    const auto alpha = m.attention_weights(pool[0], ctx);
    REQUIRE(alpha.size() == size);
    double total = 0.0;
    for (double a : alpha) {
      CHECK(a >= 0.0);
      total += a;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("label flips leave attention unchanged but move the output") {
  const auto pool = subgraph_pool(40, 21);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const UniLP m(small_config(), seed);
    const ContextSet ctx = make_context(pool, 3, 4, seed + 1);
    const ContextSet f = flipped(ctx);
    // flipping reorders members: positives first in both
    auto a = m.attention_weights(pool[0], ctx);
    auto b = m.attention_weights(pool[0], f);
    std::rotate(b.begin(), b.begin() + 4, b.end());
    CHECK(a == b);
    CHECK(std::abs(m.predict_probability(pool[0], ctx) - m.predict_probability(pool[0], f)) > 1e-6);
  }
}

TEST_CASE("identical label vectors make labels irrelevant") {
  const auto pool = subgraph_pool(20, 31);
  UniLP m(small_config(), 2);
  m.params()["label.minus"] = m.params()["label.plus"];
  const ContextSet ctx = make_context(pool, 2, 3);
  // same members in the same order, only labels differ
  ContextSet relabeled;
  relabeled.positives = {ctx.positives[0]};
  relabeled.negatives = {ctx.positives[1]};
  for (const auto& s : ctx.negatives) relabeled.negatives.push_back(s);
  ContextSet all_neg;
  all_neg.negatives = relabeled.positives;
  for (const auto& s : relabeled.negatives) all_neg.negatives.push_back(s);
  CHECK(m.predict_probability(pool[0], relabeled) == doctest::Approx(m.predict_probability(pool[0], all_neg)).epsilon(1e-12));
}

TEST_CASE("contextualization algebra") {
  const auto pool = subgraph_pool(10, 41);
  const UniLP m(small_config(), 7);
  const Tensor& wv = m.params()["attn.value"];
  const Tensor& lp = m.params()["label.plus"];
  const Tensor& ln = m.params()["label.minus"];

  SUBCASE("identical members give uniform weights and the mean") {
    ContextSet ctx;
    ctx.positives = {pool[3], pool[3], pool[3]};
    Tape t(&m.params());
    const Var hq = m.encode(t, std::vector<const LabeledSubgraph*>{&pool[0]});
    const auto members = ctx.members();
    const Var hs = m.encode(t, members);
    const Var alpha = m.attention(t, hq, hs);
    for (double a : alpha.value().data) CHECK(a == doctest::Approx(1.0 / 3).epsilon(1e-14));
    const auto labels = ctx.labels();
    const Tensor got = m.contextualize(t, alpha, hs, labels).value();
    for (std::size_t j = 0; j < wv.cols; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < wv.rows; ++i) expect += (hs.value()(0, i) + lp(0, i)) * wv(i, j);
      CHECK(got(0, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("swapping two labels moves the output by alpha-weighted label gaps") {
    Tape t(&m.params());
    const Var hq = m.encode(t, std::vector<const LabeledSubgraph*>{&pool[0]});
    const Var hs = m.encode(t, std::vector<const LabeledSubgraph*>{&pool[1], &pool[2]});
    const Var alpha = m.attention(t, hq, hs);
    const std::uint8_t pn[] = {1, 0};
    const std::uint8_t np[] = {0, 1};
    const Tensor a = m.contextualize(t, alpha, hs, pn).value();
    const Tensor b = m.contextualize(t, alpha, hs, np).value();
    const double a0 = alpha.value().data[0], a1 = alpha.value().data[1];
    for (std::size_t j = 0; j < wv.cols; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < wv.rows; ++i) expect += (a1 - a0) * (lp(0, i) - ln(0, i)) * wv(i, j);
      CHECK(b(0, j) - a(0, j) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("single-head attend matches the explicit path bit-exactly") {
  const auto pool = subgraph_pool(12, 51);
  const UniLP m(small_config(), 9);
  Tape t(&m.params());
  const Var hq = m.encode(t, std::vector<const LabeledSubgraph*>{&pool[0]});
  const ContextSet ctx = make_context(pool, 3, 3);
  const Var hs = m.encode(t, ctx.members());
  const auto labels = ctx.labels();
  const Tensor direct = m.contextualize(t, m.attention(t, hq, hs), hs, labels).value();
  CHECK(m.attend(t, hq, hs, labels).value() == direct);

  ModelConfig four = small_config();
  four.heads = 4;
  const UniLP multi(four, 9);
  Tape u(&multi.params());
  const Var out = multi.attend(u, multi.encode(u, std::vector<const LabeledSubgraph*>{&pool[0]}),
                               multi.encode(u, ctx.members()), labels);
  CHECK(out.cols() == 8);
}

TEST_CASE("encoder ignores node numbering") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Graph g = testing::random_graph(25, 0.15, 600 + trial);
    const auto perm = testing::random_permutation(25, 800 + trial);
    const Graph h = testing::relabel(g, perm);
    const NodePair p{static_cast<NodeId>(trial), static_cast<NodeId>(24 - trial % 5)};
    const std::uint32_t r = 1 + trial % 2;
    ModelConfig c = small_config();
    c.radius = r;
    const UniLP m(c, trial);
    const Tensor a = m.encode_value(extract_labeled(g, p, {r, true}));
    const Tensor b = m.encode_value(extract_labeled(h, {perm[p.u], perm[p.v]}, {r, true}));
    CHECK(max_abs_diff(a, b) <= 1e-9);
  }
}

TEST_CASE("end-to-end gradient check") {
  const auto pool = subgraph_pool(30, 61);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (ModelMode mode : {ModelMode::InContext, ModelMode::NoContext}) {
      ModelConfig c = small_config();
      c.mode = mode;
      c.heads = seed % 2 ? 2 : 1;
      UniLP m(c, seed);
      const ContextSet ctx = make_context(pool, 2, 2, 3 * seed + 1);
      const LabeledSubgraph& q = pool[seed];
      const double label = seed % 2;
      Tape t(&m.params());
      t.backward(bce(m.forward(t, q, ctx), label));
      const Grads analytic = t.param_grads();
      const UniLP* mp = &m;
      auto loss = [&](const ParamStore& p) {
        const UniLP probe(mp->config(), p);
        Tape tt(&probe.params(), false);
        return bce(probe.forward(tt, q, ctx), label).item();
      };
      const auto r = finite_difference_check(m.params(), loss, analytic);
      CAPTURE(r.worst_param);
      CHECK(r.compared > 0);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("no-context mode ignores the context") {
  const auto pool = subgraph_pool(20, 71);
  ModelConfig c = small_config();
  c.mode = ModelMode::NoContext;
  const UniLP m(c, 1);
  const double base = m.predict_probability(pool[0], ContextSet{});
  CHECK(m.predict_probability(pool[0], make_context(pool, 3, 1)) == base);
  CHECK(m.predict_probability(pool[0], make_context(pool, 0, 7, 5)) == base);
}

TEST_CASE("predictions are deterministic and in range") {
  const auto pool = subgraph_pool(20, 81);
  const UniLP m(small_config(), 4);
  const ContextSet ctx = make_context(pool, 4, 4);
  const double p = m.predict_probability(pool[0], ctx);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(m.predict_probability(pool[0], ctx) == p);
  CHECK(m.predict_probability(pool[0], m.encode_context(ctx)) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("zero head gives one half") {
  UniLP m(small_config(), 4);
  auto& ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps.name(i).rfind("mlp", 0) == 0) std::fill(ps.value(i).data.begin(), ps.value(i).data.end(), 0.0);
  }
  Tape t(&ps);
  CHECK(m.predict(t, t.constant(Tensor(1, 8, 0.0))).item() == 0.5);
}

TEST_CASE("forward preconditions") {
  const Graph g = testing::random_graph(20, 0.2, 5);
  const UniLP m(small_config(), 1);
  CHECK_THROWS_AS(m.predict_pair(g, {0, 1}, ContextSet{}), ConfigError);
  ContextSet ctx;
  ctx.positives.push_back(extract_labeled(g, {0, 1}, {1, true}));
  ctx.negatives.push_back(extract_labeled(g, {2, 3}, {1, true}));
  CHECK_THROWS_AS(m.predict_pair(g, {1, 0}, ctx), ConfigError);
  CHECK_NOTHROW(m.predict_pair(g, {4, 5}, ctx));
}
