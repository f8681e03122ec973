#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "unilp/errors.hpp"
#include "unilp/evaluation.hpp"
#include "unilp/rng.hpp"

using namespace unilp;

namespace {

// Sort-and-count reference for Hits@K.
double hits_oracle(std::vector<double> pos, std::vector<double> neg, std::size_t k) {
  std::sort(neg.begin(), neg.end(), std::greater<>());
  const double bar = neg[k - 1];
  std::size_t above = 0;
  for (double p : pos) above += p > bar;
  return static_cast<double>(above) / static_cast<double>(pos.size());
}

std::vector<double> draw_scores(Rng& rng, std::size_t n, bool coarse) {
  std::vector<double> out(n);
  for (double& x : out) x = coarse ? static_cast<double>(rng.uniform_index(5)) : rng.uniform(-3, 3);
  return out;
}

ModelConfig tiny_config(ModelMode mode = ModelMode::InContext) {
  ModelConfig c;
  c.embed_dim = c.hidden_dim = c.attention_dim = c.mlp_hidden = 6;
  c.encoder_layers = 2;
  c.mode = mode;
  return c;
}

Dataset lattice_dataset(LatticeKind kind, std::size_t side, std::uint64_t seed) {
  const Graph g = generate_lattice({kind, side, side, true});
  return make_dataset(kind == LatticeKind::Grid ? "grid" : "triangular", split_edges(g, {}, seed));
}

}  // namespace

TEST_CASE("hits@k examples and errors") {
  const std::vector<double> pos = {0.9, 0.3}, neg = {0.8, 0.7, 0.1};
  CHECK(hits_at_k(pos, neg, 1) == 0.5);
  CHECK(hits_at_k(pos, neg, 3) == 1.0);
  const std::vector<double> flat(4, 0.2);
  CHECK(hits_at_k(flat, flat, 2) == 0.0);
  CHECK_THROWS_AS(hits_at_k(pos, neg, 4), ConfigError);
  CHECK_THROWS_AS(hits_at_k(pos, neg, 0), ConfigError);
  CHECK_THROWS_AS(hits_at_k({}, neg, 1), ConfigError);
  CHECK(effective_k(50, 20) == 20);
  CHECK(effective_k(50, 400) == 50);
}

TEST_CASE("hits@k matches the sort-and-count oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool coarse = trial % 3 == 0;
    const auto pos = draw_scores(rng, 1 + rng.uniform_index(30), coarse);
    const auto neg = draw_scores(rng, 1 + rng.uniform_index(60), coarse);
    const std::size_t k = 1 + rng.uniform_index(neg.size());
    CHECK(hits_at_k(pos, neg, k) == hits_oracle(pos, neg, k));
  }
}

TEST_CASE("hits@k is invariant under increasing transforms") {
  Rng rng(5);
  const std::function<double(double)> transforms[] = {
      [](double x) { return std::exp(x); }, [](double x) { return 3 * x - 7; },
      [](double x) { return 1 / (1 + std::exp(-x)); }, [](double x) { return x * x * x; }};
  for (int trial = 0; trial < 100; ++trial) {
    auto pos = draw_scores(rng, 12, trial % 2 == 0);
    auto neg = draw_scores(rng, 25, trial % 2 == 0);
    const std::size_t k = 1 + rng.uniform_index(25);
    const double base = hits_at_k(pos, neg, k);
    for (const auto& f : transforms) {
      auto p = pos, n = neg;
      std::transform(p.begin(), p.end(), p.begin(), f);
      std::transform(n.begin(), n.end(), n.begin(), f);
      CHECK(hits_at_k(p, n, k) == base);
    }
  }
}

TEST_CASE("rationals") {
  CHECK(Rational::reduced(6, 18) == Rational{1, 3});
  CHECK(Rational::reduced(0, 5) == Rational{0, 1});
  CHECK_FALSE(Rational::reduced(0, 0).defined());
  CHECK(Rational{1, 4}.str() == "1/4");
  CHECK(Rational{1, 4}.value() == 0.25);
}

TEST_CASE("connectivity pattern is exact on torus lattices") {
  for (std::size_t side : {7, 8, 9}) {
    CAPTURE(side);
    const auto grid = verify_connectivity_pattern(generate_lattice({LatticeKind::Grid, side, side, true}));
    CHECK(grid.p_a2 == Rational{0, 1});
    CHECK(grid.p_a3 == Rational{1, 4});
    const auto tri = verify_connectivity_pattern(generate_lattice({LatticeKind::Triangular, side, side, true}));
    CHECK(tri.p_a2 == Rational{1, 3});
    CHECK(tri.p_a3 == Rational{1, 6});
  }
  // per node: 18 pairs with a 2-path of which 6 are links, 36 with a 3-path
  const auto tri8 = verify_connectivity_pattern(generate_lattice({LatticeKind::Triangular, 8, 8, true}));
  CHECK(tri8.pairs == 64 * 63 / 2);
  CHECK(tri8.a2_pairs == 64 * 18 / 2);
  CHECK(tri8.a2_links == 64 * 6 / 2);
  CHECK(tri8.a3_pairs == 64 * 36 / 2);
  const auto js = to_json(tri8);
  CHECK(js["p_A2"] == nlohmann::json::array({1, 3}));
}

TEST_CASE("connectivity pattern small cases and anchors") {
  const auto k3 = verify_connectivity_pattern(testing::triangle());
  CHECK(k3.p_a2 == Rational{1, 1});
  CHECK_FALSE(k3.p_a3.defined());
  CHECK(k3.a2_pairs == 3);

  const Graph big = generate_lattice({LatticeKind::Grid, 20, 20, true});
  CHECK_THROWS_AS(verify_connectivity_pattern(big), ConfigError);
  const auto anchored = verify_connectivity_pattern(big, [&] {
    PairSet s;
    for (const auto& e : big.edges()) s.insert(e);
    return s;
  }(), {0, 57});
  CHECK(anchored.p_a2 == Rational{0, 1});
  CHECK(anchored.p_a3 == Rational{1, 4});
  CHECK(anchored.anchors == std::vector<NodeId>{0, 57});
}

TEST_CASE("pattern pair classification agrees with path counts") {
  const Graph g = testing::random_graph(18, 0.2, 3);
  const auto pp = classify_pattern_pairs(g);
  for (const auto& p : pp.a2_only) {
    CHECK(count_simple_paths(g, p.u, p.v, 2, p) > 0);
    CHECK(count_simple_paths(g, p.u, p.v, 3, p) == 0);
  }
  for (const auto& p : pp.a3_only) {
    CHECK(count_simple_paths(g, p.u, p.v, 2, p) == 0);
    CHECK(count_simple_paths(g, p.u, p.v, 3, p) > 0);
  }
  // bipartite lattices have no odd cycles, so no pair sees both
  const auto grid = classify_pattern_pairs(generate_lattice({LatticeKind::Grid, 8, 8, true}));
  CHECK(grid.a2_only.size() == 64 * 8 / 2);
  CHECK(grid.a3_only.size() == 64 * 16 / 2);
}

TEST_CASE("statistics helpers") {
  const std::vector<double> xs = {1, 2, 3, 4};
  CHECK(mean_of(xs) == 2.5);
  CHECK(sample_std(xs) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(sample_std(std::vector<double>{7}) == 0.0);
  const std::vector<double> up = {10, 20, 25, 40}, down = {4, 3, 2, 1};
  CHECK(spearman(xs, up) == doctest::Approx(1.0));
  CHECK(spearman(xs, down) == doctest::Approx(-1.0));
  CHECK(spearman(xs, std::vector<double>{1, 1, 1, 1}) == 0.0);
  // ties take average ranks: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4)
  CHECK(spearman(xs, std::vector<double>{0, 5, 5, 9}) == doctest::Approx(0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("context perturbations") {
  const Dataset d = lattice_dataset(LatticeKind::Triangular, 8, 2);
  SubgraphCache cache(d.observed, {1, true});
  const ContextSet ctx = sample_context(d, cache, 5, 9);
  CHECK(ctx.positives.size() == 5);
  const SbmSpec sbm = default_context_sbm();

  const ContextSet once = perturb_context(ctx, Perturbation::FlipLabel, sbm, 1);
  CHECK(once.flipped);
  CHECK(once.positives.front().target == ctx.negatives.front().target);
  const ContextSet twice = perturb_context(once, Perturbation::FlipLabel, sbm, 1);
  CHECK_FALSE(twice.flipped);
  REQUIRE(twice.size() == ctx.size());
  for (std::size_t i = 0; i < ctx.positives.size(); ++i) CHECK(twice.positives[i].target == ctx.positives[i].target);
  for (std::size_t i = 0; i < ctx.negatives.size(); ++i) CHECK(twice.negatives[i].target == ctx.negatives[i].target);

  const ContextSet rnd = perturb_context(ctx, Perturbation::RandomContext, sbm, 3);
  CHECK(rnd.source == ContextSource::Sbm);
  CHECK(rnd.positives.size() == 5);
  CHECK(rnd.negatives.size() == 5);
  SbmSpec seeded = sbm;
  seeded.seed = derive_seed(3, "perturb.sbm");
  const Graph sg = generate_sbm(seeded);
  for (const auto& s : rnd.positives) CHECK(sg.has_edge(s.target));
  for (const auto& s : rnd.negatives) CHECK_FALSE(sg.has_edge(s.target));
  CHECK(perturb_context(ctx, Perturbation::None, sbm, 3).positives.front().target == ctx.positives.front().target);

  CHECK(parse_perturbation("flip_label") == Perturbation::FlipLabel);
  CHECK(parse_perturbation(perturbation_name(Perturbation::RandomContext)) == Perturbation::RandomContext);
  CHECK_THROWS_AS(parse_perturbation("shuffle"), ConfigError);
}

TEST_CASE("context counts") {
  const Dataset d = lattice_dataset(LatticeKind::Grid, 10, 1);
  CHECK(context_counts(d, 100, 0.5) == std::pair<std::size_t, std::size_t>{100, 100});
  CHECK(context_counts(d, 100, 0.25) == std::pair<std::size_t, std::size_t>{50, 150});
  // 140 observed edges cap the positive side
  CHECK(context_counts(d, 200, 0.5).first == 140);
}

TEST_CASE("model evaluation") {
  const Dataset d = lattice_dataset(LatticeKind::Triangular, 8, 4);
  const UniLP m(tiny_config(), 1);
  EvalOptions opt;
  opt.context_size = 10;
  opt.runs = 3;
  opt.seed = 7;
  const EvalReport a = evaluate_model(m, d, opt);
  CHECK(a.runs.size() == 3);
  CHECK(a.k == effective_k(50, d.split.test_neg.size()));
  CHECK(a.mean == doctest::Approx(mean_of(a.runs)).epsilon(1e-15));
  CHECK(a.std == doctest::Approx(sample_std(a.runs)).epsilon(1e-15));
  for (double r : a.runs) CHECK((r >= 0.0 && r <= 1.0));
  const EvalReport b = evaluate_model(m, d, opt);
  CHECK(to_json(a) == to_json(b));
  opt.jobs = 3;
  CHECK(evaluate_model(m, d, opt).runs == a.runs);

  SUBCASE("single-size sweep equals a direct evaluation") {
    opt.jobs = 1;
    const SweepResult s = context_size_sweep(m, d, {10}, opt);
    REQUIRE(s.reports.size() == 1);
    CHECK(s.reports[0].runs == a.runs);
  }
  SUBCASE("sweep clips to capacity and drops duplicates") {
    opt.runs = 1;
    const SweepResult s = context_size_sweep(m, d, {10, 25, 400, 1000}, opt);
    REQUIRE(s.reports.size() == 3);
    CHECK(s.reports.back().context_size == context_capacity(d));
    CHECK((s.spearman >= -1.0 && s.spearman <= 1.0));
  }
  SUBCASE("no-context models note the ignored context") {
    const UniLP nc(tiny_config(ModelMode::NoContext), 1);
    const EvalReport r = evaluate_model(nc, d, opt);
    CHECK_FALSE(r.note.empty());
    CHECK(r.runs[0] == r.runs[1]);
  }
  SUBCASE("csv rows") {
    const std::string rows = report_csv_rows(a);
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 3);
    CHECK(report_csv_header() == "experiment,dataset,mode,context_size,ratio,perturb,seed,run,metric,value\n");
  }
}

TEST_CASE("heuristic evaluation on lattices") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset grid = lattice_dataset(LatticeKind::Grid, 10, seed);
    for (auto kind : {HeuristicKind::CommonNeighbors, HeuristicKind::AdamicAdar, HeuristicKind::ResourceAllocation}) {
      HeuristicSpec s;
      s.kind = kind;
      CHECK(evaluate_heuristic(s, grid, 50).mean == 0.0);
    }
  }
}
