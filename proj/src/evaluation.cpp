#include "unilp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "unilp/errors.hpp"
#include "unilp/parallel.hpp"
#include "unilp/rng.hpp"

namespace unilp {

double hits_at_k(std::span<const double> pos, std::span<const double> neg, std::size_t k) {
  if (pos.empty() || neg.empty()) throw ConfigError("hits_at_k needs positive and negative scores");
  if (k == 0 || k > neg.size()) {
    throw ConfigError("hits_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(neg.size()) + "]");
  }
  std::vector<double> sorted(neg.begin(), neg.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  const double threshold = sorted[k - 1];
  const auto hits = std::count_if(pos.begin(), pos.end(), [&](double s) { return s > threshold; });
  return static_cast<double>(hits) / static_cast<double>(pos.size());
}

Rational Rational::reduced(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {num, 0};
  const std::uint64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

double Rational::value() const {
  return den == 0 ? std::nan("") : static_cast<double>(num) / static_cast<double>(den);
}

std::string Rational::str() const {
  return den == 0 ? "undefined" : std::to_string(num) + "/" + std::to_string(den);
}

PatternStats verify_connectivity_pattern(const Graph& g, const PairSet& links, const std::vector<NodeId>& anchors) {
  const std::uint64_t n = g.node_count();
  PatternStats s;
  s.anchors = anchors;
  auto visit = [&](NodeId u, NodeId v) {
    const NodePair p = NodePair{u, v}.canonical();
    std::optional<NodePair> own;
    if (g.has_edge(p)) own = p;
    const bool linked = links.contains(p);
    ++s.pairs;
    if (has_simple_path(g, p.u, p.v, 2, own)) {
      ++s.a2_pairs;
      s.a2_links += linked;
    }
    if (has_simple_path(g, p.u, p.v, 3, own)) {
      ++s.a3_pairs;
      s.a3_links += linked;
    }
  };
  if (anchors.empty()) {
    if (n * (n - 1) / 2 > kMaxPatternPairs) {
      throw ConfigError("graph has " + std::to_string(n * (n - 1) / 2) + " pairs; more than " +
                        std::to_string(kMaxPatternPairs) + " requires anchors");
    }
    for (NodeId u = 0; u < n; ++u) {
      for (NodeId v = u + 1; v < n; ++v) visit(u, v);
    }
  } else {
    if (anchors.size() * n > kMaxPatternPairs) throw ConfigError("too many anchors for the pair guard");
    PairSet seen;
    for (NodeId a : anchors) {
      if (a >= n) throw ConfigError("anchor " + std::to_string(a) + " is not a node");
      for (NodeId w = 0; w < n; ++w) {
        if (w != a && seen.insert(NodePair{a, w}.canonical())) visit(a, w);
      }
    }
  }
  s.p_a2 = Rational::reduced(s.a2_links, s.a2_pairs);
  s.p_a3 = Rational::reduced(s.a3_links, s.a3_pairs);
  return s;
}

PatternStats verify_connectivity_pattern(const Graph& g) {
  const auto edges = g.edges();
  return verify_connectivity_pattern(g, PairSet(edges));
}

nlohmann::json to_json(const PatternStats& s) {
  auto frac = [](const Rational& r) { return nlohmann::json::array({r.num, r.den}); };
  return {{"p_A2", frac(s.p_a2)},
          {"p_A3", frac(s.p_a3)},
          {"counts",
           {{"pairs", s.pairs},
            {"A2_pairs", s.a2_pairs},
            {"A2_links", s.a2_links},
            {"A3_pairs", s.a3_pairs},
            {"A3_links", s.a3_links}}},
          {"anchors", s.anchors}};
}

PatternPairs classify_pattern_pairs(const Graph& g) {
  const std::uint64_t n = g.node_count();
  if (n * (n - 1) / 2 > kMaxPatternPairs) throw ConfigError("graph too large for pattern classification");
  PatternPairs out;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      std::optional<NodePair> own;
      if (g.has_edge(u, v)) own = NodePair{u, v};
      const bool a2 = has_simple_path(g, u, v, 2, own);
      const bool a3 = has_simple_path(g, u, v, 3, own);
      if (a2 && !a3) out.a2_only.push_back({u, v});
      if (a3 && !a2) out.a3_only.push_back({u, v});
    }
  }
  return out;
}

std::string perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::None: return "none";
    case Perturbation::FlipLabel: return "flip_label";
    case Perturbation::RandomContext: return "random_context";
  }
  return "none";
}

Perturbation parse_perturbation(const std::string& name) {
  if (name == "none") return Perturbation::None;
  if (name == "flip_label" || name == "flip") return Perturbation::FlipLabel;
  if (name == "random_context" || name == "random") return Perturbation::RandomContext;
  throw ConfigError("unknown perturbation '" + name + "'");
}

SbmSpec default_context_sbm() {
  SbmSpec s;
  s.block_sizes = {50, 50};
  s.p_in = 0.3;
  s.p_out = 0.01;
  return s;
}

ContextSet perturb_context(const ContextSet& ctx, Perturbation mode, const SbmSpec& sbm, std::uint64_t seed,
                           const ExtractOptions& extract) {
  switch (mode) {
    case Perturbation::None:
      return ctx;
    case Perturbation::FlipLabel: {
      ContextSet out;
      out.positives = ctx.negatives;
      out.negatives = ctx.positives;
      out.source = ctx.source;
      out.flipped = !ctx.flipped;
      return out;
    }
    case Perturbation::RandomContext: {
      SbmSpec spec = sbm;
      spec.seed = derive_seed(seed, "perturb.sbm");
      const Graph g = generate_sbm(spec);
      const Dataset d = make_unsplit_dataset("sbm", g);
      SubgraphCache cache(d.observed, extract);
      const auto pairs =
          sample_context_pairs(d, ctx.positives.size(), ctx.negatives.size(), derive_seed(seed, "perturb.context"));
      return build_context(pairs, cache, ContextSource::Sbm);
    }
  }
  return ctx;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("spearman needs equal-length series");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::pair<std::size_t, std::size_t> context_counts(const Dataset& d, std::size_t context_size, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("ratio must lie strictly between 0 and 1");
  const std::size_t total = 2 * context_size;
  std::size_t n_pos = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  n_pos = std::clamp<std::size_t>(n_pos, 1, total - 1);
  std::size_t n_neg = total - n_pos;
  const std::uint64_t n = d.full.node_count();
  const std::size_t nonedges = static_cast<std::size_t>((n < 2 ? 0 : n * (n - 1) / 2) - d.full.edge_count());
  n_pos = std::min(n_pos, d.observed.edge_count());
  n_neg = std::min(n_neg, nonedges);
  return {n_pos, n_neg};
}

std::vector<double> score_pairs(const UniLP& model, const Graph& g, std::span<const NodePair> pairs,
                                const EncodedContext& context, std::size_t jobs, std::uint64_t extract_seed) {
  std::vector<double> out(pairs.size());
  const auto opts = model.config().extract_options(extract_seed);
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    out[i] = model.predict_probability(extract_labeled(g, pairs[i], opts), context);
  });
  return out;
}

namespace {

EvalReport blank_report(const UniLP& model, const Dataset& d, const EvalOptions& o, std::size_t size) {
  EvalReport r;
  r.experiment = "eval";
  r.dataset = d.name;
  r.mode = mode_name(model.config().mode);
  r.context_size = size;
  r.ratio = o.ratio;
  r.perturb = perturbation_name(o.perturb);
  r.seed = o.seed;
  r.k = effective_k(o.hits_k, d.split.test_neg.size());
  r.config = {{"model", model.config_json()},
              {"eval",
               {{"context_size", size},
                {"ratio", o.ratio},
                {"runs", o.runs},
                {"hits_k", o.hits_k},
                {"perturb", r.perturb}}}};
  if (model.config().mode == ModelMode::NoContext) r.note = "no_context mode ignores context_size";
  return r;
}

std::vector<EvalReport> run_eval(const UniLP& model, const Dataset& d, std::vector<std::size_t> sizes,
                                 const EvalOptions& o) {
  if (d.split.test_pos.empty() || d.split.test_neg.empty()) throw DataError("dataset " + d.name + " has no test links");
  if (o.runs == 0) throw ConfigError("runs must be at least 1");
  const bool icl = model.config().mode == ModelMode::InContext;
  const auto opts = model.config().extract_options(derive_seed(o.seed, "extract"));
  SubgraphCache cache(d.observed, opts);
  std::vector<LabeledSubgraph> pos, neg;
  for (const auto& p : d.split.test_pos) pos.push_back(cache.get(p));
  for (const auto& p : d.split.test_neg) neg.push_back(cache.get(p));

  std::vector<EvalReport> reports;
  for (std::size_t s : sizes) reports.push_back(blank_report(model, d, o, s));
  const std::size_t max_size = *std::max_element(sizes.begin(), sizes.end());
  const auto [max_pos, max_neg] = context_counts(d, max_size, o.ratio);
  if (icl && (max_pos == 0 || max_neg == 0)) throw DataError("dataset " + d.name + " cannot supply a context");

  for (std::size_t run = 0; run < o.runs; ++run) {
    ContextSet full;
    if (icl) {
      full = build_context(sample_context_pairs(d, max_pos, max_neg, derive_seed(o.seed, "eval.context", run)), cache);
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      EncodedContext enc;
      if (icl) {
        const auto [n_pos, n_neg] = context_counts(d, sizes[i], o.ratio);
        const ContextSet ctx = perturb_context(full.prefix(n_pos, n_neg), o.perturb, o.sbm,
                                               derive_seed(o.seed, "eval.perturb", run), opts);
        enc = model.encode_context(ctx);
      }
      std::vector<double> ps(pos.size()), ns(neg.size());
      parallel_for(ps.size() + ns.size(), o.jobs, [&](std::size_t j) {
        if (j < ps.size()) {
          ps[j] = model.predict_probability(pos[j], enc);
        } else {
          ns[j - ps.size()] = model.predict_probability(neg[j - ps.size()], enc);
        }
      });
      reports[i].runs.push_back(hits_at_k(ps, ns, reports[i].k));
    }
  }
  for (auto& r : reports) {
    r.mean = mean_of(r.runs);
    r.std = sample_std(r.runs);
  }
  return reports;
}

}  // namespace

EvalReport evaluate_model(const UniLP& model, const Dataset& d, const EvalOptions& options) {
  if (options.context_size == 0 && model.config().mode == ModelMode::InContext) {
    throw ConfigError("context_size must be at least 1");
  }
  return run_eval(model, d, {options.context_size}, options).front();
}

SweepResult context_size_sweep(const UniLP& model, const Dataset& d, const std::vector<std::size_t>& sizes,
                               const EvalOptions& options) {
  if (sizes.empty()) throw ConfigError("sweep needs at least one size");
  const std::size_t cap = context_capacity(d);
  std::vector<std::size_t> clipped;
  for (std::size_t s : sizes) {
    if (s == 0) throw ConfigError("sweep sizes must be positive");
    const std::size_t c = std::min(s, cap);
    if (std::find(clipped.begin(), clipped.end(), c) == clipped.end()) clipped.push_back(c);
  }
  SweepResult out;
  out.reports = run_eval(model, d, clipped, options);
  std::vector<double> xs, ys;
  for (const auto& r : out.reports) {
    xs.push_back(static_cast<double>(r.context_size));
    ys.push_back(r.mean);
  }
  out.spearman = spearman(xs, ys);
  for (auto& r : out.reports) r.experiment = "sweep";
  return out;
}

EvalReport evaluate_heuristic(const HeuristicSpec& spec, const Dataset& d, std::size_t hits_k) {
  EvalReport r;
  r.experiment = "heuristic";
  r.dataset = d.name;
  r.mode = heuristic_name(spec.kind);
  r.seed = d.split.seed;
  r.k = effective_k(hits_k, d.split.test_neg.size());
  const auto ps = score_batch(spec, d.observed, d.split.test_pos);
  const auto ns = score_batch(spec, d.observed, d.split.test_neg);
  r.runs = {hits_at_k(ps, ns, r.k)};
  r.mean = r.runs.front();
  r.config = {{"heuristic", heuristic_name(spec.kind)}, {"hits_k", hits_k}};
  if (spec.kind == HeuristicKind::Katz) {
    r.config["katz_beta"] = spec.katz_beta;
    r.config["katz_len"] = spec.katz_len;
  }
  return r;
}

std::string report_csv_header() { return "experiment,dataset,mode,context_size,ratio,perturb,seed,run,metric,value\n"; }

std::string report_csv_rows(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    out << r.experiment << ',' << r.dataset << ',' << r.mode << ',' << r.context_size << ',' << r.ratio << ','
        << r.perturb << ',' << r.seed << ',' << i << ',' << r.metric() << ',' << r.runs[i] << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"experiment", r.experiment}, {"dataset", r.dataset},   {"mode", r.mode},     {"context_size", r.context_size},
          {"ratio", r.ratio},           {"perturb", r.perturb},   {"seed", r.seed},     {"metric", r.metric()},
          {"k", r.k},                   {"runs", r.runs},         {"mean", r.mean},     {"std", r.std},
          {"note", r.note},             {"config", r.config}};
}

}  // namespace unilp
