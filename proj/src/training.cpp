#include "unilp/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "unilp/errors.hpp"
#include "unilp/evaluation.hpp"
#include "unilp/parallel.hpp"
#include "unilp/rng.hpp"

namespace unilp {

Dataset make_dataset(std::string name, DataSplit split) {
  Dataset d;
  d.name = std::move(name);
  d.observed = split.observed_graph();
  std::vector<NodePair> all = split.observed;
  all.insert(all.end(), split.valid_pos.begin(), split.valid_pos.end());
  all.insert(all.end(), split.test_pos.begin(), split.test_pos.end());
  d.full = Graph::from_edges(split.node_count, all);
  d.split = std::move(split);
  return d;
}

Dataset make_unsplit_dataset(std::string name, const Graph& g) {
  DataSplit s;
  s.node_count = g.node_count();
  s.observed = g.edges();
  s.id_map.resize(g.node_count());
  for (std::size_t i = 0; i < s.id_map.size(); ++i) s.id_map[i] = static_cast<std::int64_t>(i);
  return make_dataset(std::move(name), std::move(s));
}

std::vector<LabeledPair> build_training_pool(const Dataset& d, std::uint64_t seed) {
  const auto& pos = d.split.observed;
  const auto neg = sample_nonedges(d.full, pos.size(), derive_seed(seed, "pool.negatives"));
  std::vector<LabeledPair> pool;
  pool.reserve(2 * pos.size());
  for (const auto& p : pos) pool.push_back({p, 1});
  for (const auto& p : neg) pool.push_back({p, 0});
  Rng rng(derive_seed(seed, "pool.order"));
  rng.shuffle(pool);
  return pool;
}

const LabeledSubgraph& SubgraphCache::get(NodePair pair) {
  pair = pair.canonical();
  auto it = cache_.find(pair.key());
  if (it != cache_.end()) return it->second;
  return cache_.emplace(pair.key(), extract_labeled(*graph_, pair, options_)).first->second;
}

std::size_t context_capacity(const Dataset& d) {
  const std::uint64_t n = d.full.node_count();
  const std::uint64_t nonedges = (n < 2 ? 0 : n * (n - 1) / 2) - d.full.edge_count();
  return static_cast<std::size_t>(std::min<std::uint64_t>(d.observed.edge_count(), nonedges));
}

namespace {

// k distinct indices of [0, n) other than `skip`, in draw order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng, std::optional<std::size_t> skip) {
  const std::size_t available = n - (skip ? 1 : 0);
  if (k > available) {
    throw DataError("need " + std::to_string(k) + " context positives but only " + std::to_string(available) +
                    " observed edges are available");
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  if (4 * k <= available) {
    std::unordered_set<std::size_t> seen;
    while (out.size() < k) {
      const std::size_t i = rng.uniform_index(n);
      if ((skip && i == *skip) || !seen.insert(i).second) continue;
      out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> all;
  all.reserve(available);
  for (std::size_t i = 0; i < n; ++i) {
    if (!skip || i != *skip) all.push_back(i);
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(all[i], all[i + rng.uniform_index(all.size() - i)]);
    out.push_back(all[i]);
  }
  return out;
}

}  // namespace

ContextPairs sample_context_pairs(const Dataset& d, std::size_t k_pos, std::size_t k_neg, std::uint64_t seed,
                                  std::optional<NodePair> exclude) {
  const auto& edges = d.split.observed;
  std::optional<std::size_t> skip;
  if (exclude) {
    const NodePair q = exclude->canonical();
    auto it = std::lower_bound(edges.begin(), edges.end(), q);
    if (it != edges.end() && *it == q) skip = static_cast<std::size_t>(it - edges.begin());
  }
  ContextPairs out;
  Rng rng(derive_seed(seed, "context.positives"));
  for (std::size_t i : sample_indices(edges.size(), k_pos, rng, skip)) out.positives.push_back(edges[i]);
  PairSet banned;
  if (exclude) banned.insert(exclude->canonical());
  out.negatives = sample_nonedges(d.full, k_neg, derive_seed(seed, "context.negatives"), banned);
  return out;
}

ContextSet build_context(const ContextPairs& pairs, SubgraphCache& cache, ContextSource source) {
  ContextSet ctx;
  ctx.source = source;
  ctx.positives.reserve(pairs.positives.size());
  ctx.negatives.reserve(pairs.negatives.size());
  for (const auto& p : pairs.positives) ctx.positives.push_back(cache.get(p));
  for (const auto& p : pairs.negatives) ctx.negatives.push_back(cache.get(p));
  return ctx;
}

ContextSet sample_context(const Dataset& d, SubgraphCache& cache, std::size_t k, std::uint64_t seed,
                          std::optional<NodePair> exclude) {
  return build_context(sample_context_pairs(d, k, k, seed, exclude), cache);
}

void TrainConfig::validate(ModelMode mode) const {
  if (mode == ModelMode::InContext && context_k == 0) throw ConfigError("context_k must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (queries_per_graph == 0) throw ConfigError("queries_per_graph must be at least 1");
  if (hits_k == 0) throw ConfigError("hits_k must be at least 1");
  if (val_links < 2) throw ConfigError("val_links must be at least 2");
  if (mode == ModelMode::InContext && eval_context_size == 0) throw ConfigError("eval_context_size must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"context_k", c.context_k},
          {"batch_size", c.batch_size},
          {"optimizer", c.optimizer == ad::OptimizerKind::Adam ? "adam" : "sgd"},
          {"lr", c.lr},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"queries_per_graph", c.queries_per_graph},
          {"eval_context_size", c.eval_context_size},
          {"val_links", c.val_links},
          {"hits_k", c.hits_k}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"context_k",  "batch_size",        "optimizer",        "lr",
                                                 "max_epochs", "patience",          "queries_per_graph",
                                                 "eval_context_size", "val_links", "hits_k"};
  if (!j.is_object()) throw ConfigError("train config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown train config key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    c.context_k = j.value("context_k", c.context_k);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) {
      const auto name = j["optimizer"].get<std::string>();
      if (name == "adam") {
        c.optimizer = ad::OptimizerKind::Adam;
      } else if (name == "sgd") {
        c.optimizer = ad::OptimizerKind::Sgd;
      } else {
        throw ConfigError("unknown optimizer '" + name + "'");
      }
    }
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.queries_per_graph = j.value("queries_per_graph", c.queries_per_graph);
    c.eval_context_size = j.value("eval_context_size", c.eval_context_size);
    c.val_links = j.value("val_links", c.val_links);
    c.hits_k = j.value("hits_k", c.hits_k);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

std::string train_record_csv(const TrainRecord& r) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,val_metric,val_loss\n";
  for (const auto& e : r.epochs) out << e.epoch << ',' << e.loss << ',' << e.val_metric << ',' << e.val_loss << '\n';
  return out.str();
}

namespace {

struct Query {
  std::size_t dataset;
  LabeledPair item;
};

struct BatchOutcome {
  ad::Grads grads;
  double loss = 0.0;
};

ad::OptimState make_optimizer(const TrainConfig& c) {
  ad::OptimState opt;
  opt.kind = c.optimizer;
  opt.lr = c.lr;
  return opt;
}

// One optimizer step over `batch`; returns the summed per-query loss.
double train_batch(UniLP& model, ad::OptimState& opt, const std::vector<const LabeledSubgraph*>& queries,
                   const std::vector<ContextSet>& contexts, const std::vector<std::uint8_t>& labels,
                   std::size_t jobs) {
  const std::size_t b = queries.size();
  std::vector<BatchOutcome> out(b);
  const bool icl = model.config().mode == ModelMode::InContext;
  const ContextSet empty;
  parallel_for(b, jobs, [&](std::size_t i) {
    ad::Tape tape(&model.params());
    ad::Var p = model.forward(tape, *queries[i], icl ? contexts[i] : empty);
    ad::Var loss = ad::bce(p, labels[i]);
    tape.backward(loss);
    out[i].grads = tape.param_grads();
    out[i].loss = loss.item();
  });
  ad::Grads total = ad::zero_grads(model.params());
  double sum = 0.0;
  for (auto& o : out) {
    ad::accumulate(total, o.grads);
    sum += o.loss;
  }
  ad::scale(total, 1.0 / static_cast<double>(b));
  ad::step(opt, model.params(), total);
  return sum;
}

struct ValidationSet {
  const Dataset* dataset;
  std::vector<LabeledSubgraph> pos;
  std::vector<LabeledSubgraph> neg;
  ContextSet context;
};

std::vector<ValidationSet> build_validation(const std::vector<const Dataset*>& validation, const UniLP& model,
                                            const TrainConfig& c) {
  std::vector<ValidationSet> out;
  const auto opts = model.config().extract_options(derive_seed(c.seed, "extract"));
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const Dataset& d = *validation[i];
    const std::size_t half = std::min({c.val_links / 2, d.split.valid_pos.size(), d.split.valid_neg.size()});
    if (half == 0) throw DataError("dataset " + d.name + " has no validation links");
    ValidationSet v{&d, {}, {}, {}};
    for (std::size_t j = 0; j < half; ++j) {
      v.pos.push_back(extract_labeled(d.observed, d.split.valid_pos[j], opts));
      v.neg.push_back(extract_labeled(d.observed, d.split.valid_neg[j], opts));
    }
    if (model.config().mode == ModelMode::InContext) {
      const std::size_t k = std::min(c.eval_context_size, context_capacity(d));
      if (k == 0) throw DataError("dataset " + d.name + " cannot supply a validation context");
      SubgraphCache cache(d.observed, opts);
      v.context = sample_context(d, cache, k, derive_seed(c.seed, "val.context", i));
    }
    out.push_back(std::move(v));
  }
  return out;
}

// Mean Hits@K across datasets and mean BCE across all validation links.
std::pair<double, double> validate(const UniLP& model, const std::vector<ValidationSet>& sets, const TrainConfig& c) {
  double metric = 0.0, loss = 0.0;
  std::size_t links = 0;
  for (const auto& v : sets) {
    const EncodedContext enc = model.encode_context(v.context);
    std::vector<double> ps(v.pos.size()), ns(v.neg.size());
    parallel_for(ps.size() + ns.size(), c.jobs, [&](std::size_t i) {
      if (i < ps.size()) {
        ps[i] = model.predict_probability(v.pos[i], enc);
      } else {
        ns[i - ps.size()] = model.predict_probability(v.neg[i - ps.size()], enc);
      }
    });
    metric += hits_at_k(ps, ns, effective_k(c.hits_k, ns.size()));
    for (double p : ps) loss -= std::log(p);
    for (double p : ns) loss -= std::log(1.0 - p);
    links += ps.size() + ns.size();
  }
  return {metric / static_cast<double>(sets.size()), loss / static_cast<double>(links)};
}

}  // namespace

TrainResult pretrain(const UniLP& init, const std::vector<const Dataset*>& train,
                     const std::vector<const Dataset*>& validation, const TrainConfig& c,
                     const std::function<void(const EpochRecord&)>& on_epoch) {
  const ModelMode mode = init.config().mode;
  c.validate(mode);
  if (train.empty()) throw ConfigError("pretraining needs at least one graph");
  const bool icl = mode == ModelMode::InContext;

  std::vector<std::vector<LabeledPair>> pools;
  std::vector<SubgraphCache> caches;
  const auto opts = init.config().extract_options(derive_seed(c.seed, "extract"));
  std::size_t total_pool = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    pools.push_back(build_training_pool(*train[i], derive_seed(c.seed, "train.pool", i)));
    caches.emplace_back(train[i]->observed, opts);
    total_pool += pools.back().size();
  }
  if (total_pool == 0) throw DataError("training graphs contain no edges");
  const auto val_sets = build_validation(validation, init, c);

  TrainResult result{init, {}};
  UniLP model = init;
  ad::OptimState opt = make_optimizer(c);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= c.max_epochs; ++epoch) {
    // round-robin over graphs, each capped and reshuffled per epoch
    std::vector<std::vector<LabeledPair>> order(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      order[i] = pools[i];
      Rng rng(derive_seed(c.seed, "epoch.order", epoch, i));
      rng.shuffle(order[i]);
      order[i].resize(std::min(order[i].size(), c.queries_per_graph));
    }
    std::vector<Query> schedule;
    for (std::size_t j = 0;; ++j) {
      bool any = false;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (j < order[i].size()) {
          schedule.push_back({i, order[i][j]});
          any = true;
        }
      }
      if (!any) break;
    }

    double loss_sum = 0.0;
    try {
      for (std::size_t start = 0; start < schedule.size(); start += c.batch_size) {
        const std::size_t end = std::min(schedule.size(), start + c.batch_size);
        std::vector<const LabeledSubgraph*> queries;
        std::vector<ContextSet> contexts;
        std::vector<std::uint8_t> labels;
        for (std::size_t q = start; q < end; ++q) {
          const Query& query = schedule[q];
          if (icl) {
            contexts.push_back(sample_context(*train[query.dataset], caches[query.dataset], c.context_k,
                                              derive_seed(c.seed, "train.context", epoch, q), query.item.pair));
          }
          labels.push_back(query.item.label);
        }
        for (std::size_t q = start; q < end; ++q) {
          queries.push_back(&caches[schedule[q].dataset].get(schedule[q].item.pair));
        }
        loss_sum += train_batch(model, opt, queries, contexts, labels, c.jobs);
      }
    } catch (const NumericError&) {
      result.record.stop_epoch = epoch;
      result.record.stop_reason = "diverged";
      return result;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(schedule.size());
    if (!std::isfinite(rec.loss)) {
      result.record.stop_epoch = epoch;
      result.record.stop_reason = "diverged";
      return result;
    }
    if (!val_sets.empty()) std::tie(rec.val_metric, rec.val_loss) = validate(model, val_sets, c);
    result.record.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val_sets.empty()) {
      result.model = model;
      result.record.best_epoch = epoch;
      result.record.best_metric = rec.val_metric;
      result.record.best_val_loss = rec.val_loss;
      continue;
    }
    const bool better = rec.val_metric > result.record.best_metric ||
                        (rec.val_metric == result.record.best_metric && rec.val_loss < result.record.best_val_loss);
    if (better) {
      result.model = model;
      result.record.best_epoch = epoch;
      result.record.best_metric = rec.val_metric;
      result.record.best_val_loss = rec.val_loss;
      since_best = 0;
    } else if (++since_best >= c.patience) {
      result.record.stop_epoch = epoch;
      result.record.stop_reason = "patience";
      return result;
    }
  }
  result.record.stop_epoch = c.max_epochs;
  result.record.stop_reason = val_sets.empty() ? "no_validation" : "max_epochs";
  return result;
}

namespace {

std::vector<LabeledPair> finetune_pool(const Dataset& d, std::size_t n_links, std::uint64_t seed) {
  std::vector<NodePair> pos = d.split.observed;
  Rng rng(derive_seed(seed, "finetune.positives"));
  rng.shuffle(pos);
  pos.resize(std::min(pos.size(), n_links));
  const auto neg = sample_nonedges(d.full, pos.size(), derive_seed(seed, "finetune.negatives"));
  std::vector<LabeledPair> pool;
  for (const auto& p : pos) pool.push_back({p, 1});
  for (const auto& p : neg) pool.push_back({p, 0});
  Rng order(derive_seed(seed, "finetune.order"));
  order.shuffle(pool);
  return pool;
}

}  // namespace

FinetuneResult finetune(const UniLP& model, const Dataset& target, std::size_t n_links, std::size_t steps,
                        const TrainConfig& c) {
  c.validate(model.config().mode);
  FinetuneResult out{model, {}};
  if (steps == 0) return out;
  const auto pool = finetune_pool(target, n_links, c.seed);
  if (pool.empty()) throw DataError("finetune pool is empty");
  const bool icl = model.config().mode == ModelMode::InContext;
  SubgraphCache cache(target.observed, model.config().extract_options(derive_seed(c.seed, "extract")));
  ad::OptimState opt = make_optimizer(c);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<const LabeledSubgraph*> queries;
    std::vector<ContextSet> contexts;
    std::vector<std::uint8_t> labels;
    std::vector<NodePair> picked;
    const std::size_t b = std::min(c.batch_size, pool.size());
    for (std::size_t i = 0; i < b; ++i, cursor = (cursor + 1) % pool.size()) {
      const auto& item = pool[cursor];
      if (icl) {
        contexts.push_back(
            sample_context(target, cache, c.context_k, derive_seed(c.seed, "finetune.context", s, i), item.pair));
      }
      labels.push_back(item.label);
      picked.push_back(item.pair);
    }
    for (const auto& p : picked) queries.push_back(&cache.get(p));
    out.step_loss.push_back(train_batch(out.model, opt, queries, contexts, labels, c.jobs) / static_cast<double>(b));
  }
  return out;
}

double pool_loss(const UniLP& model, const Dataset& d, const std::vector<LabeledPair>& pool, const TrainConfig& c,
                 std::uint64_t seed) {
  if (pool.empty()) throw DataError("pool is empty");
  const bool icl = model.config().mode == ModelMode::InContext;
  SubgraphCache cache(d.observed, model.config().extract_options(derive_seed(c.seed, "extract")));
  double loss = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ContextSet ctx;
    if (icl) ctx = sample_context(d, cache, c.context_k, derive_seed(seed, "pool_loss.context", i), pool[i].pair);
    const double p = model.predict_probability(cache.get(pool[i].pair), ctx);
    loss -= pool[i].label ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(pool.size());
}

TransferResult transfer_probe(const Dataset& target, const Graph& extra, const ModelConfig& model_config,
                              const TrainConfig& c) {
  if (model_config.mode != ModelMode::NoContext) throw ConfigError("transfer_probe requires no_context mode");
  const UniLP init(model_config, derive_seed(c.seed, "transfer.init"));
  const Dataset extra_ds = make_unsplit_dataset("extra", extra);

  TransferResult out;
  auto alone = pretrain(init, {&target}, {&target}, c);
  auto joint = pretrain(init, {&target, &extra_ds}, {&target}, c);
  out.record_target_only = alone.record;
  out.record_with_extra = joint.record;

  const auto& pos = target.split.test_pos;
  const auto& neg = target.split.test_neg;
  out.k = effective_k(c.hits_k, neg.size());
  const auto seed = derive_seed(c.seed, "extract");
  auto hits = [&](const UniLP& m) {
    const EncodedContext none;
    const auto ps = score_pairs(m, target.observed, pos, none, c.jobs, seed);
    const auto ns = score_pairs(m, target.observed, neg, none, c.jobs, seed);
    return hits_at_k(ps, ns, out.k);
  };
  out.hits_target_only = hits(alone.model);
  out.hits_with_extra = hits(joint.model);
  out.delta = out.hits_with_extra - out.hits_target_only;
  return out;
}

}  // namespace unilp
