#include "unilp/model.hpp"

#include <algorithm>

#include "unilp/errors.hpp"
#include "unilp/rng.hpp"

namespace unilp {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void ModelConfig::validate() const {
  if (embed_dim == 0 || hidden_dim == 0 || attention_dim == 0 || encoder_layers == 0 || mlp_layers == 0 ||
      mlp_hidden == 0 || heads == 0) {
    throw ConfigError("model dimensions, layer counts and heads must be at least 1");
  }
  if (attention_dim % heads != 0) throw ConfigError("heads must divide attention_dim");
  if (radius < 1 || radius > 3) throw ConfigError("radius must be in [1, 3]");
  if (vocab.drnl_cap < 1 || vocab.dist_cap < 1) throw ConfigError("label vocabulary caps must be at least 1");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must be in [0, 1)");
  if (max_nodes_per_hop && *max_nodes_per_hop == 0) throw ConfigError("max_nodes_per_hop must be positive");
}

ExtractOptions ModelConfig::extract_options(std::uint64_t seed) const {
  ExtractOptions opt;
  opt.radius = radius;
  opt.remove_target = true;
  opt.max_nodes_per_hop = max_nodes_per_hop;
  opt.seed = seed;
  return opt;
}

std::string mode_name(ModelMode mode) { return mode == ModelMode::InContext ? "icl" : "no_context"; }

ModelMode parse_mode(const std::string& name) {
  if (name == "icl" || name == "ICL") return ModelMode::InContext;
  if (name == "no_context" || name == "NO_CONTEXT" || name == "seal") return ModelMode::NoContext;
  throw ConfigError("unknown model mode '" + name + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j = {{"embed_dim", c.embed_dim},
                      {"hidden_dim", c.hidden_dim},
                      {"attention_dim", c.attention_dim},
                      {"encoder_layers", c.encoder_layers},
                      {"mlp_layers", c.mlp_layers},
                      {"mlp_hidden", c.mlp_hidden},
                      {"heads", c.heads},
                      {"leaky_slope", c.leaky_slope},
                      {"drnl_cap", c.vocab.drnl_cap},
                      {"dist_cap", c.vocab.dist_cap},
                      {"radius", c.radius},
                      {"mode", mode_name(c.mode)}};
  j["max_nodes_per_hop"] = c.max_nodes_per_hop ? nlohmann::json(*c.max_nodes_per_hop) : nlohmann::json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"embed_dim", "hidden_dim",  "attention_dim", "encoder_layers", "mlp_layers",
                                "mlp_hidden", "heads",      "leaky_slope",   "drnl_cap",       "dist_cap",
                                "radius",     "mode",       "max_nodes_per_hop"};
  if (!j.is_object()) throw ConfigError("model config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
  ModelConfig c;
  try {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.mlp_layers = j.value("mlp_layers", c.mlp_layers);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.heads = j.value("heads", c.heads);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.vocab.drnl_cap = j.value("drnl_cap", c.vocab.drnl_cap);
    c.vocab.dist_cap = j.value("dist_cap", c.vocab.dist_cap);
    c.radius = j.value("radius", c.radius);
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("max_nodes_per_hop") && !j["max_nodes_per_hop"].is_null()) {
      c.max_nodes_per_hop = j["max_nodes_per_hop"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<const LabeledSubgraph*> ContextSet::members() const {
  std::vector<const LabeledSubgraph*> out;
  out.reserve(size());
  for (const auto& s : positives) out.push_back(&s);
  for (const auto& s : negatives) out.push_back(&s);
  return out;
}

std::vector<std::uint8_t> ContextSet::labels() const {
  std::vector<std::uint8_t> out(positives.size(), 1);
  out.resize(size(), 0);
  return out;
}

ContextSet ContextSet::prefix(std::size_t n_pos, std::size_t n_neg) const {
  ContextSet out;
  out.source = source;
  out.flipped = flipped;
  out.positives.assign(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(std::min(n_pos, positives.size())));
  out.negatives.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(std::min(n_neg, negatives.size())));
  return out;
}

namespace {

struct Layout {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
};

Layout layout_of(const ModelConfig& c) {
  Layout l;
  auto add = [&](std::string name, std::size_t r, std::size_t k) { l.shapes.push_back({std::move(name), {r, k}}); };
  add("embed", c.vocab.size(), c.embed_dim);
  for (std::size_t i = 0; i < c.encoder_layers; ++i) {
    const std::size_t in = i == 0 ? c.embed_dim : c.hidden_dim;
    add("enc" + std::to_string(i) + ".self", in, c.hidden_dim);
    add("enc" + std::to_string(i) + ".neigh", in, c.hidden_dim);
    add("enc" + std::to_string(i) + ".bias", 1, c.hidden_dim);
  }
  add("attn.key", 2 * c.hidden_dim, c.attention_dim);
  add("attn.p", 1, c.attention_dim);
  add("attn.value", c.hidden_dim, c.attention_dim);
  add("label.plus", 1, c.hidden_dim);
  add("label.minus", 1, c.hidden_dim);
  for (std::size_t i = 0; i < c.mlp_layers; ++i) {
    const std::size_t in = i == 0 ? c.attention_dim : c.mlp_hidden;
    const std::size_t out = i + 1 == c.mlp_layers ? 1 : c.mlp_hidden;
    add("mlp" + std::to_string(i) + ".weight", in, out);
    add("mlp" + std::to_string(i) + ".bias", 1, out);
  }
  return l;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::string suf(suffix);
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

UniLP::UniLP(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, "model.init"));
  for (const auto& [name, shape] : layout_of(config_).shapes) {
    const auto [r, k] = shape;
    Tensor t;
    if (name == "embed" || name.starts_with("label.")) {
      t = ad::normal_tensor(rng, r, k, 0.1);
    } else if (ends_with(name, ".bias")) {
      t = Tensor(r, k);
    } else {
      t = ad::glorot_uniform(rng, r, k);
    }
    params_.add(name, std::move(t));
  }
}

UniLP::UniLP(ModelConfig config, const ad::ParamStore& params) : config_(std::move(config)) {
  config_.validate();
  for (const auto& [name, shape] : layout_of(config_).shapes) {
    std::size_t idx;
    try {
      idx = params.index_of(name);
    } catch (const std::out_of_range&) {
      throw DataError("checkpoint lacks parameter " + name);
    }
    const Tensor& t = params.value(idx);
    if (t.rows != shape.first || t.cols != shape.second) throw DataError("parameter " + name + " has the wrong shape");
    if (!t.all_finite()) throw DataError("parameter " + name + " holds non-finite values");
    params_.add(name, t);
  }
}

Var UniLP::encode(Tape& tape, std::span<const LabeledSubgraph* const> subgraphs) const {
  if (subgraphs.empty()) throw NumericError("encode: no subgraphs");
  std::vector<std::uint32_t> labels, offsets{0}, neighbors, segments{0};
  for (const LabeledSubgraph* sub : subgraphs) {
    if (sub->size() == 0) throw NumericError("encode: empty subgraph");
    if (!sub->labeled()) throw NumericError("encode: subgraph is not labeled");
    const auto base = segments.back();
    for (std::uint32_t i = 0; i < sub->size(); ++i) {
      labels.push_back(config_.vocab.index(sub->labels[i]));
      for (auto k = sub->offsets[i]; k < sub->offsets[i + 1]; ++k) neighbors.push_back(base + sub->neighbors[k]);
      offsets.push_back(static_cast<std::uint32_t>(neighbors.size()));
    }
    segments.push_back(base + static_cast<std::uint32_t>(sub->size()));
  }
  Var h = ad::embed_lookup(tape.param("embed"), labels);
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    Var self = ad::matmul(h, tape.param(p + ".self"));
    Var neigh = ad::matmul(ad::neighbor_mean(h, offsets, neighbors), tape.param(p + ".neigh"));
    h = ad::leaky_relu(ad::add_row(ad::add(self, neigh), tape.param(p + ".bias")), config_.leaky_slope);
  }
  return ad::segment_mean(h, segments);
}

Var UniLP::attention(Tape& tape, Var h_query, Var h_context) const {
  const std::size_t m = h_context.rows();
  Var pairs = ad::concat_cols(ad::repeat_rows(h_query, m), h_context);
  Var keys = ad::leaky_relu(ad::matmul(pairs, tape.param("attn.key")), config_.leaky_slope);
  Var scores = ad::matmul(keys, ad::transpose(tape.param("attn.p")));
  return ad::softmax(ad::transpose(scores));
}

namespace {

Var labeled_members(Tape& tape, Var h_context, std::span<const std::uint8_t> labels) {
  if (labels.size() != h_context.rows()) throw NumericError("context labels do not match encodings");
  const Var rows[] = {tape.param("label.plus"), tape.param("label.minus")};
  Var table = ad::stack_rows(rows);
  std::vector<std::uint32_t> pick(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) pick[i] = labels[i] ? 0 : 1;
  return ad::add(h_context, ad::embed_lookup(table, pick));
}

}  // namespace

Var UniLP::contextualize(Tape& tape, Var alpha, Var h_context, std::span<const std::uint8_t> labels) const {
  Var values = ad::matmul(labeled_members(tape, h_context, labels), tape.param("attn.value"));
  return ad::matmul(alpha, values);
}

Var UniLP::attend(Tape& tape, Var h_query, Var h_context, std::span<const std::uint8_t> labels) const {
  const std::size_t m = h_context.rows();
  Var pairs = ad::concat_cols(ad::repeat_rows(h_query, m), h_context);
  Var keys = ad::leaky_relu(ad::matmul(pairs, tape.param("attn.key")), config_.leaky_slope);
  Var values = ad::matmul(labeled_members(tape, h_context, labels), tape.param("attn.value"));
  Var p = tape.param("attn.p");
  const std::size_t width = config_.attention_dim / config_.heads;
  Var out;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const std::size_t b = h * width, e = b + width;
    Var scores = ad::matmul(ad::slice_cols(keys, b, e), ad::transpose(ad::slice_cols(p, b, e)));
    Var alpha = ad::softmax(ad::transpose(scores));
    Var head = ad::matmul(alpha, ad::slice_cols(values, b, e));
    out = h == 0 ? head : ad::concat_cols(out, head);
  }
  return out;
}

Var UniLP::predict(Tape& tape, Var h_tilde) const {
  Var x = h_tilde;
  for (std::size_t i = 0; i < config_.mlp_layers; ++i) {
    const std::string p = "mlp" + std::to_string(i);
    x = ad::add_row(ad::matmul(x, tape.param(p + ".weight")), tape.param(p + ".bias"));
    if (i + 1 < config_.mlp_layers) x = ad::leaky_relu(x, config_.leaky_slope);
  }
  return ad::sigmoid(x);
}

Var UniLP::head_input(Tape& tape, Var h_query, Var h_context, std::span<const std::uint8_t> labels) const {
  if (config_.mode == ModelMode::NoContext) return ad::matmul(h_query, tape.param("attn.value"));
  return attend(tape, h_query, h_context, labels);
}

void UniLP::check_context(const LabeledSubgraph& query, std::size_t context_size) const {
  if (config_.mode == ModelMode::InContext && context_size == 0) {
    throw ConfigError("in-context prediction needs a non-empty context");
  }
  (void)query;
}

Var UniLP::forward(Tape& tape, const LabeledSubgraph& query, const ContextSet& context) const {
  if (config_.mode == ModelMode::NoContext) {
    const LabeledSubgraph* only[] = {&query};
    Var hq = encode(tape, only);
    return predict(tape, head_input(tape, hq, hq, {}));
  }
  check_context(query, context.size());
  const auto key = query.target.key();
  std::vector<const LabeledSubgraph*> all{&query};
  for (const LabeledSubgraph* m : context.members()) {
    if (m->target.key() == key && m->nodes.size() > 0) {
      // same pair extracted from the same graph would leak the query
      if (context.source == ContextSource::TargetGraph) throw ConfigError("query link appears in its own context");
    }
    all.push_back(m);
  }
  Var h = encode(tape, all);
  Var hq = ad::slice_rows(h, 0, 1);
  Var hc = ad::slice_rows(h, 1, all.size());
  const auto labels = context.labels();
  return predict(tape, head_input(tape, hq, hc, labels));
}

Var UniLP::forward(Tape& tape, const LabeledSubgraph& query, const EncodedContext& context) const {
  const LabeledSubgraph* only[] = {&query};
  Var hq = encode(tape, only);
  if (config_.mode == ModelMode::NoContext) return predict(tape, head_input(tape, hq, hq, {}));
  check_context(query, context.labels.size());
  Var hc = tape.constant(context.encodings);
  return predict(tape, head_input(tape, hq, hc, context.labels));
}

Tensor UniLP::encode_value(const LabeledSubgraph& sub) const {
  Tape tape(&params_, false);
  const LabeledSubgraph* only[] = {&sub};
  return encode(tape, only).value();
}

EncodedContext UniLP::encode_context(const ContextSet& context) const {
  EncodedContext out;
  out.labels = context.labels();
  if (context.empty()) return out;
  Tape tape(&params_, false);
  out.encodings = encode(tape, context.members()).value();
  return out;
}

std::vector<double> UniLP::attention_weights(const LabeledSubgraph& query, const ContextSet& context) const {
  if (context.empty()) throw ConfigError("attention needs a non-empty context");
  Tape tape(&params_, false);
  std::vector<const LabeledSubgraph*> all{&query};
  for (const auto* m : context.members()) all.push_back(m);
  Var h = encode(tape, all);
  Var alpha = attention(tape, ad::slice_rows(h, 0, 1), ad::slice_rows(h, 1, all.size()));
  return alpha.value().data;
}

namespace {
double clamp_prob(double p) { return std::clamp(p, ad::kProbClamp, 1.0 - ad::kProbClamp); }
}  // namespace

double UniLP::predict_probability(const LabeledSubgraph& query, const ContextSet& context) const {
  Tape tape(&params_, false);
  return clamp_prob(forward(tape, query, context).item());
}

double UniLP::predict_probability(const LabeledSubgraph& query, const EncodedContext& context) const {
  Tape tape(&params_, false);
  return clamp_prob(forward(tape, query, context).item());
}

double UniLP::predict_pair(const Graph& g, NodePair query, const ContextSet& context) const {
  LabeledSubgraph sub = extract_labeled(g, query, config_.extract_options());
  return predict_probability(sub, context);
}

}  // namespace unilp
