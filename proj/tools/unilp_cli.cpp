// Command-line entry point. Every subcommand resolves one experiment config
// (defaults, then --config, then flags), logs its hash and seed, and writes
// outputs atomically with the resolved config embedded.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "unilp/errors.hpp"
#include "unilp/evaluation.hpp"
#include "unilp/heuristics.hpp"
#include "unilp/io.hpp"
#include "unilp/rng.hpp"
#include "unilp/training.hpp"

using nlohmann::json;
using namespace unilp;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad " + what + " '" + s + "'");
}

double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad " + what + " '" + s + "'");
}

/// A graph named on the command line or in a config: an edge-list path, or
/// a generator spec "grid:RxC[:torus]", "triangular:RxC[:torus]",
/// "sbm:B1,B2,...:P_IN:P_OUT".
struct GraphSource {
  std::string text;
  std::string name;
  Graph graph;
};

bool is_generator_spec(const std::string& s) {
  return s.rfind("grid:", 0) == 0 || s.rfind("triangular:", 0) == 0 || s.rfind("sbm:", 0) == 0;
}

LatticeSpec parse_lattice(const std::string& kind, const std::string& dims, bool torus) {
  const auto rc = split_on(dims, 'x');
  if (rc.size() != 2) throw ConfigError("lattice size must look like RxC, got '" + dims + "'");
  LatticeSpec spec;
  spec.kind = kind == "grid" ? LatticeKind::Grid : LatticeKind::Triangular;
  spec.rows = parse_count(rc[0], "rows");
  spec.cols = parse_count(rc[1], "cols");
  spec.torus = torus;
  if (spec.rows < 3 || spec.cols < 3) throw ConfigError("lattices need at least 3 rows and 3 cols");
  return spec;
}

SbmSpec parse_sbm(const std::vector<std::string>& parts, std::uint64_t seed) {
  if (parts.size() != 4) throw ConfigError("sbm spec must be sbm:B1,B2,...:P_IN:P_OUT");
  SbmSpec spec;
  for (const auto& b : split_on(parts[1], ',')) spec.block_sizes.push_back(parse_count(b, "block size"));
  spec.p_in = parse_real(parts[2], "p_in");
  spec.p_out = parse_real(parts[3], "p_out");
  spec.seed = seed;
  if (spec.block_sizes.empty()) throw ConfigError("sbm needs at least one block");
  if (!(0.0 <= spec.p_out && spec.p_out <= spec.p_in && spec.p_in <= 1.0))
    throw ConfigError("sbm needs 0 <= p_out <= p_in <= 1");
  return spec;
}

GraphSource load_graph_source(const std::string& text, std::uint64_t seed) {
  GraphSource src{text, text, {}};
  if (!is_generator_spec(text)) {
    if (!fs::exists(text)) throw DataError("graph file not found: " + text);
    const LoadedGraph lg = load_edge_list(text);
    if (lg.self_loops_dropped > 0)
      std::cerr << "unilp: note dropped " << lg.self_loops_dropped << " self-loops from " << text << "\n";
    src.graph = lg.graph;
    src.name = fs::path(text).stem().string();
    return src;
  }
  const auto parts = split_on(text, ':');
  if (parts[0] == "sbm") {
    src.graph = generate_sbm(parse_sbm(parts, derive_seed(seed, "graph.sbm")));
    src.name = "sbm";
    return src;
  }
  if (parts.size() < 2 || parts.size() > 3 || (parts.size() == 3 && parts[2] != "torus"))
    throw ConfigError("lattice spec must be KIND:RxC[:torus], got '" + text + "'");
  src.graph = generate_lattice(parse_lattice(parts[0], parts[1], parts.size() == 3));
  src.name = parts[0] + "_" + parts[1];
  return src;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// Experiment config

const std::set<std::string> kTopKeys = {"seed", "graphs", "split", "model", "train", "eval"};
const std::set<std::string> kEvalKeys = {"context_size", "ratio", "runs", "hits_k", "sizes", "sbm"};

struct Experiment {
  std::uint64_t seed = 0;
  std::vector<std::string> graphs;
  SplitFractions split;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  std::vector<std::size_t> sizes = {10, 25, 50, 100, 200, 400};
  std::string sbm_text = "sbm:50,50:0.3:0.01";
  bool model_mode_set = false;

  json to_json() const {
    json t = unilp::to_json(train);
    t.erase("seed");
    t.erase("jobs");
    return {{"seed", seed},
            {"graphs", graphs},
            {"split", {{"train", split.train}, {"valid", split.valid}, {"test", split.test}}},
            {"model", unilp::to_json(model)},
            {"train", t},
            {"eval",
             {{"context_size", eval.context_size},
              {"ratio", eval.ratio},
              {"runs", eval.runs},
              {"hits_k", eval.hits_k},
              {"sizes", sizes},
              {"sbm", sbm_text}}}};
  }
  std::string hash() const { return hex(fnv1a(to_json().dump())); }
};

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

void apply_config_file(Experiment& ex, const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  reject_unknown(doc, kTopKeys, "config");
  try {
    if (doc.contains("seed")) ex.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("graphs")) ex.graphs = doc["graphs"].get<std::vector<std::string>>();
    if (doc.contains("split")) {
      reject_unknown(doc["split"], {"train", "valid", "test"}, "split");
      ex.split.train = doc["split"].value("train", ex.split.train);
      ex.split.valid = doc["split"].value("valid", ex.split.valid);
      ex.split.test = doc["split"].value("test", ex.split.test);
    }
    if (doc.contains("model")) {
      json merged = to_json(ex.model);
      merged.update(doc["model"]);
      ex.model = model_config_from_json(merged);
      ex.model_mode_set = doc["model"].contains("mode");
    }
    if (doc.contains("train")) {
      json merged = to_json(ex.train);
      merged.update(doc["train"]);
      ex.train = train_config_from_json(merged);
    }
    if (doc.contains("eval")) {
      const json& e = doc["eval"];
      reject_unknown(e, kEvalKeys, "eval");
      ex.eval.context_size = e.value("context_size", ex.eval.context_size);
      ex.eval.ratio = e.value("ratio", ex.eval.ratio);
      ex.eval.runs = e.value("runs", ex.eval.runs);
      ex.eval.hits_k = e.value("hits_k", ex.eval.hits_k);
      if (e.contains("sizes")) ex.sizes = e["sizes"].get<std::vector<std::size_t>>();
      ex.sbm_text = e.value("sbm", ex.sbm_text);
    }
  } catch (const json::type_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void validate(const Experiment& ex) {
  ex.model.validate();
  ex.train.validate(ex.model.mode);
  if (ex.eval.runs == 0) throw ConfigError("eval.runs must be at least 1");
  if (ex.eval.hits_k == 0) throw ConfigError("eval.hits_k must be at least 1");
  if (!(ex.eval.ratio > 0.0 && ex.eval.ratio < 1.0)) throw ConfigError("eval.ratio must lie in (0, 1)");
  if (ex.eval.context_size == 0) throw ConfigError("eval.context_size must be at least 1");
  if (ex.sizes.empty()) throw ConfigError("eval.sizes must not be empty");
  parse_sbm(split_on(ex.sbm_text, ':'), 0);
  const double total = ex.split.train + ex.split.valid + ex.split.test;
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

// ---------------------------------------------------------------------------
// Shared flags

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config JSON (flags override its fields)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "root seed for every random stream");
  cmd->add_option("--out", c.out, "output directory (created when missing)");
  cmd->add_option("--jobs", c.jobs, "worker threads, 0 = all cores; results do not depend on it");
}

Experiment resolve(const Common& c) {
  Experiment ex;
  if (!c.config.empty()) apply_config_file(ex, c.config);
  if (c.seed) ex.seed = *c.seed;
  ex.train.seed = ex.seed;
  ex.eval.seed = ex.seed;
  std::size_t jobs = c.jobs.value_or(1);
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  ex.train.jobs = ex.eval.jobs = jobs;
  ex.eval.sbm = parse_sbm(split_on(ex.sbm_text, ':'), 0);
  ex.eval.sbm.seed = 0;
  return ex;
}

void begin(const std::string& command, const Experiment& ex) {
  validate(ex);
  std::cerr << "unilp: command=" << command << " config_hash=" << ex.hash() << " seed=" << ex.seed << "\n";
}

fs::path output_path(const Common& c, const std::string& file) {
  fs::create_directories(c.out);
  return fs::path(c.out) / file;
}

void write_json(const Common& c, const std::string& file, json doc, const Experiment& ex) {
  doc["config"] = ex.to_json();
  doc["config_hash"] = ex.hash();
  const auto path = output_path(c, file);
  write_file_atomic(path, doc.dump(2) + "\n");
  std::cerr << "unilp: wrote " << path.string() << "\n";
}

/// CSV with the config echo in leading comment lines.
void write_csv(const Common& c, const std::string& file, const std::string& body, const Experiment& ex) {
  const std::string head = "# config_hash=" + ex.hash() + "\n# config=" + ex.to_json().dump() + "\n";
  const auto path = output_path(c, file);
  write_file_atomic(path, head + body);
  std::cerr << "unilp: wrote " << path.string() << "\n";
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

/// Split of a graph source; a given split file wins over fresh splitting.
Dataset dataset_for(const std::string& graph_text, const std::string& split_path, const Experiment& ex,
                    std::size_t index) {
  if (!split_path.empty()) {
    DataSplit s = load_split(split_path);
    std::string name = fs::path(split_path).stem().string();
    if (!graph_text.empty()) {
      const GraphSource src = load_graph_source(graph_text, ex.seed);
      if (src.graph.node_count() != s.node_count)
        throw DataError("split " + split_path + " does not match graph " + graph_text);
      name = src.name;
    }
    return make_dataset(name, std::move(s));
  }
  if (graph_text.empty()) throw ConfigError("give --graph or --split");
  const GraphSource src = load_graph_source(graph_text, ex.seed);
  return make_dataset(src.name, split_edges(src.graph, ex.split, derive_seed(ex.seed, "split", index)));
}

UniLP load_model(const std::string& path, Experiment& ex) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
  auto [config, params] = ad::load_checkpoint(path);
  if (!config.contains("model")) throw DataError("checkpoint " + path + " carries no model config");
  ex.model = model_config_from_json(config["model"]);
  return UniLP(ex.model, params);
}

// ---------------------------------------------------------------------------
// Subcommands

int run_generate(const Common& c, Experiment ex, const std::string& kind, std::size_t rows, std::size_t cols, bool torus,
                 const std::string& blocks, double p_in, double p_out) {
  std::string text;
  if (kind == "sbm") {
    text = "sbm:" + blocks + ":" + format_double(p_in) + ":" + format_double(p_out);
  } else if (kind == "grid" || kind == "triangular") {
    text = kind + ":" + std::to_string(rows) + "x" + std::to_string(cols) + (torus ? ":torus" : "");
  } else {
    throw ConfigError("unknown graph kind '" + kind + "'");
  }
  ex.graphs = {text};
  begin("generate", ex);
  const GraphSource src = load_graph_source(text, ex.seed);
  std::ostringstream body;
  body << "# generated " << text << " seed=" << ex.seed << " config_hash=" << ex.hash() << "\n";
  write_edge_list(src.graph, body);
  const auto path = output_path(c, src.name + ".edges");
  write_file_atomic(path, body.str());
  std::cout << "nodes=" << src.graph.node_count() << " edges=" << src.graph.edge_count() << " file=" << path.string()
            << "\n";
  return 0;
}

int run_split(const Common& c, Experiment ex, const std::string& graph) {
  ex.graphs = {graph};
  begin("split", ex);
  const GraphSource src = load_graph_source(graph, ex.seed);
  DataSplit s = split_edges(src.graph, ex.split, derive_seed(ex.seed, "split", 0));
  if (!is_generator_spec(graph)) s.id_map = load_edge_list(graph).id_map;
  json doc = split_to_json(s);
  write_json(c, src.name + ".split.json", doc, ex);
  std::cout << "observed=" << s.observed.size() << " valid=" << s.valid_pos.size() << " test=" << s.test_pos.size()
            << "\n";
  return 0;
}

int run_heuristic(const Common& c, Experiment ex, const std::string& method, const std::string& graph, const std::string& split,
                  std::optional<double> beta, std::optional<std::size_t> length) {
  if (!graph.empty()) ex.graphs = {graph};
  begin("heuristic", ex);
  HeuristicSpec spec;
  spec.kind = parse_heuristic(method);
  if (beta) spec.katz_beta = *beta;
  if (length) spec.katz_len = *length;
  const Dataset d = dataset_for(graph, split, ex, 0);
  if (auto w = katz_warning(spec, d.observed)) std::cerr << "unilp: warning " << *w << "\n";
  const auto pos = score_batch(spec, d.observed, d.split.test_pos);
  const auto neg = score_batch(spec, d.observed, d.split.test_neg);
  std::ostringstream body;
  body << "u,v,label,score\n";
  for (std::size_t i = 0; i < pos.size(); ++i)
    body << d.split.test_pos[i].u << "," << d.split.test_pos[i].v << ",1," << format_double(pos[i]) << "\n";
  for (std::size_t i = 0; i < neg.size(); ++i)
    body << d.split.test_neg[i].u << "," << d.split.test_neg[i].v << ",0," << format_double(neg[i]) << "\n";
  const std::string tag = heuristic_name(spec.kind);
  write_csv(c, "heuristic_" + tag + "_scores.csv", body.str(), ex);
  const EvalReport r = evaluate_heuristic(spec, d, ex.eval.hits_k);
  write_json(c, "heuristic_" + tag + ".json", to_json(r), ex);
  std::cout << tag << " " << r.metric() << "=" << std::fixed << std::setprecision(4) << r.mean << "\n";
  return 0;
}

int run_pretrain(const Common& c, Experiment ex, const std::vector<std::string>& graphs) {
  if (!graphs.empty()) ex.graphs = graphs;
  if (ex.graphs.empty()) throw ConfigError("pretrain needs graphs (config 'graphs' or --graph)");
  begin("pretrain", ex);
  std::vector<Dataset> data;
  for (std::size_t i = 0; i < ex.graphs.size(); ++i) data.push_back(dataset_for(ex.graphs[i], "", ex, i));
  std::vector<const Dataset*> ptrs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ptrs.push_back(&data[i]);
    write_json(c, "split_" + std::to_string(i) + "_" + data[i].name + ".json", split_to_json(data[i].split), ex);
  }
  const UniLP init(ex.model, derive_seed(ex.seed, "model"));
  const TrainResult r = pretrain(init, ptrs, ptrs, ex.train, [](const EpochRecord& e) {
    std::cerr << "unilp: epoch=" << e.epoch << " loss=" << e.loss << " val_metric=" << e.val_metric
              << " val_loss=" << e.val_loss << "\n";
  });
  write_csv(c, "train_record.csv", train_record_csv(r.record), ex);
  json meta = {{"model", to_json(ex.model)},
               {"experiment", ex.to_json()},
               {"config_hash", ex.hash()},
               {"best_epoch", r.record.best_epoch},
               {"stop_reason", r.record.stop_reason}};
  const auto path = output_path(c, "checkpoint.json");
  ad::save_checkpoint(path, meta, r.model.params());
  std::cout << "best_epoch=" << r.record.best_epoch << " best_metric=" << r.record.best_metric
            << " stop=" << r.record.stop_reason << " checkpoint=" << path.string() << "\n";
  return r.record.stop_reason == "diverged" ? kExitNumeric : 0;
}

int run_finetune(const Common& c, Experiment ex, const std::string& ckpt, const std::string& graph, const std::string& split,
                 std::size_t links, std::size_t steps) {
  const UniLP model = load_model(ckpt, ex);
  if (!graph.empty()) ex.graphs = {graph};
  begin("finetune", ex);
  const Dataset d = dataset_for(graph, split, ex, 0);
  const FinetuneResult r = finetune(model, d, links, steps, ex.train);
  std::ostringstream body;
  body << "step,loss\n";
  for (std::size_t i = 0; i < r.step_loss.size(); ++i) body << i + 1 << "," << format_double(r.step_loss[i]) << "\n";
  write_csv(c, "finetune_loss.csv", body.str(), ex);
  json meta = {{"model", to_json(ex.model)}, {"experiment", ex.to_json()}, {"config_hash", ex.hash()},
               {"finetuned_on", d.name},     {"links", links},              {"steps", steps}};
  ad::save_checkpoint(output_path(c, "checkpoint_finetuned.json"), meta, r.model.params());
  std::cout << "steps=" << steps << " final_loss=" << (r.step_loss.empty() ? 0.0 : r.step_loss.back()) << "\n";
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string graph;
  std::string split;
  std::optional<std::size_t> context_size;
  std::optional<double> ratio;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> hits_k;
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "model checkpoint JSON")->required();
  cmd->add_option("--graph", f.graph, "edge-list path or generator spec");
  cmd->add_option("--split", f.split, "split JSON from `split` or `pretrain`");
  cmd->add_option("--context-size", f.context_size, "per-side in-context links");
  cmd->add_option("--ratio", f.ratio, "positive fraction of the context");
  cmd->add_option("--runs", f.runs, "independent context draws");
  cmd->add_option("--hits-k", f.hits_k, "K of Hits@K (clipped to the negative count)");
}

void apply_eval_flags(Experiment& ex, const EvalFlags& f) {
  if (f.context_size) ex.eval.context_size = *f.context_size;
  if (f.ratio) ex.eval.ratio = *f.ratio;
  if (f.runs) ex.eval.runs = *f.runs;
  if (f.hits_k) ex.eval.hits_k = *f.hits_k;
  if (!f.graph.empty()) ex.graphs = {f.graph};
}

void emit_reports(const Common& c, const std::string& stem, const std::vector<EvalReport>& reports,
                  const Experiment& ex, json extra = json::object()) {
  std::string body = report_csv_header();
  json arr = json::array();
  for (const auto& r : reports) {
    body += report_csv_rows(r);
    arr.push_back(to_json(r));
    std::cout << r.experiment << " " << r.dataset << " context=" << r.context_size << " perturb=" << r.perturb << " "
              << r.metric() << "=" << std::fixed << std::setprecision(4) << r.mean << " std=" << r.std << "\n";
  }
  write_csv(c, stem + ".csv", body, ex);
  extra["reports"] = arr;
  write_json(c, stem + ".json", extra, ex);
}

int run_eval(const Common& c, Experiment ex, const EvalFlags& f) {
  const UniLP model = load_model(f.checkpoint, ex);
  apply_eval_flags(ex, f);
  begin("eval", ex);
  const Dataset d = dataset_for(f.graph, f.split, ex, 0);
  emit_reports(c, "eval", {evaluate_model(model, d, ex.eval)}, ex);
  return 0;
}

int run_sweep(const Common& c, Experiment ex, const EvalFlags& f, const std::vector<std::size_t>& sizes) {
  const UniLP model = load_model(f.checkpoint, ex);
  apply_eval_flags(ex, f);
  if (!sizes.empty()) ex.sizes = sizes;
  begin("sweep", ex);
  const Dataset d = dataset_for(f.graph, f.split, ex, 0);
  const SweepResult s = context_size_sweep(model, d, ex.sizes, ex.eval);
  emit_reports(c, "sweep", s.reports, ex, {{"spearman", s.spearman}});
  std::cout << "spearman=" << s.spearman << "\n";
  return 0;
}

int run_perturb(const Common& c, Experiment ex, const EvalFlags& f, const std::vector<std::string>& modes) {
  const UniLP model = load_model(f.checkpoint, ex);
  apply_eval_flags(ex, f);
  begin("perturb", ex);
  const Dataset d = dataset_for(f.graph, f.split, ex, 0);
  std::vector<EvalReport> reports;
  for (const auto& m : modes) {
    EvalOptions o = ex.eval;
    o.perturb = parse_perturbation(m);
    reports.push_back(evaluate_model(model, d, o));
  }
  emit_reports(c, "perturb", reports, ex);
  return 0;
}

int run_verify(const Common& c, Experiment ex, const std::string& kind, std::size_t rows, std::size_t cols, bool torus,
               const std::string& graph, const std::vector<NodeId>& anchors) {
  const std::string text =
      graph.empty() ? kind + ":" + std::to_string(rows) + "x" + std::to_string(cols) + (torus ? ":torus" : "") : graph;
  ex.graphs = {text};
  begin("verify-pattern", ex);
  const GraphSource src = load_graph_source(text, ex.seed);
  PairSet links;
  for (const auto& e : src.graph.edges()) links.insert(e);
  const PatternStats s = verify_connectivity_pattern(src.graph, links, anchors);
  auto show = [](const Rational& r, std::uint64_t num, std::uint64_t den) {
    return (r.defined() ? r.str() : std::string("undefined")) + " (" + std::to_string(num) + "/" +
           std::to_string(den) + ")";
  };
  std::cout << "p_A2=" << show(s.p_a2, s.a2_links, s.a2_pairs) << " p_A3=" << show(s.p_a3, s.a3_links, s.a3_pairs)
            << " pairs=" << s.pairs << "\n";
  write_json(c, "pattern_" + src.name + ".json", to_json(s), ex);
  return 0;
}

int run_transfer(const Common& c, Experiment ex, const std::string& target, const std::string& extra) {
  if (!ex.model_mode_set) ex.model.mode = ModelMode::NoContext;
  ex.graphs = {target, extra};
  begin("transfer-probe", ex);
  const Dataset t = dataset_for(target, "", ex, 0);
  const GraphSource e = load_graph_source(extra, derive_seed(ex.seed, "extra"));
  const TransferResult r = transfer_probe(t, e.graph, ex.model, ex.train);
  json doc = {{"target", t.name},
              {"extra", e.name},
              {"k", r.k},
              {"hits_target_only", r.hits_target_only},
              {"hits_with_extra", r.hits_with_extra},
              {"delta", r.delta},
              {"best_epoch_target_only", r.record_target_only.best_epoch},
              {"best_epoch_with_extra", r.record_with_extra.best_epoch}};
  write_json(c, "transfer.json", doc, ex);
  std::cout << "hits@" << r.k << " target_only=" << r.hits_target_only << " with_extra=" << r.hits_with_extra
            << " delta=" << r.delta << "\n";
  return 0;
}

/// Radius-1, F=8 model with a 4-member context on a random graph.
int run_gradcheck(const Common& c, Experiment ex) {
  ex.model = ModelConfig{};
  ex.model.embed_dim = ex.model.hidden_dim = ex.model.attention_dim = ex.model.mlp_hidden = 8;
  begin("gradcheck", ex);
  Rng rng(derive_seed(ex.seed, "gradcheck.graph"));
  std::vector<NodePair> edges;
  for (NodeId u = 0; u < 24; ++u) {
    for (NodeId v = u + 1; v < 24; ++v) {
      if (rng.uniform(0.0, 1.0) < 0.15) edges.push_back({u, v});
    }
  }
  const Dataset d = make_unsplit_dataset("random", Graph::from_edges(24, edges));
  SubgraphCache cache(d.observed, ex.model.extract_options());
  const auto pairs = sample_context_pairs(d, 3, 2, derive_seed(ex.seed, "gradcheck.context"));
  const NodePair query = pairs.positives.back();
  ContextPairs ctx_pairs{{pairs.positives.begin(), pairs.positives.begin() + 2}, pairs.negatives};
  const ContextSet ctx = build_context(ctx_pairs, cache);
  const LabeledSubgraph q = cache.get(query);
  UniLP model(ex.model, derive_seed(ex.seed, "model"));
  ad::Tape tape(&model.params());
  tape.backward(ad::bce(model.forward(tape, q, ctx), 1.0));
  const ModelConfig cfg = ex.model;
  const auto r = ad::finite_difference_check(
      model.params(),
      [&](const ad::ParamStore& p) {
        const UniLP probe(cfg, p);
        ad::Tape t(&probe.params(), false);
        return ad::bce(probe.forward(t, q, ctx), 1.0).item();
      },
      tape.param_grads());
  const bool ok = r.max_rel_error < 1e-4;
  std::cout << "max_rel_error=" << std::scientific << std::setprecision(3) << r.max_rel_error
            << " compared=" << r.compared << " worst=" << r.worst_param << " " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : kExitNumeric;
}

int fail(int code, const char* kind, const std::string& reason) {
  std::string flat = reason;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  std::replace(flat.begin(), flat.end(), '"', '\'');
  std::cerr << "unilp: error=" << kind << " reason=\"" << flat << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UniLP link prediction toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  Common common;

  std::string kind = "grid", blocks = "50,50", graph, split_path, method = "cn", checkpoint;
  std::size_t rows = 10, cols = 10, links = 200, steps = 100;
  bool torus = false;
  double p_in = 0.3, p_out = 0.01;
  std::optional<double> f_train, f_valid, f_test, beta, lr;
  std::optional<std::size_t> length, hits_k, epochs, context_k, patience;
  std::optional<std::string> mode;
  std::vector<std::string> graphs;
  std::vector<std::size_t> sizes;
  std::vector<std::string> modes = {"none", "flip_label", "random_context"};
  std::vector<NodeId> anchors;
  std::string target = "grid:12x12:torus", extra = "triangular:12x12:torus";
  EvalFlags ef;

  auto lattice_flags = [&](CLI::App* cmd) {
    cmd->add_option("--rows", rows, "lattice rows");
    cmd->add_option("--cols", cols, "lattice columns");
    cmd->add_flag("--torus", torus, "wrap lattice edges around");
  };
  auto train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "train.max_epochs");
    cmd->add_option("--patience", patience, "train.patience");
    cmd->add_option("--context-k", context_k, "train.context_k, per-side in-context links per query");
    cmd->add_option("--lr", lr, "train.lr");
    cmd->add_option("--mode", mode, "model.mode: icl or no_context");
  };

  auto* gen = app.add_subcommand("generate", "write a lattice or SBM graph as an edge list");
  add_common(gen, common);
  gen->add_option("--kind", kind, "grid, triangular or sbm")->check(CLI::IsMember({"grid", "triangular", "sbm"}));
  lattice_flags(gen);
  gen->add_option("--blocks", blocks, "SBM block sizes, comma separated");
  gen->add_option("--p-in", p_in, "SBM within-block probability");
  gen->add_option("--p-out", p_out, "SBM across-block probability");

  auto* spl = app.add_subcommand("split", "split a graph into observed, validation and test links");
  add_common(spl, common);
  spl->add_option("--graph", graph, "edge-list path or generator spec")->required();
  spl->add_option("--train", f_train, "split.train, observed fraction");
  spl->add_option("--valid", f_valid, "split.valid, validation fraction");
  spl->add_option("--test", f_test, "split.test, test fraction");

  auto* heu = app.add_subcommand("heuristic", "score test links with a classical heuristic");
  add_common(heu, common);
  heu->add_option("--method", method, "cn, aa, ra, pa, sp or katz")->required();
  heu->add_option("--graph", graph, "edge-list path or generator spec");
  heu->add_option("--split", split_path, "split JSON");
  heu->add_option("--beta", beta, "Katz damping");
  heu->add_option("--length", length, "Katz walk length");
  heu->add_option("--hits-k", hits_k, "eval.hits_k");

  auto* pre = app.add_subcommand("pretrain", "pretrain a model on one or more graphs");
  add_common(pre, common);
  pre->add_option("--graph", graphs, "training graph, repeatable (replaces config graphs)");
  train_flags(pre);

  auto* fin = app.add_subcommand("finetune", "continue training on a target graph's links");
  add_common(fin, common);
  fin->add_option("--checkpoint", checkpoint, "model checkpoint JSON")->required();
  fin->add_option("--graph", graph, "edge-list path or generator spec");
  fin->add_option("--split", split_path, "split JSON");
  fin->add_option("--links", links, "positives and negatives each");
  fin->add_option("--steps", steps, "optimizer steps");
  fin->add_option("--lr", lr, "train.lr");

  auto* ev = app.add_subcommand("eval", "Hits@K of a model on test links");
  add_common(ev, common);
  add_eval_flags(ev, ef);
  auto* sw = app.add_subcommand("sweep", "evaluate over a series of context sizes");
  add_common(sw, common);
  add_eval_flags(sw, ef);
  sw->add_option("--sizes", sizes, "eval.sizes, per-side context sizes")->delimiter(',');
  auto* pe = app.add_subcommand("perturb", "evaluate under context perturbations");
  add_common(pe, common);
  add_eval_flags(pe, ef);
  pe->add_option("--modes", modes, "none, flip_label, random_context")->delimiter(',');

  auto* ver = app.add_subcommand("verify-pattern", "exact p(link | A2) and p(link | A3) of a graph");
  add_common(ver, common);
  ver->add_option("--kind", kind, "grid or triangular")->check(CLI::IsMember({"grid", "triangular"}));
  lattice_flags(ver);
  ver->add_option("--graph", graph, "edge-list path or generator spec instead of a lattice");
  ver->add_option("--anchors", anchors, "only enumerate pairs touching these nodes")->delimiter(',');

  auto* tra = app.add_subcommand("transfer-probe", "target-only vs target+extra training of a no-context model");
  add_common(tra, common);
  tra->add_option("--target", target, "target graph");
  tra->add_option("--extra", extra, "extra training graph");
  train_flags(tra);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  add_common(gc, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitConfig, "config", e.what());
  }

  try {
    Experiment ex = resolve(common);
    if (f_train) ex.split.train = *f_train;
    if (f_valid) ex.split.valid = *f_valid;
    if (f_test) ex.split.test = *f_test;
    if (hits_k) ex.eval.hits_k = *hits_k;
    if (epochs) ex.train.max_epochs = *epochs;
    if (patience) ex.train.patience = *patience;
    if (context_k) ex.train.context_k = *context_k;
    if (lr) ex.train.lr = *lr;
    if (mode) {
      ex.model.mode = parse_mode(*mode);
      ex.model_mode_set = true;
    }
    if (gen->parsed()) return run_generate(common, ex, kind, rows, cols, torus, blocks, p_in, p_out);
    if (spl->parsed()) return run_split(common, ex, graph);
    if (heu->parsed()) return run_heuristic(common, ex, method, graph, split_path, beta, length);
    if (pre->parsed()) return run_pretrain(common, ex, graphs);
    if (fin->parsed()) return run_finetune(common, ex, checkpoint, graph, split_path, links, steps);
    if (ev->parsed()) return run_eval(common, ex, ef);
    if (sw->parsed()) return run_sweep(common, ex, ef, sizes);
    if (pe->parsed()) return run_perturb(common, ex, ef, modes);
    if (ver->parsed()) return run_verify(common, ex, kind, rows, cols, torus, graph, anchors);
    if (tra->parsed()) return run_transfer(common, ex, target, extra);
    if (gc->parsed()) return run_gradcheck(common, ex);
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const DataError& e) {
    return fail(kExitData, "data", e.what());
  } catch (const NumericError& e) {
    return fail(kExitNumeric, "numeric", e.what());
  } catch (const std::exception& e) {
    return fail(kExitData, "io", e.what());
  }
  return kExitConfig;
}
