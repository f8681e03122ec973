#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "unilp/autodiff.hpp"
#include "unilp/errors.hpp"
#include "unilp/evaluation.hpp"
#include "unilp/graph.hpp"
#include "unilp/heuristics.hpp"
#include "unilp/model.hpp"
#include "unilp/split.hpp"
#include "unilp/training.hpp"

namespace py = pybind11;
using namespace unilp;

namespace {

using PyPair = std::pair<NodeId, NodeId>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

std::vector<NodePair> pairs_in(const std::vector<PyPair>& xs) {
  std::vector<NodePair> out;
  out.reserve(xs.size());
  for (auto [u, v] : xs) out.push_back({u, v});
  return out;
}

std::vector<PyPair> pairs_out(const std::vector<NodePair>& xs) {
  std::vector<PyPair> out;
  out.reserve(xs.size());
  for (const auto& p : xs) out.emplace_back(p.u, p.v);
  return out;
}

ModelConfig model_config(const py::handle& obj) {
  ModelConfig c = model_config_from_json(from_py(obj));
  c.validate();
  return c;
}

TrainConfig train_config(const py::handle& obj, ModelMode mode) {
  TrainConfig t = train_config_from_json(from_py(obj));
  t.validate(mode);
  return t;
}

HeuristicSpec heuristic_spec(const std::string& name, double beta, std::size_t length) {
  HeuristicSpec s;
  s.kind = parse_heuristic(name);
  s.katz_beta = beta;
  s.katz_len = length;
  return s;
}

py::dict record_dict(const TrainRecord& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["loss"] = e.loss;
    d["val_metric"] = e.val_metric;
    d["val_loss"] = e.val_loss;
    epochs.append(d);
  }
  py::dict out;
  out["epochs"] = epochs;
  out["best_epoch"] = r.best_epoch;
  out["best_metric"] = r.best_metric;
  out["stop_epoch"] = r.stop_epoch;
  out["stop_reason"] = r.stop_reason;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Link prediction on lattices and general graphs with in-context subgraph attention";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Graph>(m, "Graph")
      .def(py::init([](std::size_t n, const std::vector<PyPair>& edges) {
             const auto e = pairs_in(edges);
             return Graph::from_edges(n, e);
           }),
           py::arg("node_count"), py::arg("edges"))
      .def_property_readonly("node_count", &Graph::node_count)
      .def_property_readonly("edge_count", &Graph::edge_count)
      .def("edges", [](const Graph& g) { return pairs_out(g.edges()); })
      .def("has_edge", py::overload_cast<NodeId, NodeId>(&Graph::has_edge, py::const_))
      .def("degree", &Graph::degree)
      .def("neighbors",
           [](const Graph& g, NodeId u) {
             if (u >= g.node_count()) throw py::index_error("node id out of range");
             const auto nb = g.neighbors(u);
             return std::vector<NodeId>(nb.begin(), nb.end());
           })
      .def("__repr__", [](const Graph& g) {
        return "<Graph nodes=" + std::to_string(g.node_count()) + " edges=" + std::to_string(g.edge_count()) + ">";
      });

  m.def(
      "lattice",
      [](const std::string& kind, std::size_t rows, std::size_t cols, bool torus) {
        LatticeSpec s;
        if (kind == "grid") s.kind = LatticeKind::Grid;
        else if (kind == "triangular") s.kind = LatticeKind::Triangular;
        else throw ConfigError("unknown lattice kind: " + kind);
        s.rows = rows;
        s.cols = cols;
        s.torus = torus;
        return generate_lattice(s);
      },
      py::arg("kind"), py::arg("rows"), py::arg("cols"), py::arg("torus") = true);
  m.def(
      "sbm",
      [](std::vector<std::size_t> blocks, double p_in, double p_out, std::uint64_t seed) {
        return generate_sbm({std::move(blocks), p_in, p_out, seed});
      },
      py::arg("block_sizes"), py::arg("p_in"), py::arg("p_out"), py::arg("seed") = 0);
  m.def(
      "load_edge_list", [](const std::filesystem::path& path) { return load_edge_list(path).graph; },
      py::arg("path"));

  py::class_<DataSplit>(m, "Split")
      .def_readonly("seed", &DataSplit::seed)
      .def_readonly("node_count", &DataSplit::node_count)
      .def_property_readonly("observed", [](const DataSplit& s) { return pairs_out(s.observed); })
      .def_property_readonly("valid_pos", [](const DataSplit& s) { return pairs_out(s.valid_pos); })
      .def_property_readonly("valid_neg", [](const DataSplit& s) { return pairs_out(s.valid_neg); })
      .def_property_readonly("test_pos", [](const DataSplit& s) { return pairs_out(s.test_pos); })
      .def_property_readonly("test_neg", [](const DataSplit& s) { return pairs_out(s.test_neg); })
      .def("to_dict", [](const DataSplit& s) { return to_py(split_to_json(s)); })
      .def_static("from_dict", [](const py::handle& d) { return split_from_json(from_py(d)); })
      .def(py::self == py::self);

  m.def(
      "split_edges",
      [](const Graph& g, std::uint64_t seed, double train, double valid, double test) {
        return split_edges(g, {train, valid, test}, seed);
      },
      py::arg("graph"), py::arg("seed") = 0, py::arg("train") = 0.7, py::arg("valid") = 0.1, py::arg("test") = 0.2);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](std::string name, const DataSplit& s) { return make_dataset(std::move(name), s); }),
           py::arg("name"), py::arg("split"))
      .def_readonly("name", &Dataset::name)
      .def_readonly("split", &Dataset::split)
      .def_readonly("observed", &Dataset::observed)
      .def_readonly("full", &Dataset::full);

  m.def(
      "heuristic_scores",
      [](const std::string& name, const Graph& g, const std::vector<PyPair>& pairs, double beta, std::size_t length) {
        const auto p = pairs_in(pairs);
        return score_batch(heuristic_spec(name, beta, length), g, p);
      },
      py::arg("name"), py::arg("graph"), py::arg("pairs"), py::arg("katz_beta") = 0.005, py::arg("katz_len") = 5);
  m.def(
      "evaluate_heuristic",
      [](const std::string& name, const Dataset& d, std::size_t k, double beta, std::size_t length) {
        return to_py(to_json(evaluate_heuristic(heuristic_spec(name, beta, length), d, k)));
      },
      py::arg("name"), py::arg("dataset"), py::arg("hits_k") = 50, py::arg("katz_beta") = 0.005,
      py::arg("katz_len") = 5);

  m.def(
      "hits_at_k",
      [](const std::vector<double>& pos, const std::vector<double>& neg, std::size_t k) {
        return hits_at_k(pos, neg, k);
      },
      py::arg("pos"), py::arg("neg"), py::arg("k"));
  m.def("effective_k", &effective_k, py::arg("requested"), py::arg("negatives"));

  m.def(
      "verify_pattern",
      [](const Graph& g, const std::vector<NodeId>& anchors) {
        PairSet links;
        for (const auto& e : g.edges()) links.insert(e);
        return to_py(to_json(verify_connectivity_pattern(g, links, anchors)));
      },
      py::arg("graph"), py::arg("anchors") = std::vector<NodeId>{});

  py::class_<UniLP>(m, "Model")
      .def(py::init([](const py::handle& config, std::uint64_t seed) { return UniLP(model_config(config), seed); }),
           py::arg("config") = py::none(), py::arg("seed") = 0)
      .def_property_readonly("config", [](const UniLP& u) { return to_py(u.config_json()); })
      .def_property_readonly("parameter_count", [](const UniLP& u) { return u.params().scalar_count(); })
      .def(
          "save",
          [](const UniLP& u, const std::filesystem::path& path) {
            ad::save_checkpoint(path, nlohmann::json{{"model", u.config_json()}}, u.params());
          },
          py::arg("path"))
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            auto [meta, params] = ad::load_checkpoint(path);
            if (!meta.contains("model")) throw DataError("checkpoint " + path.string() + " carries no model config");
            return UniLP(model_config_from_json(meta["model"]), params);
          },
          py::arg("path"))
      .def(
          "predict",
          [](const UniLP& u, const Dataset& d, const std::vector<PyPair>& pairs, std::size_t context_size,
             std::uint64_t seed) {
            const auto p = pairs_in(pairs);
            SubgraphCache cache(d.observed, u.config().extract_options());
            EncodedContext enc;
            if (u.config().mode == ModelMode::InContext) {
              const auto [k_pos, k_neg] = context_counts(d, context_size, 0.5);
              const auto ctx_pairs = sample_context_pairs(d, k_pos, k_neg, seed);
              for (const auto& q : p) {
                for (const auto& c : ctx_pairs.positives)
                  if (c == q.canonical()) throw ConfigError("query pair appears in the sampled context");
                for (const auto& c : ctx_pairs.negatives)
                  if (c == q.canonical()) throw ConfigError("query pair appears in the sampled context");
              }
              enc = u.encode_context(build_context(ctx_pairs, cache));
            }
            py::gil_scoped_release release;
            return score_pairs(u, d.observed, p, enc);
          },
          py::arg("dataset"), py::arg("pairs"), py::arg("context_size") = 50, py::arg("seed") = 0);

  m.def(
      "pretrain",
      [](const UniLP& init, const std::vector<const Dataset*>& train, const std::vector<const Dataset*>& validation,
         const py::handle& config, std::uint64_t seed) {
        TrainConfig t = train_config(config, init.config().mode);
        t.seed = seed;
        py::gil_scoped_release release;
        TrainResult r = pretrain(init, train, validation, t);
        py::gil_scoped_acquire acquire;
        return py::make_tuple(std::move(r.model), record_dict(r.record));
      },
      py::arg("model"), py::arg("train"), py::arg("validation"), py::arg("config") = py::none(),
      py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const UniLP& u, const Dataset& d, std::size_t context_size, const std::string& perturb, std::size_t runs,
         std::size_t hits_k, std::uint64_t seed) {
        EvalOptions o;
        o.context_size = context_size;
        o.perturb = parse_perturbation(perturb);
        o.runs = runs;
        o.hits_k = hits_k;
        o.seed = seed;
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = evaluate_model(u, d, o);
        }
        return to_py(to_json(r));
      },
      py::arg("model"), py::arg("dataset"), py::arg("context_size") = 200, py::arg("perturb") = "none",
      py::arg("runs") = 1, py::arg("hits_k") = 50, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](const py::handle& config, std::uint64_t seed) {
        const ModelConfig c = model_config(config);
        const Dataset d = make_unsplit_dataset("gradcheck", generate_lattice({LatticeKind::Triangular, 5, 5, true}));
        SubgraphCache cache(d.observed, c.extract_options());
        const auto pairs = sample_context_pairs(d, 3, 2, seed);
        const LabeledSubgraph q = cache.get(pairs.positives.back());
        const ContextSet ctx =
            build_context({{pairs.positives.begin(), pairs.positives.begin() + 2}, pairs.negatives}, cache);
        UniLP model(c, seed);
        ad::Tape tape(&model.params());
        tape.backward(ad::bce(model.forward(tape, q, ctx), 1.0));
        const auto r = ad::finite_difference_check(
            model.params(),
            [&](const ad::ParamStore& p) {
              const UniLP probe(c, p);
              ad::Tape t(&probe.params(), false);
              return ad::bce(probe.forward(t, q, ctx), 1.0).item();
            },
            tape.param_grads());
        return r.max_rel_error;
      },
      py::arg("config") = py::none(), py::arg("seed") = 0);
}
