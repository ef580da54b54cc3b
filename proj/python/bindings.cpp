#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kgx/cli.hpp"
#include "kgx/eval_metrics.hpp"
#include "kgx/kg_store.hpp"
#include "kgx/rule.hpp"
#include "kgx/rule_engine.hpp"

namespace py = pybind11;
using namespace kgx;

namespace {

py::dict metrics_dict(const RuleMetrics &m) {
    py::dict d;
    d["support"] = m.support;
    d["head_coverage"] = m.head_coverage;
    d["std_confidence"] = m.std_confidence;
    d["body_pairs"] = m.body_pairs;
    return d;
}

TripleStore store_from_triples(const std::vector<std::tuple<std::string, std::string, std::string>> &ts) {
    TripleStoreBuilder b;
    for (const auto &[s, p, o] : ts)
        b.add(s, p, o);
    return std::move(b).build();
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Rule metrics, mining, parsing and text metrics for knowledge-graph rules";

    py::register_exception<Error>(m, "KgxError", PyExc_ValueError);

    py::class_<TripleStore>(m, "TripleStore")
        .def_static("from_file", &ingest_triples_file, py::arg("path"),
                    "Load a tab-separated triple file.")
        .def_static("from_triples", &store_from_triples, py::arg("triples"))
        .def_property_readonly("fact_count", py::overload_cast<>(&TripleStore::fact_count, py::const_))
        .def_property_readonly("entity_count", [](const TripleStore &s) { return s.entities().size(); })
        .def_property_readonly("predicate_count",
                               [](const TripleStore &s) { return s.predicates().size(); })
        .def("contains", [](const TripleStore &s, const std::string &sub, const std::string &pred,
                            const std::string &obj) {
            const auto a = s.entity(sub), b = s.entity(obj);
            const auto p = s.predicate(pred);
            return a && b && p && s.contains(*a, *p, *b);
        });

    py::class_<Rule>(m, "Rule")
        .def_property_readonly("id", &Rule::id)
        .def_property_readonly("variables", &Rule::variables)
        .def_property_readonly("constants", &Rule::constants)
        .def_property_readonly("relations", &Rule::relations)
        .def_property_readonly("atom_count", &Rule::atom_count)
        .def("render", [](const Rule &r, bool pretty) {
            return render_rule(r, pretty ? RenderStyle::pretty : RenderStyle::machine);
        }, py::arg("pretty") = false)
        .def("__eq__", [](const Rule &a, const Rule &b) { return a == b; })
        .def("__repr__", [](const Rule &r) { return "Rule(" + py::repr(py::str(render_rule(r))).cast<std::string>() + ")"; });

    m.def("parse_rule", [](const std::string &text) { return parse_rule(text); }, py::arg("text"));
    m.def("compute_metrics", [](const Rule &r, const TripleStore &s) {
        return metrics_dict(compute_metrics(r, s));
    }, py::arg("rule"), py::arg("store"));
    m.def("mine_rules", [](const TripleStore &s, double min_hc, double min_conf, std::size_t max_atoms,
                           unsigned jobs) {
        MiningThresholds th{min_hc, min_conf, max_atoms};
        py::list out;
        std::vector<MinedRule> mined;
        {
            py::gil_scoped_release release;
            mined = mine_rules(s, th, jobs);
        }
        for (const auto &mr : mined) {
            auto d = metrics_dict(mr.metrics);
            d["rule"] = mr.rule;
            out.append(d);
        }
        return out;
    }, py::arg("store"), py::arg("min_head_coverage") = 0.1, py::arg("min_std_confidence") = 0.1,
       py::arg("max_atoms") = 3, py::arg("jobs") = 1);

    m.def("bleu", &bleu, py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4);
    m.def("rouge_l", [](const std::string &c, const std::string &r) {
        const auto s = rouge_l(c, r);
        py::dict d;
        d["precision"] = s.precision;
        d["recall"] = s.recall;
        d["f1"] = s.f1;
        return d;
    }, py::arg("candidate"), py::arg("reference"));
    m.def("meteor", &meteor, py::arg("candidate"), py::arg("reference"));
    m.def("spearman", &spearman, py::arg("x"), py::arg("y"));
    m.def("krippendorff_alpha", [](const RatingMatrix &r, const std::string &level) {
        const auto l = level == "nominal"   ? MeasurementLevel::nominal
                       : level == "interval" ? MeasurementLevel::interval
                       : level == "ordinal"  ? MeasurementLevel::ordinal
                                             : throw Error("unknown measurement level: " + level);
        return krippendorff_alpha(r, l);
    }, py::arg("ratings"), py::arg("level") = "ordinal",
       "Ratings are one row per item; use None for a missing rating.");

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "kgx");
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Run a kgx subcommand in-process; returns (exit_code, stdout, stderr).");
}
