#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gencache/adaptive_policy.hpp"
#include "gencache/config.hpp"
#include "gencache/cost_model.hpp"
#include "gencache/embedding.hpp"
#include "gencache/error.hpp"
#include "gencache/semantic_cache.hpp"
#include "gencache/service.hpp"
#include "gencache/wire.hpp"

namespace py = pybind11;
using namespace gencache;

namespace {

nlohmann::json to_json(const py::object& obj) {
    auto dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::dict outcome_to_dict(const LookupOutcome& o) {
    py::dict d;
    d["kind"] = std::string(to_string(o.kind));
    py::list comps;
    for (const auto& c : o.components) {
        py::dict cd;
        cd["entry_id"] = c.entry_id.str();
        cd["query_text"] = c.query_text;
        cd["score"] = c.score;
        comps.append(cd);
    }
    d["components"] = comps;
    d["answer"] = o.answer ? py::object(py::str(*o.answer)) : py::object(py::none());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gencache core";

    py::exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const auto type = py::module_::import("gencache._core").attr("Error");
            PyErr_SetString(type.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("similarity",
          [](const std::vector<double>& a, const std::vector<double>& b, const std::string& metric) {
              return similarity(Embedding::normalized(std::span<const double>(a)),
                                Embedding::normalized(std::span<const double>(b)), metric_from_string(metric));
          },
          py::arg("a"), py::arg("b"), py::arg("metric") = "cosine");
    m.def("estimate_tokens", [](const std::string& text) { return estimate_tokens(text); });
    m.def("estimate_cost",
          [](const std::string& text, std::uint64_t max_tokens, const std::string& model_id) {
              CostModel model(default_pricing());
              const auto e = model.estimate(text, max_tokens, model_id);
              return py::make_tuple(e.monetary, e.expected_latency_ms);
          },
          py::arg("text"), py::arg("max_tokens"), py::arg("model_id") = "gpt-3.5-turbo-0125");

    py::class_<HashingEmbedder, std::shared_ptr<HashingEmbedder>>(m, "HashingEmbedder")
        .def(py::init<std::size_t>(), py::arg("dim") = kDefaultEmbeddingDim)
        .def("embed",
             [](const HashingEmbedder& e, const std::string& text) {
                 const auto emb = e.embed(text);
                 const auto v = emb.values();
                 return std::vector<float>(v.begin(), v.end());
             })
        .def_property_readonly("dim", &HashingEmbedder::dim);

    py::enum_<GenMode>(m, "GenMode")
        .value("off", GenMode::off)
        .value("primary", GenMode::primary)
        .value("secondary", GenMode::secondary);

    py::class_<LookupPolicy>(m, "LookupPolicy")
        .def(py::init<double, double, double, GenMode, std::size_t>(), py::arg("t_s"), py::arg("t_single"),
             py::arg("t_combined"), py::arg("gen_mode") = GenMode::secondary,
             py::arg("max_components") = kDefaultMaxComponents)
        .def_property_readonly("t_s", &LookupPolicy::t_s)
        .def_property_readonly("t_single", &LookupPolicy::t_single)
        .def_property_readonly("t_combined", &LookupPolicy::t_combined);

    py::class_<SemanticCache, std::shared_ptr<SemanticCache>>(m, "SemanticCache")
        .def(py::init([](std::size_t dim, std::size_t capacity) {
                 CacheOptions o;
                 o.capacity = capacity;
                 return std::make_shared<SemanticCache>(std::make_shared<HashingEmbedder>(dim), o);
             }),
             py::arg("dim") = kDefaultEmbeddingDim, py::arg("capacity") = 100000)
        .def("insert",
             [](SemanticCache& c, const std::string& query, const std::string& answer, bool allow_l1,
                bool allow_l2) -> std::optional<std::string> {
                 ResponseRecord r;
                 r.text = answer;
                 r.created_at = now_ms();
                 auto id = c.insert(query, r, CacheScope{allow_l1, allow_l2});
                 return id ? std::optional(id->str()) : std::nullopt;
             },
             py::arg("query"), py::arg("answer"), py::arg("allow_l1") = true, py::arg("allow_l2") = true)
        .def("lookup",
             [](SemanticCache& c, const std::string& query, const LookupPolicy& policy) {
                 return outcome_to_dict(c.lookup(query, policy));
             })
        .def("snapshot_save", [](const SemanticCache& c, const std::filesystem::path& p) { return c.snapshot_save(p); })
        .def("warm_load", [](SemanticCache& c, const std::filesystem::path& p) { return c.warm_load(p); })
        .def("__len__", &SemanticCache::size);

    py::class_<AdaptivePolicy, std::shared_ptr<AdaptivePolicy>>(m, "AdaptivePolicy")
        .def(py::init([] { return std::make_shared<AdaptivePolicy>(); }))
        .def_property_readonly("base_ts", &AdaptivePolicy::base_ts)
        .def("record_feedback", [](AdaptivePolicy& p, const std::string& v) { p.record_feedback(verdict_from_string(v)); })
        .def("adjust_for_quality", &AdaptivePolicy::adjust_for_quality)
        .def("adjust_for_cost", &AdaptivePolicy::adjust_for_cost)
        .def("quality_rate", &AdaptivePolicy::quality_rate);

    // In-process service; requests and responses are the JSON wire shapes as dicts.
    py::class_<Service, std::shared_ptr<Service>>(m, "Service")
        .def(py::init([](const py::object& config) {
                 return std::make_shared<Service>(ServiceConfig::from_json(to_json(config)));
             }),
             py::arg("config") = py::dict())
        .def("query",
             [](Service& s, const py::object& req) {
                 return to_py(wire::encode(s.query(wire::decode<wire::QueryRequest>(to_json(req)))));
             })
        .def("feedback",
             [](Service& s, const py::object& req) {
                 return to_py(wire::encode(s.feedback(wire::decode<wire::FeedbackRequest>(to_json(req)))));
             })
        .def("stats", [](const Service& s) { return to_py(wire::encode(s.stats())); })
        .def("config", [](const Service& s) { return to_py(s.config()); })
        .def("put_config", [](Service& s, const py::object& patch) { return to_py(s.put_config(to_json(patch))); })
        .def("snapshot", [](Service& s, const std::string& p) { return s.snapshot(p).count; })
        .def("warm", [](Service& s, const std::string& p) { return s.warm(p).count; });
}
