#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "diffaudit/error.hpp"
#include "diffaudit/linkability.hpp"
#include "diffaudit/pipeline.hpp"

namespace py = pybind11;
using namespace diffaudit;

namespace {

RunConfig load_config(const std::filesystem::path& path, std::optional<std::filesystem::path> out,
                      std::optional<std::filesystem::path> replay, std::optional<double> threshold,
                      std::optional<std::string> vote) {
  auto config = RunConfig::load(path);
  RunOverrides o;
  o.out = std::move(out);
  o.replay = std::move(replay);
  o.threshold = threshold;
  if (vote) o.vote = parse_vote_mode(*vote);
  apply_overrides(config, o);
  return config;
}

}  // namespace

PYBIND11_MODULE(_diffaudit, m) {
  m.doc() = "Data flow auditing for child, teen and adult traffic";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<OntologyError>(m, "OntologyError", base.ptr());
  py::register_exception<UnknownLabelError>(m, "UnknownLabelError", base.ptr());
  py::register_exception<IngestError>(m, "IngestError", base.ptr());
  py::register_exception<DestinationError>(m, "DestinationError", base.ptr());
  py::register_exception<ClassifyError>(m, "ClassifyError", base.ptr());
  py::register_exception<AuditError>(m, "AuditError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("version", [] { return std::string(tool_version()); });

  py::class_<Ontology>(m, "Ontology")
      .def_static("load", &load_ontology, py::arg("path"))
      .def("labels", [](const Ontology& o) {
        std::vector<std::string> names;
        for (const auto& l : o.labels()) names.push_back(l.name);
        return names;
      })
      .def("level2_of", [](const Ontology& o, std::string_view l) { return o.abstract_to_level2(l); })
      .def("kind_of", [](const Ontology& o, std::string_view l) { return std::string(to_string(o.label_kind(l))); })
      .def("__contains__", &Ontology::contains)
      .def("__len__", [](const Ontology& o) { return o.labels().size(); });

  py::class_<PublicSuffixList>(m, "PublicSuffixList")
      .def_static("load", &PublicSuffixList::load, py::arg("path"), py::arg("include_private") = false)
      .def("public_suffix", &PublicSuffixList::public_suffix)
      .def("esld", [](const PublicSuffixList& p, std::string_view fqdn) { return extract_esld(fqdn, p); });

  m.def("extract_fqdn", [](std::string_view url) { return extract_fqdn(url).name; });
  m.def("normalize_key", &normalize_key);
  m.def("baseline_classify", [](std::string_view key, const Ontology& ont) -> py::object {
    auto r = baseline_classify(key, ont);
    if (!r) return py::none();
    return py::make_tuple(r->label, r->confidence);
  });
  m.def("is_linkable", &is_linkable, py::arg("categories"), py::arg("ontology"));

  py::class_<RunConfig>(m, "RunConfig")
      .def_static("load", &load_config, py::arg("path"), py::arg("out") = py::none(),
                  py::arg("replay") = py::none(), py::arg("threshold") = py::none(),
                  py::arg("vote") = py::none())
      .def_readonly("output_dir", &RunConfig::output_dir)
      .def_property_readonly("services", &RunConfig::service_names);

  m.def("run_ingest", [](const RunConfig& c) {
    auto s = run_ingest(c);
    return py::dict(py::arg("traces") = s.traces, py::arg("requests") = s.requests,
                    py::arg("distinct_keys") = s.distinct_keys);
  });
  m.def("run_classify", [](const RunConfig& c) {
    auto s = run_classify(c);
    return py::dict(py::arg("distinct_keys") = s.distinct_keys, py::arg("labeled") = s.labeled,
                    py::arg("residual") = s.residual);
  });
  m.def("run_audit", [](const RunConfig& c) {
    auto s = run_audit(c);
    return py::dict(py::arg("flows") = s.flows, py::arg("findings") = s.findings,
                    py::arg("findings_by_rule") = s.findings_by_rule);
  });
  m.def("run_linkability", [](const RunConfig& c) {
    auto s = run_linkability(c);
    return py::dict(py::arg("sets") = s.sets, py::arg("linkable") = s.linkable);
  });
}
