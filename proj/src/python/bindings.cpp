#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ugap/errors.hpp"
#include "ugap/gap.hpp"
#include "ugap/metrics.hpp"
#include "ugap/mock_backend.hpp"
#include "ugap/pipeline.hpp"
#include "ugap/quality.hpp"

namespace py = pybind11;

namespace {

ugap::TokenTrace trace_of(const std::vector<double>& logprobs) {
  ugap::TokenTrace t;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    t.push_exact("t" + std::to_string(i), logprobs[i], {});
  }
  return t;
}

py::dict trace_dict(const ugap::TokenTrace& t) {
  py::dict d;
  d["tokens"] = t.tokens;
  d["logprobs"] = t.logprobs;
  d["imputed"] = t.imputed;
  return d;
}

py::dict metric_dict(const ugap::MetricSet& m) {
  py::dict d;
  d["nll"] = m.nll;
  d["ppl"] = m.ppl;
  d["pmi"] = m.pmi;
  d["cpmi"] = m.cpmi;
  d["n_tokens"] = m.n_tokens;
  return d;
}

py::dict regression_dict(const ugap::RegressionResult& r, double alpha) {
  py::dict d;
  d["beta"] = std::vector<double>{r.beta0, r.beta1, r.beta2};
  d["raw_coefficients"] = std::vector<double>(r.raw_coefficients.begin(), r.raw_coefficients.end());
  d["p1"] = r.p1;
  d["p2"] = r.p2;
  d["r2_quad"] = r.r2_quad;
  d["r2_lin"] = r.r2_lin;
  d["delta_r2"] = r.delta_r2;
  d["z_star"] = r.z_star;
  d["raw_peak"] = r.raw_peak;
  d["n"] = r.n;
  d["shape"] = ugap::shape_name(ugap::classify_shape(r, alpha));
  return d;
}

ugap::GapSummary pmi_summary(double pmi_diff) {
  ugap::GapSummary s;
  s.median.pmi_diff = pmi_diff;
  return s;
}

}  // namespace

PYBIND11_MODULE(_ugap, m) {
  m.doc() = "Uncertainty-gap measurement core";
  m.attr("__version__") = ugap::kToolVersion;

  auto& base = py::register_exception<ugap::Error>(m, "UgapError", PyExc_RuntimeError);
  py::register_exception<ugap::InputError>(m, "InputError", base.ptr());
  py::register_exception<ugap::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ugap::DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<ugap::UndefinedCorrelationError>(m, "UndefinedCorrelationError",
                                                          base.ptr());
  py::register_exception<ugap::RankDeficiencyError>(m, "RankDeficiencyError", base.ptr());
  py::register_exception<ugap::AlignmentError>(m, "AlignmentError", base.ptr());

  m.def(
      "metrics",
      [](const std::vector<double>& cond, const std::vector<double>& uncond, double tau,
         double lambda) { return metric_dict(ugap::metric_set(trace_of(cond), trace_of(uncond), tau, lambda)); },
      py::arg("cond"), py::arg("uncond"), py::arg("tau") = ugap::kDefaultTau,
      py::arg("lam") = ugap::kDefaultLambda,
      "NLL, PPL, PMI and CPMI of aligned conditional and unconditional logprobs.");

  m.def("median", &ugap::median, py::arg("values"));

  m.def(
      "relative_pmi_increase",
      [](double creative, double functional) {
        return ugap::relative_pmi_increase(pmi_summary(creative), pmi_summary(functional));
      },
      py::arg("creative_pmi_gap"), py::arg("functional_pmi_gap"));

  m.def(
      "spearman",
      [](const std::vector<double>& xs, const std::vector<double>& ys) {
        const auto c = ugap::spearman(xs, ys);
        return py::make_tuple(c.rho, c.p, c.n);
      },
      py::arg("xs"), py::arg("ys"), "(rho, two-sided p, n)");

  m.def(
      "fit_quadratic",
      [](const std::vector<double>& xs, const std::vector<double>& ys, double alpha) {
        return regression_dict(ugap::fit_quadratic(xs, ys), alpha);
      },
      py::arg("xs"), py::arg("ys"), py::arg("alpha") = ugap::kDefaultAlpha);

  py::class_<ugap::MockBackend>(m, "MockBackend")
      .def_static("fixture", [] { return ugap::MockBackend::fixture(); })
      .def(
          "score_conditional",
          [](ugap::MockBackend& b, const std::string& context, const std::string& continuation) {
            return trace_dict(b.score_conditional(context, continuation));
          },
          py::arg("context"), py::arg("continuation"))
      .def(
          "score_unconditional",
          [](ugap::MockBackend& b, const std::string& continuation) {
            return trace_dict(b.score_unconditional(continuation));
          },
          py::arg("continuation"));

  m.def(
      "run",
      [](const std::vector<std::string>& corpus, const std::string& out, bool mock,
         std::uint64_t seed, std::size_t parallelism, std::vector<std::string> domains,
         const std::string& backend_url, const std::string& model) {
        ugap::RunConfig config;
        config.corpus = corpus;
        config.out = out;
        config.mock = mock;
        config.seed = seed;
        config.parallelism = parallelism;
        if (!domains.empty()) config.domains = std::move(domains);
        config.backend.base_url = backend_url;
        config.backend.model = model;
        config.validate();
        std::ostringstream log;
        ugap::StageOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = ugap::run_all(config, log);
        }
        return py::make_tuple(outcome.exit_code(), log.str());
      },
      py::arg("corpus"), py::arg("out"), py::arg("mock") = false, py::arg("seed") = 0,
      py::arg("parallelism") = 8, py::arg("domains") = std::vector<std::string>{},
      py::arg("backend_url") = "", py::arg("model") = "",
      "Runs every stage; returns (exit code, log text).");
}
