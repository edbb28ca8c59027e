// SPDX-License-Identifier: Apache-2.0
#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfss/config.hpp"
#include "mfss/error.hpp"
#include "mfss/estimators.hpp"
#include "mfss/pipeline.hpp"
#include "mfss/reduction.hpp"
#include "mfss/strata.hpp"
#include "mfss/wavelet.hpp"

namespace py = pybind11;
using namespace mfss;

namespace {

ConsequenceMeasure measure(const std::string& kind, double bandwidth) {
  if (kind == "indicator") return {MeasureKind::Indicator, bandwidth};
  if (kind == "kernel") return {MeasureKind::Kernel, bandwidth};
  throw Error(ErrorKind::Config, "unknown consequence measure '" + kind + "'");
}

RunConfig run_config(const std::string& path, std::optional<std::string> output_dir, std::optional<std::size_t> workers) {
  RunConfig cfg = load_config(path);
  if (output_dir) cfg.output_dir = *output_dir;
  if (workers) cfg.workers = *workers;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-fidelity stratified sampling for rare-event reliability";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(e.what());
      exc.attr("exit_code") = exit_code(e.kind());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("consequence", [](double response, double threshold, const std::string& kind, double bandwidth) {
    return consequence(response, threshold, measure(kind, bandwidth));
  }, py::arg("response"), py::arg("threshold"), py::arg("kind") = "indicator", py::arg("bandwidth") = 0.05);

  py::class_<GssEstimate>(m, "GssEstimate")
      .def_readonly("estimate", &GssEstimate::estimate)
      .def_readonly("variance", &GssEstimate::variance)
      .def_readonly("cov", &GssEstimate::cov)
      .def_readonly("cov_defined", &GssEstimate::cov_defined);
  m.def("gss_estimate", &gss_estimate, py::arg("h"), py::arg("probabilities"));

  m.def("optimal_a", &optimal_a, py::arg("rho"), py::arg("var_hf"), py::arg("var_lf"));
  m.def("optimal_ratio", &optimal_ratio, py::arg("c_hf"), py::arg("c_lf"), py::arg("rho"));

  py::class_<MfmcStratumEstimate>(m, "MfmcStratumEstimate")
      .def_readonly("estimate", &MfmcStratumEstimate::estimate)
      .def_readonly("clamped", &MfmcStratumEstimate::clamped)
      .def_readonly("mean_hf", &MfmcStratumEstimate::mean_hf)
      .def_readonly("mean_lf_paired", &MfmcStratumEstimate::mean_lf_paired)
      .def_readonly("mean_lf_all", &MfmcStratumEstimate::mean_lf_all)
      .def_readonly("a", &MfmcStratumEstimate::a);
  m.def("mfmc_stratum_estimate", &mfmc_stratum_estimate, py::arg("hf"), py::arg("lf_paired"), py::arg("lf_all"),
        py::arg("a"));
  m.def("mfmc_variance", &mfmc_variance, py::arg("var_hf"), py::arg("n_hf"), py::arg("r"), py::arg("rho"));

  py::class_<EquivalentCount>(m, "EquivalentCount")
      .def_readonly("raw", &EquivalentCount::raw)
      .def_readonly("rounded", &EquivalentCount::rounded);
  m.def("equivalent_count", &equivalent_count, py::arg("n_hf"), py::arg("r"), py::arg("rho"));

  py::class_<MfssEstimate>(m, "MfssEstimate")
      .def_readonly("estimate", &MfssEstimate::estimate)
      .def_readonly("floored", &MfssEstimate::floored)
      .def_readonly("variance", &MfssEstimate::variance)
      .def_readonly("cov", &MfssEstimate::cov)
      .def_readonly("cov_defined", &MfssEstimate::cov_defined);
  m.def("mfss_aggregate", &mfss_aggregate, py::arg("estimates"), py::arg("variances"), py::arg("probabilities"));

  py::class_<Allocation>(m, "Allocation")
      .def_readonly("n_hf", &Allocation::n_hf)
      .def_readonly("n_lf", &Allocation::n_lf);
  m.def("budget_allocation", &budget_allocation, py::arg("budget"), py::arg("c_hf"), py::arg("c_lf"), py::arg("r"));
  m.def("speedup", &speedup, py::arg("n_gss"), py::arg("n_hf"), py::arg("n_train"), py::arg("n_lf"),
        py::arg("cost_ratio"));
  m.def("convergence_index", [](double previous, double next) {
    const auto c = convergence_index(previous, next);
    return py::make_tuple(c.beta, c.defined);
  });
  m.def("probabilities_from_counts", &probabilities_from_counts, py::arg("counts"), py::arg("n_total"));

  m.def("wavedec", [](const std::vector<double>& x, int level, int order) {
    return wavedec(x, WaveletConfig::make(x.size(), level, order));
  }, py::arg("x"), py::arg("level"), py::arg("order") = 4);
  m.def("waverec", [](const WaveletBands& bands, std::size_t length, int level, int order) {
    return waverec(bands, WaveletConfig::make(length, level, order));
  }, py::arg("bands"), py::arg("length"), py::arg("level"), py::arg("order") = 4);

  m.def("pod_basis", [](const Eigen::MatrixXd& x, double eta) {
    const ReducedBasis b = pod_truncate(x, eta);
    return py::make_tuple(b.phi, b.singular_values, b.energy_ratio);
  }, py::arg("snapshots"), py::arg("eta"));

  m.def("simulate", [](const std::string& config, std::uint64_t index) {
    const Benchmark b(load_config(config));
    const auto load = b.load(b.sample(index));
    return py::make_tuple(load, b.hf(load), b.sv(b.sample(index)));
  }, py::arg("config"), py::arg("index"), "Load, displacement history and SV of Phase-I sample `index`.");

  auto stage = [&](const char* name, auto fn, const char* doc) {
    m.def(name, [fn](const std::string& config, std::optional<std::string> output_dir,
                     std::optional<std::size_t> workers, bool force) {
      const RunConfig cfg = run_config(config, output_dir, workers);
      py::gil_scoped_release release;
      return fn(cfg, StageOptions{force, true});
    }, py::arg("config"), py::arg("output_dir") = py::none(), py::arg("workers") = py::none(),
          py::arg("force") = false, doc);
  };
  stage("run_phase1", [](const RunConfig& c, const StageOptions& o) { return run_phase1(c, o); }, "Phase-I sampling and strata.");
  stage("run_train", [](const RunConfig& c, const StageOptions& o) { return run_train(c, o); }, "Adaptive surrogate training.");
  stage("run_estimate", [](const RunConfig& c, const StageOptions& o) { return run_estimate(c, o); }, "MFSS estimation.");
  stage("run_report", [](const RunConfig& c, const StageOptions& o) { return run_report(c, o); }, "Summary table.");
  stage("run_baseline_gss", [](const RunConfig& c, const StageOptions& o) {
    return run_baseline_gss(c, c.baseline_n_per_stratum, o);
  }, "Stratified HF-only baseline.");
  stage("run_oracle", [](const RunConfig& c, const StageOptions& o) { return run_oracle(c, c.oracle_n, o); },
        "Crude Monte Carlo reference.");
}
