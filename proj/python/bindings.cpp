#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "beaconopt/baselines.hpp"
#include "beaconopt/config.hpp"
#include "beaconopt/selfcheck.hpp"
#include "beaconopt/trainer.hpp"

namespace py = pybind11;
using namespace beaconopt;

namespace {

Trainer make_trainer(const std::map<std::string, std::string>& options) {
  RunConfig rc;
  rc.preset = "tworoom";
  for (const auto& [k, v] : options) set_option(rc, k, v);
  return Trainer(rc.train, resolve_map(rc));
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["rmse"] = r.rmse;
  d["worst_case_rmse"] = r.worst_case_rmse;
  d["failure_rates"] = r.failure_rates;
  d["beacon_count"] = r.beacon_count;
  d["n_locations"] = r.n_locations;
  d["samples_per_location"] = r.samples_per_location;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Joint beacon placement and localization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<MapError>(m, "MapError", PyExc_ValueError);
  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  py::class_<EnvironmentMap>(m, "EnvironmentMap")
      .def_property_readonly("width", &EnvironmentMap::width)
      .def_property_readonly("height", &EnvironmentMap::height)
      .def_property_readonly("num_candidates", &EnvironmentMap::num_candidates)
      .def_property_readonly("candidates",
                             [](const EnvironmentMap& map) {
                               std::vector<std::pair<double, double>> out;
                               for (const auto& c : map.candidates()) out.emplace_back(c.x, c.y);
                               return out;
                             })
      .def("to_text", &map_to_string);
  m.def("make_preset", &make_preset, py::arg("name"), py::arg("grid_rows") = 10, py::arg("grid_cols") = 10);
  m.def("load_map", &load_map_string, py::arg("text"));

  py::class_<PropagationParams>(m, "PropagationParams")
      .def(py::init<>())
      .def_static("for_map", &PropagationParams::for_map, py::arg("map"), py::arg("channels") = 4)
      .def_readwrite("p0", &PropagationParams::p0)
      .def_readwrite("zeta", &PropagationParams::zeta)
      .def_readwrite("beta", &PropagationParams::beta)
      .def_readwrite("noise_var", &PropagationParams::noise_var)
      .def_readwrite("tau", &PropagationParams::tau)
      .def_readwrite("channels", &PropagationParams::channels)
      .def_readwrite("r_min", &PropagationParams::r_min);

  m.def("received_power",
        [](const PropagationParams& p, const EnvironmentMap& map, std::pair<double, double> beacon,
           std::pair<double, double> v) {
          return received_power(p, map, {beacon.first, beacon.second}, {v.first, v.second});
        });
  m.def(
      "measure",
      [](const PropagationParams& p, const EnvironmentMap& map, std::vector<int> assignment,
         std::pair<double, double> v, std::vector<double> phases) {
        const HardAllocation a{std::move(assignment), p.channels};
        return measure(p, map, a, {v.first, v.second}, noiseless(std::move(phases), p.channels)).s;
      },
      "Noise-free channel powers for a hard assignment (0 = no beacon, c+1 = channel c).");

  m.def("alpha_at", [](double alpha0, double gamma, std::int64_t t) {
    return alpha_at(AlphaSchedule{alpha0, gamma, 0}, t);
  });
  m.def("lambda_at", [](double lambda0, double eta, std::int64_t period, std::int64_t t) {
    return lambda_at(LambdaSchedule{lambda0, eta, period, LambdaMode::kAnnealed}, t);
  });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init(&make_trainer), py::arg("options") = std::map<std::string, std::string>{},
           "Options are the same key=value settings as config files; the map defaults to tworoom.")
      .def_static("from_checkpoint",
                  [](const py::bytes& b) { return Trainer::from_checkpoint(Checkpoint::deserialize(b)); })
      .def("step", &Trainer::step)
      .def("run", &Trainer::run, py::arg("until") = -1, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("iteration", &Trainer::iteration)
      .def_property_readonly("done", &Trainer::done)
      .def_property_readonly("switched", &Trainer::switched)
      .def_property_readonly("weights", &Trainer::weights)
      .def_property_readonly("allocation", [](const Trainer& t) { return t.allocation().assignment; })
      .def_property_readonly("beacon_count", [](const Trainer& t) { return beacon_count(t.allocation()); })
      .def_property_readonly("map", &Trainer::map)
      .def_property_readonly("config", [](const Trainer& t) { return format_train_config(t.config()); })
      .def_property_readonly("log",
                             [](const Trainer& t) {
                               std::ostringstream os;
                               write_log_csv(os, t.log());
                               return os.str();
                             })
      .def("validation_rmse", &Trainer::validation_rmse)
      .def("checkpoint", [](const Trainer& t) { return py::bytes(t.checkpoint().serialize()); })
      .def("predict", [](const Trainer& t, const Matrix& s) { return predict(t.network(), s); })
      .def(
          "evaluate",
          [](const Trainer& t, int cols, int rows, int samples, std::vector<double> thresholds,
             std::uint64_t seed, int threads, int knn) {
            EvalOptions o{cols, rows, samples, std::move(thresholds), seed, threads};
            const auto alloc = t.allocation();
            const auto& params = t.config().propagation;
            Predictor p = network_predictor(t.network());
            if (knn > 0) {
              Rng rng(Rng::derive(seed, 0x6b6e6e).next_u64());
              p = knn_predictor(build_database(t.map(), alloc, params, rows, cols, 1, rng), knn);
            }
            return report_dict(evaluate(p, alloc, t.map(), params, o));
          },
          py::arg("cols") = 50, py::arg("rows") = 35, py::arg("samples") = 10,
          py::arg("thresholds") = std::vector<double>{0.1, 0.2}, py::arg("seed") = 0,
          py::arg("threads") = 1, py::arg("knn") = 0)
      .def(
          "heatmap",
          [](const Trainer& t, int cols, int rows, int samples, std::uint64_t seed, int threads) {
            const Heatmap h = heatmap(network_predictor(t.network()), t.allocation(), t.map(),
                                      t.config().propagation, rows, cols, samples, seed, threads);
            Matrix grid(rows, cols);
            for (int i = 0; i < rows * cols; ++i) grid(i / cols, i % cols) = h.rmse[static_cast<std::size_t>(i)];
            return grid;
          },
          py::arg("cols") = 50, py::arg("rows") = 35, py::arg("samples") = 10, py::arg("seed") = 0,
          py::arg("threads") = 1, "Per-cell RMSE as a rows x cols array, row 0 at y = 0.");

  m.def("selfcheck", []() {
    const SelfCheckReport r = run_selfcheck();
    return py::make_tuple(r.passed(), r.worst_gradient_error, format_selfcheck(r));
  });
}
