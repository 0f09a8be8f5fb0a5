// Python bindings: numpy-native wrappers around the filtering updates plus
// the JSON-config experiment runner.

#include <optional>
#include <utility>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "divkf/adf.hpp"
#include "divkf/divergence.hpp"
#include "divkf/harness.hpp"

namespace py = pybind11;
using namespace divkf;

namespace {

GaussianBelief belief_of(const Vector& mean, const Matrix& cov) {
    return GaussianBelief(mean, cholesky(cov));
}

py::tuple moments_of(const GaussianBelief& b) {
    return py::make_tuple(b.mean(), b.cov().matrix());
}

py::dict dict_of(const DivergenceResult& res) {
    py::dict d;
    d["mean"] = res.posterior.mean();
    d["cov"] = res.posterior.cov().matrix();
    d["fallback"] = res.fallback;
    d["early_stop"] = res.early_stop;
    d["iterations_run"] = res.iterations_run;
    d["samples_used"] = res.samples_used;
    return d;
}

MeasurementModel linear_model(const Matrix& h, const Matrix& r) {
    return MeasurementModel(
        static_cast<int>(h.cols()), [h](const Vector& x) { return h * x; },
        [h](const Vector&) { return h; }, cholesky(r));
}

} // namespace

PYBIND11_MODULE(_divkf, m) {
    m.doc() = "Divergence-minimization filters for nonlinear state estimation";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const DomainError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const DimensionError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });

    py::class_<MeasurementModel>(m, "MeasurementModel")
        .def("h", &MeasurementModel::h, py::arg("x"))
        .def("jacobian", &MeasurementModel::jacobian, py::arg("x"))
        .def("log_likelihood", &MeasurementModel::log_likelihood, py::arg("y"),
             py::arg("x"))
        .def_property_readonly("measurement_dim", &MeasurementModel::measurement_dim)
        .def_property_readonly("state_dim", &MeasurementModel::state_dim)
        .def_property_readonly(
            "noise", [](const MeasurementModel& mm) { return mm.noise().matrix(); });

    m.def("linear_model", &linear_model, py::arg("H"), py::arg("R"),
          "Linear-Gaussian measurement y = H x + v.");
    m.def("radar_model", &radar_model, py::arg("sigma_r2"), py::arg("sigma_theta2"),
          "Range-and-bearing measurement of a planar constant-velocity state.");
    m.def(
        "black_scholes_model",
        [](double strike, double time_to_maturity, double spot, double sigma_r) {
            return black_scholes_model(OptionContract(strike, time_to_maturity, spot),
                                       sigma_r);
        },
        py::arg("strike"), py::arg("time_to_maturity"), py::arg("spot"),
        py::arg("sigma_r"), "Call/put price measurement of a [vol, rate] state.");

    m.def(
        "predict",
        [](const Vector& mean, const Matrix& cov, const Matrix& f, const Matrix& q) {
            return moments_of(
                predict(belief_of(mean, cov), LinearDynamics{f, cholesky(q)}));
        },
        py::arg("mean"), py::arg("cov"), py::arg("F"), py::arg("Q"));

    m.def(
        "ekf_update",
        [](const Vector& mean, const Matrix& cov, const MeasurementModel& model,
           const Vector& y) {
            const GaussianBelief prior = belief_of(mean, cov);
            return moments_of(joint_gaussian_update(prior, ekf_stats(prior, model), y,
                                                    model.wrap_components()));
        },
        py::arg("mean"), py::arg("cov"), py::arg("model"), py::arg("y"));

    m.def(
        "ukf_update",
        [](const Vector& mean, const Matrix& cov, const MeasurementModel& model,
           const Vector& y, std::optional<double> lam) {
            const GaussianBelief prior = belief_of(mean, cov);
            const double l =
                lam ? *lam : default_ukf_lambda(static_cast<int>(mean.size()));
            return moments_of(joint_gaussian_update(prior, ukf_stats(prior, model, l),
                                                    y, model.wrap_components()));
        },
        py::arg("mean"), py::arg("cov"), py::arg("model"), py::arg("y"),
        py::arg("lam") = py::none());

    m.def(
        "skf_update",
        [](const Vector& mean, const Matrix& cov, const MeasurementModel& model,
           const Vector& y, int samples, int iterations, double step_offset,
           double step_eta, bool control_variate, std::uint64_t seed) {
            SkfConfig cfg;
            cfg.samples_per_iter = samples;
            cfg.iterations = iterations;
            cfg.step_offset = step_offset;
            cfg.step_eta = step_eta;
            cfg.control_variate = control_variate;
            Rng rng = make_rng(seed);
            return dict_of(skf_update(belief_of(mean, cov), model, y, cfg, rng));
        },
        py::arg("mean"), py::arg("cov"), py::arg("model"), py::arg("y"),
        py::arg("samples") = 500, py::arg("iterations") = 50,
        py::arg("step_offset") = 10.0, py::arg("step_eta") = 0.8,
        py::arg("control_variate") = true, py::arg("seed") = 0);

    m.def(
        "mkf_update",
        [](const Vector& mean, const Matrix& cov, const MeasurementModel& model,
           const Vector& y, int samples, std::uint64_t seed) {
            const GaussianBelief prior = belief_of(mean, cov);
            Rng rng = make_rng(seed);
            return dict_of(mkf_update(prior, model, y, samples, prior, rng));
        },
        py::arg("mean"), py::arg("cov"), py::arg("model"), py::arg("y"),
        py::arg("samples") = 10000, py::arg("seed") = 0);

    m.def(
        "akf_update",
        [](const Vector& mean, const Matrix& cov, const MeasurementModel& model,
           const Vector& y, double alpha, int samples, std::uint64_t seed) {
            const GaussianBelief prior = belief_of(mean, cov);
            Rng rng = make_rng(seed);
            return dict_of(akf_update(prior, model, y, alpha, samples, prior, prior, rng));
        },
        py::arg("mean"), py::arg("cov"), py::arg("model"), py::arg("y"),
        py::arg("alpha"), py::arg("samples") = 10000, py::arg("seed") = 0);

    m.def(
        "elbo",
        [](const Vector& mean, const Matrix& cov, const Vector& prior_mean,
           const Matrix& prior_cov, const MeasurementModel& model, const Vector& y) {
            return elbo_objective(belief_of(mean, cov),
                                  belief_of(prior_mean, prior_cov), model, y);
        },
        py::arg("mean"), py::arg("cov"), py::arg("prior_mean"), py::arg("prior_cov"),
        py::arg("model"), py::arg("y"));

    m.def(
        "confidence_radius",
        [](const Matrix& particles, const Vector& weights, double p) {
            return confidence_radius(WeightedEnsemble(particles, weights), p);
        },
        py::arg("particles"), py::arg("weights"), py::arg("p"),
        "Radius of the confidence ball implied by a weighted ensemble.");

    m.def(
        "min_sample_size",
        [](int s_base, double r_max_target, int s_floor, int s_cap, double confidence,
           double r_base) {
            AdaptivePolicy policy;
            policy.s_base = s_base;
            policy.r_max_target = r_max_target;
            policy.s_floor = s_floor;
            policy.s_cap = s_cap;
            policy.confidence = confidence;
            return min_sample_size(policy, r_base);
        },
        py::arg("s_base"), py::arg("r_max_target"), py::arg("s_floor") = 1,
        py::arg("s_cap") = 100000, py::arg("confidence") = 0.95, py::arg("r_base"));

    m.def("default_ukf_lambda", &default_ukf_lambda, py::arg("dim"));

    m.def(
        "run_experiment",
        [](const std::string& config_json) {
            const ExperimentConfig cfg = parse_config(config_json);
            const std::vector<ResultRow> rows = run_sweep(cfg);
            return py::make_tuple(results_to_csv(rows), results_to_json(rows));
        },
        py::arg("config_json"),
        "Runs the sweep described by a JSON config; returns (csv, json) text.");

    m.attr("CSV_HEADER") = kCsvHeader;
}
