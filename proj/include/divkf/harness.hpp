#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "divkf/divergence.hpp"
#include "divkf/models.hpp"
#include "divkf/particle.hpp"

namespace divkf {

enum class Scenario { Radar, Sensor, Options, Custom1d };

/// Accepts "radar" | "sensor" | "options" | "custom-1d"; throws ConfigError.
Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);
int state_dim(Scenario s);

struct SkfSettings {
    int samples = 500;
    int iterations = 50;
    double step_offset = 10.0;
    double step_eta = 0.8;
    bool control_variate = true;
};

struct AdaptiveSettings {
    int s_base = 500;
    std::vector<double> r_max{1.0}; // sweep axis of radius targets
    int s_floor = 1;
    int s_cap = 100000;
    double confidence = 0.95;
};

struct OptionsSettings {
    double spot0 = 100.0;
    double strike = 100.0;
    double sigma0 = 0.2;
    double rate0 = 0.05;
    double vol_inc_std = 0.01;
    double vol_clamp_lo = 0.05;
    double vol_clamp_hi = 0.8;
    double rate_inc_std = 0.01;
    std::vector<double> maturities{1.0 / 6.0, 0.5, 1.0}; // initial, in years
};

/// Full description of one experiment: scenario, sweep axes, filter lineup,
/// sampling budgets, and the master seed. Loaded from versioned JSON; any
/// unknown key is rejected.
struct ExperimentConfig {
    Scenario scenario = Scenario::Custom1d;
    int trials = 5;
    int horizon = 100;
    std::uint64_t seed = 1729;

    std::vector<double> true_sigma_cv{0.5};  // generator process-noise axis
    std::vector<double> filter_sigma_q;      // empty: filters use the true Q
    std::vector<double> sigma_r{1.0};        // measurement-noise axis (not radar)
    double sigma_r2 = 0.1;                   // radar range variance
    double sigma_theta2 = 0.01;              // radar bearing variance

    std::vector<double> alpha{0.5};          // AKF tilt axis
    std::vector<std::string> filters;        // defaulted per scenario

    int pf_particles = 10000;
    int is_samples = 10000;
    SkfSettings skf;
    std::optional<double> ukf_lambda;        // default: per-dimension rule
    std::optional<AdaptiveSettings> adaptive;

    std::vector<double> p0_diag;             // initial covariance diagonal
    double dt = 1.0;
    int n_sensors = 200;
    int active_sensors = 3;
    OptionsSettings options;
    int threads = 0; // 0: pick from hardware, capped at 8

    /// Throws ConfigError on any violated invariant.
    void validate() const;
};

/// Scenario defaults: filter lineup, horizon, axes, initial covariance.
ExperimentConfig default_config(Scenario scenario);

/// Parses the JSON text (schema_version 1 required; unknown keys rejected).
ExperimentConfig parse_config(const std::string& json_text);

/// Reads and parses a config file. Throws IoError if unreadable.
ExperimentConfig load_config(const std::string& path);

/// One synthesized trial: true states, measurements, and the per-scenario
/// side information filters need to rebuild the measurement sequence.
struct TrajectoryRecord {
    Matrix states;       // d x (horizon+1); column 0 is x0
    Matrix measurements; // p x horizon; column t-1 is y_t
    std::vector<std::vector<int>> active_ids; // sensor scenario
    SensorLayout layout;                      // sensor scenario
    Vector spots;                             // options scenario, S_t per step
    std::uint64_t seed = 0;
};

/// Simulates trial `trial` at the given sweep coordinates. The seed depends
/// only on (master, scenario, trial), so sweep points share noise paths.
TrajectoryRecord generate_trajectory(const ExperimentConfig& cfg, int trial,
                                     int cv_index = 0, int sr_index = 0);

/// The three contracts priced at step t (1-based): maturities tick down by
/// 1/252 per step (floored at 1/504) and the spot is the exogenous S_t.
std::vector<OptionContract> option_contracts_at(const ExperimentConfig& cfg,
                                                const TrajectoryRecord& traj, int t);

/// One filter instantiation within a sweep.
struct FilterSpec {
    std::string name;              // KF | EKF | UKF | PF | SKF | MKF | AKF | BASE
    std::optional<double> sigma_q; // assumed-Q protocol: Q = sigma_q^2 I
    std::optional<double> alpha;   // AKF only
    std::optional<double> r_max;   // adaptive MKF/AKF only
};

struct FilterRunResult {
    /// Posterior mean per step. Options runs filter each contract with its
    /// own two-state [sigma, r] belief; the per-contract means are stacked
    /// into one vector per step (contract j occupies rows 2j, 2j+1).
    std::vector<Vector> means;
    Matrix predictions;                   // options: one-step-ahead prices, p x T
    std::map<std::string, double> metrics;
    bool diverged = false;
    double runtime_ms = 0.0;
};

/// Runs one filter over one trajectory. Filter-step failures (and non-finite
/// estimates) mark the run diverged instead of propagating; an options run
/// flags divergence per contract, so `metrics` holds whichever contracts
/// stayed on track.
FilterRunResult run_filter(const ExperimentConfig& cfg, const FilterSpec& spec,
                           const TrajectoryRecord& traj, int cv_index = 0,
                           int sr_index = 0);

/// One aggregated line of the results table. Optional columns are empty when
/// the coordinate does not apply to the row.
struct ResultRow {
    std::string scenario;
    std::string filter;
    std::optional<double> sigma_q;
    std::optional<double> sigma_cv;
    std::optional<double> sigma_r;
    std::optional<double> alpha;
    std::optional<double> r_max;
    std::string metric;
    double value = 0.0;
    double stderr_value = 0.0;
    int trials = 0;
    long long runtime_ms = 0;
};

/// Cartesian product of sweep axes x filters x trials on a bounded worker
/// pool; aggregation excludes diverged trials (reported as diverged_trials
/// rows). Row order is deterministic and independent of thread count.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg);

extern const char* kCsvHeader;

/// Fixed-header CSV, LF line endings, 6 significant digits.
std::string results_to_csv(const std::vector<ResultRow>& rows);

/// JSON mirror of the CSV schema (non-finite values become null).
std::string results_to_json(const std::vector<ResultRow>& rows);

/// Inverse of results_to_csv. Throws IoError on malformed input.
std::vector<ResultRow> parse_results_csv(const std::string& text);

/// Writes both artifacts atomically (temp file + rename). Throws IoError on
/// empty input or filesystem failure.
void emit_results(const std::vector<ResultRow>& rows, const std::string& csv_path,
                  const std::string& json_path);

} // namespace divkf
