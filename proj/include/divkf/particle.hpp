#pragma once

#include "divkf/adf.hpp"

namespace divkf {

/// Particle cloud between measurements; approximates the one-step
/// predictive distribution of the next observation time.
struct ParticleState {
    WeightedEnsemble ensemble; // uniform weights
    int step_count = 0;
};

/// Output of one SIR cycle: the posterior summary at the absorbed
/// measurement plus the propagated state for the next cycle.
struct PfStepResult {
    ParticleState state;
    GaussianBelief summary;
    bool weight_collapse = false; // all likelihoods underflowed; weights reset
};

/// Samples `count` particles from the initial belief and pushes them through
/// one dynamics step, so the returned state is ready for the first
/// measurement.
ParticleState pf_init(const GaussianBelief& init, const LinearDynamics& dyn, int count,
                      Rng& rng);

/// Systematic resampling: `count` ancestor indices drawn with a single
/// uniform offset; expected multiplicity proportional to weight.
std::vector<int> systematic_resample(const Vector& weights, int count, Rng& rng);

/// One SIR cycle: weight by likelihood, summarize, resample, propagate.
/// A total likelihood underflow resets the weights to uniform and flags the
/// step instead of aborting.
PfStepResult pf_step(const ParticleState& state, const LinearDynamics& dyn,
                     const MeasurementModel& model, const Vector& y, Rng& rng);

} // namespace divkf
