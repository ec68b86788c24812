#pragma once

// Sequential particle-based BP tracker of multipath components with online
// false-alarm-rate estimation. One predict/update pair per snapshot.

#include "mpcbp/channel_model.hpp"
#include "mpcbp/da_bp.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mpcbp {

struct PmpcBelief {
    std::uint64_t id = 0;
    int birth_step = 0;
    std::vector<KinematicState> particles;
    std::vector<double> weights;
    double p_exist = 0.0;
};

struct FarBelief {
    std::vector<double> particles;
    std::vector<double> weights;

    [[nodiscard]] bool initialized() const { return !particles.empty(); }
};

struct TrackSummary {
    std::uint64_t id = 0;
    double d = 0.0;
    double phi = 0.0;
    double u = 0.0;
    double sigma_d = 0.0;
    double sigma_phi = 0.0;
    double p_exist = 0.0;
};

struct StepEstimate {
    std::vector<TrackSummary> detected;
    int nom_hat = 0;
    double mu_fa_mmse = 0.0;
    std::vector<TrackSummary> all_tracks;
};

/// Prior information for the snapshot estimator taken from the detected
/// components of the previous step.
struct FeedbackPrior {
    double d = 0.0;
    double phi = 0.0;
    double sigma_d = 0.0;
    double sigma_phi = 0.0;
};

std::vector<FeedbackPrior> feedback_from(const StepEstimate& est);

struct TrackerState {
    std::vector<PmpcBelief> legacy;
    FarBelief far;
    int step = 0;
    std::uint64_t next_id = 1;
    Rng rng;
    bool predicted = false;
};

struct UpdateResult {
    StepEstimate estimate;
    AssociationMarginals marginals;
    /// One entry per rejected measurement.
    std::vector<std::string> diagnostics;
};

TrackerState init(const HyperParams& params, const ArrayGeometry& geom, std::uint64_t seed);

void predict(TrackerState& state, const HyperParams& params);

UpdateResult update(TrackerState& state, const std::vector<Measurement>& measurements, const HyperParams& params,
                    const ArrayGeometry& geom);

StepEstimate estimate(const TrackerState& state, const HyperParams& params);

/// Weighted-particle summary of one belief (MMSE means and standard deviations).
TrackSummary summarize(const PmpcBelief& belief);

/// Systematic resampling of an arbitrary particle set to `count` equally
/// weighted particles. Throws if all weights are zero.
template <typename T>
void resample(std::vector<T>& particles, std::vector<double>& weights, int count, Rng& rng);

void resample(PmpcBelief& belief, int J, Rng& rng);

/// Index selection of the systematic scheme, exposed for testing.
std::vector<std::size_t> systematic_indices(const std::vector<double>& weights, int count, Rng& rng);

template <typename T>
void resample(std::vector<T>& particles, std::vector<double>& weights, int count, Rng& rng) {
    const auto idx = systematic_indices(weights, count, rng);
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(particles[i]);
    particles = std::move(out);
    weights.assign(idx.size(), 1.0 / static_cast<double>(idx.size()));
}

}  // namespace mpcbp
