#pragma once

// Ground-truth scenarios, fully-synthetic measurement generation, radio-signal
// forward synthesis and a successive-cancellation snapshot estimator.

#include "mpcbp/channel_model.hpp"
#include "mpcbp/tracker.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mpcbp {

inline constexpr int kScenarioSchemaVersion = 1;

struct TruthTrack {
    int id = 0;
    int birth_step = 0;
    int death_step = 0;  // inclusive
    int reflections = 0;
    std::vector<KinematicState> states;  // one per step in [birth_step, death_step]

    [[nodiscard]] bool alive(int step) const { return step >= birth_step && step <= death_step; }
    [[nodiscard]] const KinematicState& at(int step) const { return states.at(step - birth_step); }

    bool operator==(const TruthTrack&) const = default;
};

struct Scenario {
    std::string name;
    int steps = 0;
    std::vector<TruthTrack> tracks;
    std::vector<double> far_profile;
    double u_de = 4.14;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<KinematicState> truth_at(int step) const;
    void validate() const;

    bool operator==(const Scenario&) const = default;
};

enum class ScenarioVariant { Standard, FastFar };

/// 364-step, 7-component scenario with two engineered intersections
/// (distance and amplitude at step 83, angle at step 125) and a linear FAR
/// ramp 1.5 -> 3, or a step-changing FAR profile for FastFar.
Scenario reference_scenario(ScenarioVariant variant, double snr_1m_in_db = 13.4);

/// 100-step scenario with three well-separated high-SNR components; FAR ramp
/// 1.5 -> 3 or a step-changing FAR profile.
Scenario desk_scenario(ScenarioVariant variant);

/// 50-step two-component scenario for the radio pipeline.
Scenario radio_desk_scenario();

/// Built-in scenario by name: standard, fast_far, desk, desk_fast_far, radio_desk.
std::optional<Scenario> builtin_scenario(const std::string& name);

std::string scenario_to_json(const Scenario& scn);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& scn, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

/// Draws one measurement set: thinned detections of the alive components and
/// Poisson clutter, in random order.
std::vector<Measurement> synth_measurements(const Scenario& scn, int step, const HyperParams& params,
                                            const ArrayGeometry& geom, Rng& rng);

/// Truncated Rician sample of the normalized amplitude via rejection.
double sample_truncated_rician(double u, double scale_sq, double u_de, Rng& rng);

// ---- radio signal ----------------------------------------------------------

struct RadioSnapshot {
    int n_samples = 0;
    int n_elements = 0;
    double sigma_sq = 0.0;
    std::vector<std::complex<double>> samples;  // element-major
};

struct RadioComponent {
    KinematicState x;
    double phase = 0.0;  // amplitude phase [rad]
};

/// Periodic root-raised-cosine pulse truncated at +-8 symbol periods.
double rrc_pulse(double t, double pulse_duration, double rolloff);

/// Unit-amplitude response s(theta) of one component.
std::vector<std::complex<double>> steering_signal(double d, double phi, const ArrayGeometry& geom);

/// Noise-free plus noise snapshot. Each component's complex amplitude is
/// chosen so that |alpha|^2 ||s||^2 / sigma_ref^2 = u^2 with sigma_ref^2 = 1.
RadioSnapshot synth_radio(const std::vector<RadioComponent>& truth, const ArrayGeometry& geom, double sigma_sq,
                          Rng& rng);

/// Same, with explicit complex amplitudes.
RadioSnapshot synth_radio_amplitudes(const std::vector<std::pair<KinematicState, std::complex<double>>>& comps,
                                     const ArrayGeometry& geom, double sigma_sq, Rng& rng);

void save_snapshot(const RadioSnapshot& snap, const std::filesystem::path& path);
RadioSnapshot load_snapshot(const std::filesystem::path& path);

struct SnapshotEstimatorConfig {
    double angle_step_deg = 2.0;
    double delay_step_fraction = 0.25;  // of T_s
    int newton_steps = 2;
    int max_components = 20;
};

std::vector<Measurement> snapshot_estimate(const RadioSnapshot& snap, const std::vector<FeedbackPrior>& priors,
                                           const ArrayGeometry& geom, double u_de,
                                           const SnapshotEstimatorConfig& cfg = {});

}  // namespace mpcbp
