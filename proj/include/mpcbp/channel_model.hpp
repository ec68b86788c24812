#pragma once

// Domain types, state-transition models, measurement likelihoods and the
// pseudo-likelihood factors g and h of the multipath-component tracker.

#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace mpcbp {

using Rng = std::mt19937_64;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Floor applied to u inside the distance/AoA variance formulas.
inline constexpr double kAmplitudeFloor = 1e-3;
/// Floor applied to the false-alarm rate after every random-walk step.
inline constexpr double kFarFloor = 1e-6;

/// Wraps an angle into [-pi, pi).
double wrap_angle(double phi);

/// Wrapped angular difference a - b in (-pi, pi].
double angle_diff(double a, double b);

struct KinematicState {
    double d = 0.0;      // distance [m]
    double phi = 0.0;    // angle of arrival [rad], wrapped to [-pi, pi)
    double u = 0.0;      // normalized amplitude, sqrt of the component SNR
    double v_d = 0.0;    // distance velocity [m/s]
    double v_phi = 0.0;  // angular velocity [rad/s]

    bool operator==(const KinematicState&) const = default;
};

struct AugmentedState {
    KinematicState x;
    bool exists = false;
};

struct Measurement {
    double z_d = 0.0;
    double z_phi = 0.0;
    double z_u = 0.0;

    bool operator==(const Measurement&) const = default;
};

struct ElementOffset {
    double radius = 0.0;  // distance from the array centroid [m]
    double angle = 0.0;   // polar angle relative to the array orientation [rad]
};

struct ArrayGeometry {
    std::vector<ElementOffset> elements;
    double psi = 0.0;            // array orientation [rad]
    double f_c = 6e9;            // carrier frequency [Hz]
    double beta_bw_sq = 0.0;     // mean-square bandwidth [Hz^2]
    int n_samples = 46;          // samples per element
    double t_s = 1.25e-9;        // sampling period [s]
    double c = 299792458.0;      // propagation speed [m/s]
    double pulse_duration = 2e-9;
    double rolloff = 0.6;

    [[nodiscard]] int num_elements() const { return static_cast<int>(elements.size()); }
    [[nodiscard]] double n_eff() const { return static_cast<double>(n_samples) * num_elements(); }

    /// Throws std::invalid_argument when the geometry is unusable.
    void validate() const;
};

/// Uniform rectangular array of rows x cols elements centred on the origin.
ArrayGeometry make_ura(int rows, int cols, double spacing, double psi = 0.0);

/// Mean-square bandwidth of a root-raised-cosine pulse with symbol period
/// `pulse_duration` and the given roll-off.
double rrc_mean_square_bandwidth(double pulse_duration, double rolloff);

/// 3x3 URA with 2 cm spacing, 6 GHz carrier, 2 ns RRC pulse (roll-off 0.6),
/// 1.25 ns sampling and 46 samples per element.
ArrayGeometry default_geometry();

enum class LikelihoodMode { Exact, Gauss };

struct HyperParams {
    double p_s = 0.999;
    double p_de = 0.5;
    double p_pr = 1e-4;
    double mu_n = 0.008;
    double u_de = 4.14;              // 414 * 10^(-20 dB / 10)
    double d_max = 17.0;
    double sigma_d = 0.002;          // m/s^2
    double sigma_phi = 0.17 * kPi / 180.0;
    double sigma_u_rel = 0.02;
    double sigma_fa = 0.15;
    double sigma_fa_ini = 0.5;
    double sigma_v_d = 0.01;         // m/s
    double sigma_v_phi = 0.6 * kPi / 180.0;
    double delta_t = 1.0;
    int J = 10000;
    int P = 5000;
    double da_tol = 1e-6;
    LikelihoodMode mode = LikelihoodMode::Gauss;

    void validate() const;
};

struct FarState {
    double mu_fa = 1.0;
};

// ---- state transition ------------------------------------------------------

/// Nearly-constant-velocity step on (d, v_d) and (phi, v_phi), random walk on u
/// with std sigma_u_rel * u. Survival is not drawn here.
KinematicState propagate_kinematics(const KinematicState& x, const HyperParams& params, Rng& rng);

AugmentedState transition_sample(const KinematicState& x, bool exists, const HyperParams& params, Rng& rng);

FarState far_transition_sample(double mu_fa, double sigma_fa, Rng& rng);

// ---- Fisher-information variances ----------------------------------------

/// Variance ceiling returned whenever the Fisher information vanishes.
double max_variance_d(const ArrayGeometry& geom);
double max_variance_phi(const ArrayGeometry& geom);

double sigma_d_sq(double u, const ArrayGeometry& geom);
double aperture_sq(double phi, const ArrayGeometry& geom);
double sigma_phi_sq(double u, double phi, const ArrayGeometry& geom);
double amp_scale_sq(double u, double n_eff);

/// Closed-form check of amp_scale_sq through the 3x3 Fisher matrix of
/// (Re alpha, Im alpha, sigma^2) and the Jacobian of u = |alpha| ||s|| / sigma.
double crlb_amp_scale_numeric(double alpha_re, double alpha_im, double s_norm_sq, double sigma_sq,
                              double n_eff);

// ---- likelihoods -----------------------------------------------------------

double lik_distance(double z_d, double d, double u, const ArrayGeometry& geom);
double lik_aoa(double z_phi, double phi, double u, const ArrayGeometry& geom);
double lik_amplitude(double z_u, double u, double u_de, double n_eff, LikelihoodMode mode);
double detection_prob(double u, double u_de, double n_eff, LikelihoodMode mode);

/// Particle-dependent quantities of the measurement likelihood that do not
/// depend on the measurement itself.
struct LikelihoodTerms {
    double var_d = 0.0;
    double var_phi = 0.0;
    double var_u = 0.0;
    double pd = 0.0;
};

LikelihoodTerms likelihood_terms(const KinematicState& x, const HyperParams& params, const ArrayGeometry& geom);

/// f(z|x) * p_d(u): the untruncated measurement density, which is what the
/// association factors need and stays finite as p_d -> 0.
double detected_likelihood(const Measurement& z, const KinematicState& x, const LikelihoodTerms& terms,
                           const HyperParams& params);

/// Product of the three per-dimension likelihoods.
double measurement_likelihood(const Measurement& z, const KinematicState& x, const HyperParams& params,
                              const ArrayGeometry& geom);

/// Clutter density: uniform in distance and angle, truncated Rayleigh in amplitude.
double fa_density(const Measurement& z, double u_de, double d_max);

/// Birth density over (d, phi); uniform on [0, d_max) x [-pi, pi).
double birth_density(const KinematicState& x, double d_max);

/// FAR-related normalization factor (e^-mu * mu^M)^(1/(K+M)).
double far_norm(double mu_fa, int M, int K);

/// Pseudo likelihood of a legacy component; `a` is 0 (missed) or a 1-based
/// measurement index, in which case `z` must be provided.
double pseudo_g(const KinematicState& x, bool exists, int a, double mu_fa, const std::optional<Measurement>& z,
                int M, int K, const HyperParams& params, const ArrayGeometry& geom);

/// Pseudo likelihood of a new component; `b` is 0 or a 1-based legacy index.
double pseudo_h(const KinematicState& x, bool exists, int b, double mu_fa, const Measurement& z, int M, int K,
                const HyperParams& params, const ArrayGeometry& geom);

// ---- special functions -----------------------------------------------------

/// log I0(x) for x >= 0, stable for large x.
double log_bessel_i0(double x);

/// First-order Marcum Q function Q1(a, b).
double marcum_q1(double a, double b);

}  // namespace mpcbp
