#pragma once

// Probabilistic data association by loopy belief propagation over the
// redundant (a, b) association graph, plus an exhaustive-enumeration oracle
// for small instances.

#include "mpcbp/channel_model.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mpcbp {

/// Factor weights of one time step.
///
/// `beta` is K x (M+1): beta(k, m) is the evidence that legacy component k
/// produced measurement m (column 0: missed detection, with the non-existence
/// branch folded in). `xi` is M x (K+1): column 0 carries the new-component or
/// clutter evidence, columns k >= 1 are consistency couplings equal to 1.
/// Rows may be scaled by arbitrary positive constants; the scales applied by
/// evaluate_weights are kept in beta_scale / xi_scale.
///
/// evaluate_weights multiplies every factor that involves measurement m
/// (beta(., m) and xi(m, 0)) by the clutter density f_fa(z_m). Each
/// admissible association picks up exactly one of these factors per
/// measurement, so the joint pmf and all marginals are unchanged, while the
/// ratios f(z|x) / f_fa(z), which overflow for strong components, never
/// have to be formed.
struct AssociationWeights {
    Eigen::MatrixXd beta;
    Eigen::MatrixXd xi;
    Eigen::VectorXd beta_scale;
    Eigen::VectorXd xi_scale;

    [[nodiscard]] int num_legacy() const { return static_cast<int>(beta.rows()); }
    [[nodiscard]] int num_measurements() const { return static_cast<int>(xi.rows()); }

    /// Weights with unit couplings and unit scales.
    static AssociationWeights from_beta_xi0(const Eigen::MatrixXd& beta, const Eigen::VectorXd& xi0);
};

struct AssociationMarginals {
    Eigen::MatrixXd p_a;  // K x (M+1)
    Eigen::MatrixXd p_b;  // M x (K+1)
    /// Converged measurement -> legacy messages nu(m -> k), stored K x M.
    Eigen::MatrixXd nu;
    /// Converged legacy -> measurement messages zeta(k -> m), stored K x M.
    Eigen::MatrixXd zeta;
    int iterations_used = 0;
    bool converged = true;
    /// Rows of p_a (first K entries) or p_b (following M entries) that had
    /// zero total weight and were replaced by a uniform marginal.
    std::vector<int> degenerate_rows;
};

/// Particle representation of one legacy component's predicted belief.
struct ParticleBelief {
    std::span<const KinematicState> particles;
    std::span<const double> weights;
    double p_exist = 0.0;
};

/// Importance-sampled particles of a new component spawned by one
/// measurement, with unnormalized importance weights f_n(x) f(z|x) / q(x).
struct NewProposal {
    std::span<const KinematicState> particles;
    std::span<const double> is_weights;
};

/// Particle-integrated quantities reused by the measurement update.
struct EvaluationCache {
    /// Per legacy component: M x J matrix of f(z_m|x_j) p_d(u_j).
    std::vector<Eigen::MatrixXd> detect_lik;
    /// Per legacy component: p_d(u_j) for each particle.
    std::vector<Eigen::VectorXd> pd;
    /// Per measurement: integral of f_n(x) f(z|x) dx.
    Eigen::VectorXd birth_lik;
    /// Per measurement: f_fa(z).
    Eigen::VectorXd clutter;
    /// FAR-averaged n(mu) and n(mu)/mu.
    double mean_norm = 0.0;
    double mean_norm_over_mu = 0.0;
};

AssociationWeights evaluate_weights(std::span<const ParticleBelief> legacy, std::span<const NewProposal> proposals,
                                    std::span<const Measurement> measurements, std::span<const double> far_particles,
                                    std::span<const double> far_weights, const HyperParams& params,
                                    const ArrayGeometry& geom, EvaluationCache* cache = nullptr);

AssociationMarginals loopy_da(const AssociationWeights& w, int max_iterations, double tol);

/// Exact marginals by enumerating every admissible association. K, M <= 8.
AssociationMarginals exhaustive_da_oracle(const AssociationWeights& w);

}  // namespace mpcbp
