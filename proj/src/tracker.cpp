#include "mpcbp/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mpcbp {

namespace {

double log_normal_pdf(double r, double var) { return -0.5 * r * r / var - 0.5 * std::log(kTwoPi * var); }

std::vector<Measurement> admissible_measurements(const std::vector<Measurement>& raw, const HyperParams& params,
                                                 std::vector<std::string>& diagnostics) {
    std::vector<Measurement> out;
    out.reserve(raw.size());
    const double thr = std::sqrt(params.u_de);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto& z = raw[i];
        std::ostringstream why;
        if (!std::isfinite(z.z_d) || !std::isfinite(z.z_phi) || !std::isfinite(z.z_u)) {
            why << "measurement " << i << " rejected: non-finite component";
        } else if (!(z.z_u > thr)) {
            why << "measurement " << i << " rejected: z_u=" << z.z_u << " not above sqrt(u_de)=" << thr;
        } else if (z.z_d < 0.0 || z.z_d > params.d_max) {
            why << "measurement " << i << " rejected: z_d=" << z.z_d << " outside [0, d_max]";
        }
        if (!why.str().empty()) {
            diagnostics.push_back(why.str());
            continue;
        }
        out.push_back({z.z_d, wrap_angle(z.z_phi), z.z_u});
    }
    return out;
}

// Particles of a new component spawned by measurement z, drawn around the
// measurement, with importance weights f_n(x) f(z|x) / q(x). f_n is uniform
// in (d, phi); in u and the velocities the birth prior is the proposal's own
// Gaussian, so those factors cancel.
void draw_new_component(const Measurement& z, const HyperParams& params, const ArrayGeometry& geom, Rng& rng,
                        std::vector<KinematicState>& particles, std::vector<double>& is_weights) {
    const double var_d = sigma_d_sq(z.z_u, geom);
    const double var_phi = sigma_phi_sq(z.z_u, z.z_phi, geom);
    const double var_u = amp_scale_sq(z.z_u, geom.n_eff());
    const double sd = std::sqrt(var_d);
    const double sphi = std::sqrt(var_phi);
    const double su = std::sqrt(var_u);
    std::normal_distribution<double> n01(0.0, 1.0);
    particles.resize(params.J);
    is_weights.resize(params.J);
    for (int j = 0; j < params.J; ++j) {
        const double ed = n01(rng);
        const double ephi = n01(rng);
        const double eu = n01(rng);
        KinematicState x;
        x.d = z.z_d + sd * ed;
        x.phi = wrap_angle(z.z_phi + sphi * ephi);
        x.u = z.z_u + su * eu;
        x.v_d = params.sigma_v_d * n01(rng);
        x.v_phi = params.sigma_v_phi * n01(rng);
        double w = 0.0;
        if (x.u >= 0.0) {
            const double prior = birth_density(x, params.d_max);
            if (prior > 0.0) {
                const double log_q = log_normal_pdf(sd * ed, var_d) + log_normal_pdf(sphi * ephi, var_phi);
                const double lik = measurement_likelihood(z, x, params, geom);
                w = lik > 0.0 ? prior * std::exp(std::log(lik) - log_q) : 0.0;
            }
        }
        particles[j] = x;
        is_weights[j] = w;
    }
}

void normalize(std::vector<double>& w) {
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    if (s > 0.0 && std::isfinite(s)) {
        for (auto& v : w) v /= s;
    } else {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    }
}

}  // namespace

std::vector<std::size_t> systematic_indices(const std::vector<double>& weights, int count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("resample: count must be >= 1");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) throw std::invalid_argument("resample: degenerate weights");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double step = 1.0 / count;
    const double u0 = unif(rng) * step;
    std::vector<std::size_t> idx(count);
    std::size_t i = 0;
    double cum = weights[0] / total;
    for (int n = 0; n < count; ++n) {
        const double target = u0 + n * step;
        while (target > cum && i + 1 < weights.size()) {
            ++i;
            cum += weights[i] / total;
        }
        idx[n] = i;
    }
    return idx;
}

void resample(PmpcBelief& belief, int J, Rng& rng) { resample(belief.particles, belief.weights, J, rng); }

TrackSummary summarize(const PmpcBelief& belief) {
    TrackSummary s;
    s.id = belief.id;
    s.p_exist = belief.p_exist;
    if (belief.particles.empty()) return s;
    const auto ref_it = std::max_element(belief.weights.begin(), belief.weights.end());
    const double ref = belief.particles[std::distance(belief.weights.begin(), ref_it)].phi;
    double wsum = 0.0;
    double md = 0.0;
    double mphi = 0.0;
    double mu = 0.0;
    for (std::size_t j = 0; j < belief.particles.size(); ++j) {
        const double w = belief.weights[j];
        const auto& x = belief.particles[j];
        wsum += w;
        md += w * x.d;
        mphi += w * angle_diff(x.phi, ref);
        mu += w * x.u;
    }
    md /= wsum;
    mphi /= wsum;
    mu /= wsum;
    double vd = 0.0;
    double vphi = 0.0;
    for (std::size_t j = 0; j < belief.particles.size(); ++j) {
        const double w = belief.weights[j];
        const auto& x = belief.particles[j];
        vd += w * (x.d - md) * (x.d - md);
        const double r = angle_diff(x.phi, ref) - mphi;
        vphi += w * r * r;
    }
    s.d = md;
    s.phi = wrap_angle(ref + mphi);
    s.u = mu;
    s.sigma_d = std::sqrt(vd / wsum);
    s.sigma_phi = std::sqrt(vphi / wsum);
    return s;
}

std::vector<FeedbackPrior> feedback_from(const StepEstimate& est) {
    std::vector<FeedbackPrior> out;
    out.reserve(est.detected.size());
    for (const auto& t : est.detected) out.push_back({t.d, t.phi, t.sigma_d, t.sigma_phi});
    return out;
}

TrackerState init(const HyperParams& params, const ArrayGeometry& geom, std::uint64_t seed) {
    params.validate();
    geom.validate();
    TrackerState s;
    s.rng.seed(seed);
    return s;
}

void predict(TrackerState& state, const HyperParams& params) {
    for (auto& b : state.legacy) {
        b.p_exist *= params.p_s;
        for (auto& x : b.particles) x = propagate_kinematics(x, params, state.rng);
    }
    for (auto& mu : state.far.particles) mu = far_transition_sample(mu, params.sigma_fa, state.rng).mu_fa;
    state.predicted = true;
}

StepEstimate estimate(const TrackerState& state, const HyperParams& params) {
    StepEstimate est;
    for (const auto& b : state.legacy) {
        TrackSummary s = summarize(b);
        if (s.p_exist > params.p_de) est.detected.push_back(s);
        est.all_tracks.push_back(s);
    }
    est.nom_hat = static_cast<int>(est.detected.size());
    if (state.far.initialized()) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < state.far.particles.size(); ++i) {
            num += state.far.weights[i] * state.far.particles[i];
            den += state.far.weights[i];
        }
        est.mu_fa_mmse = num / den;
    }
    return est;
}

UpdateResult update(TrackerState& state, const std::vector<Measurement>& raw, const HyperParams& params,
                    const ArrayGeometry& geom) {
    UpdateResult result;
    const std::vector<Measurement> z = admissible_measurements(raw, params, result.diagnostics);
    const int K = static_cast<int>(state.legacy.size());
    const int M = static_cast<int>(z.size());

    if (!state.far.initialized()) {
        std::normal_distribution<double> n01(0.0, 1.0);
        state.far.particles.resize(params.J);
        for (auto& mu : state.far.particles)
            mu = std::max(kFarFloor, 0.5 * static_cast<double>(M) + params.sigma_fa_ini * n01(state.rng));
        state.far.weights.assign(params.J, 1.0 / params.J);
    }

    if (K + M == 0) {
        ++state.step;
        state.predicted = false;
        result.estimate = estimate(state, params);
        return result;
    }

    // New-component proposals.
    std::vector<std::vector<KinematicState>> new_particles(M);
    std::vector<std::vector<double>> new_is(M);
    for (int m = 0; m < M; ++m) draw_new_component(z[m], params, geom, state.rng, new_particles[m], new_is[m]);

    std::vector<ParticleBelief> legacy_view;
    legacy_view.reserve(K);
    for (const auto& b : state.legacy) legacy_view.push_back({b.particles, b.weights, b.p_exist});
    std::vector<NewProposal> proposals;
    proposals.reserve(M);
    for (int m = 0; m < M; ++m) proposals.push_back({new_particles[m], new_is[m]});

    EvaluationCache cache;
    const AssociationWeights weights =
        evaluate_weights(legacy_view, proposals, z, state.far.particles, state.far.weights, params, geom, &cache);
    result.marginals = loopy_da(weights, params.P, params.da_tol);
    const Eigen::MatrixXd& nu = result.marginals.nu;
    const Eigen::MatrixXd& zeta = result.marginals.zeta;
    const double en = cache.mean_norm;
    const double er = cache.mean_norm_over_mu;

    // FAR factor coefficients: rho_k(mu) = n(mu) (A_k + B_k / mu),
    // kappa_m(mu) = n(mu) (C_m + D_m / mu).
    std::vector<double> coef_a(K);
    std::vector<double> coef_b(K);
    std::vector<double> coef_c(M);
    std::vector<double> coef_d(M);

    // Legacy measurement update.
    for (int k = 0; k < K; ++k) {
        PmpcBelief& b = state.legacy[k];
        const Eigen::VectorXd& pd = cache.pd[k];
        const Eigen::MatrixXd& lik = cache.detect_lik[k];
        const std::size_t J = b.particles.size();
        double miss = 0.0;
        double detect = 0.0;
        double evidence = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            double det = 0.0;
            for (int m = 0; m < M; ++m) det += nu(k, m) * lik(m, j);
            miss += b.weights[j] * (1.0 - pd(j));
            detect += b.weights[j] * det;
            const double gamma = en * (1.0 - pd(j)) + er * det;
            b.weights[j] *= gamma;
            evidence += b.weights[j];
        }
        coef_a[k] = b.p_exist * miss + (1.0 - b.p_exist);
        coef_b[k] = b.p_exist * detect;
        const double exist = b.p_exist * evidence;
        const double absent = (1.0 - b.p_exist) * en;
        b.p_exist = (exist + absent) > 0.0 ? exist / (exist + absent) : 0.0;
        normalize(b.weights);
    }

    // New components.
    std::vector<PmpcBelief> born;
    born.reserve(M);
    for (int m = 0; m < M; ++m) {
        double coupling = cache.clutter(m);
        for (int k = 0; k < K; ++k) coupling += zeta(k, m);
        const double birth = er * params.mu_n * cache.birth_lik(m);
        coef_c[m] = coupling;
        coef_d[m] = params.mu_n * cache.birth_lik(m);
        PmpcBelief nb;
        nb.birth_step = state.step;
        nb.p_exist = birth > 0.0 ? birth / (birth + en * coupling) : 0.0;
        nb.particles = std::move(new_particles[m]);
        nb.weights = std::move(new_is[m]);
        normalize(nb.weights);
        born.push_back(std::move(nb));
    }

    // FAR belief. The product of the per-factor messages (a + b / mu) is a
    // polynomial in 1/mu; each power of 1/mu stands for one measurement not
    // being clutter, so only powers up to M are admissible. With the Poisson
    // term e^-mu mu^M the truncated polynomial gives e^-mu sum_j c_j mu^(M-j).
    {
        std::vector<double> poly(static_cast<std::size_t>(M) + 1, 0.0);
        poly[0] = 1.0;
        auto multiply = [&](double a, double b) {
            const double s = a + b;
            if (!(s > 0.0) || !std::isfinite(s)) return;
            a /= s;
            b /= s;
            for (std::size_t j = poly.size(); j-- > 0;) poly[j] = poly[j] * a + (j > 0 ? poly[j - 1] * b : 0.0);
        };
        for (int k = 0; k < K; ++k) multiply(coef_a[k], coef_b[k]);
        for (int m = 0; m < M; ++m) multiply(coef_c[m], coef_d[m]);

        auto& far = state.far;
        std::vector<double> logw(far.particles.size());
        std::vector<double> terms(poly.size());
        for (std::size_t i = 0; i < far.particles.size(); ++i) {
            const double mu = far.particles[i];
            const double log_mu = std::log(mu);
            double tmax = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < poly.size(); ++j) {
                terms[j] = poly[j] > 0.0 ? std::log(poly[j]) + (M - static_cast<double>(j)) * log_mu
                                         : -std::numeric_limits<double>::infinity();
                tmax = std::max(tmax, terms[j]);
            }
            double acc = 0.0;
            for (double t : terms) acc += std::exp(t - tmax);
            logw[i] = std::log(far.weights[i]) - mu + tmax + std::log(acc);
        }
        const double mx = *std::max_element(logw.begin(), logw.end());
        for (std::size_t i = 0; i < logw.size(); ++i) far.weights[i] = std::exp(logw[i] - mx);
        normalize(far.weights);
        resample(far.particles, far.weights, params.J, state.rng);
    }

    // Prune, resample the survivors and promote the new components.
    std::erase_if(state.legacy, [&](const PmpcBelief& b) { return b.p_exist < params.p_pr; });
    std::erase_if(born, [&](const PmpcBelief& b) { return b.p_exist < params.p_pr; });
    for (auto& b : state.legacy) resample(b, params.J, state.rng);
    for (auto& b : born) {
        resample(b, params.J, state.rng);
        b.id = state.next_id++;
        state.legacy.push_back(std::move(b));
    }

    ++state.step;
    state.predicted = false;
    result.estimate = estimate(state, params);
    return result;
}

}  // namespace mpcbp
