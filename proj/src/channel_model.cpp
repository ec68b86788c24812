#include "mpcbp/channel_model.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace mpcbp {

namespace {

constexpr double kMaxVariancePhi = kTwoPi * kTwoPi;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

double gaussian_pdf(double residual, double var) {
    return std::exp(-0.5 * residual * residual / var) / std::sqrt(kTwoPi * var);
}

// Upper tail of the standard normal.
double normal_q(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

}  // namespace

double wrap_angle(double phi) {
    double w = phi - kTwoPi * std::floor((phi + kPi) / kTwoPi);
    if (w >= kPi) w -= kTwoPi;
    if (w < -kPi) w = -kPi;
    return w;
}

double angle_diff(double a, double b) {
    const double r = wrap_angle(a - b);
    return r == -kPi ? kPi : r;
}

void ArrayGeometry::validate() const {
    require(!elements.empty(), "geometry: at least one array element required");
    require(n_samples >= 1, "geometry: n_samples must be >= 1");
    require(f_c > 0.0 && c > 0.0 && t_s > 0.0, "geometry: f_c, c and t_s must be positive");
    require(beta_bw_sq > 0.0, "geometry: beta_bw_sq must be positive");
    double cx = 0.0;
    double cy = 0.0;
    double scale = 0.0;
    for (const auto& e : elements) {
        cx += e.radius * std::cos(e.angle);
        cy += e.radius * std::sin(e.angle);
        scale = std::max(scale, e.radius);
    }
    const double tol = 1e-9 * std::max(scale, 1.0) * static_cast<double>(elements.size());
    require(std::abs(cx) <= tol && std::abs(cy) <= tol, "geometry: element centroid must be the origin");
}

ArrayGeometry make_ura(int rows, int cols, double spacing, double psi) {
    ArrayGeometry g;
    g.psi = psi;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double x = (i - 0.5 * (rows - 1)) * spacing;
            const double y = (j - 0.5 * (cols - 1)) * spacing;
            g.elements.push_back({std::hypot(x, y), std::atan2(y, x)});
        }
    }
    return g;
}

double rrc_mean_square_bandwidth(double pulse_duration, double rolloff) {
    require(pulse_duration > 0.0 && rolloff >= 0.0 && rolloff <= 1.0, "rrc: invalid pulse parameters");
    const double f1 = (1.0 - rolloff) / (2.0 * pulse_duration);
    const double f2 = (1.0 + rolloff) / (2.0 * pulse_duration);
    // Raised-cosine power spectrum, integrated with composite Simpson on [0, f2].
    auto spectrum = [&](double f) {
        if (f <= f1) return 1.0;
        if (f >= f2) return 0.0;
        return 0.5 * (1.0 + std::cos(kPi * pulse_duration / rolloff * (f - f1)));
    };
    constexpr int n = 20000;
    const double h = f2 / n;
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double f = i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double s = spectrum(f);
        num += w * f * f * s;
        den += w * s;
    }
    return num / den;
}

ArrayGeometry default_geometry() {
    ArrayGeometry g = make_ura(3, 3, 0.02);
    g.beta_bw_sq = rrc_mean_square_bandwidth(g.pulse_duration, g.rolloff);
    return g;
}

void HyperParams::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(prob(p_s), "hyper.p_s must be in [0,1]");
    require(prob(p_de), "hyper.p_de must be in [0,1]");
    require(prob(p_pr), "hyper.p_pr must be in [0,1]");
    require(mu_n >= 0.0, "hyper.mu_n must be >= 0");
    require(u_de >= 0.0, "hyper.u_de must be >= 0");
    require(d_max > 0.0, "hyper.d_max must be > 0");
    require(sigma_d >= 0.0 && sigma_phi >= 0.0 && sigma_u_rel >= 0.0 && sigma_fa >= 0.0 && sigma_fa_ini >= 0.0 &&
                sigma_v_d >= 0.0 && sigma_v_phi >= 0.0,
            "hyper: standard deviations must be >= 0");
    require(delta_t > 0.0, "hyper.delta_t must be > 0");
    require(J >= 1, "hyper.J must be >= 1");
    require(P >= 1, "hyper.P must be >= 1");
    require(da_tol > 0.0, "hyper.da_tol must be > 0");
}

KinematicState propagate_kinematics(const KinematicState& x, const HyperParams& params, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const double e_d = params.sigma_d * n01(rng);
    const double e_phi = params.sigma_phi * n01(rng);
    const double e_u = params.sigma_u_rel * x.u * n01(rng);
    const double dt = params.delta_t;
    const double half_dt2 = 0.5 * dt * dt;
    KinematicState y;
    y.d = x.d + dt * x.v_d + half_dt2 * e_d;
    y.v_d = x.v_d + dt * e_d;
    y.phi = wrap_angle(x.phi + dt * x.v_phi + half_dt2 * e_phi);
    y.v_phi = x.v_phi + dt * e_phi;
    y.u = std::max(0.0, x.u + e_u);
    return y;
}

AugmentedState transition_sample(const KinematicState& x, bool exists, const HyperParams& params, Rng& rng) {
    if (!exists) return {x, false};
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) >= params.p_s) return {x, false};
    return {propagate_kinematics(x, params, rng), true};
}

FarState far_transition_sample(double mu_fa, double sigma_fa, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    return {std::max(kFarFloor, mu_fa + sigma_fa * n01(rng))};
}

double max_variance_d(const ArrayGeometry& geom) { return sigma_d_sq(kAmplitudeFloor, geom); }

double max_variance_phi(const ArrayGeometry&) { return kMaxVariancePhi; }

double sigma_d_sq(double u, const ArrayGeometry& geom) {
    const double ue = std::max(u, kAmplitudeFloor);
    return geom.c * geom.c / (8.0 * kPi * kPi * geom.beta_bw_sq * ue * ue);
}

double aperture_sq(double phi, const ArrayGeometry& geom) {
    double sum = 0.0;
    for (const auto& e : geom.elements) {
        const double s = e.radius * std::sin(phi - geom.psi - e.angle);
        sum += s * s;
    }
    return sum;
}

double sigma_phi_sq(double u, double phi, const ArrayGeometry& geom) {
    const double ue = std::max(u, kAmplitudeFloor);
    const double ap = aperture_sq(phi, geom);
    if (ap <= 0.0) return kMaxVariancePhi;
    const double v = geom.c * geom.c / (8.0 * kPi * kPi * geom.f_c * geom.f_c * ue * ue * ap);
    return std::min(v, kMaxVariancePhi);
}

double amp_scale_sq(double u, double n_eff) { return 0.5 + u * u / (4.0 * n_eff); }

double crlb_amp_scale_numeric(double alpha_re, double alpha_im, double s_norm_sq, double sigma_sq,
                              double n_eff) {
    if (!(sigma_sq > 0.0) || !(s_norm_sq > 0.0) || !(n_eff > 0.0))
        throw std::invalid_argument("crlb_amp_scale_numeric: singular Fisher information");
    const double s_norm = std::sqrt(s_norm_sq);
    const double sigma = std::sqrt(sigma_sq);
    const double mod = std::hypot(alpha_re, alpha_im);

    Eigen::Matrix3d fim = Eigen::Matrix3d::Zero();
    fim(0, 0) = 2.0 * s_norm_sq / sigma_sq;
    fim(1, 1) = 2.0 * s_norm_sq / sigma_sq;
    fim(2, 2) = n_eff / (sigma_sq * sigma_sq);

    // d|alpha|/d(Re, Im) is the unit phase direction; at alpha = 0 any unit
    // direction gives the same value.
    const double c_re = mod > 0.0 ? alpha_re / mod : 1.0;
    const double c_im = mod > 0.0 ? alpha_im / mod : 0.0;
    Eigen::Vector3d t;
    t << c_re * s_norm / sigma, c_im * s_norm / sigma, -mod * s_norm / (2.0 * sigma * sigma_sq);

    const Eigen::Vector3d sol = fim.ldlt().solve(t);
    return t.dot(sol);
}

double lik_distance(double z_d, double d, double u, const ArrayGeometry& geom) {
    return gaussian_pdf(z_d - d, sigma_d_sq(u, geom));
}

double lik_aoa(double z_phi, double phi, double u, const ArrayGeometry& geom) {
    return gaussian_pdf(angle_diff(z_phi, phi), sigma_phi_sq(u, phi, geom));
}

double detection_prob(double u, double u_de, double n_eff, LikelihoodMode mode) {
    const double sigma = std::sqrt(amp_scale_sq(u, n_eff));
    const double thr = std::sqrt(u_de);
    if (mode == LikelihoodMode::Gauss) return normal_q((thr - u) / sigma);
    return marcum_q1(u / sigma, thr / sigma);
}

double lik_amplitude(double z_u, double u, double u_de, double n_eff, LikelihoodMode mode) {
    if (!(z_u > std::sqrt(u_de))) return 0.0;
    const double s2 = amp_scale_sq(u, n_eff);
    const double pd = detection_prob(u, u_de, n_eff, mode);
    if (!(pd > 0.0)) return 0.0;
    if (mode == LikelihoodMode::Gauss) return gaussian_pdf(z_u - u, s2) / pd;
    const double log_num = std::log(z_u / s2) - (z_u * z_u + u * u) / (2.0 * s2) + log_bessel_i0(z_u * u / s2);
    return std::exp(log_num - std::log(pd));
}

LikelihoodTerms likelihood_terms(const KinematicState& x, const HyperParams& params, const ArrayGeometry& geom) {
    LikelihoodTerms t;
    t.var_d = sigma_d_sq(x.u, geom);
    t.var_phi = sigma_phi_sq(x.u, x.phi, geom);
    t.var_u = amp_scale_sq(x.u, geom.n_eff());
    t.pd = detection_prob(x.u, params.u_de, geom.n_eff(), params.mode);
    return t;
}

double detected_likelihood(const Measurement& z, const KinematicState& x, const LikelihoodTerms& terms,
                           const HyperParams& params) {
    if (!(z.z_u > std::sqrt(params.u_de))) return 0.0;
    const double rd = z.z_d - x.d;
    const double rphi = angle_diff(z.z_phi, x.phi);
    double log_v = -0.5 * (rd * rd / terms.var_d + rphi * rphi / terms.var_phi) -
                   0.5 * std::log(kTwoPi * kTwoPi * terms.var_d * terms.var_phi);
    if (params.mode == LikelihoodMode::Gauss) {
        const double ru = z.z_u - x.u;
        log_v += -0.5 * ru * ru / terms.var_u - 0.5 * std::log(kTwoPi * terms.var_u);
    } else {
        const double s2 = terms.var_u;
        log_v += std::log(z.z_u / s2) - (z.z_u * z.z_u + x.u * x.u) / (2.0 * s2) + log_bessel_i0(z.z_u * x.u / s2);
    }
    return std::exp(log_v);
}

double measurement_likelihood(const Measurement& z, const KinematicState& x, const HyperParams& params,
                              const ArrayGeometry& geom) {
    const double la = lik_amplitude(z.z_u, x.u, params.u_de, geom.n_eff(), params.mode);
    if (la == 0.0) return 0.0;
    return lik_distance(z.z_d, x.d, x.u, geom) * lik_aoa(z.z_phi, x.phi, x.u, geom) * la;
}

double fa_density(const Measurement& z, double u_de, double d_max) {
    if (!(z.z_u > std::sqrt(u_de)) || z.z_d < 0.0 || z.z_d > d_max) return 0.0;
    const double amp = 2.0 * z.z_u * std::exp(u_de - z.z_u * z.z_u);
    return amp / (d_max * kTwoPi);
}

double birth_density(const KinematicState& x, double d_max) {
    if (x.d < 0.0 || x.d > d_max) return 0.0;
    return 1.0 / (kTwoPi * d_max);
}

double far_norm(double mu_fa, int M, int K) {
    if (K + M < 1) throw std::invalid_argument("far_norm: K + M must be >= 1");
    if (!(mu_fa > 0.0)) throw std::invalid_argument("far_norm: mu_fa must be > 0");
    return std::exp((-mu_fa + M * std::log(mu_fa)) / static_cast<double>(K + M));
}

double pseudo_g(const KinematicState& x, bool exists, int a, double mu_fa, const std::optional<Measurement>& z,
                int M, int K, const HyperParams& params, const ArrayGeometry& geom) {
    const double n = far_norm(mu_fa, M, K);
    if (!exists) return a == 0 ? n : 0.0;
    const double pd = detection_prob(x.u, params.u_de, geom.n_eff(), params.mode);
    if (a == 0) return n * (1.0 - pd);
    if (!z) throw std::invalid_argument("pseudo_g: measurement required for a != 0");
    const double ffa = fa_density(*z, params.u_de, params.d_max);
    if (ffa <= 0.0) return 0.0;
    return n * measurement_likelihood(*z, x, params, geom) * pd / (mu_fa * ffa);
}

double pseudo_h(const KinematicState& x, bool exists, int b, double mu_fa, const Measurement& z, int M, int K,
                const HyperParams& params, const ArrayGeometry& geom) {
    const double n = far_norm(mu_fa, M, K);
    if (!exists) return n;
    if (b != 0) return 0.0;
    const double ffa = fa_density(z, params.u_de, params.d_max);
    if (ffa <= 0.0) return 0.0;
    return n * params.mu_n * birth_density(x, params.d_max) * measurement_likelihood(z, x, params, geom) /
           (mu_fa * ffa);
}

double log_bessel_i0(double x) {
    x = std::abs(x);
    if (x < 500.0) return std::log(std::cyl_bessel_i(0.0, x));
    const double inv = 1.0 / x;
    const double series = 1.0 + inv / 8.0 + 9.0 * inv * inv / 128.0 + 225.0 * inv * inv * inv / 3072.0;
    return x - 0.5 * std::log(kTwoPi * x) + std::log(series);
}

double marcum_q1(double a, double b) {
    if (b <= 0.0) return 1.0;
    if (a <= 0.0) return std::exp(-0.5 * b * b);
    try {
        boost::math::non_central_chi_squared dist(2.0, a * a);
        return std::clamp(boost::math::cdf(boost::math::complement(dist, b * b)), 0.0, 1.0);
    } catch (const std::exception&) {
        // Tails beyond double range.
        return b > a ? 0.0 : 1.0;
    }
}

}  // namespace mpcbp
