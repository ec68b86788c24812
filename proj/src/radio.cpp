#include "mpcbp/synthgen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mpcbp {

namespace {

using cd = std::complex<double>;

constexpr int kTruncation = 8;  // pulse support in symbol periods, each side
constexpr char kSnapshotMagic[8] = {'M', 'P', 'C', 'S', 'N', 'A', 'P', '1'};

double period(const ArrayGeometry& geom) { return geom.n_samples * geom.t_s; }

double periodic_pulse(double t, const ArrayGeometry& geom) {
    const double T = period(geom);
    const double reach = kTruncation * geom.pulse_duration;
    const auto k_lo = static_cast<long>(std::ceil((t - reach) / T));
    const auto k_hi = static_cast<long>(std::floor((t + reach) / T));
    double s = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) s += rrc_pulse(t - k * T, geom.pulse_duration, geom.rolloff);
    return s;
}

// Plane-wave delay shift of element h times c.
double element_shift(double phi, const ElementOffset& e, double psi) { return e.radius * std::cos(phi - psi - e.angle); }

void write_le(std::ofstream& out, const void* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    } else {
        std::array<char, 8> b{};
        std::memcpy(b.data(), p, n);
        std::reverse(b.begin(), b.begin() + static_cast<long>(n));
        out.write(b.data(), static_cast<std::streamsize>(n));
    }
}

void read_le(std::ifstream& in, void* p, std::size_t n) {
    std::array<char, 8> b{};
    in.read(b.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("snapshot file truncated");
    if constexpr (std::endian::native != std::endian::little) std::reverse(b.begin(), b.begin() + static_cast<long>(n));
    std::memcpy(p, b.data(), n);
}

struct Component {
    double d = 0.0;
    double phi = 0.0;
    std::vector<cd> s;
};

class Estimator {
public:
    Estimator(const RadioSnapshot& snap, const ArrayGeometry& geom, double u_de, const SnapshotEstimatorConfig& cfg)
        : geom_(geom), u_de_(u_de), cfg_(cfg), y_(snap.samples), residual_(snap.samples) {
        N_ = static_cast<int>(y_.size());
        const double step_t = geom.t_s * cfg.delay_step_fraction;
        const int n_delay = static_cast<int>(std::floor(period(geom) / step_t));
        for (int k = 0; k < n_delay; ++k) delays_.push_back(k * step_t);
        const int n_angle = static_cast<int>(std::round(360.0 / cfg.angle_step_deg));
        for (int a = 0; a < n_angle; ++a) angles_.push_back(wrap_angle(-kPi + a * cfg.angle_step_deg * kPi / 180.0));
        const int H = geom.num_elements();
        pulses_.assign(delays_.size(), std::vector<double>(geom.n_samples));
        pulse_energy_.assign(delays_.size(), 0.0);
        for (std::size_t k = 0; k < delays_.size(); ++k)
            for (int n = 0; n < geom.n_samples; ++n) {
                pulses_[k][n] = periodic_pulse(n * geom.t_s - delays_[k], geom);
                pulse_energy_[k] += H * pulses_[k][n] * pulses_[k][n];
            }
        phases_.assign(angles_.size(), std::vector<cd>(H));
        for (std::size_t a = 0; a < angles_.size(); ++a)
            for (int h = 0; h < H; ++h)
                phases_[a][h] = std::polar(1.0, kTwoPi * geom.f_c * element_shift(angles_[a], geom.elements[h], geom.psi) /
                                                    geom.c);
    }

    std::vector<Measurement> run(const std::vector<FeedbackPrior>& priors) {
        for (const auto& p : priors) {
            if (static_cast<int>(comps_.size()) >= cfg_.max_components) break;
            Component c = refine(p.d, wrap_angle(p.phi));
            if (duplicate(c)) continue;
            if (!try_accept(std::move(c))) continue;
        }
        while (static_cast<int>(comps_.size()) < cfg_.max_components) {
            auto [d, phi] = coarse_peak();
            Component c = refine(d, phi);
            if (duplicate(c) || !try_accept(std::move(c))) break;
        }
        return measurements();
    }

private:
    [[nodiscard]] double objective(double d, double phi) const {
        const auto s = steering_signal(d, phi, geom_);
        cd num = 0.0;
        double e = 0.0;
        for (int i = 0; i < N_; ++i) {
            num += std::conj(s[i]) * residual_[i];
            e += std::norm(s[i]);
        }
        return e > 0.0 ? std::norm(num) / e : 0.0;
    }

    [[nodiscard]] std::pair<double, double> coarse_peak() const {
        const int H = geom_.num_elements();
        const int Ns = geom_.n_samples;
        std::vector<cd> proj(H);
        double best = -1.0;
        std::pair<double, double> arg{0.0, 0.0};
        for (std::size_t k = 0; k < delays_.size(); ++k) {
            if (pulse_energy_[k] <= 0.0) continue;
            for (int h = 0; h < H; ++h) {
                cd acc = 0.0;
                for (int n = 0; n < Ns; ++n) acc += pulses_[k][n] * residual_[h * Ns + n];
                proj[h] = acc;
            }
            for (std::size_t a = 0; a < angles_.size(); ++a) {
                cd acc = 0.0;
                for (int h = 0; h < H; ++h) acc += std::conj(phases_[a][h]) * proj[h];
                const double v = std::norm(acc) / pulse_energy_[k];
                if (v > best) {
                    best = v;
                    arg = {delays_[k] * geom_.c, angles_[a]};
                }
            }
        }
        return arg;
    }

    // Damped Newton ascent on the matched-filter objective with central
    // finite differences; steps limited to one grid cell.
    [[nodiscard]] Component refine(double d, double phi) const {
        const double hd = 1e-3;
        const double hp = 1e-3;
        const double max_dd = geom_.c * geom_.t_s * cfg_.delay_step_fraction;
        const double max_dp = cfg_.angle_step_deg * kPi / 180.0;
        double f0 = objective(d, phi);
        for (int it = 0; it < cfg_.newton_steps; ++it) {
            const double fpd = objective(d + hd, phi), fmd = objective(d - hd, phi);
            const double fpp = objective(d, phi + hp), fmp = objective(d, phi - hp);
            const double fpp2 = objective(d + hd, phi + hp), fpm = objective(d + hd, phi - hp);
            const double fmp2 = objective(d - hd, phi + hp), fmm = objective(d - hd, phi - hp);
            Eigen::Vector2d g((fpd - fmd) / (2 * hd), (fpp - fmp) / (2 * hp));
            Eigen::Matrix2d Hs;
            Hs(0, 0) = (fpd - 2 * f0 + fmd) / (hd * hd);
            Hs(1, 1) = (fpp - 2 * f0 + fmp) / (hp * hp);
            Hs(0, 1) = Hs(1, 0) = (fpp2 - fpm - fmp2 + fmm) / (4 * hd * hp);
            Eigen::Vector2d step;
            if (Hs(0, 0) < 0.0 && Hs.determinant() > 0.0) {
                step = -Hs.ldlt().solve(g);
            } else {
                step = Eigen::Vector2d(g(0) * max_dd, g(1) * max_dp);
                const double n = std::hypot(g(0), g(1));
                if (n > 0.0) step /= n;
            }
            step(0) = std::clamp(step(0), -max_dd, max_dd);
            step(1) = std::clamp(step(1), -max_dp, max_dp);
            bool moved = false;
            for (int half = 0; half < 6 && !moved; ++half, step *= 0.5) {
                const double f1 = objective(d + step(0), phi + step(1));
                if (f1 > f0) {
                    d += step(0);
                    phi = wrap_angle(phi + step(1));
                    f0 = f1;
                    moved = true;
                }
            }
            if (!moved) break;
        }
        return {d, phi, steering_signal(d, phi, geom_)};
    }

    [[nodiscard]] bool duplicate(const Component& c) const {
        const double dd = geom_.c * geom_.t_s * cfg_.delay_step_fraction;
        const double dp = cfg_.angle_step_deg * kPi / 180.0;
        return std::any_of(comps_.begin(), comps_.end(), [&](const Component& o) {
            return std::abs(o.d - c.d) < dd && std::abs(angle_diff(o.phi, c.phi)) < dp;
        });
    }

    // Joint least-squares amplitudes of `comps`, residual and noise variance.
    struct Fit {
        Eigen::VectorXcd alpha;
        std::vector<cd> residual;
        double sigma_sq = 0.0;
    };

    [[nodiscard]] Fit fit(const std::vector<Component>& comps) const {
        const auto L = static_cast<Eigen::Index>(comps.size());
        Eigen::MatrixXcd A(N_, L);
        for (Eigen::Index l = 0; l < L; ++l)
            for (int i = 0; i < N_; ++i) A(i, l) = comps[l].s[i];
        Eigen::Map<const Eigen::VectorXcd> y(y_.data(), N_);
        Fit f;
        f.alpha = A.colPivHouseholderQr().solve(y);
        const Eigen::VectorXcd r = y - A * f.alpha;
        f.residual.assign(r.data(), r.data() + N_);
        f.sigma_sq = r.squaredNorm() / std::max<Eigen::Index>(1, N_ - L);
        return f;
    }

    bool try_accept(Component c) {
        std::vector<Component> trial = comps_;
        trial.push_back(std::move(c));
        const Fit f = fit(trial);
        const auto& last = trial.back();
        double e = 0.0;
        for (const auto& v : last.s) e += std::norm(v);
        if (!(f.sigma_sq > 0.0)) return false;
        const double z_sq = std::norm(f.alpha(f.alpha.size() - 1)) * e / f.sigma_sq;
        if (!(z_sq > u_de_)) return false;
        comps_ = std::move(trial);
        residual_ = f.residual;
        return true;
    }

    [[nodiscard]] std::vector<Measurement> measurements() const {
        std::vector<Measurement> out;
        if (comps_.empty()) return out;
        const Fit f = fit(comps_);
        const double thr = std::sqrt(u_de_);
        for (std::size_t l = 0; l < comps_.size(); ++l) {
            double e = 0.0;
            for (const auto& v : comps_[l].s) e += std::norm(v);
            const double z_u = std::abs(f.alpha(static_cast<Eigen::Index>(l))) * std::sqrt(e / f.sigma_sq);
            if (!(z_u > thr) || !std::isfinite(z_u)) continue;
            out.push_back({comps_[l].d, wrap_angle(comps_[l].phi), z_u});
        }
        return out;
    }

    const ArrayGeometry& geom_;
    double u_de_;
    SnapshotEstimatorConfig cfg_;
    std::vector<cd> y_;
    std::vector<cd> residual_;
    int N_ = 0;
    std::vector<double> delays_;
    std::vector<double> angles_;
    std::vector<std::vector<double>> pulses_;
    std::vector<double> pulse_energy_;
    std::vector<std::vector<cd>> phases_;
    std::vector<Component> comps_;
};

}  // namespace

double rrc_pulse(double t, double T, double beta) {
    if (std::abs(t) > kTruncation * T) return 0.0;
    const double x = t / T;
    if (std::abs(x) < 1e-12) return (1.0 + beta * (4.0 / kPi - 1.0)) / T;
    if (beta > 0.0 && std::abs(std::abs(x) - 1.0 / (4.0 * beta)) < 1e-9) {
        const double a = kPi / (4.0 * beta);
        return beta / (T * std::sqrt(2.0)) * ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
    }
    const double num = std::sin(kPi * x * (1.0 - beta)) + 4.0 * beta * x * std::cos(kPi * x * (1.0 + beta));
    const double den = kPi * x * (1.0 - std::pow(4.0 * beta * x, 2));
    return num / den / T;
}

std::vector<std::complex<double>> steering_signal(double d, double phi, const ArrayGeometry& geom) {
    const int H = geom.num_elements();
    const int Ns = geom.n_samples;
    std::vector<cd> s(static_cast<std::size_t>(H) * Ns);
    for (int h = 0; h < H; ++h) {
        const double g = element_shift(phi, geom.elements[h], geom.psi) / geom.c;
        const cd carrier = std::polar(1.0, kTwoPi * geom.f_c * g);
        for (int n = 0; n < Ns; ++n) s[h * Ns + n] = carrier * periodic_pulse(n * geom.t_s - d / geom.c + g, geom);
    }
    return s;
}

RadioSnapshot synth_radio_amplitudes(const std::vector<std::pair<KinematicState, std::complex<double>>>& comps,
                                     const ArrayGeometry& geom, double sigma_sq, Rng& rng) {
    geom.validate();
    RadioSnapshot snap;
    snap.n_samples = geom.n_samples;
    snap.n_elements = geom.num_elements();
    snap.sigma_sq = sigma_sq;
    snap.samples.assign(static_cast<std::size_t>(snap.n_samples) * snap.n_elements, cd{});
    for (const auto& [x, alpha] : comps) {
        const auto s = steering_signal(x.d, x.phi, geom);
        for (std::size_t i = 0; i < s.size(); ++i) snap.samples[i] += alpha * s[i];
    }
    if (sigma_sq > 0.0) {
        std::normal_distribution<double> n01(0.0, std::sqrt(sigma_sq / 2.0));
        for (auto& v : snap.samples) v += cd(n01(rng), n01(rng));
    }
    return snap;
}

RadioSnapshot synth_radio(const std::vector<RadioComponent>& truth, const ArrayGeometry& geom, double sigma_sq,
                          Rng& rng) {
    std::vector<std::pair<KinematicState, cd>> comps;
    comps.reserve(truth.size());
    for (const auto& c : truth) {
        const auto s = steering_signal(c.x.d, c.x.phi, geom);
        double e = 0.0;
        for (const auto& v : s) e += std::norm(v);
        const double mag = e > 0.0 ? c.x.u / std::sqrt(e) : 0.0;
        comps.emplace_back(c.x, std::polar(mag, c.phase));
    }
    return synth_radio_amplitudes(comps, geom, sigma_sq, rng);
}

void save_snapshot(const RadioSnapshot& snap, const std::filesystem::path& path) {
    if (snap.samples.size() != static_cast<std::size_t>(snap.n_samples) * snap.n_elements)
        throw std::invalid_argument("snapshot: sample count does not match N_s * H");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write snapshot file " + path.string());
    out.write(kSnapshotMagic, sizeof kSnapshotMagic);
    const std::int32_t ns = snap.n_samples;
    const std::int32_t h = snap.n_elements;
    const std::int32_t trunc = kTruncation;
    write_le(out, &ns, 4);
    write_le(out, &h, 4);
    write_le(out, &trunc, 4);
    write_le(out, &snap.sigma_sq, 8);
    for (const auto& v : snap.samples) {
        const double re = v.real();
        const double im = v.imag();
        write_le(out, &re, 8);
        write_le(out, &im, 8);
    }
}

RadioSnapshot load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read snapshot file " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kSnapshotMagic, 8) != 0) throw std::runtime_error("not a snapshot file");
    std::int32_t ns = 0, h = 0, trunc = 0;
    RadioSnapshot snap;
    read_le(in, &ns, 4);
    read_le(in, &h, 4);
    read_le(in, &trunc, 4);
    read_le(in, &snap.sigma_sq, 8);
    if (ns < 1 || h < 1) throw std::runtime_error("snapshot header has invalid dimensions");
    snap.n_samples = ns;
    snap.n_elements = h;
    snap.samples.resize(static_cast<std::size_t>(ns) * h);
    for (auto& v : snap.samples) {
        double re = 0.0, im = 0.0;
        read_le(in, &re, 8);
        read_le(in, &im, 8);
        v = {re, im};
    }
    return snap;
}

std::vector<Measurement> snapshot_estimate(const RadioSnapshot& snap, const std::vector<FeedbackPrior>& priors,
                                           const ArrayGeometry& geom, double u_de, const SnapshotEstimatorConfig& cfg) {
    if (snap.n_samples != geom.n_samples || snap.n_elements != geom.num_elements() ||
        snap.samples.size() != static_cast<std::size_t>(snap.n_samples) * snap.n_elements)
        throw std::invalid_argument("snapshot_estimate: snapshot does not match the array geometry");
    Estimator est(snap, geom, u_de, cfg);
    return est.run(priors);
}

}  // namespace mpcbp
