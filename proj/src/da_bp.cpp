#include "mpcbp/da_bp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mpcbp {

namespace {

constexpr double kMessageCap = 1e150;

// num / den for nonnegative operands, saturating instead of producing inf.
double message_ratio(double num, double den) {
    if (num == 0.0) return 0.0;
    if (den <= 0.0) return kMessageCap;
    return std::min(num / den, kMessageCap);
}

// Normalizes each row in place; rows with no usable mass become uniform.
void normalize_rows(Eigen::MatrixXd& p, int row_offset, std::vector<int>& degenerate) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double s = p.row(r).sum();
        if (s > 0.0 && std::isfinite(s)) {
            p.row(r) /= s;
        } else {
            p.row(r).setConstant(1.0 / static_cast<double>(p.cols()));
            degenerate.push_back(row_offset + static_cast<int>(r));
        }
    }
}

AssociationMarginals marginals_from_messages(const AssociationWeights& w, const Eigen::MatrixXd& nu,
                                             const Eigen::MatrixXd& zeta) {
    const int K = w.num_legacy();
    const int M = w.num_measurements();
    AssociationMarginals out;
    out.p_a.resize(K, M + 1);
    out.p_b.resize(M, K + 1);
    for (int k = 0; k < K; ++k) {
        out.p_a(k, 0) = w.beta(k, 0);
        for (int m = 0; m < M; ++m) out.p_a(k, m + 1) = w.beta(k, m + 1) * nu(k, m);
    }
    for (int m = 0; m < M; ++m) {
        out.p_b(m, 0) = w.xi(m, 0);
        for (int k = 0; k < K; ++k) out.p_b(m, k + 1) = w.xi(m, k + 1) * zeta(k, m);
    }
    normalize_rows(out.p_a, 0, out.degenerate_rows);
    normalize_rows(out.p_b, K, out.degenerate_rows);
    out.nu = nu;
    out.zeta = zeta;
    return out;
}

}  // namespace

AssociationWeights AssociationWeights::from_beta_xi0(const Eigen::MatrixXd& beta, const Eigen::VectorXd& xi0) {
    AssociationWeights w;
    const auto K = beta.rows();
    const auto M = xi0.size();
    if (beta.cols() != M + 1) throw std::invalid_argument("from_beta_xi0: beta must have M+1 columns");
    w.beta = beta;
    w.xi = Eigen::MatrixXd::Ones(M, K + 1);
    w.xi.col(0) = xi0;
    w.beta_scale = Eigen::VectorXd::Ones(K);
    w.xi_scale = Eigen::VectorXd::Ones(M);
    return w;
}

AssociationWeights evaluate_weights(std::span<const ParticleBelief> legacy, std::span<const NewProposal> proposals,
                                    std::span<const Measurement> measurements, std::span<const double> far_particles,
                                    std::span<const double> far_weights, const HyperParams& params,
                                    const ArrayGeometry& geom, EvaluationCache* cache) {
    const int K = static_cast<int>(legacy.size());
    const int M = static_cast<int>(measurements.size());
    if (static_cast<int>(proposals.size()) != M)
        throw std::invalid_argument("evaluate_weights: one new-component proposal per measurement required");
    if (far_particles.size() != far_weights.size() || far_particles.empty())
        throw std::invalid_argument("evaluate_weights: FAR belief must be non-empty");

    AssociationWeights w;
    w.beta = Eigen::MatrixXd::Zero(K, M + 1);
    w.xi = Eigen::MatrixXd::Ones(M, K + 1);
    w.beta_scale = Eigen::VectorXd::Ones(K);
    w.xi_scale = Eigen::VectorXd::Ones(M);
    EvaluationCache local;
    EvaluationCache& c = cache ? *cache : local;
    c.detect_lik.assign(K, {});
    c.pd.assign(K, {});
    c.birth_lik = Eigen::VectorXd::Zero(M);
    c.clutter = Eigen::VectorXd::Zero(M);
    if (K + M == 0) return w;

    // FAR-averaged n(mu) and n(mu)/mu. The message from the FAR variable to
    // one factor is the prediction times the messages of the other K+M-1
    // factors, each of which carries one n(mu).
    const std::size_t F = far_particles.size();
    std::vector<double> log_n(F);
    std::vector<double> log_ext(F);
    double log_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < F; ++i) {
        log_n[i] = std::log(far_norm(far_particles[i], M, K));
        log_ext[i] = far_weights[i] > 0.0 ? std::log(far_weights[i]) + (K + M - 1) * log_n[i]
                                          : -std::numeric_limits<double>::infinity();
        log_max = std::max(log_max, log_ext[i]);
    }
    double wsum = 0.0;
    double en = 0.0;
    double er = 0.0;
    for (std::size_t i = 0; i < F; ++i) {
        const double w = std::exp(log_ext[i] - log_max);
        const double n = std::exp(log_n[i]);
        en += w * n;
        er += w * n / far_particles[i];
        wsum += w;
    }
    en /= wsum;
    er /= wsum;
    c.mean_norm = en;
    c.mean_norm_over_mu = er;

    for (int m = 0; m < M; ++m) c.clutter(m) = fa_density(measurements[m], params.u_de, params.d_max);

    for (int k = 0; k < K; ++k) {
        const auto& b = legacy[k];
        const auto J = static_cast<Eigen::Index>(b.particles.size());
        Eigen::VectorXd& pd = c.pd[k];
        Eigen::MatrixXd& lik = c.detect_lik[k];
        pd.resize(J);
        lik.resize(M, J);
        double miss = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
            const auto& x = b.particles[j];
            const LikelihoodTerms t = likelihood_terms(x, params, geom);
            pd(j) = t.pd;
            miss += b.weights[j] * (1.0 - t.pd);
            for (int m = 0; m < M; ++m) lik(m, j) = detected_likelihood(measurements[m], x, t, params);
        }
        w.beta(k, 0) = en * (b.p_exist * miss + 1.0 - b.p_exist);
        for (int m = 0; m < M; ++m) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < J; ++j) s += b.weights[j] * lik(m, j);
            w.beta(k, m + 1) = er * b.p_exist * s;
        }
        const double scale = w.beta.row(k).maxCoeff();
        if (scale > 0.0 && std::isfinite(scale)) {
            w.beta.row(k) /= scale;
            w.beta_scale(k) = scale;
        }
    }

    for (int m = 0; m < M; ++m) {
        const auto& prop = proposals[m];
        double mean_is = 0.0;
        for (double v : prop.is_weights) mean_is += v;
        if (!prop.is_weights.empty()) mean_is /= static_cast<double>(prop.is_weights.size());
        c.birth_lik(m) = mean_is;
        w.xi(m, 0) = (en * c.clutter(m) + er * params.mu_n * mean_is) / en;
        w.xi_scale(m) = en;
    }
    return w;
}

AssociationMarginals loopy_da(const AssociationWeights& w, int max_iterations, double tol) {
    const int K = w.num_legacy();
    const int M = w.num_measurements();
    if (w.beta.cols() != M + 1 || w.xi.cols() != K + 1)
        throw std::invalid_argument("loopy_da: weight matrices have inconsistent shapes");
    if (!w.beta.allFinite() || !w.xi.allFinite() || (w.beta.array() < 0.0).any() || (w.xi.array() < 0.0).any())
        throw std::invalid_argument("loopy_da: weights must be finite and nonnegative");

    Eigen::MatrixXd nu = Eigen::MatrixXd::Ones(K, M);
    Eigen::MatrixXd zeta = Eigen::MatrixXd::Zero(K, M);
    Eigen::MatrixXd nu_next(K, M);
    Eigen::MatrixXd zeta_next(K, M);
    std::vector<double> prefix;
    std::vector<double> suffix;

    // Sum of all terms except index i, built from prefix/suffix sums so no
    // cancellation occurs.
    auto exclusive_sums = [&](const std::vector<double>& terms, std::vector<double>& out) {
        const std::size_t n = terms.size();
        prefix.assign(n + 1, 0.0);
        suffix.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + terms[i];
        for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + terms[i];
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = prefix[i] + suffix[i + 1];
    };

    int iter = 0;
    bool converged = (K == 0 || M == 0);
    std::vector<double> terms;
    std::vector<double> excl;
    while (!converged && iter < max_iterations) {
        ++iter;
        for (int k = 0; k < K; ++k) {
            terms.resize(M);
            for (int m = 0; m < M; ++m) terms[m] = w.beta(k, m + 1) * nu(k, m);
            exclusive_sums(terms, excl);
            for (int m = 0; m < M; ++m) zeta_next(k, m) = message_ratio(w.beta(k, m + 1), w.beta(k, 0) + excl[m]);
        }
        for (int m = 0; m < M; ++m) {
            terms.resize(K);
            for (int k = 0; k < K; ++k) terms[k] = w.xi(m, k + 1) * zeta_next(k, m);
            exclusive_sums(terms, excl);
            for (int k = 0; k < K; ++k) nu_next(k, m) = message_ratio(w.xi(m, k + 1), w.xi(m, 0) + excl[k]);
        }
        double delta = (nu_next - nu).cwiseAbs().maxCoeff();
        for (int k = 0; k < K; ++k)
            for (int m = 0; m < M; ++m)
                delta = std::max(delta, std::abs(zeta_next(k, m) - zeta(k, m)) / std::max(1.0, zeta_next(k, m)));
        nu.swap(nu_next);
        zeta.swap(zeta_next);
        converged = delta < tol;
    }
    AssociationMarginals result = marginals_from_messages(w, nu, zeta);
    result.iterations_used = iter;
    result.converged = converged;
    return result;
}

AssociationMarginals exhaustive_da_oracle(const AssociationWeights& w) {
    const int K = w.num_legacy();
    const int M = w.num_measurements();
    if (K > 8 || M > 8) throw std::invalid_argument("exhaustive_da_oracle: instance too large (K, M <= 8)");
    if (w.beta.cols() != M + 1 || w.xi.cols() != K + 1)
        throw std::invalid_argument("exhaustive_da_oracle: weight matrices have inconsistent shapes");

    AssociationMarginals out;
    out.p_a = Eigen::MatrixXd::Zero(K, M + 1);
    out.p_b = Eigen::MatrixXd::Zero(M, K + 1);
    std::vector<int> a(K, 0);
    std::vector<int> b(M, 0);

    auto accumulate = [&]() {
        double weight = 1.0;
        for (int k = 0; k < K; ++k) weight *= w.beta(k, a[k]);
        for (int m = 0; m < M; ++m) weight *= w.xi(m, b[m]);
        if (weight == 0.0) return;
        for (int k = 0; k < K; ++k) out.p_a(k, a[k]) += weight;
        for (int m = 0; m < M; ++m) out.p_b(m, b[m]) += weight;
    };

    // Depth-first over legacy components; b is kept consistent with a.
    auto recurse = [&](auto&& self, int k) -> void {
        if (k == K) {
            accumulate();
            return;
        }
        a[k] = 0;
        self(self, k + 1);
        for (int m = 1; m <= M; ++m) {
            if (b[m - 1] != 0) continue;
            a[k] = m;
            b[m - 1] = k + 1;
            self(self, k + 1);
            b[m - 1] = 0;
        }
        a[k] = 0;
    };
    recurse(recurse, 0);

    normalize_rows(out.p_a, 0, out.degenerate_rows);
    normalize_rows(out.p_b, K, out.degenerate_rows);
    out.iterations_used = 0;
    out.converged = true;
    return out;
}

}  // namespace mpcbp
