#pragma once

// OSPA and cardinality errors, per-step run logs and cross-run aggregation.

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

namespace mpcbp {

struct OspaConfig {
    double p = 2.0;
    double cutoff_d = 0.1;        // m
    double cutoff_phi_deg = 10.0; // deg
    double cutoff_snr_db = 6.0;   // dB

    void validate() const;
};

/// Minimum-cost perfect assignment of the rows of an n x m cost matrix
/// (n <= m). Returns the column chosen for each row.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

/// OSPA of order p with cutoff c between two scalar sets. `dist` is the
/// base distance between two elements.
template <typename Dist>
double ospa(const std::vector<double>& truth, const std::vector<double>& est, double p, double c, Dist dist);

double ospa(const std::vector<double>& truth, const std::vector<double>& est, double p, double c);

/// OSPA on angles [rad] with wrapped differences.
double ospa_angle(const std::vector<double>& truth, const std::vector<double>& est, double p, double c);

double cardinality_error(int truth_count, int est_count, double p, double c);

struct StepRecord {
    int step = 0;
    double ospa_d = 0.0;    // m
    double ospa_phi = 0.0;  // deg
    double ospa_snr = 0.0;  // dB
    double nom_true = 0.0;
    double nom_hat = 0.0;
    double mu_fa_true = 0.0;
    double mu_fa_hat = 0.0;
    double k_total = 0.0;   // tracks held after pruning
};

struct RunLog {
    std::vector<StepRecord> steps;
};

struct Summary {
    std::vector<StepRecord> mean;  // per step, averaged over runs
    double ospa_d = 0.0;
    double ospa_phi = 0.0;
    double ospa_snr = 0.0;
    double nom_abs_error = 0.0;
    double far_abs_error = 0.0;
    int runs = 0;
};

Summary aggregate(const std::vector<RunLog>& logs);

/// Whole-run means restricted to steps in [first, last).
Summary aggregate_window(const std::vector<RunLog>& logs, int first, int last);

void write_csv(std::ostream& out, const std::vector<StepRecord>& rows);
std::string to_csv(const std::vector<StepRecord>& rows);

// ---- template implementation ----------------------------------------------

template <typename Dist>
double ospa(const std::vector<double>& truth, const std::vector<double>& est, double p, double c, Dist dist) {
    const std::vector<double>& small = truth.size() <= est.size() ? truth : est;
    const std::vector<double>& large = truth.size() <= est.size() ? est : truth;
    const std::size_t n = small.size();
    const std::size_t m = large.size();
    if (m == 0) return 0.0;
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double e = dist(small[i], large[j]);
            cost[i][j] = std::pow(e < c ? e : c, p);
        }
    double total = 0.0;
    if (n > 0) {
        const auto col = solve_assignment(cost);
        for (std::size_t i = 0; i < n; ++i) total += cost[i][static_cast<std::size_t>(col[i])];
    }
    total += std::pow(c, p) * static_cast<double>(m - n);
    return std::pow(total / static_cast<double>(m), 1.0 / p);
}

}  // namespace mpcbp
