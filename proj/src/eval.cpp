#include "mpcbp/eval.hpp"

#include "mpcbp/channel_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mpcbp {

void OspaConfig::validate() const {
    if (!(p >= 1.0)) throw std::invalid_argument("ospa.p must be >= 1");
    if (!(cutoff_d > 0.0) || !(cutoff_phi_deg > 0.0) || !(cutoff_snr_db > 0.0))
        throw std::invalid_argument("ospa cutoffs must be > 0");
}

// Shortest augmenting path with potentials, rows 1..n, columns 1..m.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const int m = static_cast<int>(cost[0].size());
    if (m < n) throw std::invalid_argument("solve_assignment: needs rows <= columns");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> match(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

double ospa(const std::vector<double>& truth, const std::vector<double>& est, double p, double c) {
    return ospa(truth, est, p, c, [](double a, double b) { return std::abs(a - b); });
}

double ospa_angle(const std::vector<double>& truth, const std::vector<double>& est, double p, double c) {
    return ospa(truth, est, p, c, [](double a, double b) { return std::abs(angle_diff(a, b)); });
}

double cardinality_error(int truth_count, int est_count, double p, double c) {
    if (truth_count < 0 || est_count < 0) throw std::invalid_argument("cardinality_error: negative count");
    const int n_max = std::max(truth_count, est_count);
    if (n_max == 0) return 0.0;
    return std::pow(std::pow(c, p) * std::abs(truth_count - est_count) / n_max, 1.0 / p);
}

Summary aggregate_window(const std::vector<RunLog>& logs, int first, int last) {
    if (logs.empty()) throw std::invalid_argument("aggregate: no run logs");
    const std::size_t steps = logs.front().steps.size();
    for (const auto& l : logs)
        if (l.steps.size() != steps) throw std::invalid_argument("aggregate: run logs have different step counts");
    Summary s;
    s.runs = static_cast<int>(logs.size());
    s.mean.resize(steps);
    const double r = static_cast<double>(logs.size());
    for (std::size_t n = 0; n < steps; ++n) {
        StepRecord& m = s.mean[n];
        m.step = logs.front().steps[n].step;
        for (const auto& l : logs) {
            const StepRecord& x = l.steps[n];
            m.ospa_d += x.ospa_d / r;
            m.ospa_phi += x.ospa_phi / r;
            m.ospa_snr += x.ospa_snr / r;
            m.mu_fa_true += x.mu_fa_true / r;
            m.mu_fa_hat += x.mu_fa_hat / r;
            m.nom_true += x.nom_true / r;
            m.nom_hat += x.nom_hat / r;
            m.k_total += x.k_total / r;
        }
    }
    first = std::clamp(first, 0, static_cast<int>(steps));
    last = std::clamp(last, first, static_cast<int>(steps));
    const double count = static_cast<double>(last - first) * r;
    if (count > 0) {
        for (const auto& l : logs)
            for (int n = first; n < last; ++n) {
                const StepRecord& x = l.steps[n];
                s.ospa_d += x.ospa_d / count;
                s.ospa_phi += x.ospa_phi / count;
                s.ospa_snr += x.ospa_snr / count;
                s.nom_abs_error += std::abs(x.nom_hat - x.nom_true) / count;
                s.far_abs_error += std::abs(x.mu_fa_hat - x.mu_fa_true) / count;
            }
    }
    return s;
}

Summary aggregate(const std::vector<RunLog>& logs) {
    return aggregate_window(logs, 0, std::numeric_limits<int>::max());
}

void write_csv(std::ostream& out, const std::vector<StepRecord>& rows) {
    out << "step,ospa_d_m,ospa_phi_deg,ospa_snr_db,nom_true,nom_hat,mu_fa_true,mu_fa_hat,k_total\n";
    out << std::setprecision(10);
    for (const auto& r : rows)
        out << r.step << ',' << r.ospa_d << ',' << r.ospa_phi << ',' << r.ospa_snr << ',' << r.nom_true << ','
            << r.nom_hat << ',' << r.mu_fa_true << ',' << r.mu_fa_hat << ',' << r.k_total << '\n';
}

std::string to_csv(const std::vector<StepRecord>& rows) {
    std::ostringstream ss;
    write_csv(ss, rows);
    return ss.str();
}

}  // namespace mpcbp
