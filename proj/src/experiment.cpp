#include "mpcbp/experiment.hpp"

#include "mpcbp/tracker.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace mpcbp {

namespace {

using nlohmann::json;

constexpr double kDeg = kPi / 180.0;

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
}

// Reads typed fields of one JSON object, recording defaults, range errors
// and unknown keys against dotted field paths.
class Section {
public:
    Section(const json* obj, std::string prefix, ConfigReport& report)
        : obj_(obj), prefix_(std::move(prefix)), report_(report) {
        if (obj_ && !obj_->is_object()) {
            report_.errors.push_back(path("") + ": must be an object");
            obj_ = nullptr;
        }
    }

    ~Section() {
        if (!obj_) return;
        for (const auto& [key, value] : obj_->items())
            if (!seen_.count(key)) report_.errors.push_back(path(key) + ": unknown field");
    }

    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    [[nodiscard]] const json* child(const std::string& key) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return nullptr;
        return &obj_->at(key);
    }

    void number(const std::string& key, double& out, double lo, double hi, bool lo_open = false) {
        const json* v = child(key);
        if (!v) {
            report_.defaulted.push_back(path(key) + ": " + fmt(out));
            return;
        }
        if (!v->is_number()) {
            report_.errors.push_back(path(key) + ": must be a number");
            return;
        }
        const double x = v->get<double>();
        if (!std::isfinite(x) || x < lo || x > hi || (lo_open && x == lo)) {
            report_.errors.push_back(path(key) + ": " + fmt(x) + " outside " + (lo_open ? "(" : "[") + fmt(lo) +
                                     ", " + fmt(hi) + "]");
            return;
        }
        out = x;
    }

    void integer(const std::string& key, int& out, int lo, int hi) {
        const json* v = child(key);
        if (!v) {
            report_.defaulted.push_back(path(key) + ": " + std::to_string(out));
            return;
        }
        if (!v->is_number_integer()) {
            report_.errors.push_back(path(key) + ": must be an integer");
            return;
        }
        const auto x = v->get<long long>();
        if (x < lo || x > hi) {
            report_.errors.push_back(path(key) + ": " + std::to_string(x) + " outside [" + std::to_string(lo) +
                                     ", " + std::to_string(hi) + "]");
            return;
        }
        out = static_cast<int>(x);
    }

    void text(const std::string& key, std::string& out) {
        const json* v = child(key);
        if (!v) {
            report_.defaulted.push_back(path(key) + ": \"" + out + "\"");
            return;
        }
        if (!v->is_string()) {
            report_.errors.push_back(path(key) + ": must be a string");
            return;
        }
        out = v->get<std::string>();
    }

    [[nodiscard]] std::string path(const std::string& key) const {
        if (prefix_.empty()) return key;
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

    ConfigReport& report() { return report_; }

private:
    const json* obj_;
    std::string prefix_;
    ConfigReport& report_;
    std::set<std::string> seen_;
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

HyperParams effective_hyper(const ExperimentConfig& cfg, const Scenario& scn) {
    HyperParams h = cfg.hyper;
    h.u_de = cfg.u_de.value_or(scn.u_de);
    return h;
}

}  // namespace

ArrayGeometry GeometryConfig::build() const {
    ArrayGeometry g = make_ura(rows, cols, spacing, psi);
    g.f_c = f_c;
    g.n_samples = n_samples;
    g.t_s = t_s;
    g.c = c;
    g.pulse_duration = pulse_duration;
    g.rolloff = rolloff;
    g.beta_bw_sq = rrc_mean_square_bandwidth(pulse_duration, rolloff);
    g.validate();
    return g;
}

ConfigReport parse_config(const std::string& text) {
    ConfigReport report;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        report.errors.push_back(std::string("$: parse error: ") + e.what());
        return report;
    }
    if (!root.is_object()) {
        report.errors.push_back("$: top level must be an object");
        return report;
    }
    ExperimentConfig& cfg = report.config;
    {
        Section top(&root, "", report);
        const json* version = top.child("schema_version");
        if (!version) {
            report.errors.push_back("schema_version: required");
        } else if (!version->is_number_integer() || version->get<int>() != kConfigSchemaVersion) {
            report.errors.push_back("schema_version: unsupported (expected " +
                                    std::to_string(kConfigSchemaVersion) + ")");
        }
        std::string mode = "fully_synthetic";
        top.text("mode", mode);
        if (mode == "fully_synthetic") {
            cfg.mode = ExperimentMode::FullySynthetic;
        } else if (mode == "radio_pipeline") {
            cfg.mode = ExperimentMode::RadioPipeline;
        } else {
            report.errors.push_back("mode: must be fully_synthetic or radio_pipeline");
        }
        top.text("scenario", cfg.scenario);
        top.integer("runs", cfg.runs, 1, 1000000);
        top.integer("workers", cfg.workers, 1, 1024);
        top.text("out_dir", cfg.out_dir);
        if (const json* seed = top.child("base_seed")) {
            if (seed->is_number_unsigned())
                cfg.base_seed = seed->get<std::uint64_t>();
            else
                report.errors.push_back("base_seed: must be a nonnegative integer");
        } else {
            report.defaulted.push_back("base_seed: " + std::to_string(cfg.base_seed));
        }

        {
            Section h(top.child("hyper"), "hyper", report);
            HyperParams& p = cfg.hyper;
            h.number("p_s", p.p_s, 0.0, 1.0);
            h.number("p_de", p.p_de, 0.0, 1.0);
            h.number("p_pr", p.p_pr, 0.0, 1.0);
            h.number("mu_n", p.mu_n, 0.0, 1e6, true);
            if (const json* u = h.child("u_de")) {
                if (u->is_number() && u->get<double>() > 0.0)
                    cfg.u_de = u->get<double>();
                else
                    report.errors.push_back("hyper.u_de: must be a number > 0");
            } else {
                report.defaulted.push_back("hyper.u_de: taken from the scenario");
            }
            h.number("d_max", p.d_max, 0.0, 1e6, true);
            h.number("sigma_d", p.sigma_d, 0.0, 1e6);
            double sphi = p.sigma_phi / kDeg;
            h.number("sigma_phi_deg", sphi, 0.0, 360.0);
            p.sigma_phi = sphi * kDeg;
            h.number("sigma_u_rel", p.sigma_u_rel, 0.0, 1e3);
            h.number("sigma_fa", p.sigma_fa, 0.0, 1e6);
            h.number("sigma_fa_ini", p.sigma_fa_ini, 0.0, 1e6);
            h.number("sigma_v_d", p.sigma_v_d, 0.0, 1e6);
            double svphi = p.sigma_v_phi / kDeg;
            h.number("sigma_v_phi_deg", svphi, 0.0, 360.0);
            p.sigma_v_phi = svphi * kDeg;
            h.number("delta_t", p.delta_t, 0.0, 1e6, true);
            h.integer("J", p.J, 1, 10000000);
            h.integer("P", p.P, 1, 100000000);
            h.number("da_tol", p.da_tol, 0.0, 1.0, true);
            std::string lik = "gauss";
            h.text("likelihood", lik);
            if (lik == "gauss") {
                p.mode = LikelihoodMode::Gauss;
            } else if (lik == "exact") {
                p.mode = LikelihoodMode::Exact;
            } else {
                report.errors.push_back("hyper.likelihood: must be gauss or exact");
            }
        }
        {
            Section g(top.child("geometry"), "geometry", report);
            GeometryConfig& G = cfg.geom;
            g.integer("rows", G.rows, 1, 64);
            g.integer("cols", G.cols, 1, 64);
            g.number("spacing", G.spacing, 0.0, 10.0);
            double psi = G.psi / kDeg;
            g.number("psi_deg", psi, -360.0, 360.0);
            G.psi = psi * kDeg;
            g.number("f_c", G.f_c, 0.0, 1e12, true);
            g.integer("n_samples", G.n_samples, 1, 1 << 20);
            g.number("t_s", G.t_s, 0.0, 1.0, true);
            g.number("c", G.c, 0.0, 1e9, true);
            g.number("pulse_duration", G.pulse_duration, 0.0, 1.0, true);
            g.number("rolloff", G.rolloff, 0.0, 1.0);
        }
        {
            Section o(top.child("ospa"), "ospa", report);
            o.number("p", cfg.ospa.p, 1.0, 100.0);
            o.number("cutoff_d", cfg.ospa.cutoff_d, 0.0, 1e6, true);
            o.number("cutoff_phi_deg", cfg.ospa.cutoff_phi_deg, 0.0, 360.0, true);
            o.number("cutoff_snr_db", cfg.ospa.cutoff_snr_db, 0.0, 1e3, true);
        }
        {
            Section r(top.child("radio"), "radio", report);
            r.number("sigma_sq", cfg.radio_sigma_sq, 0.0, 1e12, true);
            r.number("angle_step_deg", cfg.estimator.angle_step_deg, 0.0, 90.0, true);
            r.number("delay_step_fraction", cfg.estimator.delay_step_fraction, 0.0, 1.0, true);
            r.integer("newton_steps", cfg.estimator.newton_steps, 0, 100);
            r.integer("max_components", cfg.estimator.max_components, 1, 1000);
        }
    }
    if (report.errors.empty()) {
        try {
            (void)cfg.geom.build();
        } catch (const std::exception& e) {
            report.errors.push_back(std::string("geometry: ") + e.what());
        }
        if (!builtin_scenario(cfg.scenario) && !std::filesystem::exists(cfg.scenario))
            report.errors.push_back("scenario: not a builtin name and no such file: " + cfg.scenario);
    }
    return report;
}

ConfigReport validate_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        ConfigReport r;
        r.errors.push_back("$: cannot read " + path.string());
        return r;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    const HyperParams& p = cfg.hyper;
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["mode"] = cfg.mode == ExperimentMode::FullySynthetic ? "fully_synthetic" : "radio_pipeline";
    j["scenario"] = cfg.scenario;
    j["runs"] = cfg.runs;
    // out_dir and workers are left out so outputs do not depend on where or
    // how concurrently they were produced.
    j["base_seed"] = cfg.base_seed;
    json h = {{"p_s", p.p_s},
              {"p_de", p.p_de},
              {"p_pr", p.p_pr},
              {"mu_n", p.mu_n},
              {"d_max", p.d_max},
              {"sigma_d", p.sigma_d},
              {"sigma_phi_deg", p.sigma_phi / kDeg},
              {"sigma_u_rel", p.sigma_u_rel},
              {"sigma_fa", p.sigma_fa},
              {"sigma_fa_ini", p.sigma_fa_ini},
              {"sigma_v_d", p.sigma_v_d},
              {"sigma_v_phi_deg", p.sigma_v_phi / kDeg},
              {"delta_t", p.delta_t},
              {"J", p.J},
              {"P", p.P},
              {"da_tol", p.da_tol},
              {"likelihood", p.mode == LikelihoodMode::Gauss ? "gauss" : "exact"}};
    if (cfg.u_de) h["u_de"] = *cfg.u_de;
    j["hyper"] = std::move(h);
    const GeometryConfig& g = cfg.geom;
    j["geometry"] = {{"rows", g.rows},       {"cols", g.cols},           {"spacing", g.spacing},
                     {"psi_deg", g.psi / kDeg}, {"f_c", g.f_c},           {"n_samples", g.n_samples},
                     {"t_s", g.t_s},         {"c", g.c},                 {"pulse_duration", g.pulse_duration},
                     {"rolloff", g.rolloff}};
    j["ospa"] = {{"p", cfg.ospa.p},
                 {"cutoff_d", cfg.ospa.cutoff_d},
                 {"cutoff_phi_deg", cfg.ospa.cutoff_phi_deg},
                 {"cutoff_snr_db", cfg.ospa.cutoff_snr_db}};
    j["radio"] = {{"sigma_sq", cfg.radio_sigma_sq},
                  {"angle_step_deg", cfg.estimator.angle_step_deg},
                  {"delay_step_fraction", cfg.estimator.delay_step_fraction},
                  {"newton_steps", cfg.estimator.newton_steps},
                  {"max_components", cfg.estimator.max_components}};
    return j.dump(2);
}

Scenario resolve_scenario(const ExperimentConfig& cfg) {
    if (auto s = builtin_scenario(cfg.scenario)) return *s;
    return load_scenario(cfg.scenario);
}

std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t index) { return splitmix64(base_seed ^ index); }

RunLog run_once(const ExperimentConfig& cfg, const Scenario& scn, int index) {
    const ArrayGeometry geom = cfg.geom.build();
    const HyperParams hyper = effective_hyper(cfg, scn);
    const std::uint64_t seed = run_seed(cfg.base_seed, static_cast<std::uint64_t>(index));
    Rng synth_rng(seed);
    TrackerState tracker = init(hyper, geom, splitmix64(seed));
    std::uniform_real_distribution<double> phase(-kPi, kPi);

    RunLog log;
    log.steps.reserve(scn.steps);
    StepEstimate previous;
    const double c_phi = cfg.ospa.cutoff_phi_deg * kDeg;
    for (int n = 0; n < scn.steps; ++n) {
        std::vector<Measurement> z;
        if (cfg.mode == ExperimentMode::FullySynthetic) {
            z = synth_measurements(scn, n, hyper, geom, synth_rng);
        } else {
            std::vector<RadioComponent> comps;
            for (const auto& x : scn.truth_at(n)) comps.push_back({x, phase(synth_rng)});
            const RadioSnapshot snap = synth_radio(comps, geom, cfg.radio_sigma_sq, synth_rng);
            z = snapshot_estimate(snap, feedback_from(previous), geom, hyper.u_de, cfg.estimator);
        }
        predict(tracker, hyper);
        const UpdateResult res = update(tracker, z, hyper, geom);
        previous = res.estimate;

        std::vector<double> td, tphi, tsnr, ed, ephi, esnr;
        for (const auto& x : scn.truth_at(n)) {
            td.push_back(x.d);
            tphi.push_back(x.phi);
            tsnr.push_back(20.0 * std::log10(std::max(x.u, kAmplitudeFloor)));
        }
        for (const auto& t : res.estimate.detected) {
            ed.push_back(t.d);
            ephi.push_back(t.phi);
            esnr.push_back(20.0 * std::log10(std::max(t.u, kAmplitudeFloor)));
        }
        StepRecord r;
        r.step = n;
        r.ospa_d = ospa(td, ed, cfg.ospa.p, cfg.ospa.cutoff_d);
        r.ospa_phi = ospa_angle(tphi, ephi, cfg.ospa.p, c_phi) / kDeg;
        r.ospa_snr = ospa(tsnr, esnr, cfg.ospa.p, cfg.ospa.cutoff_snr_db);
        r.nom_true = static_cast<double>(td.size());
        r.nom_hat = res.estimate.nom_hat;
        r.mu_fa_true = scn.far_profile[n];
        r.mu_fa_hat = res.estimate.mu_fa_mmse;
        r.k_total = static_cast<double>(tracker.legacy.size());
        log.steps.push_back(r);
    }
    return log;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write) {
    cfg.hyper.validate();
    cfg.ospa.validate();
    if (cfg.runs < 1) throw std::invalid_argument("runs must be >= 1");
    const Scenario scn = resolve_scenario(cfg);
    scn.validate();

    std::filesystem::path out_dir(cfg.out_dir);
    if (write) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec || !std::filesystem::is_directory(out_dir))
            throw std::runtime_error("cannot create output directory " + out_dir.string());
    }

    ExperimentResult result;
    result.logs.resize(cfg.runs);
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (int i = next++; i < cfg.runs; i = next++) {
            try {
                result.logs[i] = run_once(cfg, scn, i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n_workers = std::max(1, std::min(cfg.workers, cfg.runs));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    result.summary = aggregate(result.logs);
    if (write) {
        for (int i = 0; i < cfg.runs; ++i) {
            std::ostringstream name;
            name << "run_" << std::setw(3) << std::setfill('0') << i << ".csv";
            write_file(out_dir / name.str(), to_csv(result.logs[i].steps));
        }
        write_file(out_dir / "summary.csv", to_csv(result.summary.mean));
        json s = {{"runs", result.summary.runs},
                  {"steps", scn.steps},
                  {"scenario", scn.name},
                  {"mean_ospa_d_m", result.summary.ospa_d},
                  {"mean_ospa_phi_deg", result.summary.ospa_phi},
                  {"mean_ospa_snr_db", result.summary.ospa_snr},
                  {"mean_abs_nom_error", result.summary.nom_abs_error},
                  {"mean_abs_far_error", result.summary.far_abs_error}};
        write_file(out_dir / "summary.json", s.dump(2) + "\n");
        write_file(out_dir / "config.json", config_to_json(cfg) + "\n");
    }
    return result;
}

}  // namespace mpcbp
