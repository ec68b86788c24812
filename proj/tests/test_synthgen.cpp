#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mpcbp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <random>

#include <unistd.h>

using namespace mpcbp;

namespace {

// Asymptotic Kolmogorov tail probability of the one-sample KS statistic.
double ks_p_value(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(p, 0.0, 1.0);
}

double ks_statistic_exp1(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = 1.0 - std::exp(-x[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

Scenario one_track(double u, double far) {
    Scenario s;
    s.name = "unit";
    s.steps = 1;
    s.u_de = 4.14;
    TruthTrack t;
    t.id = 1;
    t.states = {{5.0, 0.7, u, 0.0, 0.0}};
    s.tracks = {t};
    s.far_profile = {far};
    return s;
}

Scenario clutter_only(double far) {
    Scenario s;
    s.name = "clutter";
    s.steps = 1;
    s.u_de = 4.14;
    s.far_profile = {far};
    return s;
}

double norm_sq(const std::vector<std::complex<double>>& v) {
    double s = 0.0;
    for (const auto& c : v) s += std::norm(c);
    return s;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mpcbp_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("reference scenario") {
    const auto s = reference_scenario(ScenarioVariant::Standard);
    CHECK(s.tracks.size() == 7);
    CHECK(s.steps == 364);
    CHECK(s.far_profile.size() == 364);
    CHECK(s.far_profile[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(s.far_profile[363] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_NOTHROW(s.validate());

    auto pairs_close = [&](int step, auto field, double tol) {
        int count = 0;
        for (std::size_t i = 0; i < s.tracks.size(); ++i)
            for (std::size_t j = i + 1; j < s.tracks.size(); ++j) {
                const auto& a = s.tracks[i];
                const auto& b = s.tracks[j];
                if (a.alive(step) && b.alive(step) && std::abs(field(a.at(step), b.at(step))) < tol) ++count;
            }
        return count;
    };
    CHECK(pairs_close(83, [](const auto& x, const auto& y) { return x.d - y.d; }, 1e-9) >= 1);
    CHECK(pairs_close(125, [](const auto& x, const auto& y) { return angle_diff(x.phi, y.phi); }, 1e-9) >= 1);

    // 3 dB per reflection on top of free-space loss.
    for (const auto& t : s.tracks)
        for (int n = t.birth_step; n <= t.death_step; n += 37) {
            const auto& x = t.at(n);
            REQUIRE(x.u * x.d * std::pow(2.0, 0.5 * t.reflections) ==
                    doctest::Approx(s.tracks[0].at(0).u * s.tracks[0].at(0).d *
                                    std::pow(2.0, 0.5 * s.tracks[0].reflections))
                        .epsilon(1e-9));
        }

    const auto f = reference_scenario(ScenarioVariant::FastFar);
    CHECK(f.tracks == s.tracks);
    CHECK(f.far_profile != s.far_profile);
    for (double m : f.far_profile) CHECK(m > 0.0);
}

TEST_CASE("builtin names") {
    for (const char* n : {"standard", "fast_far", "desk", "desk_fast_far", "radio_desk"}) {
        const auto s = builtin_scenario(n);
        REQUIRE(s.has_value());
        CHECK_NOTHROW(s->validate());
    }
    CHECK_FALSE(builtin_scenario("nope").has_value());
    CHECK(desk_scenario(ScenarioVariant::Standard).tracks.size() == 3);
    CHECK(radio_desk_scenario().tracks.size() == 2);
    CHECK(radio_desk_scenario().steps == 50);
}

TEST_CASE("scenario validation") {
    auto s = desk_scenario(ScenarioVariant::Standard);
    s.far_profile[10] = 0.0;
    CHECK_THROWS(s.validate());
    s = desk_scenario(ScenarioVariant::Standard);
    s.tracks[0].states.pop_back();
    CHECK_THROWS(s.validate());
}

TEST_CASE("scenario round trip is bit exact") {
    const auto s = reference_scenario(ScenarioVariant::FastFar);
    CHECK(scenario_from_json(scenario_to_json(s)) == s);
    const auto path = temp_file("scn.json");
    save_scenario(s, path);
    CHECK(load_scenario(path) == s);
    std::filesystem::remove(path);
    CHECK_THROWS(scenario_from_json("{\"schema_version\": 99}"));
    CHECK_THROWS(scenario_from_json("not json"));
}

TEST_CASE("synthesis without noise reproduces the truth") {
    auto geom = default_geometry();
    geom.beta_bw_sq *= 1e24;
    geom.f_c *= 1e12;
    HyperParams p;
    const auto s = one_track(1e3, 1e-300);
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const auto z = synth_measurements(s, 0, p, geom, rng);
        REQUIRE(z.size() == 1);
        CHECK(z[0].z_d == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(z[0].z_phi == doctest::Approx(0.7).epsilon(1e-12));
        // The amplitude keeps its Rician spread (scale^2 >= 1/2).
        CHECK(std::abs(z[0].z_u - 1e3) < 10.0 * std::sqrt(amp_scale_sq(1e3, geom.n_eff())));
    }
}

TEST_CASE("clutter count and amplitude distribution") {
    const auto geom = default_geometry();
    HyperParams p;
    const auto s = clutter_only(3.0);
    Rng rng(5);
    const int steps = 10000;
    long total = 0;
    std::vector<double> excess;
    for (int i = 0; i < steps; ++i) {
        const auto z = synth_measurements(s, 0, p, geom, rng);
        total += static_cast<long>(z.size());
        for (const auto& m : z) {
            REQUIRE(m.z_u > std::sqrt(p.u_de));
            REQUIRE(m.z_d >= 0.0);
            REQUIRE(m.z_d <= p.d_max);
            REQUIRE(m.z_phi >= -kPi);
            REQUIRE(m.z_phi < kPi);
            if (excess.size() < 10000) excess.push_back(m.z_u * m.z_u - p.u_de);
        }
    }
    CHECK(std::abs(static_cast<double>(total) / steps - 3.0) <= 0.06);
    REQUIRE(excess.size() == 10000);
    CHECK(ks_p_value(ks_statistic_exp1(excess), excess.size()) > 0.01);
}

TEST_CASE("detection thinning frequency") {
    const auto geom = default_geometry();
    HyperParams p;
    const double u = 2.1;
    const double pd = detection_prob(u, p.u_de, geom.n_eff(), LikelihoodMode::Exact);
    REQUIRE(pd > 0.2);
    REQUIRE(pd < 0.8);
    const auto s = one_track(u, 1e-300);
    Rng rng(6);
    const int n = 10000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const auto z = synth_measurements(s, 0, p, geom, rng);
        for (const auto& m : z) REQUIRE(m.z_u > std::sqrt(p.u_de));
        hits += static_cast<int>(z.size());
    }
    const double sd = std::sqrt(pd * (1.0 - pd) / n);
    CHECK(std::abs(static_cast<double>(hits) / n - pd) <= 3.0 * sd);
}

TEST_CASE("truncated Rician sampler") {
    Rng rng(7);
    for (double u : {0.0, 1.0, 3.0, 10.0})
        for (int i = 0; i < 2000; ++i) REQUIRE(sample_truncated_rician(u, 0.5, 4.14, rng) > std::sqrt(4.14));
    // Far below threshold the sampler still returns admissible values.
    for (int i = 0; i < 100; ++i) REQUIRE(sample_truncated_rician(0.0, 0.5, 400.0, rng) > 20.0);
}

TEST_CASE("radio synthesis") {
    const auto geom = default_geometry();
    Rng rng(8);
    SUBCASE("empty and noiseless") {
        const auto snap = synth_radio({}, geom, 0.0, rng);
        CHECK(snap.samples.size() == static_cast<std::size_t>(geom.n_samples * geom.num_elements()));
        CHECK(norm_sq(snap.samples) == 0.0);
    }
    SUBCASE("component SNR") {
        const KinematicState x{4.2, 0.6, 12.0, 0.0, 0.0};
        const auto snap = synth_radio({{x, 0.3}}, geom, 0.0, rng);
        CHECK(norm_sq(snap.samples) == doctest::Approx(144.0).epsilon(1e-10));
    }
    SUBCASE("opposite amplitudes cancel") {
        const KinematicState x{7.0, -1.1, 5.0, 0.0, 0.0};
        const auto snap = synth_radio_amplitudes({{x, {0.4, -0.2}}, {x, {-0.4, 0.2}}}, geom, 0.0, rng);
        CHECK(norm_sq(snap.samples) < 1e-28);
    }
    SUBCASE("linearity") {
        std::uniform_real_distribution<double> d(1.0, 15.0), ph(-kPi, kPi), a(-2.0, 2.0);
        for (int t = 0; t < 20; ++t) {
            const KinematicState x1{d(rng), ph(rng), 1.0, 0.0, 0.0}, x2{d(rng), ph(rng), 1.0, 0.0, 0.0};
            const std::complex<double> a1(a(rng), a(rng)), a2(a(rng), a(rng));
            const auto both = synth_radio_amplitudes({{x1, a1}, {x2, a2}}, geom, 0.0, rng);
            const auto s1 = steering_signal(x1.d, x1.phi, geom);
            const auto s2 = steering_signal(x2.d, x2.phi, geom);
            double err = 0.0, ref = 0.0;
            for (std::size_t i = 0; i < s1.size(); ++i) {
                err += std::norm(both.samples[i] - (a1 * s1[i] + a2 * s2[i]));
                ref += std::norm(a1 * s1[i] + a2 * s2[i]);
            }
            REQUIRE(std::sqrt(err / ref) < 1e-10);
        }
    }
    SUBCASE("noise variance") {
        const auto snap = synth_radio({}, geom, 2.5, rng);
        CHECK(snap.sigma_sq == 2.5);
        CHECK(norm_sq(snap.samples) / snap.samples.size() == doctest::Approx(2.5).epsilon(0.15));
    }
}

TEST_CASE("snapshot file round trip") {
    const auto geom = default_geometry();
    Rng rng(9);
    const auto snap = synth_radio({{{3.3, 0.2, 9.0, 0.0, 0.0}, 1.0}}, geom, 0.7, rng);
    const auto path = temp_file("snap.bin");
    save_snapshot(snap, path);
    const auto back = load_snapshot(path);
    CHECK(back.n_samples == snap.n_samples);
    CHECK(back.n_elements == snap.n_elements);
    CHECK(back.sigma_sq == snap.sigma_sq);
    CHECK(back.samples == snap.samples);
    std::filesystem::remove(path);
    CHECK_THROWS(load_snapshot(path));
}

TEST_CASE("snapshot estimator") {
    const auto geom = default_geometry();
    const double cell = geom.c * geom.t_s / 4.0;
    Rng rng(10);
    SUBCASE("noiseless single component on a grid point") {
        const KinematicState x{40.0 * cell, 30.0 * kPi / 180.0, 20.0, 0.0, 0.0};
        const auto snap = synth_radio({{x, 0.4}}, geom, 0.0, rng);
        const auto z = snapshot_estimate(snap, {}, geom, 15.0);
        REQUIRE(!z.empty());
        CHECK(std::abs(z[0].z_d - x.d) < geom.c * geom.t_s / 20.0);
        CHECK(std::abs(angle_diff(z[0].z_phi, x.phi)) < kPi / 180.0);
    }
    SUBCASE("noiseless single component off the grid") {
        const KinematicState x{5.123, -2.0, 20.0, 0.0, 0.0};
        const auto snap = synth_radio({{x, -1.2}}, geom, 0.0, rng);
        const auto z = snapshot_estimate(snap, {}, geom, 15.0);
        REQUIRE(!z.empty());
        CHECK(std::abs(z[0].z_d - x.d) < geom.c * geom.t_s / 20.0);
        CHECK(std::abs(angle_diff(z[0].z_phi, x.phi)) < kPi / 180.0);
    }
    SUBCASE("two separated components at high SNR") {
        const KinematicState a{3.0, 0.5, 25.0, 0.0, 0.0}, b{9.0, -2.2, 18.0, 0.0, 0.0};
        const auto snap = synth_radio({{a, 0.1}, {b, 2.0}}, geom, 1.0, rng);
        const auto z = snapshot_estimate(snap, {}, geom, 15.0);
        auto found = [&](const KinematicState& x) {
            return std::any_of(z.begin(), z.end(), [&](const Measurement& m) {
                return std::abs(m.z_d - x.d) < 0.05 && std::abs(angle_diff(m.z_phi, x.phi)) < 3.0 * kPi / 180.0;
            });
        };
        CHECK(found(a));
        CHECK(found(b));
        for (const auto& m : z) CHECK(m.z_u > std::sqrt(15.0));
    }
    SUBCASE("pure noise") {
        // Threshold for a 1% chance of a false alarm anywhere on the search grid.
        const double cells = 4.0 * geom.n_samples * 180.0;
        const double u_de = std::log(100.0 * cells);
        int spurious = 0;
        const int trials = 30;
        for (int i = 0; i < trials; ++i)
            spurious += static_cast<int>(snapshot_estimate(synth_radio({}, geom, 1.0, rng), {}, geom, u_de).size());
        CHECK(static_cast<double>(spurious) / trials <= 3.0);
    }
    SUBCASE("feedback priors are honored") {
        const KinematicState x{6.5, 1.3, 14.0, 0.0, 0.0};
        const auto snap = synth_radio({{x, 0.0}}, geom, 1.0, rng);
        const auto z = snapshot_estimate(snap, {{6.5, 1.3, 0.01, 0.01}}, geom, 15.0);
        REQUIRE(!z.empty());
        CHECK(std::abs(z[0].z_d - x.d) < 0.05);
    }
}
