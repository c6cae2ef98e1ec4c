#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "racelab/analysis.hpp"
#include "racelab/oracles.hpp"
#include "racelab/panel.hpp"
#include "racelab/session.hpp"

using namespace racelab;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

// A small panel with known structure: y = 0.7 a - 0.4 b + FE effects + noise.
struct ToyPanel {
    Dataset data;
    std::vector<std::vector<int>> fe_codes;       // aligned with fe dims below
    std::vector<std::vector<int>> cluster_codes;  // aligned with cluster dims
};

ToyPanel make_panel(std::uint64_t seed, std::size_t n, int n_fe_dims, int n_cluster_dims,
                    double noise_sd = 0.3) {
    oracle::DrawStream s{SeedSpec{seed, 0, 0, 0}, 0, 0};
    ToyPanel panel;
    std::vector<double> a(n), b(n), y(n);
    const int fe_levels[3] = {4, 3, 5};
    const int cl_levels[3] = {5, 4, 3};

    std::vector<std::vector<double>> fe_cols(static_cast<std::size_t>(n_fe_dims),
                                             std::vector<double>(n));
    std::vector<std::vector<double>> cl_cols(static_cast<std::size_t>(n_cluster_dims),
                                             std::vector<double>(n));
    panel.fe_codes.assign(std::size_t(n_fe_dims), std::vector<int>(n));
    panel.cluster_codes.assign(std::size_t(n_cluster_dims), std::vector<int>(n));

    for (std::size_t i = 0; i < n; ++i) {
        a[i] = s.z();
        b[i] = s.uniform(-1.0, 2.0);
        double effects = 0.0;
        for (int d = 0; d < n_fe_dims; ++d) {
            const int code = int(s.below(std::uint64_t(fe_levels[d])));
            panel.fe_codes[std::size_t(d)][i] = code;
            fe_cols[std::size_t(d)][i] = double(code);
            effects += 0.8 * double(code - 1);
        }
        for (int d = 0; d < n_cluster_dims; ++d) {
            const int code = int(s.below(std::uint64_t(cl_levels[d])));
            panel.cluster_codes[std::size_t(d)][i] = code;
            cl_cols[std::size_t(d)][i] = double(code);
        }
        y[i] = 0.7 * a[i] - 0.4 * b[i] + effects + noise_sd * s.z();
    }
    panel.data.add("y", y);
    panel.data.add("a", a);
    panel.data.add("b", b);
    for (int d = 0; d < n_fe_dims; ++d)
        panel.data.add("fe" + std::to_string(d), fe_cols[std::size_t(d)]);
    for (int d = 0; d < n_cluster_dims; ++d)
        panel.data.add("cl" + std::to_string(d), cl_cols[std::size_t(d)]);
    return panel;
}

PanelSpec spec_for(const ToyPanel& panel) {
    PanelSpec spec;
    spec.dependent = "y";
    spec.terms = {"a", "b"};
    for (const auto& name : panel.data.names) {
        if (name.rfind("fe", 0) == 0) spec.fixed_effects.push_back(name);
        if (name.rfind("cl", 0) == 0) spec.clusters.push_back(name);
    }
    return spec;
}

}  // namespace

TEST_CASE("standardize produces unit sample moments", "[panel]") {
    const std::vector<double> v = {1.0, 2.0, 4.0, 9.0};
    const auto z = standardize(v);
    double mean = 0.0, var = 0.0;
    for (double x : z) mean += x;
    mean /= double(z.size());
    for (double x : z) var += (x - mean) * (x - mean);
    var /= double(z.size() - 1);
    CHECK_THAT(mean, WithinAbs(0.0, 1e-15));
    CHECK_THAT(var, WithinAbs(1.0, 1e-12));

    CHECK_THROWS_WITH(standardize({2.0, 2.0, 2.0}), ContainsSubstring("constant"));
    CHECK_THROWS_AS(standardize({1.0}), std::domain_error);
}

TEST_CASE("interaction terms multiply their factors", "[panel]") {
    Dataset data;
    data.add("x", {1.0, 2.0, 3.0, 4.0});
    data.add("d", {0.0, 1.0, 0.0, 1.0});
    const std::vector<std::size_t> rows = {0, 1, 2, 3};

    const auto xd = detail::build_term("x*d", data, rows);
    CHECK(xd(0) == 0.0);
    CHECK(xd(1) == 2.0);
    CHECK(xd(3) == 4.0);

    // std: standardizes the factor on the sample before multiplying.
    const auto zx = detail::build_term("std:x", data, rows);
    const auto expect = standardize({1.0, 2.0, 3.0, 4.0});
    for (int i = 0; i < 4; ++i) CHECK_THAT(zx(i), WithinAbs(expect[std::size_t(i)], 1e-14));

    const auto zxd = detail::build_term("std:x*d", data, rows);
    for (int i = 0; i < 4; ++i)
        CHECK_THAT(zxd(i), WithinAbs(expect[std::size_t(i)] * data.column("d")[std::size_t(i)],
                                     1e-14));

    CHECK_THROWS_AS(detail::build_term("ghost", data, rows), std::domain_error);
}

TEST_CASE("within estimates match explicit dummy-variable regressions", "[panel]") {
    // Randomized small panels with one to three absorbed dimensions.
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        const int n_fe = 1 + int(trial % 3);
        const std::size_t n = 60 + 10 * (trial % 5);
        const ToyPanel panel = make_panel(1000 + trial, n, n_fe, 0);
        PanelSpec spec = spec_for(panel);

        const FitResult fit = fit_fe_ols(spec, panel.data);

        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
        for (std::size_t i = 0; i < n; ++i) {
            y(Eigen::Index(i)) = panel.data.column("y")[i];
            X(Eigen::Index(i), 0) = panel.data.column("a")[i];
            X(Eigen::Index(i), 1) = panel.data.column("b")[i];
        }
        const auto dummy = oracle::dummy_ols(y, X, panel.fe_codes);

        INFO("trial " << trial << " n=" << n << " fe dims=" << n_fe);
        REQUIRE(fit.coef.size() == 2);
        CHECK_THAT(fit.coef(0), WithinAbs(dummy.coef(0), 1e-8));
        CHECK_THAT(fit.coef(1), WithinAbs(dummy.coef(1), 1e-8));
        for (Eigen::Index i = 0; i < fit.residuals.size(); ++i)
            CHECK_THAT(fit.residuals(i), WithinAbs(dummy.residuals(i), 1e-8));

        // Slopes land near the truth; the point here is agreement, but a
        // grossly wrong pair would make agreement meaningless.
        CHECK_THAT(fit.coef(0), WithinAbs(0.7, 0.5));
        CHECK_THAT(fit.coef(1), WithinAbs(-0.4, 0.5));
    }
}

TEST_CASE("multiway clustered covariances match the brute-force assembly", "[panel]") {
    for (std::uint64_t trial = 0; trial < 8; ++trial) {
        const int n_cl = 1 + int(trial % 3);
        const std::size_t n = 80 + 15 * (trial % 3);
        const ToyPanel panel = make_panel(2000 + trial, n, 1, n_cl);
        PanelSpec spec = spec_for(panel);

        const FitResult fit = fit_fe_ols(spec, panel.data);

        const auto oracle_v = oracle::cgm_vcov_bruteforce(fit.X_demeaned, fit.residuals,
                                                          panel.cluster_codes,
                                                          spec.finite_sample);
        INFO("trial " << trial << " n=" << n << " cluster dims=" << n_cl);
        for (Eigen::Index r = 0; r < fit.vcov.rows(); ++r)
            for (Eigen::Index c = 0; c < fit.vcov.cols(); ++c) {
                if (fit.vcov_repaired) break;  // raw assembly differs by design
                CHECK_THAT(fit.vcov(r, c), WithinAbs(oracle_v(r, c), 1e-10));
            }

        // df comes from the smallest cluster dimension.
        std::size_t g_min = fit.cluster_counts.front();
        for (std::size_t g : fit.cluster_counts) g_min = std::min(g_min, g);
        CHECK(fit.df_denom == double(g_min) - 1.0);
    }
}

TEST_CASE("each observation its own cluster degenerates to HC0", "[panel]") {
    const std::size_t n = 50;
    ToyPanel panel = make_panel(3000, n, 1, 0);
    std::vector<double> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = double(i);
    panel.data.add("obs_id", ids);

    PanelSpec spec = spec_for(panel);
    spec.clusters = {"obs_id"};
    spec.finite_sample = false;  // factors off: exact algebraic identity
    const FitResult fit = fit_fe_ols(spec, panel.data);

    const Eigen::MatrixXd& X = fit.X_demeaned;
    const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd xi = X.row(i).transpose() * fit.residuals(i);
        meat += xi * xi.transpose();
    }
    const Eigen::MatrixXd hc0 = bread * meat * bread;
    for (Eigen::Index r = 0; r < hc0.rows(); ++r)
        for (Eigen::Index c = 0; c < hc0.cols(); ++c)
            CHECK_THAT(fit.vcov(r, c), WithinAbs(hc0(r, c), 1e-12));
}

TEST_CASE("degenerate designs are rejected by name", "[panel]") {
    ToyPanel panel = make_panel(4000, 40, 1, 1);

    SECTION("duplicate cluster dimensions") {
        PanelSpec spec = spec_for(panel);
        spec.clusters = {"cl0", "cl0"};
        CHECK_THROWS_WITH(fit_fe_ols(spec, panel.data), ContainsSubstring("duplicate"));
    }
    SECTION("a single cluster cannot identify a covariance") {
        std::vector<double> one(40, 1.0);
        panel.data.add("all_same", one);
        PanelSpec spec = spec_for(panel);
        spec.clusters = {"all_same"};
        CHECK_THROWS_WITH(fit_fe_ols(spec, panel.data), ContainsSubstring("cluster"));
    }
    SECTION("collinear regressors are dropped-and-named") {
        std::vector<double> twice = panel.data.column("a");
        for (double& v : twice) v *= 2.0;
        panel.data.add("a_twice", twice);
        PanelSpec spec = spec_for(panel);
        spec.terms = {"a", "a_twice", "b"};
        // The rank check names the culprit column the pivot dropped.
        CHECK_THROWS_WITH(fit_fe_ols(spec, panel.data),
                          ContainsSubstring("collinear") && ContainsSubstring("(a"));
    }
    SECTION("an empty sample") {
        PanelSpec spec = spec_for(panel);
        spec.filters = {{"a", {1234.5}}};
        CHECK_THROWS_AS(fit_fe_ols(spec, panel.data), std::domain_error);
    }
    SECTION("more terms than observations") {
        Dataset tiny;
        tiny.add("y", {1.0, 2.0});
        tiny.add("x1", {0.3, 0.9});
        tiny.add("x2", {1.3, 0.4});
        PanelSpec spec;
        spec.dependent = "y";
        spec.terms = {"x1", "x2"};
        CHECK_THROWS_AS(fit_fe_ols(spec, tiny), std::domain_error);
    }
}

TEST_CASE("within R-squared measures the demeaned fit", "[panel]") {
    const ToyPanel panel = make_panel(5000, 120, 2, 0, 0.1);
    const FitResult fit = fit_fe_ols(spec_for(panel), panel.data);

    double tss = 0.0, rss = 0.0;
    Eigen::VectorXd y_dm(fit.residuals.size());
    // Rebuild the demeaned outcome from fitted values plus residuals.
    const Eigen::VectorXd fitted = fit.X_demeaned * fit.coef;
    for (Eigen::Index i = 0; i < fit.residuals.size(); ++i)
        y_dm(i) = fitted(i) + fit.residuals(i);
    const double mean = y_dm.mean();
    for (Eigen::Index i = 0; i < y_dm.size(); ++i) {
        tss += (y_dm(i) - mean) * (y_dm(i) - mean);
        rss += fit.residuals(i) * fit.residuals(i);
    }
    CHECK_THAT(fit.r_squared, WithinAbs(1.0 - rss / tss, 1e-12));
    CHECK(fit.r_squared > 0.9);  // low noise, strong signal
}

TEST_CASE("filters select rows by exact value membership", "[panel]") {
    Dataset data;
    data.add("y", {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    data.add("x", {1.0, 0.0, 1.0, 0.0, 1.0, 0.0});
    data.add("phase", {0.0, 0.0, 1.0, 1.0, 2.0, 2.0});

    const auto rows =
        detail::filtered_rows(data, {{"phase", {0.0, 2.0}}, {"x", {1.0}}});
    CHECK(rows == std::vector<std::size_t>{0, 4});
}

TEST_CASE("Wald tests agree with a frozen reference and reject nonsense", "[panel]") {
    const ToyPanel panel = make_panel(6000, 90, 1, 1);
    const FitResult fit = fit_fe_ols(spec_for(panel), panel.data);

    SECTION("a joint zero restriction on both slopes is rejected loudly") {
        Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2, 2);
        Eigen::VectorXd target = Eigen::VectorXd::Zero(2);
        const auto ft = f_test(fit, R, target);
        CHECK(ft.q == 2);
        CHECK(ft.df_denom == fit.df_denom);
        CHECK(ft.stat > 10.0);
        CHECK(ft.p_value < 0.01);
    }
    SECTION("vacuous zero rows drop out") {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2, 2);
        R(0, 0) = 1.0;
        Eigen::VectorXd target = Eigen::VectorXd::Zero(2);
        const auto ft = f_test(fit, R, target);
        CHECK(ft.q == 1);
    }
    SECTION("an all-zero restriction with a nonzero target is infeasible") {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(1, 2);
        Eigen::VectorXd target(1);
        target(0) = 1.0;
        CHECK_THROWS_AS(f_test(fit, R, target), std::domain_error);
    }
    SECTION("no restrictions at all is the trivial test") {
        const auto ft = f_test(fit, Eigen::MatrixXd::Zero(0, 2), Eigen::VectorXd::Zero(0));
        CHECK(ft.stat == 0.0);
        CHECK(ft.p_value == 1.0);
    }
    SECTION("duplicated restrictions make the variance singular") {
        Eigen::MatrixXd R(2, 2);
        R << 1.0, 0.0, 1.0, 0.0;
        CHECK_THROWS_AS(f_test(fit, R, Eigen::VectorXd::Zero(2)), std::domain_error);
    }
    SECTION("width mismatches are rejected") {
        CHECK_THROWS_AS(f_test(fit, Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(1)),
                        std::domain_error);
        CHECK_THROWS_AS(f_test(fit, Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(1)),
                        std::domain_error);
    }
    SECTION("named combinations resolve terms") {
        const auto ft = f_test_combo(fit, {{"a", 1.0}}, 0.7);
        CHECK(ft.q == 1);
        CHECK(ft.p_value > 0.001);  // truth is 0.7, so no strong rejection
        CHECK_THROWS_WITH(f_test_combo(fit, {{"ghost", 1.0}}, 0.0),
                          ContainsSubstring("ghost"));
    }
}

TEST_CASE("F distribution tail matches a frozen textbook value", "[panel]") {
    // F(1, 15) upper tail at 4.543 is 0.05 — a classical table entry; the
    // implementation routes through the same boost machinery as the fits.
    const boost::math::fisher_f_distribution<double> f(1.0, 15.0);
    CHECK_THAT(boost::math::cdf(boost::math::complement(f, 4.543)),
               WithinAbs(0.0500017, 1e-6));
}

TEST_CASE("summaries carry coefficients, stars, and the footer", "[panel]") {
    const ToyPanel panel = make_panel(7000, 150, 1, 1, 0.05);
    PanelSpec spec = spec_for(panel);
    spec.label = "toy regression";
    const FitResult fit = fit_fe_ols(spec, panel.data);
    const std::string text = summarize(fit);

    CHECK_THAT(text, ContainsSubstring("toy regression"));
    CHECK_THAT(text, ContainsSubstring("a"));
    CHECK_THAT(text, ContainsSubstring("***"));   // tiny noise: decisive slopes
    CHECK_THAT(text, ContainsSubstring("("));     // t-stats in parentheses
    CHECK_THAT(text, ContainsSubstring("Observations"));
    CHECK_THAT(text, ContainsSubstring("150"));
    CHECK_THAT(text, ContainsSubstring("fe0"));
    CHECK_THAT(text, ContainsSubstring("cl0"));
}

TEST_CASE("session records flatten into the analysis table", "[panel]") {
    SessionConfig cfg;
    cfg.n_groups = 2;
    cfg.tier_labels = {"high-cost", "low-cost"};
    cfg.policies = {policy_from_string("fixed-fraction:0.6")};
    cfg.master_seed = 13;
    const auto records = run_session(cfg);
    const Dataset data = dataset_from_records(records);

    REQUIRE(data.n_rows() == records.size());
    for (const char* col :
         {"session_id", "group_id", "participant_id", "round_index", "training", "endowment",
          "bump_mean", "bump_symmetric", "bump_random", "realized_bump", "tier_code", "invest",
          "invest_frac", "arrival_rate", "realized_time", "won", "won_previous", "payoff",
          "clamped", "bump", "design_code"})
        CHECK(data.has(col));

    for (std::size_t i = 0; i < data.n_rows(); ++i) {
        const auto& r = records[i];
        CHECK(data.column("invest")[i] == r.invest);
        CHECK(data.column("tier_code")[i] == (r.tier == "high-cost" ? 0.0 : 2.0));
        CHECK(data.column("bump")[i] == (r.bump_mean > 0.0 ? 1.0 : 0.0));

        const double dc = data.column("design_code")[i];
        if (r.bump_mean == 0.0)
            CHECK(dc == 0.0);
        else if (r.bump_symmetric && !r.bump_random)
            CHECK(dc == 1.0);
        else if (!r.bump_symmetric && !r.bump_random)
            CHECK(dc == 2.0);
        else if (r.bump_symmetric && r.bump_random)
            CHECK(dc == 3.0);
        else
            CHECK(dc == 4.0);
    }
}

TEST_CASE("analysis batteries parse from JSON and run end to end", "[panel]") {
    SECTION("named batteries exist and unknown names fail") {
        CHECK(named_battery("delay-dummy").specs.size() == 9);
        CHECK(named_battery("design-interactions").specs.size() == 1);
        CHECK_THROWS_AS(named_battery("everything"), config_error);
    }
    SECTION("JSON round trip") {
        const nlohmann::json j = {
            {"name", "custom"},
            {"specs",
             {{{"label", "mine"},
               {"dependent", "invest_frac"},
               {"terms", {"bump", "std:bump_mean"}},
               {"fixed_effects", {"participant_id"}},
               {"clusters", {"group_id"}},
               {"filters", {{{"column", "training"}, {"any_of", {0.0}}}}},
               {"f_tests",
                {{{"label", "slope"},
                  {"combo", {{"std:bump_mean", 1.0}}},
                  {"target", 0.0}}}}}}},
        };
        const Battery battery = battery_from_json(j);
        CHECK(battery.name == "custom");
        REQUIRE(battery.specs.size() == 1);
        const AnalysisSpec& spec = battery.specs.front();
        CHECK(spec.panel.label == "mine");
        CHECK(spec.panel.terms == std::vector<std::string>{"bump", "std:bump_mean"});
        REQUIRE(spec.panel.filters.size() == 1);
        CHECK(spec.panel.filters.front().column == "training");
        REQUIRE(spec.f_tests.size() == 1);
        CHECK(spec.f_tests.front().label == "slope");
    }
    SECTION("a tiny session survives the full battery") {
        SessionConfig cfg;
        cfg.n_groups = 6;
        cfg.tier_labels = {"medium-cost"};
        cfg.policies = {policy_from_string("uniform-random")};
        cfg.master_seed = 99;
        const Dataset data = dataset_from_records(run_session(cfg));
        const auto results = run_battery(named_battery("delay-dummy"), data);
        REQUIRE(results.size() == 9);
        for (const auto& res : results) {
            CHECK(res.fit.n_obs > 0);
            CHECK(std::isfinite(res.fit.coef(0)));
        }
        std::string text;
        for (const auto& res : results) text += render_analysis(res);
        CHECK_THAT(text, ContainsSubstring("Overall"));
    }
}
