// racelab: probabilities, equilibria, simulated trading sessions, and panel
// regressions for latency races under speed-bump designs.
//
// Subcommands: probe, solve, simulate, session, analyze, verify.
// Exit codes: 0 success, 1 usage/config, 2 domain error, 3 verification
// failure, 4 I/O. Flags override values from --config (JSON); every run that
// writes files also writes a manifest.json recording the resolved
// configuration and a content hash of each output, so identical inputs yield
// byte-identical output trees.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "racelab/analysis.hpp"
#include "racelab/config.hpp"
#include "racelab/equilibrium.hpp"
#include "racelab/errors.hpp"
#include "racelab/hash.hpp"
#include "racelab/market.hpp"
#include "racelab/oracles.hpp"
#include "racelab/panel.hpp"
#include "racelab/race_prob.hpp"
#include "racelab/race_sim.hpp"
#include "racelab/session.hpp"
#include "racelab/version.hpp"

namespace {

using namespace racelab;
using nlohmann::json;

struct verify_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    return load_json_file(path);
}

// Fill `value` from the config file when the flag was not given on the
// command line: flags always win.
template <typename T>
void merge(const CLI::App& cmd, const std::string& flag, const json& cfg,
           const std::string& key, T& value) {
    if (cmd.count(flag) > 0 || !cfg.contains(key)) return;
    try {
        value = cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config key '" + key + "': " + e.what());
    }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out.good()) throw io_error("failed writing '" + path.string() + "'");
}

// Writes the named outputs plus a manifest.json into `dir`. The manifest
// carries the resolved configuration (paths excluded, so the tree's bytes do
// not depend on where it lands) and a content hash per file.
void emit_outputs(const std::string& dir, const std::string& subcommand, json config,
                  const std::vector<std::pair<std::string, std::string>>& outputs) {
    if (dir.empty()) {
        for (const auto& [name, content] : outputs) std::cout << content;
        return;
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());

    json manifest;
    manifest["tool"] = "racelab";
    manifest["version"] = kVersion;
    manifest["subcommand"] = subcommand;
    manifest["config"] = std::move(config);
    json files = json::array();
    for (const auto& [name, content] : outputs) {
        write_file(std::filesystem::path(dir) / name, content);
        files.push_back({{"file", name},
                         {"bytes", content.size()},
                         {"fnv1a64", hex64(fnv1a64(content))}});
    }
    manifest["outputs"] = std::move(files);
    write_file(std::filesystem::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

// --- probe ------------------------------------------------------------------

struct ProbeArgs {
    std::string design = "none";
    double delta = 0.0;
    std::vector<double> rates;  // own, rivals..., market maker last
    std::string tier;
    std::vector<double> invests;
    double endowment = 10.0;
    double mm_rate = 0.2;
    std::string engine = "both";
    std::uint64_t mc_reps = 0;
    std::uint64_t seed = 0;
    std::string config_path;
};

void run_probe(const CLI::App& cmd, ProbeArgs& a) {
    const json cfg = load_config(a.config_path);
    merge(cmd, "--design", cfg, "design", a.design);
    merge(cmd, "--delta", cfg, "delta", a.delta);
    merge(cmd, "--rates", cfg, "rates", a.rates);
    merge(cmd, "--tier", cfg, "tier", a.tier);
    merge(cmd, "--invests", cfg, "invests", a.invests);
    merge(cmd, "--endowment", cfg, "endowment", a.endowment);
    merge(cmd, "--mm-rate", cfg, "mm_rate", a.mm_rate);
    merge(cmd, "--engine", cfg, "engine", a.engine);
    merge(cmd, "--mc", cfg, "mc", a.mc_reps);
    merge(cmd, "--seed", cfg, "seed", a.seed);

    const BumpDesign design = design_from_string(a.design);
    if (design == BumpDesign::none && a.delta != 0.0)
        throw config_error("design 'none' takes no delay; drop --delta or pick a bump design");
    if (design != BumpDesign::none && a.delta <= 0.0)
        throw config_error("design '" + a.design + "' needs --delta > 0");

    RaceParams p;
    std::vector<double> trader_rates;
    if (!a.rates.empty()) {
        if (!a.tier.empty() || !a.invests.empty())
            throw config_error("give either --rates or --tier with --invests, not both");
        if (a.rates.size() < 2)
            throw config_error("--rates needs at least two entries (own trader, market maker)");
        trader_rates.assign(a.rates.begin(), a.rates.end() - 1);
        p.mm_rate = a.rates.back();
    } else if (!a.tier.empty()) {
        if (a.invests.empty()) throw config_error("--tier needs --invests");
        const TechnologyTier tier = canonical_tier(a.tier);
        for (double inv : a.invests)
            trader_rates.push_back(arrival_rate(tier, inv, a.endowment));
        p.mm_rate = a.mm_rate;
    } else {
        throw config_error("provide --rates or --tier with --invests");
    }
    p.own_rate = trader_rates.front();
    p.rival_rates.assign(trader_rates.begin() + 1, trader_rates.end());
    p.bump = bump_of(design, a.delta);
    validate(p);

    std::cout << "design " << to_string(design) << "  delta " << fmt(a.delta) << "\n";
    std::cout << "rates  own " << fmt(p.own_rate) << "  rivals";
    if (p.rival_rates.empty()) std::cout << " (none)";
    for (double r : p.rival_rates) std::cout << " " << fmt(r);
    std::cout << "  market-maker " << fmt(p.mm_rate) << "\n";

    const bool want_paper =
        a.engine == "paper" || a.engine == "paper-formula" || a.engine == "both";
    const bool want_exact = a.engine == "exact" || a.engine == "both";
    if (!want_paper && !want_exact)
        throw config_error("--engine must be paper, exact, or both");

    std::optional<double> paper_val, exact_val;
    if (want_paper) {
        try {
            paper_val = exec_prob(p, design, a.delta, ProbEngine::paper_formula);
            std::cout << "paper  " << fmt(*paper_val) << "\n";
        } catch (const unsupported_design& e) {
            if (a.engine != "both") throw;
            std::cout << "paper  unavailable (" << e.what() << ")\n";
        }
    }
    if (want_exact) {
        exact_val = exec_prob(p, design, a.delta, ProbEngine::exact);
        std::cout << "exact  " << fmt(*exact_val) << "\n";
    }
    if (paper_val && exact_val && std::abs(*paper_val - *exact_val) > 1e-9) {
        std::cout << "note   paper formula and exact value differ by "
                  << fmt(std::abs(*paper_val - *exact_val)) << "\n";
    }
    if (a.mc_reps > 0) {
        const auto est = monte_carlo_race(trader_rates, p.mm_rate, p.bump, a.mc_reps,
                                          SeedSpec{a.seed, 0, 0, 0});
        std::cout << "monte-carlo n=" << a.mc_reps << "  " << fmt(est.prob.front()) << "  (se "
                  << fmt(est.se.front()) << ")\n";
    }
}

// --- solve ------------------------------------------------------------------

struct SolveArgs {
    std::string grid;
    std::string design = "sym-det";
    double delta = 0.0;
    double endowment = 10.0;
    std::string tier = "medium-cost";
    std::string engine = "exact";
    int n_traders = 2;
    double prize = 100.0;
    double mm_rate = 0.2;
    std::string out_dir;
    std::string format = "csv";
    std::string config_path;
};

void run_solve(const CLI::App& cmd, SolveArgs& a) {
    const json cfg = load_config(a.config_path);
    merge(cmd, "--grid", cfg, "grid", a.grid);
    merge(cmd, "--design", cfg, "design", a.design);
    merge(cmd, "--delta", cfg, "delta", a.delta);
    merge(cmd, "--endowment", cfg, "endowment", a.endowment);
    merge(cmd, "--tier", cfg, "tier", a.tier);
    merge(cmd, "--engine", cfg, "engine", a.engine);
    merge(cmd, "--traders", cfg, "traders", a.n_traders);
    merge(cmd, "--prize", cfg, "prize", a.prize);
    merge(cmd, "--mm-rate", cfg, "mm_rate", a.mm_rate);
    merge(cmd, "--format", cfg, "format", a.format);

    const TechnologyTier tier = canonical_tier(a.tier);
    const ProbEngine engine = engine_from_string(a.engine);
    std::vector<StaticsCell> cells;
    if (a.grid == "canonical") {
        cells = canonical_grid(tier);
    } else if (a.grid.empty()) {
        StaticsCell cell;
        cell.design = design_from_string(a.design);
        cell.delta = a.delta;
        cell.endowment = a.endowment;
        cell.tier = tier;
        cells.push_back(cell);
    } else {
        throw config_error("--grid accepts only 'canonical'");
    }

    MarketConfig market;
    market.prize = a.prize;
    market.mm_rate = a.mm_rate;
    market.n_traders = a.n_traders;
    validate(market);

    const auto rows = comparative_statics(cells, market, engine);

    std::string csv =
        "design,delta,endowment,tier,engine,invest,invest_frac,exec_prob,profit,converged,"
        "iterations\n";
    json jrows = json::array();
    for (const auto& row : rows) {
        if (!row.result) {
            std::cerr << "warning: cell " << to_string(row.cell.design) << " delta "
                      << fmt(row.cell.delta) << " failed: " << row.error << "\n";
            continue;
        }
        const EquilibriumResult& r = *row.result;
        const double invest = r.invests.front();
        csv += to_string(r.design);
        csv += "," + fmt(r.delta) + "," + fmt(r.endowment) + "," + r.tier_label + "," +
               to_string(r.engine) + "," + fmt(invest) + "," + fmt(invest / r.endowment) + "," +
               fmt(r.exec_probs.front()) + "," + fmt(r.expected_profits.front()) + "," +
               (r.converged ? "1" : "0") + "," + std::to_string(r.iterations) + "\n";
        jrows.push_back({{"design", to_string(r.design)},
                         {"delta", r.delta},
                         {"endowment", r.endowment},
                         {"tier", r.tier_label},
                         {"engine", to_string(r.engine)},
                         {"invest", invest},
                         {"invest_frac", invest / r.endowment},
                         {"exec_prob", r.exec_probs.front()},
                         {"profit", r.expected_profits.front()},
                         {"converged", r.converged},
                         {"iterations", r.iterations}});
    }

    json resolved{{"grid", a.grid},         {"design", a.design},   {"delta", a.delta},
                  {"endowment", a.endowment}, {"tier", a.tier},     {"engine", a.engine},
                  {"traders", a.n_traders},  {"prize", a.prize},    {"mm_rate", a.mm_rate},
                  {"format", a.format}};
    if (a.format == "json") {
        emit_outputs(a.out_dir, "solve", resolved, {{"solve.json", jrows.dump(2) + "\n"}});
    } else if (a.format == "csv") {
        emit_outputs(a.out_dir, "solve", resolved, {{"solve.csv", csv}});
    } else {
        throw config_error("--format must be csv or json");
    }
}

// --- simulate ---------------------------------------------------------------

struct SimArgs {
    std::string design = "none";
    double delta = 0.0;
    std::string tier = "medium-cost";
    std::vector<double> invests;
    double endowment = 10.0;
    double prize = 100.0;
    double mm_rate = 0.2;
    std::uint64_t reps = 10000;
    std::uint64_t seed = 0;
    int round_index = 0;
    std::string out_dir;
    std::string format = "csv";
    std::string config_path;
};

void run_simulate(const CLI::App& cmd, SimArgs& a) {
    const json cfg = load_config(a.config_path);
    merge(cmd, "--design", cfg, "design", a.design);
    merge(cmd, "--delta", cfg, "delta", a.delta);
    merge(cmd, "--tier", cfg, "tier", a.tier);
    merge(cmd, "--invests", cfg, "invests", a.invests);
    merge(cmd, "--endowment", cfg, "endowment", a.endowment);
    merge(cmd, "--prize", cfg, "prize", a.prize);
    merge(cmd, "--mm-rate", cfg, "mm_rate", a.mm_rate);
    merge(cmd, "--reps", cfg, "reps", a.reps);
    merge(cmd, "--seed", cfg, "seed", a.seed);
    merge(cmd, "--round", cfg, "round", a.round_index);
    merge(cmd, "--format", cfg, "format", a.format);

    if (a.invests.empty()) throw config_error("--invests is required");
    if (a.reps == 0) throw config_error("--reps must be positive");
    const TechnologyTier tier = canonical_tier(a.tier);
    const BumpDesign design = design_from_string(a.design);

    RoundSpec round;
    round.index = a.round_index;
    round.bump = bump_of(design, a.delta);
    round.endowment = a.endowment;

    MarketConfig market;
    market.prize = a.prize;
    market.mm_rate = a.mm_rate;
    market.n_traders = int(a.invests.size());
    validate(market);

    const std::size_t n = a.invests.size();
    std::vector<double> rates;
    for (double inv : a.invests) rates.push_back(arrival_rate(tier, inv, a.endowment));

    std::vector<std::uint64_t> wins(n + 1, 0);
    std::vector<double> payoff_sum(n, 0.0);
    std::uint64_t ties = 0;
    for (std::uint64_t rep = 0; rep < a.reps; ++rep) {
        const SeedSpec rep_seed{a.seed, std::uint32_t(rep), 0, std::uint32_t(a.round_index)};
        const RaceOutcome out = simulate_round(round, a.invests, tier, market, rep_seed);
        wins[std::size_t(out.winner)] += 1;
        ties += out.tie ? 1 : 0;
        for (std::size_t i = 0; i < n; ++i) payoff_sum[i] += out.payoffs[i];
    }

    // Exact win probabilities for comparison, one race per focal participant.
    std::vector<double> exact(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        RaceParams p;
        p.own_rate = rates[i];
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) p.rival_rates.push_back(rates[j]);
        p.mm_rate = a.mm_rate;
        p.bump = round.bump;
        exact[i] = exec_prob(p, design, a.delta, ProbEngine::exact);
        exact[n] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) exact[n] -= exact[i];

    std::string csv = "participant,invest,rate,win_freq,win_se,exact_prob,mean_payoff\n";
    json jrows = json::array();
    for (std::size_t i = 0; i <= n; ++i) {
        const double freq = double(wins[i]) / double(a.reps);
        const double se = std::sqrt(std::max(0.0, freq * (1.0 - freq) / double(a.reps)));
        const std::string who = i < n ? std::to_string(i) : std::string("mm");
        const std::string invest = i < n ? fmt(a.invests[i]) : std::string("");
        const std::string rate = fmt(i < n ? rates[i] : a.mm_rate);
        const std::string payoff = i < n ? fmt(payoff_sum[i] / double(a.reps)) : std::string("");
        csv += who + "," + invest + "," + rate + "," + fmt(freq) + "," + fmt(se) + "," +
               fmt(exact[i]) + "," + payoff + "\n";
        json row{{"participant", who}, {"rate", i < n ? rates[i] : a.mm_rate},
                 {"win_freq", freq},   {"win_se", se},
                 {"exact_prob", exact[i]}};
        if (i < n) {
            row["invest"] = a.invests[i];
            row["mean_payoff"] = payoff_sum[i] / double(a.reps);
        }
        jrows.push_back(std::move(row));
    }
    json jout{{"reps", a.reps}, {"ties", ties}, {"participants", std::move(jrows)}};

    json resolved{{"design", a.design},       {"delta", a.delta},   {"tier", a.tier},
                  {"invests", a.invests},     {"endowment", a.endowment},
                  {"prize", a.prize},         {"mm_rate", a.mm_rate},
                  {"reps", a.reps},           {"seed", a.seed},
                  {"round", a.round_index},   {"format", a.format}};
    if (a.format == "json") {
        emit_outputs(a.out_dir, "simulate", resolved, {{"simulate.json", jout.dump(2) + "\n"}});
    } else if (a.format == "csv") {
        emit_outputs(a.out_dir, "simulate", resolved, {{"simulate.csv", csv}});
    } else {
        throw config_error("--format must be csv or json");
    }
}

// --- session ------------------------------------------------------------------

struct SessionArgs {
    int groups = 16;
    int traders = 3;
    std::vector<std::string> policies;
    std::vector<std::string> tiers;
    double prize = 100.0;
    double mm_rate = 0.2;
    std::uint64_t seed = 0;
    int session_id = 0;
    std::string out_dir;
    std::string config_path;
};

void run_session_cmd(const CLI::App& cmd, SessionArgs& a) {
    const json cfg = load_config(a.config_path);
    merge(cmd, "--groups", cfg, "groups", a.groups);
    merge(cmd, "--traders", cfg, "traders", a.traders);
    merge(cmd, "--policy", cfg, "policy", a.policies);
    merge(cmd, "--tiers", cfg, "tiers", a.tiers);
    merge(cmd, "--prize", cfg, "prize", a.prize);
    merge(cmd, "--mm-rate", cfg, "mm_rate", a.mm_rate);
    merge(cmd, "--seed", cfg, "seed", a.seed);
    merge(cmd, "--session-id", cfg, "session_id", a.session_id);

    SessionConfig sc;
    sc.n_groups = a.groups;
    sc.market.prize = a.prize;
    sc.market.mm_rate = a.mm_rate;
    sc.market.n_traders = a.traders;
    sc.master_seed = a.seed;
    sc.session_id = a.session_id;
    for (const std::string& s : a.policies) sc.policies.push_back(policy_from_string(s));
    sc.tier_labels = a.tiers;

    const auto records = run_session(sc);
    const std::string csv = csv_string(records);

    json manifest_cfg = session_manifest(sc, records);
    emit_outputs(a.out_dir, "session", std::move(manifest_cfg), {{"session.csv", csv}});
}

// --- analyze ------------------------------------------------------------------

struct AnalyzeArgs {
    std::string input;
    std::string battery = "design-interactions";
    std::string spec_path;
    std::string out_dir;
    std::string format = "csv";
    std::string config_path;
};

void run_analyze(const CLI::App& cmd, AnalyzeArgs& a) {
    const json cfg = load_config(a.config_path);
    merge(cmd, "--input", cfg, "input", a.input);
    merge(cmd, "--battery", cfg, "battery", a.battery);
    merge(cmd, "--spec", cfg, "spec", a.spec_path);
    merge(cmd, "--format", cfg, "format", a.format);
    if (a.input.empty()) throw config_error("--input is required");
    if (a.format != "csv" && a.format != "json")
        throw config_error("--format must be csv or json");

    const auto records = import_csv_file(a.input);
    const Dataset data = dataset_from_records(records);
    const Battery battery =
        a.spec_path.empty() ? named_battery(a.battery) : battery_from_json(load_json_file(a.spec_path));
    const auto results = run_battery(battery, data);

    std::string text;
    json jresults = json::array();
    std::string csv = "label,term,coef,se,t,p\n";
    for (const AnalysisResult& res : results) {
        text += render_analysis(res) + "\n";
        jresults.push_back(result_to_json(res));
        for (std::size_t i = 0; i < res.fit.terms.size(); ++i) {
            csv += res.fit.label + "," + res.fit.terms[i] + "," +
                   fmt(res.fit.coef[Eigen::Index(i)]) + "," + fmt(res.fit.se[Eigen::Index(i)]) +
                   "," + fmt(res.fit.t_stats[Eigen::Index(i)]) + "," +
                   fmt(res.fit.p_values[Eigen::Index(i)]) + "\n";
        }
    }
    std::cout << text;

    if (!a.out_dir.empty()) {
        json resolved{{"battery", battery.name},
                      {"format", a.format},
                      {"input_fnv1a64", hex64(fnv1a64(csv_string(records)))}};
        std::vector<std::pair<std::string, std::string>> outputs;
        outputs.emplace_back("analysis.txt", text);
        if (a.format == "json")
            outputs.emplace_back("analysis.json", jresults.dump(2) + "\n");
        else
            outputs.emplace_back("analysis.csv", csv);
        emit_outputs(a.out_dir, "analyze", std::move(resolved), outputs);
    }
}

// --- verify -------------------------------------------------------------------

struct CheckRunner {
    int failures = 0;
    int total = 0;

    template <typename Fn>
    void operator()(const std::string& name, Fn&& fn) {
        ++total;
        std::string detail;
        try {
            detail = fn();
        } catch (const std::exception& e) {
            detail = e.what();
        }
        if (detail.empty()) {
            std::cout << "ok   " << name << "\n";
        } else {
            std::cout << "FAIL " << name << ": " << detail << "\n";
            ++failures;
        }
    }
};

std::string check_tol(double err, double tol, const std::string& what) {
    if (err <= tol) return {};
    return what + " off by " + fmt(err) + " (tolerance " + fmt(tol) + ")";
}

// Same truncation the library applies when a variance estimate goes
// negative, for apples-to-apples oracle comparison.
Eigen::MatrixXd repair_psd(Eigen::MatrixXd v) {
    if (v.size() == 0 || v.diagonal().minCoeff() >= 0.0) return v;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
    v = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return ((v + v.transpose()) / 2.0).eval();
}

struct ToyPanel {
    Dataset data;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::vector<int>> fe_codes;
    std::vector<std::vector<int>> cluster_codes;
};

// Randomized panel with continuous regressors, additive level effects for
// each categorical dimension, and gaussian noise.
ToyPanel make_panel(oracle::DrawStream& rng, std::size_t n, std::size_t k, std::size_t n_fe,
                    std::size_t n_cluster) {
    ToyPanel p;
    p.x = Eigen::MatrixXd(Eigen::Index(n), Eigen::Index(k));
    p.y = Eigen::VectorXd::Zero(Eigen::Index(n));
    const double beta[3] = {0.7, -0.4, 0.2};
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = rng.z();
            p.x(Eigen::Index(i), Eigen::Index(j)) = v;
            col.push_back(v);
            p.y[Eigen::Index(i)] += beta[j] * v;
        }
        p.data.add("x" + std::to_string(j), std::move(col));
    }
    for (std::size_t d = 0; d < n_fe; ++d) {
        const int levels = 3 + int(rng.below(6));
        std::vector<double> effect;
        for (int lv = 0; lv < levels; ++lv) effect.push_back(0.8 * rng.z());
        std::vector<int> codes;
        std::vector<double> col;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = int(rng.below(std::uint64_t(levels)));
            codes.push_back(c);
            col.push_back(double(c));
            p.y[Eigen::Index(i)] += effect[std::size_t(c)];
        }
        p.fe_codes.push_back(std::move(codes));
        p.data.add("f" + std::to_string(d), std::move(col));
    }
    for (std::size_t d = 0; d < n_cluster; ++d) {
        const int groups = 4 + int(rng.below(5));
        std::vector<double> effect;
        for (int g = 0; g < groups; ++g) effect.push_back(0.5 * rng.z());
        std::vector<int> codes;
        std::vector<double> col;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = int(rng.below(std::uint64_t(groups)));
            codes.push_back(c);
            col.push_back(double(c));
            p.y[Eigen::Index(i)] += effect[std::size_t(c)];
        }
        p.cluster_codes.push_back(std::move(codes));
        p.data.add("c" + std::to_string(d), std::move(col));
    }
    std::vector<double> ycol;
    for (std::size_t i = 0; i < n; ++i) {
        p.y[Eigen::Index(i)] += 0.3 * rng.z();
        ycol.push_back(p.y[Eigen::Index(i)]);
    }
    p.data.add("y", std::move(ycol));
    return p;
}

void run_verify() {
    CheckRunner check;

    check("offset races: closed form vs quadrature, winners sum to one", [] {
        struct Cfg {
            std::vector<double> rates, offs;
        };
        std::vector<Cfg> cfgs = {
            {{0.2, 0.2}, {0.0, 3.0}},
            {{0.5, 0.8, 2.0, 0.2}, {0.0, 1.5, 3.0, 0.0}},
            {{1.3, 0.7, 0.25}, {2.0, 0.0, 5.0}},
        };
        oracle::DrawStream rng{SeedSpec{2026, 0, 0, 0}, 0};
        for (int extra = 0; extra < 5; ++extra) {
            Cfg c;
            const std::size_t n = 2 + std::size_t(rng.below(4));
            for (std::size_t i = 0; i < n; ++i) {
                c.rates.push_back(rng.uniform(0.05, 2.5));
                c.offs.push_back(rng.uniform(0.0, 6.0));
            }
            cfgs.push_back(std::move(c));
        }
        double max_quad_err = 0.0, max_sum_err = 0.0;
        for (const Cfg& c : cfgs) {
            double sum = 0.0;
            for (std::size_t w = 0; w < c.rates.size(); ++w) {
                const double closed = exec_prob_offsets(c.rates, c.offs, w);
                const double quad = oracle::quad_exec_prob(c.rates, c.offs, w);
                max_quad_err = std::max(max_quad_err, std::abs(closed - quad));
                sum += closed;
            }
            max_sum_err = std::max(max_sum_err, std::abs(sum - 1.0));
        }
        std::string err = check_tol(max_quad_err, 1e-10, "closed form vs quadrature");
        if (err.empty()) err = check_tol(max_sum_err, 1e-12, "winner probabilities sum");
        return err;
    });

    check("published random-bump formula: spot value and zero-delay limit", [] {
        RaceParams p;
        p.own_rate = 0.2;
        p.rival_rates = {0.2};
        p.mm_rate = 0.2;
        p.bump = SpeedBumpSpec{3.0, true, true};
        const double spot = exec_prob_random_paper(p, 3.0);
        std::string err = check_tol(std::abs(spot - 0.3975319325359613), 1e-9, "spot value");
        if (!err.empty()) return err;
        p.bump = SpeedBumpSpec{0.0, true, true};
        const double at_zero = exec_prob_random_paper(p, 0.0);
        const double no_bump = exec_prob(p, BumpDesign::none, 0.0);
        return check_tol(std::abs(at_zero - no_bump), 1e-12, "zero-delay limit");
    });

    check("deterministic designs: share invariance and exponential damping", [] {
        const std::vector<std::vector<double>> trader_sets = {{0.3, 0.7}, {0.5, 0.8, 2.0}};
        for (const auto& traders : trader_sets) {
            RaceParams p;
            p.own_rate = traders.front();
            p.rival_rates.assign(traders.begin() + 1, traders.end());
            p.mm_rate = 0.2;
            const double base = exec_prob(p, BumpDesign::none, 0.0);
            for (double delta : {1.0, 4.0}) {
                p.bump = SpeedBumpSpec{delta, true, false};
                const double sym = exec_prob(p, BumpDesign::sym_det, delta);
                if (std::abs(sym - base) > 1e-14)
                    return std::string("symmetric delay changed the win share");
                p.bump = SpeedBumpSpec{delta, false, false};
                const double asym = exec_prob(p, BumpDesign::asym_det, delta);
                if (std::abs(asym - base * std::exp(-p.mm_rate * delta)) > 1e-14)
                    return std::string("asymmetric delay does not damp exponentially");
                // Same race phrased as activation offsets: traders wait, the
                // market maker starts immediately.
                std::vector<double> rates = traders;
                rates.push_back(p.mm_rate);
                std::vector<double> offs(traders.size(), delta);
                offs.push_back(0.0);
                if (std::abs(exec_prob_offsets(rates, offs, 0) - asym) > 1e-13)
                    return std::string("offset formulation disagrees with closed form");
            }
        }
        return std::string{};
    });

    check("random-bump enumeration: exchangeability at equal rates", [] {
        for (int n_traders : {2, 3}) {
            RaceParams p;
            p.own_rate = 0.2;
            p.rival_rates.assign(std::size_t(n_traders - 1), 0.2);
            p.mm_rate = 0.2;
            p.bump = SpeedBumpSpec{3.0, true, true};
            const double prob = exec_prob_random_exact(p, 3.0, true);
            const double expected = 1.0 / double(n_traders + 1);
            if (std::abs(prob - expected) > 1e-12)
                return "equal-rate win probability " + fmt(prob) + " != " + fmt(expected);
        }
        return std::string{};
    });

    check("monte carlo agreement with exact probabilities", [] {
        struct Cell {
            BumpDesign design;
            double delta;
            std::vector<double> traders;
            double mm;
        };
        const std::vector<Cell> cells = {
            {BumpDesign::sym_det, 3.0, {0.2, 0.2}, 0.2},
            {BumpDesign::asym_det, 5.0, {0.3, 0.7}, 0.2},
            {BumpDesign::sym_rand, 3.0, {0.2, 0.2}, 0.2},
            {BumpDesign::asym_rand, 1.0, {0.5, 0.8}, 0.2},
        };
        constexpr std::uint64_t kReps = 200000;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const Cell& c = cells[i];
            RaceParams p;
            p.own_rate = c.traders.front();
            p.rival_rates.assign(c.traders.begin() + 1, c.traders.end());
            p.mm_rate = c.mm;
            p.bump = bump_of(c.design, c.delta);
            const double exact = exec_prob(p, c.design, c.delta);
            const auto est = monte_carlo_race(c.traders, c.mm, p.bump, kReps,
                                              SeedSpec{900 + i, 0, 0, 0});
            const double mc = est.prob.front(), se = est.se.front();
            if (std::abs(mc - exact) > 4.0 * se + 1e-12)
                return "cell " + to_string(c.design) + ": |" + fmt(mc) + " - " + fmt(exact) +
                       "| > 4 se (" + fmt(se) + ")";
        }
        return std::string{};
    });

    check("fixed-effects regression vs explicit dummy variables", [] {
        oracle::DrawStream rng{SeedSpec{7, 1, 0, 0}, 0};
        double max_err = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t n = 60 + std::size_t(rng.below(141));
            const std::size_t k = 1 + std::size_t(rng.below(3));
            const std::size_t d = std::size_t(rng.below(4));
            ToyPanel p = make_panel(rng, n, k, d, 0);
            PanelSpec spec;
            spec.dependent = "y";
            for (std::size_t j = 0; j < k; ++j) spec.terms.push_back("x" + std::to_string(j));
            for (std::size_t j = 0; j < d; ++j)
                spec.fixed_effects.push_back("f" + std::to_string(j));
            const FitResult fit = fit_fe_ols(spec, p.data);
            const oracle::DummyFit ref = oracle::dummy_ols(p.y, p.x, p.fe_codes);
            max_err = std::max(max_err, (fit.coef - ref.coef).cwiseAbs().maxCoeff());
        }
        return check_tol(max_err, 1e-8, "coefficients");
    });

    check("multiway clustered covariance vs brute-force assembly", [] {
        oracle::DrawStream rng{SeedSpec{7, 2, 0, 0}, 0};
        double max_err = 0.0;
        for (int trial = 0; trial < 6; ++trial) {
            const std::size_t n = 80 + std::size_t(rng.below(80));
            const std::size_t n_dims = 1 + std::size_t(rng.below(3));
            ToyPanel p = make_panel(rng, n, 2, 0, n_dims);
            PanelSpec spec;
            spec.dependent = "y";
            spec.terms = {"x0", "x1"};
            for (std::size_t j = 0; j < n_dims; ++j)
                spec.clusters.push_back("c" + std::to_string(j));
            const FitResult fit = fit_fe_ols(spec, p.data);
            const Eigen::MatrixXd ref = repair_psd(
                oracle::cgm_vcov_bruteforce(fit.X_demeaned, fit.residuals, p.cluster_codes, true));
            max_err = std::max(max_err, (fit.vcov - ref).cwiseAbs().maxCoeff());
        }
        return check_tol(max_err, 1e-10, "covariance");
    });

    check("singleton clusters without factors reproduce plain HC0", [] {
        oracle::DrawStream rng{SeedSpec{7, 3, 0, 0}, 0};
        const std::size_t n = 50;
        ToyPanel p = make_panel(rng, n, 2, 0, 0);
        std::vector<double> row_id;
        for (std::size_t i = 0; i < n; ++i) row_id.push_back(double(i));
        p.data.add("row_id", row_id);
        PanelSpec spec;
        spec.dependent = "y";
        spec.terms = {"x0", "x1"};
        spec.clusters = {"row_id"};
        spec.finite_sample = false;
        const FitResult fit = fit_fe_ols(spec, p.data);
        const Eigen::MatrixXd a_inv = (p.x.transpose() * p.x).inverse();
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd s =
                fit.residuals[Eigen::Index(i)] * p.x.row(Eigen::Index(i)).transpose();
            meat += s * s.transpose();
        }
        const Eigen::MatrixXd hc0 = a_inv * meat * a_inv;
        return check_tol((fit.vcov - hc0).cwiseAbs().maxCoeff(), 1e-12, "HC0 identity");
    });

    std::cout << (check.total - check.failures) << " of " << check.total << " checks passed\n";
    if (check.failures > 0)
        throw verify_failure(std::to_string(check.failures) + " of " +
                             std::to_string(check.total) + " checks failed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "latency-race laboratory: execution probabilities, equilibrium speed investment, "
        "simulated trading sessions, and panel regressions"};
    app.require_subcommand(1);

    ProbeArgs probe_args;
    CLI::App* probe = app.add_subcommand(
        "probe", "evaluate execution probabilities for one race configuration");
    probe->add_option("--design", probe_args.design,
                      "delay design: none, sym-det, asym-det, sym-rand, asym-rand");
    probe->add_option("--delta", probe_args.delta, "mean delay");
    auto* probe_rates = probe->add_option("--rates", probe_args.rates,
                                          "arrival rates: own trader, rivals..., market maker")
                            ->delimiter(',');
    auto* probe_tier = probe->add_option("--tier", probe_args.tier,
                                         "technology tier for --invests");
    auto* probe_invests =
        probe->add_option("--invests", probe_args.invests, "per-trader investment levels")
            ->delimiter(',');
    probe->add_option("--endowment", probe_args.endowment, "per-round endowment");
    probe->add_option("--mm-rate", probe_args.mm_rate, "market-maker arrival rate");
    probe->add_option("--engine", probe_args.engine, "paper, exact, or both");
    probe->add_option("--mc", probe_args.mc_reps, "Monte Carlo replications (0 = off)");
    probe->add_option("--seed", probe_args.seed, "master seed for Monte Carlo");
    probe->add_option("--config", probe_args.config_path, "JSON config file");
    probe_rates->excludes(probe_tier)->excludes(probe_invests);
    probe_invests->needs(probe_tier);
    probe->callback([&] { run_probe(*probe, probe_args); });

    SolveArgs solve_args;
    CLI::App* solve =
        app.add_subcommand("solve", "solve symmetric equilibrium investment per design cell");
    solve->add_option("--grid", solve_args.grid, "'canonical' for the full design grid");
    solve->add_option("--design", solve_args.design, "single-cell delay design");
    solve->add_option("--delta", solve_args.delta, "single-cell mean delay");
    solve->add_option("--endowment", solve_args.endowment, "single-cell endowment");
    solve->add_option("--tier", solve_args.tier, "technology tier label");
    solve->add_option("--engine", solve_args.engine, "probability engine: exact or paper");
    solve->add_option("--traders", solve_args.n_traders, "number of traders");
    solve->add_option("--prize", solve_args.prize, "winner prize");
    solve->add_option("--mm-rate", solve_args.mm_rate, "market-maker arrival rate");
    solve->add_option("--out", solve_args.out_dir, "output directory (default: stdout)");
    solve->add_option("--format", solve_args.format, "csv or json");
    solve->add_option("--config", solve_args.config_path, "JSON config file");
    solve->callback([&] { run_solve(*solve, solve_args); });

    SimArgs sim_args;
    CLI::App* simulate =
        app.add_subcommand("simulate", "replicate one round's race and compare to exact values");
    simulate->add_option("--design", sim_args.design, "delay design");
    simulate->add_option("--delta", sim_args.delta, "mean delay");
    simulate->add_option("--tier", sim_args.tier, "technology tier label");
    simulate->add_option("--invests", sim_args.invests, "per-trader investment levels")
        ->delimiter(',');
    simulate->add_option("--endowment", sim_args.endowment, "per-round endowment");
    simulate->add_option("--prize", sim_args.prize, "winner prize");
    simulate->add_option("--mm-rate", sim_args.mm_rate, "market-maker arrival rate");
    simulate->add_option("--reps", sim_args.reps, "number of simulated races");
    simulate->add_option("--seed", sim_args.seed, "master seed");
    simulate->add_option("--round", sim_args.round_index, "round index used in seeding");
    simulate->add_option("--out", sim_args.out_dir, "output directory (default: stdout)");
    simulate->add_option("--format", sim_args.format, "csv or json");
    simulate->add_option("--config", sim_args.config_path, "JSON config file");
    simulate->callback([&] { run_simulate(*simulate, sim_args); });

    SessionArgs session_args;
    CLI::App* session =
        app.add_subcommand("session", "run a full multi-group session on the round schedule");
    session->add_option("--groups", session_args.groups, "number of independent groups");
    session->add_option("--traders", session_args.traders, "traders per group");
    session->add_option("--policy", session_args.policies,
                        "agent policies (one per trader, or one for all)")
        ->delimiter(',');
    session->add_option("--tiers", session_args.tiers,
                        "tier labels (one per group, one for all, or empty for seeded draw)")
        ->delimiter(',');
    session->add_option("--prize", session_args.prize, "winner prize");
    session->add_option("--mm-rate", session_args.mm_rate, "market-maker arrival rate");
    session->add_option("--seed", session_args.seed, "master seed");
    session->add_option("--session-id", session_args.session_id, "session identifier");
    session->add_option("--out", session_args.out_dir, "output directory (default: stdout)");
    session->add_option("--config", session_args.config_path, "JSON config file");
    session->callback([&] { run_session_cmd(*session, session_args); });

    AnalyzeArgs analyze_args;
    CLI::App* analyze =
        app.add_subcommand("analyze", "run panel regressions on a session record CSV");
    analyze->add_option("--input", analyze_args.input, "session records CSV");
    analyze->add_option("--battery", analyze_args.battery,
                        "built-in battery: delay-dummy or design-interactions");
    auto* analyze_spec =
        analyze->add_option("--spec", analyze_args.spec_path, "custom battery JSON");
    analyze->add_option("--out", analyze_args.out_dir, "output directory");
    analyze->add_option("--format", analyze_args.format, "csv or json");
    analyze->add_option("--config", analyze_args.config_path, "JSON config file");
    analyze_spec->excludes("--battery");
    analyze->callback([&] { run_analyze(*analyze, analyze_args); });

    CLI::App* verify = app.add_subcommand(
        "verify", "cross-check closed forms, enumeration, Monte Carlo, and regression oracles");
    verify->callback([&] { run_verify(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const verify_failure& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return 3;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
