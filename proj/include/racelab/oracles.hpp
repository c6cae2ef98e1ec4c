#pragma once

// Independent cross-checks used by the `verify` command and the test suite.
// Each oracle recomputes a quantity the library produces in closed form or
// via an optimized path, using a deliberately different method: numerical
// quadrature for race probabilities, explicit dummy variables for
// fixed-effects regression, and a direct inclusion-exclusion assembly for
// multiway-clustered covariance.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "racelab/rng.hpp"

namespace racelab::oracle {

// 16-point Gauss-Legendre rule on [-1, 1] (positive half; symmetric).
inline constexpr std::array<double, 8> kGlNode = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr std::array<double, 8> kGlWeight = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

// Density-times-survival integrand for "racer `winner` finishes at t and
// everyone else is still in transit": each racer k runs exponential with
// `rates[k]` starting at `offsets[k]`.
inline double race_integrand(const std::vector<double>& rates, const std::vector<double>& offsets,
                             std::size_t winner, double t) {
    double v = rates[winner] * std::exp(-rates[winner] * (t - offsets[winner]));
    for (std::size_t k = 0; k < rates.size(); ++k) {
        if (k == winner) continue;
        if (t > offsets[k]) v *= std::exp(-rates[k] * (t - offsets[k]));
    }
    return v;
}

// Win probability by piecewise Gauss-Legendre quadrature between activation
// breakpoints, plus the analytic exponential tail once every racer is active.
inline double quad_exec_prob(const std::vector<double>& rates, const std::vector<double>& offsets,
                             std::size_t winner) {
    if (rates[winner] == 0.0) return 0.0;
    double s_all = 0.0;
    for (double r : rates) s_all += r;

    std::vector<double> cuts{offsets[winner]};
    for (std::size_t k = 0; k < offsets.size(); ++k)
        if (k != winner && offsets[k] > offsets[winner]) cuts.push_back(offsets[k]);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const double t_end = cuts.back() + 45.0 / s_all;
    cuts.push_back(t_end);

    double total = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double a = cuts[c], b = cuts[c + 1];
        double s_active = 0.0;
        for (std::size_t k = 0; k < rates.size(); ++k)
            if (offsets[k] <= a || k == winner) s_active += rates[k];
        const int panels =
            std::clamp(int(std::ceil((b - a) * s_active / 4.0)), 1, 512);
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = a + (p + 0.5) * h, half = h / 2.0;
            double acc = 0.0;
            for (std::size_t g = 0; g < kGlNode.size(); ++g)
                acc += kGlWeight[g] * (race_integrand(rates, offsets, winner, mid - half * kGlNode[g]) +
                                       race_integrand(rates, offsets, winner, mid + half * kGlNode[g]));
            total += half * acc;
        }
    }
    // Beyond t_end every racer is active, so the integrand decays as
    // exp(-s_all * t) and the remaining mass is integrand(t_end) / s_all.
    total += race_integrand(rates, offsets, winner, t_end) / s_all;
    return total;
}

// Plain OLS with fixed effects entered as explicit dummy columns: every
// level of the first dimension, all-but-one level of each later dimension.
// Redundancies among the dummies (disconnected designs) are tolerated via a
// rank-revealing solve; the slope block is identified regardless.
struct DummyFit {
    Eigen::VectorXd coef;       // slopes only, aligned with X's columns
    Eigen::VectorXd residuals;  // y minus the full fitted values
};

inline DummyFit dummy_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                          const std::vector<std::vector<int>>& fe_codes) {
    const Eigen::Index n = y.size();
    const Eigen::Index k = X.cols();
    Eigen::Index extra = 0;
    std::vector<int> levels;
    for (std::size_t d = 0; d < fe_codes.size(); ++d) {
        int lv = 0;
        for (int c : fe_codes[d]) lv = std::max(lv, c + 1);
        levels.push_back(lv);
        extra += (d == 0) ? lv : lv - 1;
    }
    Eigen::MatrixXd M(n, k + extra);
    if (k) M.leftCols(k) = X;
    Eigen::Index col = k;
    for (std::size_t d = 0; d < fe_codes.size(); ++d) {
        const int base = (d == 0) ? 0 : 1;  // later dims omit level 0
        for (int lv = base; lv < levels[d]; ++lv) {
            for (Eigen::Index i = 0; i < n; ++i)
                M(i, col) = fe_codes[d][std::size_t(i)] == lv ? 1.0 : 0.0;
            ++col;
        }
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
    const Eigen::VectorXd full = cod.solve(y);
    return {full.head(k), y - M * full};
}

// Multiway cluster-robust covariance assembled straight from its definition:
// explicit score sums per cluster, inclusion-exclusion over dimension
// subsets, the same per-component small-sample factor, and a plain matrix
// inverse for the bread. No repair step — this is the raw assembly.
inline Eigen::MatrixXd cgm_vcov_bruteforce(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid,
                                           const std::vector<std::vector<int>>& dims,
                                           bool finite_sample) {
    const auto n = std::size_t(X.rows());
    const Eigen::Index k = X.cols();
    const Eigen::MatrixXd a_inv = (X.transpose() * X).inverse();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(k, k);
    const std::size_t n_subsets = std::size_t(1) << dims.size();
    for (std::size_t mask = 1; mask < n_subsets; ++mask) {
        std::map<std::vector<int>, int> ids;
        std::vector<int> cluster_of(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<int> key;
            for (std::size_t d = 0; d < dims.size(); ++d)
                if (mask & (std::size_t(1) << d)) key.push_back(dims[d][i]);
            cluster_of[i] = ids.emplace(key, int(ids.size())).first->second;
        }
        const int n_clusters = int(ids.size());
        std::vector<Eigen::VectorXd> sums(std::size_t(n_clusters), Eigen::VectorXd::Zero(k));
        for (std::size_t i = 0; i < n; ++i)
            sums[std::size_t(cluster_of[i])] += resid[Eigen::Index(i)] * X.row(Eigen::Index(i)).transpose();
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
        for (const Eigen::VectorXd& s : sums) meat += s * s.transpose();
        double w = (std::popcount(mask) % 2 == 1) ? 1.0 : -1.0;
        if (finite_sample && n_clusters > 1)
            w *= double(n_clusters) / double(n_clusters - 1) * double(n - 1) /
                 double(n - std::size_t(k));
        v += w * a_inv * meat * a_inv;
    }
    return (v + v.transpose()) / 2.0;
}

// Deterministic draw stream for building randomized test fixtures: a thin
// wrapper over the counter-based generator that advances the draw index.
struct DrawStream {
    SeedSpec seed;
    std::uint32_t participant = 0;
    std::uint32_t next = 0;

    double u() { return uniform_open(seed, participant, next++); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u(); }

    std::uint64_t below(std::uint64_t n) { return uniform_below(seed, participant, next++, n); }

    // Standard normal via Box-Muller (one value per pair of uniforms).
    double z() {
        const double u1 = u(), u2 = u();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    }
};

}  // namespace racelab::oracle
