#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "racelab/errors.hpp"

namespace racelab {

// A rectangular numeric dataset: named columns of equal length. Categorical
// dimensions (participants, groups, rounds, design codes) are stored as
// numeric codes and compared exactly.
struct Dataset {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;

    std::size_t n_rows() const { return cols.empty() ? 0 : cols.front().size(); }

    bool has(const std::string& name) const {
        return std::find(names.begin(), names.end(), name) != names.end();
    }

    const std::vector<double>& column(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return cols[i];
        throw std::domain_error("dataset has no column '" + name + "'");
    }

    void add(std::string name, std::vector<double> values) {
        if (!cols.empty() && values.size() != n_rows())
            throw std::domain_error("column '" + name + "' has mismatched length");
        if (has(name)) throw std::domain_error("duplicate column '" + name + "'");
        names.push_back(std::move(name));
        cols.push_back(std::move(values));
    }
};

// Rescales to mean zero and unit sample standard deviation (n-1 denominator).
// Applied after sample filtering, so the moments are the analysis sample's.
inline std::vector<double> standardize(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) throw std::domain_error("standardize: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(n - 1));
    if (sd == 0.0) throw std::domain_error("standardize: column is constant");
    std::vector<double> out;
    out.reserve(n);
    for (double v : values) out.push_back((v - mean) / sd);
    return out;
}

// Row filter: keep rows whose column value equals one of the listed values.
// Several filters AND together.
struct Filter {
    std::string column;
    std::vector<double> any_of;
};

// One regression specification. Terms are products of columns separated by
// '*'; a factor prefixed with "std:" is standardized on the filtered sample
// before multiplying (e.g. "std:bump_mean*bump_symmetric").
struct PanelSpec {
    std::string label;
    std::string dependent;
    std::vector<std::string> terms;
    std::vector<std::string> fixed_effects;  // columns whose levels are absorbed
    std::vector<std::string> clusters;       // columns defining cluster dimensions
    std::vector<Filter> filters;
    bool finite_sample = true;  // apply small-sample factors in clustered vcov
};

struct FitResult {
    std::string label;
    std::vector<std::string> terms;
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd se;
    Eigen::VectorXd t_stats;
    Eigen::VectorXd p_values;
    std::size_t n_obs = 0;
    double r_squared = 0.0;  // within R^2, net of absorbed fixed effects
    double constant = 0.0;   // sample ybar - xbar'beta; presentation only, no SE
    std::vector<std::string> fe_dims;
    std::vector<std::string> cluster_dims;
    std::vector<std::size_t> cluster_counts;  // per dimension, order as cluster_dims
    double df_denom = 0.0;  // t/F denominator df: min cluster count - 1, or n - k
    bool vcov_repaired = false;  // eigenvalue truncation was needed
    bool finite_sample = true;

    // Demeaned design, residuals, and the source rows of the sample — kept so
    // covariance estimators and diagnostics can run without refitting.
    Eigen::MatrixXd X_demeaned;
    Eigen::VectorXd residuals;
    std::vector<std::size_t> sample_rows;
};

namespace detail {

inline std::vector<std::size_t> filtered_rows(const Dataset& data,
                                              const std::vector<Filter>& filters) {
    std::vector<std::size_t> rows;
    const std::size_t n = data.n_rows();
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
    for (const Filter& f : filters) {
        const std::vector<double>& col = data.column(f.column);
        std::vector<std::size_t> kept;
        kept.reserve(rows.size());
        for (std::size_t r : rows)
            for (double v : f.any_of)
                if (col[r] == v) {
                    kept.push_back(r);
                    break;
                }
        rows.swap(kept);
    }
    return rows;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string::size_type start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline Eigen::VectorXd build_term(const std::string& term, const Dataset& data,
                                  const std::vector<std::size_t>& rows) {
    Eigen::VectorXd out = Eigen::VectorXd::Ones(Eigen::Index(rows.size()));
    for (const std::string& factor : split(term, '*')) {
        const bool std_flag = factor.rfind("std:", 0) == 0;
        const std::string name = std_flag ? factor.substr(4) : factor;
        const std::vector<double>& col = data.column(name);
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (std::size_t r : rows) vals.push_back(col[r]);
        if (std_flag) vals = standardize(vals);
        for (std::size_t i = 0; i < vals.size(); ++i) out[Eigen::Index(i)] *= vals[i];
    }
    return out;
}

// Integer group codes for one categorical dimension, restricted to the
// sample rows.
struct GroupDim {
    std::vector<int> code;  // per sample row
    int n_groups = 0;
};

inline GroupDim encode_groups(const std::vector<double>& col,
                              const std::vector<std::size_t>& rows) {
    GroupDim d;
    d.code.reserve(rows.size());
    std::map<double, int> ids;
    for (std::size_t r : rows) {
        const auto [it, inserted] = ids.emplace(col[r], int(ids.size()));
        d.code.push_back(it->second);
    }
    d.n_groups = int(ids.size());
    return d;
}

// Alternating within-group demeaning of every column of M until no group
// mean moves more than the tolerance. One dimension converges in a single
// pass; crossed dimensions alternate.
inline void absorb_fixed_effects(Eigen::MatrixXd& M, const std::vector<GroupDim>& dims) {
    if (dims.empty()) return;
    constexpr double kTol = 1e-10;
    constexpr int kMaxSweeps = 10000;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_change = 0.0;
        for (const GroupDim& d : dims) {
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d.n_groups, M.cols());
            Eigen::VectorXd counts = Eigen::VectorXd::Zero(d.n_groups);
            for (Eigen::Index i = 0; i < M.rows(); ++i) {
                sums.row(d.code[std::size_t(i)]) += M.row(i);
                counts[d.code[std::size_t(i)]] += 1.0;
            }
            for (int g = 0; g < d.n_groups; ++g) sums.row(g) /= counts[g];
            max_change = std::max(max_change, sums.cwiseAbs().maxCoeff());
            for (Eigen::Index i = 0; i < M.rows(); ++i)
                M.row(i) -= sums.row(d.code[std::size_t(i)]);
        }
        if (max_change < kTol) return;
    }
    throw std::runtime_error("fixed-effect absorption did not converge in 10000 sweeps");
}

inline std::string stars(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

}  // namespace detail

// Cluster-robust covariance by inclusion-exclusion over all non-empty
// subsets of the cluster dimensions: one-way sandwiches are added, pairwise
// intersections subtracted, the triple intersection added back. Each
// component gets the small-sample factor G/(G-1) * (N-1)/(N-K) (G = its
// cluster count, K = number of regressor terms) unless finite_sample is off.
// The assembled matrix can fail to be positive semidefinite; if a variance
// goes negative the matrix is repaired by zeroing negative eigenvalues and
// `repaired` (when given) reports it.
inline Eigen::MatrixXd clustered_vcov(const FitResult& fit, const Dataset& data,
                                      const std::vector<std::string>& cluster_dims,
                                      bool finite_sample = true, bool* repaired = nullptr) {
    if (repaired) *repaired = false;
    if (cluster_dims.empty() || cluster_dims.size() > 3)
        throw std::domain_error("clustered_vcov: need 1 to 3 cluster dimensions");
    {
        std::set<std::string> unique(cluster_dims.begin(), cluster_dims.end());
        if (unique.size() != cluster_dims.size())
            throw std::domain_error("clustered_vcov: duplicate cluster dimension");
    }

    const Eigen::MatrixXd& X = fit.X_demeaned;
    const Eigen::VectorXd& e = fit.residuals;
    const auto n = std::size_t(X.rows());
    const auto k = std::size_t(X.cols());
    if (k == 0) return Eigen::MatrixXd(0, 0);

    std::vector<detail::GroupDim> dims;
    for (const std::string& name : cluster_dims) {
        dims.push_back(detail::encode_groups(data.column(name), fit.sample_rows));
        if (dims.back().n_groups < 2)
            throw std::domain_error("clustered_vcov: dimension '" + name +
                                    "' has a single cluster; variance undefined");
    }

    // Scores x_i * e_i, summed within clusters for each subset's meat matrix.
    Eigen::MatrixXd scores = X.array().colwise() * e.array();
    Eigen::LLT<Eigen::MatrixXd> bread(X.transpose() * X);
    if (bread.info() != Eigen::Success)
        throw std::runtime_error("clustered_vcov: design cross-product not positive definite");

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(Eigen::Index(k), Eigen::Index(k));
    const std::size_t n_subsets = (std::size_t(1) << cluster_dims.size());
    for (std::size_t mask = 1; mask < n_subsets; ++mask) {
        // Intersection clusters of the dimensions in this subset.
        std::map<std::array<int, 3>, int> ids;
        std::vector<int> cluster_of(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::array<int, 3> key{0, 0, 0};
            for (std::size_t d = 0; d < dims.size(); ++d)
                if (mask & (std::size_t(1) << d)) key[d] = dims[d].code[i];
            cluster_of[i] = ids.emplace(key, int(ids.size())).first->second;
        }
        const int G = int(ids.size());

        Eigen::MatrixXd cluster_sums = Eigen::MatrixXd::Zero(G, Eigen::Index(k));
        for (std::size_t i = 0; i < n; ++i)
            cluster_sums.row(cluster_of[i]) += scores.row(Eigen::Index(i));
        const Eigen::MatrixXd meat = cluster_sums.transpose() * cluster_sums;

        double weight = (std::popcount(mask) % 2 == 1) ? 1.0 : -1.0;
        if (finite_sample && G > 1)
            weight *= double(G) / double(G - 1) * double(n - 1) / double(n - k);
        V += weight * bread.solve(bread.solve(meat).transpose()).transpose();
    }
    V = ((V + V.transpose()) / 2.0).eval();

    if (V.diagonal().minCoeff() < 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V);
        const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
        V = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
        V = ((V + V.transpose()) / 2.0).eval();
        if (repaired) *repaired = true;
    }
    return V;
}

// Fixed-effects OLS: filter the sample, build the term columns, absorb the
// fixed-effect dimensions by alternating demeaning, then solve the demeaned
// least-squares problem by column-pivoted QR. Inference uses the requested
// cluster dimensions (heteroskedasticity-robust when none are given).
inline FitResult fit_fe_ols(const PanelSpec& spec, const Dataset& data) {
    FitResult fit;
    fit.label = spec.label;
    fit.terms = spec.terms;
    fit.fe_dims = spec.fixed_effects;
    fit.cluster_dims = spec.clusters;
    fit.finite_sample = spec.finite_sample;

    fit.sample_rows = detail::filtered_rows(data, spec.filters);
    const std::size_t n = fit.sample_rows.size();
    const std::size_t k = spec.terms.size();
    if (n == 0) throw std::domain_error("panel fit: no observations after filtering");
    if (n <= k) throw std::domain_error("panel fit: fewer observations than terms");
    fit.n_obs = n;

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    {
        const std::vector<double>& dep = data.column(spec.dependent);
        for (std::size_t i = 0; i < n; ++i) y[Eigen::Index(i)] = dep[fit.sample_rows[i]];
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j)
        X.col(Eigen::Index(j)) = detail::build_term(spec.terms[j], data, fit.sample_rows);

    const double ybar = y.mean();
    const Eigen::RowVectorXd xbar = k ? X.colwise().mean() : Eigen::RowVectorXd(0);

    std::vector<detail::GroupDim> fe;
    for (const std::string& dim : spec.fixed_effects)
        fe.push_back(detail::encode_groups(data.column(dim), fit.sample_rows));
    {
        Eigen::MatrixXd M(Eigen::Index(n), Eigen::Index(k + 1));
        M.col(0) = y;
        if (k) M.rightCols(Eigen::Index(k)) = X;
        detail::absorb_fixed_effects(M, fe);
        y = M.col(0);
        if (k) X = M.rightCols(Eigen::Index(k));
    }

    if (k) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (std::size_t(qr.rank()) < k) {
            const auto perm = qr.colsPermutation().indices();
            std::string dropped;
            for (Eigen::Index j = qr.rank(); j < Eigen::Index(k); ++j) {
                if (!dropped.empty()) dropped += ", ";
                dropped += spec.terms[std::size_t(perm[j])];
            }
            throw std::domain_error(
                "panel fit: regressors are collinear after absorbing fixed effects (" +
                dropped + ")");
        }
        fit.coef = qr.solve(y);
    } else {
        fit.coef = Eigen::VectorXd(0);
    }

    fit.X_demeaned = X;
    fit.residuals = y - (k ? (X * fit.coef).eval() : Eigen::VectorXd::Zero(y.size()).eval());
    const double ssr = fit.residuals.squaredNorm();
    const double sst = (y.array() - y.mean()).matrix().squaredNorm();
    fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
    fit.constant = ybar - (k ? double(xbar * fit.coef) : 0.0);

    if (!spec.clusters.empty()) {
        fit.vcov =
            clustered_vcov(fit, data, spec.clusters, spec.finite_sample, &fit.vcov_repaired);
        std::size_t g_min = n;
        for (const std::string& name : spec.clusters) {
            const auto dim = detail::encode_groups(data.column(name), fit.sample_rows);
            fit.cluster_counts.push_back(std::size_t(dim.n_groups));
            g_min = std::min(g_min, std::size_t(dim.n_groups));
        }
        fit.df_denom = double(g_min - 1);
    } else if (k) {
        // Heteroskedasticity-robust (HC1) covariance.
        Eigen::MatrixXd scores = X.array().colwise() * fit.residuals.array();
        Eigen::LLT<Eigen::MatrixXd> bread(X.transpose() * X);
        const Eigen::MatrixXd meat = scores.transpose() * scores;
        fit.vcov = bread.solve(bread.solve(meat).transpose()).transpose() * double(n) /
                   double(n - k);
        fit.vcov = ((fit.vcov + fit.vcov.transpose()) / 2.0).eval();
        fit.df_denom = double(n - k);
    } else {
        fit.vcov = Eigen::MatrixXd(0, 0);
        fit.df_denom = double(n);
    }

    fit.se = Eigen::VectorXd(Eigen::Index(k));
    fit.t_stats = Eigen::VectorXd(Eigen::Index(k));
    fit.p_values = Eigen::VectorXd(Eigen::Index(k));
    const boost::math::students_t tdist(fit.df_denom > 0 ? fit.df_denom : 1.0);
    for (Eigen::Index j = 0; j < Eigen::Index(k); ++j) {
        fit.se[j] = std::sqrt(std::max(0.0, fit.vcov(j, j)));
        if (fit.se[j] > 0.0) {
            fit.t_stats[j] = fit.coef[j] / fit.se[j];
            fit.p_values[j] =
                2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(fit.t_stats[j])));
        } else {
            // Degenerate exact fit: the point estimate carries no noise.
            fit.t_stats[j] = fit.coef[j] == 0.0 ? 0.0
                                                : std::numeric_limits<double>::infinity() *
                                                      (fit.coef[j] > 0 ? 1.0 : -1.0);
            fit.p_values[j] = fit.coef[j] == 0.0 ? 1.0 : 0.0;
        }
    }
    return fit;
}

struct FTestResult {
    double stat = 0.0;
    double p_value = 1.0;
    std::size_t q = 0;   // number of effective restrictions
    double df_denom = 0.0;
};

// Wald F-test of R * coef = target using the fit's covariance, referred to
// F(q, df_denom) with the fit's denominator degrees of freedom. Vacuous
// all-zero restrictions with a zero target drop out (0 = 0); an all-zero row
// demanding a non-zero value is infeasible and rejected.
inline FTestResult f_test(const FitResult& fit, Eigen::MatrixXd R, Eigen::VectorXd target) {
    if (R.cols() != fit.coef.size())
        throw std::domain_error("f_test: restriction width does not match the term count");
    if (R.rows() != target.size())
        throw std::domain_error("f_test: one target per restriction row required");

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
        if (R.row(i).cwiseAbs().maxCoeff() > 0.0) {
            keep.push_back(i);
        } else if (target[i] != 0.0) {
            throw std::domain_error("f_test: restriction 0 = c with c != 0 is infeasible");
        }
    }
    FTestResult out;
    out.df_denom = fit.df_denom;
    out.q = keep.size();
    if (keep.empty()) return out;  // every restriction was vacuous: stat 0, p 1

    Eigen::MatrixXd Rk(Eigen::Index(keep.size()), R.cols());
    Eigen::VectorXd tk(Eigen::Index(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        Rk.row(Eigen::Index(i)) = R.row(keep[i]);
        tk[Eigen::Index(i)] = target[keep[i]];
    }

    const Eigen::VectorXd d = Rk * fit.coef - tk;
    const Eigen::MatrixXd rvr = Rk * fit.vcov * Rk.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(rvr);
    if (!lu.isInvertible())
        throw std::domain_error(
            "f_test: restriction covariance is singular (dependent restrictions?)");
    out.stat = double(d.transpose() * lu.solve(d)) / double(out.q);
    if (out.stat < 0.0) out.stat = 0.0;  // guard against a repaired, rank-poor vcov
    const boost::math::fisher_f fdist(double(out.q), out.df_denom > 0 ? out.df_denom : 1.0);
    out.p_value = boost::math::cdf(boost::math::complement(fdist, out.stat));
    return out;
}

// Single linear combination of named terms (e.g. {{"std:bump_mean", 1},
// {"std:bump_mean*bump_symmetric", 1}} = 0).
inline FTestResult f_test_combo(const FitResult& fit,
                                const std::vector<std::pair<std::string, double>>& combo,
                                double target) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(1, fit.coef.size());
    for (const auto& [term, weight] : combo) {
        const auto it = std::find(fit.terms.begin(), fit.terms.end(), term);
        if (it == fit.terms.end())
            throw std::domain_error("f_test: term '" + term + "' is not in the fitted model");
        R(0, Eigen::Index(it - fit.terms.begin())) += weight;
    }
    Eigen::VectorXd t(1);
    t[0] = target;
    return f_test(fit, R, t);
}

// Text rendering in the journal layout: coefficient rows with significance
// stars, t-statistics in parentheses beneath, then the sample block.
inline std::string summarize(const FitResult& fit) {
    std::ostringstream out;
    const auto line = [&](const std::string& left, const std::string& right) {
        out << left;
        for (std::size_t i = left.size(); i < 44; ++i) out << ' ';
        out << right << '\n';
    };
    if (!fit.label.empty()) out << fit.label << '\n';
    out << std::string(60, '-') << '\n';

    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", fit.constant);
    line("Constant", buf);
    for (std::size_t j = 0; j < fit.terms.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.4f%s", fit.coef[Eigen::Index(j)],
                      detail::stars(fit.p_values[Eigen::Index(j)]).c_str());
        line(fit.terms[j], buf);
        std::snprintf(buf, sizeof buf, "(%.2f)", fit.t_stats[Eigen::Index(j)]);
        line("", buf);
    }
    out << std::string(60, '-') << '\n';
    line("Observations", std::to_string(fit.n_obs));
    std::snprintf(buf, sizeof buf, "%.3f", fit.r_squared);
    line("R-squared (within)", buf);
    const auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) {
            if (!s.empty()) s += ", ";
            s += x;
        }
        return s.empty() ? std::string("none") : s;
    };
    line("Fixed effects", join(fit.fe_dims));
    line("Clustered by", join(fit.cluster_dims));
    if (fit.vcov_repaired) line("Note", "vcov repaired to be positive semidefinite");
    out << "*** p<0.01, ** p<0.05, * p<0.1; t-statistics in parentheses\n";
    return out.str();
}

}  // namespace racelab
