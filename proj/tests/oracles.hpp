#pragma once

// Independent reference implementations the tests check the library against.
// Everything here is written directly from the textbook definitions, on
// purpose sharing no code with src/.

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double mean(const std::vector<int>& xs) {
    double s = 0.0;
    for (int x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Nominal Krippendorff's alpha for two raters over binary data, via the
// full coincidence matrix.
inline double krippendorff_alpha(const std::vector<int>& a,
                                 const std::vector<int>& b) {
    const std::size_t items = a.size();
    double o[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < items; ++i) {
        o[a[i]][b[i]] += 1.0;
        o[b[i]][a[i]] += 1.0;
    }
    const double n = 2.0 * static_cast<double>(items);
    const double n0 = o[0][0] + o[0][1];
    const double n1 = o[1][0] + o[1][1];
    const double d_o = o[0][1] / n;
    const double d_e = (n0 * n1) / (n * (n - 1.0));
    if (d_e == 0.0) return 1.0;  // constant-and-equal convention
    return 1.0 - d_o / d_e;
}

inline std::vector<double> mid_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> ranks(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        // average of ranks (less+1) .. (less+equal)
        ranks[i] = static_cast<double>(less) +
                   (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::runtime_error("pearson undefined: constant vector");
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
    return pearson(mid_ranks(x), mid_ranks(y));
}

inline double harmonic_mean_pvalue(const std::vector<double>& ps) {
    double denom = 0.0;
    for (double p : ps) denom += 1.0 / p;
    return static_cast<double>(ps.size()) / denom;
}

// Incremental consistency by exhaustive l1 < l2 pair checking.
// patterns: claim -> (budget -> 0/1), budgets ascending.
inline double incremental_consistency(
    const std::map<std::string, std::map<int, int>>& patterns,
    const std::vector<int>& budgets) {
    std::size_t entailed = 0, consistent = 0;
    for (const auto& [claim, row] : patterns) {
        bool any = false;
        for (const auto& [l, e] : row) any = any || e == 1;
        if (!any) continue;
        ++entailed;
        bool ok = true;
        for (std::size_t i = 0; i < budgets.size(); ++i)
            for (std::size_t j = i + 1; j < budgets.size(); ++j)
                if (row.at(budgets[i]) > row.at(budgets[j])) ok = false;
        if (ok) ++consistent;
    }
    if (entailed == 0) return 1.0;
    return static_cast<double>(consistent) / static_cast<double>(entailed);
}

}  // namespace oracle
