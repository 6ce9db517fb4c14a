#include "csm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "csm/errors.hpp"

namespace csm::metrics {

double target_length_ratio(std::size_t summary_word_count, LengthBudget budget) {
    if (budget.words < 1) throw ValidationError("budget must be >= 1 word");
    return static_cast<double>(summary_word_count) /
           static_cast<double>(budget.words);
}

IcResult incremental_consistency(const ClaimPatterns& patterns,
                                 const std::vector<LengthBudget>& budgets) {
    validate_budgets(budgets);
    IcResult res;
    for (const auto& [claim_id, pattern] : patterns) {
        std::vector<int> row;
        row.reserve(budgets.size());
        for (const auto& b : budgets) {
            auto it = pattern.find(b.words);
            if (it == pattern.end())
                throw ValidationError("claim " + claim_id +
                                      " missing verdict at budget " +
                                      std::to_string(b.words));
            row.push_back(it->second);
        }
        bool entailed = std::any_of(row.begin(), row.end(),
                                    [](int v) { return v == 1; });
        if (!entailed) continue;
        res.entailed_claims += 1;
        bool monotone = true;
        for (std::size_t i = 0; i + 1 < row.size() && monotone; ++i)
            for (std::size_t j = i + 1; j < row.size() && monotone; ++j)
                if (row[i] > row[j]) monotone = false;
        if (monotone)
            res.consistent_claims += 1;
        else
            res.inconsistent_claim_ids.push_back(claim_id);
    }
    if (res.entailed_claims == 0) {
        res.vacuous = true;
        res.ic = 1.0;
    } else {
        res.ic = static_cast<double>(res.consistent_claims) /
                 static_cast<double>(res.entailed_claims);
    }
    return res;
}

ClaimInclusionVector claim_inclusion_vector(
    const std::vector<AtomicClaim>& claim_universe,
    const std::vector<ClaimVerdict>& verdicts,
    const std::string& backend_id,
    LengthBudget budget,
    int replicate) {
    // Global enumeration: sorted by (doc, topic, ordinal).
    std::vector<const AtomicClaim*> order;
    order.reserve(claim_universe.size());
    for (const auto& c : claim_universe) order.push_back(&c);
    std::sort(order.begin(), order.end(),
              [](const AtomicClaim* a, const AtomicClaim* b) {
                  return std::tie(a->doc_id, a->topic_id, a->ordinal) <
                         std::tie(b->doc_id, b->topic_id, b->ordinal);
              });

    std::map<std::string, int> by_claim;
    for (const auto& v : verdicts) {
        if (v.backend_id != backend_id || v.budget != budget ||
            v.replicate != replicate)
            continue;
        by_claim[v.claim_id] = v.entailed;
    }

    ClaimInclusionVector out;
    out.backend_id = backend_id;
    out.budget = budget;
    out.replicate = replicate;
    for (const AtomicClaim* c : order) {
        auto it = by_claim.find(c->claim_id);
        if (it == by_claim.end())
            throw ValidationError("claim " + c->claim_id +
                                  " has no verdict for backend " + backend_id +
                                  " at budget " + std::to_string(budget.words) +
                                  " replicate " + std::to_string(replicate));
        out.item_order.push_back(c->claim_id);
        out.bits.push_back(it->second);
    }
    return out;
}

double krippendorff_alpha(const std::vector<int>& v1,
                          const std::vector<int>& v2,
                          bool* degenerate) {
    if (v1.size() != v2.size())
        throw ValidationError("alpha: vector length mismatch");
    if (v1.size() < 2) throw ValidationError("alpha: need at least 2 items");
    if (degenerate) *degenerate = false;

    // Coincidence-matrix formulation, two raters, nominal binary data.
    // Each item contributes both ordered pairs (v1,v2) and (v2,v1).
    const double n_items = static_cast<double>(v1.size());
    const double n_values = 2.0 * n_items;  // total pairable values
    double mismatches = 0.0;                // o_{01} + o_{10}
    double n_ones = 0.0;
    for (std::size_t i = 0; i < v1.size(); ++i) {
        if ((v1[i] != 0 && v1[i] != 1) || (v2[i] != 0 && v2[i] != 1))
            throw ValidationError("alpha: vectors must be binary");
        if (v1[i] != v2[i]) mismatches += 2.0;
        n_ones += v1[i] + v2[i];
    }
    if (mismatches == 0.0 && (n_ones == 0.0 || n_ones == n_values)) {
        // Both vectors constant and equal: expected disagreement is zero.
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    const double d_observed = mismatches / n_values;
    const double n_zeros = n_values - n_ones;
    const double d_expected =
        2.0 * n_ones * n_zeros / (n_values * (n_values - 1.0));
    if (d_expected == 0.0) {
        // Constant but unequal cannot happen (mismatches would be > 0);
        // keep a guard regardless.
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    return 1.0 - d_observed / d_expected;
}

double self_agreement(const std::vector<std::vector<int>>& replicate_vectors) {
    if (replicate_vectors.size() < 2)
        throw ValidationError("self_agreement: need at least 2 replicates");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < replicate_vectors.size(); ++i)
        for (std::size_t j = i + 1; j < replicate_vectors.size(); ++j) {
            sum += krippendorff_alpha(replicate_vectors[i], replicate_vectors[j]);
            pairs += 1;
        }
    return sum / static_cast<double>(pairs);
}

std::vector<double> mid_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

std::optional<double> pearson(const std::vector<double>& x,
                              const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

double t_approx_pvalue(double rho, std::size_t n) {
    if (std::abs(rho) >= 1.0) return 0.0;
    const double df = static_cast<double>(n) - 2.0;
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(dist, -std::abs(t));
}

}  // namespace

std::optional<double> spearman_rho(const std::vector<double>& x,
                                   const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ValidationError("spearman: vector length mismatch");
    if (x.size() < 3) throw ValidationError("spearman: need at least 3 items");
    return pearson(mid_ranks(x), mid_ranks(y));
}

CorrelationResult spearman_test(const std::vector<double>& x,
                                const std::vector<double>& y) {
    CorrelationResult res;
    res.n = x.size();
    res.rho = spearman_rho(x, y);
    if (!res.rho) return res;

    const std::size_t n = x.size();
    if (n <= 8) {
        // Exact two-sided permutation distribution over y orderings.
        const std::vector<double> rx = mid_ranks(x);
        std::vector<double> ry = mid_ranks(y);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::sort(perm.begin(), perm.end());
        const double observed = std::abs(*res.rho);
        std::size_t total = 0, at_least = 0;
        std::vector<double> ry_perm(n);
        do {
            for (std::size_t i = 0; i < n; ++i) ry_perm[i] = ry[perm[i]];
            auto r = pearson(rx, ry_perm);
            if (!r) continue;  // constant rank vector, excluded on both sides
            total += 1;
            if (std::abs(*r) >= observed - 1e-12) at_least += 1;
        } while (std::next_permutation(perm.begin(), perm.end()));
        if (total > 0)
            res.p_value = static_cast<double>(at_least) /
                          static_cast<double>(total);
    } else {
        res.p_value = t_approx_pvalue(*res.rho, n);
    }
    return res;
}

PairwiseRhoResult avg_pairwise_rho(
    const std::vector<std::vector<double>>& rating_rows) {
    if (rating_rows.size() < 2)
        throw ValidationError("avg_pairwise_rho: need at least 2 raters");
    for (const auto& row : rating_rows)
        if (row.size() != rating_rows.front().size())
            throw ValidationError("avg_pairwise_rho: uneven rating rows");
    if (rating_rows.front().size() < 3)
        throw ValidationError("avg_pairwise_rho: need at least 3 topics");

    PairwiseRhoResult res;
    double sum = 0.0;
    for (std::size_t i = 0; i < rating_rows.size(); ++i)
        for (std::size_t j = i + 1; j < rating_rows.size(); ++j) {
            auto r = spearman_test(rating_rows[i], rating_rows[j]);
            if (!r.rho) {
                res.pairs_undefined += 1;
                continue;
            }
            sum += *r.rho;
            res.pairs_used += 1;
            if (r.p_value) res.p_values.push_back(*r.p_value);
        }
    if (res.pairs_used == 0)
        throw ValidationError("avg_pairwise_rho: all rater pairs undefined");
    res.mean_rho = sum / static_cast<double>(res.pairs_used);
    return res;
}

double harmonic_mean_pvalue(const std::vector<double>& p_values) {
    if (p_values.empty()) throw ValidationError("HMP of empty p-value list");
    double inv_sum = 0.0;
    bool all_equal = true;
    for (double p : p_values) {
        if (p <= 0.0 || p > 1.0)
            throw ValidationError("HMP requires p-values in (0, 1]");
        inv_sum += 1.0 / p;
        all_equal = all_equal && p == p_values.front();
    }
    // The harmonic mean of identical values is that value, exactly.
    if (all_equal) return p_values.front();
    return static_cast<double>(p_values.size()) / inv_sum;
}

AggregationWeights make_weights(WeightScheme scheme,
                                const std::vector<LengthBudget>& budgets) {
    validate_budgets(budgets);
    AggregationWeights w;
    w.scheme = scheme;
    for (const auto& b : budgets) {
        const double l = static_cast<double>(b.words);
        switch (scheme) {
            case WeightScheme::uniform: w.weights[b.words] = 1.0; break;
            case WeightScheme::reciprocal: w.weights[b.words] = 1.0 / l; break;
            case WeightScheme::log_decay:
                w.weights[b.words] = 1.0 / std::log(1.0 + l);
                break;
        }
    }
    return w;
}

WeightScheme parse_weight_scheme(const std::string& name) {
    if (name == "uniform") return WeightScheme::uniform;
    if (name == "reciprocal") return WeightScheme::reciprocal;
    if (name == "log_decay") return WeightScheme::log_decay;
    throw ValidationError("unknown aggregation scheme: " + name);
}

std::string weight_scheme_name(WeightScheme scheme) {
    switch (scheme) {
        case WeightScheme::uniform: return "uniform";
        case WeightScheme::reciprocal: return "reciprocal";
        case WeightScheme::log_decay: return "log_decay";
    }
    return "uniform";
}

double aggregate_salience(const std::map<int, double>& csm_row,
                          const AggregationWeights& weights) {
    double num = 0.0, den = 0.0;
    for (const auto& [budget_words, w] : weights.weights) {
        auto it = csm_row.find(budget_words);
        if (it == csm_row.end())
            throw ValidationError("CSM row missing budget " +
                                  std::to_string(budget_words));
        num += w * it->second;
        den += w;
    }
    if (den == 0.0) throw ValidationError("aggregate over empty weight set");
    return num / den;
}

double rescale_to_likert(double score) {
    if (score < 0.0 || score > 1.0)
        throw ValidationError("likert rescale input must be in [0,1]");
    return 1.0 + 4.0 * score;
}

CorrelationResult answer_length_salience_correlation(
    const std::vector<ReferenceAnswer>& answers,
    const std::vector<DocumentCsm>& doc_csms,
    LengthBudget budget) {
    std::map<std::pair<std::string, std::string>, double> salience;
    for (const auto& csm : doc_csms)
        for (const auto& [key, value] : csm.entries)
            if (key.second == budget.words)
                salience[{csm.doc_id, key.first}] = value;

    std::vector<double> lengths, scores;
    std::vector<const ReferenceAnswer*> sorted;
    for (const auto& a : answers)
        if (!a.absent()) sorted.push_back(&a);
    std::sort(sorted.begin(), sorted.end(),
              [](const ReferenceAnswer* a, const ReferenceAnswer* b) {
                  return std::tie(a->doc_id, a->topic_id) <
                         std::tie(b->doc_id, b->topic_id);
              });
    for (const ReferenceAnswer* a : sorted) {
        auto it = salience.find({a->doc_id, a->topic_id});
        if (it == salience.end()) continue;
        lengths.push_back(static_cast<double>(a->word_count));
        scores.push_back(it->second);
    }
    if (lengths.size() < 3)
        throw ValidationError(
            "answer-length correlation needs at least 3 (doc, topic) pairs");
    return spearman_test(lengths, scores);
}

}  // namespace csm::metrics
