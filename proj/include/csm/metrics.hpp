#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csm/domain.hpp"

namespace csm::metrics {

double target_length_ratio(std::size_t summary_word_count, LengthBudget budget);

struct IcResult {
    double ic = 1.0;
    std::size_t entailed_claims = 0;
    std::size_t consistent_claims = 0;
    std::vector<std::string> inconsistent_claim_ids;
    bool vacuous = false;  // no claim entailed anywhere; ic reported as 1.0
};

// Entailment pattern of one claim across budgets, keyed by budget words.
using ClaimPatterns = std::map<std::string, std::map<int, int>>;

// Fraction of ever-entailed claims whose pattern is non-decreasing in budget.
IcResult incremental_consistency(const ClaimPatterns& patterns,
                                 const std::vector<LengthBudget>& budgets);

struct ClaimInclusionVector {
    std::string backend_id;
    LengthBudget budget;
    int replicate = 0;
    std::vector<std::string> item_order;  // sorted (doc, topic, ordinal)
    std::vector<int> bits;
};

ClaimInclusionVector claim_inclusion_vector(
    const std::vector<AtomicClaim>& claim_universe,
    const std::vector<ClaimVerdict>& verdicts,
    const std::string& backend_id,
    LengthBudget budget,
    int replicate);

// Nominal-data alpha for two raters over binary vectors. Identical vectors
// give exactly 1.0; the constant-and-equal degenerate case also yields 1.0
// and sets *degenerate when provided.
double krippendorff_alpha(const std::vector<int>& v1,
                          const std::vector<int>& v2,
                          bool* degenerate = nullptr);

// Mean pairwise alpha over all C(R,2) replicate pairs.
double self_agreement(const std::vector<std::vector<int>>& replicate_vectors);

// Rank correlation via mid-ranks; nullopt when either rank vector is constant.
std::optional<double> spearman_rho(const std::vector<double>& x,
                                   const std::vector<double>& y);

struct CorrelationResult {
    std::optional<double> rho;
    std::optional<double> p_value;  // two-sided
    std::size_t n = 0;
};

// rho plus a two-sided p-value: exact permutation distribution for n <= 8,
// t-approximation otherwise.
CorrelationResult spearman_test(const std::vector<double>& x,
                                const std::vector<double>& y);

struct PairwiseRhoResult {
    double mean_rho = 0.0;
    std::size_t pairs_used = 0;
    std::size_t pairs_undefined = 0;
    std::vector<double> p_values;  // per defined pair
};

// Mean Spearman over all rater pairs; undefined pairs are excluded and counted.
PairwiseRhoResult avg_pairwise_rho(
    const std::vector<std::vector<double>>& rating_rows);

double harmonic_mean_pvalue(const std::vector<double>& p_values);

enum class WeightScheme { uniform, reciprocal, log_decay };

struct AggregationWeights {
    WeightScheme scheme = WeightScheme::uniform;
    std::map<int, double> weights;  // budget words -> w_l
};

AggregationWeights make_weights(WeightScheme scheme,
                                const std::vector<LengthBudget>& budgets);
WeightScheme parse_weight_scheme(const std::string& name);
std::string weight_scheme_name(WeightScheme scheme);

// Weighted mean of one CSM row, keyed by budget words.
double aggregate_salience(const std::map<int, double>& csm_row,
                          const AggregationWeights& weights);

double rescale_to_likert(double score);

// Spearman between answer word counts and per-document CSM values at one
// budget, over all (doc, topic) pairs with a non-absent answer.
CorrelationResult answer_length_salience_correlation(
    const std::vector<ReferenceAnswer>& answers,
    const std::vector<DocumentCsm>& doc_csms,
    LengthBudget budget);

// Mid-rank (ties averaged) transform, exposed for reuse by analysis.
std::vector<double> mid_ranks(const std::vector<double>& values);

}  // namespace csm::metrics
