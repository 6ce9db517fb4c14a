#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csm/domain.hpp"
#include "csm/gateway.hpp"
#include "csm/metrics.hpp"
#include "csm/stages.hpp"

namespace csm::analysis {

// Prompts the rater `runs` times, each with an independently seeded shuffle
// of the question list (seed = base_seed + run_index). Out-of-range or
// unparseable ratings are dropped; a run with < 50% parseable ratings is
// discarded entirely.
std::vector<SalienceRating> elicit_perceived_salience(
    const std::vector<TopicCluster>& topics, const BackendProfile& profile,
    Gateway& gateway, int runs, long base_seed,
    const std::string& introspection_template,
    stages::StageWarnings& warnings);

// Ratings CSV contract: header rater_id,topic_id,rating,rationale.
std::vector<SalienceRating> ingest_human_ratings(
    const std::string& csv_text, const std::set<std::string>& known_topics);

struct GroupConsistency {
    double rho = 0.0;
    std::optional<double> hmp;
    std::size_t pairs = 0;
    std::size_t undefined_pairs = 0;
};

// Averaged pairwise Spearman within one group of rating vectors (all over
// the same sorted topic order), with HMP over per-pair p-values.
GroupConsistency consistency_report(
    const std::vector<std::vector<double>>& group_rows);

// Averaged pairwise Spearman across two groups (every row of a paired with
// every row of b).
GroupConsistency cross_group_rho(const std::vector<std::vector<double>>& a,
                                 const std::vector<std::vector<double>>& b);

struct AlignmentRow {
    std::string measure;
    std::string dataset;
    std::string backend;
    double rho = 0.0;
    std::optional<double> p;
    std::size_t n = 0;  // topics
};

struct AlignmentReport {
    std::vector<AlignmentRow> rows;
};

// Rating vectors aligned to a fixed sorted topic order; one row per
// run/replicate/rater.
using RatingMatrix = std::vector<std::vector<double>>;

// Builds every alignment-table row for the given backends. `observed` holds
// per-replicate observed-salience vectors; `perceived` per-run Likert
// vectors; `human` one row per human rater (may be empty).
AlignmentReport alignment_report(
    const std::string& dataset,
    const std::map<std::string, RatingMatrix>& perceived,
    const std::map<std::string, RatingMatrix>& observed,
    const RatingMatrix& human);

struct AgreementMatrix {
    LengthBudget budget;
    std::vector<std::string> backend_ids;
    std::vector<std::vector<double>> cells;  // symmetric; diagonal = self-agr.
};

// One matrix per budget. Diagonal: mean pairwise alpha over replicates
// (NaN when R = 1). Off-diagonal: alpha between the backends' replicate-0
// vectors.
std::vector<AgreementMatrix> build_agreement_matrices(
    const std::map<std::string,
                   std::map<int, std::map<int, std::vector<int>>>>&
        inclusion_bits,  // backend -> budget words -> replicate -> bits
    const std::vector<LengthBudget>& budgets);

// Report bundle: CSV + SVG heatmap per backend CSM, per-budget agreement
// matrices, alignment table, and a text summary.
struct ReportInputs {
    std::vector<LengthBudget> budgets;
    metrics::AggregationWeights weights;
    // backend -> mean corpus CSM
    std::map<std::string, CorpusCsm> corpus_csms;
    // topic -> representative question text
    std::map<std::string, std::string> topic_questions;
    std::vector<AgreementMatrix> agreement;
    AlignmentReport alignment;
};

void render_reports(const ReportInputs& inputs, const std::string& out_dir);

// Topic order used by every rating vector: sorted topic_id.
std::vector<std::string> sorted_topic_ids(
    const std::vector<TopicCluster>& topics);

}  // namespace csm::analysis
