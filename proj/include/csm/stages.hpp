#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "csm/domain.hpp"
#include "csm/gateway.hpp"

namespace csm::stages {

// Named prompt templates used across the pipeline.
struct PromptSet {
    std::string summarization;
    std::string summarization_meetings;
    std::string question_generation;
    std::string question_answering;
    std::string claim_splitting;
    std::string introspection;

    static PromptSet load(const std::string& dir);
};

// Manual-review overrides applied after clustering. representative_choice is
// keyed by the group's position in merge_groups.
struct MergeOverride {
    std::vector<std::set<std::string>> merge_groups;
    std::map<std::size_t, std::string> representative_choice;

    static MergeOverride from_json_text(const std::string& body);
};

struct StageWarnings {
    std::size_t dropped_question_lines = 0;
    std::size_t skipped_documents = 0;
    std::size_t coerced_answers = 0;
    std::size_t dropped_ratings = 0;
};

// Step 0: |D| x |L| x R summary records, sorted by (doc, budget, replicate).
std::vector<SummaryRecord> generate_summaries(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<LengthBudget>& budgets, int replicates,
    const BackendProfile& profile, Gateway& gateway,
    const std::string& summarization_template);

// Step 1: up to n questions per document, parsed from a numbered list.
// The prompt shows the full summary ladder of `ladder_backend`, replicate 0.
std::vector<QuestionRecord> generate_questions(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<SummaryRecord>& summaries,
    const std::string& ladder_backend_id, int questions_per_doc,
    const BackendProfile& profile, Gateway& gateway,
    const std::string& qg_template, StageWarnings& warnings);

void embed_questions(std::vector<QuestionRecord>& questions,
                     const BackendProfile& profile, Gateway& gateway);

// Step 2: deterministic average-linkage agglomerative clustering on cosine
// distance, cut at link_threshold; clusters below min_cluster_size are noise.
std::vector<TopicCluster> cluster_questions(
    const std::vector<QuestionRecord>& questions, std::size_t min_cluster_size,
    double link_threshold);

// Representative = member closest to the cluster mean embedding, ties broken
// by smallest question_id.
void select_representatives(std::vector<TopicCluster>& clusters,
                            const std::vector<QuestionRecord>& questions);

std::vector<TopicCluster> apply_merge_overrides(
    const std::vector<TopicCluster>& clusters, const MergeOverride& override_,
    const std::vector<QuestionRecord>& questions);

// Step 3a: one reference answer per (document, topic); the UNANSWERABLE
// sentinel (prefix match) maps to ABSENT.
std::vector<ReferenceAnswer> answer_questions(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<TopicCluster>& topics, const BackendProfile& profile,
    Gateway& gateway, const std::string& qa_template);

// Step 3b: atomic claims per non-absent answer. Answers yielding zero parsed
// claims are coerced to ABSENT in place, with a warning counter.
std::vector<AtomicClaim> decompose_claims(std::vector<ReferenceAnswer>& answers,
                                          const BackendProfile& profile,
                                          Gateway& gateway,
                                          const std::string& claims_template,
                                          StageWarnings& warnings);

// Step 4a: one verdict per (claim, summary of the same document).
std::vector<ClaimVerdict> score_entailments(
    const std::vector<AtomicClaim>& claims,
    const std::vector<SummaryRecord>& summaries, const BackendProfile& profile,
    Gateway& gateway, int max_parallel);

struct CsmBundle {
    // replicate -> per-document maps / corpus map, plus the headline mean.
    std::map<int, std::vector<DocumentCsm>> doc_csms;
    std::map<int, CorpusCsm> corpus_csms;
    CorpusCsm mean_corpus_csm;
};

// Delegates to the domain ops per replicate, then averages replicates.
CsmBundle build_csms(const std::vector<ClaimVerdict>& verdicts,
                     const std::vector<ReferenceAnswer>& answers,
                     const std::set<std::string>& all_topics,
                     const std::vector<std::string>& doc_ids,
                     const std::vector<LengthBudget>& budgets,
                     const std::string& backend_id, int replicates,
                     std::size_t corpus_size);

// External-summary ingestion: buckets pre-existing summaries to the nearest
// budget within the relative tolerance; out-of-tolerance rows are skipped.
struct IngestResult {
    std::vector<SummaryRecord> accepted;
    std::size_t skipped = 0;
};

IngestResult bucket_ingested_summaries(
    const std::vector<std::pair<std::string, std::string>>& doc_summaries,
    const std::vector<LengthBudget>& budgets, double tolerance,
    const std::string& pseudo_backend_id);

// Parses "N. text" / "N) text" / "- text" list lines; returns trimmed items.
std::vector<std::string> parse_list_lines(const std::string& response);

}  // namespace csm::stages
