#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace csm {

// Target summary length in whitespace-separated words.
struct LengthBudget {
    int words = 0;
    auto operator<=>(const LengthBudget&) const = default;
};

// Validates that a budget set is non-empty and strictly increasing.
void validate_budgets(const std::vector<LengthBudget>& budgets);

struct DocumentRecord {
    std::string doc_id;
    std::string text;
    std::size_t word_count = 0;
};

struct SummaryRecord {
    std::string doc_id;
    LengthBudget budget;
    int replicate = 0;
    std::string backend_id;
    std::string text;
    std::size_t word_count = 0;
};

struct QuestionRecord {
    std::string question_id;
    std::string doc_id;
    std::string text;
    std::optional<std::vector<double>> embedding;
};

struct TopicCluster {
    std::string topic_id;
    std::set<std::string> member_ids;
    std::string representative_id;
    std::string representative_text;
};

// Reference answer for one (document, topic). text is empty when absent.
struct ReferenceAnswer {
    std::string doc_id;
    std::string topic_id;
    std::optional<std::string> text;  // nullopt == ABSENT
    std::size_t word_count = 0;

    bool absent() const { return !text.has_value(); }
};

struct AtomicClaim {
    std::string claim_id;
    std::string doc_id;
    std::string topic_id;
    int ordinal = 0;
    std::string text;
};

struct ClaimVerdict {
    std::string claim_id;
    std::string doc_id;
    std::string topic_id;
    LengthBudget budget;
    int replicate = 0;
    std::string backend_id;
    int entailed = 0;  // 0 or 1
};

// Key of one CSM cell: (topic, budget words).
using CsmKey = std::pair<std::string, int>;

struct DocumentCsm {
    std::string doc_id;
    std::string backend_id;
    int replicate = 0;
    std::map<CsmKey, double> entries;
    std::set<std::string> absent_topics;
};

struct CorpusCsm {
    std::string backend_id;
    std::map<CsmKey, double> entries;
    std::map<std::string, double> prevalence;
    std::map<std::string, std::size_t> support;  // |D^t|
};

struct SalienceRating {
    std::string rater_id;
    enum class Kind { human, llm } rater_kind = Kind::llm;
    std::string topic_id;
    int rating = 0;  // 1..5
    std::string rationale;
    int run_index = 0;
};

// Fraction of claims entailed by one summary. Throws on an empty list;
// zero-claim topics must be routed to ABSENT handling by the caller.
double answerability(const std::vector<int>& verdicts);

// Per-topic verdict lists keyed by budget words.
using VerdictGroups = std::map<std::string, std::map<int, std::vector<int>>>;

// Builds the document-level map. `present_topics` selects which topics get
// entries; every other topic in `all_topics` lands in absent_topics. A
// present topic missing a (t, l) group is an error naming the hole.
DocumentCsm build_document_csm(const std::string& doc_id,
                               const std::string& backend_id,
                               int replicate,
                               const VerdictGroups& groups,
                               const std::set<std::string>& all_topics,
                               const std::set<std::string>& present_topics,
                               const std::vector<LengthBudget>& budgets);

// Averages document maps over the documents supporting each topic.
CorpusCsm build_corpus_csm(const std::vector<DocumentCsm>& doc_csms,
                           std::size_t corpus_size);

double topic_prevalence(std::size_t support, std::size_t corpus_size);

}  // namespace csm
