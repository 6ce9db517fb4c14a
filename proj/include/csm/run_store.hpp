#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csm/domain.hpp"
#include "csm/gateway.hpp"

namespace csm {

// Full run configuration; the config snapshot is immutable after init.
struct RunConfig {
    std::string run_id;
    std::string corpus_path;
    std::vector<LengthBudget> budgets;
    int replicates = 5;
    long base_seed = 0;
    int questions_per_doc = 8;
    std::size_t min_cluster_size = 15;
    double link_threshold = 0.35;
    std::string aggregation_scheme = "uniform";
    std::string qg_source_backend;
    std::string prompts_dir = "prompts";
    // "summarization" or "summarization-meetings"
    std::string summarization_prompt = "summarization";
    std::optional<std::string> human_ratings_path;
    int introspection_runs = 5;
    // "top_budget" (largest-budget column) or "aggregate" (budget-weighted
    // mean) as the observed-salience vector for alignment.
    std::string observed_salience_source = "top_budget";

    std::vector<BackendProfile> summarizers;
    BackendProfile qg, embed, qa, claims, nli, rater;

    static RunConfig from_json_text(const std::string& body);
    nlohmann::json to_json() const;
    void validate() const;
    const BackendProfile& summarizer(const std::string& backend_id) const;
};

// Stage names in dependency order.
const std::vector<std::string>& stage_order();

struct StageManifest {
    std::string status = "pending";  // pending | complete
    std::string input_digest;
    std::string output_digest;
};

// Filesystem layout and (de)serialization for one run directory. All
// row-oriented artifacts are JSON-lines with sorted object keys, so run
// directories are byte-reproducible.
class RunStore {
public:
    RunStore(std::filesystem::path runs_root, std::string run_id);

    const std::filesystem::path& dir() const { return dir_; }
    std::string path(const std::string& relative) const;
    bool exists() const;

    // Advisory single-writer lock; throws when already held.
    void acquire_lock();
    void release_lock();

    RunConfig load_config() const;
    void save_config(const RunConfig& config) const;

    std::map<std::string, StageManifest> load_manifest() const;
    void save_manifest(const std::map<std::string, StageManifest>& m) const;

    // Digest over a stage's output files, in a fixed order.
    std::string output_digest(const std::vector<std::string>& relative_paths) const;

    std::vector<DocumentRecord> load_corpus() const;
    void save_corpus(const std::vector<DocumentRecord>& docs) const;

    std::vector<SummaryRecord> load_summaries() const;
    void save_summaries(const std::vector<SummaryRecord>& records) const;

    std::vector<QuestionRecord> load_questions(bool with_embeddings) const;
    void save_questions(const std::vector<QuestionRecord>& questions) const;
    void save_embeddings(const std::vector<QuestionRecord>& questions) const;

    std::vector<TopicCluster> load_clusters(const std::string& file) const;
    void save_clusters(const std::string& file,
                       const std::vector<TopicCluster>& clusters) const;

    std::vector<ReferenceAnswer> load_answers(const std::string& file) const;
    void save_answers(const std::string& file,
                      const std::vector<ReferenceAnswer>& answers) const;

    std::vector<AtomicClaim> load_claims() const;
    void save_claims(const std::vector<AtomicClaim>& claims) const;

    std::vector<ClaimVerdict> load_verdicts() const;
    void save_verdicts(const std::vector<ClaimVerdict>& verdicts) const;

    std::vector<SalienceRating> load_llm_ratings() const;
    void save_llm_ratings(const std::vector<SalienceRating>& ratings) const;

    std::vector<DocumentCsm> load_doc_csms() const;
    void save_doc_csms(const std::vector<DocumentCsm>& csms) const;

    CorpusCsm load_corpus_csm(const std::string& file) const;
    void save_corpus_csm(const std::string& file, const CorpusCsm& csm) const;

private:
    std::filesystem::path dir_;
    bool locked_ = false;
};

}  // namespace csm
