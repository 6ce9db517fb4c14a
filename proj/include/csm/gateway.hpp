#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace csm {

enum class BackendKind { chat, embedding, entailment, mock };

BackendKind parse_backend_kind(const std::string& name);
std::string backend_kind_name(BackendKind kind);

struct BackendProfile {
    std::string backend_id;
    BackendKind kind = BackendKind::mock;
    std::string endpoint;  // ignored for mock
    std::string model_name;
    double temperature = 0.3;
    int max_output_tokens = 1024;
    double request_timeout_seconds = 60.0;
    int max_parallel = 4;
    std::string api_key;  // filled from CSM_API_KEY_<BACKEND_ID>
};

// Content-addressed, write-once response cache. One file per entry under
// <dir>/<first-2-hex>/<key>.json. Concurrent writers of the same key
// converge on one stored value.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const std::string& role,
               const std::string& model_name, const std::string& request_digest,
               const std::string& response);

    static std::string make_key(const std::string& role,
                                const std::string& model_name,
                                const std::string& rendered_input,
                                double temperature, long seed,
                                const std::string& replicate_tag);

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& key) const;
    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

// Uniform access to chat completion, embeddings and entailment judging,
// with caching and a fully offline mock transport.
class Gateway {
public:
    Gateway(std::filesystem::path cache_dir, long base_seed = 0);

    std::string complete_chat(const BackendProfile& profile,
                              const std::string& rendered_prompt,
                              const std::string& replicate_tag);

    std::vector<std::vector<double>> embed_texts(
        const BackendProfile& profile, const std::vector<std::string>& texts);

    int judge_entailment(const BackendProfile& profile,
                         const std::string& claim, const std::string& summary);

    // Number of actual transport invocations (cache misses).
    std::size_t transport_calls() const { return transport_calls_.load(); }

    ResponseCache& cache() { return cache_; }

private:
    std::string transport_chat(const BackendProfile& profile,
                               const std::string& rendered_prompt);
    std::string transport_embed(const BackendProfile& profile,
                                const std::string& text);
    std::string transport_entail(const BackendProfile& profile,
                                 const std::string& claim,
                                 const std::string& summary);
    std::string http_post_json(const BackendProfile& profile,
                               const std::string& body,
                               const std::string& what);

    ResponseCache cache_;
    long base_seed_;
    std::atomic<std::size_t> transport_calls_{0};
};

// Pure mock transport over planted corpora. A planted document is an
// ordered list of fact sentences of the form
//   [[C<k>|<token>]] <filler words...>
// where C<k> is a category tag whose numeric suffix is its global priority
// rank (C1 outranks C2). The mock summarizer greedily emits whole facts in
// priority order until the word budget is exhausted; QG emits one canonical
// question per category present; QA returns the facts of the asked category
// or the UNANSWERABLE sentinel; claim splitting yields one claim per fact
// line; entailment is fact-token containment; the rater maps priority rank
// onto the Likert scale. Every CSM cell is analytically predictable.
namespace mock {

// Mock chat roles are selected by model_name: "mock:sum", "mock:qg",
// "mock:qa", "mock:claims", "mock:rater".
std::string complete_chat(const std::string& model_name,
                          const std::string& rendered_prompt);
std::vector<double> embed_text(const std::string& text);
int judge_entailment(const std::string& claim, const std::string& summary);

// Canonical question text for a planted category tag.
std::string canonical_question(const std::string& category);

}  // namespace mock

}  // namespace csm
