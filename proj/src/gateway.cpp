#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "csm/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "csm/digest.hpp"
#include "csm/errors.hpp"
#include "csm/text.hpp"

using json = nlohmann::json;

namespace csm {

BackendKind parse_backend_kind(const std::string& name) {
    if (name == "chat") return BackendKind::chat;
    if (name == "embedding") return BackendKind::embedding;
    if (name == "entailment") return BackendKind::entailment;
    if (name == "mock") return BackendKind::mock;
    throw ValidationError("unknown backend kind: " + name);
}

std::string backend_kind_name(BackendKind kind) {
    switch (kind) {
        case BackendKind::chat: return "chat";
        case BackendKind::embedding: return "embedding";
        case BackendKind::entailment: return "entailment";
        case BackendKind::mock: return "mock";
    }
    return "mock";
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto path = entry_path(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json entry = json::parse(in, nullptr, false);
    if (entry.is_discarded() || !entry.contains("response"))
        throw BackendError("corrupt cache entry: " + path.string());
    return entry["response"].get<std::string>();
}

void ResponseCache::store(const std::string& key, const std::string& role,
                          const std::string& model_name,
                          const std::string& request_digest,
                          const std::string& response) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto path = entry_path(key);
    if (std::filesystem::exists(path)) return;  // write-once; loser discards
    std::filesystem::create_directories(path.parent_path());
    json entry = {
        {"key", key},
        {"role", role},
        {"model", model_name},
        {"request_digest", request_digest},
        {"created_at",
         std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
             .count()},
        {"response", response},
    };
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << entry.dump();
    }
    std::filesystem::rename(tmp, path);
}

std::string ResponseCache::make_key(const std::string& role,
                                    const std::string& model_name,
                                    const std::string& rendered_input,
                                    double temperature, long seed,
                                    const std::string& replicate_tag) {
    json canonical = {
        {"role", role},           {"model", model_name},
        {"input", rendered_input}, {"temperature", temperature},
        {"seed", seed},           {"replicate_tag", replicate_tag},
    };
    return digest::sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------------------
// Mock transport

namespace mock {

namespace {

struct Fact {
    std::string category;
    int priority = 0;
    std::string token;
    std::string line;
    std::size_t order = 0;
};

const std::regex kFactTag(R"(\[\[(C(\d+))\|([^\]\|]+)\]\])");
const std::regex kCategoryRef(R"(category (C\d+))");

std::vector<Fact> parse_facts(const std::string& text) {
    std::vector<Fact> facts;
    std::size_t order = 0;
    for (const auto& line : text::split_lines(text)) {
        std::smatch m;
        if (!std::regex_search(line, m, kFactTag)) continue;
        Fact f;
        f.category = m[1];
        f.priority = std::stoi(m[2]);
        f.token = m[3];
        f.line = text::trim(line);
        f.order = order++;
        facts.push_back(std::move(f));
    }
    return facts;
}

bool priority_order(const Fact& a, const Fact& b) {
    return std::tie(a.priority, a.order) < std::tie(b.priority, b.order);
}

std::string summarize(const std::string& prompt) {
    std::smatch m;
    static const std::regex kTarget(R"(in exactly (\d+) words)");
    if (!std::regex_search(prompt, m, kTarget))
        throw BackendError("mock summarizer: no word target in prompt");
    const int budget = std::stoi(m[1]);

    auto facts = parse_facts(prompt);
    std::stable_sort(facts.begin(), facts.end(), priority_order);

    // Greedy prefix fill: whole facts in priority order, stop at the first
    // fact that no longer fits. Guarantees summaries are nested across
    // increasing budgets.
    std::string out;
    std::size_t used = 0;
    for (const auto& f : facts) {
        const std::size_t wc = text::word_count(f.line);
        if (used + wc > static_cast<std::size_t>(budget)) break;
        if (!out.empty()) out += "\n";
        out += f.line;
        used += wc;
    }
    if (out.empty()) out = "(no content fits the budget)";
    return out;
}

std::string generate_questions(const std::string& prompt) {
    auto facts = parse_facts(prompt);
    std::map<int, std::string> categories;  // priority -> tag
    for (const auto& f : facts) categories[f.priority] = f.category;
    std::string out;
    int i = 1;
    for (const auto& [prio, cat] : categories) {
        out += std::to_string(i++) + ". " + canonical_question(cat) + "\n";
    }
    return out;
}

std::string answer_question(const std::string& prompt) {
    std::smatch m;
    if (!std::regex_search(prompt, m, kCategoryRef))
        return "UNANSWERABLE";
    const std::string category = m[1];
    std::string out;
    for (const auto& f : parse_facts(prompt)) {
        if (f.category != category) continue;
        if (!out.empty()) out += "\n";
        out += f.line;
    }
    return out.empty() ? "UNANSWERABLE" : out;
}

std::string split_claims(const std::string& prompt) {
    std::string out;
    int i = 1;
    for (const auto& f : parse_facts(prompt))
        out += std::to_string(i++) + ". " + f.line + "\n";
    // Non-list token: parses to zero claims without being empty output.
    return out.empty() ? "NO_CLAIMS" : out;
}

std::string rate_questions(const std::string& prompt) {
    // Rate each numbered question by its category's global priority rank.
    static const std::regex kNumbered(R"(^\s*(\d+)[.)]\s+(.*)$)");
    std::string out;
    for (const auto& line : text::split_lines(prompt)) {
        std::smatch m;
        if (!std::regex_match(line, m, kNumbered)) continue;
        const std::string question = m[2];
        std::smatch cm;
        if (!std::regex_search(question, cm, kCategoryRef)) continue;
        const int priority = std::stoi(cm[1].str().substr(1));
        const int rating = std::max(1, std::min(5, 6 - priority));
        out += m[1].str() + ". rating=" + std::to_string(rating) +
               " - priority rank " + std::to_string(priority) + "\n";
    }
    return out;
}

}  // namespace

std::string canonical_question(const std::string& category) {
    return "What does the document report for category " + category + "?";
}

std::string complete_chat(const std::string& model_name,
                          const std::string& rendered_prompt) {
    if (model_name == "mock:sum") return summarize(rendered_prompt);
    if (model_name == "mock:qg") return generate_questions(rendered_prompt);
    if (model_name == "mock:qa") return answer_question(rendered_prompt);
    if (model_name == "mock:claims") return split_claims(rendered_prompt);
    if (model_name == "mock:rater") return rate_questions(rendered_prompt);
    throw ValidationError("unknown mock chat role: " + model_name);
}

std::vector<double> embed_text(const std::string& text) {
    // Deterministic vector keyed by the planted category tag when present,
    // else by the full text. Same-intent texts collapse to one point.
    std::string tag = text;
    std::smatch m;
    if (std::regex_search(text, m, kCategoryRef))
        tag = m[1];
    else if (std::regex_search(text, m, kFactTag))
        tag = m[1];

    std::seed_seq seq(tag.begin(), tag.end());
    std::mt19937 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(16);
    double norm = 0.0;
    for (double& x : v) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

int judge_entailment(const std::string& claim, const std::string& summary) {
    std::smatch m;
    if (std::regex_search(claim, m, kFactTag))
        return summary.find(m[3].str()) != std::string::npos ? 1 : 0;
    // Non-planted claim: plain containment.
    return summary.find(text::trim(claim)) != std::string::npos ? 1 : 0;
}

}  // namespace mock

// ---------------------------------------------------------------------------
// Gateway

namespace {

constexpr int kMaxAttempts = 3;

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& endpoint) {
    static const std::regex kUrl(R"((https?://[^/]+)(/.*)?)");
    std::smatch m;
    if (!std::regex_match(endpoint, m, kUrl))
        throw ValidationError("malformed endpoint URL: " + endpoint);
    ParsedUrl out;
    out.base = m[1];
    out.path = m[2].matched ? m[2].str() : "/";
    return out;
}

int binarize_verdict(const std::string& raw) {
    const std::string t = text::trim(raw);
    if (t == "0") return 0;
    if (t == "1") return 1;
    std::string lower(t);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower.find("not entailed") != std::string::npos ||
        lower.find("unsupported") != std::string::npos)
        return 0;
    if (lower.find("entailed") != std::string::npos ||
        lower.find("supported") != std::string::npos)
        return 1;
    try {
        std::size_t pos = 0;
        const double p = std::stod(t, &pos);
        if (pos == t.size()) return p >= 0.5 ? 1 : 0;
    } catch (const std::exception&) {
    }
    throw BackendError("malformed entailment verdict: '" + t + "'");
}

}  // namespace

Gateway::Gateway(std::filesystem::path cache_dir, long base_seed)
    : cache_(std::move(cache_dir)), base_seed_(base_seed) {}

std::string Gateway::http_post_json(const BackendProfile& profile,
                                    const std::string& body,
                                    const std::string& what) {
    const ParsedUrl url = parse_url(profile.endpoint);
    std::string last_error;
    std::mt19937 jitter_rng(std::random_device{}());
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        if (attempt > 0) {
            const int jitter_ms = std::uniform_int_distribution<int>(0, 100)(jitter_rng);
            std::this_thread::sleep_for(std::chrono::milliseconds(
                (100 << attempt) + jitter_ms));
        }
        httplib::Client client(url.base);
        client.set_connection_timeout(
            std::chrono::milliseconds(static_cast<long>(
                profile.request_timeout_seconds * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<long>(profile.request_timeout_seconds * 1000)));
        httplib::Headers headers;
        if (!profile.api_key.empty())
            headers.emplace("Authorization", "Bearer " + profile.api_key);
        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError(what + ": HTTP " + std::to_string(res->status) +
                               " from " + profile.backend_id + ": " + res->body);
        return res->body;
    }
    throw BackendError(what + ": backend " + profile.backend_id +
                       " unreachable after " + std::to_string(kMaxAttempts) +
                       " attempts (" + last_error + ")");
}

std::string Gateway::transport_chat(const BackendProfile& profile,
                                    const std::string& rendered_prompt) {
    transport_calls_.fetch_add(1);
    if (profile.kind == BackendKind::mock)
        return mock::complete_chat(profile.model_name, rendered_prompt);

    json body = {
        {"model", profile.model_name},
        {"messages", json::array({{{"role", "user"}, {"content", rendered_prompt}}})},
        {"temperature", profile.temperature},
        {"max_tokens", profile.max_output_tokens},
    };
    const std::string raw = http_post_json(profile, body.dump(), "chat");
    json res = json::parse(raw, nullptr, false);
    if (res.is_discarded() || !res.contains("choices") || res["choices"].empty())
        throw BackendError("chat: malformed response from " + profile.backend_id);
    return res["choices"][0]["message"]["content"].get<std::string>();
}

std::string Gateway::transport_embed(const BackendProfile& profile,
                                     const std::string& input) {
    transport_calls_.fetch_add(1);
    if (profile.kind == BackendKind::mock)
        return json(mock::embed_text(input)).dump();

    json body = {{"model", profile.model_name}, {"input", json::array({input})}};
    const std::string raw = http_post_json(profile, body.dump(), "embed");
    json res = json::parse(raw, nullptr, false);
    if (res.is_discarded() || !res.contains("data") || res["data"].empty())
        throw BackendError("embed: malformed response from " + profile.backend_id);
    return res["data"][0]["embedding"].dump();
}

std::string Gateway::transport_entail(const BackendProfile& profile,
                                      const std::string& claim,
                                      const std::string& summary) {
    transport_calls_.fetch_add(1);
    if (profile.kind == BackendKind::mock)
        return std::to_string(mock::judge_entailment(claim, summary));

    json body = {
        {"model", profile.model_name},
        {"messages",
         json::array({{{"role", "user"},
                       {"content",
                        "Decide whether the claim is entailed by the summary. "
                        "Answer with the single word ENTAILED or NOT ENTAILED, "
                        "or a probability in [0,1].\n\nClaim: " + claim +
                            "\n\nSummary: " + summary}}})},
        {"temperature", 0.0},
        {"max_tokens", 8},
    };
    const std::string raw = http_post_json(profile, body.dump(), "entail");
    json res = json::parse(raw, nullptr, false);
    if (res.is_discarded() || !res.contains("choices") || res["choices"].empty())
        throw BackendError("entail: malformed response from " + profile.backend_id);
    return res["choices"][0]["message"]["content"].get<std::string>();
}

std::string Gateway::complete_chat(const BackendProfile& profile,
                                   const std::string& rendered_prompt,
                                   const std::string& replicate_tag) {
    if (profile.kind != BackendKind::chat && profile.kind != BackendKind::mock)
        throw ValidationError("complete_chat requires a chat or mock backend");
    const std::string key =
        ResponseCache::make_key("chat", profile.model_name, rendered_prompt,
                                profile.temperature, base_seed_, replicate_tag);
    if (auto hit = cache_.lookup(key)) return *hit;
    const std::string response = transport_chat(profile, rendered_prompt);
    if (text::trim(response).empty())
        throw BackendError("empty chat output from " + profile.backend_id +
                           " (request " + key + ")");
    cache_.store(key, "chat", profile.model_name,
                 digest::sha256_hex(rendered_prompt), response);
    return response;
}

std::vector<std::vector<double>> Gateway::embed_texts(
    const BackendProfile& profile, const std::vector<std::string>& texts) {
    if (profile.kind != BackendKind::embedding &&
        profile.kind != BackendKind::mock)
        throw ValidationError("embed_texts requires an embedding or mock backend");
    if (texts.empty()) throw ValidationError("embed_texts: empty text list");

    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        const std::string key = ResponseCache::make_key(
            "embed", profile.model_name, t, 0.0, base_seed_, "");
        std::string raw;
        if (auto hit = cache_.lookup(key)) {
            raw = *hit;
        } else {
            raw = transport_embed(profile, t);
            cache_.store(key, "embed", profile.model_name,
                         digest::sha256_hex(t), raw);
        }
        json vec = json::parse(raw, nullptr, false);
        if (vec.is_discarded() || !vec.is_array())
            throw BackendError("embed: unparseable vector from " +
                               profile.backend_id);
        out.push_back(vec.get<std::vector<double>>());
        if (out.back().size() != out.front().size())
            throw BackendError("embed: dimension mismatch within batch from " +
                               profile.backend_id);
    }
    return out;
}

int Gateway::judge_entailment(const BackendProfile& profile,
                              const std::string& claim,
                              const std::string& summary) {
    if (profile.kind != BackendKind::entailment &&
        profile.kind != BackendKind::mock)
        throw ValidationError(
            "judge_entailment requires an entailment or mock backend");
    if (claim.empty() || summary.empty())
        throw ValidationError("judge_entailment: claim and summary must be non-empty");

    json input = {{"claim", claim}, {"summary", summary}};
    const std::string key = ResponseCache::make_key(
        "entail", profile.model_name, input.dump(), 0.0, base_seed_, "");
    std::string raw;
    if (auto hit = cache_.lookup(key)) {
        raw = *hit;
    } else {
        raw = transport_entail(profile, claim, summary);
        cache_.store(key, "entail", profile.model_name,
                     digest::sha256_hex(input.dump()), raw);
    }
    return binarize_verdict(raw);
}

}  // namespace csm
