#include "csm/run_store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csm/digest.hpp"
#include "csm/errors.hpp"
#include "csm/io.hpp"

using json = nlohmann::json;

namespace csm {

namespace {

std::string env_api_key(const std::string& backend_id) {
    std::string var = "CSM_API_KEY_";
    for (char c : backend_id)
        var += std::isalnum(static_cast<unsigned char>(c))
                   ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                   : '_';
    const char* value = std::getenv(var.c_str());
    return value ? value : "";
}

BackendProfile profile_from_json(const json& j) {
    BackendProfile p;
    p.backend_id = j.at("backend_id").get<std::string>();
    p.kind = parse_backend_kind(j.at("kind").get<std::string>());
    p.endpoint = j.value("endpoint", "");
    p.model_name = j.at("model_name").get<std::string>();
    p.temperature = j.value("temperature", 0.3);
    p.max_output_tokens = j.value("max_output_tokens", 1024);
    p.request_timeout_seconds = j.value("request_timeout_seconds", 60.0);
    p.max_parallel = j.value("max_parallel", 4);
    if (p.max_parallel < 1)
        throw ValidationError("max_parallel must be >= 1 for " + p.backend_id);
    if (p.temperature < 0.0)
        throw ValidationError("temperature must be >= 0 for " + p.backend_id);
    if (p.kind != BackendKind::mock && p.endpoint.empty())
        throw ValidationError("backend " + p.backend_id + " needs an endpoint");
    p.api_key = env_api_key(p.backend_id);
    return p;
}

json profile_to_json(const BackendProfile& p) {
    return json{{"backend_id", p.backend_id},
                {"kind", backend_kind_name(p.kind)},
                {"endpoint", p.endpoint},
                {"model_name", p.model_name},
                {"temperature", p.temperature},
                {"max_output_tokens", p.max_output_tokens},
                {"request_timeout_seconds", p.request_timeout_seconds},
                {"max_parallel", p.max_parallel}};
}

template <typename T>
std::vector<T> load_jsonl(const std::string& path,
                          T (*from_json)(const json&)) {
    std::vector<T> out;
    std::istringstream in(io::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ValidationError("corrupt JSON line in " + path);
        out.push_back(from_json(j));
    }
    return out;
}

template <typename T, typename Fn>
void save_jsonl(const std::string& path, const std::vector<T>& rows, Fn to_json) {
    std::string body;
    for (const auto& r : rows) body += to_json(r).dump() + "\n";
    io::write_file(path, body);
}

DocumentRecord doc_from_json(const json& j) {
    return DocumentRecord{j.at("doc_id").get<std::string>(),
                          j.at("text").get<std::string>(),
                          j.at("word_count").get<std::size_t>()};
}

SummaryRecord summary_from_json(const json& j) {
    SummaryRecord s;
    s.doc_id = j.at("doc_id").get<std::string>();
    s.budget = LengthBudget{j.at("budget").get<int>()};
    s.replicate = j.at("replicate").get<int>();
    s.backend_id = j.at("backend_id").get<std::string>();
    s.text = j.at("text").get<std::string>();
    s.word_count = j.at("word_count").get<std::size_t>();
    return s;
}

QuestionRecord question_from_json(const json& j) {
    QuestionRecord q;
    q.question_id = j.at("question_id").get<std::string>();
    q.doc_id = j.at("doc_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    return q;
}

ReferenceAnswer answer_from_json(const json& j) {
    ReferenceAnswer a;
    a.doc_id = j.at("doc_id").get<std::string>();
    a.topic_id = j.at("topic_id").get<std::string>();
    if (!j.at("text").is_null()) a.text = j.at("text").get<std::string>();
    a.word_count = j.at("word_count").get<std::size_t>();
    return a;
}

AtomicClaim claim_from_json(const json& j) {
    AtomicClaim c;
    c.claim_id = j.at("claim_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.topic_id = j.at("topic_id").get<std::string>();
    c.ordinal = j.at("ordinal").get<int>();
    c.text = j.at("text").get<std::string>();
    return c;
}

ClaimVerdict verdict_from_json(const json& j) {
    ClaimVerdict v;
    v.claim_id = j.at("claim_id").get<std::string>();
    v.doc_id = j.at("doc_id").get<std::string>();
    v.topic_id = j.at("topic_id").get<std::string>();
    v.budget = LengthBudget{j.at("budget").get<int>()};
    v.replicate = j.at("replicate").get<int>();
    v.backend_id = j.at("backend_id").get<std::string>();
    v.entailed = j.at("entailed").get<int>();
    return v;
}

SalienceRating rating_from_json(const json& j) {
    SalienceRating r;
    r.rater_id = j.at("rater_id").get<std::string>();
    r.rater_kind = j.at("rater_kind").get<std::string>() == "human"
                       ? SalienceRating::Kind::human
                       : SalienceRating::Kind::llm;
    r.topic_id = j.at("topic_id").get<std::string>();
    r.rating = j.at("rating").get<int>();
    r.rationale = j.at("rationale").get<std::string>();
    r.run_index = j.at("run_index").get<int>();
    return r;
}

TopicCluster cluster_from_json(const json& j) {
    TopicCluster c;
    c.topic_id = j.at("topic_id").get<std::string>();
    for (const auto& m : j.at("member_ids")) c.member_ids.insert(m.get<std::string>());
    c.representative_id = j.at("representative_id").get<std::string>();
    c.representative_text = j.at("representative_text").get<std::string>();
    return c;
}

DocumentCsm doc_csm_from_json(const json& j) {
    DocumentCsm c;
    c.doc_id = j.at("doc_id").get<std::string>();
    c.backend_id = j.at("backend_id").get<std::string>();
    c.replicate = j.at("replicate").get<int>();
    for (const auto& e : j.at("entries"))
        c.entries[{e.at("topic").get<std::string>(), e.at("budget").get<int>()}] =
            e.at("value").get<double>();
    for (const auto& t : j.at("absent_topics"))
        c.absent_topics.insert(t.get<std::string>());
    return c;
}

json entries_to_json(const std::map<CsmKey, double>& entries) {
    json arr = json::array();
    for (const auto& [key, value] : entries)
        arr.push_back(json{{"topic", key.first},
                           {"budget", key.second},
                           {"value", value}});
    return arr;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config is not valid JSON");
    RunConfig c;
    c.run_id = j.at("run_id").get<std::string>();
    c.corpus_path = j.at("corpus_path").get<std::string>();
    for (const auto& b : j.at("budgets"))
        c.budgets.push_back(LengthBudget{b.get<int>()});
    c.replicates = j.value("replicates", 5);
    c.base_seed = j.value("base_seed", 0L);
    c.questions_per_doc = j.value("questions_per_doc", 8);
    c.min_cluster_size = j.value("min_cluster_size", std::size_t{15});
    c.link_threshold = j.value("link_threshold", 0.35);
    c.aggregation_scheme = j.value("aggregation_scheme", "uniform");
    c.prompts_dir = j.value("prompts_dir", "prompts");
    c.summarization_prompt = j.value("summarization_prompt", "summarization");
    c.introspection_runs = j.value("introspection_runs", 5);
    c.observed_salience_source =
        j.value("observed_salience_source", "top_budget");
    if (j.contains("human_ratings_path") && !j["human_ratings_path"].is_null())
        c.human_ratings_path = j["human_ratings_path"].get<std::string>();

    const json& backends = j.at("backends");
    for (const auto& p : backends.at("summarizers"))
        c.summarizers.push_back(profile_from_json(p));
    c.qg = profile_from_json(backends.at("qg"));
    c.embed = profile_from_json(backends.at("embed"));
    c.qa = profile_from_json(backends.at("qa"));
    c.claims = profile_from_json(backends.at("claims"));
    c.nli = profile_from_json(backends.at("nli"));
    c.rater = profile_from_json(backends.at("rater"));
    c.qg_source_backend =
        j.value("qg_source_backend", c.summarizers.empty()
                                         ? std::string{}
                                         : c.summarizers.front().backend_id);
    c.validate();
    return c;
}

json RunConfig::to_json() const {
    json budgets = json::array();
    for (const auto& b : this->budgets) budgets.push_back(b.words);
    json summarizers = json::array();
    for (const auto& p : this->summarizers) summarizers.push_back(profile_to_json(p));
    json j{{"run_id", run_id},
           {"corpus_path", corpus_path},
           {"budgets", budgets},
           {"replicates", replicates},
           {"base_seed", base_seed},
           {"questions_per_doc", questions_per_doc},
           {"min_cluster_size", min_cluster_size},
           {"link_threshold", link_threshold},
           {"aggregation_scheme", aggregation_scheme},
           {"qg_source_backend", qg_source_backend},
           {"prompts_dir", prompts_dir},
           {"summarization_prompt", summarization_prompt},
           {"introspection_runs", introspection_runs},
           {"observed_salience_source", observed_salience_source},
           {"backends",
            json{{"summarizers", summarizers},
                 {"qg", profile_to_json(qg)},
                 {"embed", profile_to_json(embed)},
                 {"qa", profile_to_json(qa)},
                 {"claims", profile_to_json(claims)},
                 {"nli", profile_to_json(nli)},
                 {"rater", profile_to_json(rater)}}}};
    if (human_ratings_path) j["human_ratings_path"] = *human_ratings_path;
    return j;
}

void RunConfig::validate() const {
    if (run_id.empty()) throw ValidationError("run_id must be non-empty");
    validate_budgets(budgets);
    if (replicates < 1) throw ValidationError("replicates must be >= 1");
    if (summarizers.empty())
        throw ValidationError("at least one summarizer backend is required");
    std::set<std::string> ids;
    for (const auto& p : summarizers)
        if (!ids.insert(p.backend_id).second)
            throw ValidationError("duplicate summarizer backend_id " +
                                  p.backend_id);
    if (!ids.count(qg_source_backend))
        throw ValidationError("qg_source_backend " + qg_source_backend +
                              " is not a configured summarizer");
    if (observed_salience_source != "top_budget" &&
        observed_salience_source != "aggregate")
        throw ValidationError("observed_salience_source must be top_budget or aggregate");
    if (introspection_runs < 1)
        throw ValidationError("introspection_runs must be >= 1");
}

const BackendProfile& RunConfig::summarizer(const std::string& backend_id) const {
    for (const auto& p : summarizers)
        if (p.backend_id == backend_id) return p;
    throw ValidationError("unknown summarizer backend " + backend_id);
}

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> kOrder = {
        "summarize", "qgen",   "cluster",    "review-apply",
        "answer",    "claims", "entail",     "build",
        "introspect", "metrics", "report"};
    return kOrder;
}

RunStore::RunStore(std::filesystem::path runs_root, std::string run_id)
    : dir_(runs_root / run_id) {}

std::string RunStore::path(const std::string& relative) const {
    return (dir_ / relative).string();
}

bool RunStore::exists() const { return std::filesystem::exists(dir_); }

void RunStore::acquire_lock() {
    const auto lock = dir_ / ".lock";
    if (std::filesystem::exists(lock))
        throw DependencyError("run directory is locked by another writer: " +
                              lock.string());
    io::write_file(lock.string(), "locked\n");
    locked_ = true;
}

void RunStore::release_lock() {
    if (!locked_) return;
    std::filesystem::remove(dir_ / ".lock");
    locked_ = false;
}

RunConfig RunStore::load_config() const {
    return RunConfig::from_json_text(io::read_file(path("config.snapshot.json")));
}

void RunStore::save_config(const RunConfig& config) const {
    io::write_file(path("config.snapshot.json"), config.to_json().dump(2) + "\n");
}

std::map<std::string, StageManifest> RunStore::load_manifest() const {
    json j = json::parse(io::read_file(path("manifest.json")), nullptr, false);
    if (j.is_discarded()) throw ValidationError("corrupt manifest.json");
    std::map<std::string, StageManifest> out;
    for (const auto& [stage, entry] : j.items()) {
        StageManifest m;
        m.status = entry.at("status").get<std::string>();
        m.input_digest = entry.at("input_digest").get<std::string>();
        m.output_digest = entry.at("output_digest").get<std::string>();
        out[stage] = m;
    }
    return out;
}

void RunStore::save_manifest(
    const std::map<std::string, StageManifest>& manifest) const {
    json j = json::object();
    for (const auto& [stage, m] : manifest)
        j[stage] = json{{"status", m.status},
                        {"input_digest", m.input_digest},
                        {"output_digest", m.output_digest}};
    io::write_file(path("manifest.json"), j.dump(2) + "\n");
}

std::string RunStore::output_digest(
    const std::vector<std::string>& relative_paths) const {
    std::string combined;
    for (const auto& rel : relative_paths)
        combined += rel + ":" + digest::sha256_file(path(rel)) + "\n";
    return digest::sha256_hex(combined);
}

std::vector<DocumentRecord> RunStore::load_corpus() const {
    return load_jsonl<DocumentRecord>(path("corpus.jsonl"), doc_from_json);
}

void RunStore::save_corpus(const std::vector<DocumentRecord>& docs) const {
    save_jsonl(path("corpus.jsonl"), docs, [](const DocumentRecord& d) {
        return json{{"doc_id", d.doc_id},
                    {"text", d.text},
                    {"word_count", d.word_count}};
    });
}

std::vector<SummaryRecord> RunStore::load_summaries() const {
    return load_jsonl<SummaryRecord>(path("summaries.jsonl"), summary_from_json);
}

void RunStore::save_summaries(const std::vector<SummaryRecord>& records) const {
    save_jsonl(path("summaries.jsonl"), records, [](const SummaryRecord& s) {
        return json{{"doc_id", s.doc_id},       {"budget", s.budget.words},
                    {"replicate", s.replicate}, {"backend_id", s.backend_id},
                    {"text", s.text},           {"word_count", s.word_count}};
    });
}

std::vector<QuestionRecord> RunStore::load_questions(bool with_embeddings) const {
    auto questions =
        load_jsonl<QuestionRecord>(path("questions.jsonl"), question_from_json);
    if (with_embeddings) {
        std::map<std::string, std::vector<double>> vectors;
        std::istringstream in(io::read_file(path("embeddings.jsonl")));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            vectors[j.at("question_id").get<std::string>()] =
                j.at("embedding").get<std::vector<double>>();
        }
        for (auto& q : questions) {
            auto it = vectors.find(q.question_id);
            if (it == vectors.end())
                throw ValidationError("missing embedding for " + q.question_id);
            q.embedding = it->second;
        }
    }
    return questions;
}

void RunStore::save_questions(const std::vector<QuestionRecord>& questions) const {
    save_jsonl(path("questions.jsonl"), questions, [](const QuestionRecord& q) {
        return json{{"question_id", q.question_id},
                    {"doc_id", q.doc_id},
                    {"text", q.text}};
    });
}

void RunStore::save_embeddings(const std::vector<QuestionRecord>& questions) const {
    save_jsonl(path("embeddings.jsonl"), questions, [](const QuestionRecord& q) {
        return json{{"question_id", q.question_id},
                    {"embedding", q.embedding.value()}};
    });
}

std::vector<TopicCluster> RunStore::load_clusters(const std::string& file) const {
    return load_jsonl<TopicCluster>(path(file), cluster_from_json);
}

void RunStore::save_clusters(const std::string& file,
                             const std::vector<TopicCluster>& clusters) const {
    save_jsonl(path(file), clusters, [](const TopicCluster& c) {
        return json{{"topic_id", c.topic_id},
                    {"member_ids", c.member_ids},
                    {"representative_id", c.representative_id},
                    {"representative_text", c.representative_text}};
    });
}

std::vector<ReferenceAnswer> RunStore::load_answers(const std::string& file) const {
    return load_jsonl<ReferenceAnswer>(path(file), answer_from_json);
}

void RunStore::save_answers(const std::string& file,
                            const std::vector<ReferenceAnswer>& answers) const {
    save_jsonl(path(file), answers, [](const ReferenceAnswer& a) {
        return json{{"doc_id", a.doc_id},
                    {"topic_id", a.topic_id},
                    {"text", a.text ? json(*a.text) : json(nullptr)},
                    {"word_count", a.word_count}};
    });
}

std::vector<AtomicClaim> RunStore::load_claims() const {
    return load_jsonl<AtomicClaim>(path("claims.jsonl"), claim_from_json);
}

void RunStore::save_claims(const std::vector<AtomicClaim>& claims) const {
    save_jsonl(path("claims.jsonl"), claims, [](const AtomicClaim& c) {
        return json{{"claim_id", c.claim_id}, {"doc_id", c.doc_id},
                    {"topic_id", c.topic_id}, {"ordinal", c.ordinal},
                    {"text", c.text}};
    });
}

std::vector<ClaimVerdict> RunStore::load_verdicts() const {
    return load_jsonl<ClaimVerdict>(path("verdicts.jsonl"), verdict_from_json);
}

void RunStore::save_verdicts(const std::vector<ClaimVerdict>& verdicts) const {
    save_jsonl(path("verdicts.jsonl"), verdicts, [](const ClaimVerdict& v) {
        return json{{"claim_id", v.claim_id},   {"doc_id", v.doc_id},
                    {"topic_id", v.topic_id},   {"budget", v.budget.words},
                    {"replicate", v.replicate}, {"backend_id", v.backend_id},
                    {"entailed", v.entailed}};
    });
}

std::vector<SalienceRating> RunStore::load_llm_ratings() const {
    return load_jsonl<SalienceRating>(path("ratings_llm.jsonl"), rating_from_json);
}

void RunStore::save_llm_ratings(const std::vector<SalienceRating>& ratings) const {
    save_jsonl(path("ratings_llm.jsonl"), ratings, [](const SalienceRating& r) {
        return json{{"rater_id", r.rater_id},
                    {"rater_kind",
                     r.rater_kind == SalienceRating::Kind::human ? "human" : "llm"},
                    {"topic_id", r.topic_id},
                    {"rating", r.rating},
                    {"rationale", r.rationale},
                    {"run_index", r.run_index}};
    });
}

std::vector<DocumentCsm> RunStore::load_doc_csms() const {
    return load_jsonl<DocumentCsm>(path("csm/doc_csms.jsonl"), doc_csm_from_json);
}

void RunStore::save_doc_csms(const std::vector<DocumentCsm>& csms) const {
    save_jsonl(path("csm/doc_csms.jsonl"), csms, [](const DocumentCsm& c) {
        return json{{"doc_id", c.doc_id},
                    {"backend_id", c.backend_id},
                    {"replicate", c.replicate},
                    {"entries", entries_to_json(c.entries)},
                    {"absent_topics", c.absent_topics}};
    });
}

CorpusCsm RunStore::load_corpus_csm(const std::string& file) const {
    json j = json::parse(io::read_file(path(file)));
    CorpusCsm c;
    c.backend_id = j.at("backend_id").get<std::string>();
    for (const auto& e : j.at("entries"))
        c.entries[{e.at("topic").get<std::string>(), e.at("budget").get<int>()}] =
            e.at("value").get<double>();
    for (const auto& [topic, p] : j.at("prevalence").items())
        c.prevalence[topic] = p.get<double>();
    for (const auto& [topic, s] : j.at("support").items())
        c.support[topic] = s.get<std::size_t>();
    return c;
}

void RunStore::save_corpus_csm(const std::string& file, const CorpusCsm& csm) const {
    json j{{"backend_id", csm.backend_id},
           {"entries", entries_to_json(csm.entries)},
           {"prevalence", csm.prevalence},
           {"support", csm.support}};
    io::write_file(path(file), j.dump(2) + "\n");
}

}  // namespace csm
