#include "csm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "csm/analysis.hpp"
#include "csm/digest.hpp"
#include "csm/errors.hpp"
#include "csm/gateway.hpp"
#include "csm/io.hpp"
#include "csm/metrics.hpp"
#include "csm/stages.hpp"
#include "csm/text.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace csm::pipeline {

namespace {

constexpr const char* kOverridesFile = "review/merge_overrides.json";
constexpr const char* kReviewReport = "review/cluster_report.txt";
constexpr const char* kIngestPrefix = "ingest:";

std::ostream& out(const Options& options) {
    return options.log ? *options.log : std::cout;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct LockGuard {
    RunStore& store;
    explicit LockGuard(RunStore& s) : store(s) { store.acquire_lock(); }
    ~LockGuard() { store.release_lock(); }
};

std::size_t stage_index(const std::string& stage) {
    const auto& order = stage_order();
    for (std::size_t i = 0; i < order.size(); ++i)
        if (order[i] == stage) return i;
    throw ValidationError("unknown stage: " + stage);
}

std::string prompt_file(const RunConfig& config) {
    return "prompts/" + config.summarization_prompt + ".txt";
}

const std::string& summarization_template(const RunConfig& config,
                                          const stages::PromptSet& prompts) {
    if (config.summarization_prompt == "summarization-meetings")
        return prompts.summarization_meetings;
    if (config.summarization_prompt == "summarization")
        return prompts.summarization;
    throw ValidationError("unknown summarization prompt: " +
                          config.summarization_prompt);
}

// Distinct summarizer ids actually present in summaries.jsonl; this is the
// source of truth downstream so ingested pseudo-backends flow through.
std::vector<std::string> summary_backends(const std::vector<SummaryRecord>& s) {
    std::set<std::string> ids;
    for (const auto& rec : s) ids.insert(rec.backend_id);
    return {ids.begin(), ids.end()};
}

int replicate_count(const std::vector<SummaryRecord>& summaries,
                    const std::string& backend_id) {
    int max_rep = -1;
    for (const auto& s : summaries)
        if (s.backend_id == backend_id) max_rep = std::max(max_rep, s.replicate);
    return max_rep + 1;
}

std::vector<std::string> list_dir(const RunStore& store,
                                  const std::string& sub) {
    std::vector<std::string> files;
    if (!fs::is_directory(store.path(sub))) return files;
    for (const auto& entry : fs::directory_iterator(fs::path(store.path(sub))))
        files.push_back(sub + "/" + entry.path().filename().string());
    std::sort(files.begin(), files.end());
    return files;
}

// Per-stage input files (relative to the run dir), the basis of the
// staleness digests.
std::vector<std::string> input_files(const std::string& stage,
                                     const RunStore& store,
                                     const RunConfig& config) {
    if (stage == "summarize")
        return {"config.snapshot.json", "corpus.jsonl", prompt_file(config)};
    if (stage == "qgen") return {"summaries.jsonl", "prompts/qg.txt"};
    if (stage == "cluster") return {"questions.jsonl"};
    if (stage == "review-apply")
        return {"clusters.jsonl", "embeddings.jsonl", kOverridesFile};
    if (stage == "answer")
        return {"clusters_final.jsonl", "corpus.jsonl", "prompts/qa.txt"};
    if (stage == "claims") return {"answers.jsonl", "prompts/claim-splitting.txt"};
    if (stage == "entail") return {"claims.jsonl", "summaries.jsonl"};
    if (stage == "build")
        return {"verdicts.jsonl", "answers_final.jsonl", "clusters_final.jsonl",
                "corpus.jsonl"};
    if (stage == "introspect")
        return {"clusters_final.jsonl", "prompts/introspection.txt"};
    if (stage == "metrics")
        return {"summaries.jsonl", "verdicts.jsonl", "claims.jsonl",
                "answers_final.jsonl", "csm/doc_csms.jsonl"};
    if (stage == "report") {
        std::vector<std::string> files = {"clusters_final.jsonl",
                                          "verdicts.jsonl", "claims.jsonl",
                                          "ratings_llm.jsonl"};
        auto csm_files = list_dir(store, "csm");
        files.insert(files.end(), csm_files.begin(), csm_files.end());
        std::sort(files.begin(), files.end());
        return files;
    }
    throw ValidationError("unknown stage: " + stage);
}

std::vector<std::string> output_files(const std::string& stage,
                                      const RunStore& store) {
    if (stage == "summarize") return {"summaries.jsonl"};
    if (stage == "qgen") return {"questions.jsonl"};
    if (stage == "cluster")
        return {"clusters.jsonl", "embeddings.jsonl", kReviewReport};
    if (stage == "review-apply") return {"clusters_final.jsonl"};
    if (stage == "answer") return {"answers.jsonl"};
    if (stage == "claims") return {"claims.jsonl", "answers_final.jsonl"};
    if (stage == "entail") return {"verdicts.jsonl"};
    if (stage == "build") return list_dir(store, "csm");
    if (stage == "introspect") return {"ratings_llm.jsonl"};
    if (stage == "metrics") return {"metrics/metrics.csv"};
    if (stage == "report") return list_dir(store, "report");
    throw ValidationError("unknown stage: " + stage);
}

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void write_review_report(const RunStore& store,
                         const std::vector<TopicCluster>& clusters,
                         const std::vector<QuestionRecord>& questions) {
    std::map<std::string, const QuestionRecord*> by_id;
    for (const auto& q : questions) by_id[q.question_id] = &q;

    std::map<std::string, std::vector<double>> centroids;
    for (const auto& c : clusters) {
        std::vector<double> mean;
        for (const auto& member : c.member_ids) {
            const auto& e = by_id.at(member)->embedding.value();
            if (mean.empty()) mean.assign(e.size(), 0.0);
            for (std::size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
        }
        for (auto& v : mean) v /= static_cast<double>(c.member_ids.size());
        centroids[c.topic_id] = std::move(mean);
    }

    std::ostringstream report;
    report << "Cluster review\n==============\n\n"
           << "Inspect the clusters below, then write " << kOverridesFile
           << " (an empty JSON object {} accepts them as-is).\n"
           << "Schema: {\"merge_groups\": [[topic_id, ...], ...], "
              "\"representative_choice\": {\"<group index>\": question_id}}\n\n";
    for (const auto& c : clusters) {
        report << c.topic_id << "  (" << c.member_ids.size() << " questions)\n"
               << "  representative: " << c.representative_id << "  "
               << c.representative_text << "\n";
        for (const auto& member : c.member_ids)
            report << "  - " << member << "  " << by_id.at(member)->text << "\n";
        report << "\n";
    }

    report << "Merge candidates (centroid cosine similarity > 0.9)\n";
    bool any = false;
    for (std::size_t i = 0; i < clusters.size(); ++i)
        for (std::size_t j = i + 1; j < clusters.size(); ++j) {
            double sim = cosine_similarity(centroids.at(clusters[i].topic_id),
                                           centroids.at(clusters[j].topic_id));
            if (sim > 0.9) {
                report << "  " << clusters[i].topic_id << " + "
                       << clusters[j].topic_id << "  similarity " << fmt(sim)
                       << "\n";
                any = true;
            }
        }
    if (!any) report << "  (none)\n";
    io::write_file(store.path(kReviewReport), report.str());
}

struct StageContext {
    RunStore& store;
    const RunConfig& config;
    Gateway& gateway;
    const stages::PromptSet& prompts;
    const Options& options;
};

void run_summarize(StageContext& ctx) {
    const auto corpus = ctx.store.load_corpus();
    const auto& tmpl = summarization_template(ctx.config, ctx.prompts);
    std::vector<SummaryRecord> all;
    for (const auto& profile : ctx.config.summarizers) {
        auto records = stages::generate_summaries(
            corpus, ctx.config.budgets, ctx.config.replicates, profile,
            ctx.gateway, tmpl);
        all.insert(all.end(), records.begin(), records.end());
    }
    ctx.store.save_summaries(all);
    out(ctx.options) << "[summarize] " << all.size() << " summaries\n";
}

void run_qgen(StageContext& ctx) {
    const auto corpus = ctx.store.load_corpus();
    const auto summaries = ctx.store.load_summaries();
    const auto backends = summary_backends(summaries);
    std::string ladder = ctx.config.qg_source_backend;
    if (std::find(backends.begin(), backends.end(), ladder) == backends.end())
        ladder = backends.front();
    stages::StageWarnings warnings;
    auto questions = stages::generate_questions(
        corpus, summaries, ladder, ctx.config.questions_per_doc, ctx.config.qg,
        ctx.gateway, ctx.prompts.question_generation, warnings);
    ctx.store.save_questions(questions);
    out(ctx.options) << "[qgen] " << questions.size() << " questions ("
                     << warnings.dropped_question_lines << " lines dropped, "
                     << warnings.skipped_documents << " documents skipped)\n";
}

void run_cluster(StageContext& ctx) {
    auto questions = ctx.store.load_questions(false);
    stages::embed_questions(questions, ctx.config.embed, ctx.gateway);
    ctx.store.save_embeddings(questions);
    auto clusters = stages::cluster_questions(
        questions, ctx.config.min_cluster_size, ctx.config.link_threshold);
    stages::select_representatives(clusters, questions);
    ctx.store.save_clusters("clusters.jsonl", clusters);
    write_review_report(ctx.store, clusters, questions);
    out(ctx.options) << "[cluster] " << clusters.size()
                     << " topics; review report at "
                     << ctx.store.path(kReviewReport) << "\n";
}

void run_review_apply(StageContext& ctx) {
    const auto clusters = ctx.store.load_clusters("clusters.jsonl");
    const auto questions = ctx.store.load_questions(true);
    const auto override_ = stages::MergeOverride::from_json_text(
        io::read_file(ctx.store.path(kOverridesFile)));
    auto merged = stages::apply_merge_overrides(clusters, override_, questions);
    ctx.store.save_clusters("clusters_final.jsonl", merged);
    out(ctx.options) << "[review-apply] " << merged.size()
                     << " topics after overrides\n";
}

void run_answer(StageContext& ctx) {
    const auto corpus = ctx.store.load_corpus();
    const auto topics = ctx.store.load_clusters("clusters_final.jsonl");
    auto answers = stages::answer_questions(corpus, topics, ctx.config.qa,
                                            ctx.gateway,
                                            ctx.prompts.question_answering);
    ctx.store.save_answers("answers.jsonl", answers);
    std::size_t absent = 0;
    for (const auto& a : answers) absent += a.absent() ? 1 : 0;
    out(ctx.options) << "[answer] " << answers.size() << " answers (" << absent
                     << " absent)\n";
}

void run_claims(StageContext& ctx) {
    auto answers = ctx.store.load_answers("answers.jsonl");
    stages::StageWarnings warnings;
    auto claims =
        stages::decompose_claims(answers, ctx.config.claims, ctx.gateway,
                                 ctx.prompts.claim_splitting, warnings);
    ctx.store.save_claims(claims);
    ctx.store.save_answers("answers_final.jsonl", answers);
    out(ctx.options) << "[claims] " << claims.size() << " claims ("
                     << warnings.coerced_answers << " answers coerced to absent)\n";
}

void run_entail(StageContext& ctx) {
    const auto claims = ctx.store.load_claims();
    const auto summaries = ctx.store.load_summaries();
    auto verdicts =
        stages::score_entailments(claims, summaries, ctx.config.nli,
                                  ctx.gateway, ctx.config.nli.max_parallel);
    ctx.store.save_verdicts(verdicts);
    out(ctx.options) << "[entail] " << verdicts.size() << " verdicts\n";
}

void run_build(StageContext& ctx) {
    const auto corpus = ctx.store.load_corpus();
    const auto summaries = ctx.store.load_summaries();
    const auto verdicts = ctx.store.load_verdicts();
    const auto answers = ctx.store.load_answers("answers_final.jsonl");
    const auto topics = ctx.store.load_clusters("clusters_final.jsonl");

    std::set<std::string> all_topics;
    for (const auto& t : topics) all_topics.insert(t.topic_id);
    std::vector<std::string> doc_ids;
    for (const auto& d : corpus) doc_ids.push_back(d.doc_id);
    std::sort(doc_ids.begin(), doc_ids.end());

    std::vector<DocumentCsm> all_doc_csms;
    for (const auto& backend : summary_backends(summaries)) {
        const int replicates = replicate_count(summaries, backend);
        auto bundle = stages::build_csms(verdicts, answers, all_topics, doc_ids,
                                         ctx.config.budgets, backend,
                                         replicates, corpus.size());
        for (auto& [rep, csms] : bundle.doc_csms)
            all_doc_csms.insert(all_doc_csms.end(), csms.begin(), csms.end());
        for (const auto& [rep, corpus_csm] : bundle.corpus_csms)
            ctx.store.save_corpus_csm("csm/corpus_" + backend + "_rep" +
                                          std::to_string(rep) + ".json",
                                      corpus_csm);
        ctx.store.save_corpus_csm("csm/corpus_" + backend + "_mean.json",
                                  bundle.mean_corpus_csm);
    }
    ctx.store.save_doc_csms(all_doc_csms);
    out(ctx.options) << "[build] " << all_doc_csms.size()
                     << " document-level maps\n";
}

void run_introspect(StageContext& ctx) {
    const auto topics = ctx.store.load_clusters("clusters_final.jsonl");
    stages::StageWarnings warnings;
    auto ratings = analysis::elicit_perceived_salience(
        topics, ctx.config.rater, ctx.gateway, ctx.config.introspection_runs,
        ctx.config.base_seed, ctx.prompts.introspection, warnings);
    ctx.store.save_llm_ratings(ratings);
    out(ctx.options) << "[introspect] " << ratings.size() << " ratings ("
                     << warnings.dropped_ratings << " dropped)\n";
}

metrics::ClaimPatterns claim_patterns(const std::vector<ClaimVerdict>& verdicts,
                                      const std::string& backend_id,
                                      int replicate) {
    metrics::ClaimPatterns patterns;
    for (const auto& v : verdicts)
        if (v.backend_id == backend_id && v.replicate == replicate)
            patterns[v.claim_id][v.budget.words] = v.entailed;
    return patterns;
}

void run_metrics(StageContext& ctx) {
    const auto summaries = ctx.store.load_summaries();
    const auto verdicts = ctx.store.load_verdicts();
    const auto claims = ctx.store.load_claims();
    const auto answers = ctx.store.load_answers("answers_final.jsonl");
    const auto doc_csms = ctx.store.load_doc_csms();
    const auto backends = summary_backends(summaries);
    const LengthBudget top_budget = ctx.config.budgets.back();

    std::ostringstream csv;
    csv << "metric,backend,budget,replicate,value,n,p_value,flags\n";

    for (const auto& backend : backends)
        for (const auto& budget : ctx.config.budgets) {
            std::vector<double> ratios;
            for (const auto& s : summaries)
                if (s.backend_id == backend && s.budget == budget)
                    ratios.push_back(
                        metrics::target_length_ratio(s.word_count, budget));
            if (ratios.empty()) continue;
            double mean = 0.0;
            for (double r : ratios) mean += r;
            mean /= static_cast<double>(ratios.size());
            std::sort(ratios.begin(), ratios.end());
            double median = ratios.size() % 2 == 1
                                ? ratios[ratios.size() / 2]
                                : 0.5 * (ratios[ratios.size() / 2 - 1] +
                                         ratios[ratios.size() / 2]);
            csv << "tlr_mean," << backend << "," << budget.words << ",,"
                << fmt(mean) << "," << ratios.size() << ",,\n";
            csv << "tlr_median," << backend << "," << budget.words << ",,"
                << fmt(median) << "," << ratios.size() << ",,\n";
        }

    for (const auto& backend : backends) {
        const int replicates = replicate_count(summaries, backend);
        for (int r = 0; r < replicates; ++r) {
            auto result = metrics::incremental_consistency(
                claim_patterns(verdicts, backend, r), ctx.config.budgets);
            csv << "incremental_consistency," << backend << ",," << r << ","
                << fmt(result.ic) << "," << result.entailed_claims << ",,"
                << (result.vacuous ? "vacuous" : "") << "\n";
        }
    }

    for (const auto& backend : backends) {
        const int replicates = replicate_count(summaries, backend);
        if (replicates < 2) continue;
        for (const auto& budget : ctx.config.budgets) {
            std::vector<std::vector<int>> vectors;
            for (int r = 0; r < replicates; ++r)
                vectors.push_back(metrics::claim_inclusion_vector(
                                      claims, verdicts, backend, budget, r)
                                      .bits);
            csv << "self_agreement," << backend << "," << budget.words << ",,"
                << fmt(metrics::self_agreement(vectors)) << ","
                << vectors.front().size() << ",,\n";
        }
    }

    for (const auto& backend : backends) {
        std::vector<DocumentCsm> rep0;
        for (const auto& c : doc_csms)
            if (c.backend_id == backend && c.replicate == 0) rep0.push_back(c);
        auto corr = metrics::answer_length_salience_correlation(answers, rep0,
                                                                top_budget);
        csv << "answer_length_rho," << backend << "," << top_budget.words
            << ",0," << (corr.rho ? fmt(*corr.rho) : "nan") << "," << corr.n
            << "," << (corr.p_value ? fmt(*corr.p_value) : "") << ","
            << (corr.rho ? "" : "undefined") << "\n";
    }

    io::write_file(ctx.store.path("metrics/metrics.csv"), csv.str());
    out(ctx.options) << "[metrics] metrics/metrics.csv written\n";
}

// Topics every row of every rating source covers; ρ is only computed on a
// shared topic universe.
std::vector<std::string> common_topics(
    const std::vector<std::string>& all_topics,
    const std::vector<std::map<std::string, double>*>& sources) {
    std::vector<std::string> common;
    for (const auto& topic : all_topics) {
        bool everywhere = true;
        for (const auto* src : sources)
            if (!src->count(topic)) {
                everywhere = false;
                break;
            }
        if (everywhere) common.push_back(topic);
    }
    return common;
}

void run_report(StageContext& ctx) {
    const auto topics = ctx.store.load_clusters("clusters_final.jsonl");
    const auto summaries = ctx.store.load_summaries();
    const auto verdicts = ctx.store.load_verdicts();
    const auto claims = ctx.store.load_claims();
    const auto backends = summary_backends(summaries);
    const auto topic_order = analysis::sorted_topic_ids(topics);
    const auto weights = metrics::make_weights(
        metrics::parse_weight_scheme(ctx.config.aggregation_scheme),
        ctx.config.budgets);
    const int top_words = ctx.config.budgets.back().words;

    analysis::ReportInputs inputs;
    inputs.budgets = ctx.config.budgets;
    inputs.weights = weights;
    for (const auto& t : topics)
        inputs.topic_questions[t.topic_id] = t.representative_text;

    // Observed salience: one row per (backend, replicate) over the replicate's
    // corpus CSM, at the top budget or as the weighted aggregate.
    std::map<std::string, std::vector<std::map<std::string, double>>> observed_raw;
    for (const auto& backend : backends) {
        inputs.corpus_csms[backend] =
            ctx.store.load_corpus_csm("csm/corpus_" + backend + "_mean.json");
        const int replicates = replicate_count(summaries, backend);
        for (int r = 0; r < replicates; ++r) {
            const auto csm = ctx.store.load_corpus_csm(
                "csm/corpus_" + backend + "_rep" + std::to_string(r) + ".json");
            std::map<std::string, double> row;
            for (const auto& topic : topic_order) {
                std::map<int, double> cells;
                for (const auto& b : ctx.config.budgets) {
                    auto it = csm.entries.find({topic, b.words});
                    if (it != csm.entries.end()) cells[b.words] = it->second;
                }
                if (cells.size() != ctx.config.budgets.size()) continue;
                row[topic] = ctx.config.observed_salience_source == "aggregate"
                                 ? metrics::aggregate_salience(cells, weights)
                                 : cells.at(top_words);
            }
            observed_raw[backend].push_back(std::move(row));
        }
    }

    // Perceived salience: one row per introspection run.
    std::map<std::string, std::vector<std::map<std::string, double>>> perceived_raw;
    for (const auto& rating : ctx.store.load_llm_ratings())
        if (rating.rater_kind == SalienceRating::Kind::llm) {
            auto& rows = perceived_raw[ctx.config.rater.backend_id];
            if (rows.size() <= static_cast<std::size_t>(rating.run_index))
                rows.resize(rating.run_index + 1);
            rows[rating.run_index][rating.topic_id] = rating.rating;
        }

    std::vector<std::map<std::string, double>> human_raw;
    if (ctx.config.human_ratings_path) {
        std::set<std::string> known(topic_order.begin(), topic_order.end());
        std::map<std::string, std::map<std::string, double>> by_rater;
        for (const auto& r : analysis::ingest_human_ratings(
                 io::read_file(*ctx.config.human_ratings_path), known))
            by_rater[r.rater_id][r.topic_id] = r.rating;
        for (auto& [rater, row] : by_rater) human_raw.push_back(std::move(row));
    }

    std::vector<std::map<std::string, double>*> sources;
    for (auto& [backend, rows] : observed_raw)
        for (auto& row : rows) sources.push_back(&row);
    for (auto& [backend, rows] : perceived_raw)
        for (auto& row : rows) sources.push_back(&row);
    for (auto& row : human_raw) sources.push_back(&row);
    const auto shared = common_topics(topic_order, sources);

    auto to_matrix = [&](const std::vector<std::map<std::string, double>>& rows) {
        analysis::RatingMatrix m;
        for (const auto& row : rows) {
            std::vector<double> v;
            for (const auto& topic : shared) v.push_back(row.at(topic));
            m.push_back(std::move(v));
        }
        return m;
    };
    std::map<std::string, analysis::RatingMatrix> observed, perceived;
    for (const auto& [backend, rows] : observed_raw)
        observed[backend] = to_matrix(rows);
    for (const auto& [backend, rows] : perceived_raw)
        perceived[backend] = to_matrix(rows);
    inputs.alignment = analysis::alignment_report(
        ctx.config.run_id, perceived, observed, to_matrix(human_raw));

    // Model-model agreement over claim-inclusion vectors.
    std::map<std::string, std::map<int, std::map<int, std::vector<int>>>> bits;
    for (const auto& backend : backends) {
        const int replicates = replicate_count(summaries, backend);
        for (const auto& budget : ctx.config.budgets)
            for (int r = 0; r < replicates; ++r)
                bits[backend][budget.words][r] =
                    metrics::claim_inclusion_vector(claims, verdicts, backend,
                                                    budget, r)
                        .bits;
    }
    inputs.agreement = analysis::build_agreement_matrices(bits, ctx.config.budgets);

    analysis::render_reports(inputs, ctx.store.path("report"));
    out(ctx.options) << "[report] bundle written to "
                     << ctx.store.path("report") << "\n";
}

void execute_stage(const std::string& stage, StageContext& ctx) {
    if (stage == "summarize") return run_summarize(ctx);
    if (stage == "qgen") return run_qgen(ctx);
    if (stage == "cluster") return run_cluster(ctx);
    if (stage == "review-apply") return run_review_apply(ctx);
    if (stage == "answer") return run_answer(ctx);
    if (stage == "claims") return run_claims(ctx);
    if (stage == "entail") return run_entail(ctx);
    if (stage == "build") return run_build(ctx);
    if (stage == "introspect") return run_introspect(ctx);
    if (stage == "metrics") return run_metrics(ctx);
    if (stage == "report") return run_report(ctx);
    throw ValidationError("unknown stage: " + stage);
}

RunOutcome run_one_stage(const std::string& stage, RunStore& store,
                         const RunConfig& config, Gateway& gateway,
                         const stages::PromptSet& prompts,
                         const Options& options) {
    const auto& order = stage_order();
    const std::size_t idx = stage_index(stage);
    auto manifest = store.load_manifest();

    // Upstream gate: every earlier stage must be complete, and its recorded
    // digests must still describe what is on disk.
    for (std::size_t i = 0; i < idx; ++i) {
        const auto it = manifest.find(order[i]);
        if (it == manifest.end() || it->second.status != "complete")
            throw DependencyError("stage '" + stage + "' requires '" +
                                  order[i] + "' to be complete; run it first");
        if (store.output_digest(output_files(order[i], store)) !=
            it->second.output_digest)
            throw DependencyError("outputs of stage '" + order[i] +
                                  "' changed outside the pipeline; re-run it");
        if (!it->second.input_digest.starts_with(kIngestPrefix) &&
            store.output_digest(input_files(order[i], store, config)) !=
                it->second.input_digest)
            throw DependencyError("stage '" + order[i] +
                                  "' is stale (its inputs changed); re-run it "
                                  "before '" + stage + "'");
    }

    if (stage == "review-apply" &&
        !fs::exists(store.path(kOverridesFile)))
        throw DependencyError(
            "review gate: create " + store.path(kOverridesFile) +
            " (an empty JSON object {} accepts the clusters) after inspecting " +
            store.path(kReviewReport));

    const std::string in_digest =
        store.output_digest(input_files(stage, store, config));
    const auto existing = manifest.find(stage);
    if (existing != manifest.end() && existing->second.status == "complete" &&
        existing->second.input_digest == in_digest) {
        bool outputs_intact = false;
        try {
            outputs_intact = store.output_digest(output_files(stage, store)) ==
                             existing->second.output_digest;
        } catch (const Error&) {
            // Missing or unreadable outputs: fall through and regenerate.
        }
        if (outputs_intact) {
            out(options) << "[" << stage << "] up to date\n";
            return RunOutcome::up_to_date;
        }
    }

    StageContext ctx{store, config, gateway, prompts, options};
    execute_stage(stage, ctx);

    StageManifest record;
    record.status = "complete";
    record.input_digest = in_digest;
    record.output_digest = store.output_digest(output_files(stage, store));
    manifest[stage] = record;
    store.save_manifest(manifest);
    return RunOutcome::completed;
}

std::vector<DocumentRecord> ingest_corpus(const std::string& corpus_path) {
    std::vector<DocumentRecord> docs;
    const fs::path path(corpus_path);
    if (!fs::exists(path))
        throw ValidationError("corpus not found: " + corpus_path);

    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.path().extension() == ".txt") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            DocumentRecord d;
            d.doc_id = f.stem().string();
            d.text = io::read_file(f.string());
            d.word_count = text::word_count(d.text);
            docs.push_back(std::move(d));
        }
    } else {
        std::istringstream in(io::read_file(corpus_path));
        std::string line;
        std::size_t index = 0;
        std::vector<json> rows;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("text"))
                throw ValidationError(
                    "corpus line " + std::to_string(rows.size() + 1) +
                    " is not a JSON object with a \"text\" field");
            rows.push_back(std::move(j));
        }
        char buf[32];
        for (const auto& j : rows) {
            DocumentRecord d;
            if (j.contains("doc_id")) {
                d.doc_id = j["doc_id"].get<std::string>();
            } else {
                std::snprintf(buf, sizeof(buf), "d%03zu", index);
                d.doc_id = buf;
            }
            ++index;
            d.text = j["text"].get<std::string>();
            d.word_count = text::word_count(d.text);
            docs.push_back(std::move(d));
        }
    }

    if (docs.empty()) throw ValidationError("corpus is empty: " + corpus_path);
    std::map<std::string, int> counts;
    for (const auto& d : docs) ++counts[d.doc_id];
    std::string dups;
    for (const auto& [id, n] : counts)
        if (n > 1) dups += (dups.empty() ? "" : ", ") + id;
    if (!dups.empty())
        throw ValidationError("duplicate doc_ids in corpus: " + dups);
    std::sort(docs.begin(), docs.end(),
              [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    return docs;
}

std::map<std::string, StageManifest> pending_manifest() {
    std::map<std::string, StageManifest> manifest;
    for (const auto& stage : stage_order()) manifest[stage] = StageManifest{};
    return manifest;
}

}  // namespace

std::filesystem::path resolve_cache_dir(const Options& options) {
    if (!options.cache_dir.empty()) return options.cache_dir;
    if (const char* env = std::getenv("CSM_CACHE_DIR")) return env;
    return "cache";
}

void cmd_init(const std::string& config_path, const Options& options,
              bool force) {
    RunConfig config = RunConfig::from_json_text(io::read_file(config_path));
    RunStore store(options.runs_root, config.run_id);
    if (store.exists()) {
        if (!force)
            throw ValidationError("run '" + config.run_id +
                                  "' already exists (use --force to replace)");
        fs::remove_all(store.dir());
    }

    const auto docs = ingest_corpus(config.corpus_path);

    // Snapshot prompts into the run dir so the run is self-contained.
    const fs::path src_prompts(config.prompts_dir);
    if (!fs::is_directory(src_prompts))
        throw ValidationError("prompts dir not found: " + config.prompts_dir);
    fs::create_directories(store.dir() / "prompts");
    for (const auto& entry : fs::directory_iterator(src_prompts))
        fs::copy_file(entry.path(),
                      store.dir() / "prompts" / entry.path().filename());
    config.prompts_dir = "prompts";

    store.save_corpus(docs);
    store.save_config(config);
    store.save_manifest(pending_manifest());
    fs::create_directories(store.dir() / "review");
    out(options) << "initialized run '" << config.run_id << "' with "
                 << docs.size() << " documents at " << store.dir().string()
                 << "\n";
}

RunOutcome cmd_run(const std::string& run_id, const std::string& stage,
                   const Options& options) {
    RunStore store(options.runs_root, run_id);
    if (!store.exists())
        throw ValidationError("unknown run: " + run_id);
    const RunConfig config = store.load_config();
    Gateway gateway(resolve_cache_dir(options), config.base_seed);
    const auto prompts = stages::PromptSet::load(store.path("prompts"));

    LockGuard lock(store);
    if (stage != "all")
        return run_one_stage(stage, store, config, gateway, prompts, options);

    RunOutcome last = RunOutcome::up_to_date;
    for (const auto& s : stage_order()) {
        if (s == "review-apply" && !fs::exists(store.path(kOverridesFile))) {
            out(options) << "halted for manual review: inspect "
                         << store.path(kReviewReport) << " and write "
                         << store.path(kOverridesFile)
                         << " ({} to accept), then re-run\n";
            return RunOutcome::halted_for_review;
        }
        last = run_one_stage(s, store, config, gateway, prompts, options);
    }
    return last;
}

void cmd_ingest_summaries(const std::string& run_id, const std::string& file,
                          double tolerance, const Options& options) {
    RunStore store(options.runs_root, run_id);
    if (!store.exists()) throw ValidationError("unknown run: " + run_id);
    const RunConfig config = store.load_config();
    LockGuard lock(store);

    std::set<std::string> known;
    for (const auto& d : store.load_corpus()) known.insert(d.doc_id);

    const std::string body = io::read_file(file);
    std::vector<std::pair<std::string, std::string>> rows;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("doc_id"))
            throw ValidationError("ingest line " +
                                  std::to_string(rows.size() + 1) +
                                  " is not a JSON object with doc_id");
        const std::string doc_id = j["doc_id"].get<std::string>();
        if (!known.count(doc_id))
            throw ValidationError("ingested summary references unknown doc_id " +
                                  doc_id);
        const std::string text = j.contains("summary")
                                     ? j["summary"].get<std::string>()
                                     : j.at("text").get<std::string>();
        rows.emplace_back(doc_id, text);
    }

    auto result = stages::bucket_ingested_summaries(rows, config.budgets,
                                                    tolerance, "ingested");
    store.save_summaries(result.accepted);

    auto manifest = store.load_manifest();
    StageManifest record;
    record.status = "complete";
    record.input_digest = std::string(kIngestPrefix) + digest::sha256_hex(body);
    record.output_digest = store.output_digest({"summaries.jsonl"});
    manifest["summarize"] = record;
    store.save_manifest(manifest);
    out(options) << "[ingest] accepted " << result.accepted.size()
                 << " summaries, skipped " << result.skipped << "\n";
}

void cmd_sweep_temperature(const std::string& run_id,
                           const std::vector<double>& temperatures,
                           const Options& options) {
    if (temperatures.empty())
        throw ValidationError("temperature sweep needs at least one value");
    RunStore store(options.runs_root, run_id);
    if (!store.exists()) throw ValidationError("unknown run: " + run_id);
    const RunConfig config = store.load_config();
    LockGuard lock(store);

    const auto manifest = store.load_manifest();
    for (const char* needed : {"summarize", "qgen", "cluster", "review-apply",
                               "answer", "claims"}) {
        auto it = manifest.find(needed);
        if (it == manifest.end() || it->second.status != "complete")
            throw DependencyError(std::string("temperature sweep requires stage '") +
                                  needed + "' to be complete");
    }

    const auto corpus = store.load_corpus();
    const auto claims = store.load_claims();
    Gateway gateway(resolve_cache_dir(options), config.base_seed);
    const auto prompts = stages::PromptSet::load(store.path("prompts"));
    const auto& tmpl = summarization_template(config, prompts);

    std::ostringstream csv;
    csv << "temperature,mean_tlr,length_mad,ic\n";
    for (double temperature : temperatures) {
        std::vector<SummaryRecord> summaries;
        for (auto profile : config.summarizers) {
            profile.temperature = temperature;
            auto records = stages::generate_summaries(
                corpus, config.budgets, config.replicates, profile, gateway,
                tmpl);
            summaries.insert(summaries.end(), records.begin(), records.end());
        }
        auto verdicts = stages::score_entailments(
            claims, summaries, config.nli, gateway, config.nli.max_parallel);

        double tlr_sum = 0.0;
        for (const auto& s : summaries)
            tlr_sum += metrics::target_length_ratio(s.word_count, s.budget);
        const double mean_tlr = tlr_sum / static_cast<double>(summaries.size());

        // Within-document replicate spread, normalized by the budget.
        std::map<std::tuple<std::string, std::string, int>, std::vector<double>>
            groups;
        for (const auto& s : summaries)
            groups[{s.backend_id, s.doc_id, s.budget.words}].push_back(
                static_cast<double>(s.word_count));
        double mad_sum = 0.0;
        for (const auto& [key, counts] : groups) {
            double mean = 0.0;
            for (double c : counts) mean += c;
            mean /= static_cast<double>(counts.size());
            double mad = 0.0;
            for (double c : counts) mad += std::abs(c - mean);
            mad /= static_cast<double>(counts.size());
            mad_sum += mad / static_cast<double>(std::get<2>(key));
        }
        const double length_mad = mad_sum / static_cast<double>(groups.size());

        double ic_sum = 0.0;
        std::size_t ic_n = 0;
        for (const auto& backend : summary_backends(summaries))
            for (int r = 0; r < config.replicates; ++r) {
                ic_sum += metrics::incremental_consistency(
                              claim_patterns(verdicts, backend, r),
                              config.budgets)
                              .ic;
                ++ic_n;
            }
        const double ic = ic_sum / static_cast<double>(ic_n);

        csv << fmt(temperature) << "," << fmt(mean_tlr) << ","
            << fmt(length_mad) << "," << fmt(ic) << "\n";
    }
    io::write_file(store.path("sweep/sweep.csv"), csv.str());
    out(options) << "[sweep] " << temperatures.size()
                 << " temperatures written to " << store.path("sweep/sweep.csv")
                 << "\n";
}

}  // namespace csm::pipeline
