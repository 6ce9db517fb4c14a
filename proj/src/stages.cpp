#include "csm/stages.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <regex>

#include "json.hpp"

#include "csm/errors.hpp"
#include "csm/io.hpp"
#include "csm/parallel.hpp"
#include "csm/text.hpp"

using json = nlohmann::json;

namespace csm::stages {

PromptSet PromptSet::load(const std::string& dir) {
    auto path = [&](const char* name) {
        return (std::filesystem::path(dir) / name).string();
    };
    PromptSet p;
    p.summarization = io::read_file(path("summarization.txt"));
    p.summarization_meetings = io::read_file(path("summarization-meetings.txt"));
    p.question_generation = io::read_file(path("qg.txt"));
    p.question_answering = io::read_file(path("qa.txt"));
    p.claim_splitting = io::read_file(path("claim-splitting.txt"));
    p.introspection = io::read_file(path("introspection.txt"));
    return p;
}

MergeOverride MergeOverride::from_json_text(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded())
        throw ValidationError("merge override file is not valid JSON");
    MergeOverride out;
    for (const auto& group : doc.value("merge_groups", json::array())) {
        std::set<std::string> ids;
        for (const auto& id : group) ids.insert(id.get<std::string>());
        if (ids.size() < 2)
            throw ValidationError("merge group must list at least 2 topics");
        out.merge_groups.push_back(std::move(ids));
    }
    if (doc.contains("representative_choice"))
        for (const auto& [idx, qid] : doc["representative_choice"].items())
            out.representative_choice[std::stoul(idx)] = qid.get<std::string>();
    // Groups must be disjoint.
    std::set<std::string> seen;
    for (const auto& g : out.merge_groups)
        for (const auto& id : g)
            if (!seen.insert(id).second)
                throw ValidationError("merge groups overlap on topic " + id);
    return out;
}

std::vector<std::string> parse_list_lines(const std::string& response) {
    static const std::regex kItem(R"(^\s*(?:\d+[.)]|[-*])\s*(.+)$)");
    std::vector<std::string> items;
    for (const auto& line : text::split_lines(response)) {
        std::smatch m;
        if (std::regex_match(line, m, kItem)) {
            std::string item = text::trim(m[1].str());
            if (!item.empty()) items.push_back(std::move(item));
        }
    }
    return items;
}

std::vector<SummaryRecord> generate_summaries(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<LengthBudget>& budgets, int replicates,
    const BackendProfile& profile, Gateway& gateway,
    const std::string& summarization_template) {
    if (corpus.empty()) throw ValidationError("corpus is empty");
    validate_budgets(budgets);
    if (replicates < 1) throw ValidationError("replicates must be >= 1");

    struct Cell {
        const DocumentRecord* doc;
        LengthBudget budget;
        int replicate;
    };
    std::vector<const DocumentRecord*> docs;
    for (const auto& d : corpus) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(),
              [](auto* a, auto* b) { return a->doc_id < b->doc_id; });

    std::vector<Cell> cells;
    for (const auto* d : docs)
        for (const auto& b : budgets)
            for (int r = 0; r < replicates; ++r) cells.push_back({d, b, r});

    std::vector<SummaryRecord> out(cells.size());
    parallel_for(cells.size(), profile.max_parallel, [&](std::size_t i) {
        const Cell& c = cells[i];
        const std::string prompt = text::render_template(
            summarization_template,
            {{"target_words", std::to_string(c.budget.words)},
             {"document", c.doc->text}});
        const std::string tag = "rep=" + std::to_string(c.replicate);
        SummaryRecord rec;
        rec.doc_id = c.doc->doc_id;
        rec.budget = c.budget;
        rec.replicate = c.replicate;
        rec.backend_id = profile.backend_id;
        rec.text = gateway.complete_chat(profile, prompt, tag);
        rec.word_count = text::word_count(rec.text);
        out[i] = std::move(rec);
    });
    return out;
}

std::vector<QuestionRecord> generate_questions(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<SummaryRecord>& summaries,
    const std::string& ladder_backend_id, int questions_per_doc,
    const BackendProfile& profile, Gateway& gateway,
    const std::string& qg_template, StageWarnings& warnings) {
    if (questions_per_doc < 1)
        throw ValidationError("questions_per_doc must be >= 1");

    // (doc, budget) -> summary text from the QG-source backend, replicate 0.
    std::map<std::pair<std::string, int>, const SummaryRecord*> ladder;
    std::set<int> budget_words;
    for (const auto& s : summaries) {
        if (s.backend_id != ladder_backend_id || s.replicate != 0) continue;
        ladder[{s.doc_id, s.budget.words}] = &s;
        budget_words.insert(s.budget.words);
    }
    if (ladder.empty())
        throw ValidationError("no summaries found for QG-source backend " +
                              ladder_backend_id);

    std::vector<const DocumentRecord*> docs;
    for (const auto& d : corpus) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(),
              [](auto* a, auto* b) { return a->doc_id < b->doc_id; });

    std::vector<QuestionRecord> out;
    std::vector<std::vector<QuestionRecord>> per_doc(docs.size());
    std::mutex warn_mu;
    parallel_for(docs.size(), profile.max_parallel, [&](std::size_t i) {
        const DocumentRecord* doc = docs[i];
        std::string ladder_text;
        for (int words : budget_words) {
            auto it = ladder.find({doc->doc_id, words});
            if (it == ladder.end())
                throw ValidationError("document " + doc->doc_id +
                                      " is missing its summary ladder at " +
                                      std::to_string(words) + " words");
            ladder_text += "Target " + std::to_string(words) + " words:\n" +
                           it->second->text + "\n\n";
        }
        const std::string prompt = text::render_template(
            qg_template, {{"summaries_ladder", ladder_text},
                          {"document", doc->text},
                          {"num_questions", std::to_string(questions_per_doc)}});
        const std::string response =
            gateway.complete_chat(profile, prompt, "qg");
        auto items = parse_list_lines(response);
        {
            std::lock_guard<std::mutex> lock(warn_mu);
            const std::size_t raw_lines =
                text::split_lines(text::trim(response)).size();
            if (raw_lines > items.size())
                warnings.dropped_question_lines += raw_lines - items.size();
            if (items.empty()) {
                warnings.skipped_documents += 1;
                return;
            }
        }
        if (items.size() > static_cast<std::size_t>(questions_per_doc))
            items.resize(questions_per_doc);
        for (std::size_t k = 0; k < items.size(); ++k) {
            QuestionRecord q;
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "#q%02zu", k);
            q.question_id = doc->doc_id + suffix;
            q.doc_id = doc->doc_id;
            q.text = items[k];
            per_doc[i].push_back(std::move(q));
        }
    });
    for (auto& qs : per_doc)
        for (auto& q : qs) out.push_back(std::move(q));
    return out;
}

void embed_questions(std::vector<QuestionRecord>& questions,
                     const BackendProfile& profile, Gateway& gateway) {
    if (questions.empty()) throw ValidationError("no questions to embed");
    std::vector<std::string> texts;
    texts.reserve(questions.size());
    for (const auto& q : questions) texts.push_back(q.text);
    auto vectors = gateway.embed_texts(profile, texts);
    for (std::size_t i = 0; i < questions.size(); ++i)
        questions[i].embedding = std::move(vectors[i]);
}

namespace {

double cosine_distance(const std::vector<double>& a,
                       const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    const double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(1.0 - sim, 0.0, 2.0);
}

std::vector<double> mean_embedding(
    const std::vector<const QuestionRecord*>& members) {
    std::vector<double> mean(members.front()->embedding->size(), 0.0);
    for (const auto* q : members)
        for (std::size_t i = 0; i < mean.size(); ++i)
            mean[i] += (*q->embedding)[i];
    for (double& x : mean) x /= static_cast<double>(members.size());
    return mean;
}

// Member with maximum cosine similarity to the centroid; ties by question_id.
const QuestionRecord* closest_to_centroid(
    const std::vector<const QuestionRecord*>& members) {
    const auto centroid = mean_embedding(members);
    const QuestionRecord* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto* q : members) {
        const double d = cosine_distance(*q->embedding, centroid);
        if (!best || d < best_dist ||
            (d == best_dist && q->question_id < best->question_id)) {
            best = q;
            best_dist = d;
        }
    }
    return best;
}

std::map<std::string, const QuestionRecord*> index_questions(
    const std::vector<QuestionRecord>& questions) {
    std::map<std::string, const QuestionRecord*> idx;
    for (const auto& q : questions) {
        if (!idx.emplace(q.question_id, &q).second)
            throw ValidationError("duplicate question_id " + q.question_id);
    }
    return idx;
}

std::vector<TopicCluster> finalize_clusters(
    std::vector<std::vector<const QuestionRecord*>> groups) {
    // Topic ids ordered by each cluster's smallest member question_id.
    for (auto& g : groups)
        std::sort(g.begin(), g.end(), [](auto* a, auto* b) {
            return a->question_id < b->question_id;
        });
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
        return a.front()->question_id < b.front()->question_id;
    });
    std::vector<TopicCluster> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        TopicCluster c;
        char id[16];
        std::snprintf(id, sizeof(id), "t%03zu", i);
        c.topic_id = id;
        for (const auto* q : groups[i]) c.member_ids.insert(q->question_id);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

std::vector<TopicCluster> cluster_questions(
    const std::vector<QuestionRecord>& questions, std::size_t min_cluster_size,
    double link_threshold) {
    if (questions.size() < min_cluster_size)
        throw ValidationError(
            "cannot form any topic: " + std::to_string(questions.size()) +
            " questions with min cluster size " +
            std::to_string(min_cluster_size));

    // Work on question_id-sorted order so the merge sequence (and all
    // floating-point reductions) are permutation invariant.
    std::vector<const QuestionRecord*> qs;
    for (const auto& q : questions) {
        if (!q.embedding)
            throw ValidationError("question " + q.question_id + " not embedded");
        qs.push_back(&q);
    }
    std::sort(qs.begin(), qs.end(),
              [](auto* a, auto* b) { return a->question_id < b->question_id; });
    const std::size_t dim = qs.front()->embedding->size();
    for (const auto* q : qs)
        if (q->embedding->size() != dim)
            throw ValidationError("inconsistent embedding dimensions");

    const std::size_t n = qs.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] =
                cosine_distance(*qs[i]->embedding, *qs[j]->embedding);

    std::vector<bool> active(n, true);
    std::vector<std::size_t> size(n, 1);
    std::vector<std::vector<const QuestionRecord*>> members(n);
    for (std::size_t i = 0; i < n; ++i) members[i] = {qs[i]};

    // Average-linkage merging via the Lance-Williams update. Ties break on
    // the smallest slot pair, which is stable because slots follow sorted
    // question ids.
    for (;;) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = n, bj = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!active[j]) continue;
                if (dist[i][j] < best) {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi == n || best > link_threshold) break;
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const double d =
                (static_cast<double>(size[bi]) * dist[k][bi] +
                 static_cast<double>(size[bj]) * dist[k][bj]) /
                static_cast<double>(size[bi] + size[bj]);
            dist[k][bi] = dist[bi][k] = d;
        }
        size[bi] += size[bj];
        active[bj] = false;
        members[bi].insert(members[bi].end(), members[bj].begin(),
                           members[bj].end());
        members[bj].clear();
    }

    std::vector<std::vector<const QuestionRecord*>> groups;
    for (std::size_t i = 0; i < n; ++i)
        if (active[i] && members[i].size() >= min_cluster_size)
            groups.push_back(std::move(members[i]));
    if (groups.empty())
        throw ValidationError(
            "no cluster reached min size " + std::to_string(min_cluster_size) +
            "; corpus too small or min size too large");
    return finalize_clusters(std::move(groups));
}

void select_representatives(std::vector<TopicCluster>& clusters,
                            const std::vector<QuestionRecord>& questions) {
    const auto idx = index_questions(questions);
    for (auto& c : clusters) {
        std::vector<const QuestionRecord*> members;
        for (const auto& id : c.member_ids) {
            auto it = idx.find(id);
            if (it == idx.end() || !it->second->embedding)
                throw ValidationError("cluster member " + id +
                                      " missing or not embedded");
            members.push_back(it->second);
        }
        const QuestionRecord* rep = closest_to_centroid(members);
        c.representative_id = rep->question_id;
        c.representative_text = rep->text;
    }
}

std::vector<TopicCluster> apply_merge_overrides(
    const std::vector<TopicCluster>& clusters, const MergeOverride& override_,
    const std::vector<QuestionRecord>& questions) {
    std::map<std::string, const TopicCluster*> by_id;
    for (const auto& c : clusters) by_id[c.topic_id] = &c;

    std::set<std::string> consumed;
    std::vector<TopicCluster> merged;
    for (std::size_t g = 0; g < override_.merge_groups.size(); ++g) {
        const auto& group = override_.merge_groups[g];
        std::vector<const TopicCluster*> present;
        std::vector<std::string> missing;
        for (const auto& id : group) {
            auto it = by_id.find(id);
            if (it != by_id.end())
                present.push_back(it->second);
            else
                missing.push_back(id);
        }
        if (present.empty()) {
            std::string offenders;
            for (const auto& id : missing) offenders += " " + id;
            throw ValidationError("merge override references unknown topics:" +
                                  offenders);
        }
        TopicCluster c;
        c.topic_id = present.front()->topic_id;
        for (const auto* p : present) {
            c.topic_id = std::min(c.topic_id, p->topic_id);
            c.member_ids.insert(p->member_ids.begin(), p->member_ids.end());
            consumed.insert(p->topic_id);
        }
        auto choice = override_.representative_choice.find(g);
        if (choice != override_.representative_choice.end()) {
            if (!c.member_ids.count(choice->second))
                throw ValidationError("representative choice " + choice->second +
                                      " is not a member of merge group " +
                                      std::to_string(g));
            c.representative_id = choice->second;
        }
        merged.push_back(std::move(c));
    }

    std::vector<TopicCluster> out;
    for (const auto& c : clusters)
        if (!consumed.count(c.topic_id)) out.push_back(c);
    for (auto& c : merged) out.push_back(std::move(c));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.topic_id < b.topic_id;
    });

    // Re-select representatives for merged clusters without an explicit
    // choice; explicit choices keep their text refreshed from the question.
    const auto idx = index_questions(questions);
    for (auto& c : out) {
        if (c.representative_id.empty() || !c.member_ids.count(c.representative_id)) {
            std::vector<const QuestionRecord*> members;
            for (const auto& id : c.member_ids) members.push_back(idx.at(id));
            const QuestionRecord* rep = closest_to_centroid(members);
            c.representative_id = rep->question_id;
        }
        c.representative_text = idx.at(c.representative_id)->text;
    }
    return out;
}

std::vector<ReferenceAnswer> answer_questions(
    const std::vector<DocumentRecord>& corpus,
    const std::vector<TopicCluster>& topics, const BackendProfile& profile,
    Gateway& gateway, const std::string& qa_template) {
    struct Pair {
        const DocumentRecord* doc;
        const TopicCluster* topic;
    };
    std::vector<const DocumentRecord*> docs;
    for (const auto& d : corpus) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(),
              [](auto* a, auto* b) { return a->doc_id < b->doc_id; });

    std::vector<Pair> pairs;
    for (const auto* d : docs)
        for (const auto& t : topics) {
            if (t.representative_text.empty())
                throw ValidationError("topic " + t.topic_id +
                                      " has no representative");
            pairs.push_back({d, &t});
        }

    std::vector<ReferenceAnswer> out(pairs.size());
    parallel_for(pairs.size(), profile.max_parallel, [&](std::size_t i) {
        const auto& [doc, topic] = pairs[i];
        const std::string prompt = text::render_template(
            qa_template, {{"question", topic->representative_text},
                          {"document", doc->text}});
        const std::string response =
            gateway.complete_chat(profile, prompt, "qa");
        ReferenceAnswer a;
        a.doc_id = doc->doc_id;
        a.topic_id = topic->topic_id;
        const std::string trimmed = text::trim(response);
        if (trimmed.empty() || text::starts_with(trimmed, "UNANSWERABLE")) {
            a.text = std::nullopt;
            a.word_count = 0;
        } else {
            a.text = trimmed;
            a.word_count = text::word_count(trimmed);
        }
        out[i] = std::move(a);
    });
    return out;
}

std::vector<AtomicClaim> decompose_claims(std::vector<ReferenceAnswer>& answers,
                                          const BackendProfile& profile,
                                          Gateway& gateway,
                                          const std::string& claims_template,
                                          StageWarnings& warnings) {
    std::vector<ReferenceAnswer*> present;
    for (auto& a : answers)
        if (!a.absent()) present.push_back(&a);
    std::sort(present.begin(), present.end(), [](auto* a, auto* b) {
        return std::tie(a->doc_id, a->topic_id) < std::tie(b->doc_id, b->topic_id);
    });

    std::vector<std::vector<AtomicClaim>> per_answer(present.size());
    std::mutex warn_mu;
    parallel_for(present.size(), profile.max_parallel, [&](std::size_t i) {
        ReferenceAnswer* a = present[i];
        const std::string prompt =
            text::render_template(claims_template, {{"answer", *a->text}});
        const std::string response =
            gateway.complete_chat(profile, prompt, "claims");
        auto items = parse_list_lines(response);
        if (items.empty()) {
            // Zero parsed claims: answerability is undefined, coerce to ABSENT.
            std::lock_guard<std::mutex> lock(warn_mu);
            a->text = std::nullopt;
            a->word_count = 0;
            warnings.coerced_answers += 1;
            return;
        }
        for (std::size_t k = 0; k < items.size(); ++k) {
            AtomicClaim c;
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "#c%03zu", k);
            c.claim_id = a->doc_id + "#" + a->topic_id + suffix;
            c.doc_id = a->doc_id;
            c.topic_id = a->topic_id;
            c.ordinal = static_cast<int>(k);
            c.text = items[k];
            per_answer[i].push_back(std::move(c));
        }
    });

    std::vector<AtomicClaim> out;
    for (auto& claims : per_answer)
        for (auto& c : claims) out.push_back(std::move(c));
    return out;
}

std::vector<ClaimVerdict> score_entailments(
    const std::vector<AtomicClaim>& claims,
    const std::vector<SummaryRecord>& summaries, const BackendProfile& profile,
    Gateway& gateway, int max_parallel) {
    std::map<std::string, std::vector<const SummaryRecord*>> by_doc;
    for (const auto& s : summaries) by_doc[s.doc_id].push_back(&s);
    for (auto& [doc, list] : by_doc)
        std::sort(list.begin(), list.end(), [](auto* a, auto* b) {
            return std::tie(a->backend_id, a->budget.words, a->replicate) <
                   std::tie(b->backend_id, b->budget.words, b->replicate);
        });

    std::vector<const AtomicClaim*> claim_order;
    for (const auto& c : claims) claim_order.push_back(&c);
    std::sort(claim_order.begin(), claim_order.end(), [](auto* a, auto* b) {
        return std::tie(a->doc_id, a->topic_id, a->ordinal) <
               std::tie(b->doc_id, b->topic_id, b->ordinal);
    });

    struct Pair {
        const AtomicClaim* claim;
        const SummaryRecord* summary;
    };
    std::vector<Pair> pairs;
    for (const auto* c : claim_order) {
        auto it = by_doc.find(c->doc_id);
        if (it == by_doc.end())
            throw ValidationError("no summaries for document " + c->doc_id);
        for (const auto* s : it->second) pairs.push_back({c, s});
    }

    std::vector<ClaimVerdict> out(pairs.size());
    parallel_for(pairs.size(), max_parallel, [&](std::size_t i) {
        const auto& [c, s] = pairs[i];
        ClaimVerdict v;
        v.claim_id = c->claim_id;
        v.doc_id = c->doc_id;
        v.topic_id = c->topic_id;
        v.budget = s->budget;
        v.replicate = s->replicate;
        v.backend_id = s->backend_id;
        v.entailed = gateway.judge_entailment(profile, c->text, s->text);
        out[i] = std::move(v);
    });
    return out;
}

CsmBundle build_csms(const std::vector<ClaimVerdict>& verdicts,
                     const std::vector<ReferenceAnswer>& answers,
                     const std::set<std::string>& all_topics,
                     const std::vector<std::string>& doc_ids,
                     const std::vector<LengthBudget>& budgets,
                     const std::string& backend_id, int replicates,
                     std::size_t corpus_size) {
    std::map<std::string, std::set<std::string>> present;  // doc -> topics
    for (const auto& a : answers)
        if (!a.absent()) present[a.doc_id].insert(a.topic_id);

    // replicate -> doc -> topic -> budget -> verdicts, in sorted claim order.
    std::map<int, std::map<std::string, VerdictGroups>> grouped;
    std::vector<const ClaimVerdict*> ordered;
    for (const auto& v : verdicts)
        if (v.backend_id == backend_id) ordered.push_back(&v);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) {
        return std::tie(a->doc_id, a->topic_id, a->claim_id, a->budget.words) <
               std::tie(b->doc_id, b->topic_id, b->claim_id, b->budget.words);
    });
    for (const auto* v : ordered)
        grouped[v->replicate][v->doc_id][v->topic_id][v->budget.words]
            .push_back(v->entailed);

    CsmBundle bundle;
    for (int r = 0; r < replicates; ++r) {
        std::vector<DocumentCsm> doc_csms;
        for (const auto& doc_id : doc_ids) {
            const auto present_it = present.find(doc_id);
            const std::set<std::string> present_topics =
                present_it == present.end() ? std::set<std::string>{}
                                            : present_it->second;
            VerdictGroups groups;
            auto rit = grouped.find(r);
            if (rit != grouped.end()) {
                auto dit = rit->second.find(doc_id);
                if (dit != rit->second.end()) groups = dit->second;
            }
            doc_csms.push_back(build_document_csm(doc_id, backend_id, r, groups,
                                                  all_topics, present_topics,
                                                  budgets));
        }
        bundle.corpus_csms[r] = build_corpus_csm(doc_csms, corpus_size);
        bundle.doc_csms[r] = std::move(doc_csms);
    }

    // Headline map: mean over replicates, cell by cell.
    CorpusCsm mean = bundle.corpus_csms.at(0);
    for (auto& [key, value] : mean.entries) {
        double sum = 0.0;
        for (int r = 0; r < replicates; ++r)
            sum += bundle.corpus_csms.at(r).entries.at(key);
        value = sum / static_cast<double>(replicates);
    }
    bundle.mean_corpus_csm = std::move(mean);
    return bundle;
}

IngestResult bucket_ingested_summaries(
    const std::vector<std::pair<std::string, std::string>>& doc_summaries,
    const std::vector<LengthBudget>& budgets, double tolerance,
    const std::string& pseudo_backend_id) {
    validate_budgets(budgets);
    IngestResult res;
    for (const auto& [doc_id, summary] : doc_summaries) {
        const std::size_t wc = text::word_count(summary);
        const LengthBudget* nearest = nullptr;
        double nearest_gap = std::numeric_limits<double>::infinity();
        for (const auto& b : budgets) {
            const double gap =
                std::abs(static_cast<double>(wc) - b.words);
            if (gap < nearest_gap) {
                nearest_gap = gap;
                nearest = &b;
            }
        }
        const double rel = nearest_gap / static_cast<double>(nearest->words);
        if (rel > tolerance + 1e-12) {
            res.skipped += 1;
            continue;
        }
        SummaryRecord rec;
        rec.doc_id = doc_id;
        rec.budget = *nearest;
        rec.replicate = 0;
        rec.backend_id = pseudo_backend_id;
        rec.text = summary;
        rec.word_count = wc;
        res.accepted.push_back(std::move(rec));
    }
    return res;
}

}  // namespace csm::stages
