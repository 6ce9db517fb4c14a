#include "csm/domain.hpp"

#include <algorithm>

#include "csm/errors.hpp"

namespace csm {

void validate_budgets(const std::vector<LengthBudget>& budgets) {
    if (budgets.empty()) throw ValidationError("budget set is empty");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i].words < 1)
            throw ValidationError("budget must be >= 1 word");
        if (i > 0 && budgets[i].words <= budgets[i - 1].words)
            throw ValidationError("budgets must be strictly increasing");
    }
}

double answerability(const std::vector<int>& verdicts) {
    if (verdicts.empty())
        throw ValidationError(
            "answerability of an empty verdict list is undefined; "
            "zero-claim topics must be handled as ABSENT");
    long sum = 0;
    for (int v : verdicts) {
        if (v != 0 && v != 1) throw ValidationError("verdicts must be binary");
        sum += v;
    }
    return static_cast<double>(sum) / static_cast<double>(verdicts.size());
}

DocumentCsm build_document_csm(const std::string& doc_id,
                               const std::string& backend_id,
                               int replicate,
                               const VerdictGroups& groups,
                               const std::set<std::string>& all_topics,
                               const std::set<std::string>& present_topics,
                               const std::vector<LengthBudget>& budgets) {
    validate_budgets(budgets);
    DocumentCsm csm;
    csm.doc_id = doc_id;
    csm.backend_id = backend_id;
    csm.replicate = replicate;
    for (const auto& topic : all_topics) {
        if (!present_topics.count(topic)) {
            csm.absent_topics.insert(topic);
            continue;
        }
        auto git = groups.find(topic);
        for (const auto& budget : budgets) {
            const std::vector<int>* verdicts = nullptr;
            if (git != groups.end()) {
                auto bit = git->second.find(budget.words);
                if (bit != git->second.end()) verdicts = &bit->second;
            }
            if (!verdicts)
                throw ValidationError("missing verdict group for present topic " +
                                      topic + " at budget " +
                                      std::to_string(budget.words) + " (doc " +
                                      doc_id + ")");
            csm.entries[{topic, budget.words}] = answerability(*verdicts);
        }
    }
    return csm;
}

CorpusCsm build_corpus_csm(const std::vector<DocumentCsm>& doc_csms,
                           std::size_t corpus_size) {
    if (corpus_size == 0) throw ValidationError("empty corpus");
    if (doc_csms.size() > corpus_size)
        throw ValidationError("more document CSMs than corpus documents");

    CorpusCsm out;
    if (!doc_csms.empty()) out.backend_id = doc_csms.front().backend_id;

    // Aggregate in sorted doc order so sums are bit-reproducible regardless
    // of input permutation.
    std::vector<const DocumentCsm*> docs;
    docs.reserve(doc_csms.size());
    for (const auto& d : doc_csms) {
        if (d.backend_id != out.backend_id)
            throw ValidationError("document CSMs mix backend ids");
        docs.push_back(&d);
    }
    std::sort(docs.begin(), docs.end(),
              [](const DocumentCsm* a, const DocumentCsm* b) {
                  return a->doc_id < b->doc_id;
              });

    std::map<CsmKey, double> sums;
    std::map<CsmKey, std::size_t> counts;
    std::map<std::string, std::size_t> support;
    for (const DocumentCsm* d : docs) {
        std::set<std::string> topics_here;
        for (const auto& [key, value] : d->entries) {
            if (value < 0.0 || value > 1.0)
                throw ValidationError("CSM entry out of [0,1] for doc " +
                                      d->doc_id);
            sums[key] += value;
            counts[key] += 1;
            topics_here.insert(key.first);
        }
        for (const auto& t : topics_here) support[t] += 1;
        for (const auto& t : d->absent_topics)
            support.try_emplace(t, 0);  // prevalence 0, no entries
    }

    for (const auto& [key, sum] : sums)
        out.entries[key] = sum / static_cast<double>(counts.at(key));
    for (const auto& [topic, n] : support) {
        out.support[topic] = n;
        out.prevalence[topic] = topic_prevalence(n, corpus_size);
    }
    return out;
}

double topic_prevalence(std::size_t support, std::size_t corpus_size) {
    if (corpus_size == 0) throw ValidationError("corpus_size must be > 0");
    if (support > corpus_size)
        throw ValidationError("support exceeds corpus size");
    return static_cast<double>(support) / static_cast<double>(corpus_size);
}

}  // namespace csm
