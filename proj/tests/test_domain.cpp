#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <random>

#include "csm/domain.hpp"
#include "csm/errors.hpp"
#include "oracles.hpp"

using namespace csm;

TEST_CASE("budget validation") {
    CHECK_NOTHROW(validate_budgets({{10}, {20}, {50}}));
    CHECK_THROWS_AS(validate_budgets({}), ValidationError);
    CHECK_THROWS_AS(validate_budgets({{10}, {10}}), ValidationError);
    CHECK_THROWS_AS(validate_budgets({{20}, {10}}), ValidationError);
    CHECK_THROWS_AS(validate_budgets({{0}}), ValidationError);
}

TEST_CASE("answerability is the mean of binary verdicts") {
    CHECK(answerability({1, 0, 1, 1}) == 0.75);
    CHECK(answerability({0, 0}) == 0.0);
    CHECK_THROWS_AS(answerability({}), ValidationError);
    CHECK_THROWS_AS(answerability({2}), ValidationError);

    std::mt19937 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 24;
        std::vector<int> verdicts(n);
        for (auto& v : verdicts) v = static_cast<int>(rng() % 2);
        CHECK(answerability(verdicts) == oracle::mean(verdicts));
    }
}

TEST_CASE("document CSM: absence and missing groups") {
    const std::vector<LengthBudget> budgets = {{10}, {20}};
    VerdictGroups groups;
    groups["t0"][10] = {1, 0};
    groups["t0"][20] = {1, 1};

    auto csm = build_document_csm("d0", "m", 0, groups, {"t0", "t1"}, {"t0"},
                                  budgets);
    CHECK(csm.entries.at({"t0", 10}) == 0.5);
    CHECK(csm.entries.at({"t0", 20}) == 1.0);
    CHECK(csm.absent_topics == std::set<std::string>{"t1"});
    CHECK(csm.entries.count({"t1", 10}) == 0);

    // A present topic with a missing (t, l) cell is an error naming the hole.
    try {
        build_document_csm("d0", "m", 0, groups, {"t0", "t1"}, {"t0", "t1"},
                           budgets);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("t1") != std::string::npos);
        CHECK(std::string(e.what()).find("10") != std::string::npos);
    }
}

namespace {

// Random corpus of document CSMs over <= 6 topics, partial presence.
std::vector<DocumentCsm> random_doc_csms(std::mt19937& rng, std::size_t docs,
                                         const std::vector<int>& budgets) {
    std::vector<DocumentCsm> out;
    for (std::size_t d = 0; d < docs; ++d) {
        DocumentCsm c;
        char id[8];
        std::snprintf(id, sizeof(id), "d%02zu", d);  // sorts like it sums
        c.doc_id = id;
        c.backend_id = "m";
        for (int t = 0; t < 6; ++t) {
            const std::string topic = "t" + std::to_string(t);
            if (rng() % 3 == 0) {
                c.absent_topics.insert(topic);
                continue;
            }
            for (int w : budgets)
                c.entries[{topic, w}] =
                    static_cast<double>(rng() % 101) / 100.0;
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

TEST_CASE("corpus CSM equals brute-force filtered means, exactly") {
    std::mt19937 rng(17);
    const std::vector<int> budgets = {10, 20, 50};
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t docs = 2 + rng() % 19;
        auto doc_csms = random_doc_csms(rng, docs, budgets);
        auto corpus = build_corpus_csm(doc_csms, docs);

        for (int t = 0; t < 6; ++t) {
            const std::string topic = "t" + std::to_string(t);
            std::size_t supporting = 0;
            for (const auto& d : doc_csms)
                if (d.entries.count({topic, 10})) ++supporting;
            CHECK(corpus.support.at(topic) == supporting);
            CHECK(corpus.prevalence.at(topic) ==
                  static_cast<double>(supporting) / static_cast<double>(docs));
            for (int w : budgets) {
                double sum = 0.0;
                for (const auto& d : doc_csms) {
                    auto it = d.entries.find({topic, w});
                    if (it != d.entries.end()) sum += it->second;
                }
                if (supporting == 0) {
                    CHECK(corpus.entries.count({topic, w}) == 0);
                } else {
                    // Brute force in the same (sorted doc) order: exact.
                    CHECK(corpus.entries.at({topic, w}) ==
                          sum / static_cast<double>(supporting));
                }
            }
        }
    }
}

TEST_CASE("corpus CSM is permutation-invariant, bit for bit") {
    std::mt19937 rng(19);
    auto doc_csms = random_doc_csms(rng, 12, {10, 20});
    auto base = build_corpus_csm(doc_csms, 12);
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
        std::shuffle(doc_csms.begin(), doc_csms.end(), rng);
        auto again = build_corpus_csm(doc_csms, 12);
        CHECK(again.entries == base.entries);
        CHECK(again.support == base.support);
        CHECK(again.prevalence == base.prevalence);
    }
}

TEST_CASE("corpus CSM input validation") {
    CHECK_THROWS_AS(build_corpus_csm({}, 0), ValidationError);
    DocumentCsm a, b;
    a.doc_id = "d0";
    a.backend_id = "m1";
    b.doc_id = "d1";
    b.backend_id = "m2";
    CHECK_THROWS_AS(build_corpus_csm({a, b}, 2), ValidationError);
    CHECK_THROWS_AS(build_corpus_csm({a, b}, 1), ValidationError);
}

TEST_CASE("topic prevalence") {
    CHECK(topic_prevalence(3, 10) == 0.3);
    CHECK(topic_prevalence(0, 10) == 0.0);
    CHECK_THROWS_AS(topic_prevalence(11, 10), ValidationError);
    CHECK_THROWS_AS(topic_prevalence(1, 0), ValidationError);
}
