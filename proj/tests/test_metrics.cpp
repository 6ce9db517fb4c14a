#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "csm/errors.hpp"
#include "csm/metrics.hpp"
#include "oracles.hpp"

using namespace csm;
using namespace csm::metrics;

TEST_CASE("target length ratio") {
    CHECK(target_length_ratio(47, LengthBudget{50}) == doctest::Approx(0.94));
    CHECK(target_length_ratio(50, LengthBudget{50}) == 1.0);
    CHECK(target_length_ratio(200, LengthBudget{100}) == 2.0);
}

TEST_CASE("incremental consistency: spec example") {
    const std::vector<LengthBudget> budgets = {{10}, {20}, {50}};
    ClaimPatterns patterns;
    patterns["a1"] = {{10, 0}, {20, 1}, {50, 1}};
    patterns["a2"] = {{10, 1}, {20, 0}, {50, 1}};
    patterns["a3"] = {{10, 0}, {20, 0}, {50, 0}};
    auto r = incremental_consistency(patterns, budgets);
    CHECK(r.entailed_claims == 2);
    CHECK(r.consistent_claims == 1);
    CHECK(r.ic == 0.5);
    CHECK(r.inconsistent_claim_ids == std::vector<std::string>{"a2"});
    CHECK_FALSE(r.vacuous);
}

TEST_CASE("incremental consistency: vacuous and monotone cases") {
    const std::vector<LengthBudget> budgets = {{10}, {20}};
    ClaimPatterns none;
    none["a"] = {{10, 0}, {20, 0}};
    auto r = incremental_consistency(none, budgets);
    CHECK(r.ic == 1.0);
    CHECK(r.vacuous);

    ClaimPatterns mono;
    mono["a"] = {{10, 0}, {20, 1}};
    mono["b"] = {{10, 1}, {20, 1}};
    CHECK(incremental_consistency(mono, budgets).ic == 1.0);
}

TEST_CASE("incremental consistency: missing budget column errors") {
    const std::vector<LengthBudget> budgets = {{10}, {20}};
    ClaimPatterns patterns;
    patterns["a"] = {{10, 1}};
    CHECK_THROWS_AS(incremental_consistency(patterns, budgets),
                    ValidationError);
}

TEST_CASE("incremental consistency matches exhaustive pairwise oracle") {
    std::mt19937 rng(11);
    const std::vector<int> budget_words = {10, 20, 50, 100, 200};
    std::vector<LengthBudget> budgets;
    for (int w : budget_words) budgets.push_back({w});
    for (int trial = 0; trial < 200; ++trial) {
        ClaimPatterns patterns;
        std::map<std::string, std::map<int, int>> oracle_patterns;
        const int claims = 1 + static_cast<int>(rng() % 40);
        for (int c = 0; c < claims; ++c) {
            const std::string id = "c" + std::to_string(c);
            for (int w : budget_words) {
                const int bit = static_cast<int>(rng() % 2);
                patterns[id][w] = bit;
                oracle_patterns[id][w] = bit;
            }
        }
        CHECK(incremental_consistency(patterns, budgets).ic ==
              oracle::incremental_consistency(oracle_patterns, budget_words));
    }
}

TEST_CASE("claim inclusion vector is sorted and permutation invariant") {
    std::vector<AtomicClaim> claims;
    std::vector<ClaimVerdict> verdicts;
    const std::vector<int> bits = {1, 0, 0, 1};
    for (int i = 3; i >= 0; --i) {  // deliberately unsorted input order
        AtomicClaim c;
        c.claim_id = "d0#t0#c" + std::to_string(i);
        c.doc_id = "d0";
        c.topic_id = "t0";
        c.ordinal = i;
        claims.push_back(c);
        ClaimVerdict v;
        v.claim_id = c.claim_id;
        v.doc_id = "d0";
        v.topic_id = "t0";
        v.budget = {50};
        v.replicate = 0;
        v.backend_id = "m";
        v.entailed = bits[i];
        verdicts.push_back(v);
    }
    auto vec = claim_inclusion_vector(claims, verdicts, "m", {50}, 0);
    CHECK(vec.bits == bits);
    CHECK(vec.item_order.front() == "d0#t0#c0");
}

TEST_CASE("krippendorff alpha: worked example and identity") {
    CHECK(krippendorff_alpha({1, 1, 0, 0}, {1, 0, 0, 1}) ==
          doctest::Approx(0.125).epsilon(1e-12));
    CHECK(krippendorff_alpha({1, 0, 1, 1, 0}, {1, 0, 1, 1, 0}) == 1.0);
    bool degenerate = false;
    CHECK(krippendorff_alpha({1, 1, 1}, {1, 1, 1}, &degenerate) == 1.0);
    CHECK(degenerate);
    CHECK_THROWS_AS(krippendorff_alpha({1}, {1}), ValidationError);
    CHECK_THROWS_AS(krippendorff_alpha({1, 0}, {1}), ValidationError);
}

TEST_CASE("krippendorff alpha matches coincidence-matrix oracle") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        std::vector<int> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<int>(rng() % 2);
            b[i] = static_cast<int>(rng() % 2);
        }
        const double got = krippendorff_alpha(a, b);
        const double want = oracle::krippendorff_alpha(a, b);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        // Symmetry and 0/1 relabeling invariance.
        CHECK(krippendorff_alpha(b, a) == doctest::Approx(got).epsilon(1e-12));
        std::vector<int> na(n), nb(n);
        for (std::size_t i = 0; i < n; ++i) {
            na[i] = 1 - a[i];
            nb[i] = 1 - b[i];
        }
        CHECK(krippendorff_alpha(na, nb) ==
              doctest::Approx(got).epsilon(1e-12));
    }
}

TEST_CASE("self agreement") {
    CHECK(self_agreement({{1, 0, 1}, {1, 0, 1}, {1, 0, 1}}) == 1.0);
    CHECK_THROWS_AS(self_agreement({{1, 0, 1}}), ValidationError);

    std::mt19937 rng(31);
    std::vector<std::vector<int>> reps(5, std::vector<int>(12));
    for (auto& rep : reps)
        for (auto& bit : rep) bit = static_cast<int>(rng() % 2);
    double want = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t j = i + 1; j < reps.size(); ++j) {
            want += oracle::krippendorff_alpha(reps[i], reps[j]);
            ++pairs;
        }
    CHECK(self_agreement(reps) ==
          doctest::Approx(want / pairs).epsilon(1e-9));
}

TEST_CASE("spearman rho: basic and tied cases") {
    CHECK(*spearman_rho({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
    CHECK(*spearman_rho({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    auto tied = spearman_rho({1, 2, 2, 4}, {1, 3, 2, 4});
    CHECK(*tied == doctest::Approx(oracle::spearman({1, 2, 2, 4}, {1, 3, 2, 4}))
                       .epsilon(1e-9));
    CHECK_FALSE(spearman_rho({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2}), ValidationError);
}

TEST_CASE("spearman rho matches mid-rank pearson oracle") {
    std::mt19937 rng(37);
    std::uniform_int_distribution<int> values(0, 5);  // force ties
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng() % 15;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = values(rng);
            y[i] = values(rng);
        }
        auto got = spearman_rho(x, y);
        try {
            const double want = oracle::spearman(x, y);
            REQUIRE(got.has_value());
            CHECK(*got == doctest::Approx(want).epsilon(1e-9));
        } catch (const std::runtime_error&) {
            CHECK_FALSE(got.has_value());
        }
        // Invariance under a strictly monotone transform.
        if (got) {
            std::vector<double> tx(n);
            for (std::size_t i = 0; i < n; ++i) tx[i] = std::exp(x[i]);
            CHECK(*spearman_rho(tx, y) == doctest::Approx(*got).epsilon(1e-12));
        }
    }
}

TEST_CASE("spearman test p-values") {
    auto perfect = spearman_test({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10});
    REQUIRE(perfect.rho.has_value());
    CHECK(*perfect.rho == doctest::Approx(1.0));
    // Exact permutation: P(rho >= 1) among 5! orderings = 1/120, two-sided.
    CHECK(*perfect.p_value == doctest::Approx(2.0 / 120.0).epsilon(1e-9));

    // n > 8 takes the t-approximation; sanity: strong correlation -> small p.
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) {
        x.push_back(i);
        y.push_back(i + (i % 2) * 0.1);
    }
    auto big = spearman_test(x, y);
    CHECK(*big.p_value < 0.001);
}

TEST_CASE("avg pairwise rho") {
    PairwiseRhoResult identical =
        avg_pairwise_rho({{1, 2, 3}, {1, 2, 3}});
    CHECK(identical.mean_rho == doctest::Approx(1.0));
    CHECK(identical.pairs_used == 1);

    // Pairs with a constant row are undefined, excluded, counted.
    auto partial = avg_pairwise_rho({{1, 2, 3}, {2, 2, 2}, {3, 2, 1}});
    CHECK(partial.pairs_used == 1);
    CHECK(partial.pairs_undefined == 2);
    CHECK(partial.mean_rho == doctest::Approx(-1.0));

    CHECK_THROWS_AS(avg_pairwise_rho({{1, 1, 1}, {2, 2, 2}}), ValidationError);

    std::mt19937 rng(41);
    std::vector<std::vector<double>> rows(5, std::vector<double>(9));
    for (auto& row : rows)
        for (auto& v : row) v = static_cast<double>(rng() % 100);
    auto got = avg_pairwise_rho(rows);
    double want = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            want += oracle::spearman(rows[i], rows[j]);
    CHECK(got.mean_rho == doctest::Approx(want / 10.0).epsilon(1e-9));
    CHECK(got.p_values.size() == 10);
}

TEST_CASE("harmonic mean p-value") {
    CHECK(harmonic_mean_pvalue({0.05, 0.05}) == doctest::Approx(0.05));
    CHECK(harmonic_mean_pvalue({0.02, 0.06}) ==
          doctest::Approx(0.03).epsilon(1e-12));
    CHECK_THROWS_AS(harmonic_mean_pvalue({0.1, 0.0}), ValidationError);
    CHECK_THROWS_AS(harmonic_mean_pvalue({}), ValidationError);

    std::mt19937 rng(43);
    std::uniform_real_distribution<double> unit(1e-6, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> ps;
        for (int i = 0; i < 10; ++i) ps.push_back(unit(rng));
        CHECK(harmonic_mean_pvalue(ps) ==
              doctest::Approx(oracle::harmonic_mean_pvalue(ps)).epsilon(1e-12));
        // HMP of identical values is exactly that value.
        const double p = unit(rng);
        std::vector<double> same(1 + trial, p);
        CHECK(harmonic_mean_pvalue(same) == doctest::Approx(p).epsilon(1e-15));
    }
}

TEST_CASE("aggregation weights and salience") {
    const std::vector<LengthBudget> budgets = {{10}, {20}, {50}, {100}, {200}};
    auto uniform = make_weights(WeightScheme::uniform, budgets);
    CHECK(aggregate_salience({{10, 0.2}, {20, 0.4}, {50, 0.6}, {100, 0.8},
                              {200, 1.0}},
                             uniform) == doctest::Approx(0.6));

    auto reciprocal = make_weights(WeightScheme::reciprocal, budgets);
    const std::map<int, double> row = {
        {10, 0.8}, {20, 0.6}, {50, 0.4}, {100, 0.2}, {200, 0.1}};
    double num = 0.0, den = 0.0;
    for (const auto& [w, s] : row) {
        num += s / w;
        den += 1.0 / w;
    }
    CHECK(aggregate_salience(row, reciprocal) ==
          doctest::Approx(num / den).epsilon(1e-12));
    CHECK(num / den == doctest::Approx(0.1205 / 0.185).epsilon(1e-4));

    auto log_decay = make_weights(WeightScheme::log_decay, budgets);
    for (const auto& [w, wl] : log_decay.weights)
        CHECK(wl == doctest::Approx(1.0 / std::log(1.0 + w)).epsilon(1e-12));

    // Constant rows are weight-invariant; results stay inside [min, max].
    for (const auto* scheme : {&uniform, &reciprocal, &log_decay}) {
        CHECK(aggregate_salience({{10, 0.3}, {20, 0.3}, {50, 0.3}, {100, 0.3},
                                  {200, 0.3}},
                                 *scheme) == doctest::Approx(0.3));
        const double v = aggregate_salience(row, *scheme);
        CHECK(v >= 0.1);
        CHECK(v <= 0.8);
    }

    CHECK_THROWS_AS(aggregate_salience({{10, 0.5}}, uniform), ValidationError);
    CHECK(parse_weight_scheme("uniform") == WeightScheme::uniform);
    CHECK_THROWS_AS(parse_weight_scheme("quadratic"), ValidationError);
}

TEST_CASE("likert rescale") {
    CHECK(rescale_to_likert(0.0) == 1.0);
    CHECK(rescale_to_likert(0.5) == 3.0);
    CHECK(rescale_to_likert(1.0) == 5.0);
    CHECK_THROWS_AS(rescale_to_likert(-0.1), ValidationError);
    CHECK_THROWS_AS(rescale_to_likert(1.1), ValidationError);
}

TEST_CASE("answer length vs salience correlation") {
    // Long answers planted on low-salience topics: rho must be negative.
    std::vector<ReferenceAnswer> answers;
    std::vector<DocumentCsm> csms;
    for (int d = 0; d < 3; ++d) {
        DocumentCsm c;
        c.doc_id = "d" + std::to_string(d);
        c.backend_id = "m";
        c.replicate = 0;
        for (int t = 0; t < 4; ++t) {
            const std::string topic = "t" + std::to_string(t);
            ReferenceAnswer a;
            a.doc_id = c.doc_id;
            a.topic_id = topic;
            a.text = "x";
            a.word_count = 10 * (t + 1);  // longer on later topics
            answers.push_back(a);
            c.entries[{topic, 50}] = 1.0 - 0.2 * t;  // less salient later
        }
        csms.push_back(c);
    }
    auto r = answer_length_salience_correlation(answers, csms, {50});
    REQUIRE(r.rho.has_value());
    CHECK(*r.rho < 0.0);
    CHECK(r.n == 12);

    // Equal answer lengths -> constant rank vector -> undefined.
    for (auto& a : answers) a.word_count = 7;
    CHECK_FALSE(
        answer_length_salience_correlation(answers, csms, {50}).rho.has_value());
}

TEST_CASE("mid ranks") {
    CHECK(mid_ranks({10, 20, 30}) == std::vector<double>{1, 2, 3});
    CHECK(mid_ranks({1, 2, 2, 4}) == std::vector<double>{1, 2.5, 2.5, 4});
}
