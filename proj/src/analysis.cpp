#include "csm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <regex>
#include <sstream>

#include "csm/errors.hpp"
#include "csm/io.hpp"
#include "csm/text.hpp"

namespace csm::analysis {

std::vector<std::string> sorted_topic_ids(
    const std::vector<TopicCluster>& topics) {
    std::vector<std::string> ids;
    for (const auto& t : topics) ids.push_back(t.topic_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<SalienceRating> elicit_perceived_salience(
    const std::vector<TopicCluster>& topics, const BackendProfile& profile,
    Gateway& gateway, int runs, long base_seed,
    const std::string& introspection_template,
    stages::StageWarnings& warnings) {
    if (topics.empty()) throw ValidationError("no topics to rate");
    if (runs < 1) throw ValidationError("runs must be >= 1");

    std::vector<const TopicCluster*> base;
    for (const auto& t : topics) {
        if (t.representative_text.empty())
            throw ValidationError("topic " + t.topic_id +
                                  " has no representative text");
        base.push_back(&t);
    }
    std::sort(base.begin(), base.end(), [](auto* a, auto* b) {
        return a->topic_id < b->topic_id;
    });

    static const std::regex kRating(
        R"(^\s*(\d+)[.)]:?\s*rating\s*[=:]\s*(-?\d+)\s*(?:[-:]\s*(.*))?$)");

    std::vector<SalienceRating> out;
    std::size_t discarded_runs = 0;
    for (int run = 0; run < runs; ++run) {
        auto shuffled = base;
        std::mt19937 rng(static_cast<unsigned long>(base_seed + run));
        std::shuffle(shuffled.begin(), shuffled.end(), rng);

        std::string question_list;
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            question_list += std::to_string(i + 1) + ". " +
                             shuffled[i]->representative_text + "\n";
        const std::string prompt = text::render_template(
            introspection_template, {{"questions_list", question_list}});
        const std::string response = gateway.complete_chat(
            profile, prompt, "introspect-run=" + std::to_string(run));

        std::vector<SalienceRating> run_ratings;
        std::size_t dropped = 0;
        for (const auto& line : text::split_lines(response)) {
            std::smatch m;
            if (!std::regex_match(line, m, kRating)) continue;
            const std::size_t pos = std::stoul(m[1]);
            const int rating = std::stoi(m[2]);
            if (pos < 1 || pos > shuffled.size() || rating < 1 || rating > 5) {
                dropped += 1;
                continue;
            }
            SalienceRating r;
            r.rater_id = profile.backend_id;
            r.rater_kind = SalienceRating::Kind::llm;
            r.topic_id = shuffled[pos - 1]->topic_id;
            r.rating = rating;
            r.rationale = m[3].matched ? text::trim(m[3].str()) : "";
            r.run_index = run;
            run_ratings.push_back(std::move(r));
        }
        warnings.dropped_ratings += dropped;
        if (run_ratings.size() * 2 < shuffled.size()) {
            discarded_runs += 1;
            continue;
        }
        for (auto& r : run_ratings) out.push_back(std::move(r));
    }
    if (out.empty())
        throw BackendError("all " + std::to_string(runs) +
                           " introspection runs were discarded");
    (void)discarded_runs;
    return out;
}

std::vector<SalienceRating> ingest_human_ratings(
    const std::string& csv_text, const std::set<std::string>& known_topics) {
    const auto lines = text::split_lines(csv_text);
    if (lines.empty() ||
        text::trim(lines[0]) != "rater_id,topic_id,rating,rationale")
        throw ValidationError(
            "ratings CSV must start with header rater_id,topic_id,rating,rationale");

    std::vector<SalienceRating> out;
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<std::string> problems;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (text::trim(line).empty()) continue;
        const std::size_t lineno = i + 1;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (int f = 0; f < 3; ++f) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) break;
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != 3) {
            problems.push_back("line " + std::to_string(lineno) +
                               ": expected 4 fields");
            continue;
        }
        fields.push_back(line.substr(start));  // rationale may contain commas

        SalienceRating r;
        r.rater_id = text::trim(fields[0]);
        r.rater_kind = SalienceRating::Kind::human;
        r.topic_id = text::trim(fields[1]);
        r.rationale = text::trim(fields[3]);
        r.run_index = 0;
        try {
            r.rating = std::stoi(text::trim(fields[2]));
        } catch (const std::exception&) {
            problems.push_back("line " + std::to_string(lineno) +
                               ": rating is not an integer");
            continue;
        }
        if (r.rating < 1 || r.rating > 5) {
            problems.push_back("line " + std::to_string(lineno) +
                               ": rating out of 1..5");
            continue;
        }
        if (!known_topics.count(r.topic_id)) {
            problems.push_back("line " + std::to_string(lineno) +
                               ": unknown topic_id " + r.topic_id);
            continue;
        }
        if (!seen.insert({r.rater_id, r.topic_id}).second) {
            problems.push_back("line " + std::to_string(lineno) +
                               ": duplicate (rater, topic)");
            continue;
        }
        out.push_back(std::move(r));
    }
    if (!problems.empty()) {
        std::string msg = "malformed ratings rows:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return out;
}

GroupConsistency consistency_report(
    const std::vector<std::vector<double>>& group_rows) {
    auto res = metrics::avg_pairwise_rho(group_rows);
    GroupConsistency out;
    out.rho = res.mean_rho;
    out.pairs = res.pairs_used;
    out.undefined_pairs = res.pairs_undefined;
    if (!res.p_values.empty())
        out.hmp = metrics::harmonic_mean_pvalue(res.p_values);
    return out;
}

GroupConsistency cross_group_rho(const std::vector<std::vector<double>>& a,
                                 const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty())
        throw ValidationError("cross_group_rho: empty group");
    GroupConsistency out;
    double sum = 0.0;
    std::vector<double> p_values;
    for (const auto& ra : a)
        for (const auto& rb : b) {
            auto r = metrics::spearman_test(ra, rb);
            if (!r.rho) {
                out.undefined_pairs += 1;
                continue;
            }
            sum += *r.rho;
            out.pairs += 1;
            if (r.p_value) p_values.push_back(*r.p_value);
        }
    if (out.pairs == 0)
        throw ValidationError("cross_group_rho: all pairs undefined");
    out.rho = sum / static_cast<double>(out.pairs);
    if (!p_values.empty()) out.hmp = metrics::harmonic_mean_pvalue(p_values);
    return out;
}

AlignmentReport alignment_report(
    const std::string& dataset,
    const std::map<std::string, RatingMatrix>& perceived,
    const std::map<std::string, RatingMatrix>& observed,
    const RatingMatrix& human) {
    AlignmentReport report;
    std::size_t n_topics = 0;
    auto check_topics = [&](const RatingMatrix& m, const std::string& who) {
        for (const auto& row : m) {
            if (n_topics == 0) n_topics = row.size();
            if (row.size() != n_topics)
                throw ValidationError("topic universe mismatch in " + who);
        }
    };
    for (const auto& [b, m] : perceived) check_topics(m, "perceived/" + b);
    for (const auto& [b, m] : observed) check_topics(m, "observed/" + b);
    check_topics(human, "human");

    auto push = [&](const std::string& measure, const std::string& backend,
                    const GroupConsistency& g) {
        AlignmentRow row;
        row.measure = measure;
        row.dataset = dataset;
        row.backend = backend;
        row.rho = g.rho;
        row.p = g.hmp;
        row.n = n_topics;
        report.rows.push_back(std::move(row));
    };

    for (const auto& [backend, runs] : perceived)
        if (runs.size() >= 2)
            push("perceived-consistency", backend, consistency_report(runs));
    for (const auto& [backend, reps] : observed)
        if (reps.size() >= 2)
            push("observed-consistency", backend, consistency_report(reps));
    for (const auto& [rater, runs] : perceived)
        for (const auto& [backend, reps] : observed)
            push("perceived-vs-observed",
                 rater == backend ? backend : rater + "->" + backend,
                 cross_group_rho(runs, reps));
    if (!human.empty()) {
        for (const auto& [backend, runs] : perceived)
            push("perceived-vs-human", backend, cross_group_rho(runs, human));
        for (const auto& [backend, reps] : observed)
            push("observed-vs-human", backend, cross_group_rho(reps, human));
    }
    return report;
}

std::vector<AgreementMatrix> build_agreement_matrices(
    const std::map<std::string,
                   std::map<int, std::map<int, std::vector<int>>>>&
        inclusion_bits,
    const std::vector<LengthBudget>& budgets) {
    std::vector<std::string> backends;
    for (const auto& [backend, _] : inclusion_bits) backends.push_back(backend);
    std::sort(backends.begin(), backends.end());

    std::vector<AgreementMatrix> out;
    for (const auto& budget : budgets) {
        AgreementMatrix m;
        m.budget = budget;
        m.backend_ids = backends;
        const std::size_t n = backends.size();
        m.cells.assign(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& reps_i = inclusion_bits.at(backends[i]).at(budget.words);
            if (reps_i.size() >= 2) {
                std::vector<std::vector<int>> vecs;
                for (const auto& [rep, bits] : reps_i) vecs.push_back(bits);
                m.cells[i][i] = metrics::self_agreement(vecs);
            } else {
                m.cells[i][i] = std::numeric_limits<double>::quiet_NaN();
            }
            // Cross-model cells compare replicate 0 of each backend; computed
            // once per unordered pair and mirrored.
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto& reps_j =
                    inclusion_bits.at(backends[j]).at(budget.words);
                const double a = metrics::krippendorff_alpha(
                    reps_i.at(0), reps_j.at(0));
                m.cells[i][j] = m.cells[j][i] = a;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

// Blue-to-warm fill for a score in [0,1]; NaN renders gray.
std::string heat_color(double v) {
    if (std::isnan(v)) return "#cccccc";
    v = std::clamp(v, 0.0, 1.0);
    const int r = static_cast<int>(255 * v);
    const int g = static_cast<int>(80 + 100 * v);
    const int b = static_cast<int>(255 * (1.0 - v));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

void svg_heatmap(const std::string& path, const std::string& title,
                 const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels,
                 const std::vector<std::vector<double>>& values) {
    const int cell_w = 64, cell_h = 24, left = 280, top = 48;
    const int width = left + cell_w * static_cast<int>(col_labels.size()) + 16;
    const int height =
        top + cell_h * static_cast<int>(row_labels.size()) + 16;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg << "<text x=\"8\" y=\"16\" font-size=\"13\">" << title << "</text>\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c)
        svg << "<text x=\"" << left + cell_w * c + 4 << "\" y=\"" << top - 6
            << "\">" << col_labels[c] << "</text>\n";
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        svg << "<text x=\"8\" y=\"" << top + cell_h * r + 16 << "\">"
            << row_labels[r] << "</text>\n";
        for (std::size_t c = 0; c < values[r].size(); ++c) {
            const double v = values[r][c];
            svg << "<rect x=\"" << left + cell_w * c << "\" y=\""
                << top + cell_h * r << "\" width=\"" << cell_w - 2
                << "\" height=\"" << cell_h - 2 << "\" fill=\"" << heat_color(v)
                << "\"/>\n";
            if (!std::isnan(v)) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%.2f", v);
                svg << "<text x=\"" << left + cell_w * c + 8 << "\" y=\""
                    << top + cell_h * r + 16 << "\" fill=\"#ffffff\">" << buf
                    << "</text>\n";
            }
        }
    }
    svg << "</svg>\n";
    io::write_file(path, svg.str());
}

}  // namespace

void render_reports(const ReportInputs& inputs, const std::string& out_dir) {
    if (inputs.topic_questions.empty())
        throw ValidationError("render_reports: empty topic set");
    std::filesystem::create_directories(out_dir);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    std::ostringstream summary;
    summary << "run report\n==========\n\n";

    for (const auto& [backend, csm] : inputs.corpus_csms) {
        // Topic rows sorted by aggregated salience (desc), ties by topic_id.
        struct Row {
            std::string topic;
            double prevalence;
            std::map<int, double> by_budget;
            double aggregate;
        };
        std::vector<Row> rows;
        for (const auto& [topic, prev] : csm.prevalence) {
            std::map<int, double> by_budget;
            bool complete = true;
            for (const auto& b : inputs.budgets) {
                auto it = csm.entries.find({topic, b.words});
                if (it == csm.entries.end()) {
                    complete = false;
                    break;
                }
                by_budget[b.words] = it->second;
            }
            if (!complete) continue;  // zero-support topic: prevalence only
            Row r;
            r.topic = topic;
            r.prevalence = prev;
            r.by_budget = by_budget;
            r.aggregate = metrics::aggregate_salience(by_budget, inputs.weights);
            rows.push_back(std::move(r));
        }
        if (rows.empty())
            throw ValidationError("render_reports: no scored topics for " +
                                  backend);
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
            return a.topic < b.topic;
        });

        std::ostringstream csv;
        csv << "topic_id,question,prevalence";
        for (const auto& b : inputs.budgets) csv << ",w" << b.words;
        csv << ",aggregate\n";
        for (const auto& r : rows) {
            csv << r.topic << ","
                << csv_escape(inputs.topic_questions.at(r.topic)) << ","
                << fmt(r.prevalence);
            for (const auto& b : inputs.budgets)
                csv << "," << fmt(r.by_budget.at(b.words));
            csv << "," << fmt(r.aggregate) << "\n";
        }
        // Footer row: mean answerability per budget across topics.
        csv << "average,,";
        double agg_sum = 0.0;
        for (const auto& b : inputs.budgets) {
            double sum = 0.0;
            for (const auto& r : rows) sum += r.by_budget.at(b.words);
            csv << "," << fmt(sum / static_cast<double>(rows.size()));
        }
        for (const auto& r : rows) agg_sum += r.aggregate;
        csv << "," << fmt(agg_sum / static_cast<double>(rows.size())) << "\n";
        io::write_file(path("csm_" + backend + ".csv"), csv.str());

        std::vector<std::string> row_labels, col_labels{"prev"};
        for (const auto& b : inputs.budgets)
            col_labels.push_back("w" + std::to_string(b.words));
        std::vector<std::vector<double>> cells;
        for (const auto& r : rows) {
            row_labels.push_back(r.topic + " " +
                                 inputs.topic_questions.at(r.topic).substr(0, 36));
            std::vector<double> row{r.prevalence};
            for (const auto& b : inputs.budgets)
                row.push_back(r.by_budget.at(b.words));
            cells.push_back(std::move(row));
        }
        row_labels.push_back("average");
        std::vector<double> avg{std::numeric_limits<double>::quiet_NaN()};
        for (const auto& b : inputs.budgets) {
            double sum = 0.0;
            for (const auto& r : rows) sum += r.by_budget.at(b.words);
            avg.push_back(sum / static_cast<double>(rows.size()));
        }
        cells.push_back(std::move(avg));
        svg_heatmap(path("csm_" + backend + ".svg"),
                    "content salience map: " + backend, row_labels, col_labels,
                    cells);
        summary << "csm " << backend << ": " << rows.size() << " topics, "
                << inputs.budgets.size() << " budgets\n";
    }

    for (const auto& m : inputs.agreement) {
        std::ostringstream csv;
        csv << "backend";
        for (const auto& b : m.backend_ids) csv << "," << b;
        csv << "\n";
        for (std::size_t i = 0; i < m.backend_ids.size(); ++i) {
            csv << m.backend_ids[i];
            for (std::size_t j = 0; j < m.backend_ids.size(); ++j)
                csv << "," << fmt(m.cells[i][j]);
            csv << "\n";
        }
        const std::string stem = "agreement_" + std::to_string(m.budget.words);
        io::write_file(path(stem + ".csv"), csv.str());
        svg_heatmap(path(stem + ".svg"),
                    "claim agreement at " + std::to_string(m.budget.words) +
                        " words",
                    m.backend_ids, m.backend_ids, m.cells);
        summary << "agreement matrix at " << m.budget.words << " words: "
                << m.backend_ids.size() << " backends\n";
    }

    {
        std::ostringstream csv;
        csv << "measure,dataset,backend,rho,p_hmp,n,stars\n";
        for (const auto& row : inputs.alignment.rows) {
            std::string stars;
            if (row.p && *row.p < 0.01) stars = "**";
            else if (row.p && *row.p < 0.05) stars = "*";
            csv << row.measure << "," << row.dataset << "," << row.backend
                << "," << fmt(row.rho) << ","
                << (row.p ? fmt(*row.p) : std::string("")) << "," << row.n
                << "," << stars << "\n";
            summary << row.measure << " " << row.backend << ": rho="
                    << fmt(row.rho) << (stars.empty() ? "" : " " + stars)
                    << "\n";
        }
        io::write_file(path("alignment.csv"), csv.str());
    }
    summary << "\np-values are two-sided; stars: * p<0.05, ** p<0.01 via "
               "harmonic-mean p-value\n";
    io::write_file(path("summary.txt"), summary.str());
}

}  // namespace csm::analysis
