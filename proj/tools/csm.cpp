#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "csm/errors.hpp"
#include "csm/pipeline.hpp"

namespace {

int dispatch(int argc, char** argv) {
    CLI::App app{"Content salience map pipeline"};
    app.require_subcommand(1);

    csm::pipeline::Options options;
    std::string runs_root = "runs";
    std::string cache_dir;
    app.add_option("--runs-root", runs_root, "Directory holding run dirs");
    app.add_option("--cache-dir", cache_dir,
                   "Response cache dir (default: $CSM_CACHE_DIR or ./cache)");

    auto* init = app.add_subcommand("init", "Create a run directory");
    std::string config_path;
    bool force = false;
    init->add_option("-c,--config", config_path, "Run config JSON")->required();
    init->add_flag("--force", force, "Replace an existing run directory");

    auto* run = app.add_subcommand("run", "Run one stage or `all`");
    std::string run_id, stage;
    run->add_option("run_id", run_id)->required();
    run->add_option("stage", stage, "Stage name or `all`")->required();

    auto* ingest =
        app.add_subcommand("ingest-summaries", "Use pre-existing summaries");
    std::string ingest_run, ingest_file;
    double tolerance = 0.10;
    ingest->add_option("run_id", ingest_run)->required();
    ingest->add_option("-f,--file", ingest_file, "JSON-lines of {doc_id, summary}")
        ->required();
    ingest->add_option("--tolerance", tolerance,
                       "Relative length tolerance for budget bucketing");

    auto* sweep = app.add_subcommand("sweep-temp", "Temperature sweep");
    std::string sweep_run;
    std::vector<double> temperatures;
    sweep->add_option("run_id", sweep_run)->required();
    sweep->add_option("-t,--temperatures", temperatures, "Comma-separated list")
        ->required()
        ->delimiter(',');

    auto* report = app.add_subcommand("report", "Render the report bundle");
    std::string report_run;
    report->add_option("run_id", report_run)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    options.runs_root = runs_root;
    options.cache_dir = cache_dir;

    if (init->parsed()) {
        csm::pipeline::cmd_init(config_path, options, force);
    } else if (run->parsed()) {
        csm::pipeline::cmd_run(run_id, stage, options);
    } else if (ingest->parsed()) {
        csm::pipeline::cmd_ingest_summaries(ingest_run, ingest_file, tolerance,
                                            options);
    } else if (sweep->parsed()) {
        csm::pipeline::cmd_sweep_temperature(sweep_run, temperatures, options);
    } else if (report->parsed()) {
        csm::pipeline::cmd_run(report_run, "report", options);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const csm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const csm::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const csm::DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
