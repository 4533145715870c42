// mcrl: simulate / certify / fit / select / analyze / serve / catalog.
//
// Exit codes: 0 success, 2 validation error, 3 incomplete input.

#include <iostream>

#include <CLI11.hpp>

#include "mcrl/commands.hpp"
#include "mcrl/http.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIncomplete = 3;

void print_manifest(const mcrl::io::json& m) { std::cout << m.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    using namespace mcrl;
    CLI::App app{"Metacognitive learning workbench: simulate, certify, fit, select, analyze, serve"};
    app.require_subcommand(1);
    std::string format = "csv";
    auto add_format = [&format](CLI::App* sub) {
        sub->add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "json"}));
    };

    // simulate
    cli::SimulateOptions sim;
    auto* s_sim = app.add_subcommand("simulate", "Run replicate simulations and emit learning curves");
    s_sim->add_option("model_spec", sim.model_spec, "model_spec.json or a model kind")->required();
    s_sim->add_option("env_config", sim.env_config, "env_config.json (default environment when omitted)");
    s_sim->add_option("--runs", sim.runs, "Replicate runs")->check(CLI::PositiveNumber);
    s_sim->add_option("--trials", sim.trials, "Trials per run")->check(CLI::PositiveNumber);
    s_sim->add_option("--seed", sim.seed, "Base seed");
    s_sim->add_option("--out", sim.out, "Output directory")->required();
    s_sim->add_option("--threads", sim.threads, "Worker threads")->check(CLI::PositiveNumber);
    s_sim->add_option("--id-prefix", sim.id_prefix, "Participant id prefix for the simulated runs");
    s_sim->add_flag("!--no-logs", sim.write_logs, "Skip the raw per-run logs");
    add_format(s_sim);

    // certify
    cli::CertifyOptions cert;
    auto* s_cert = app.add_subcommand("certify", "Solve a meta-MDP exactly and check the resource-rational strategy");
    s_cert->add_option("metamdp_spec", cert.spec, "metamdp_spec.json (reduced maze when omitted)");
    s_cert->add_option("--out", cert.out, "Output directory")->required();
    s_cert->add_flag("!--no-strategy-values", cert.strategy_values, "Skip evaluating the strategy library");
    add_format(s_cert);

    // fit
    cli::FitCommandOptions fit;
    std::string optimizer = "parzen_estimator";
    auto* s_fit = app.add_subcommand("fit", "Fit models to participant logs by maximum likelihood");
    s_fit->add_option("logs_dir", fit.logs_dir, "Directory of trial_log.json files")->required();
    s_fit->add_option("--models", fit.models, "all, or a comma-separated list of model kinds");
    s_fit->add_option("--budget", fit.budget, "Likelihood evaluations per fit")->check(CLI::PositiveNumber);
    s_fit->add_option("--optimizer", optimizer, "Search strategy")
        ->check(CLI::IsMember({"random_search", "coarse_to_fine", "parzen_estimator"}));
    s_fit->add_option("--seed", fit.seed, "Base seed (per-fit seeds are derived from it)");
    s_fit->add_option("--out", fit.out, "Output directory")->required();
    s_fit->add_option("--env", fit.env_config, "env_config.json the logs were generated under");
    s_fit->add_option("--threads", fit.threads, "Worker threads")->check(CLI::PositiveNumber);
    add_format(s_fit);

    // select
    cli::SelectOptions sel;
    auto* s_sel = app.add_subcommand("select", "Family-level Bayesian model selection and best-BIC grouping");
    s_sel->add_option("fit_manifest", sel.manifest, "Fit manifest (CSV or JSON)")->required();
    std::vector<int> levels;
    s_sel->add_option("--level", levels, "Aggregation level(s); all three when omitted")->check(CLI::Range(1, 3));
    s_sel->add_option("--out", sel.out, "Output directory")->required();
    s_sel->add_option("--mc-draws", sel.mc_draws, "Dirichlet draws for exceedance probabilities")->check(CLI::PositiveNumber);
    s_sel->add_option("--seed", sel.seed, "Seed for the exceedance draws");
    add_format(s_sel);

    // analyze
    cli::AnalyzeOptions an;
    std::string grouping = "best_bic";
    auto* s_an = app.add_subcommand("analyze", "Trend statistics and plot-ready tables");
    s_an->add_option("input", an.input, "Logs directory / file, or a curves table")->required();
    s_an->add_option("--grouping", grouping, "Participant grouping")
        ->check(CLI::IsMember({"best_bic", "all_nodes_first_trial"}));
    s_an->add_option("--fits", an.fits, "Fit manifest used for best-BIC grouping");
    s_an->add_option("--out", an.out, "Output directory")->required();
    add_format(s_an);

    // serve
    std::string serve_config;
    std::optional<int> serve_port;
    std::string serve_data;
    auto* s_srv = app.add_subcommand("serve", "Run the experiment service");
    s_srv->add_option("--config", serve_config, "Service config JSON");
    s_srv->add_option("--port", serve_port, "Listen port (MCRL_PORT overrides the config file)");
    s_srv->add_option("--data-dir", serve_data, "Session storage (MCRL_DATA_DIR overrides the config file)");

    // catalog
    fs::path catalog_out;
    auto* s_cat = app.add_subcommand("catalog", "Export the feature catalog");
    s_cat->add_option("--out", catalog_out, "Output directory")->required();
    add_format(s_cat);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        const io::Format fmt = io::parse_format(format);
        if (*s_sim) {
            sim.format = fmt;
            print_manifest(cli::simulate(sim));
        } else if (*s_cert) {
            cert.format = fmt;
            print_manifest(cli::certify(cert));
        } else if (*s_fit) {
            fit.format = fmt;
            fit.optimizer = parse_optimizer(optimizer);
            print_manifest(cli::fit(fit));
        } else if (*s_sel) {
            sel.format = fmt;
            if (!levels.empty()) sel.levels = levels;
            print_manifest(cli::select(sel));
        } else if (*s_an) {
            an.format = fmt;
            an.grouping = cli::parse_grouping(grouping);
            print_manifest(cli::analyze(an));
        } else if (*s_srv) {
            service::ServiceConfig cfg;
            if (!serve_config.empty()) {
                const fs::path p = cli::resolve(serve_config);
                cfg = service::service_config_from_json(io::read_json(p), p.parent_path());
            }
            if (serve_port) cfg.port = *serve_port;
            if (!serve_data.empty()) cfg.data_dir = serve_data;
            service::apply_env_overrides(cfg);
            cfg.data_dir = cli::resolve(cfg.data_dir);
            std::cerr << "serving on " << cfg.host << ":" << cfg.port << " (data in " << cfg.data_dir.string() << ")\n";
            service::serve(cfg);
        } else if (*s_cat) {
            print_manifest(cli::catalog(catalog_out, fmt));
        }
    } catch (const IncompleteInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIncomplete;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
