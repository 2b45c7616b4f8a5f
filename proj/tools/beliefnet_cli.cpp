#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "beliefnet/config.hpp"
#include "beliefnet/eval.hpp"
#include "beliefnet/live_backend.hpp"
#include "beliefnet/mock_oracle.hpp"
#include "beliefnet/network.hpp"
#include "beliefnet/sft.hpp"
#include "beliefnet/survey.hpp"
#include "beliefnet/synth.hpp"

namespace fs = std::filesystem;
using namespace beliefnet;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitDegraded = 2;

/// Command-line values that override the config file when given.
struct Overrides {
    std::string config;
    std::optional<std::string> manifest, ratings, world, network, output_dir, audit_log;
    std::optional<long> factors;
    std::optional<bool> kaiser;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::vector<std::string> factor_names, conditions, temperatures, categories;
    std::optional<bool> balanced;
    std::optional<std::uint64_t> seed;
    std::optional<double> coverage_floor;
    std::optional<std::string> backend, model, endpoint;
    std::optional<int> parallelism, max_retries;
    std::optional<long> synth_topics, synth_factors;
    std::optional<std::size_t> synth_respondents;
    std::optional<std::uint64_t> synth_seed;
    std::optional<double> noise_sd;
};

void add_io_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON run config; flags override its values");
    cmd->add_option("--manifest", o.manifest, "Topic manifest (JSON)");
    cmd->add_option("--ratings", o.ratings, "Ratings table (CSV)");
    cmd->add_option("--world", o.world, "World artifact written by synth (needed by the mock backend)");
    cmd->add_option("-o,--output-dir", o.output_dir, "Directory for all outputs");
    cmd->add_option("--seed", o.seed, "Run seed");
}

void add_synth_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--topics", o.synth_topics, "Synthetic topic count");
    cmd->add_option("--factors", o.synth_factors, "Planted factor count");
    cmd->add_option("--respondents", o.synth_respondents, "Synthetic respondent count");
    cmd->add_option("--synth-seed", o.synth_seed, "Seed of the synthetic world");
    cmd->add_option("--noise-sd", o.noise_sd, "Response noise standard deviation");
}

void add_fit_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-k,--k", o.factors, "Number of factors (default: scree elbow)");
    cmd->add_option("--kaiser", o.kaiser, "Kaiser-normalize before Varimax (true/false)");
    cmd->add_option("--tol", o.tol, "Varimax convergence tolerance");
    cmd->add_option("--max-iter", o.max_iter, "Varimax sweep limit");
    cmd->add_option("--factor-names", o.factor_names, "Labels for the rotated factors, in order");
}

void add_network_option(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--network", o.network, "Network artifact from fit (default: fit now)");
}

void add_run_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--conditions", o.conditions, "Condition keys, e.g. demo demo-train-same");
    cmd->add_option("--balanced", o.balanced, "Add the balanced-label variant (true/false)");
    cmd->add_option("--temperatures", o.temperatures, "Temperatures; each model runs at every one");
    cmd->add_option("--backend", o.backend, "live or mock (replaces configured models)");
    cmd->add_option("--model", o.model, "Model name (replaces configured models)");
    cmd->add_option("--endpoint", o.endpoint, "Chat-completion URL for the live backend");
    cmd->add_option("--parallelism", o.parallelism, "Concurrent requests per model");
    cmd->add_option("--max-retries", o.max_retries, "Retries per query");
    cmd->add_option("--coverage-floor", o.coverage_floor, "Exit 2 when parsed coverage falls below this");
    cmd->add_option("--audit-log", o.audit_log, "Write every request and reply to this JSONL file");
}

RunConfig resolve(const Overrides& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    auto set = [](auto& dst, const auto& src) {
        if (src) dst = *src;
    };
    set(c.manifest, o.manifest);
    set(c.ratings, o.ratings);
    set(c.world, o.world);
    set(c.network, o.network);
    set(c.output_dir, o.output_dir);
    set(c.audit_log, o.audit_log);
    if (o.factors) c.factors = static_cast<Eigen::Index>(*o.factors);
    set(c.kaiser_normalize, o.kaiser);
    set(c.tol, o.tol);
    set(c.max_iter, o.max_iter);
    if (!o.factor_names.empty()) c.factor_names = o.factor_names;
    if (!o.conditions.empty()) c.conditions = o.conditions;
    set(c.balanced_labels, o.balanced);
    if (!o.temperatures.empty()) {
        c.temperatures.clear();
        for (const auto& t : o.temperatures) c.temperatures.push_back(std::stod(t));
    }
    set(c.seed, o.seed);
    set(c.coverage_floor, o.coverage_floor);
    if (o.backend || o.model || o.endpoint) {
        ModelConfig m = c.models.empty() ? ModelConfig{} : c.models.front();
        if (o.backend) m.backend = parse_backend(*o.backend);
        if (o.model) m.model_name = *o.model;
        if (o.endpoint) m.endpoint = *o.endpoint;
        c.models = {m};
    }
    for (auto& m : c.models) {
        if (o.parallelism) m.parallelism_limit = *o.parallelism;
        if (o.max_retries) m.max_retries = *o.max_retries;
    }
    if (!o.categories.empty()) c.sft.categories = o.categories;
    if (o.synth_topics || o.synth_factors || o.synth_respondents || o.synth_seed || o.noise_sd) {
        if (!c.synth) c.synth = SynthConfig{};
        if (o.synth_topics) c.synth->topics = static_cast<Eigen::Index>(*o.synth_topics);
        if (o.synth_factors) c.synth->factors = static_cast<Eigen::Index>(*o.synth_factors);
        set(c.synth->respondents, o.synth_respondents);
        set(c.synth->seed, o.synth_seed);
        set(c.synth->structure.noise_sd, o.noise_sd);
    }
    return c;
}

fs::path out_path(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.output_dir);
    return fs::path(c.output_dir) / name;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

void write_config_echo(const RunConfig& c, const std::string& command) {
    auto j = to_json(c);
    j["command"] = command;
    write_text(out_path(c, "config_echo.json"), j.dump(2) + "\n");
}

Population synthesize(const SynthConfig& s) {
    auto spec = make_simple_structure_spec(s.topics, s.factors, s.respondents, s.seed, s.structure);
    spec.thresholds = s.thresholds;
    return generate_population(spec);
}

/// Dataset and (when synthetic) its world, from files or from the synth spec.
struct Inputs {
    SurveyDataset dataset;
    std::optional<WorldArtifact> world;
};

Inputs load_inputs(const RunConfig& c) {
    if (!c.ratings.empty()) {
        if (c.manifest.empty()) throw Error("--ratings needs --manifest");
        Inputs in{load_survey(c.manifest, c.ratings), std::nullopt};
        for (const auto& r : in.dataset.rejected_rows()) {
            std::cerr << "note: dropped line " << r.line << " (" << r.respondent_id << "): " << r.reason << "\n";
        }
        if (!c.world.empty()) in.world = load_world(c.world);
        return in;
    }
    if (c.synth) {
        auto pop = synthesize(*c.synth);
        return Inputs{std::move(pop.dataset), std::move(pop.world)};
    }
    throw Error("no data: give --ratings with --manifest, or a synth section in the config");
}

FitResult fit(const RunConfig& c, const SurveyDataset& data) {
    FitOptions opt;
    opt.factor_override = c.factors;
    opt.varimax.kaiser_normalize = c.kaiser_normalize;
    opt.varimax.tol = c.tol;
    opt.varimax.max_iter = c.max_iter;
    opt.factor_names = c.factor_names;
    opt.seed = c.seed;
    return fit_belief_network(data, opt);
}

BeliefNetwork network_for(const RunConfig& c, const SurveyDataset& data) {
    if (!c.network.empty()) return import_network(c.network);
    return fit(c, data).network;
}

BackendFactory backend_factory(const std::optional<WorldArtifact>& world) {
    std::shared_ptr<const MockOracle> oracle;
    if (world) oracle = std::make_shared<const MockOracle>(*world);
    return [oracle](const ModelConfig& m) -> std::shared_ptr<ChatBackend> {
        if (m.backend == Backend::Live) return std::make_shared<LiveBackend>(m);
        if (!oracle) throw Error("mock backend needs a world artifact (--world or a synth config)");
        return std::make_shared<MockBackend>(oracle);
    };
}

std::size_t resolve_category(const BeliefNetwork& net, const std::string& name) {
    for (std::size_t f = 0; f < net.factor_count(); ++f) {
        if (net.factor_label(f) == name) return f;
    }
    try {
        std::size_t used = 0;
        const auto idx = std::stoul(name, &used);
        if (used == name.size() && idx >= 1 && idx <= net.factor_count()) return idx - 1;
    } catch (const std::exception&) {
    }
    throw Error("unknown category '" + name + "'");
}

std::string file_stem(std::string label) {
    for (auto& ch : label) {
        if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
    }
    return label;
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& in) {
    RunConfig c = in;
    if (!c.synth) c.synth = SynthConfig{};
    auto pop = synthesize(*c.synth);
    const auto manifest = out_path(c, "topics.json");
    const auto ratings = out_path(c, "ratings.csv");
    const auto world = out_path(c, "world.json");
    write_text(manifest, manifest_to_json(pop.dataset.topics()).dump(2) + "\n");
    write_text(ratings, format_ratings_table(pop.dataset));
    save_world(pop.world, world);
    write_config_echo(c, "synth");
    std::cout << "wrote " << pop.dataset.respondent_count() << " respondents x " << pop.dataset.topic_count()
              << " topics to " << c.output_dir << "\n";
    return kExitOk;
}

int cmd_fit(const RunConfig& c) {
    const auto in = load_inputs(c);
    const auto result = fit(c, in.dataset);
    const auto& net = result.network;
    export_network(net, out_path(c, "network.json"), out_path(c, "network.dot"), in.dataset.topics());

    std::string scree = "factor,eigenvalue,explained_fraction,cumulative_fraction\n";
    const double total = result.spectrum.sum();
    double cumulative = 0.0;
    for (Eigen::Index i = 0; i < result.spectrum.size(); ++i) {
        cumulative += result.spectrum[i];
        scree += csv::join({std::to_string(i + 1), detail::fixed(result.spectrum[i], 6),
                            detail::fixed(result.spectrum[i] / total, 6), detail::fixed(cumulative / total, 6)}) +
                 "\n";
    }
    write_text(out_path(c, "scree.csv"), scree);
    write_config_echo(c, "fit");

    std::cout << net.factor_count() << " factors"
              << (net.settings.factor_count_overridden ? " (override)" : " (scree elbow)") << ", "
              << detail::fixed(100.0 * net.loading_matrix.explained_variance_fraction, 1) << "% variance\n";
    for (std::size_t f = 0; f < net.factor_count(); ++f) {
        std::cout << "  " << net.factor_label(f) << ": " << net.members(f).size() << " topics, training "
                  << net.topic_ids[net.training_topic_of[f]] << "\n";
    }
    if (!result.rotation.converged) std::cerr << "warning: Varimax did not converge\n";
    return kExitOk;
}

int cmd_build_prompts(const RunConfig& c) {
    const auto in = load_inputs(c);
    const auto net = network_for(c, in.dataset);
    std::ofstream out(out_path(c, "prompts.jsonl"), std::ios::binary);
    std::size_t n = 0;
    for (const auto& cond : c.resolved_conditions()) {
        for (std::size_t f = 0; f < net.factor_count(); ++f) {
            const auto tests = net.test_topics(f);
            for (std::size_t i = 0; i < in.dataset.respondent_count(); ++i) {
                for (auto q : tests) {
                    const auto p = make_cell_prompt(in.dataset, net, cond, f, i, q, c.seed);
                    json j{{"condition", condition_key(cond)},
                           {"category", net.factor_label(f)},
                           {"respondent_id", in.dataset.respondent(i).id},
                           {"topic_id", net.topic_ids[q]},
                           {"training_topic_id", p.training_topic_id ? json(*p.training_topic_id) : json()},
                           {"system", p.bundle.system_message},
                           {"user", p.bundle.user_message},
                           {"prompt_sha256", sha256_hex(p.bundle.system_message + "\n\n" + p.bundle.user_message)}};
                    out << j.dump() << "\n";
                    ++n;
                }
            }
        }
    }
    write_config_echo(c, "build-prompts");
    std::cout << "wrote " << n << " prompts\n";
    return kExitOk;
}

int write_report(const RunConfig& c, const AlignmentReport& report) {
    write_text(out_path(c, "report.csv"), report_to_csv(report));
    write_text(out_path(c, "report.json"), report_to_json(report).dump(2) + "\n");
    std::cout << report_to_csv(report);
    if (report.coverage < c.coverage_floor) {
        std::cerr << "warning: parsed coverage " << detail::fixed(report.coverage, 4) << " is below the floor "
                  << detail::fixed(c.coverage_floor, 4) << "\n";
        return kExitDegraded;
    }
    return kExitOk;
}

int cmd_run(const RunConfig& c) {
    const auto in = load_inputs(c);
    const auto net = network_for(c, in.dataset);
    MatrixOptions opt;
    opt.conditions = c.resolved_conditions();
    opt.models = c.models;
    opt.temperatures = c.temperatures;
    opt.seed = c.seed;
    opt.keep_exchanges = !c.audit_log.empty();
    const auto result = run_matrix(in.dataset, net, opt, backend_factory(in.world));

    std::ofstream cells(out_path(c, "cells.jsonl"), std::ios::binary);
    std::ofstream audit;
    if (!c.audit_log.empty()) {
        audit.open(c.audit_log, std::ios::binary);
        if (!audit) throw Error("cannot write '" + c.audit_log + "'");
    }
    for (const auto& run : result.runs) {
        for (const auto& cell : run.cells) {
            cells << cell_to_json(cell).dump() << "\n";
            if (audit.is_open()) {
                for (const auto& e : cell.exchanges) {
                    audit << json{{"respondent_id", cell.respondent_id},
                                  {"topic_id", cell.topic_id},
                                  {"condition", condition_key(cell.condition)},
                                  {"model", cell.model},
                                  {"temperature", cell.temperature},
                                  {"request", e.request},
                                  {"response", e.response},
                                  {"error", e.error}}
                                 .dump()
                          << "\n";
                }
            }
        }
    }
    write_config_echo(c, "run");
    return write_report(c, result.report);
}

int cmd_report(const RunConfig& c, const std::string& cells_path) {
    std::ifstream in(cells_path, std::ios::binary);
    if (!in) throw Error("cannot open '" + cells_path + "'");
    std::vector<CellRecord> cells;
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        cells.push_back(cell_from_json(json::parse(line)));
        const auto& cell = cells.back();
        if (cell.category >= labels.size()) labels.resize(cell.category + 1);
        labels[cell.category] = cell.category_label;
    }
    return write_report(c, build_report(cells, labels));
}

int cmd_export_sft(const RunConfig& c) {
    if (c.sft.categories.empty()) throw Error("export-sft: no categories selected (use --categories)");
    const auto in = load_inputs(c);
    const auto net = network_for(c, in.dataset);
    const auto cond = parse_condition(c.sft.condition);
    for (const auto& name : c.sft.categories) {
        const auto f = resolve_category(net, name);
        const auto label = net.factor_label(f);
        auto rng = keyed_rng(c.seed, "sft", condition_key(cond), label);
        auto records = build_sft_dataset(cond, in.dataset, net, f, rng);
        if (c.sft.upsample) {
            std::array<bool, 6> present{};
            for (const auto& r : records) present[r.label.index()] = true;
            std::string missing;
            for (int v : LikertRating::kValues) {
                if (present[LikertRating::from_value(v).index()]) continue;
                missing += (missing.empty() ? "" : ", ") + std::string(LikertRating::label_for(v, Vocabulary::FineTune));
            }
            if (!missing.empty() && !records.empty()) {
                std::cerr << "note: " << label << " has no records for " << missing
                          << "; balancing over the labels present\n";
            }
            records = upsample_balance(records, rng);
        }
        const auto stem = "sft_" + file_stem(label);
        const auto data = out_path(c, stem + ".jsonl");
        write_sft_jsonl(records, data);
        const auto train_id = records.empty() ? std::string() : records.front().training_topic_id;
        write_text(out_path(c, stem + ".job.json"),
                   job_sidecar(c.sft.job, data.filename().string(), cond, label, train_id, records.size(), c.seed)
                           .dump(2) +
                       "\n");
        std::cout << label << ": " << records.size() << " records -> " << data.string() << "\n";
    }
    write_config_echo(c, "export-sft");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build belief networks from survey data and evaluate role-playing agents against them."};
    app.require_subcommand(1);

    Overrides o;
    std::string cells_path;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic survey with a planted factor structure");
    add_io_options(synth, o);
    add_synth_options(synth, o);

    auto* fit_cmd = app.add_subcommand("fit", "Fit the belief network: factors, categories, training topics");
    add_io_options(fit_cmd, o);
    add_synth_options(fit_cmd, o);
    add_fit_options(fit_cmd, o);

    auto* prompts = app.add_subcommand("build-prompts", "Write every prompt of the matrix for audit");
    add_io_options(prompts, o);
    add_fit_options(prompts, o);
    add_network_option(prompts, o);
    prompts->add_option("--conditions", o.conditions, "Condition keys");
    prompts->add_option("--balanced", o.balanced, "Add the balanced-label variant (true/false)");

    auto* run = app.add_subcommand("run", "Query agents for every condition and write the report");
    add_io_options(run, o);
    add_fit_options(run, o);
    add_network_option(run, o);
    add_run_options(run, o);

    auto* sft = app.add_subcommand("export-sft", "Write fine-tuning files and job settings per category");
    add_io_options(sft, o);
    add_fit_options(sft, o);
    add_network_option(sft, o);
    sft->add_option("--categories", o.categories, "Category labels or 1-based factor numbers");

    auto* report = app.add_subcommand("report", "Rebuild the report from a cells.jsonl file");
    report->add_option("cells", cells_path, "cells.jsonl from a previous run")->required();
    report->add_option("-c,--config", o.config, "JSON run config");
    report->add_option("-o,--output-dir", o.output_dir, "Directory for the report");
    report->add_option("--coverage-floor", o.coverage_floor, "Exit 2 when parsed coverage falls below this");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto config = resolve(o);
        if (*synth) return cmd_synth(config);
        if (*fit_cmd) return cmd_fit(config);
        if (*prompts) return cmd_build_prompts(config);
        if (*run) return cmd_run(config);
        if (*sft) return cmd_export_sft(config);
        if (*report) return cmd_report(config, cells_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFatal;
    }
    return kExitFatal;
}
