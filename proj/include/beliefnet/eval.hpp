#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "beliefnet/gateway.hpp"
#include "beliefnet/hash.hpp"
#include "beliefnet/network.hpp"
#include "beliefnet/prompts.hpp"
#include "beliefnet/random.hpp"

namespace beliefnet {

class EvalError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mean |human - agent| over paired cells; cells without an agent rating
/// are dropped.
inline double mae_test(std::span<const LikertRating> human,
                       std::span<const std::optional<LikertRating>> agent) {
    if (human.size() != agent.size()) throw EvalError("mae_test: collections differ in length");
    long total = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < human.size(); ++i) {
        if (!agent[i]) continue;
        total += absolute_difference(human[i], *agent[i]);
        ++n;
    }
    if (n == 0) throw EvalError("mae_test: no paired ratings");
    return static_cast<double>(total) / static_cast<double>(n);
}

inline double mae_test(std::span<const LikertRating> human, std::span<const LikertRating> agent) {
    std::vector<std::optional<LikertRating>> wrapped(agent.begin(), agent.end());
    return mae_test(human, std::span<const std::optional<LikertRating>>(wrapped));
}

inline constexpr double kGainEpsilon = 1e-9;

/// Share of the baseline-to-upper-bound MAE gap closed by the treatment, in
/// percent. Undefined when the gap is not larger than `epsilon`.
inline std::optional<double> relative_gain(double mae_demo, double mae_treatment, double mae_upper,
                                           double epsilon = kGainEpsilon) {
    const double gap = mae_demo - mae_upper;
    if (!(gap > epsilon)) return std::nullopt;
    return 100.0 * ((mae_demo - mae_treatment) / gap);
}

// ---------------------------------------------------------------------------
// Experiment cells
// ---------------------------------------------------------------------------

/// One (condition, model, temperature, respondent, test topic) query.
struct CellRecord {
    std::string model;
    double temperature = 0.0;
    Condition condition;
    std::size_t category = 0;
    std::string category_label;
    std::string respondent_id;
    std::string topic_id;
    std::optional<std::string> training_topic_id;
    LikertRating human = LikertRating::from_value(1);
    std::optional<LikertRating> agent;
    std::string raw_response;
    int attempts = 0;
    std::optional<std::string> parse_error;
    std::string prompt_sha256;
    std::uint64_t seed = 0;
    std::vector<Exchange> exchanges;  // kept only when auditing
};

/// All cells of one condition x category x model x temperature.
struct ConditionRun {
    Condition condition;
    std::size_t category = 0;
    std::string category_label;
    std::string model;
    double temperature = 0.0;
    std::uint64_t seed = 0;
    std::vector<CellRecord> cells;
};

inline nlohmann::json cell_to_json(const CellRecord& c) {
    nlohmann::json j{{"model", c.model},
                     {"temperature", c.temperature},
                     {"condition", condition_key(c.condition)},
                     {"category", c.category},
                     {"category_label", c.category_label},
                     {"respondent_id", c.respondent_id},
                     {"topic_id", c.topic_id},
                     {"training_topic_id", c.training_topic_id ? nlohmann::json(*c.training_topic_id) : nlohmann::json()},
                     {"human", c.human.value()},
                     {"agent", c.agent ? nlohmann::json(c.agent->value()) : nlohmann::json()},
                     {"raw_response", c.raw_response},
                     {"attempts", c.attempts},
                     {"parse_error", c.parse_error ? nlohmann::json(*c.parse_error) : nlohmann::json()},
                     {"prompt_sha256", c.prompt_sha256},
                     {"seed", c.seed}};
    return j;
}

inline CellRecord cell_from_json(const nlohmann::json& j) {
    try {
        CellRecord c;
        c.model = j.at("model").get<std::string>();
        c.temperature = j.at("temperature").get<double>();
        c.condition = parse_condition(j.at("condition").get<std::string>());
        c.category = j.at("category").get<std::size_t>();
        c.category_label = j.at("category_label").get<std::string>();
        c.respondent_id = j.at("respondent_id").get<std::string>();
        c.topic_id = j.at("topic_id").get<std::string>();
        if (!j.at("training_topic_id").is_null()) c.training_topic_id = j["training_topic_id"].get<std::string>();
        c.human = LikertRating::from_value(j.at("human").get<int>());
        if (!j.at("agent").is_null()) c.agent = LikertRating::from_value(j["agent"].get<int>());
        c.raw_response = j.at("raw_response").get<std::string>();
        c.attempts = j.at("attempts").get<int>();
        if (!j.at("parse_error").is_null()) c.parse_error = j["parse_error"].get<std::string>();
        c.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(std::string("cell record: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct GainRow {
    Condition treatment;
    std::vector<std::optional<double>> per_category;
    std::optional<double> mean;  // mean of the defined per-category gains
};

/// Table for one model at one temperature: conditions x categories.
struct ReportBlock {
    std::string model;
    double temperature = 0.0;
    std::vector<std::string> category_labels;
    std::vector<Condition> conditions;
    std::vector<std::vector<std::optional<double>>> mae;  // [condition][category]
    std::vector<std::optional<double>> average;           // per condition, mean over categories
    std::vector<double> coverage;                         // per condition, parsed / total
    std::vector<GainRow> gains;
};

struct AlignmentReport {
    std::vector<ReportBlock> blocks;
    double coverage = 1.0;  // over every cell
};

namespace detail {

inline std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& xs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& x : xs) {
        if (x) {
            sum += *x;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

inline std::optional<std::size_t> find_condition(const std::vector<Condition>& cs, Condition c) {
    for (std::size_t i = 0; i < cs.size(); ++i)
        if (cs[i] == c) return i;
    return std::nullopt;
}

}  // namespace detail

/// Aggregates cells into per-(model, temperature) tables. MAE is the mean
/// over every (respondent, test topic) cell of a category; averages are
/// arithmetic means over categories; gains are anchored on Demo and the
/// Demo + Train + Query upper bound.
inline AlignmentReport build_report(const std::vector<CellRecord>& cells,
                                    const std::vector<std::string>& category_labels) {
    AlignmentReport report;
    std::size_t parsed_total = 0;

    // Preserve first-appearance order of blocks and conditions.
    std::vector<std::pair<std::string, double>> block_keys;
    std::map<std::pair<std::string, double>, std::vector<const CellRecord*>> by_block;
    for (const auto& c : cells) {
        const auto key = std::make_pair(c.model, c.temperature);
        if (!by_block.count(key)) block_keys.push_back(key);
        by_block[key].push_back(&c);
        if (c.agent) ++parsed_total;
    }
    report.coverage = cells.empty() ? 1.0 : static_cast<double>(parsed_total) / static_cast<double>(cells.size());

    const std::size_t k = category_labels.size();
    for (const auto& key : block_keys) {
        ReportBlock block;
        block.model = key.first;
        block.temperature = key.second;
        block.category_labels = category_labels;
        struct Acc {
            long abs_sum = 0;
            std::size_t paired = 0;
        };
        std::vector<std::vector<Acc>> acc;
        std::vector<std::size_t> total, parsed;
        for (const auto* c : by_block[key]) {
            if (c->category >= k) throw EvalError("cell category index out of range");
            auto idx = detail::find_condition(block.conditions, c->condition);
            if (!idx) {
                block.conditions.push_back(c->condition);
                acc.emplace_back(k);
                total.push_back(0);
                parsed.push_back(0);
                idx = block.conditions.size() - 1;
            }
            ++total[*idx];
            if (c->agent) {
                ++parsed[*idx];
                acc[*idx][c->category].abs_sum += absolute_difference(c->human, *c->agent);
                ++acc[*idx][c->category].paired;
            }
        }
        for (std::size_t ci = 0; ci < block.conditions.size(); ++ci) {
            std::vector<std::optional<double>> row(k);
            for (std::size_t f = 0; f < k; ++f) {
                if (acc[ci][f].paired) {
                    row[f] = static_cast<double>(acc[ci][f].abs_sum) / static_cast<double>(acc[ci][f].paired);
                }
            }
            block.average.push_back(detail::mean_of_defined(row));
            block.mae.push_back(std::move(row));
            block.coverage.push_back(total[ci] ? static_cast<double>(parsed[ci]) / static_cast<double>(total[ci]) : 0.0);
        }

        const auto demo = detail::find_condition(block.conditions, {ConditionKind::Demo, false});
        const auto upper = detail::find_condition(block.conditions, {ConditionKind::DemoTrainQuery, false});
        if (demo && upper) {
            for (const Condition t : {Condition{ConditionKind::DemoTrainSameCategory, false},
                                      Condition{ConditionKind::DemoTrainSameCategory, true},
                                      Condition{ConditionKind::TrainSameCategory, false},
                                      Condition{ConditionKind::DemoTrainRandomCategory, false}}) {
                const auto ti = detail::find_condition(block.conditions, t);
                if (!ti) continue;
                GainRow g{t, std::vector<std::optional<double>>(k), std::nullopt};
                for (std::size_t f = 0; f < k; ++f) {
                    const auto& d = block.mae[*demo][f];
                    const auto& x = block.mae[*ti][f];
                    const auto& u = block.mae[*upper][f];
                    if (d && x && u) g.per_category[f] = relative_gain(*d, *x, *u);
                }
                g.mean = detail::mean_of_defined(g.per_category);
                block.gains.push_back(std::move(g));
            }
        }
        report.blocks.push_back(std::move(block));
    }
    return report;
}

namespace detail {

inline std::string fixed(std::optional<double> v, int digits) {
    if (!v) return "NA";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    const double x = (std::abs(*v) < 0.5 * std::pow(10.0, -digits)) ? 0.0 : *v;
    os << x;
    return os.str();
}

inline std::string gain_title(const Condition& c) {
    if (c == Condition{ConditionKind::DemoTrainSameCategory, false}) return "Relative Gain (%)";
    return "Relative Gain (%) [" + condition_title(c) + " vs Demo]";
}

}  // namespace detail

/// Delimited table in the layout of the published results table: one row per
/// condition, one column per category, then Average and Coverage, followed
/// by the relative-gain rows.
inline std::string report_to_csv(const AlignmentReport& report) {
    std::ostringstream os;
    for (std::size_t b = 0; b < report.blocks.size(); ++b) {
        const auto& block = report.blocks[b];
        const auto temp = detail::fixed(block.temperature, 2);
        if (b == 0) {
            std::vector<std::string> header{"Model", "Temperature", "Condition"};
            for (const auto& l : block.category_labels) header.push_back(l);
            header.push_back("Average");
            header.push_back("Coverage");
            os << csv::join(header) << "\n";
        }
        for (std::size_t ci = 0; ci < block.conditions.size(); ++ci) {
            std::vector<std::string> row{block.model, temp, condition_title(block.conditions[ci])};
            for (const auto& v : block.mae[ci]) row.push_back(detail::fixed(v, 4));
            row.push_back(detail::fixed(block.average[ci], 4));
            row.push_back(detail::fixed(block.coverage[ci], 4));
            os << csv::join(row) << "\n";
        }
        for (const auto& g : block.gains) {
            std::vector<std::string> row{block.model, temp, detail::gain_title(g.treatment)};
            for (const auto& v : g.per_category) row.push_back(detail::fixed(v, 2));
            row.push_back(detail::fixed(g.mean, 2));
            row.push_back("");
            os << csv::join(row) << "\n";
        }
    }
    return os.str();
}

inline nlohmann::json report_to_json(const AlignmentReport& report) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(); };
    json blocks = json::array();
    for (const auto& block : report.blocks) {
        json rows = json::array();
        for (std::size_t ci = 0; ci < block.conditions.size(); ++ci) {
            json mae = json::array();
            for (const auto& v : block.mae[ci]) mae.push_back(opt(v));
            rows.push_back({{"condition", condition_key(block.conditions[ci])},
                            {"title", condition_title(block.conditions[ci])},
                            {"mae", std::move(mae)},
                            {"average", opt(block.average[ci])},
                            {"coverage", block.coverage[ci]}});
        }
        json gains = json::array();
        for (const auto& g : block.gains) {
            json per = json::array();
            for (const auto& v : g.per_category) per.push_back(opt(v));
            gains.push_back({{"treatment", condition_key(g.treatment)},
                             {"baseline", "demo"},
                             {"upper_bound", "demo-train-query"},
                             {"title", detail::gain_title(g.treatment)},
                             {"per_category", std::move(per)},
                             {"mean_of_category_gains", opt(g.mean)}});
        }
        blocks.push_back({{"model", block.model},
                          {"temperature", block.temperature},
                          {"categories", block.category_labels},
                          {"rows", std::move(rows)},
                          {"relative_gain", std::move(gains)}});
    }
    return {{"format", "beliefnet-report"}, {"version", 1}, {"coverage", report.coverage}, {"blocks", std::move(blocks)}};
}

// ---------------------------------------------------------------------------
// Matrix runner
// ---------------------------------------------------------------------------

using BackendFactory = std::function<std::shared_ptr<ChatBackend>(const ModelConfig&)>;

struct MatrixOptions {
    std::vector<Condition> conditions;
    std::vector<ModelConfig> models;
    std::vector<double> temperatures;  // empty: use each model's own temperature
    std::uint64_t seed = 0;
    bool keep_exchanges = false;
};

struct MatrixResult {
    std::vector<ConditionRun> runs;
    AlignmentReport report;

    std::vector<CellRecord> cells() const {
        std::vector<CellRecord> out;
        for (const auto& r : runs) out.insert(out.end(), r.cells.begin(), r.cells.end());
        return out;
    }
};

inline std::vector<std::string> category_labels(const BeliefNetwork& net) {
    std::vector<std::string> out;
    for (std::size_t f = 0; f < net.factor_count(); ++f) out.push_back(net.factor_label(f));
    return out;
}

struct CellPrompt {
    PromptBundle bundle;
    std::optional<std::string> training_topic_id;
};

/// Prompt for one cell. The random-category draw and the balanced-label
/// order come from streams keyed by (seed, respondent, query topic), so they
/// are identical across models, temperatures and runs.
inline CellPrompt make_cell_prompt(const SurveyDataset& dataset, const BeliefNetwork& network,
                                   const Condition& cond, std::size_t category, std::size_t respondent,
                                   std::size_t query_topic, std::uint64_t seed) {
    auto column = [&](std::size_t pos) {
        const auto c = dataset.topic_index(network.topic_ids[pos]);
        if (!c) throw EvalError("network topic '" + network.topic_ids[pos] + "' missing from dataset");
        return *c;
    };
    const auto& resp = dataset.respondent(respondent);
    const auto& query = dataset.topic(column(query_topic));

    CellPrompt out;
    SystemMessageRequest req;
    req.condition = cond;
    req.demographics = &resp.demographics;
    req.network = &network;
    req.query_topic_id = query.id;
    if (cond.includes_training()) {
        std::size_t train = network.training_topic_of.at(category);
        if (cond.kind == ConditionKind::DemoTrainRandomCategory) {
            auto draw_rng = keyed_rng(seed, "random-category", resp.id, query.id);
            train = pick_random_category_training(query.id, network, draw_rng).training_topic;
        }
        out.training_topic_id = network.topic_ids[train];
        req.training = TopicOpinion{dataset.topic(column(train)), dataset.rating(respondent, column(train))};
    }
    if (cond.includes_query_opinion()) {
        req.query_opinion = TopicOpinion{query, dataset.rating(respondent, column(query_topic))};
    }
    auto order_rng = keyed_rng(seed, "balanced-order", condition_key(cond), resp.id, query.id);
    out.bundle = build_prompt_bundle(req, query, order_rng);
    return out;
}

/// Runs every condition x category x model x temperature cell over every
/// respondent and test topic. Results are keyed by position, never by
/// completion order, so the output does not depend on parallelism.
inline MatrixResult run_matrix(const SurveyDataset& dataset, const BeliefNetwork& network,
                               const MatrixOptions& options, const BackendFactory& make_backend) {
    if (!network.complete()) throw EvalError("belief network has no training topics");
    if (options.models.empty()) throw EvalError("no models configured");
    std::vector<std::size_t> column(network.topic_count());
    for (std::size_t j = 0; j < network.topic_count(); ++j) {
        const auto c = dataset.topic_index(network.topic_ids[j]);
        if (!c) throw EvalError("network topic '" + network.topic_ids[j] + "' missing from dataset");
        column[j] = *c;
    }
    const auto labels = category_labels(network);

    std::vector<ModelConfig> blocks;
    for (const auto& m : options.models) {
        if (options.temperatures.empty()) {
            blocks.push_back(m);
        } else {
            for (double t : options.temperatures) {
                auto copy = m;
                copy.temperature = t;
                blocks.push_back(copy);
            }
        }
    }

    MatrixResult result;
    for (const auto& cfg : blocks) {
        cfg.validate();
        Gateway gateway(cfg, make_backend(cfg));

        // Lay out every run and cell before any query is sent.
        struct Job {
            std::size_t run;
            std::size_t cell;
            std::size_t respondent;
            std::size_t topic;  // network position
        };
        std::vector<Job> jobs;
        for (const auto& cond : options.conditions) {
            for (std::size_t f = 0; f < network.factor_count(); ++f) {
                ConditionRun run{cond, f, labels[f], cfg.model_name, cfg.temperature, options.seed, {}};
                const auto tests = network.test_topics(f);
                const auto run_index = result.runs.size();
                for (std::size_t i = 0; i < dataset.respondent_count(); ++i) {
                    for (auto q : tests) {
                        jobs.push_back({run_index, run.cells.size(), i, q});
                        CellRecord cell;
                        cell.model = cfg.model_name;
                        cell.temperature = cfg.temperature;
                        cell.condition = cond;
                        cell.category = f;
                        cell.category_label = labels[f];
                        cell.respondent_id = dataset.respondent(i).id;
                        cell.topic_id = network.topic_ids[q];
                        cell.human = dataset.rating(i, column[q]);
                        cell.seed = options.seed;
                        run.cells.push_back(std::move(cell));
                    }
                }
                result.runs.push_back(std::move(run));
            }
        }

        auto execute = [&](const Job& job) {
            auto& run = result.runs[job.run];
            auto& cell = run.cells[job.cell];
            const auto prompt = make_cell_prompt(dataset, network, run.condition, run.category,
                                                 job.respondent, job.topic, options.seed);
            const auto& bundle = prompt.bundle;
            cell.training_topic_id = prompt.training_topic_id;
            cell.prompt_sha256 = sha256_hex(bundle.system_message + "\n\n" + bundle.user_message);

            auto response = gateway.query(bundle);
            cell.agent = response.parsed;
            cell.parse_error = response.parse_error;
            cell.raw_response = response.raw_text;
            cell.attempts = response.attempt_count;
            if (options.keep_exchanges) cell.exchanges = std::move(response.exchanges);
        };

        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&] {
            for (;;) {
                if (failed.load()) return;
                const auto i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                try {
                    execute(jobs[i]);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        };
        const auto threads = static_cast<std::size_t>(std::max(1, cfg.parallelism_limit));
        if (threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        if (error) std::rethrow_exception(error);
    }

    result.report = build_report(result.cells(), labels);
    return result;
}

}  // namespace beliefnet
