#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "beliefnet/gateway.hpp"
#include "beliefnet/prompts.hpp"
#include "beliefnet/sft.hpp"
#include "beliefnet/synth.hpp"

namespace beliefnet {

struct SynthConfig {
    Eigen::Index topics = 30;
    Eigen::Index factors = 3;
    std::size_t respondents = 600;
    std::uint64_t seed = 7;
    SimpleStructureOptions structure;
    Thresholds thresholds = kDefaultThresholds;
};

struct SftConfig {
    std::vector<std::string> categories;  // factor labels or indices
    std::string condition = "demo-train-same";
    bool upsample = true;
    FineTuneJobConfig job;
};

/// Everything one invocation needs. Every command writes the resolved
/// config back out so the run can be replayed exactly.
struct RunConfig {
    std::string manifest;
    std::string ratings;
    std::optional<SynthConfig> synth;
    std::string world;
    std::string network;
    std::string output_dir = "out";

    std::optional<Eigen::Index> factors;  // overrides the scree elbow
    bool kaiser_normalize = true;
    double tol = 1e-8;
    int max_iter = 1000;
    std::vector<std::string> factor_names;

    std::vector<std::string> conditions{"no-demo",           "demo",           "train-same",
                                        "demo-train-random", "demo-train-same", "demo-train-query"};
    bool balanced_labels = false;
    std::vector<ModelConfig> models{ModelConfig{}};
    std::vector<double> temperatures;
    std::uint64_t seed = 1;
    double coverage_floor = 0.9;
    std::string audit_log;

    SftConfig sft;

    /// Conditions in run order; balanced_labels adds the balanced variant
    /// of demo-train-same when it is not listed already.
    std::vector<Condition> resolved_conditions() const {
        std::vector<Condition> out;
        for (const auto& c : conditions) out.push_back(parse_condition(c));
        if (balanced_labels) {
            const Condition b{ConditionKind::DemoTrainSameCategory, true};
            if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
        }
        return out;
    }
};

inline std::string backend_name(Backend b) { return b == Backend::Live ? "live" : "mock"; }

inline Backend parse_backend(const std::string& s) {
    if (s == "live") return Backend::Live;
    if (s == "mock") return Backend::Mock;
    throw Error("unknown backend '" + s + "' (expected live or mock)");
}

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    json models = json::array();
    for (const auto& m : c.models) {
        models.push_back({{"backend", backend_name(m.backend)},
                          {"name", m.model_name},
                          {"temperature", m.temperature},
                          {"max_retries", m.max_retries},
                          {"parallelism_limit", m.parallelism_limit},
                          {"requests_per_minute", m.requests_per_minute},
                          {"endpoint", m.endpoint},
                          {"api_key_env", m.api_key_env},
                          {"timeout_seconds", m.timeout_seconds},
                          {"retry_backoff_ms", m.retry_backoff_ms}});
    }
    json j{{"manifest", c.manifest},
           {"ratings", c.ratings},
           {"world", c.world},
           {"network", c.network},
           {"output_dir", c.output_dir},
           {"factor_analysis",
            {{"k", c.factors ? json(*c.factors) : json()},
             {"kaiser_normalize", c.kaiser_normalize},
             {"tol", c.tol},
             {"max_iter", c.max_iter},
             {"factor_names", c.factor_names}}},
           {"conditions", c.conditions},
           {"balanced_labels", c.balanced_labels},
           {"models", std::move(models)},
           {"temperatures", c.temperatures},
           {"seed", c.seed},
           {"coverage_floor", c.coverage_floor},
           {"audit_log", c.audit_log},
           {"sft",
            {{"categories", c.sft.categories},
             {"condition", c.sft.condition},
             {"upsample", c.sft.upsample},
             {"base_model", c.sft.job.base_model},
             {"epochs", c.sft.job.epochs},
             {"batch_size", c.sft.job.batch_size},
             {"learning_rate_multiplier", c.sft.job.learning_rate_multiplier}}}};
    if (c.synth) {
        const auto& s = *c.synth;
        j["synth"] = {{"topics", s.topics},
                      {"factors", s.factors},
                      {"respondents", s.respondents},
                      {"seed", s.seed},
                      {"noise_sd", s.structure.noise_sd},
                      {"home_min", s.structure.home_min},
                      {"home_max", s.structure.home_max},
                      {"off_max", s.structure.off_max},
                      {"thresholds", s.thresholds}};
    } else {
        j["synth"] = nullptr;
    }
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.manifest = j.value("manifest", c.manifest);
        c.ratings = j.value("ratings", c.ratings);
        c.world = j.value("world", c.world);
        c.network = j.value("network", c.network);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("factor_analysis")) {
            const auto& fa = j["factor_analysis"];
            if (fa.contains("k") && !fa["k"].is_null()) c.factors = fa["k"].get<Eigen::Index>();
            c.kaiser_normalize = fa.value("kaiser_normalize", c.kaiser_normalize);
            c.tol = fa.value("tol", c.tol);
            c.max_iter = fa.value("max_iter", c.max_iter);
            c.factor_names = fa.value("factor_names", c.factor_names);
        }
        c.conditions = j.value("conditions", c.conditions);
        c.balanced_labels = j.value("balanced_labels", c.balanced_labels);
        if (j.contains("models")) {
            c.models.clear();
            for (const auto& m : j["models"]) {
                ModelConfig mc;
                mc.backend = parse_backend(m.value("backend", std::string("mock")));
                mc.model_name = m.value("name", mc.model_name);
                mc.temperature = m.value("temperature", mc.temperature);
                mc.max_retries = m.value("max_retries", mc.max_retries);
                mc.parallelism_limit = m.value("parallelism_limit", mc.parallelism_limit);
                mc.requests_per_minute = m.value("requests_per_minute", mc.requests_per_minute);
                mc.endpoint = m.value("endpoint", mc.endpoint);
                mc.api_key_env = m.value("api_key_env", mc.api_key_env);
                mc.timeout_seconds = m.value("timeout_seconds", mc.timeout_seconds);
                mc.retry_backoff_ms = m.value("retry_backoff_ms", mc.retry_backoff_ms);
                c.models.push_back(std::move(mc));
            }
        }
        c.temperatures = j.value("temperatures", c.temperatures);
        c.seed = j.value("seed", c.seed);
        c.coverage_floor = j.value("coverage_floor", c.coverage_floor);
        c.audit_log = j.value("audit_log", c.audit_log);
        if (j.contains("synth") && !j["synth"].is_null()) {
            const auto& s = j["synth"];
            SynthConfig sc;
            sc.topics = s.value("topics", sc.topics);
            sc.factors = s.value("factors", sc.factors);
            sc.respondents = s.value("respondents", sc.respondents);
            sc.seed = s.value("seed", sc.seed);
            sc.structure.noise_sd = s.value("noise_sd", sc.structure.noise_sd);
            sc.structure.home_min = s.value("home_min", sc.structure.home_min);
            sc.structure.home_max = s.value("home_max", sc.structure.home_max);
            sc.structure.off_max = s.value("off_max", sc.structure.off_max);
            sc.thresholds = s.value("thresholds", sc.thresholds);
            c.synth = sc;
        }
        if (j.contains("sft")) {
            const auto& s = j["sft"];
            c.sft.categories = s.value("categories", c.sft.categories);
            c.sft.condition = s.value("condition", c.sft.condition);
            c.sft.upsample = s.value("upsample", c.sft.upsample);
            c.sft.job.base_model = s.value("base_model", c.sft.job.base_model);
            c.sft.job.epochs = s.value("epochs", c.sft.job.epochs);
            c.sft.job.batch_size = s.value("batch_size", c.sft.job.batch_size);
            c.sft.job.learning_rate_multiplier = s.value("learning_rate_multiplier", c.sft.job.learning_rate_multiplier);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config '" + path.string() + "'");
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("config '" + path.string() + "': " + e.what());
    }
}

}  // namespace beliefnet
