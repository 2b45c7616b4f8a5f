#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "beliefnet/prompts.hpp"

namespace beliefnet {

/// One supervised example: demographics in, the respondent's training-topic
/// opinion out.
struct SftRecord {
    std::string respondent_id;
    std::string system_message;
    std::string prompt;
    std::string response;
    LikertRating label = LikertRating::from_value(1);
    std::size_t category = 0;
    std::string training_topic_id;

    friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

namespace detail {

inline std::string without_final_period(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '.')) s.remove_suffix(1);
    return std::string(s);
}

}  // namespace detail

/// Fine-tuning prompt over a topic statement, using the "Maybe" wording.
inline std::string build_sft_prompt(const Topic& topic) {
    const auto s = detail::without_final_period(topic.statement);
    const auto labels = LikertRating::labels(Vocabulary::FineTune);
    std::string p =
        "What is your opinion on the following statement using the following scale of responses?\n\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) p += ", ";
        p += labels[i];
        p += " that " + s;
    }
    p += " Statement: " + s + ".\n\n";
    p += "Please choose your response from the following list of options: ";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) p += ", ";
        p += labels[i];
    }
    p += ".";
    return p;
}

inline std::string build_sft_response(LikertRating label) {
    return "My Response: " + std::string(label.label(Vocabulary::FineTune));
}

/// Records for one category: one per respondent, all over the same training
/// topic. For the random-category condition that topic is drawn once from
/// another category.
inline std::vector<SftRecord> build_sft_dataset(const Condition& cond, const SurveyDataset& dataset,
                                                const BeliefNetwork& network, std::size_t category,
                                                Rng& rng) {
    if (cond.kind != ConditionKind::DemoTrainSameCategory &&
        cond.kind != ConditionKind::DemoTrainRandomCategory) {
        throw PromptError("fine-tuning data exists only for demo-train-same and demo-train-random, not " +
                          condition_key(cond));
    }
    if (!network.complete()) throw PromptError("belief network has no training topics");
    if (category >= network.factor_count()) throw PromptError("category index out of range");

    std::size_t train_pos = network.training_topic_of[category];
    if (cond.kind == ConditionKind::DemoTrainRandomCategory) {
        train_pos = pick_random_category_training(network.topic_ids[train_pos], network, rng).training_topic;
    }
    const auto& train_id = network.topic_ids[train_pos];
    const auto column = dataset.topic_index(train_id);
    if (!column) throw PromptError("training topic '" + train_id + "' missing from dataset");
    const auto& topic = dataset.topic(*column);
    const auto prompt = build_sft_prompt(topic);

    std::vector<SftRecord> records;
    records.reserve(dataset.respondent_count());
    for (std::size_t i = 0; i < dataset.respondent_count(); ++i) {
        const auto& r = dataset.respondent(i);
        const auto label = dataset.rating(i, *column);
        records.push_back(SftRecord{r.id, demographics_block(r.demographics), prompt,
                                    build_sft_response(label), label, category, train_id});
    }
    return records;
}

/// Duplicates records of each present label (drawn with replacement) until
/// every present label has as many records as the most frequent one, then
/// shuffles. Labels that never occur stay absent.
inline std::vector<SftRecord> upsample_balance(const std::vector<SftRecord>& records, Rng& rng) {
    std::array<std::vector<std::size_t>, 6> by_label;
    for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label.index()].push_back(i);
    std::size_t target = 0;
    for (const auto& g : by_label) target = std::max(target, g.size());

    std::vector<SftRecord> out = records;
    for (const auto& g : by_label) {
        if (g.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
        for (std::size_t n = g.size(); n < target; ++n) out.push_back(records[g[pick(rng)]]);
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Chat-transcript line in the hosted fine-tuning format.
inline nlohmann::json sft_record_to_json(const SftRecord& r) {
    return {{"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", r.system_message}},
                                    {{"role", "user"}, {"content", r.prompt}},
                                    {{"role", "assistant"}, {"content", r.response}}})}};
}

struct FineTuneJobConfig {
    std::string base_model = "gpt-3.5-turbo-0125";
    int epochs = 3;
    int batch_size = 1;
    double learning_rate_multiplier = 2.0;
};

inline nlohmann::json job_sidecar(const FineTuneJobConfig& job, const std::string& training_file,
                                  const Condition& cond, const std::string& category_label,
                                  const std::string& training_topic_id, std::size_t records,
                                  std::uint64_t seed) {
    return {{"model", job.base_model},
            {"training_file", training_file},
            {"hyperparameters",
             {{"n_epochs", job.epochs},
              {"batch_size", job.batch_size},
              {"learning_rate_multiplier", job.learning_rate_multiplier}}},
            {"condition", condition_key(cond)},
            {"category", category_label},
            {"training_topic", training_topic_id},
            {"records", records},
            {"seed", seed}};
}

inline void write_sft_jsonl(const std::vector<SftRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (const auto& r : records) out << sft_record_to_json(r).dump() << "\n";
}

}  // namespace beliefnet
