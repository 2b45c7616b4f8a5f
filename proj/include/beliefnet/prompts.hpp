#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "beliefnet/likert.hpp"
#include "beliefnet/network.hpp"
#include "beliefnet/random.hpp"
#include "beliefnet/survey.hpp"

namespace beliefnet {

class PromptError : public Error {
public:
    using Error::Error;
};

enum class ConditionKind {
    NoDemo,
    Demo,
    TrainSameCategory,
    DemoTrainSameCategory,
    DemoTrainRandomCategory,
    DemoTrainQuery,
};

inline constexpr std::array<ConditionKind, 6> kAllConditionKinds{
    ConditionKind::NoDemo,
    ConditionKind::Demo,
    ConditionKind::TrainSameCategory,
    ConditionKind::DemoTrainRandomCategory,
    ConditionKind::DemoTrainSameCategory,
    ConditionKind::DemoTrainQuery,
};

/// How an agent is constructed for one experiment cell.
struct Condition {
    ConditionKind kind = ConditionKind::NoDemo;
    bool balanced_labels = false;  // pair each training opinion with its reversed framing

    bool includes_demographics() const noexcept {
        return kind != ConditionKind::NoDemo && kind != ConditionKind::TrainSameCategory;
    }
    bool includes_training() const noexcept {
        return kind != ConditionKind::NoDemo && kind != ConditionKind::Demo;
    }
    bool includes_query_opinion() const noexcept { return kind == ConditionKind::DemoTrainQuery; }

    friend bool operator==(const Condition&, const Condition&) = default;
    friend auto operator<=>(const Condition&, const Condition&) = default;
};

/// Identifier used in configs, file names and dumps.
inline std::string condition_key(const Condition& c) {
    std::string key;
    switch (c.kind) {
    case ConditionKind::NoDemo: key = "no-demo"; break;
    case ConditionKind::Demo: key = "demo"; break;
    case ConditionKind::TrainSameCategory: key = "train-same"; break;
    case ConditionKind::DemoTrainSameCategory: key = "demo-train-same"; break;
    case ConditionKind::DemoTrainRandomCategory: key = "demo-train-random"; break;
    case ConditionKind::DemoTrainQuery: key = "demo-train-query"; break;
    }
    if (c.balanced_labels) key += "+balanced";
    return key;
}

/// Row label used in reports.
inline std::string condition_title(const Condition& c) {
    std::string title;
    switch (c.kind) {
    case ConditionKind::NoDemo: title = "No-Demo"; break;
    case ConditionKind::Demo: title = "Demo"; break;
    case ConditionKind::TrainSameCategory: title = "Train [Same Cat.]"; break;
    case ConditionKind::DemoTrainSameCategory: title = "Demo + Train [Same Cat.]"; break;
    case ConditionKind::DemoTrainRandomCategory: title = "Demo + Train [Rand. Cat.]"; break;
    case ConditionKind::DemoTrainQuery: title = "Demo + Same Train + Query"; break;
    }
    if (c.balanced_labels) title += " [Balanced]";
    return title;
}

inline Condition parse_condition(std::string_view key) {
    Condition c;
    constexpr std::string_view suffix = "+balanced";
    if (key.size() > suffix.size() && key.substr(key.size() - suffix.size()) == suffix) {
        c.balanced_labels = true;
        key.remove_suffix(suffix.size());
    }
    for (auto kind : kAllConditionKinds) {
        if (condition_key(Condition{kind, false}) == key) {
            c.kind = kind;
            if (c.balanced_labels && !c.includes_training()) {
                throw PromptError("condition '" + std::string(key) +
                                  "' has no training opinion to balance");
            }
            return c;
        }
    }
    throw PromptError("unknown condition '" + std::string(key) + "'");
}

struct TopicOpinion {
    Topic topic;
    LikertRating opinion;
};

/// System and user messages for one agent query.
struct PromptBundle {
    std::string system_message;
    std::string user_message;
    std::array<std::string_view, 6> expected_option_labels = LikertRating::labels(Vocabulary::InContext);
};

inline constexpr std::string_view kRolePlayPreamble = "You are role playing a real person.";

/// Demographics block, including the role-play preamble.
inline std::string demographics_block(const Demographics& d) {
    std::string s(kRolePlayPreamble);
    s += " You are a " + d.gender + ".";
    s += " You are " + std::to_string(d.age) + " years old.";
    s += " The highest education You have completed is " + d.education + ".";
    s += " Your race is " + d.race + ".";
    s += " Your household income is " + d.household_income + ".";
    s += " The population of your city is " + d.city_population + ".";
    s += " You would characterize your hometown as " + d.urbanicity +
         ", and you are from the state of " + d.state + ".";
    s += " Your political leaning is " + d.political_leaning + ".";
    return s;
}

inline std::string belief_sentence(std::string_view statement, LikertRating opinion) {
    std::string s = "You believe that ";
    s += statement;
    s += " is ";
    s += opinion.label(Vocabulary::InContext);
    s += ".";
    return s;
}

struct SystemMessageRequest {
    Condition condition;
    const Demographics* demographics = nullptr;
    std::optional<TopicOpinion> training;
    std::optional<TopicOpinion> query_opinion;
    // Used only to check that a random-category training topic is really
    // from another category.
    const BeliefNetwork* network = nullptr;
    std::string_view query_topic_id;
};

/// Concatenates, in order: preamble or demographics block, the training
/// opinion (or its balanced pair, in rng order), the query opinion.
inline std::string build_system_message(const SystemMessageRequest& req, Rng& rng) {
    const auto& c = req.condition;
    if (c.includes_demographics() && req.demographics == nullptr) {
        throw PromptError(condition_key(c) + ": demographics required");
    }
    if (c.includes_training() != req.training.has_value()) {
        throw PromptError(condition_key(c) + (req.training ? ": training opinion not allowed"
                                                           : ": training opinion required"));
    }
    if (c.includes_query_opinion() != req.query_opinion.has_value()) {
        throw PromptError(condition_key(c) + (req.query_opinion ? ": query opinion not allowed"
                                                                : ": query opinion required"));
    }
    if (c.balanced_labels && !c.includes_training()) {
        throw PromptError(condition_key(c) + ": balanced labels need a training opinion");
    }
    if (c.kind == ConditionKind::DemoTrainRandomCategory && req.network && !req.query_topic_id.empty()) {
        const auto train = req.network->topic_position(req.training->topic.id);
        const auto query = req.network->topic_position(req.query_topic_id);
        if (!train || !query) throw PromptError("topic missing from belief network");
        if (req.network->category_of[*train] == req.network->category_of[*query]) {
            throw PromptError("random-category training topic '" + req.training->topic.id +
                              "' shares the query topic's category");
        }
    }

    std::string msg = c.includes_demographics() ? demographics_block(*req.demographics)
                                                : std::string(kRolePlayPreamble);
    if (req.training) {
        const auto& t = *req.training;
        const auto original = belief_sentence(t.topic.statement, t.opinion);
        if (c.balanced_labels) {
            if (!t.topic.reversed_statement) {
                throw PromptError("topic '" + t.topic.id + "' has no reversed_statement");
            }
            const auto reversed = belief_sentence(*t.topic.reversed_statement, t.opinion.inverted());
            std::bernoulli_distribution coin(0.5);
            if (coin(rng)) msg += " " + reversed + " " + original;
            else msg += " " + original + " " + reversed;
        } else {
            msg += " " + original;
        }
    }
    if (req.query_opinion) {
        msg += " " + belief_sentence(req.query_opinion->topic.statement, req.query_opinion->opinion);
    }
    return msg;
}

inline constexpr std::string_view kQueryInstruction =
    "Now, what is your opinion on the following statement using the following scale of responses?";
inline constexpr std::string_view kQueryClosing = "Your opinion on the scale of responses:";

/// User message asking for an opinion on `query`.
inline std::string build_query_message(const Topic& query) {
    std::string msg(kQueryInstruction);
    msg += "\n\n";
    const auto labels = LikertRating::labels(Vocabulary::InContext);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) msg += ", ";
        msg += query.statement;
        msg += " is ";
        msg += labels[i];
    }
    msg += ".\n\nStatement: " + query.statement + "\n\n";
    msg += kQueryClosing;
    return msg;
}

inline PromptBundle build_prompt_bundle(const SystemMessageRequest& req, const Topic& query, Rng& rng) {
    return PromptBundle{build_system_message(req, rng), build_query_message(query),
                        LikertRating::labels(Vocabulary::InContext)};
}

/// Outcome of one random-category draw, kept for the cell dump.
struct CategoryDraw {
    std::size_t factor = 0;
    std::size_t training_topic = 0;  // topic position in the network
};

/// Uniform draw over the categories other than the query topic's; returns
/// that category's training topic.
inline CategoryDraw pick_random_category_training(std::string_view query_topic_id,
                                                  const BeliefNetwork& network, Rng& rng) {
    const auto k = network.factor_count();
    if (k < 2) throw PromptError("random-category draw needs at least two categories");
    if (!network.complete()) throw PromptError("belief network has no training topics");
    const auto query = network.topic_position(query_topic_id);
    if (!query) throw PromptError("topic '" + std::string(query_topic_id) + "' not in belief network");
    const auto own = network.category_of[*query];
    std::uniform_int_distribution<std::size_t> dist(0, k - 2);
    auto f = dist(rng);
    if (f >= own) ++f;
    return {f, network.training_topic_of[f]};
}

}  // namespace beliefnet
