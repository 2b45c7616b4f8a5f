#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>

#include "beliefnet/prompts.hpp"
#include "beliefnet/synth.hpp"

namespace beliefnet {

/// Deterministic stand-in for a chat model, driven by the planted world:
///  - an opinion stated for the query topic itself is echoed;
///  - otherwise an opinion on a topic sharing the query's planted factor is
///    pushed back through the generative model (label -> interval midpoint
///    -> factor score) to predict the query rating;
///  - otherwise the query topic's population-modal label is returned.
class MockOracle {
public:
    explicit MockOracle(WorldArtifact world) : world_(std::move(world)), home_(world_.home_factor()) {
        for (std::size_t j = 0; j < world_.topics.size(); ++j) by_statement_.emplace(world_.topics[j].statement, j);
    }

    const WorldArtifact& world() const noexcept { return world_; }

    std::string respond(const PromptBundle& bundle) const {
        const auto query = query_topic(bundle.user_message);
        return "My Response: " + std::string(predict(bundle.system_message, query).label(Vocabulary::InContext));
    }

    LikertRating predict(const std::string& system_message, std::size_t query) const {
        const auto beliefs = stated_beliefs(system_message);
        for (const auto& [topic, opinion] : beliefs) {
            if (topic == query) return opinion;
        }
        const auto q = static_cast<Eigen::Index>(query);
        const auto f = static_cast<Eigen::Index>(home_[query]);
        for (const auto& [topic, opinion] : beliefs) {
            if (home_[topic] != home_[query]) continue;
            const double train_loading = world_.loadings(static_cast<Eigen::Index>(topic), f);
            const double response = bin_midpoint(opinion, world_.thresholds);
            const double score = std::clamp(response / train_loading, -3.0, 3.0);
            return discretize(world_.loadings(q, f) * score, world_.thresholds);
        }
        return world_.modal_labels[query];
    }

    /// Topic position named on the "Statement:" line of a query message.
    std::size_t query_topic(const std::string& user_message) const {
        static constexpr std::string_view marker = "\n\nStatement: ";
        const auto start = user_message.rfind(marker);
        if (start == std::string::npos) throw Error("mock oracle: query message has no statement line");
        const auto begin = start + marker.size();
        const auto end = user_message.find("\n\n", begin);
        const auto statement = user_message.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
        auto it = by_statement_.find(statement);
        if (it == by_statement_.end()) throw Error("mock oracle: unknown topic statement '" + statement + "'");
        return it->second;
    }

private:
    /// Opinions stated in a system message, in order of appearance; a
    /// reversed framing is mapped back to its original statement.
    std::vector<std::pair<std::size_t, LikertRating>> stated_beliefs(const std::string& system_message) const {
        static constexpr std::string_view lead = "You believe that ";
        std::vector<std::pair<std::size_t, LikertRating>> out;
        const std::string_view msg(system_message);
        for (auto pos = msg.find(lead); pos != std::string_view::npos; pos = msg.find(lead, pos + 1)) {
            const auto rest = msg.substr(pos + lead.size());
            for (std::size_t j = 0; j < world_.topics.size(); ++j) {
                const auto& t = world_.topics[j];
                if (auto o = opinion_after(rest, t.statement)) {
                    out.emplace_back(j, *o);
                    break;
                }
                if (t.reversed_statement) {
                    if (auto o = opinion_after(rest, *t.reversed_statement)) {
                        out.emplace_back(j, o->inverted());
                        break;
                    }
                }
            }
        }
        return out;
    }

    /// If `text` starts with "<statement> is <label>.", the label's rating.
    static std::optional<LikertRating> opinion_after(std::string_view text, std::string_view statement) {
        if (text.substr(0, statement.size()) != statement) return std::nullopt;
        text.remove_prefix(statement.size());
        if (text.substr(0, 4) != " is ") return std::nullopt;
        text.remove_prefix(4);
        for (int v : LikertRating::kValues) {
            const auto label = LikertRating::label_for(v, Vocabulary::InContext);
            if (text.substr(0, label.size()) == label && text.substr(label.size(), 1) == ".") {
                return LikertRating::from_value(v);
            }
        }
        return std::nullopt;
    }

    WorldArtifact world_;
    std::vector<std::size_t> home_;
    std::unordered_map<std::string, std::size_t> by_statement_;
};

}  // namespace beliefnet
