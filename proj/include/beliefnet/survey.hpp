#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "beliefnet/csv.hpp"
#include "beliefnet/likert.hpp"

namespace beliefnet {

class SurveyError : public Error {
public:
    using Error::Error;
};

struct Topic {
    std::string id;
    std::string name;
    std::string statement;
    std::optional<std::string> reversed_statement;
    // Category label as published alongside the statement, if any.
    std::optional<std::string> published_category;

    friend bool operator==(const Topic&, const Topic&) = default;
};

struct Demographics {
    int age = 0;
    std::string gender;
    std::string education;
    std::string race;
    std::string household_income;
    std::string city_population;
    std::string urbanicity;
    std::string state;
    std::string political_leaning;

    friend bool operator==(const Demographics&, const Demographics&) = default;
};

/// Column names of the nine demographic fields in the ratings table, in order.
inline constexpr std::array<std::string_view, 9> kDemographicColumns{
    "age",   "gender",          "education", "race",
    "household_income", "city_population", "urbanicity", "state",
    "political_leaning"};

struct Respondent {
    std::string id;
    Demographics demographics;

    friend bool operator==(const Respondent&, const Respondent&) = default;
};

/// A row dropped at ingestion because it was incomplete.
struct RejectedRow {
    std::size_t line = 0;
    std::string respondent_id;
    std::string reason;
};

/// Dense respondents x topics rating matrix. Immutable once built.
class SurveyDataset {
public:
    SurveyDataset() = default;

    /// `ratings` is row-major, respondents.size() x topics.size().
    SurveyDataset(std::vector<Topic> topics, std::vector<Respondent> respondents,
                  std::vector<LikertRating> ratings)
        : topics_(std::move(topics)), respondents_(std::move(respondents)),
          ratings_(std::move(ratings)) {
        if (ratings_.size() != topics_.size() * respondents_.size()) {
            throw SurveyError("rating matrix size does not match respondents x topics");
        }
        std::set<std::string> seen_topics;
        for (std::size_t j = 0; j < topics_.size(); ++j) {
            if (topics_[j].statement.empty()) {
                throw SurveyError("topic '" + topics_[j].id + "' has an empty statement");
            }
            if (!seen_topics.insert(topics_[j].id).second) {
                throw SurveyError("duplicate topic id '" + topics_[j].id + "'");
            }
            topic_index_.emplace(topics_[j].id, j);
        }
        std::set<std::string> seen;
        for (const auto& r : respondents_) {
            if (!seen.insert(r.id).second) {
                throw SurveyError("duplicate respondent_id '" + r.id + "'");
            }
        }
    }

    std::size_t respondent_count() const noexcept { return respondents_.size(); }
    std::size_t topic_count() const noexcept { return topics_.size(); }

    const std::vector<Topic>& topics() const noexcept { return topics_; }
    const std::vector<Respondent>& respondents() const noexcept { return respondents_; }
    const Topic& topic(std::size_t j) const { return topics_.at(j); }
    const Respondent& respondent(std::size_t i) const { return respondents_.at(i); }

    LikertRating rating(std::size_t respondent, std::size_t topic) const {
        return ratings_.at(respondent * topics_.size() + topic);
    }

    std::optional<std::size_t> topic_index(std::string_view id) const {
        auto it = topic_index_.find(std::string(id));
        if (it == topic_index_.end()) return std::nullopt;
        return it->second;
    }

    /// Factor analysis needs at least three complete rows.
    bool usable_for_factor_analysis() const noexcept { return respondents_.size() >= 3; }

    const std::vector<RejectedRow>& rejected_rows() const noexcept { return rejected_; }
    void set_rejected_rows(std::vector<RejectedRow> rows) { rejected_ = std::move(rows); }

    friend bool operator==(const SurveyDataset& a, const SurveyDataset& b) {
        return a.topics_ == b.topics_ && a.respondents_ == b.respondents_ &&
               a.ratings_ == b.ratings_;
    }

private:
    std::vector<Topic> topics_;
    std::vector<Respondent> respondents_;
    std::vector<LikertRating> ratings_;
    std::unordered_map<std::string, std::size_t> topic_index_;
    std::vector<RejectedRow> rejected_;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SurveyError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

inline std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Topic manifest (JSON)
// ---------------------------------------------------------------------------

inline nlohmann::json manifest_to_json(const std::vector<Topic>& topics) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : topics) {
        nlohmann::json j{{"id", t.id}, {"name", t.name}, {"statement", t.statement}};
        if (t.reversed_statement) j["reversed_statement"] = *t.reversed_statement;
        if (t.published_category) j["published_category"] = *t.published_category;
        arr.push_back(std::move(j));
    }
    return {{"format", "beliefnet-topics"}, {"version", 1}, {"topics", std::move(arr)}};
}

inline std::vector<Topic> manifest_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("topics") || !doc["topics"].is_array()) {
        throw SurveyError("topic manifest: expected an object with a 'topics' array");
    }
    std::vector<Topic> topics;
    std::set<std::string> ids;
    for (const auto& j : doc["topics"]) {
        Topic t;
        try {
            t.id = j.at("id").get<std::string>();
            t.name = j.value("name", t.id);
            t.statement = j.at("statement").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw SurveyError(std::string("topic manifest: ") + e.what());
        }
        if (j.contains("reversed_statement") && !j["reversed_statement"].is_null()) {
            t.reversed_statement = j["reversed_statement"].get<std::string>();
        }
        if (j.contains("published_category") && !j["published_category"].is_null()) {
            t.published_category = j["published_category"].get<std::string>();
        }
        if (t.id.empty()) throw SurveyError("topic manifest: empty topic id");
        if (t.statement.empty()) {
            throw SurveyError("topic manifest: topic '" + t.id + "' has an empty statement");
        }
        if (!ids.insert(t.id).second) {
            throw SurveyError("topic manifest: duplicate topic id '" + t.id + "'");
        }
        topics.push_back(std::move(t));
    }
    return topics;
}

inline std::vector<Topic> load_topic_manifest(const std::filesystem::path& path) {
    const auto text = detail::read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SurveyError("topic manifest '" + path.string() + "': " + e.what());
    }
    return manifest_from_json(doc);
}

// ---------------------------------------------------------------------------
// Ratings table (CSV)
// ---------------------------------------------------------------------------

/// Parses a ratings table against a manifest. Rows with a missing rating are
/// dropped and listed in rejected_rows(); every other defect throws.
inline SurveyDataset parse_survey(std::vector<Topic> topics, std::string_view table_text) {
    const auto rows = csv::parse(table_text);
    if (rows.empty()) throw SurveyError("ratings table: missing header row");

    const auto& header = rows.front().fields;
    const std::size_t fixed = 1 + kDemographicColumns.size();
    if (header.size() < fixed || detail::trim(header[0]) != "respondent_id") {
        throw SurveyError("ratings table: first column must be 'respondent_id'");
    }
    for (std::size_t c = 0; c < kDemographicColumns.size(); ++c) {
        if (detail::trim(header[c + 1]) != kDemographicColumns[c]) {
            throw SurveyError("ratings table: column " + std::to_string(c + 2) + " must be '" +
                              std::string(kDemographicColumns[c]) + "'");
        }
    }

    std::unordered_map<std::string, std::size_t> manifest_index;
    for (std::size_t j = 0; j < topics.size(); ++j) manifest_index.emplace(topics[j].id, j);

    // column_topic[c] = manifest position of table column fixed + c
    std::vector<std::size_t> column_topic;
    std::vector<bool> covered(topics.size(), false);
    for (std::size_t c = fixed; c < header.size(); ++c) {
        const auto id = detail::trim(header[c]);
        auto it = manifest_index.find(id);
        if (it == manifest_index.end()) {
            throw SurveyError("ratings table: unknown topic column '" + id + "'");
        }
        if (covered[it->second]) {
            throw SurveyError("ratings table: duplicate topic column '" + id + "'");
        }
        covered[it->second] = true;
        column_topic.push_back(it->second);
    }
    for (std::size_t j = 0; j < topics.size(); ++j) {
        if (!covered[j]) {
            throw SurveyError("ratings table: no column for topic '" + topics[j].id + "'");
        }
    }

    std::vector<Respondent> respondents;
    std::vector<LikertRating> ratings;
    std::vector<RejectedRow> rejected;
    std::set<std::string> ids;

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto where = "ratings table line " + std::to_string(row.line);
        if (row.fields.size() != header.size()) {
            throw SurveyError(where + ": expected " + std::to_string(header.size()) +
                              " fields, found " + std::to_string(row.fields.size()));
        }
        Respondent resp;
        resp.id = detail::trim(row.fields[0]);
        if (resp.id.empty()) throw SurveyError(where + ": empty respondent_id");
        if (!ids.insert(resp.id).second) {
            throw SurveyError(where + ": duplicate respondent_id '" + resp.id + "'");
        }

        std::array<std::string, 9> demo;
        for (std::size_t c = 0; c < demo.size(); ++c) {
            demo[c] = detail::trim(row.fields[c + 1]);
            if (demo[c].empty()) {
                throw SurveyError(where + ": missing demographic field '" +
                                  std::string(kDemographicColumns[c]) + "'");
            }
        }
        const auto age = detail::parse_int(demo[0]);
        if (!age || *age <= 0) {
            throw SurveyError(where + ": age must be a positive integer, got '" + demo[0] + "'");
        }
        resp.demographics = Demographics{*age,    demo[1], demo[2], demo[3], demo[4],
                                         demo[5], demo[6], demo[7], demo[8]};

        std::vector<std::optional<LikertRating>> row_ratings(topics.size());
        std::string missing;
        for (std::size_t c = 0; c < column_topic.size(); ++c) {
            const auto cell = detail::trim(row.fields[fixed + c]);
            const auto& topic_id = topics[column_topic[c]].id;
            if (cell.empty() || cell == "NA") {
                if (missing.empty()) missing = topic_id;
                continue;
            }
            const auto v = detail::parse_int(cell);
            if (!v || !LikertRating::is_valid(*v)) {
                throw SurveyError(where + ", column '" + topic_id + "': rating '" + cell +
                                  "' is not one of -3,-2,-1,1,2,3");
            }
            row_ratings[column_topic[c]] = LikertRating::from_value(*v);
        }
        if (!missing.empty()) {
            rejected.push_back({row.line, resp.id, "missing rating for topic '" + missing + "'"});
            continue;
        }
        for (const auto& o : row_ratings) ratings.push_back(*o);
        respondents.push_back(std::move(resp));
    }

    SurveyDataset dataset(std::move(topics), std::move(respondents), std::move(ratings));
    dataset.set_rejected_rows(std::move(rejected));
    return dataset;
}

inline SurveyDataset load_survey(const std::filesystem::path& topic_manifest,
                                 const std::filesystem::path& ratings_table) {
    auto topics = load_topic_manifest(topic_manifest);
    return parse_survey(std::move(topics), detail::read_file(ratings_table));
}

/// Writes a dataset back out in the ratings-table layout, columns in manifest order.
inline std::string format_ratings_table(const SurveyDataset& data) {
    std::string out;
    std::vector<std::string> header{"respondent_id"};
    for (auto c : kDemographicColumns) header.emplace_back(c);
    for (const auto& t : data.topics()) header.push_back(t.id);
    out += csv::join(header) + "\n";
    for (std::size_t i = 0; i < data.respondent_count(); ++i) {
        const auto& r = data.respondent(i);
        const auto& d = r.demographics;
        std::vector<std::string> fields{r.id,
                                        std::to_string(d.age),
                                        d.gender,
                                        d.education,
                                        d.race,
                                        d.household_income,
                                        d.city_population,
                                        d.urbanicity,
                                        d.state,
                                        d.political_leaning};
        for (std::size_t j = 0; j < data.topic_count(); ++j) {
            fields.push_back(std::to_string(data.rating(i, j).value()));
        }
        out += csv::join(fields) + "\n";
    }
    return out;
}

}  // namespace beliefnet
