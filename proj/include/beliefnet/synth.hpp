#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "beliefnet/likert.hpp"
#include "beliefnet/random.hpp"
#include "beliefnet/survey.hpp"

namespace beliefnet {

class SynthError : public Error {
public:
    using Error::Error;
};

using Thresholds = std::array<double, 5>;

inline constexpr Thresholds kDefaultThresholds{-1.5, -0.5, 0.0, 0.5, 1.5};

inline void validate_thresholds(const Thresholds& t) {
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (!(t[i - 1] < t[i])) throw SynthError("thresholds must be strictly ascending");
    }
}

/// Maps a continuous score to the Likert value of the half-open interval
/// [t_i, t_{i+1}) containing it; below t_1 is -3, at or above t_5 is +3.
inline LikertRating discretize(double score, const Thresholds& thresholds = kDefaultThresholds) {
    const auto bin = static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), score) - thresholds.begin());
    return LikertRating::from_value(LikertRating::kValues[bin]);
}

/// Representative continuous response for a label: the midpoint of its
/// interval. The open end bins extend by half the width of their neighbour.
inline double bin_midpoint(LikertRating label, const Thresholds& t = kDefaultThresholds) {
    const auto i = label.index();
    if (i == 0) return t[0] - (t[1] - t[0]) / 2.0;
    if (i == 5) return t[4] + (t[4] - t[3]) / 2.0;
    return (t[i - 1] + t[i]) / 2.0;
}

/// Planted orthogonal-factor model: response = loadings * scores + noise.
struct GenerativeSpec {
    Eigen::MatrixXd loadings;  // topics x factors
    double noise_sd = 0.5;
    Thresholds thresholds = kDefaultThresholds;
    std::size_t respondents = 600;
    std::uint64_t seed = 0;

    Eigen::Index topics() const noexcept { return loadings.rows(); }
    Eigen::Index factors() const noexcept { return loadings.cols(); }
};

struct SimpleStructureOptions {
    double home_min = 0.6;
    double home_max = 0.85;
    double off_max = 0.1;
    double noise_sd = 0.5;
};

/// Each topic loads on exactly one home factor (contiguous, near-equal
/// blocks) with |home| in [home_min, home_max] and |off| <= off_max.
inline GenerativeSpec make_simple_structure_spec(Eigen::Index topics, Eigen::Index factors,
                                                 std::size_t respondents, std::uint64_t seed,
                                                 const SimpleStructureOptions& opt = {}) {
    if (factors < 1 || topics < factors) throw SynthError("need 1 <= factors <= topics");
    auto rng = keyed_rng(seed, "planted-loadings");
    std::uniform_real_distribution<double> home(opt.home_min, opt.home_max);
    std::uniform_real_distribution<double> off(-opt.off_max, opt.off_max);
    GenerativeSpec spec;
    spec.loadings.resize(topics, factors);
    for (Eigen::Index j = 0; j < topics; ++j) {
        const auto h = (j * factors) / topics;
        for (Eigen::Index f = 0; f < factors; ++f) spec.loadings(j, f) = (f == h) ? home(rng) : off(rng);
    }
    spec.noise_sd = opt.noise_sd;
    spec.respondents = respondents;
    spec.seed = seed;
    return spec;
}

/// Index of the factor each planted topic loads on most.
inline std::vector<std::size_t> home_factors(const Eigen::MatrixXd& loadings) {
    std::vector<std::size_t> out(static_cast<std::size_t>(loadings.rows()));
    for (Eigen::Index j = 0; j < loadings.rows(); ++j) {
        Eigen::Index best = 0;
        loadings.row(j).cwiseAbs().maxCoeff(&best);
        out[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
    }
    return out;
}

/// Ground truth behind a generated dataset; the mock agent reads this.
struct WorldArtifact {
    std::vector<Topic> topics;
    std::vector<std::string> respondent_ids;
    Eigen::MatrixXd loadings;  // topics x factors
    Eigen::MatrixXd scores;    // respondents x factors
    Thresholds thresholds = kDefaultThresholds;
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    std::vector<LikertRating> modal_labels;  // per topic

    std::vector<std::size_t> home_factor() const { return home_factors(loadings); }
};

struct Population {
    SurveyDataset dataset;
    WorldArtifact world;
};

namespace detail {

inline std::string two_digit(std::size_t i, std::size_t width) {
    std::string s = std::to_string(i);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

/// Most frequent rating per topic; ties go to the lower value.
inline std::vector<LikertRating> modal_labels(const SurveyDataset& data) {
    std::vector<LikertRating> out;
    for (std::size_t j = 0; j < data.topic_count(); ++j) {
        std::array<std::size_t, 6> counts{};
        for (std::size_t i = 0; i < data.respondent_count(); ++i) ++counts[data.rating(i, j).index()];
        const auto best = static_cast<std::size_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        out.push_back(LikertRating::from_value(LikertRating::kValues[best]));
    }
    return out;
}

}  // namespace detail

inline std::vector<Topic> synthetic_topics(Eigen::Index count) {
    std::vector<Topic> topics;
    const auto width = std::to_string(count).size() < 2 ? 2 : std::to_string(count).size();
    for (Eigen::Index j = 0; j < count; ++j) {
        const auto n = detail::two_digit(static_cast<std::size_t>(j + 1), width);
        topics.push_back(Topic{"t" + n, "Synthetic Topic " + n,
                               "Synthetic proposition " + n + " holds.",
                               "Synthetic proposition " + n + " does not hold.", std::nullopt});
    }
    return topics;
}

/// Draws factor scores ~ N(0, 1), adds Gaussian noise, discretizes. The
/// demographic stream is separate and never touches the ratings.
inline Population generate_population(const GenerativeSpec& spec) {
    validate_thresholds(spec.thresholds);
    if (spec.noise_sd < 0.0) throw SynthError("noise_sd must be non-negative");
    const auto m = spec.topics();
    const auto k = spec.factors();
    if (m < 1 || k < 1) throw SynthError("spec needs at least one topic and one factor");
    const auto n = static_cast<Eigen::Index>(spec.respondents);

    auto score_rng = keyed_rng(spec.seed, "factor-scores");
    auto noise_rng = keyed_rng(spec.seed, "noise");
    auto demo_rng = keyed_rng(spec.seed, "demographics");
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd scores(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index f = 0; f < k; ++f) scores(i, f) = normal(score_rng);

    std::vector<LikertRating> ratings;
    ratings.reserve(static_cast<std::size_t>(n * m));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            double x = spec.loadings.row(j).dot(scores.row(i));
            if (spec.noise_sd > 0.0) x += spec.noise_sd * normal(noise_rng);
            ratings.push_back(discretize(x, spec.thresholds));
        }
    }

    static const std::array<const char*, 2> genders{"Male", "Female"};
    static const std::array<const char*, 4> educations{
        "High school graduate", "Some college but no degree", "Bachelor's degree",
        "Master's degree"};
    static const std::array<const char*, 4> races{"White", "Black or African American", "Asian",
                                                   "Hispanic or Latino"};
    static const std::array<const char*, 4> incomes{"$20,000 - $39,999", "$40,000 - $59,999",
                                                     "$60,000 - $79,999", "$100,000 - $149,999"};
    static const std::array<const char*, 3> city_pops{"10,000 - 49,999", "100,000 - 500,000",
                                                       "More than 1,000,000"};
    static const std::array<const char*, 3> urban{"Urban (City)", "Suburban", "Rural"};
    static const std::array<const char*, 5> states{"Florida", "Ohio", "Texas", "California",
                                                    "New York"};
    static const std::array<const char*, 3> parties{"Democrat", "Republican", "Independent"};
    auto pick = [&](const auto& vocab) {
        std::uniform_int_distribution<std::size_t> d(0, vocab.size() - 1);
        return std::string(vocab[d(demo_rng)]);
    };
    std::uniform_int_distribution<int> age(18, 80);

    std::vector<Respondent> respondents;
    const auto width = std::max<std::size_t>(4, std::to_string(spec.respondents).size());
    for (Eigen::Index i = 0; i < n; ++i) {
        Respondent r;
        r.id = "r" + detail::two_digit(static_cast<std::size_t>(i + 1), width);
        r.demographics.age = age(demo_rng);
        r.demographics.gender = pick(genders);
        r.demographics.education = pick(educations);
        r.demographics.race = pick(races);
        r.demographics.household_income = pick(incomes);
        r.demographics.city_population = pick(city_pops);
        r.demographics.urbanicity = pick(urban);
        r.demographics.state = pick(states);
        r.demographics.political_leaning = pick(parties);
        respondents.push_back(std::move(r));
    }

    Population pop{SurveyDataset(synthetic_topics(m), std::move(respondents), std::move(ratings)), {}};
    auto& w = pop.world;
    w.topics = pop.dataset.topics();
    for (const auto& r : pop.dataset.respondents()) w.respondent_ids.push_back(r.id);
    w.loadings = spec.loadings;
    w.scores = std::move(scores);
    w.thresholds = spec.thresholds;
    w.noise_sd = spec.noise_sd;
    w.seed = spec.seed;
    w.modal_labels = detail::modal_labels(pop.dataset);
    return pop;
}

// ---------------------------------------------------------------------------
// World artifact (JSON)
// ---------------------------------------------------------------------------

inline constexpr int kWorldFormatVersion = 1;

inline nlohmann::json world_to_json(const WorldArtifact& w) {
    using nlohmann::json;
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    json modal = json::array();
    for (auto o : w.modal_labels) modal.push_back(o.value());
    return {{"format", "beliefnet-world"},
            {"version", kWorldFormatVersion},
            {"seed", w.seed},
            {"noise_sd", w.noise_sd},
            {"thresholds", w.thresholds},
            {"topics", manifest_to_json(w.topics)["topics"]},
            {"respondents", w.respondent_ids},
            {"loadings", matrix(w.loadings)},
            {"scores", matrix(w.scores)},
            {"modal_labels", std::move(modal)}};
}

inline WorldArtifact world_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "beliefnet-world") throw SynthError("not a world artifact");
        if (doc.at("version").get<int>() != kWorldFormatVersion) {
            throw SynthError("unsupported world artifact version");
        }
        auto matrix = [](const nlohmann::json& rows, Eigen::Index cols_hint) {
            const auto r = static_cast<Eigen::Index>(rows.size());
            const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : cols_hint;
            Eigen::MatrixXd m(r, c);
            for (Eigen::Index i = 0; i < r; ++i) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c)
                    throw SynthError("ragged matrix in world artifact");
                for (Eigen::Index j = 0; j < c; ++j)
                    m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
            }
            return m;
        };
        WorldArtifact w;
        w.seed = doc.at("seed").get<std::uint64_t>();
        w.noise_sd = doc.at("noise_sd").get<double>();
        w.thresholds = doc.at("thresholds").get<Thresholds>();
        validate_thresholds(w.thresholds);
        w.topics = manifest_from_json(nlohmann::json{{"topics", doc.at("topics")}});
        w.respondent_ids = doc.at("respondents").get<std::vector<std::string>>();
        w.loadings = matrix(doc.at("loadings"), 0);
        w.scores = matrix(doc.at("scores"), w.loadings.cols());
        for (const auto& v : doc.at("modal_labels")) w.modal_labels.push_back(LikertRating::from_value(v.get<int>()));
        if (w.loadings.rows() != static_cast<Eigen::Index>(w.topics.size()) ||
            w.modal_labels.size() != w.topics.size()) {
            throw SynthError("world artifact: topic count mismatch");
        }
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw SynthError(std::string("world artifact: ") + e.what());
    }
}

inline void save_world(const WorldArtifact& w, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << world_to_json(w).dump(1) << "\n";
}

inline WorldArtifact load_world(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    try {
        return world_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SynthError("world artifact '" + path.string() + "': " + e.what());
    }
}

}  // namespace beliefnet
