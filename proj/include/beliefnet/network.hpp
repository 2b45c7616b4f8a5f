#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "beliefnet/factor_analysis.hpp"

namespace beliefnet {

/// Settings the network was fitted with; echoed into the artifact.
struct FitSettings {
    Eigen::Index factors = 0;
    bool factor_count_overridden = false;
    bool kaiser_normalize = true;
    double tol = 1e-8;
    int max_iter = 1000;
    bool converged = true;
    std::uint64_t seed = 0;

    friend bool operator==(const FitSettings&, const FitSettings&) = default;
};

/// Topics grouped by the latent factor they load on most, with one
/// training topic per group.
struct BeliefNetwork {
    std::vector<std::string> topic_ids;      // manifest order
    LoadingMatrix loading_matrix;            // rotated
    std::vector<std::size_t> category_of;    // topic position -> factor
    std::vector<std::size_t> training_topic_of;  // factor -> topic position; empty until selected
    std::vector<std::string> factor_names;   // optional user labels
    FitSettings settings;

    std::size_t factor_count() const noexcept {
        return static_cast<std::size_t>(loading_matrix.factors());
    }
    std::size_t topic_count() const noexcept { return topic_ids.size(); }
    bool complete() const noexcept { return training_topic_of.size() == factor_count(); }

    std::string factor_label(std::size_t f) const {
        if (f < factor_names.size() && !factor_names[f].empty()) return factor_names[f];
        return "Factor" + std::to_string(f + 1);
    }

    std::optional<std::size_t> topic_position(std::string_view id) const {
        for (std::size_t j = 0; j < topic_ids.size(); ++j)
            if (topic_ids[j] == id) return j;
        return std::nullopt;
    }

    std::vector<std::size_t> members(std::size_t factor) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < category_of.size(); ++j)
            if (category_of[j] == factor) out.push_back(j);
        return out;
    }

    /// Members of the category other than its training topic.
    std::vector<std::size_t> test_topics(std::size_t factor) const {
        auto all = members(factor);
        std::erase(all, training_topic_of.at(factor));
        return all;
    }

    double loading(std::size_t topic, std::size_t factor) const {
        return loading_matrix.loadings(static_cast<Eigen::Index>(topic),
                                       static_cast<Eigen::Index>(factor));
    }
};

/// Each topic goes to the factor with the largest |loading|; ties go to the
/// lower factor index.
inline BeliefNetwork assign_categories(const LoadingMatrix& loadings,
                                       std::vector<std::string> topic_ids) {
    if (static_cast<Eigen::Index>(topic_ids.size()) != loadings.topics()) {
        throw FactorError("assign_categories: topic id count does not match loading rows");
    }
    BeliefNetwork net;
    net.topic_ids = std::move(topic_ids);
    net.loading_matrix = loadings;
    net.category_of.resize(net.topic_ids.size());
    for (Eigen::Index j = 0; j < loadings.topics(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index f = 1; f < loadings.factors(); ++f) {
            if (std::abs(loadings.loadings(j, f)) > std::abs(loadings.loadings(j, best))) best = f;
        }
        net.category_of[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
    }
    net.settings.factors = loadings.factors();
    return net;
}

/// Per factor, the member with the largest |loading| on it; ties go to the
/// earlier topic in manifest order.
inline BeliefNetwork select_training_topics(BeliefNetwork network) {
    network.training_topic_of.assign(network.factor_count(), 0);
    for (std::size_t f = 0; f < network.factor_count(); ++f) {
        const auto members = network.members(f);
        if (members.empty()) {
            throw FactorError("category " + network.factor_label(f) +
                              " has no topics; the factor count is too high for this data");
        }
        std::size_t best = members.front();
        for (auto j : members) {
            if (std::abs(network.loading(j, f)) > std::abs(network.loading(best, f))) best = j;
        }
        network.training_topic_of[f] = best;
    }
    return network;
}

// ---------------------------------------------------------------------------
// Full fit
// ---------------------------------------------------------------------------

struct FitOptions {
    std::optional<Eigen::Index> factor_override;
    VarimaxOptions varimax;
    std::vector<std::string> factor_names;
    std::uint64_t seed = 0;
};

struct FitResult {
    BeliefNetwork network;
    Eigen::VectorXd spectrum;  // all eigenvalues, descending
    VarimaxResult rotation;
};

/// correlation -> PCA -> Varimax -> categories -> training topics.
inline FitResult fit_belief_network(const SurveyDataset& dataset, const FitOptions& options = {}) {
    if (!dataset.usable_for_factor_analysis()) {
        throw FactorError("dataset has " + std::to_string(dataset.respondent_count()) +
                          " complete respondents; factor analysis needs at least 3");
    }
    const auto corr = correlation_matrix(dataset);
    FitResult out;
    out.spectrum = eigen_spectrum(corr);
    const auto k = select_factor_count(out.spectrum, options.factor_override);
    const auto raw = pca_extract(corr, k);
    out.rotation = varimax_rotate(raw, options.varimax);

    std::vector<std::string> ids;
    for (const auto& t : dataset.topics()) ids.push_back(t.id);
    auto net = assign_categories(out.rotation.rotated, std::move(ids));
    net.factor_names = options.factor_names;
    net.settings = FitSettings{k,
                               options.factor_override.has_value(),
                               options.varimax.kaiser_normalize,
                               options.varimax.tol,
                               options.varimax.max_iter,
                               out.rotation.converged,
                               options.seed};
    out.network = select_training_topics(std::move(net));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline double round6(double x) {
    const double r = std::round(x * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;  // no negative zero
}

}  // namespace detail

/// Network artifact. Loadings and eigenvalues are written rounded to six
/// decimal places, row-major.
inline nlohmann::json network_to_json(const BeliefNetwork& net) {
    using nlohmann::json;
    const auto& lm = net.loading_matrix;
    json loadings = json::array();
    for (Eigen::Index j = 0; j < lm.topics(); ++j) {
        json row = json::array();
        for (Eigen::Index f = 0; f < lm.factors(); ++f) row.push_back(detail::round6(lm.loadings(j, f)));
        loadings.push_back(std::move(row));
    }
    json eig = json::array();
    for (Eigen::Index f = 0; f < lm.eigenvalues.size(); ++f) eig.push_back(detail::round6(lm.eigenvalues(f)));

    json categories = json::object();
    for (std::size_t j = 0; j < net.topic_ids.size(); ++j)
        categories[net.topic_ids[j]] = net.category_of[j];

    json factors = json::array();
    for (std::size_t f = 0; f < net.factor_count(); ++f) {
        json entry{{"index", f}, {"label", net.factor_label(f)}};
        if (net.complete()) entry["training_topic"] = net.topic_ids[net.training_topic_of[f]];
        factors.push_back(std::move(entry));
    }

    return {{"format", "beliefnet-network"},
            {"version", 1},
            {"topics", net.topic_ids},
            {"factor_names", net.factor_names},
            {"loadings", std::move(loadings)},
            {"eigenvalues", std::move(eig)},
            {"explained_variance_fraction", detail::round6(lm.explained_variance_fraction)},
            {"categories", std::move(categories)},
            {"factors", std::move(factors)},
            {"config",
             {{"k", net.settings.factors},
              {"k_overridden", net.settings.factor_count_overridden},
              {"kaiser_normalize", net.settings.kaiser_normalize},
              {"tol", net.settings.tol},
              {"max_iter", net.settings.max_iter},
              {"converged", net.settings.converged},
              {"seed", net.settings.seed}}}};
}

inline BeliefNetwork network_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "beliefnet-network") throw FactorError("not a network artifact");
        BeliefNetwork net;
        net.topic_ids = doc.at("topics").get<std::vector<std::string>>();
        net.factor_names = doc.at("factor_names").get<std::vector<std::string>>();
        const auto& rows = doc.at("loadings");
        const auto m = static_cast<Eigen::Index>(net.topic_ids.size());
        const auto& eig = doc.at("eigenvalues");
        const auto k = static_cast<Eigen::Index>(eig.size());
        if (static_cast<Eigen::Index>(rows.size()) != m) throw FactorError("loading row count mismatch");
        net.loading_matrix.loadings.resize(m, k);
        net.loading_matrix.eigenvalues.resize(k);
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto& row = rows.at(static_cast<std::size_t>(j));
            if (static_cast<Eigen::Index>(row.size()) != k) throw FactorError("loading column count mismatch");
            for (Eigen::Index f = 0; f < k; ++f)
                net.loading_matrix.loadings(j, f) = row.at(static_cast<std::size_t>(f)).get<double>();
        }
        for (Eigen::Index f = 0; f < k; ++f)
            net.loading_matrix.eigenvalues(f) = eig.at(static_cast<std::size_t>(f)).get<double>();
        net.loading_matrix.explained_variance_fraction = doc.at("explained_variance_fraction").get<double>();

        const auto& cats = doc.at("categories");
        net.category_of.resize(net.topic_ids.size());
        for (std::size_t j = 0; j < net.topic_ids.size(); ++j) {
            const auto f = cats.at(net.topic_ids[j]).get<std::size_t>();
            if (f >= static_cast<std::size_t>(k)) throw FactorError("category index out of range");
            net.category_of[j] = f;
        }
        const auto& factors = doc.at("factors");
        bool have_training = !factors.empty();
        for (const auto& entry : factors) have_training = have_training && entry.contains("training_topic");
        if (have_training) {
            net.training_topic_of.resize(static_cast<std::size_t>(k));
            for (const auto& entry : factors) {
                const auto f = entry.at("index").get<std::size_t>();
                const auto pos = net.topic_position(entry.at("training_topic").get<std::string>());
                if (!pos || f >= net.training_topic_of.size()) throw FactorError("bad training topic entry");
                net.training_topic_of[f] = *pos;
            }
        }
        const auto& cfg = doc.at("config");
        net.settings.factors = cfg.at("k").get<Eigen::Index>();
        net.settings.factor_count_overridden = cfg.at("k_overridden").get<bool>();
        net.settings.kaiser_normalize = cfg.at("kaiser_normalize").get<bool>();
        net.settings.tol = cfg.at("tol").get<double>();
        net.settings.max_iter = cfg.at("max_iter").get<int>();
        net.settings.converged = cfg.at("converged").get<bool>();
        net.settings.seed = cfg.at("seed").get<std::uint64_t>();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw FactorError(std::string("network artifact: ") + e.what());
    }
}

/// Graphviz source: one hub per factor, one leaf per topic, training topics
/// filled grey.
inline std::string network_to_dot(const BeliefNetwork& net,
                                  const std::vector<Topic>& topics = {}) {
    auto quote = [](std::string_view s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') out.push_back('\\');
            out.push_back(c);
        }
        return out + "\"";
    };
    auto topic_label = [&](std::size_t j) -> std::string {
        for (const auto& t : topics)
            if (t.id == net.topic_ids[j]) return t.name;
        return net.topic_ids[j];
    };

    std::ostringstream os;
    os << "graph belief_network {\n";
    os << "  layout=neato;\n  overlap=false;\n";
    for (std::size_t f = 0; f < net.factor_count(); ++f) {
        os << "  " << quote("factor:" + std::to_string(f)) << " [shape=ellipse, label="
           << quote(net.factor_label(f)) << "];\n";
    }
    for (std::size_t j = 0; j < net.topic_count(); ++j) {
        const bool training = net.complete() && net.training_topic_of[net.category_of[j]] == j;
        os << "  " << quote("topic:" + net.topic_ids[j]) << " [shape=box, label="
           << quote(topic_label(j)) << (training ? ", style=filled, fillcolor=grey" : "") << "];\n";
    }
    for (std::size_t j = 0; j < net.topic_count(); ++j) {
        std::ostringstream w;
        w.setf(std::ios::fixed);
        w.precision(3);
        w << net.loading(j, net.category_of[j]);
        os << "  " << quote("factor:" + std::to_string(net.category_of[j])) << " -- "
           << quote("topic:" + net.topic_ids[j]) << " [label=" << quote(w.str()) << "];\n";
    }
    os << "}\n";
    return os.str();
}

inline void export_network(const BeliefNetwork& net, const std::filesystem::path& artifact,
                           const std::filesystem::path& graph, const std::vector<Topic>& topics = {}) {
    std::ofstream a(artifact, std::ios::binary);
    if (!a) throw Error("cannot write '" + artifact.string() + "'");
    a << network_to_json(net).dump(2) << "\n";
    std::ofstream g(graph, std::ios::binary);
    if (!g) throw Error("cannot write '" + graph.string() + "'");
    g << network_to_dot(net, topics);
}

inline BeliefNetwork import_network(const std::filesystem::path& artifact) {
    std::ifstream in(artifact, std::ios::binary);
    if (!in) throw Error("cannot open '" + artifact.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FactorError("network artifact '" + artifact.string() + "': " + e.what());
    }
    return network_from_json(doc);
}

}  // namespace beliefnet
