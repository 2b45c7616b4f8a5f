#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <optional>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/factor_analysis.hpp"
#include "beliefnet/likert.hpp"
#include "beliefnet/network.hpp"

namespace beliefnet::testing {

/// Greedy matching of planted to recovered factors by |congruence|, largest
/// pair first. match[p] is the recovered column for planted factor p;
/// congruence[p] is the sign-aligned coefficient.
struct FactorAlignment {
    std::vector<Eigen::Index> match;
    std::vector<double> congruence;
};

inline FactorAlignment align_factors(const Eigen::MatrixXd& planted, const Eigen::MatrixXd& recovered) {
    const auto k = planted.cols();
    std::vector<std::tuple<double, Eigen::Index, Eigen::Index>> pairs;
    for (Eigen::Index p = 0; p < k; ++p)
        for (Eigen::Index r = 0; r < recovered.cols(); ++r)
            pairs.emplace_back(std::abs(tucker_congruence(planted.col(p), recovered.col(r))), p, r);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    FactorAlignment out{std::vector<Eigen::Index>(static_cast<std::size_t>(k), -1),
                        std::vector<double>(static_cast<std::size_t>(k), 0.0)};
    std::set<Eigen::Index> used;
    for (const auto& [c, p, r] : pairs) {
        if (out.match[static_cast<std::size_t>(p)] >= 0 || used.count(r)) continue;
        out.match[static_cast<std::size_t>(p)] = r;
        out.congruence[static_cast<std::size_t>(p)] = c;
        used.insert(r);
    }
    return out;
}

/// Planted partition as a set of topic-position sets.
inline std::set<std::set<std::size_t>> partition_of(const std::vector<std::size_t>& group_of) {
    std::map<std::size_t, std::set<std::size_t>> groups;
    for (std::size_t j = 0; j < group_of.size(); ++j) groups[group_of[j]].insert(j);
    std::set<std::set<std::size_t>> out;
    for (auto& [g, members] : groups) out.insert(std::move(members));
    return out;
}

/// Contents of a file under tests/golden, byte for byte.
inline std::string read_golden(const std::string& name) {
    std::ifstream in(std::filesystem::path(BELIEFNET_GOLDEN_DIR) / name, std::ios::binary);
    if (!in) throw std::runtime_error("missing golden file " + name);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Central interval [lo, hi] holding at least 1 - alpha of Binomial(n, p).
inline std::pair<int, int> binomial_bounds(int n, double p, double alpha) {
    std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        pmf[static_cast<std::size_t>(k)] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                                                    k * std::log(p) + (n - k) * std::log1p(-p));
    }
    int lo = 0, hi = n;
    double tail = 0.0;
    while (tail + pmf[static_cast<std::size_t>(lo)] <= alpha / 2) tail += pmf[static_cast<std::size_t>(lo++)];
    tail = 0.0;
    while (tail + pmf[static_cast<std::size_t>(hi)] <= alpha / 2) tail += pmf[static_cast<std::size_t>(hi--)];
    return {lo, hi};
}

/// Hand-built network: `category_of` per topic, training topic per factor.
inline BeliefNetwork make_network(std::vector<std::string> topic_ids, std::vector<std::size_t> category_of,
                                  std::vector<std::size_t> training_topic_of) {
    BeliefNetwork net;
    const auto k = static_cast<Eigen::Index>(training_topic_of.size());
    net.loading_matrix.loadings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(topic_ids.size()), k);
    net.loading_matrix.eigenvalues = Eigen::VectorXd::Ones(k);
    for (std::size_t j = 0; j < topic_ids.size(); ++j) {
        net.loading_matrix.loadings(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(category_of[j])) =
            training_topic_of[category_of[j]] == j ? 0.9 : 0.6;
    }
    net.topic_ids = std::move(topic_ids);
    net.category_of = std::move(category_of);
    net.training_topic_of = std::move(training_topic_of);
    net.settings.factors = k;
    return net;
}

/// Upper 1% critical values of chi-square, by degrees of freedom.
inline double chi_square_critical_99(int df) {
    static const std::map<int, double> table{{1, 6.635}, {2, 9.210}, {3, 11.345}, {4, 13.277}, {5, 15.086},
                                             {6, 16.812}, {7, 18.475}, {8, 20.090}, {9, 21.666}};
    return table.at(df);
}

// Varimax oracles

inline LoadingMatrix as_loadings(Eigen::MatrixXd l) {
    LoadingMatrix m;
    m.loadings = std::move(l);
    m.eigenvalues = m.loadings.colwise().squaredNorm().transpose();
    return m;
}

/// Varimax criterion of the Kaiser-normalized rows of `l`.
inline double normalized_criterion(const Eigen::MatrixXd& l) {
    Eigen::MatrixXd w = l;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
        const double h = w.row(j).norm();
        if (h > 0) w.row(j) /= h;
    }
    return varimax_criterion(w);
}

/// Best planar rotation of a two-column matrix by exhaustive search.
inline Eigen::MatrixXd grid_search_rotation(const Eigen::MatrixXd& l, double step) {
    double best = -1.0;
    Eigen::MatrixXd best_l = l;
    for (double theta = 0.0; theta < std::numbers::pi / 2; theta += step) {
        Eigen::Matrix2d r;
        r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        const Eigen::MatrixXd cand = l * r;
        const double v = normalized_criterion(cand);
        if (v > best) {
            best = v;
            best_l = cand;
        }
    }
    return best_l;
}

/// Largest |entry| difference after matching columns by congruence and sign.
inline double aligned_max_diff(const Eigen::MatrixXd& expected, const Eigen::MatrixXd& actual) {
    std::vector<bool> used(static_cast<std::size_t>(actual.cols()), false);
    double worst = 0.0;
    for (Eigen::Index f = 0; f < expected.cols(); ++f) {
        Eigen::Index pick = -1;
        double best = -1.0;
        for (Eigen::Index g = 0; g < actual.cols(); ++g) {
            if (used[static_cast<std::size_t>(g)]) continue;
            const double c = std::abs(tucker_congruence(expected.col(f), actual.col(g)));
            if (c > best) {
                best = c;
                pick = g;
            }
        }
        used[static_cast<std::size_t>(pick)] = true;
        const double sign = expected.col(f).dot(actual.col(pick)) < 0 ? -1.0 : 1.0;
        worst = std::max(worst, (expected.col(f) - sign * actual.col(pick)).cwiseAbs().maxCoeff());
    }
    return worst;
}

// Parser oracle

inline bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// Independent oracle: enumerate every whole-word occurrence of every label
/// and return the label whose occurrence starts last.
inline std::optional<int> latest_label(const std::string& text, Vocabulary vocab) {
    const auto t = lower(text);
    std::optional<int> best;
    std::ptrdiff_t best_pos = -1;
    for (int v : LikertRating::kValues) {
        const auto label = lower(std::string(LikertRating::label_for(v, vocab)));
        for (std::size_t pos = 0; pos + label.size() <= t.size(); ++pos) {
            if (t.compare(pos, label.size(), label) != 0) continue;
            if (pos > 0 && word_char(t[pos - 1])) continue;
            if (pos + label.size() < t.size() && word_char(t[pos + label.size()])) continue;
            if (static_cast<std::ptrdiff_t>(pos) > best_pos) {
                best_pos = static_cast<std::ptrdiff_t>(pos);
                best = v;
            }
        }
    }
    return best;
}

}  // namespace beliefnet::testing
