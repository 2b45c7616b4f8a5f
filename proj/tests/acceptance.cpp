// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Set BELIEFNET_REAL_RATINGS (and optionally BELIEFNET_REAL_MANIFEST) to also
// run the checks that need the original survey data.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "beliefnet/eval.hpp"
#include "beliefnet/sft.hpp"
#include "beliefnet/synth.hpp"
#include "support.hpp"

using namespace beliefnet;
using namespace beliefnet::testing;

namespace {

// Tolerances and budgets.
constexpr double kVarimaxGridStep = 1e-4;
constexpr double kVarimaxEntryTol = 1e-3;
constexpr double kOrthogonalityTol = 1e-10;
constexpr double kCommunalityTol = 1e-8;
constexpr double kMonotoneSlack = 1e-12;
constexpr double kMinCongruence = 0.95;
constexpr double kPublishedGainTol = 0.01;
constexpr double kAlpha = 0.01;
constexpr double kNoSignalTol = 0.15;
constexpr int kMockSeeds = 10;
constexpr double kRealVarianceTarget = 0.72;
constexpr double kRealVarianceTol = 0.005;

using Seconds = std::chrono::duration<double>;

/// Collects failure messages for one criterion.
struct Check {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

std::string num(double x, int digits = 4) {
    std::ostringstream os;
    os << std::setprecision(digits) << x;
    return os.str();
}

int failed = 0;

void criterion(int id, const std::string& name, std::optional<double> budget_s, const std::function<void(Check&)>& body) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double elapsed = Seconds(std::chrono::steady_clock::now() - start).count();
    if (budget_s && elapsed >= *budget_s) {
        check.failures.push_back("took " + num(elapsed) + " s, budget " + num(*budget_s) + " s");
    }
    const bool ok = check.failures.empty();
    if (!ok) ++failed;
    std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << name << " (" << std::fixed << std::setprecision(2)
              << elapsed << " s)" << std::defaultfloat;
    if (!ok) {
        std::cout << ": " << check.failures.front();
        if (check.failures.size() > 1) std::cout << " (+" << check.failures.size() - 1 << " more)";
    }
    std::cout << std::endl;
}

// ---------------------------------------------------------------------------

void varimax_fixture(Check& c) {
    Eigen::MatrixXd l(4, 2);
    l << .6, .6, .6, .6, .6, -.6, .6, -.6;
    const auto raw = as_loadings(l);
    const auto r = varimax_rotate(raw);
    const Eigen::MatrixXd oracle = grid_search_rotation(l, kVarimaxGridStep);
    const double diff = aligned_max_diff(oracle, r.rotated.loadings);
    c.expect(diff < kVarimaxEntryTol, "max entry difference from grid search " + num(diff));
    for (std::size_t i = 1; i < r.criterion_history.size(); ++i) {
        c.expect(r.criterion_history[i] >= r.criterion_history[i - 1] - kMonotoneSlack,
                 "criterion decreased at iteration " + std::to_string(i));
    }
    const Eigen::MatrixXd rtr = r.rotation.transpose() * r.rotation;
    const double ortho = (rtr - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
    c.expect(ortho < kOrthogonalityTol, "rotation orthogonality error " + num(ortho));
    const double comm = (r.rotated.communalities() - raw.communalities()).cwiseAbs().maxCoeff();
    c.expect(comm < kCommunalityTol, "communality drift " + num(comm));
}

void factor_recovery(Check& c) {
    for (auto [m, k] : {std::pair<Eigen::Index, Eigen::Index>{30, 3}, {64, 9}}) {
        const auto world = std::to_string(m) + "x" + std::to_string(k) + ": ";
        const auto spec = make_simple_structure_spec(m, k, 600, 7);
        const auto fit = fit_belief_network(generate_population(spec).dataset);
        c.expect(select_factor_count(fit.spectrum) == k,
                 world + "elbow chose " + std::to_string(select_factor_count(fit.spectrum)));
        c.expect(fit.network.factor_count() == static_cast<std::size_t>(k), world + "wrong factor count");
        c.expect(partition_of(fit.network.category_of) == partition_of(home_factors(spec.loadings)),
                 world + "recovered partition differs from planted");
        const auto aligned = align_factors(spec.loadings, fit.network.loading_matrix.loadings);
        for (std::size_t f = 0; f < aligned.congruence.size(); ++f) {
            c.expect(aligned.congruence[f] >= kMinCongruence,
                     world + "factor " + std::to_string(f) + " congruence " + num(aligned.congruence[f]));
        }
    }
}

void published_gains(Check& c) {
    // ChatGPT rows: Demo, Demo + Train [Same Cat.], upper bound, printed gains.
    const std::array<double, 9> demo{2.58, 2.28, 1.87, 1.23, 1.41, 1.51, 1.21, 1.66, 1.51};
    const std::array<double, 9> same{1.26, 1.27, 1.72, 1.14, 1.34, 1.23, 1.15, 1.53, 1.40};
    const std::array<double, 9> upper{0.41, 0.48, 0.30, 0.63, 0.28, 0.09, 0.82, 0.30, 0.46};
    const std::array<double, 9> gain{60.83, 56.11, 9.55, 15.00, 6.19, 19.72, 15.38, 9.56, 10.48};
    const double average_gain = 22.54;
    std::vector<std::optional<double>> got;
    for (std::size_t f = 0; f < 9; ++f) {
        const auto g = relative_gain(demo[f], same[f], upper[f]);
        c.expect(g.has_value(), "gain undefined for category " + std::to_string(f));
        if (!g) continue;
        c.expect(std::abs(*g - gain[f]) <= kPublishedGainTol,
                 "category " + std::to_string(f) + ": " + num(*g, 6) + " vs " + num(gain[f]));
        got.push_back(g);
    }
    const auto mean = detail::mean_of_defined(got);
    c.expect(mean && std::abs(*mean - average_gain) <= kPublishedGainTol, "average gain " + num(mean.value_or(0), 6));
}

const Demographics kExample{41,
                            "Male",
                            "Some college but no degree",
                            "White",
                            "$40,000 - $59,999",
                            "100,000 - 500,000",
                            "Urban (City)",
                            "Florida",
                            "Democrat"};

void prompt_fidelity(Check& c) {
    const auto topics = load_topic_manifest(std::filesystem::path(BELIEFNET_DATA_DIR) / "topics.json");
    auto topic = [&](const std::string& id) -> const Topic& {
        for (const auto& t : topics)
            if (t.id == id) return t;
        throw std::runtime_error("bundled manifest lacks " + id);
    };
    const auto net = make_network({"gun_control", "globe_warm", "dead_talk"}, {0, 0, 1}, {0, 2});
    auto system = [&](Condition cond, std::optional<TopicOpinion> train, std::optional<TopicOpinion> query,
                      std::uint64_t seed = 1) {
        SystemMessageRequest req;
        req.condition = cond;
        req.demographics = &kExample;
        req.training = std::move(train);
        req.query_opinion = std::move(query);
        req.network = &net;
        req.query_topic_id = "globe_warm";
        Rng rng(seed);
        return build_system_message(req, rng);
    };
    auto r = [](int v) { return LikertRating::from_value(v); };
    const TopicOpinion gun{topic("gun_control"), r(2)};

    const std::vector<std::pair<std::string, std::string>> cases{
        {system({ConditionKind::NoDemo}, {}, {}), "system_no_demo.txt"},
        {system({ConditionKind::Demo}, {}, {}), "system_demo.txt"},
        {system({ConditionKind::TrainSameCategory}, gun, {}), "system_train_same.txt"},
        {system({ConditionKind::DemoTrainSameCategory}, gun, {}), "system_demo_train_same.txt"},
        {system({ConditionKind::DemoTrainRandomCategory}, TopicOpinion{topic("dead_talk"), r(-1)}, {}),
         "system_demo_train_random.txt"},
        {system({ConditionKind::DemoTrainQuery}, gun, TopicOpinion{topic("globe_warm"), r(3)}),
         "system_demo_train_query.txt"},
        {build_query_message(topic("globe_warm")), "user_query_globe_warm.txt"},
        {build_sft_prompt(topic("gun_control")), "sft_prompt_gun_control.txt"},
        {build_sft_response(r(3)), "sft_response_certainly_true.txt"},
    };
    for (const auto& [text, golden] : cases) c.expect(text == read_golden(golden), "mismatch with " + golden);

    const auto first = read_golden("system_balanced_original_first.txt");
    const auto second = read_golden("system_balanced_reversed_first.txt");
    int original_first = 0, reversed_first = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto msg = system({ConditionKind::DemoTrainSameCategory, true}, TopicOpinion{topic("gun_control"), r(3)},
                                {}, seed);
        if (msg == first) ++original_first;
        else if (msg == second) ++reversed_first;
        else c.expect(false, "balanced draw " + std::to_string(seed) + " matches neither golden order");
    }
    const auto [lo, hi] = binomial_bounds(200, 0.5, kAlpha);
    c.expect(original_first >= lo && original_first <= hi,
             "original-first count " + std::to_string(original_first) + " outside [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]");
    c.expect(original_first + reversed_first == 200, "balanced draws did not all match");
}

void mock_ordering(Check& c) {
    const std::vector<Condition> conds{{ConditionKind::NoDemo, false},
                                       {ConditionKind::Demo, false},
                                       {ConditionKind::DemoTrainRandomCategory, false},
                                       {ConditionKind::DemoTrainSameCategory, false}};
    for (int s = 0; s < kMockSeeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(100 + s);
        const auto pop = generate_population(make_simple_structure_spec(30, 3, 600, seed));
        const auto net = fit_belief_network(pop.dataset).network;
        auto oracle = std::make_shared<const MockOracle>(pop.world);
        MatrixOptions opt;
        opt.conditions = conds;
        ModelConfig model;
        model.parallelism_limit = 8;
        opt.models = {model};
        opt.seed = seed;
        const auto result =
            run_matrix(pop.dataset, net, opt, [&](const ModelConfig&) { return std::make_shared<MockBackend>(oracle); });
        const auto& b = result.report.blocks.at(0);
        // Rows in condition order; the last entry of each is the category average.
        auto row = [&](std::size_t ci) {
            std::vector<double> out;
            for (const auto& v : b.mae[ci]) out.push_back(v.value());
            out.push_back(b.average[ci].value());
            return out;
        };
        const auto no_demo = row(0), demo = row(1), random = row(2), same = row(3);
        for (std::size_t f = 0; f < demo.size(); ++f) {
            const auto where = "seed " + std::to_string(seed) + (f + 1 == demo.size() ? " average" : " category " + std::to_string(f));
            c.expect(same[f] < demo[f], where + ": same " + num(same[f]) + " >= demo " + num(demo[f]));
            c.expect(same[f] < random[f], where + ": same " + num(same[f]) + " >= random " + num(random[f]));
            c.expect(std::abs(random[f] - demo[f]) < kNoSignalTol, where + ": |random - demo| " + num(std::abs(random[f] - demo[f])));
            c.expect(std::abs(demo[f] - no_demo[f]) < kNoSignalTol, where + ": |demo - no-demo| " + num(std::abs(demo[f] - no_demo[f])));
        }
    }
}

void upsampling(Check& c) {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> count(0, 12);
    for (int trial = 0; trial < 50; ++trial) {
        std::map<int, int> counts;
        for (int v : LikertRating::kValues) {
            if (const int n = count(gen)) counts[v] = n;
        }
        if (counts.empty()) counts[-2] = 1;
        std::vector<SftRecord> in;
        for (auto [v, n] : counts) {
            for (int i = 0; i < n; ++i) {
                SftRecord rec;
                rec.respondent_id = "r" + std::to_string(v) + "_" + std::to_string(i);
                rec.label = LikertRating::from_value(v);
                rec.response = build_sft_response(rec.label);
                in.push_back(rec);
            }
        }
        Rng rng(static_cast<std::uint64_t>(trial));
        const auto out = upsample_balance(in, rng);
        std::map<int, int> got;
        for (const auto& rec : out) ++got[rec.label.value()];
        int target = 0;
        for (auto [v, n] : counts) target = std::max(target, n);
        const auto t = "trial " + std::to_string(trial) + ": ";
        c.expect(got.size() == counts.size(), t + "label set changed");
        for (auto [v, n] : got) c.expect(n == target, t + "label " + std::to_string(v) + " has " + std::to_string(n));
        std::set<std::string> seen;
        for (const auto& rec : out) seen.insert(rec.respondent_id);
        for (const auto& rec : in) c.expect(seen.count(rec.respondent_id) == 1, t + rec.respondent_id + " dropped");
    }
}

void parser(Check& c) {
    const std::string noise = "Considering my background, ";
    for (auto vocab : {Vocabulary::InContext, Vocabulary::FineTune}) {
        for (int v : LikertRating::kValues) {
            const std::string label(LikertRating::label_for(v, vocab));
            for (const auto& text : {label + ". " + noise, noise + label + " is my view, " + noise, noise + "My Response: " + label}) {
                c.expect(parse_likert(text, vocab).value() == v, "misread: " + text);
            }
        }
    }
    const std::vector<std::string> filler{"I", "think", "the", "claim", "is", "true", "false", "lean", "certainly",
                                          "maybe", "probably", "answer:", "\n", "(", "truely", "leaning"};
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> len(3, 25), pick_filler(0, static_cast<int>(filler.size()) - 1), pick_label(0, 5),
        coin(0, 3);
    int checked = 0;
    for (auto vocab : {Vocabulary::InContext, Vocabulary::FineTune}) {
        const auto labels = LikertRating::labels(vocab);
        for (int trial = 0; trial < 50; ++trial) {
            std::string text;
            for (int i = 0, n = len(rng); i < n; ++i) {
                if (coin(rng) == 0) {
                    std::string l(labels[static_cast<std::size_t>(pick_label(rng))]);
                    text += coin(rng) == 0 ? lower(l) : l;
                } else {
                    text += filler[static_cast<std::size_t>(pick_filler(rng))];
                }
                text += coin(rng) == 0 ? ", " : " ";
            }
            text += std::string(labels[static_cast<std::size_t>(pick_label(rng))]) + " " +
                    filler[static_cast<std::size_t>(pick_filler(rng))];
            const auto expected = latest_label(text, vocab);
            const auto got = parse_likert(text, vocab).value();
            c.expect(expected && *expected == got, "latest-match disagreement on: " + text);
            ++checked;
        }
    }
    c.expect(checked == 100, "checked " + std::to_string(checked) + " strings");
}

void determinism(Check& c) {
    const auto pop = generate_population(make_simple_structure_spec(30, 3, 600, 7));
    const auto net = fit_belief_network(pop.dataset).network;
    auto oracle = std::make_shared<const MockOracle>(pop.world);
    auto artifacts = [&](int parallelism) {
        MatrixOptions opt;
        for (auto k : kAllConditionKinds) opt.conditions.push_back({k, false});
        opt.conditions.push_back({ConditionKind::DemoTrainSameCategory, true});
        ModelConfig model;
        model.parallelism_limit = parallelism;
        opt.models = {model};
        opt.seed = 1;
        const auto result =
            run_matrix(pop.dataset, net, opt, [&](const ModelConfig&) { return std::make_shared<MockBackend>(oracle); });
        std::string cells;
        for (const auto& cell : result.cells()) cells += cell_to_json(cell).dump() + "\n";
        return std::array<std::string, 3>{report_to_csv(result.report), report_to_json(result.report).dump(2), cells};
    };
    const auto serial = artifacts(1);
    const auto parallel = artifacts(8);
    c.expect(serial[0] == parallel[0], "report.csv differs");
    c.expect(serial[1] == parallel[1], "report.json differs");
    c.expect(serial[2] == parallel[2], "cells.jsonl differs");
}

// ---------------------------------------------------------------------------

void real_data() {
    const char* ratings = std::getenv("BELIEFNET_REAL_RATINGS");
    if (!ratings || !*ratings) {
        std::cout << "SKIP [real-data] 72% variance, 9 factors, category sizes: BELIEFNET_REAL_RATINGS not set"
                  << std::endl;
        return;
    }
    const char* manifest_env = std::getenv("BELIEFNET_REAL_MANIFEST");
    const std::string manifest =
        manifest_env && *manifest_env ? manifest_env : std::string(BELIEFNET_DATA_DIR) + "/topics.json";
    criterion(0, "real data: 9 factors, 72% variance, category sizes", std::nullopt, [&](Check& c) {
        const auto data = load_survey(manifest, ratings);
        const auto fit = fit_belief_network(data);
        c.expect(fit.network.factor_count() == 9, "elbow chose " + std::to_string(fit.network.factor_count()));
        const auto nine = fit_belief_network(data, FitOptions{9, {}, {}, 0});
        const double v = nine.network.loading_matrix.explained_variance_fraction;
        c.expect(std::abs(v - kRealVarianceTarget) <= kRealVarianceTol, "explained variance " + num(v));
        std::multiset<std::size_t> sizes;
        for (std::size_t f = 0; f < 9; ++f) sizes.insert(nine.network.members(f).size());
        c.expect(sizes == std::multiset<std::size_t>{12, 11, 8, 10, 6, 5, 5, 3, 4}, "category sizes differ");
    });
}

}  // namespace

int main() {
    criterion(1, "Varimax matches grid search; monotone, orthogonal, communalities kept", 1.0, varimax_fixture);
    criterion(2, "Planted partitions, congruence and elbow recovered (30x3, 64x9)", 30.0, factor_recovery);
    criterion(3, "Published relative gains reproduced from published MAEs", 1.0, published_gains);
    criterion(4, "Prompt templates match golden files; balanced orders fair", 5.0, prompt_fidelity);
    criterion(5, "Mock world: same-category training beats Demo and Random", 120.0, mock_ordering);
    criterion(6, "Upsampling equalizes labels and keeps every record", 1.0, upsampling);
    criterion(7, "Parser finds every label; latest match agrees with oracle", 1.0, parser);
    criterion(8, "Matrix artifacts identical at parallelism 1 and 8", std::nullopt, determinism);
    real_data();
    std::cout << (failed ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED") << std::endl;
    return failed ? 1 : 0;
}
