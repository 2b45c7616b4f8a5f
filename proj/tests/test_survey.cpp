#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "beliefnet/survey.hpp"

using namespace beliefnet;

namespace {

std::vector<Topic> two_topics() {
    return {Topic{"alpha", "Alpha", "Alpha is true.", std::nullopt, std::nullopt},
            Topic{"beta", "Beta", "Beta is true.", std::string("Beta is false."), std::string("Group")}};
}

const std::string kHeader =
    "respondent_id,age,gender,education,race,household_income,city_population,urbanicity,state,"
    "political_leaning";

std::string demo_fields() {
    return "41,Male,Some college but no degree,White,\"$40,000 - $59,999\",\"100,000 - 500,000\","
           "Urban (City),Florida,Democrat";
}

}  // namespace

TEST(Survey, ParsesCompleteTable) {
    const auto text = kHeader + ",alpha,beta\n" + "r1," + demo_fields() + ",3,-1\n" + "r2," + demo_fields() +
                      ",-2,2\n";
    const auto data = parse_survey(two_topics(), text);
    ASSERT_EQ(data.respondent_count(), 2u);
    ASSERT_EQ(data.topic_count(), 2u);
    EXPECT_EQ(data.rating(0, 0).value(), 3);
    EXPECT_EQ(data.rating(0, 1).value(), -1);
    EXPECT_EQ(data.rating(1, 0).value(), -2);
    const auto& d = data.respondent(0).demographics;
    EXPECT_EQ(d.age, 41);
    EXPECT_EQ(d.household_income, "$40,000 - $59,999");
    EXPECT_EQ(d.city_population, "100,000 - 500,000");
    EXPECT_EQ(d.urbanicity, "Urban (City)");
    EXPECT_EQ(data.topic_index("beta"), 1u);
    EXPECT_FALSE(data.topic_index("gamma").has_value());
    EXPECT_TRUE(data.rejected_rows().empty());
}

TEST(Survey, ColumnsMayAppearInAnyOrder) {
    const auto text = kHeader + ",beta,alpha\n" + "r1," + demo_fields() + ",2,-3\n";
    const auto data = parse_survey(two_topics(), text);
    EXPECT_EQ(data.rating(0, 0).value(), -3);
    EXPECT_EQ(data.rating(0, 1).value(), 2);
}

TEST(Survey, IncompleteRowsAreRejectedNotImputed) {
    const auto text = kHeader + ",alpha,beta\n" + "r1," + demo_fields() + ",3,\n" + "r2," + demo_fields() +
                      ",NA,1\n" + "r3," + demo_fields() + ",1,1\n";
    const auto data = parse_survey(two_topics(), text);
    EXPECT_EQ(data.respondent_count(), 1u);
    EXPECT_EQ(data.respondent(0).id, "r3");
    ASSERT_EQ(data.rejected_rows().size(), 2u);
    EXPECT_EQ(data.rejected_rows()[0].respondent_id, "r1");
    EXPECT_EQ(data.rejected_rows()[0].line, 2u);
    EXPECT_EQ(data.rejected_rows()[1].respondent_id, "r2");
}

TEST(Survey, OutOfScaleRatingsThrow) {
    for (const char* bad : {"0", "4", "-4", "2.5", "yes"}) {
        const auto text = kHeader + ",alpha,beta\n" + "r1," + demo_fields() + "," + bad + ",1\n";
        EXPECT_THROW(parse_survey(two_topics(), text), SurveyError) << bad;
    }
}

TEST(Survey, StructuralDefectsThrow) {
    const auto row = "r1," + demo_fields() + ",1,1\n";
    EXPECT_THROW(parse_survey(two_topics(), ""), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha\n"), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha,gamma\n"), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha,alpha,beta\n"), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha,beta\n" + row + row), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha,beta\nr1,41,Male\n"), SurveyError);
    EXPECT_THROW(parse_survey(two_topics(), kHeader + ",alpha,beta\nr1,0" + demo_fields().substr(2) + ",1,1\n"),
                 SurveyError);
}

TEST(Survey, HeaderOnlyGivesEmptyDatasetUnusableForFactoring) {
    const auto data = parse_survey(two_topics(), kHeader + ",alpha,beta\n");
    EXPECT_EQ(data.respondent_count(), 0u);
    EXPECT_FALSE(data.usable_for_factor_analysis());
}

TEST(Survey, FormatRoundTrips) {
    const auto text = kHeader + ",alpha,beta\n" + "r1," + demo_fields() + ",3,-1\n" + "r2," + demo_fields() +
                      ",-2,2\n";
    const auto data = parse_survey(two_topics(), text);
    const auto again = parse_survey(two_topics(), format_ratings_table(data));
    EXPECT_EQ(data, again);
}

TEST(Survey, ManifestJsonRoundTrip) {
    const auto topics = two_topics();
    EXPECT_EQ(manifest_from_json(manifest_to_json(topics)), topics);
    EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"topics":[{"id":"a","statement":""}]})")),
                 SurveyError);
    EXPECT_THROW(manifest_from_json(nlohmann::json::parse(
                     R"({"topics":[{"id":"a","statement":"x"},{"id":"a","statement":"y"}]})")),
                 SurveyError);
    EXPECT_THROW(manifest_from_json(nlohmann::json::parse("[]")), SurveyError);
}

TEST(Survey, LoadsFilesAndReportsMissingOnes) {
    const auto dir = std::filesystem::temp_directory_path() / "beliefnet_survey_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "topics.json") << manifest_to_json(two_topics()).dump();
        std::ofstream(dir / "ratings.csv") << kHeader + ",alpha,beta\n" + "r1," + demo_fields() + ",1,2\n";
    }
    const auto data = load_survey(dir / "topics.json", dir / "ratings.csv");
    EXPECT_EQ(data.respondent_count(), 1u);
    EXPECT_THROW(load_survey(dir / "topics.json", dir / "nope.csv"), Error);
    std::filesystem::remove_all(dir);
}

TEST(Survey, BundledManifestHasPublishedCategories) {
    const auto topics = load_topic_manifest(std::filesystem::path(BELIEFNET_DATA_DIR) / "topics.json");
    EXPECT_EQ(topics.size(), 64u);
    std::map<std::string, int> counts;
    for (const auto& t : topics) {
        ASSERT_TRUE(t.published_category.has_value()) << t.id;
        ++counts[*t.published_category];
    }
    const std::map<std::string, int> published{{"Ghost", 12},   {"Psychics", 11}, {"Religion", 8},
                                               {"Trump", 10},   {"Partisan", 6},  {"Economic", 5},
                                               {"LowInfo", 5},  {"Health", 3},    {"Conspiracy", 4}};
    EXPECT_EQ(counts, published);
}

TEST(Survey, DatasetRejectsDuplicates) {
    auto topics = two_topics();
    const std::vector<Respondent> people{{"x", {}}, {"x", {}}};
    std::vector<LikertRating> ratings(4, LikertRating::from_value(1));
    EXPECT_THROW(SurveyDataset(topics, people, ratings), SurveyError);
    EXPECT_THROW(SurveyDataset(topics, {{"x", {}}}, ratings), SurveyError);
}
