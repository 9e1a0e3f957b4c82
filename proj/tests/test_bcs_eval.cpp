#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forge/bcs_eval.hpp"
#include "forge/common.hpp"

#include <algorithm>

using namespace forge;
using namespace forge::bcs;

namespace {

JudgeComparison make_comparison(const std::string& first, const std::string& second,
                                Verdict verdict, std::string rationale = "") {
    JudgeComparison comparison;
    comparison.sample_id = "s";
    comparison.model_first = first;
    comparison.model_second = second;
    comparison.verdict = verdict;
    comparison.rationale = std::move(rationale);
    return comparison;
}

std::vector<std::string> make_ids(int count) {
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
        ids.push_back("t" + std::to_string(i));
    }
    return ids;
}

} // namespace

TEST_CASE("schedule: 500 ids x 2 outputs x 2 = 2000 comparisons per pair") {
    auto tasks = schedule_tournament({"A", "B"}, make_ids(500), 2, 13);
    CHECK(tasks.size() == 2000);

    // three models: three pairs
    auto three = schedule_tournament({"A", "B", "C"}, make_ids(500), 2, 13);
    CHECK(three.size() == 3 * 2000);
}

TEST_CASE("schedule: 1 id, 1 output gives exactly 2 with independent coins") {
    auto tasks = schedule_tournament({"A", "B"}, make_ids(1), 1, 4);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].sample_id == "t0");
    CHECK(tasks[0].duplicate == 0);
    CHECK(tasks[1].duplicate == 1);
}

TEST_CASE("schedule: identical seed reproduces order coins, different seed varies") {
    auto first = schedule_tournament({"A", "B"}, make_ids(100), 2, 7);
    auto second = schedule_tournament({"A", "B"}, make_ids(100), 2, 7);
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].a_shown_first == second[i].a_shown_first);
        CHECK(first[i].sample_id == second[i].sample_id);
    }
    auto other = schedule_tournament({"A", "B"}, make_ids(100), 2, 8);
    bool any_difference = false;
    for (std::size_t i = 0; i < first.size(); ++i) {
        any_difference |= first[i].a_shown_first != other[i].a_shown_first;
    }
    CHECK(any_difference);
}

TEST_CASE("schedule: all-pairs mode gives |ids| * k^2 per pair") {
    auto tasks = schedule_tournament({"A", "B"}, make_ids(500), 2, 13, true);
    CHECK(tasks.size() == 2000); // 500 * 4
}

TEST_CASE("missing generations are fatal and listed") {
    ReportStore reports;
    reports.add("A", "t0", 0, "reportA");
    // B has nothing
    auto tasks = schedule_tournament({"A", "B"}, make_ids(1), 1, 0);
    try {
        reports.require_all(tasks);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("B/t0/k0") != std::string::npos);
    }
}

TEST_CASE("parse_verdict: paper-style endings") {
    CHECK(parse_verdict("...Therefore, The better report is 2.") == Verdict::second);
    CHECK(parse_verdict("The better report is 1") == Verdict::first);
    CHECK(parse_verdict("the better report is none") == Verdict::tie);
    CHECK(parse_verdict("I cannot decide.") == Verdict::unparsed);
    CHECK(parse_verdict("") == Verdict::unparsed);
}

TEST_CASE("parse_verdict: markdown, punctuation, casing, last-wins") {
    CHECK(parse_verdict("**The better report is 2**") == Verdict::second);
    CHECK(parse_verdict("THE BETTER REPORT IS: 1.") == Verdict::first);
    CHECK(parse_verdict("The better report is *none*, honestly.") == Verdict::tie);
    CHECK(parse_verdict("The better report is 1. Wait. The better report is 2.") ==
          Verdict::second);
    // the instruction echo ("...is x") must not parse; the real verdict follows
    CHECK(parse_verdict("Finish with 'The better report is x'. The better report is 1.") ==
          Verdict::first);
    // trailing digits invalidate the token
    CHECK(parse_verdict("The better report is 12") == Verdict::unparsed);
    CHECK(parse_verdict("The better report is nonetheless bad") == Verdict::unparsed);
}

TEST_CASE("parse_verdict is total over random text") {
    Rng rng(5);
    const char* fragments[] = {"The better report is", " 1", " 2", " none", " x",
                               "**",                   ".",  "\n", "maybe", "report"};
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        int pieces = static_cast<int>(rng.bounded(8));
        for (int p = 0; p < pieces; ++p) {
            text += fragments[rng.bounded(10)];
        }
        auto verdict = parse_verdict(text);
        bool valid = verdict == Verdict::first || verdict == Verdict::second ||
                     verdict == Verdict::tie || verdict == Verdict::unparsed;
        CHECK(valid);
    }
}

TEST_CASE("aggregate: 3 wins, 0 wins, 1 tie over 4 comparisons") {
    std::vector<JudgeComparison> comparisons = {
        make_comparison("A", "B", Verdict::first),
        make_comparison("A", "B", Verdict::first),
        make_comparison("B", "A", Verdict::second), // A wins as Report 2
        make_comparison("A", "B", Verdict::tie),
    };
    auto matrix = aggregate(comparisons, {"A", "B"});
    CHECK(matrix.winrate[0][1] == doctest::Approx(75.0));
    CHECK(matrix.winrate[1][0] == doctest::Approx(0.0));
    CHECK(matrix.totals[0][1] == 4);
    CHECK(matrix.ties[0][1] == 1);
    CHECK(matrix.avg_winrate[0] == doctest::Approx(75.0));
}

TEST_CASE("aggregate: published-matrix replay 1719/266/15 of 2000") {
    std::vector<JudgeComparison> comparisons;
    for (int i = 0; i < 1719; ++i) comparisons.push_back(make_comparison("CC", "Llama", Verdict::first));
    for (int i = 0; i < 266; ++i) comparisons.push_back(make_comparison("CC", "Llama", Verdict::second));
    for (int i = 0; i < 15; ++i) comparisons.push_back(make_comparison("CC", "Llama", Verdict::tie));
    auto matrix = aggregate(comparisons, {"CC", "Llama"});
    CHECK(matrix.totals[0][1] == 2000);
    CHECK(format_fixed(matrix.winrate[0][1], 2) == "85.95");
    CHECK(format_fixed(matrix.winrate[1][0], 2) == "13.30");
    // ties deflate both sides: the pair sums below 100
    CHECK(matrix.winrate[0][1] + matrix.winrate[1][0] < 100.0);
}

TEST_CASE("aggregate: empty input gives a zero matrix") {
    auto matrix = aggregate({}, {"A", "B"});
    CHECK(matrix.winrate[0][1] == 0.0);
    CHECK(matrix.totals[0][1] == 0);
    CHECK(matrix.avg_winrate[0] == 0.0);
}

namespace {

std::vector<JudgeComparison> random_tournament(Rng& rng, const std::vector<std::string>& models,
                                               int comparisons_per_pair) {
    std::vector<JudgeComparison> comparisons;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            for (int k = 0; k < comparisons_per_pair; ++k) {
                bool flip = rng.bounded(2) == 1;
                Verdict verdict = static_cast<Verdict>(rng.bounded(4));
                comparisons.push_back(make_comparison(flip ? models[j] : models[i],
                                                      flip ? models[i] : models[j], verdict));
            }
        }
    }
    return comparisons;
}

} // namespace

TEST_CASE("matrix consistency holds on 1000 randomized tournaments") {
    Rng rng(99);
    std::vector<std::string> models = {"M0", "M1", "M2"};
    for (int tournament = 0; tournament < 1000; ++tournament) {
        auto comparisons = random_tournament(rng, models, 8);
        auto matrix = aggregate(comparisons, models);
        for (std::size_t i = 0; i < models.size(); ++i) {
            for (std::size_t j = i + 1; j < models.size(); ++j) {
                // wins + wins + ties + unparsed == totals, exactly
                REQUIRE(matrix.wins[i][j] + matrix.wins[j][i] + matrix.ties[i][j] +
                            matrix.unparsed[i][j] ==
                        matrix.totals[i][j]);
                REQUIRE(matrix.totals[i][j] == matrix.totals[j][i]);
            }
        }
    }
}

TEST_CASE("order blindness: flipping presentation and verdicts leaves the matrix unchanged") {
    Rng rng(123);
    std::vector<std::string> models = {"X", "Y", "Z"};
    auto comparisons = random_tournament(rng, models, 50);
    auto baseline = aggregate(comparisons, models);

    auto flipped = comparisons;
    for (auto& comparison : flipped) {
        std::swap(comparison.model_first, comparison.model_second);
        if (comparison.verdict == Verdict::first) {
            comparison.verdict = Verdict::second;
        } else if (comparison.verdict == Verdict::second) {
            comparison.verdict = Verdict::first;
        }
    }
    auto mirrored = aggregate(flipped, models);
    for (std::size_t i = 0; i < models.size(); ++i) {
        CHECK(baseline.avg_winrate[i] == doctest::Approx(mirrored.avg_winrate[i]));
        for (std::size_t j = 0; j < models.size(); ++j) {
            CHECK(baseline.wins[i][j] == mirrored.wins[i][j]);
            CHECK(baseline.winrate[i][j] == doctest::Approx(mirrored.winrate[i][j]));
        }
    }
}

TEST_CASE("avg_winrate recomputes from the matrix to 0.01") {
    Rng rng(7);
    std::vector<std::string> models = {"P", "Q", "R", "S"};
    auto matrix = aggregate(random_tournament(rng, models, 40), models);
    for (std::size_t i = 0; i < models.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < models.size(); ++j) {
            if (i != j) sum += matrix.winrate[i][j];
        }
        CHECK(std::abs(matrix.avg_winrate[i] - sum / (models.size() - 1)) < 0.01);
    }
}

TEST_CASE("length stats: empty reports, section headings, hand-summed means") {
    ApproxTokenCounter counter;
    auto empty_stats = length_stats({"", ""}, counter);
    CHECK(empty_stats.mean_tokens == 0.0);
    CHECK(empty_stats.mean_sections == 0.0);

    std::string sectioned = "**Section 1: Function Prologue and Setup**\nbody\n"
                            "**Section 2: Jump Table**\nbody\n";
    CHECK(count_sections(sectioned) == 2);
    CHECK(count_sections("# Section 3: Epilogue\nSection 12 continues\n## **Section 4**: x") == 3);
    CHECK(count_sections("Sections are nice\nsection 1 lowercase\nSectional") == 0);

    // hand-summed: token counts 1, 2, 3 and sections 0, 1, 2
    std::vector<std::string> reports = {
        "abcd",                                   // 1 token, 0 sections
        "Section 1: x\nabc",                      // 2 tokens (16 bytes), 1 section
    };
    reports.push_back("Section 1: y\nSection 2: z"); // 25 bytes -> 7 tokens, 2 sections
    auto stats = length_stats(reports, counter);
    CHECK(stats.mean_sections == doctest::Approx((0.0 + 1.0 + 2.0) / 3.0));
    double expected_tokens = (counter.count(reports[0]) + counter.count(reports[1]) +
                              counter.count(reports[2])) /
                             3.0;
    CHECK(stats.mean_tokens == doctest::Approx(expected_tokens));
}

TEST_CASE("phrase analysis: shares by winning model") {
    std::vector<JudgeComparison> comparisons;
    for (int i = 0; i < 9; ++i) {
        comparisons.push_back(
            make_comparison("X", "Y", Verdict::first, "captures the core functionality well"));
    }
    comparisons.push_back(
        make_comparison("X", "Y", Verdict::second, "Y nails the core functionality"));
    // ties and unparsed are excluded even when the phrase occurs
    comparisons.push_back(
        make_comparison("X", "Y", Verdict::tie, "both discuss core functionality"));

    auto analysis = phrase_analysis(comparisons, {"core functionality", "main purpose"});
    auto shares = analysis["core functionality"].share_by_model();
    CHECK(shares["X"] == doctest::Approx(0.90));
    CHECK(shares["Y"] == doctest::Approx(0.10));
    CHECK(analysis["core functionality"].total == 10);

    // absent phrase: empty entry, no division by zero
    CHECK(analysis["main purpose"].total == 0);
    CHECK(analysis["main purpose"].share_by_model().empty());
}

TEST_CASE("phrase analysis: 92% fixture reproduces 0.92 exactly") {
    std::vector<JudgeComparison> comparisons;
    for (int i = 0; i < 23; ++i) {
        comparisons.push_back(make_comparison("CC", "NOC", Verdict::first,
                                              "the core functionality is captured"));
    }
    for (int i = 0; i < 2; ++i) {
        comparisons.push_back(make_comparison("CC", "NOC", Verdict::second,
                                              "NOC highlights core functionality better"));
    }
    auto analysis = phrase_analysis(comparisons, {"core functionality"});
    auto shares = analysis["core functionality"].share_by_model();
    CHECK(shares["CC"] == 0.92);
}

TEST_CASE("matrix rendering carries the diagonal dash and the averages") {
    std::vector<JudgeComparison> comparisons = {make_comparison("A", "B", Verdict::first)};
    auto matrix = aggregate(comparisons, {"A", "B"});
    auto text = matrix_to_text(matrix);
    CHECK(text.find("vs.") != std::string::npos);
    CHECK(text.find("avg. winrate") != std::string::npos);
    CHECK(text.find("-") != std::string::npos);
    CHECK(text.find("100.00") != std::string::npos);

    auto csv = matrix_to_csv(matrix);
    CHECK(csv.find("model,A,B,avg_winrate") != std::string::npos);
    CHECK(csv.find("A,,100.00,100.00") != std::string::npos);
}

TEST_CASE("comparison jsonl round trip") {
    auto original = make_comparison("A", "B", Verdict::tie, "a draw");
    original.output_index = 1;
    original.duplicate = 1;
    auto parsed = comparison_from_json_line(comparison_to_json_line(original));
    CHECK(parsed.model_first == "A");
    CHECK(parsed.verdict == Verdict::tie);
    CHECK(parsed.rationale == "a draw");
    CHECK(parsed.output_index == 1);
    CHECK(parsed.duplicate == 1);
}
