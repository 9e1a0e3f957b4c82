#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forge/common.hpp"
#include "forge/vd_eval.hpp"

#include <algorithm>

using namespace forge;
using namespace forge::vd;

namespace {

CweSet labels(std::initializer_list<const char*> ids) {
    CweSet set;
    for (const char* id : ids) {
        set.insert(*CweLabel::parse(id));
    }
    return set;
}

VdPrediction prediction(const std::string& id, std::initializer_list<const char*> ids) {
    return {id, labels(ids), ""};
}

} // namespace

TEST_CASE("extract_cwes: pattern variants, dedup, normalization") {
    auto found = extract_cwes("exhibits CWE-787 and cwe-125");
    CHECK(found == labels({"CWE-787", "CWE-125"}));

    CHECK(extract_cwes("").empty());
    CHECK(extract_cwes("no weaknesses here").empty());

    CHECK(extract_cwes("CWE-0079 and CWE79") == labels({"CWE-79"}));
    CHECK(extract_cwes("cwe 416 via CWE‐120") == labels({"CWE-416", "CWE-120"}));
    // digits bind to the nearest mention
    CHECK(extract_cwes("CWE-125-adjacent and CWE-1250") == labels({"CWE-125", "CWE-1250"}));
}

TEST_CASE("extraction idempotence on canonically rendered label sets") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        CweSet original;
        int count = 1 + static_cast<int>(rng.bounded(5));
        for (int i = 0; i < count; ++i) {
            original.insert(CweLabel::from_number(1 + static_cast<int>(rng.bounded(1400))));
        }
        std::string rendered;
        for (const auto& label : original) {
            rendered += label.id() + "\n"; // one per line
        }
        CHECK(extract_cwes(rendered) == original);
    }
}

TEST_CASE("micro_scores: single-sample exact and miss") {
    std::map<std::string, CweSet> gold = {{"a", labels({"CWE-79"})}};
    auto hit = micro_scores({prediction("a", {"CWE-79"})}, gold);
    CHECK(hit.f1 == doctest::Approx(1.0));
    CHECK(hit.tp == 1);

    std::map<std::string, CweSet> gold_miss = {{"a", labels({"CWE-125"})}};
    auto miss = micro_scores({prediction("a", {"CWE-79"})}, gold_miss);
    CHECK(miss.f1 == 0.0);
    CHECK(miss.fp == 1);
    CHECK(miss.fn == 1);
}

TEST_CASE("micro_scores: pooled counts over three samples") {
    std::map<std::string, CweSet> gold = {
        {"s1", labels({"CWE-79", "CWE-125"})},
        {"s2", labels({"CWE-416"})},
        {"s3", labels({"CWE-20"})},
    };
    std::vector<VdPrediction> predictions = {
        prediction("s1", {"CWE-79"}),
        prediction("s2", {"CWE-416"}),
        prediction("s3", {}),
    };
    auto score = micro_scores(predictions, gold);
    CHECK(score.tp == 2);
    CHECK(score.fp == 0);
    CHECK(score.fn == 2);
    CHECK(score.precision == doctest::Approx(1.0));
    CHECK(score.recall == doctest::Approx(0.5));
    CHECK(score.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("micro_scores: unknown sample id is fatal") {
    std::map<std::string, CweSet> gold = {{"known", labels({"CWE-79"})}};
    CHECK_THROWS_AS(micro_scores({prediction("mystery", {"CWE-79"})}, gold), ValidationError);
}

TEST_CASE("micro_scores matches a brute-force counter on 1000 random instances") {
    Rng rng(1234);
    const int universe = 10;
    for (int instance = 0; instance < 1000; ++instance) {
        int samples = 1 + static_cast<int>(rng.bounded(6));
        std::map<std::string, CweSet> gold;
        std::vector<VdPrediction> predictions;
        // brute-force tallies computed label-by-label as we generate
        std::uint64_t tp = 0, fp = 0, fn = 0;
        for (int s = 0; s < samples; ++s) {
            std::string id = "i" + std::to_string(s);
            CweSet gold_set, pred_set;
            for (int label = 1; label <= universe; ++label) {
                bool in_gold = rng.bounded(3) == 0;
                bool in_pred = rng.bounded(3) == 0;
                if (in_gold) gold_set.insert(CweLabel::from_number(label));
                if (in_pred) pred_set.insert(CweLabel::from_number(label));
                if (in_gold && in_pred) ++tp;
                if (!in_gold && in_pred) ++fp;
                if (in_gold && !in_pred) ++fn;
            }
            gold[id] = gold_set;
            predictions.push_back({id, pred_set, ""});
        }
        auto score = micro_scores(predictions, gold);
        REQUIRE(score.tp == tp);
        REQUIRE(score.fp == fp);
        REQUIRE(score.fn == fn);
        double expect_p = (tp + fp) == 0 ? 0.0 : double(tp) / double(tp + fp);
        double expect_r = (tp + fn) == 0 ? 0.0 : double(tp) / double(tp + fn);
        double expect_f1 =
            (expect_p + expect_r) == 0 ? 0.0 : 2 * expect_p * expect_r / (expect_p + expect_r);
        REQUIRE(score.precision == doctest::Approx(expect_p).epsilon(1e-12));
        REQUIRE(score.recall == doctest::Approx(expect_r).epsilon(1e-12));
        REQUIRE(score.f1 == doctest::Approx(expect_f1).epsilon(1e-12));
    }
}

TEST_CASE("scores are invariant to sample order") {
    std::map<std::string, CweSet> gold = {
        {"a", labels({"CWE-79"})}, {"b", labels({"CWE-125", "CWE-20"})}, {"c", {}}};
    std::vector<VdPrediction> predictions = {
        prediction("a", {"CWE-79", "CWE-416"}), prediction("b", {"CWE-125"}), prediction("c", {})};
    auto forward_score = micro_scores(predictions, gold);
    std::reverse(predictions.begin(), predictions.end());
    auto reverse_score = micro_scores(predictions, gold);
    CHECK(forward_score.f1 == reverse_score.f1);
    CHECK(forward_score.tp == reverse_score.tp);
    CHECK(forward_score.fp == reverse_score.fp);
    CHECK(forward_score.fn == reverse_score.fn);
}

TEST_CASE("monotonicity: correct labels never hurt recall, wrong ones never help precision") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, CweSet> gold;
        CweSet gold_set;
        for (int label = 1; label <= 8; ++label) {
            if (rng.bounded(2)) gold_set.insert(CweLabel::from_number(label));
        }
        if (gold_set.empty()) gold_set.insert(CweLabel::from_number(9));
        gold["x"] = gold_set;

        CweSet pred_set;
        for (int label = 1; label <= 8; ++label) {
            if (rng.bounded(2)) pred_set.insert(CweLabel::from_number(label));
        }
        auto base = micro_scores({{"x", pred_set, ""}}, gold);

        // add one missing correct label
        for (const auto& label : gold_set) {
            if (pred_set.count(label) == 0) {
                CweSet grown = pred_set;
                grown.insert(label);
                auto grown_score = micro_scores({{"x", grown, ""}}, gold);
                CHECK(grown_score.recall >= base.recall);
                break;
            }
        }
        // add one incorrect label
        CweSet wrong = pred_set;
        wrong.insert(CweLabel::from_number(500));
        auto wrong_score = micro_scores({{"x", wrong, ""}}, gold);
        CHECK(wrong_score.precision <= base.precision);
    }
}

TEST_CASE("score_report renders Table-3 style rows") {
    VdScore mcc;
    mcc.f1 = 0.1278;
    mcc.precision = 0.1339;
    mcc.recall = 0.1223;
    auto table = score_report({{"mcc", mcc}});

    // normalize runs of spaces to compare the row content
    std::string squashed;
    bool last_space = false;
    for (char c : table) {
        if (c == ' ') {
            if (!last_space) squashed += ' ';
            last_space = true;
        } else {
            squashed += c;
            last_space = false;
        }
    }
    CHECK(squashed.find("mcc 12.78 13.39 12.23") != std::string::npos);

    auto zeros = score_report({{"zero", VdScore{}}});
    CHECK(zeros.find("0.00") != std::string::npos);

    auto single = score_report({{"only", mcc}});
    CHECK(std::count(single.begin(), single.end(), '\n') == 2); // header + one row
}

TEST_CASE("per-label debug counts split the pooled tallies") {
    std::map<std::string, CweSet> gold = {{"a", labels({"CWE-79", "CWE-125"})},
                                          {"b", labels({"CWE-79"})}};
    std::vector<VdPrediction> predictions = {prediction("a", {"CWE-79", "CWE-416"}),
                                             prediction("b", {})};
    auto counts = per_label_counts(predictions, gold);
    CHECK(counts["CWE-79"].tp == 1);
    CHECK(counts["CWE-79"].fn == 1);
    CHECK(counts["CWE-125"].fn == 1);
    CHECK(counts["CWE-416"].fp == 1);

    // sums match the pooled micro counts
    auto pooled = micro_scores(predictions, gold);
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (const auto& [label, c] : counts) {
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    CHECK(tp == pooled.tp);
    CHECK(fp == pooled.fp);
    CHECK(fn == pooled.fn);
}

TEST_CASE("round-half-up formatting at two decimals") {
    // ties on binary-exact inputs round up, not to even
    CHECK(format_fixed(0.125, 2) == "0.13");
    CHECK(format_fixed(0.375, 2) == "0.38");
    CHECK(format_fixed(12.784999, 2) == "12.78");
    CHECK(format_fixed(85.95, 2) == "85.95");
    CHECK(format_fixed(-0.125, 2) == "-0.13"); // half away from zero
}
