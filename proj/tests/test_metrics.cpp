#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "rrseg/errors.hpp"
#include "rrseg/image_io.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/rng.hpp"

using namespace rrseg;
namespace fs = std::filesystem;

namespace {

BinMask mask_from_range(int64_t h, int64_t w, int64_t lo, int64_t hi) {
    BinMask m(h, w);
    for (int64_t i = lo; i < hi; ++i) m.v[static_cast<size_t>(i)] = 1;
    return m;
}

BinMask random_mask(int64_t h, int64_t w, Rng& rng, double p = 0.5) {
    BinMask m(h, w);
    for (auto& px : m.v) px = rng.uniform() < p ? 1 : 0;
    return m;
}

// independent brute-force oracle: per-pixel counting only
struct OracleStats {
    double giou = 0, ciou = 0;
    std::vector<double> ious;
};

OracleStats oracle(const std::vector<std::pair<BinMask, BinMask>>& samples) {
    OracleStats st;
    long long ci = 0, cu = 0;
    for (const auto& [p, g] : samples) {
        long long inter = 0, uni = 0;
        for (size_t k = 0; k < p.v.size(); ++k) {
            if (p.v[k] && g.v[k]) ++inter;
            if (p.v[k] || g.v[k]) ++uni;
        }
        double v = uni == 0 ? 1.0 : double(inter) / double(uni);
        st.ious.push_back(v);
        st.giou += v;
        ci += inter;
        cu += uni;
    }
    st.giou /= double(samples.size());
    st.ciou = cu == 0 ? 1.0 : double(ci) / double(cu);
    return st;
}

}  // namespace

TEST_CASE("iou: basic identities") {
    BinMask a = mask_from_range(4, 4, 0, 8);
    CHECK(iou(a, a) == 1.0);
    BinMask b = mask_from_range(4, 4, 8, 16);
    CHECK(iou(a, b) == 0.0);
    CHECK(iou(a, b) == iou(b, a));
    BinMask empty(4, 4);
    CHECK(iou(empty, empty) == 1.0);  // both-empty convention
    CHECK_THROWS_AS(iou(a, BinMask(3, 4)), ShapeError);

    // |P ∩ G| = 50, |P ∪ G| = 100
    BinMask p = mask_from_range(10, 10, 0, 75);
    BinMask g = mask_from_range(10, 10, 25, 100);
    CHECK(iou(p, g) == doctest::Approx(0.5));
}

TEST_CASE("giou_ciou: worked example showing cIoU's large-region bias") {
    // sample 1: I=50, U=100; sample 2: I=10, U=10
    std::vector<std::pair<BinMask, BinMask>> samples;
    samples.emplace_back(mask_from_range(10, 10, 0, 75), mask_from_range(10, 10, 25, 100));
    samples.emplace_back(mask_from_range(10, 10, 0, 10), mask_from_range(10, 10, 0, 10));
    auto [giou, ciou] = giou_ciou(samples);
    CHECK(giou == doctest::Approx(0.75));
    CHECK(ciou == doctest::Approx(60.0 / 110.0));

    SUBCASE("all perfect gives 1/1") {
        std::vector<std::pair<BinMask, BinMask>> perfect;
        perfect.emplace_back(mask_from_range(4, 4, 0, 5), mask_from_range(4, 4, 0, 5));
        auto [g2, c2] = giou_ciou(perfect);
        CHECK(g2 == 1.0);
        CHECK(c2 == 1.0);
    }
    SUBCASE("single sample: gIoU == cIoU == IoU") {
        std::vector<std::pair<BinMask, BinMask>> one;
        one.emplace_back(mask_from_range(10, 10, 0, 75), mask_from_range(10, 10, 25, 100));
        auto [g1, c1] = giou_ciou(one);
        CHECK(g1 == doctest::Approx(0.5));
        CHECK(c1 == doctest::Approx(0.5));
    }
    CHECK_THROWS_AS(giou_ciou({}), EmptySetError);
}

TEST_CASE("pr_at_x: strict threshold semantics") {
    std::vector<double> ious = {0.55, 0.75, 0.95};
    CHECK(pr_at_x(ious, 0.5) == doctest::Approx(1.0));
    CHECK(pr_at_x(ious, 0.7) == doctest::Approx(2.0 / 3.0));
    CHECK(pr_at_x(ious, 0.9) == doctest::Approx(1.0 / 3.0));
    CHECK(pr_at_x({0, 0, 0}, 0.5) == 0.0);
    CHECK(pr_at_x({0.5}, 0.5) == 0.0);  // exactly at threshold: excluded

    SUBCASE("monotone in the threshold") {
        Rng rng(1);
        std::vector<double> vals;
        for (int i = 0; i < 50; ++i) vals.push_back(rng.uniform());
        for (double lo = 0.1; lo < 0.85; lo += 0.1)
            CHECK(pr_at_x(vals, lo) >= pr_at_x(vals, lo + 0.1));
    }
}

TEST_CASE("evaluate_masks matches the brute-force oracle on random pairs") {
    Rng rng(2);
    std::vector<std::string> ids;
    std::vector<BinMask> preds, gts;
    std::vector<std::pair<BinMask, BinMask>> pairs;
    for (int i = 0; i < 20; ++i) {
        ids.push_back("m" + std::to_string(i));
        preds.push_back(random_mask(16, 16, rng, 0.4));
        gts.push_back(random_mask(16, 16, rng, 0.4));
        pairs.emplace_back(preds.back(), gts.back());
    }
    EvalReport rep = evaluate_masks(ids, preds, gts);
    OracleStats st = oracle(pairs);
    CHECK(rep.gIoU == st.giou);
    CHECK(rep.cIoU == st.ciou);
    for (double x : pr_thresholds()) {
        int64_t hits = 0;
        for (double v : st.ious) hits += (v > x);
        CHECK(rep.pr_at.at(x) == doctest::Approx(double(hits) / 20.0));
    }
    for (size_t i = 0; i < ids.size(); ++i)
        CHECK(rep.per_sample_iou[i].second == st.ious[i]);
}

TEST_CASE("evaluate over directories with per-category table") {
    fs::path dir = fs::temp_directory_path() / "rrseg_eval_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    Rng rng(3);
    std::map<std::string, std::string> cats;
    for (int i = 0; i < 6; ++i) {
        std::string id = "s" + std::to_string(i);
        BinMask gt = random_mask(8, 8, rng, 0.5);
        write_png_mask1((dir / "gt" / (id + ".png")).string(), gt);
        write_png_mask1((dir / "pred" / (id + ".png")).string(), gt);  // perfect predictions
        cats[id] = i % 2 ? "circle" : "square";
    }
    EvalReport rep = evaluate((dir / "pred").string(), (dir / "gt").string(), &cats);
    CHECK(rep.gIoU == 1.0);
    CHECK(rep.cIoU == 1.0);
    for (double x : pr_thresholds()) CHECK(rep.pr_at.at(x) == 1.0);
    CHECK(rep.per_category_iou.at("circle") == 1.0);
    CHECK(rep.per_category_iou.at("square") == 1.0);

    SUBCASE("missing prediction is reported by id") {
        fs::remove(dir / "pred" / "s3.png");
        try {
            evaluate((dir / "pred").string(), (dir / "gt").string());
            FAIL("expected MissingPredictionError");
        } catch (const MissingPredictionError& e) {
            CHECK(std::string(e.what()).find("s3") != std::string::npos);
        }
    }
}

TEST_CASE("eval report JSON matches the published schema") {
    Rng rng(4);
    std::vector<std::string> ids = {"a", "b"};
    std::vector<BinMask> preds = {random_mask(8, 8, rng), random_mask(8, 8, rng)};
    std::vector<BinMask> gts = {random_mask(8, 8, rng), random_mask(8, 8, rng)};
    std::vector<std::string> cats = {"circle", "square"};
    EvalReport rep = evaluate_masks(ids, preds, gts, &cats);
    nlohmann::json j = nlohmann::json::parse(rep.to_json());

    std::ifstream schema_file("docs/eval_report.schema.json");
    REQUIRE_MESSAGE(schema_file.good(), "run tests from the repository root");
    nlohmann::json schema = nlohmann::json::parse(schema_file);

    // minimal structural validation against the shipped schema
    std::function<void(const nlohmann::json&, const nlohmann::json&, std::string)> check_node =
        [&](const nlohmann::json& node, const nlohmann::json& sch, std::string where) {
            std::string type = sch.value("type", "");
            if (type == "object") {
                REQUIRE_MESSAGE(node.is_object(), where.c_str());
                if (sch.contains("required"))
                    for (const auto& k : sch["required"])
                        REQUIRE_MESSAGE(node.contains(k.get<std::string>()),
                                        (where + " missing " + k.get<std::string>()).c_str());
                if (sch.contains("properties"))
                    for (auto& [k, sub] : sch["properties"].items())
                        if (node.contains(k)) check_node(node[k], sub, where + "." + k);
                if (sch.contains("additionalProperties") &&
                    sch["additionalProperties"].is_object())
                    for (auto& [k, val] : node.items())
                        if (!sch.contains("properties") || !sch["properties"].contains(k))
                            check_node(val, sch["additionalProperties"], where + "." + k);
            } else if (type == "array") {
                REQUIRE_MESSAGE(node.is_array(), where.c_str());
                if (sch.contains("items"))
                    for (const auto& item : node) check_node(item, sch["items"], where + "[]");
            } else if (type == "number") {
                REQUIRE_MESSAGE(node.is_number(), where.c_str());
                if (sch.contains("minimum")) CHECK(node.get<double>() >= sch["minimum"]);
                if (sch.contains("maximum")) CHECK(node.get<double>() <= sch["maximum"]);
            } else if (type == "string") {
                REQUIRE_MESSAGE(node.is_string(), where.c_str());
            }
        };
    check_node(j, schema, "$");

    // report invariants: gIoU is the mean of per-sample IoUs; Pr@X keys fixed
    double mean = 0;
    for (const auto& [id, v] : rep.per_sample_iou) mean += v;
    mean /= double(rep.per_sample_iou.size());
    CHECK(rep.gIoU == doctest::Approx(mean).epsilon(1e-12));
    REQUIRE(j["pr"].size() == 5);
    for (const char* k : {"0.5", "0.6", "0.7", "0.8", "0.9"}) CHECK(j["pr"].contains(k));
}
