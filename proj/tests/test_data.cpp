#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rrseg/data.hpp"
#include "rrseg/errors.hpp"
#include "rrseg/tokenizer.hpp"

using namespace rrseg;
namespace fs = std::filesystem;

namespace {

// independent re-render oracle: parse the canonical text grammar, resolve the
// object against the scene, rasterize it, and compare with the stored mask
size_t resolve_text(const Scene& scene, const std::string& text) {
    auto words = TextTokenizer::split_words(text);
    auto color_of = [](const std::string& w) -> int {
        for (int c = 0; c < 4; ++c)
            if (w == color_name(static_cast<ColorKind>(c))) return c;
        return -1;
    };
    auto shape_of = [](const std::string& w) -> int {
        for (int s = 0; s < 3; ++s)
            if (w == shape_name(static_cast<ShapeKind>(s))) return s;
        return -1;
    };
    REQUIRE(words.size() >= 3);
    REQUIRE(words[0] == "the");
    int c1 = color_of(words[1]);
    int s1 = shape_of(words[2]);
    REQUIRE(c1 >= 0);
    REQUIRE(s1 >= 0);

    std::vector<size_t> hits;
    if (words.size() >= 4 && words[3] == "at") {
        // "the <color> <shape> at the <position words...>"
        std::string pos;
        for (size_t i = 5; i < words.size(); ++i) pos += (pos.empty() ? "" : " ") + words[i];
        for (size_t i = 0; i < scene.objects.size(); ++i) {
            const auto& o = scene.objects[i];
            if (static_cast<int>(o.color) == c1 && static_cast<int>(o.shape) == s1 &&
                position_name(o.cell) == pos)
                hits.push_back(i);
        }
    } else {
        // "the A B <rel...> the C D"
        size_t the2 = 0;
        for (size_t i = 3; i < words.size(); ++i)
            if (words[i] == "the") {
                the2 = i;
                break;
            }
        REQUIRE(the2 > 0);
        std::string rel;
        for (size_t i = 3; i < the2; ++i) rel += (rel.empty() ? "" : " ") + words[i];
        int c2 = color_of(words[the2 + 1]);
        int s2 = shape_of(words[the2 + 2]);
        REQUIRE(c2 >= 0);
        REQUIRE(s2 >= 0);
        auto rel_holds = [&](const SceneObject& a, const SceneObject& b) {
            int64_t arow = a.cell / 3, acol = a.cell % 3;
            int64_t brow = b.cell / 3, bcol = b.cell % 3;
            if (rel == "left of") return arow == brow && acol == bcol - 1;
            if (rel == "right of") return arow == brow && acol == bcol + 1;
            if (rel == "above") return acol == bcol && arow == brow - 1;
            if (rel == "below") return acol == bcol && arow == brow + 1;
            return false;
        };
        for (size_t i = 0; i < scene.objects.size(); ++i) {
            const auto& a = scene.objects[i];
            if (static_cast<int>(a.color) != c1 || static_cast<int>(a.shape) != s1) continue;
            for (size_t j = 0; j < scene.objects.size(); ++j) {
                if (i == j) continue;
                const auto& b = scene.objects[j];
                if (static_cast<int>(b.color) == c2 && static_cast<int>(b.shape) == s2 &&
                    rel_holds(a, b)) {
                    hits.push_back(i);
                    break;
                }
            }
        }
    }
    REQUIRE_MESSAGE(hits.size() == 1, ("text must identify exactly one object: " + text).c_str());
    return hits[0];
}

}  // namespace

TEST_CASE("synthesize: deterministic across calls") {
    SynthSpec spec;
    auto a = synthesize(spec, 10);
    auto b = synthesize(spec, 10);
    REQUIRE(a.size() == 10);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text == b[i].text);
        CHECK(a[i].image.v == b[i].image.v);
        CHECK(a[i].mask.v == b[i].mask.v);
    }
    SynthSpec other = spec;
    other.seed = 1;
    auto c = synthesize(other, 10);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff |= (a[i].text != c[i].text);
    CHECK(any_diff);
}

TEST_CASE("synthesize: masks are nonempty and disjoint from distractors") {
    SynthSpec spec;
    Rng rng(spec.seed);
    for (int k = 0; k < 20; ++k) {
        Scene scene = make_scene(spec, rng);
        std::vector<BinMask> masks;
        for (size_t i = 0; i < scene.objects.size(); ++i)
            masks.push_back(render_object_mask(scene, i));
        for (size_t i = 0; i < masks.size(); ++i) {
            CHECK(masks[i].area() > 0);
            for (size_t j = i + 1; j < masks.size(); ++j) {
                int64_t overlap = 0;
                for (size_t px = 0; px < masks[i].v.size(); ++px)
                    overlap += masks[i].v[px] && masks[j].v[px];
                CHECK(overlap == 0);
            }
        }
    }
}

TEST_CASE("synthesize: re-render oracle recovers the referent exactly") {
    SynthSpec spec;
    spec.relation_fraction = 0.5;  // exercise both grammars
    Rng rng(spec.seed);
    std::vector<Scene> scenes;
    for (int i = 0; i < 24; ++i) scenes.push_back(make_scene(spec, rng));
    int relation_texts = 0;
    for (const Scene& scene : scenes) {
        size_t resolved = resolve_text(scene, scene.text);
        CHECK(resolved == scene.referent);
        BinMask re_rendered = render_object_mask(scene, resolved);
        BinMask stored = render_object_mask(scene, scene.referent);
        CHECK(iou(re_rendered, stored) == 1.0);
        if (scene.text.find(" at the ") == std::string::npos) ++relation_texts;
    }
    CHECK(relation_texts > 0);  // the relation grammar actually occurs
}

TEST_CASE("write + load round trip is pixel-identical") {
    fs::path dir = fs::temp_directory_path() / "rrseg_data_roundtrip";
    fs::remove_all(dir);
    SynthSpec spec;
    write_synth_dataset(spec, 5, dir.string(), "train");
    auto samples = synthesize(spec, 5);
    TripletDataset ds = load_dataset(dir.string(), "train");
    REQUIRE(ds.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        Sample loaded = ds.load(i, spec.canvas_h, spec.canvas_w);
        CHECK(loaded.text == samples[i].text);
        CHECK(loaded.mask.v == samples[i].mask.v);
        CHECK(loaded.image.v == samples[i].image.v);
        CHECK(!loaded.category.empty());
    }
}

TEST_CASE("load_dataset: manifest validation") {
    fs::path dir = fs::temp_directory_path() / "rrseg_data_manifest";
    fs::remove_all(dir);
    SynthSpec spec;
    write_synth_dataset(spec, 3, dir.string(), "train");

    SUBCASE("3-sample fixture loads") {
        CHECK(load_dataset(dir.string(), "train").size() == 3);
    }
    SUBCASE("missing text column names the line") {
        std::ofstream f(dir / "train.tsv", std::ios::app);
        f << "train_00000\n";
        f.close();
        try {
            load_dataset(dir.string(), "train");
            FAIL("expected ManifestError");
        } catch (const ManifestError& e) {
            CHECK(std::string(e.what()).find("line 4") != std::string::npos);
        }
    }
    SUBCASE("missing image file is reported") {
        std::ofstream f(dir / "train.tsv", std::ios::app);
        f << "ghost\tthe red circle at the center\n";
        f.close();
        CHECK_THROWS_AS(load_dataset(dir.string(), "train"), MissingFileError);
    }
    SUBCASE("missing manifest is reported") {
        CHECK_THROWS_AS(load_dataset(dir.string(), "val"), MissingFileError);
    }
}

TEST_CASE("load: resize path normalizes differently sized sources") {
    fs::path dir = fs::temp_directory_path() / "rrseg_data_resize";
    fs::remove_all(dir);
    SynthSpec spec;
    spec.canvas_h = spec.canvas_w = 64;  // smaller than the model input
    write_synth_dataset(spec, 2, dir.string(), "train");
    TripletDataset ds = load_dataset(dir.string(), "train");
    Sample s = ds.load(0, 128, 128);
    CHECK(s.image.shape == std::vector<int64_t>({128, 128, 3}));
    CHECK(s.mask.h == 128);
    CHECK(s.mask.w == 128);
    for (uint8_t px : s.mask.v) CHECK((px == 0 || px == 1));  // nearest keeps it binary
    CHECK(s.mask.area() > 0);
}

TEST_CASE("make_batches: sizes, determinism, per-epoch reshuffle") {
    auto batches = make_batches(10, 4, 0, 0);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 4);
    CHECK(batches[1].size() == 4);
    CHECK(batches[2].size() == 2);  // partial batch kept
    std::set<size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10);

    CHECK(make_batches(10, 4, 0, 0) == batches);          // same seed, same order
    CHECK(make_batches(10, 4, 0, 1) != batches);          // epoch advances the order
    CHECK(make_batches(10, 4, 123, 0) != batches);        // seed changes the order
    CHECK_THROWS_AS(make_batches(10, 0, 0, 0), ConfigError);
}

TEST_CASE("synth spec file parsing") {
    fs::path p = fs::temp_directory_path() / "rrseg_spec.cfg";
    {
        std::ofstream f(p);
        f << "# generator settings\ncanvas_h=96\ncanvas_w = 96\nseed=5\nrelation_fraction=0.5\n";
    }
    SynthSpec spec = parse_synth_spec_file(p.string());
    CHECK(spec.canvas_h == 96);
    CHECK(spec.seed == 5);
    CHECK(spec.relation_fraction == doctest::Approx(0.5));
    {
        std::ofstream f(p);
        f << "bogus_key=1\n";
    }
    CHECK_THROWS_AS(parse_synth_spec_file(p.string()), SpecError);
}
