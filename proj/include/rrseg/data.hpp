#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrseg/image_io.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/rng.hpp"
#include "rrseg/tensor.hpp"

namespace rrseg {

// One image / referring-text / mask unit, already resized to model scale.
struct Sample {
    std::string id;
    Tensor image;  // [H2, W2, 3] in [0,1]
    BinMask mask;  // H2 x W2
    std::string text;
    std::string category;  // empty if the manifest has no category column
};

struct TripletDataset {
    struct Entry {
        std::string id, image_path, mask_path, text, category;
    };
    std::string root, split;
    std::vector<Entry> index;

    size_t size() const { return index.size(); }
    // Loads and resizes one sample (bilinear image, nearest-neighbor mask).
    Sample load(size_t i, int64_t h2, int64_t w2) const;
    std::vector<Sample> load_all(int64_t h2, int64_t w2) const;
};

// root must contain images/, masks/ and <split>.tsv with lines
// id<TAB>text[<TAB>category]. Every id must resolve to files on disk.
TripletDataset load_dataset(const std::string& root, const std::string& split);

// Deterministic per-epoch shuffle; the final partial batch is kept.
std::vector<std::vector<size_t>> make_batches(size_t n, int64_t batch_size,
                                              uint64_t shuffle_seed, int64_t epoch);

// ---------------- synthetic shapes-and-referring-text generator ----------------

enum class ShapeKind { Circle, Square, Triangle };
enum class ColorKind { Red, Green, Blue, Gray };

struct SynthSpec {
    int64_t canvas_h = 128, canvas_w = 128;
    int64_t min_objects = 2, max_objects = 5;
    double relation_fraction = 0.3;  // texts phrased via spatial relations
    uint64_t seed = 0;
};

SynthSpec parse_synth_spec_file(const std::string& path);

struct SceneObject {
    ShapeKind shape;
    ColorKind color;
    int64_t cell;  // 0..8 on the 3x3 position grid
    double cx, cy, radius;
};

struct Scene {
    int64_t h = 0, w = 0;
    std::vector<SceneObject> objects;
    size_t referent = 0;
    std::string text;
};

const char* shape_name(ShapeKind s);
const char* color_name(ColorKind c);
const char* position_name(int64_t cell);

Scene make_scene(const SynthSpec& spec, Rng& rng);
ImageU8 render_scene(const Scene& scene);
BinMask render_object_mask(const Scene& scene, size_t obj_index);

// n deterministic triplets; the text of each uniquely identifies its object.
std::vector<Sample> synthesize(const SynthSpec& spec, int64_t n);

// Writes images/, masks/ and <split>.tsv in the standard layout.
void write_synth_dataset(const SynthSpec& spec, int64_t n, const std::string& out_dir,
                         const std::string& split);

}  // namespace rrseg
