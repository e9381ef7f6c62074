#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rrseg/data.hpp"
#include "rrseg/errors.hpp"

namespace fs = std::filesystem;

namespace rrseg {

namespace {

constexpr int64_t kGrid = 3;

struct Rgb {
    uint8_t r, g, b;
};

Rgb color_rgb(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return {204, 26, 26};
        case ColorKind::Green: return {26, 166, 38};
        case ColorKind::Blue: return {38, 51, 204};
        case ColorKind::Gray: return {128, 128, 128};
    }
    return {0, 0, 0};
}

bool inside(const SceneObject& o, double px, double py) {
    double dx = px - o.cx, dy = py - o.cy;
    switch (o.shape) {
        case ShapeKind::Circle:
            return dx * dx + dy * dy <= o.radius * o.radius;
        case ShapeKind::Square:
            return std::max(std::abs(dx), std::abs(dy)) <= o.radius * 0.85;
        case ShapeKind::Triangle: {
            double x0 = o.cx, y0 = o.cy - o.radius;
            double x1 = o.cx - 0.95 * o.radius, y1 = o.cy + 0.8 * o.radius;
            double x2 = o.cx + 0.95 * o.radius, y2 = o.cy + 0.8 * o.radius;
            auto side = [&](double ax, double ay, double bx, double by) {
                return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            };
            double s0 = side(x0, y0, x1, y1), s1 = side(x1, y1, x2, y2), s2 = side(x2, y2, x0, y0);
            return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
        }
    }
    return false;
}

const char* kRelWords[4] = {"left of", "right of", "above", "below"};

// relation r holds when `a` sits in the named direction from `b`
bool relation_holds(int rel, int64_t a_cell, int64_t b_cell) {
    int64_t ar = a_cell / kGrid, ac = a_cell % kGrid;
    int64_t br = b_cell / kGrid, bc = b_cell % kGrid;
    switch (rel) {
        case 0: return ar == br && ac == bc - 1;  // left of
        case 1: return ar == br && ac == bc + 1;  // right of
        case 2: return ac == bc && ar == br - 1;  // above
        case 3: return ac == bc && ar == br + 1;  // below
    }
    return false;
}

std::vector<size_t> match_position(const Scene& s, ColorKind c, ShapeKind sh, int64_t cell) {
    std::vector<size_t> out;
    for (size_t i = 0; i < s.objects.size(); ++i)
        if (s.objects[i].color == c && s.objects[i].shape == sh && s.objects[i].cell == cell)
            out.push_back(i);
    return out;
}

std::vector<size_t> match_relation(const Scene& s, ColorKind c1, ShapeKind s1, int rel,
                                   ColorKind c2, ShapeKind s2) {
    std::vector<size_t> out;
    for (size_t a = 0; a < s.objects.size(); ++a) {
        if (s.objects[a].color != c1 || s.objects[a].shape != s1) continue;
        for (size_t b = 0; b < s.objects.size(); ++b) {
            if (a == b || s.objects[b].color != c2 || s.objects[b].shape != s2) continue;
            if (relation_holds(rel, s.objects[a].cell, s.objects[b].cell)) {
                out.push_back(a);
                break;
            }
        }
    }
    return out;
}

}  // namespace

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
    }
    return "?";
}

const char* color_name(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return "red";
        case ColorKind::Green: return "green";
        case ColorKind::Blue: return "blue";
        case ColorKind::Gray: return "gray";
    }
    return "?";
}

const char* position_name(int64_t cell) {
    static const char* names[9] = {"top left", "top",    "top right",    "left",  "center",
                                   "right",    "bottom left", "bottom", "bottom right"};
    return names[cell];
}

SynthSpec parse_synth_spec_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingFileError("synth spec not found: " + path);
    SynthSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r\n");
        line = line.substr(first, last - first + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw SpecError("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        key.erase(key.find_last_not_of(" \t") + 1);
        val.erase(0, val.find_first_not_of(" \t"));
        try {
            if (key == "canvas_h") spec.canvas_h = std::stoll(val);
            else if (key == "canvas_w") spec.canvas_w = std::stoll(val);
            else if (key == "min_objects") spec.min_objects = std::stoll(val);
            else if (key == "max_objects") spec.max_objects = std::stoll(val);
            else if (key == "relation_fraction") spec.relation_fraction = std::stod(val);
            else if (key == "seed") spec.seed = std::stoull(val);
            else throw SpecError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const SpecError&) {
            throw;
        } catch (const std::exception&) {
            throw SpecError("line " + std::to_string(lineno) + ": bad value '" + val + "'");
        }
    }
    return spec;
}

Scene make_scene(const SynthSpec& spec, Rng& rng) {
    if (spec.min_objects < 2 || spec.max_objects > 9 || spec.min_objects > spec.max_objects)
        throw SpecError("object count range must be within [2, 9]");
    if (spec.canvas_h < 32 || spec.canvas_w < 32) throw SpecError("canvas too small");

    double unit = static_cast<double>(std::min(spec.canvas_h, spec.canvas_w));
    for (int attempt = 0; attempt < 100; ++attempt) {
        Scene s;
        s.h = spec.canvas_h;
        s.w = spec.canvas_w;
        int64_t n_obj = rng.uniform_int(spec.min_objects, spec.max_objects);
        std::vector<int64_t> cells = {0, 1, 2, 3, 4, 5, 6, 7, 8};
        for (size_t i = cells.size(); i > 1; --i)
            std::swap(cells[i - 1], cells[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        cells.resize(static_cast<size_t>(n_obj));
        for (int64_t cell : cells) {
            SceneObject o;
            o.shape = static_cast<ShapeKind>(rng.uniform_int(0, 2));
            o.color = static_cast<ColorKind>(rng.uniform_int(0, 3));
            o.cell = cell;
            double pitch_x = static_cast<double>(s.w) / kGrid;
            double pitch_y = static_cast<double>(s.h) / kGrid;
            o.cx = pitch_x * (0.5 + static_cast<double>(cell % kGrid)) +
                   rng.uniform(-0.03, 0.03) * unit;
            o.cy = pitch_y * (0.5 + static_cast<double>(cell / kGrid)) +
                   rng.uniform(-0.03, 0.03) * unit;
            o.radius = rng.uniform(0.07, 0.11) * unit;
            s.objects.push_back(o);
        }
        s.referent = static_cast<size_t>(rng.uniform_int(0, n_obj - 1));
        const SceneObject& ref = s.objects[s.referent];

        bool want_relation = rng.uniform() < spec.relation_fraction;
        bool built = false;
        if (want_relation) {
            // anchors adjacent to the referent, shuffled deterministically
            std::vector<std::pair<int, size_t>> options;
            for (int rel = 0; rel < 4; ++rel)
                for (size_t b = 0; b < s.objects.size(); ++b)
                    if (b != s.referent && relation_holds(rel, ref.cell, s.objects[b].cell))
                        options.emplace_back(rel, b);
            if (!options.empty()) {
                auto [rel, b] =
                    options[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(options.size()) - 1))];
                const SceneObject& anchor = s.objects[b];
                s.text = std::string("the ") + color_name(ref.color) + " " + shape_name(ref.shape) +
                         " " + kRelWords[rel] + " the " + color_name(anchor.color) + " " +
                         shape_name(anchor.shape);
                auto matches =
                    match_relation(s, ref.color, ref.shape, rel, anchor.color, anchor.shape);
                if (matches.size() == 1 && matches[0] == s.referent) built = true;
            }
        }
        if (!built) {
            s.text = std::string("the ") + color_name(ref.color) + " " + shape_name(ref.shape) +
                     " at the " + position_name(ref.cell);
            auto matches = match_position(s, ref.color, ref.shape, ref.cell);
            if (matches.size() == 1 && matches[0] == s.referent) built = true;
        }
        if (built) return s;
    }
    throw SpecError("could not construct a scene with a unique referent");
}

ImageU8 render_scene(const Scene& scene) {
    ImageU8 img(scene.h, scene.w, 3);
    // deterministic background: soft vertical gradient
    for (int64_t y = 0; y < scene.h; ++y) {
        uint8_t base = static_cast<uint8_t>(230 + (y * 12) / std::max<int64_t>(scene.h, 1));
        for (int64_t x = 0; x < scene.w; ++x) {
            img.at(y, x, 0) = base;
            img.at(y, x, 1) = base;
            img.at(y, x, 2) = static_cast<uint8_t>(base - 6);
        }
    }
    for (const auto& o : scene.objects) {
        Rgb c = color_rgb(o.color);
        int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(o.cy - o.radius - 2));
        int64_t y1 = std::min<int64_t>(scene.h, static_cast<int64_t>(o.cy + o.radius + 3));
        int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(o.cx - o.radius - 2));
        int64_t x1 = std::min<int64_t>(scene.w, static_cast<int64_t>(o.cx + o.radius + 3));
        for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x)
                if (inside(o, x + 0.5, y + 0.5)) {
                    img.at(y, x, 0) = c.r;
                    img.at(y, x, 1) = c.g;
                    img.at(y, x, 2) = c.b;
                }
    }
    return img;
}

BinMask render_object_mask(const Scene& scene, size_t obj_index) {
    const SceneObject& o = scene.objects.at(obj_index);
    BinMask m(scene.h, scene.w);
    for (int64_t y = 0; y < scene.h; ++y)
        for (int64_t x = 0; x < scene.w; ++x)
            if (inside(o, x + 0.5, y + 0.5)) m.at(y, x) = 1;
    return m;
}

std::vector<Sample> synthesize(const SynthSpec& spec, int64_t n) {
    if (n < 1) throw SpecError("synthesize: n must be >= 1");
    Rng rng(spec.seed);
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Scene scene = make_scene(spec, rng);
        Sample s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%05lld", static_cast<long long>(i));
        s.id = buf;
        s.text = scene.text;
        s.category = shape_name(scene.objects[scene.referent].shape);
        s.image = image_to_tensor(render_scene(scene));
        s.mask = render_object_mask(scene, scene.referent);
        if (s.mask.area() == 0) throw SpecError("generated an empty mask");
        out.push_back(std::move(s));
    }
    return out;
}

void write_synth_dataset(const SynthSpec& spec, int64_t n, const std::string& out_dir,
                         const std::string& split) {
    std::vector<Sample> samples = synthesize(spec, n);
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    std::ofstream manifest(fs::path(out_dir) / (split + ".tsv"));
    if (!manifest) throw IoError("cannot write manifest under " + out_dir);
    for (auto& s : samples) {
        std::string id = split + "_" + s.id.substr(s.id.find('_') + 1);
        write_png_rgb((fs::path(out_dir) / "images" / (id + ".png")).string(),
                      tensor_to_image(s.image));
        ImageU8 m(s.mask.h, s.mask.w, 1);
        for (size_t i = 0; i < s.mask.v.size(); ++i) m.v[i] = s.mask.v[i] ? 255 : 0;
        write_png_gray((fs::path(out_dir) / "masks" / (id + ".png")).string(), m);
        manifest << id << "\t" << s.text << "\t" << s.category << "\n";
    }
}

}  // namespace rrseg
