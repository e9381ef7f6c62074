#include "rrseg/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rrseg/errors.hpp"

namespace fs = std::filesystem;

namespace rrseg {

namespace {

std::string find_file(const std::string& dir, const std::string& id) {
    for (const char* ext : {".png", ".pgm"}) {
        fs::path p = fs::path(dir) / (id + ext);
        if (fs::exists(p)) return p.string();
    }
    return "";
}

}  // namespace

Sample TripletDataset::load(size_t i, int64_t h2, int64_t w2) const {
    const Entry& e = index.at(i);
    Sample s;
    s.id = e.id;
    s.text = e.text;
    s.category = e.category;
    Tensor img = image_to_tensor(read_image(e.image_path));
    s.image = (img.dim(0) == h2 && img.dim(1) == w2) ? std::move(img)
                                                     : resize_bilinear_rgb(img, h2, w2);
    BinMask m = read_mask(e.mask_path);
    s.mask = (m.h == h2 && m.w == w2) ? std::move(m) : resize_mask_nearest(m, h2, w2);
    return s;
}

std::vector<Sample> TripletDataset::load_all(int64_t h2, int64_t w2) const {
    std::vector<Sample> out;
    out.reserve(index.size());
    for (size_t i = 0; i < index.size(); ++i) out.push_back(load(i, h2, w2));
    return out;
}

TripletDataset load_dataset(const std::string& root, const std::string& split) {
    fs::path manifest = fs::path(root) / (split + ".tsv");
    std::ifstream f(manifest);
    if (!f) throw MissingFileError("manifest not found: " + manifest.string());

    TripletDataset ds;
    ds.root = root;
    ds.split = split;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() < 2 || cols[0].empty() || cols[1].empty())
            throw ManifestError("line " + std::to_string(lineno) +
                                ": expected id<TAB>text[<TAB>category]");
        TripletDataset::Entry e;
        e.id = cols[0];
        e.text = cols[1];
        if (cols.size() >= 3) e.category = cols[2];
        e.image_path = find_file((fs::path(root) / "images").string(), e.id);
        if (e.image_path.empty())
            throw MissingFileError("image for id '" + e.id + "' not found under " + root);
        e.mask_path = find_file((fs::path(root) / "masks").string(), e.id);
        if (e.mask_path.empty())
            throw MissingFileError("mask for id '" + e.id + "' not found under " + root);
        ds.index.push_back(std::move(e));
    }
    return ds;
}

std::vector<std::vector<size_t>> make_batches(size_t n, int64_t batch_size,
                                              uint64_t shuffle_seed, int64_t epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    // distinct deterministic stream per epoch
    Rng rng(shuffle_seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch + 1)));
    for (size_t i = n; i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(n, start + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<int64_t>(start),
                             order.begin() + static_cast<int64_t>(end));
    }
    return batches;
}

}  // namespace rrseg
