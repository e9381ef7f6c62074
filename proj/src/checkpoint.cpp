#include "rrseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "rrseg/errors.hpp"

namespace rrseg {

namespace {

constexpr char kMagic[8] = {'R', 'R', 'S', 'E', 'G', 'C', 'K', '1'};

void put_u32(std::ostream& os, uint32_t x) { os.write(reinterpret_cast<const char*>(&x), 4); }
void put_i64(std::ostream& os, int64_t x) { os.write(reinterpret_cast<const char*>(&x), 8); }
void put_f64(std::ostream& os, double x) { os.write(reinterpret_cast<const char*>(&x), 8); }

uint32_t get_u32(std::istream& is) {
    uint32_t x = 0;
    is.read(reinterpret_cast<char*>(&x), 4);
    return x;
}
int64_t get_i64(std::istream& is) {
    int64_t x = 0;
    is.read(reinterpret_cast<char*>(&x), 8);
    return x;
}
double get_f64(std::istream& is) {
    double x = 0;
    is.read(reinterpret_cast<char*>(&x), 8);
    return x;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void put_tensor(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape) put_i64(os, d);
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(float)));
}

Tensor get_tensor(std::istream& is) {
    uint32_t nd = get_u32(is);
    if (nd > 8) throw CheckpointShapeError("implausible tensor rank in checkpoint");
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = get_i64(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    if (!is) throw CheckpointShapeError("truncated tensor data in checkpoint");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, Model<float>& model, const TrainState* state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kMagic, 8);
    put_string(os, serialize_config(model.config()));
    const auto& ps = model.params();
    put_u32(os, static_cast<uint32_t>(ps.params.size()));
    for (const auto& e : ps.params) {
        put_string(os, e.name);
        put_tensor(os, e.var->val);
    }
    put_u32(os, static_cast<uint32_t>(ps.buffers.size()));
    for (const auto& b : ps.buffers) {
        put_string(os, b.name);
        put_tensor(os, *b.tensor);
    }
    os.put(state ? 1 : 0);
    if (state) {
        put_i64(os, state->step);
        put_i64(os, state->epoch);
        put_f64(os, state->best_giou);
        put_string(os, state->rng_state);
        put_u32(os, static_cast<uint32_t>(state->moments.size()));
        for (const auto& [m, v] : state->moments) {
            put_tensor(os, m);
            put_tensor(os, v);
        }
    }
    if (!os) throw IoError("short write on checkpoint: " + path);
}

ModelConfig peek_checkpoint_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFileError("checkpoint not found: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointShapeError("not a checkpoint file: " + path);
    return parse_config_text(get_string(is));
}

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path,
                                              std::optional<TrainState>* state_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFileError("checkpoint not found: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointShapeError("not a checkpoint file: " + path);
    ModelConfig cfg = parse_config_text(get_string(is));
    auto model = std::make_unique<Model<float>>(cfg);

    uint32_t n_params = get_u32(is);
    auto& ps = model->params();
    if (n_params != ps.params.size())
        throw CheckpointShapeError("parameter count mismatch: file has " +
                                   std::to_string(n_params) + ", model has " +
                                   std::to_string(ps.params.size()));
    for (uint32_t i = 0; i < n_params; ++i) {
        std::string name = get_string(is);
        Tensor t = get_tensor(is);
        const auto* entry = ps.find(name);
        if (!entry) throw CheckpointShapeError("unknown parameter in checkpoint: " + name);
        if (entry->var->val.shape != t.shape)
            throw CheckpointShapeError("shape mismatch for " + name + ": file " +
                                       t.shape_str() + " vs model " +
                                       entry->var->val.shape_str());
        entry->var->val = std::move(t);
    }
    uint32_t n_buffers = get_u32(is);
    if (n_buffers != ps.buffers.size())
        throw CheckpointShapeError("buffer count mismatch in checkpoint");
    for (uint32_t i = 0; i < n_buffers; ++i) {
        std::string name = get_string(is);
        Tensor t = get_tensor(is);
        bool found = false;
        for (auto& b : ps.buffers)
            if (b.name == name) {
                if (b.tensor->shape != t.shape)
                    throw CheckpointShapeError("shape mismatch for buffer " + name);
                *b.tensor = std::move(t);
                found = true;
                break;
            }
        if (!found) throw CheckpointShapeError("unknown buffer in checkpoint: " + name);
    }
    int has_state = is.get();
    if (state_out) {
        if (has_state == 1) {
            TrainState st;
            st.step = get_i64(is);
            st.epoch = get_i64(is);
            st.best_giou = get_f64(is);
            st.rng_state = get_string(is);
            uint32_t n = get_u32(is);
            for (uint32_t i = 0; i < n; ++i) {
                Tensor m = get_tensor(is);
                Tensor v = get_tensor(is);
                st.moments.emplace_back(std::move(m), std::move(v));
            }
            *state_out = std::move(st);
        } else {
            state_out->reset();
        }
    }
    if (!is) throw CheckpointShapeError("truncated checkpoint: " + path);
    return model;
}

}  // namespace rrseg
