#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "setmix/geom.hpp"
#include "setmix/metrics.hpp"
#include "setmix/model.hpp"
#include "setmix/synth.hpp"

namespace setmix {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// SHA-256 (config/dataset hashing)
// ---------------------------------------------------------------------------

namespace detail {

class Sha256 {
public:
    Sha256() { reset(); }

    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        while (len > 0) {
            const std::size_t take = std::min<std::size_t>(64 - buf_len_, len);
            std::memcpy(buf_ + buf_len_, p, take);
            buf_len_ += take;
            p += take;
            len -= take;
            total_ += take;
            if (buf_len_ == 64) {
                process(buf_);
                buf_len_ = 0;
            }
        }
    }

    std::string hex_digest() {
        std::uint64_t bits = total_ * 8;
        std::uint8_t pad = 0x80;
        update(&pad, 1);
        std::uint8_t zero = 0;
        while (buf_len_ != 56) update(&zero, 1);
        std::uint8_t len_be[8];
        for (int i = 0; i < 8; ++i) len_be[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
        update(len_be, 8);
        static const char* digits = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (std::uint32_t h : state_)
            for (int i = 28; i >= 0; i -= 4) out.push_back(digits[(h >> i) & 0xF]);
        reset();
        return out;
    }

private:
    void reset() {
        state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                  0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        buf_len_ = 0;
        total_ = 0;
    }

    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void process(const std::uint8_t* chunk) {
        static const std::uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(chunk[4 * i]) << 24) | (std::uint32_t(chunk[4 * i + 1]) << 16) |
                   (std::uint32_t(chunk[4 * i + 2]) << 8) | std::uint32_t(chunk[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        auto s = state_;
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(s[4], 6) ^ rotr(s[4], 11) ^ rotr(s[4], 25);
            const std::uint32_t ch = (s[4] & s[5]) ^ (~s[4] & s[6]);
            const std::uint32_t t1 = s[7] + s1 + ch + k[i] + w[i];
            const std::uint32_t s0 = rotr(s[0], 2) ^ rotr(s[0], 13) ^ rotr(s[0], 22);
            const std::uint32_t maj = (s[0] & s[1]) ^ (s[0] & s[2]) ^ (s[1] & s[2]);
            const std::uint32_t t2 = s0 + maj;
            s[7] = s[6]; s[6] = s[5]; s[5] = s[4]; s[4] = s[3] + t1;
            s[3] = s[2]; s[2] = s[1]; s[1] = s[0]; s[0] = t1 + t2;
        }
        for (int i = 0; i < 8; ++i) state_[i] += s[i];
    }

    std::array<std::uint32_t, 8> state_{};
    std::uint8_t buf_[64]{};
    std::size_t buf_len_ = 0;
    std::uint64_t total_ = 0;
};

}  // namespace detail

inline std::string sha256_hex(const std::string& data) {
    detail::Sha256 h;
    h.update(data.data(), data.size());
    return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Atomic file writes (write-temp-then-rename)
// ---------------------------------------------------------------------------

inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

// ---------------------------------------------------------------------------
// Little-endian scalar packing (works on either host endianness)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_i32(std::string& out, std::int32_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
}
inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw IoError("truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= std::uint64_t(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = data.substr(pos, n);
        pos += n;
        return out;
    }
    std::string line() {
        std::size_t end = data.find('\n', pos);
        if (end == std::string::npos) throw IoError("missing newline");
        std::string out = data.substr(pos, end - pos);
        pos = end + 1;
        return out;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Point-cloud file format: magic PCF1, u32 N, u32 C, i32 label, then
// N x (3 + C) little-endian doubles.
// ---------------------------------------------------------------------------

inline std::string encode_point_cloud(const PointCloud& cloud) {
    cloud.validate();
    std::string out = "PCF1";
    const std::uint32_t n = static_cast<std::uint32_t>(cloud.size());
    const std::uint32_t c = static_cast<std::uint32_t>(cloud.feats.cols());
    detail::put_u32(out, n);
    detail::put_u32(out, c);
    detail::put_i32(out, cloud.label);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) detail::put_f64(out, cloud.coords(i, a));
        for (std::uint32_t f = 0; f < c; ++f) detail::put_f64(out, cloud.feats(i, f));
    }
    return out;
}

inline PointCloud decode_point_cloud(const std::string& data) {
    detail::Reader r{data};
    if (r.bytes(4) != "PCF1") throw IoError("bad magic (expected PCF1)");
    const std::uint32_t n = r.u32();
    const std::uint32_t c = r.u32();
    PointCloud cloud;
    cloud.label = r.i32();
    cloud.coords = Matrix(n, 3);
    if (c > 0) cloud.feats = Matrix(n, c);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) cloud.coords(i, a) = r.f64();
        for (std::uint32_t f = 0; f < c; ++f) cloud.feats(i, f) = r.f64();
    }
    cloud.validate();
    return cloud;
}

inline void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    atomic_write_file(path, encode_point_cloud(cloud));
}

inline PointCloud load_point_cloud(const std::filesystem::path& path) {
    return decode_point_cloud(read_file(path));
}

// ---------------------------------------------------------------------------
// Dataset directory: <dir>/cloud_NNNNN.pcf + index.csv (path,label,family,seed)
// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::string path;
    int label = -1;
    std::string family;
    std::uint64_t seed = 0;
};

inline void save_dataset_split(const std::filesystem::path& dir,
                               const std::vector<DatasetItem>& items) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string index = "path,label,family,seed\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "cloud_%05zu.pcf", i);
        save_point_cloud(dir / name, items[i].cloud);
        index += std::string(name) + "," + std::to_string(items[i].cloud.label) + "," +
                 to_string(items[i].spec.family) + "," + std::to_string(items[i].spec.seed) +
                 "\n";
    }
    atomic_write_file(dir / "index.csv", index);
}

inline std::vector<DatasetEntry> read_index(const std::filesystem::path& dir) {
    const std::string text = read_file(dir / "index.csv");
    std::vector<DatasetEntry> entries;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        DatasetEntry e;
        std::size_t a = line.find(','), b = line.find(',', a + 1), c = line.find(',', b + 1);
        if (a == std::string::npos || b == std::string::npos || c == std::string::npos)
            throw IoError("malformed index.csv line: " + line);
        e.path = line.substr(0, a);
        e.label = std::stoi(line.substr(a + 1, b - a - 1));
        e.family = line.substr(b + 1, c - b - 1);
        e.seed = std::stoull(line.substr(c + 1));
        entries.push_back(std::move(e));
    }
    return entries;
}

inline std::vector<PointCloud> load_dataset_split(const std::filesystem::path& dir) {
    std::vector<PointCloud> clouds;
    for (const DatasetEntry& e : read_index(dir)) clouds.push_back(load_point_cloud(dir / e.path));
    return clouds;
}

// Hash of a split's index.csv (covers file names, labels, families, seeds).
inline std::string dataset_hash(const std::filesystem::path& dir) {
    return sha256_hex(read_file(dir / "index.csv"));
}

// ---------------------------------------------------------------------------
// ModelConfig <-> JSON
// ---------------------------------------------------------------------------

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline Vec3 vec3_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

inline json to_json(const SortStrategy& s) {
    json j;
    switch (s.kind) {
        case SortStrategy::Kind::aps:
            j["kind"] = "aps";
            j["axis"] = to_json(s.axis);
            break;
        case SortStrategy::Kind::pcs:
            j["kind"] = "pcs";
            j["normal"] = to_json(s.normal);
            j["ref"] = to_json(s.ref);
            break;
        case SortStrategy::Kind::eds:
            j["kind"] = "eds";
            if (s.center) j["center"] = to_json(*s.center);
            break;
    }
    return j;
}

inline SortStrategy sort_strategy_from_json(const json& j) {
    const std::string kind = j.at("kind");
    if (kind == "aps") return SortStrategy::aps(vec3_from_json(j.at("axis")));
    if (kind == "pcs")
        return SortStrategy::pcs(vec3_from_json(j.at("normal")), vec3_from_json(j.at("ref")));
    if (kind == "eds") {
        if (j.contains("center")) return SortStrategy::eds(vec3_from_json(j.at("center")));
        return SortStrategy::eds();
    }
    throw IoError("unknown sort strategy kind: " + kind);
}

inline json to_json(const FcSpec& f) {
    return json{{"in", f.in}, {"out", f.out}, {"activation", to_string(f.activation)}};
}

inline FcSpec fc_spec_from_json(const json& j) {
    FcSpec f;
    f.in = j.at("in");
    f.out = j.at("out");
    f.activation = j.at("activation") == "relu" ? Activation::relu : Activation::none;
    return f;
}

inline json to_json(const MixerSpec& m) {
    json layers = json::array();
    for (const auto& l : m.m_layers) layers.push_back(to_json(l));
    return json{{"k", m.k},
                {"c_in", m.c_in},
                {"n_sort", m.n_sort},
                {"m_layers", layers},
                {"r_layer", to_json(m.r_layer)},
                {"norm", json{{"kind", to_string(m.norm)}}},
                {"dropout_rate", m.dropout_rate}};
}

inline MixerSpec mixer_spec_from_json(const json& j) {
    MixerSpec m;
    m.k = j.at("k");
    m.c_in = j.at("c_in");
    m.n_sort = j.at("n_sort");
    for (std::size_t i = 0; i < 3; ++i) m.m_layers[i] = fc_spec_from_json(j.at("m_layers").at(i));
    m.r_layer = fc_spec_from_json(j.at("r_layer"));
    const std::string norm = j.at("norm").at("kind");
    m.norm = norm == "layer_norm" ? NormKind::layer_norm
                                  : (norm == "batch_norm" ? NormKind::batch_norm : NormKind::none);
    m.dropout_rate = j.at("dropout_rate");
    return m;
}

inline json to_json(const ModelConfig& cfg) {
    json layers = json::array();
    for (const auto& sa : cfg.sa_layers) {
        json agg{{"kind", to_string(sa.aggregator.kind)}};
        if (sa.aggregator.is_mixer()) {
            agg["mixer"] = to_json(sa.aggregator.mixer);
            json plan = json::array();
            for (const auto& s : sa.aggregator.plan.strategies) plan.push_back(to_json(s));
            agg["plan"] = plan;
        }
        layers.push_back(json{{"m_sets", sa.m_sets},
                              {"k", sa.k},
                              {"t_channels", sa.t_channels},
                              {"aggregator", agg},
                              {"center_mode", to_string(sa.center_mode)},
                              {"legacy_centering", sa.legacy_centering}});
    }
    return json{{"sa_layers", layers},
                {"head",
                 json{{"fc_widths", cfg.head.fc_widths},
                      {"dropout_rates", cfg.head.dropout_rates},
                      {"class_count", cfg.head.class_count}}}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    for (const auto& lj : j.at("sa_layers")) {
        SaLayerConfig sa;
        sa.m_sets = lj.at("m_sets");
        sa.k = lj.at("k");
        sa.t_channels = lj.at("t_channels").get<std::vector<std::size_t>>();
        const json& agg = lj.at("aggregator");
        const std::string kind = agg.at("kind");
        if (kind == "set_mixer")
            sa.aggregator.kind = AggregatorKind::set_mixer;
        else if (kind == "max_pool")
            sa.aggregator.kind = AggregatorKind::max_pool;
        else if (kind == "mean_pool")
            sa.aggregator.kind = AggregatorKind::mean_pool;
        else if (kind == "mixer_no_sort")
            sa.aggregator.kind = AggregatorKind::mixer_no_sort;
        else
            throw IoError("unknown aggregator kind: " + kind);
        if (sa.aggregator.is_mixer()) {
            sa.aggregator.mixer = mixer_spec_from_json(agg.at("mixer"));
            for (const auto& sj : agg.at("plan"))
                sa.aggregator.plan.strategies.push_back(sort_strategy_from_json(sj));
        }
        sa.center_mode = lj.at("center_mode") == "query_point" ? CenterMode::query_point
                                                               : CenterMode::spatial_center;
        sa.legacy_centering = lj.at("legacy_centering");
        cfg.sa_layers.push_back(std::move(sa));
    }
    cfg.head.fc_widths = j.at("head").at("fc_widths").get<std::vector<std::size_t>>();
    cfg.head.dropout_rates = j.at("head").at("dropout_rates").get<std::vector<double>>();
    cfg.head.class_count = j.at("head").at("class_count");
    cfg.validate();
    return cfg;
}

// Canonical hash: SHA-256 of the sorted-key JSON dump.
inline std::string config_hash(const ModelConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

// ---------------------------------------------------------------------------
// Checkpoint: header "SETMIX-CKPT v1", one record per tensor
// ("param <name> <rows> <cols>" + raw little-endian doubles), then a trailing
// JSON block ("json <nbytes>") holding optimizer scalars, the config and its
// hash.
// ---------------------------------------------------------------------------

struct OptimizerInfo {
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline std::string encode_checkpoint(SetMixerModel& model, const OptimizerInfo& opt) {
    std::string out = "SETMIX-CKPT v1\n";
    auto record = [&out](const std::string& name, const Matrix& m) {
        out += "param " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) +
               "\n";
        for (std::size_t i = 0; i < m.size(); ++i) detail::put_f64(out, m.data()[i]);
    };
    for (const Parameter* p : model.params().all()) record(p->name, p->value);
    for (const auto& [name, buf] : model.state_buffers()) record(name, *buf);
    const json meta{{"schema", "setmix-ckpt-1"},
                    {"config", to_json(model.config())},
                    {"config_hash", config_hash(model.config())},
                    {"adam",
                     json{{"step", opt.step},
                          {"lr", opt.lr},
                          {"beta1", opt.beta1},
                          {"beta2", opt.beta2},
                          {"epsilon", opt.epsilon}}}};
    const std::string blob = meta.dump();
    out += "json " + std::to_string(blob.size()) + "\n" + blob;
    return out;
}

inline void save_checkpoint(const std::filesystem::path& path, SetMixerModel& model,
                            const OptimizerInfo& opt = {}) {
    atomic_write_file(path, encode_checkpoint(model, opt));
}

struct LoadedCheckpoint {
    SetMixerModel model;
    OptimizerInfo optimizer;
    std::string config_hash;
};

inline LoadedCheckpoint decode_checkpoint(const std::string& data) {
    detail::Reader r{data};
    if (r.line() != "SETMIX-CKPT v1") throw IoError("bad checkpoint header");
    struct Record {
        std::string name;
        Matrix value;
    };
    std::vector<Record> records;
    json meta;
    for (;;) {
        const std::string header = r.line();
        if (header.rfind("param ", 0) == 0) {
            std::size_t a = header.find(' ', 6);
            std::size_t b = header.find(' ', a + 1);
            if (a == std::string::npos || b == std::string::npos)
                throw IoError("bad checkpoint record header: " + header);
            Record rec;
            rec.name = header.substr(6, a - 6);
            const std::size_t rows = std::stoull(header.substr(a + 1, b - a - 1));
            const std::size_t cols = std::stoull(header.substr(b + 1));
            rec.value = Matrix(rows, cols);
            for (std::size_t i = 0; i < rows * cols; ++i) rec.value.data()[i] = r.f64();
            records.push_back(std::move(rec));
        } else if (header.rfind("json ", 0) == 0) {
            const std::size_t len = std::stoull(header.substr(5));
            meta = json::parse(r.bytes(len));
            break;
        } else {
            throw IoError("unexpected checkpoint line: " + header);
        }
    }
    if (meta.at("schema") != "setmix-ckpt-1") throw IoError("unknown checkpoint schema");

    LoadedCheckpoint out{SetMixerModel::init(model_config_from_json(meta.at("config")), 0),
                         OptimizerInfo{}, meta.at("config_hash")};
    const std::string recomputed = config_hash(out.model.config());
    if (recomputed != out.config_hash)
        throw ChecksumMismatchError("checkpoint config hash mismatch (stored " +
                                    out.config_hash + ", recomputed " + recomputed + ")");
    std::size_t restored = 0;
    for (auto& rec : records) {
        if (Parameter* p = out.model.params().find(rec.name)) {
            if (!p->value.same_shape(rec.value))
                throw IoError("checkpoint shape mismatch for " + rec.name);
            p->value = std::move(rec.value);
            ++restored;
            continue;
        }
        bool found = false;
        for (auto& [name, buf] : out.model.state_buffers()) {
            if (name == rec.name) {
                if (!buf->same_shape(rec.value))
                    throw IoError("checkpoint shape mismatch for " + rec.name);
                *buf = std::move(rec.value);
                found = true;
                ++restored;
                break;
            }
        }
        if (!found) throw IoError("checkpoint has unknown tensor " + rec.name);
    }
    const std::size_t expected =
        out.model.params().all().size() + out.model.state_buffers().size();
    if (restored != expected)
        throw IoError("checkpoint restored " + std::to_string(restored) + " of " +
                      std::to_string(expected) + " tensors");
    const json& adam = meta.at("adam");
    out.optimizer = {adam.at("step"), adam.at("lr"), adam.at("beta1"), adam.at("beta2"),
                     adam.at("epsilon")};
    return out;
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

// ---------------------------------------------------------------------------
// MetricsReport JSON (schema setmix-metrics-1)
// ---------------------------------------------------------------------------

inline json to_json(const MetricsReport& r) {
    json er_by = json::object();
    for (const auto& [kind, cells] : r.er_by) {
        json per_sev = json::object();
        for (const auto& [sev, er] : cells) per_sev[std::to_string(sev)] = er;
        er_by[kind] = per_sev;
    }
    return json{{"schema", "setmix-metrics-1"},
                {"er_clean", r.er_clean},
                {"er_noise", r.er_noise},
                {"er_5", r.er_5},
                {"mer", r.mer},
                {"rmce", r.rmce_value},
                {"baseline_constants",
                 json{{"bm_clean", r.baseline_constants.bm_clean},
                      {"bm_noise", r.baseline_constants.bm_noise}}},
                {"er_by", er_by}};
}

inline std::string feature_diff_csv(const std::vector<FeatureDiffRow>& rows) {
    std::string out = "set_index,cx,cy,cz,magnitude\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", row.set_index,
                      row.center.x, row.center.y, row.center.z, row.magnitude);
        out += buf;
    }
    return out;
}

}  // namespace setmix
