#include "octenh/net.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace octenh {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, 8);
    put_u64(os, u);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw TruncatedFile("checkpoint ends early");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw TruncatedFile("checkpoint ends early");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    std::uint64_t u = get_u64(is);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) put_f64(os, x);
}

void get_vec(std::istream& is, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f64(is);
}

} // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    nlohmann::json h;
    h["depth"] = c.depth;
    h["base_channels"] = c.base_channels;
    h["seed"] = c.seed;
    h["epoch"] = c.epoch;
    h["param_count"] = c.params.size();
    h["config_hash"] = c.config_hash;
    const std::string header = h.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoFailure("cannot open for write: " + path);
    os.write("OCTC", 4);
    put_u32(os, c.version);
    put_u32(os, static_cast<std::uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_vec(os, c.params);
    os.put(c.has_adam ? '\1' : '\0');
    if (c.has_adam) {
        put_f64(os, c.adam_lr);
        put_u64(os, c.adam_t);
        put_vec(os, c.adam_m);
        put_vec(os, c.adam_v);
    }
    if (!os) throw IoFailure("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw TruncatedFile("checkpoint ends early");
    if (std::string(magic, 4) != "OCTC") throw BadCheckpoint("bad magic in " + path);
    Checkpoint c;
    c.version = get_u32(is);
    if (c.version != 1) throw BadCheckpoint("unsupported checkpoint version");
    const std::uint32_t hlen = get_u32(is);
    std::string header(hlen, '\0');
    if (!is.read(header.data(), hlen)) throw TruncatedFile("checkpoint ends early");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw BadCheckpoint(std::string("bad header json: ") + e.what());
    }
    try {
        c.depth = h.at("depth").get<std::size_t>();
        c.base_channels = h.at("base_channels").get<std::size_t>();
        c.seed = h.at("seed").get<std::uint64_t>();
        c.epoch = h.at("epoch").get<std::uint64_t>();
        c.config_hash = h.value("config_hash", std::string());
        const std::size_t n = h.at("param_count").get<std::size_t>();
        get_vec(is, c.params, n);
        const int flag = is.get();
        if (flag == std::char_traits<char>::eof()) throw TruncatedFile("checkpoint ends early");
        c.has_adam = flag == 1;
        if (c.has_adam) {
            c.adam_lr = get_f64(is);
            c.adam_t = get_u64(is);
            get_vec(is, c.adam_m, n);
            get_vec(is, c.adam_v, n);
        }
    } catch (const nlohmann::json::exception& e) {
        throw BadCheckpoint(std::string("bad header fields: ") + e.what());
    }
    if (c.params.size() != model_param_count(c.depth, c.base_channels))
        throw BadCheckpoint("parameter blob does not match architecture");
    return c;
}

} // namespace octenh
