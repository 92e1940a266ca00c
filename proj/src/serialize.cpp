#include "siamdff/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace siamdff {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("tensor stream truncated while reading u32");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("tensor stream truncated while reading f64");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) {
        put_u32(os, static_cast<std::uint32_t>(e));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        put_f64(os, static_cast<double>(t.at(i)));
    }
}

Tensor read_tensor(std::istream& is) {
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) {
        throw std::runtime_error("tensor rank " + std::to_string(rank) + " is not plausible");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = get_u32(is);
        if (e == 0) throw std::runtime_error("tensor stream has zero extent");
        n *= e;
    }
    std::vector<real_t> data(n);
    for (auto& v : data) v = static_cast<real_t>(get_f64(is));
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    return read_tensor(is);
}

namespace {

nlohmann::json tensor_json(const Tensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape();
    std::vector<double> data(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) data[i] = static_cast<double>(t.at(i));
    j["data"] = data;
    return j;
}

Tensor tensor_from(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
        throw std::runtime_error("tensor JSON must be an object with 'shape' and 'data'");
    }
    std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> raw = j.at("data").get<std::vector<double>>();
    std::vector<real_t> data(raw.begin(), raw.end());
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::string tensor_to_json(const Tensor& t) { return tensor_json(t).dump(); }

Tensor tensor_from_json(const std::string& text) {
    return tensor_from(nlohmann::json::parse(text));
}

void write_params(std::ostream& os, const ParamSet& params) {
    put_u32(os, static_cast<std::uint32_t>(params.count()));
    for (const auto& [name, tensor] : params) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, tensor);
    }
}

ParamSet read_params(std::istream& is) {
    const std::uint32_t count = get_u32(is);
    ParamSet out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get_u32(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) {
            throw std::runtime_error("param stream truncated while reading name");
        }
        out.set(name, read_tensor(is));
    }
    return out;
}

void save_params(const std::string& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_params(os, params);
}

ParamSet load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    return read_params(is);
}

std::string params_to_json(const ParamSet& params) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, tensor] : params) {
        j[name] = tensor_json(tensor);
    }
    return j.dump();
}

ParamSet params_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw std::runtime_error("param JSON must be an object");
    ParamSet out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        out.set(it.key(), tensor_from(it.value()));
    }
    return out;
}

}  // namespace siamdff
