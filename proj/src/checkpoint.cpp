#include "modit/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace modit {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'K'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(const std::string& buf, size_t off) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

uint32_t get_u32(const std::string& buf, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string payload;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, m] : ckpt.tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["rows"] = m.rows;
        entry["cols"] = m.cols;
        entry["offset"] = payload.size();
        tensors.push_back(entry);
        for (const float v : m.data) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(payload, bits);
        }
    }

    nlohmann::json manifest;
    manifest["config"] = ckpt.config;
    manifest["opt_step"] = ckpt.opt_step;
    manifest["steps_done"] = ckpt.steps_done;
    manifest["tensors"] = tensors;
    manifest["payload_hash"] = fnv1a64(payload.data(), payload.size());
    const std::string manifest_str = manifest.dump();

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kCheckpointVersion);
    put_u64(buf, manifest_str.size());
    buf += manifest_str;
    put_u64(buf, fnv1a64(manifest_str.data(), manifest_str.size()));
    buf += payload;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw DataError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw DataError("checkpoint " + path + ": corrupt header");
    if (get_u32(buf, 4) != kCheckpointVersion)
        throw DataError("checkpoint " + path + ": unsupported version");
    const uint64_t manifest_size = get_u64(buf, 8);
    if (16 + manifest_size + 8 > buf.size())
        throw DataError("checkpoint " + path + ": truncated manifest");
    const std::string manifest_str = buf.substr(16, manifest_size);
    if (get_u64(buf, 16 + manifest_size) != fnv1a64(manifest_str.data(), manifest_str.size()))
        throw DataError("checkpoint " + path + ": manifest hash mismatch");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_str);
    } catch (const std::exception& e) {
        throw DataError("checkpoint " + path + ": bad manifest: " + e.what());
    }

    const size_t payload_off = 16 + manifest_size + 8;
    const std::string payload = buf.substr(payload_off);
    if (manifest.at("payload_hash").get<uint64_t>() != fnv1a64(payload.data(), payload.size()))
        throw DataError("checkpoint " + path + ": payload hash mismatch");

    Checkpoint ckpt;
    ckpt.config = manifest.at("config").get<std::map<std::string, std::string>>();
    ckpt.opt_step = manifest.at("opt_step").get<long long>();
    ckpt.steps_done = manifest.at("steps_done").get<long long>();
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        const size_t offset = entry.at("offset").get<size_t>();
        const size_t bytes = static_cast<size_t>(rows) * cols * 4;
        if (rows < 0 || cols < 0 || offset + bytes > payload.size())
            throw DataError("checkpoint " + path + ": tensor " + name + " out of bounds");
        MatF m(rows, cols);
        for (size_t i = 0; i < m.data.size(); ++i) {
            const uint32_t bits = get_u32(payload, offset + i * 4);
            std::memcpy(&m.data[i], &bits, 4);
        }
        ckpt.tensors.emplace_back(name, std::move(m));
    }
    return ckpt;
}

}  // namespace modit
