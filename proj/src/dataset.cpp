#include "modit/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace modit {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'T', 'D'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& buf, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(const std::string& buf, size_t off) {
    const uint32_t bits = get_u32(buf, off);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename " + tmp + " to " + path);
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
    write_file_atomic(path, content);
}

void write_dataset(const std::string& path, const std::vector<DataPair>& pairs) {
    if (pairs.empty()) throw DataError("write_dataset: no pairs");
    const int frames = pairs[0].expression.rows;
    const int audio_dim = pairs[0].audio.cols;
    const int coeff_dim = pairs[0].expression.cols;
    for (const auto& p : pairs)
        if (p.audio.rows != frames || p.expression.rows != frames ||
            p.audio.cols != audio_dim || p.expression.cols != coeff_dim ||
            static_cast<int>(p.blink.size()) != frames)
            throw DataError("write_dataset: inconsistent pair shapes");

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kDatasetVersion);
    put_u32(buf, static_cast<uint32_t>(pairs.size()));
    put_u32(buf, static_cast<uint32_t>(frames));
    put_u32(buf, static_cast<uint32_t>(audio_dim));
    put_u32(buf, static_cast<uint32_t>(coeff_dim));
    for (const auto& p : pairs) {
        for (const float v : p.audio.data) put_f32(buf, v);
        for (const float v : p.expression.data) put_f32(buf, v);
        for (const float v : p.blink) put_f32(buf, v);
    }
    write_file_atomic(path, buf);
}

std::vector<DataPair> read_dataset(const std::string& path, DatasetDims* dims) {
    const std::string buf = read_file(path);
    if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw DataError("read_dataset: corrupt header in " + path);
    const uint32_t version = get_u32(buf, 4);
    if (version != kDatasetVersion)
        throw DataError("read_dataset: unsupported version " + std::to_string(version));
    DatasetDims d;
    d.num_pairs = static_cast<int>(get_u32(buf, 8));
    d.t_frames = static_cast<int>(get_u32(buf, 12));
    d.audio_dim = static_cast<int>(get_u32(buf, 16));
    d.coeff_dim = static_cast<int>(get_u32(buf, 20));
    if (d.num_pairs < 1 || d.t_frames < 1 || d.audio_dim < 1 || d.coeff_dim < 1)
        throw DataError("read_dataset: corrupt header dimensions in " + path);

    const size_t record_floats = static_cast<size_t>(d.t_frames) * d.audio_dim +
                                 static_cast<size_t>(d.t_frames) * d.coeff_dim +
                                 static_cast<size_t>(d.t_frames);
    std::vector<DataPair> pairs;
    size_t off = 24;
    for (int i = 0; i < d.num_pairs; ++i) {
        if (off + record_floats * 4 > buf.size())
            throw DataError("read_dataset: truncated record at pair " + std::to_string(i));
        DataPair p;
        p.audio = MatF(d.t_frames, d.audio_dim);
        for (auto& v : p.audio.data) {
            v = get_f32(buf, off);
            off += 4;
        }
        p.expression = MatF(d.t_frames, d.coeff_dim);
        for (auto& v : p.expression.data) {
            v = get_f32(buf, off);
            off += 4;
        }
        p.blink.resize(d.t_frames);
        for (auto& v : p.blink) {
            v = get_f32(buf, off);
            off += 4;
        }
        pairs.push_back(std::move(p));
    }
    if (dims) *dims = d;
    return pairs;
}

void write_trace(const std::string& path, const MatF& sequence) {
    std::ostringstream ss;
    char num[64];
    for (int i = 0; i < sequence.rows; ++i) {
        for (int j = 0; j < sequence.cols; ++j) {
            std::snprintf(num, sizeof(num), "%.9g", static_cast<double>(sequence.at(i, j)));
            if (j) ss << ' ';
            ss << num;
        }
        ss << '\n';
    }
    write_file_atomic(path, ss.str());
}

MatF read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<float> row;
        float v;
        while (ls >> v) row.push_back(v);
        if (!rows.empty() && row.size() != rows[0].size())
            throw DataError("read_trace: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("read_trace: empty trace " + path);
    MatF out(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) = rows[i][j];
    return out;
}

}  // namespace modit
