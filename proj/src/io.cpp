#include "fbmedm/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fbmedm::io {

namespace {

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(bytes, sizeof(T));
}

template <class T>
T get_le(const char* p) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void check_version(std::uint32_t version, std::string_view what) {
    if (version != kFormatVersion)
        throw FormatError(std::string(what) + ": unsupported version " + std::to_string(version));
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put_le(out_, v); }
void ByteWriter::f32(float v) { put_le(out_, v); }
void ByteWriter::f64(double v) { put_le(out_, v); }

void ByteReader::need(std::size_t count) const {
    if (bytes_.size() - pos_ < count)
        throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) + " (need " +
                          std::to_string(count) + " more, have " + std::to_string(bytes_.size() - pos_) + ")");
}

void ByteReader::expect_magic(std::string_view m) {
    need(m.size());
    if (bytes_.substr(pos_, m.size()) != m)
        throw FormatError(std::string(what_) + ": bad magic, expected \"" + std::string(m) + "\"");
    pos_ += m.size();
}

std::uint32_t ByteReader::u32() {
    need(4);
    const auto v = get_le<std::uint32_t>(bytes_.data() + pos_);
    pos_ += 4;
    return v;
}

float ByteReader::f32() {
    need(4);
    const auto v = get_le<float>(bytes_.data() + pos_);
    pos_ += 4;
    return v;
}

double ByteReader::f64() {
    need(8);
    const auto v = get_le<double>(bytes_.data() + pos_);
    pos_ += 8;
    return v;
}

std::string_view ByteReader::take(std::size_t count) {
    need(count);
    const auto v = bytes_.substr(pos_, count);
    pos_ += count;
    return v;
}

void ByteReader::seek(std::size_t pos) {
    if (pos > bytes_.size()) throw FormatError(std::string(what_) + ": offset past end of data");
    pos_ = pos;
}

std::string encode_edmd(const EdmDataset& data) {
    const std::size_t n = data.matrices.empty() ? 0 : data.matrices.front().size();
    ByteWriter w;
    w.magic("EDMD");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(data.matrices.size()));
    w.u32(static_cast<std::uint32_t>(n));
    w.f64(data.hurst);
    w.u32(data.squared ? 1u : 0u);
    for (const DistanceMatrix& m : data.matrices) {
        if (m.size() != n) throw std::invalid_argument("encode_edmd: matrices differ in size");
        for (double v : m.entries()) w.f32(static_cast<float>(v));
    }
    return w.take();
}

EdmDataset decode_edmd(std::string_view bytes) {
    ByteReader r(bytes, "EDMD");
    r.expect_magic("EDMD");
    check_version(r.u32(), "EDMD");
    const std::uint32_t count = r.u32();
    const std::uint32_t n = r.u32();
    EdmDataset out;
    out.hurst = r.f64();
    out.squared = (r.u32() & 1u) != 0;
    const std::size_t per = static_cast<std::size_t>(n) * n;
    if (r.remaining() != per * count * 4)
        throw FormatError("EDMD: payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(per * count * 4));
    out.matrices.reserve(count);
    for (std::uint32_t c = 0; c < count; ++c) {
        std::vector<double> entries(per);
        for (double& v : entries) v = r.f32();
        out.matrices.emplace_back(n, std::move(entries), out.squared);
    }
    return out;
}

std::string encode_traj(const TrajectoryDataset& data) {
    const std::size_t n = data.trajectories.empty() ? 0 : data.trajectories.front().n_points;
    const std::size_t dim = data.trajectories.empty() ? 0 : data.trajectories.front().dim;
    ByteWriter w;
    w.magic("TRAJ");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(data.trajectories.size()));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(dim));
    w.f64(data.hurst);
    w.f64(data.step_scale);
    for (const Trajectory& t : data.trajectories) {
        if (t.n_points != n || t.dim != dim) throw std::invalid_argument("encode_traj: trajectories differ in shape");
        for (double v : t.coords) w.f32(static_cast<float>(v));
    }
    return w.take();
}

TrajectoryDataset decode_traj(std::string_view bytes) {
    ByteReader r(bytes, "TRAJ");
    r.expect_magic("TRAJ");
    check_version(r.u32(), "TRAJ");
    const std::uint32_t count = r.u32();
    const std::uint32_t n = r.u32();
    const std::uint32_t dim = r.u32();
    TrajectoryDataset out;
    out.hurst = r.f64();
    out.step_scale = r.f64();
    const std::size_t per = static_cast<std::size_t>(n) * dim;
    if (r.remaining() != per * count * 4) throw FormatError("TRAJ: payload size does not match header");
    for (std::uint32_t c = 0; c < count; ++c) {
        Trajectory t(n, dim);
        for (double& v : t.coords) v = r.f32();
        out.trajectories.push_back(std::move(t));
    }
    return out;
}

std::string encode_masks(const std::vector<Mask>& masks) {
    const std::size_t n = masks.empty() ? 0 : masks.front().size();
    const std::size_t row_bytes = (n + 7) / 8;
    ByteWriter w;
    w.magic("MASK");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(masks.size()));
    w.u32(static_cast<std::uint32_t>(n));
    for (const Mask& m : masks) {
        if (m.size() != n) throw std::invalid_argument("encode_masks: masks differ in size");
        for (std::size_t i = 0; i < n; ++i) {
            std::string row(row_bytes, '\0');
            for (std::size_t j = 0; j < n; ++j)
                if (m.known(i, j)) row[j / 8] = static_cast<char>(row[j / 8] | (1 << (j % 8)));
            w.raw(row);
        }
    }
    return w.take();
}

std::vector<Mask> decode_masks(std::string_view bytes) {
    ByteReader r(bytes, "MASK");
    r.expect_magic("MASK");
    check_version(r.u32(), "MASK");
    const std::uint32_t count = r.u32();
    const std::uint32_t n = r.u32();
    const std::size_t row_bytes = (n + 7) / 8;
    if (r.remaining() != row_bytes * n * count) throw FormatError("MASK: payload size does not match header");
    std::vector<Mask> out;
    for (std::uint32_t c = 0; c < count; ++c) {
        std::vector<std::vector<int>> rows(n, std::vector<int>(n, 0));
        for (std::size_t i = 0; i < n; ++i) {
            const std::string_view row = r.take(row_bytes);
            for (std::size_t j = 0; j < n; ++j) rows[i][j] = (static_cast<unsigned char>(row[j / 8]) >> (j % 8)) & 1;
        }
        try {
            out.push_back(Mask::from_rows(rows));
        } catch (const std::invalid_argument& e) {
            throw FormatError(std::string("MASK: ") + e.what());
        }
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_edmd(const std::filesystem::path& path, const EdmDataset& data) { write_file_atomic(path, encode_edmd(data)); }
EdmDataset read_edmd(const std::filesystem::path& path) { return decode_edmd(read_file(path)); }
void write_traj(const std::filesystem::path& path, const TrajectoryDataset& data) { write_file_atomic(path, encode_traj(data)); }
TrajectoryDataset read_traj(const std::filesystem::path& path) { return decode_traj(read_file(path)); }
void write_masks(const std::filesystem::path& path, const std::vector<Mask>& masks) { write_file_atomic(path, encode_masks(masks)); }
std::vector<Mask> read_masks(const std::filesystem::path& path) { return decode_masks(read_file(path)); }

MaskedMatrix matrix_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("matrix JSON: ") + e.what());
    }
    if (!j.contains("matrix")) throw FormatError("matrix JSON: missing key \"matrix\"");
    const bool squared = j.value("squared", true);
    DistanceMatrix m = DistanceMatrix::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>(), squared);
    Mask b = j.contains("mask") ? Mask::from_rows(j.at("mask").get<std::vector<std::vector<int>>>())
                                : Mask::all_known(m.size());
    if (b.size() != m.size()) throw FormatError("matrix JSON: mask and matrix differ in size");
    return apply_mask(m, b);
}

std::string matrix_to_json(const DistanceMatrix& m, const Mask* mask) {
    nlohmann::json j;
    std::vector<std::vector<double>> rows(m.size(), std::vector<double>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t k = 0; k < m.size(); ++k) rows[i][k] = m(i, k);
    j["matrix"] = rows;
    j["squared"] = m.squared();
    if (mask) {
        std::vector<std::vector<int>> bits(m.size(), std::vector<int>(m.size()));
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t k = 0; k < m.size(); ++k) bits[i][k] = mask->known(i, k) ? 1 : 0;
        j["mask"] = bits;
    }
    return j.dump();
}

}  // namespace fbmedm::io
