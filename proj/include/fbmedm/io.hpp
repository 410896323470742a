#pragma once

// Binary containers (all little-endian):
//
//   EDMD  "EDMD" u32 version, u32 count, u32 n, f64 hurst (NaN if n/a),
//         u32 flags (bit0: squared), then count*n*n f32 row-major
//   TRAJ  "TRAJ" u32 version, u32 count, u32 n, u32 dim, f64 hurst,
//         f64 step_scale, then count*n*dim f32 row-major per trajectory
//   MASK  "MASK" u32 version, u32 count, u32 n, then for every mask n rows of
//         ceil(n/8) bytes; bit j%8 (LSB first) of byte j/8 is entry (i, j)
//   PCAE  "PCAE" u32 version, u32 input_dim, u32 output_dim, then
//         input_dim f32 mean, output_dim*input_dim f32 basis (row-major)
//
// Single matrices may also be exchanged as JSON:
//   {"matrix": [[...], ...], "mask": [[0,1,...], ...], "squared": true}

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbmedm/edm.hpp"
#include "fbmedm/fbm.hpp"

namespace fbmedm::io {

inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EdmDataset {
    double hurst = std::numeric_limits<double>::quiet_NaN();
    bool squared = true;
    std::vector<DistanceMatrix> matrices;
};

struct TrajectoryDataset {
    double hurst = std::numeric_limits<double>::quiet_NaN();
    double step_scale = 1.0;
    std::vector<Trajectory> trajectories;
};

std::string encode_edmd(const EdmDataset& data);
EdmDataset decode_edmd(std::string_view bytes);
std::string encode_traj(const TrajectoryDataset& data);
TrajectoryDataset decode_traj(std::string_view bytes);
std::string encode_masks(const std::vector<Mask>& masks);
std::vector<Mask> decode_masks(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void write_edmd(const std::filesystem::path& path, const EdmDataset& data);
EdmDataset read_edmd(const std::filesystem::path& path);
void write_traj(const std::filesystem::path& path, const TrajectoryDataset& data);
TrajectoryDataset read_traj(const std::filesystem::path& path);
void write_masks(const std::filesystem::path& path, const std::vector<Mask>& masks);
std::vector<Mask> read_masks(const std::filesystem::path& path);

MaskedMatrix matrix_from_json(std::string_view text);
std::string matrix_to_json(const DistanceMatrix& m, const Mask* mask = nullptr);

// Little-endian primitive codec shared by the container readers.
class ByteWriter {
public:
    void magic(std::string_view m) { out_.append(m); }
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void raw(std::string_view bytes) { out_.append(bytes); }
    std::string take() { return std::move(out_); }
    std::size_t size() const { return out_.size(); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes, std::string_view what) : bytes_(bytes), what_(what) {}
    void expect_magic(std::string_view m);
    std::uint32_t u32();
    float f32();
    double f64();
    std::string_view take(std::size_t count);
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }
    void seek(std::size_t pos);

private:
    void need(std::size_t count) const;
    std::string_view bytes_;
    std::string_view what_;
    std::size_t pos_ = 0;
};

}  // namespace fbmedm::io
