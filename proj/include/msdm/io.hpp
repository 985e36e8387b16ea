#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msdm/cube.hpp"
#include "msdm/net3d.hpp"
#include "msdm/train.hpp"

namespace msdm {

// Cube file ("MSC1"): magic, then height, width, bands and dtype code as
// u32 little-endian (dtype 1 = f32), then band-major f32 LE samples.
void write_cube(std::ostream& out, const SpectralCube& cube);
SpectralCube read_cube(std::istream& in);
void save_cube(const std::filesystem::path& path, const SpectralCube& cube);
SpectralCube load_cube(const std::filesystem::path& path);

// Pattern sidecar: "P B" on the first line, then P rows of P band indices.
std::string format_pattern(const MsfaPattern& pattern);
MsfaPattern parse_pattern(const std::string& text);
void save_pattern(const std::filesystem::path& path, const MsfaPattern& pattern);
MsfaPattern load_pattern(const std::filesystem::path& path);

// Sidecar location used for mosaics: "<mosaic path>.pattern".
std::filesystem::path pattern_sidecar(const std::filesystem::path& mosaic_path);

struct Graymap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::uint32_t maxval = 0;
    std::vector<std::uint16_t> samples; // row-major
};

// Binary "P5" graymap; 2-byte samples are big-endian when maxval > 255.
Graymap read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Graymap& image);

// Stacks one graymap per band, each normalized by its maxval.
SpectralCube import_band_images(const std::filesystem::path& directory,
                                const std::vector<std::string>& band_files);

// 8-bit preview of one band, values clamped to [0, 1] and rounded.
Graymap band_preview(const SpectralCube& cube, std::size_t band);

// Checkpoint ("MSCK"), all little-endian:
//   magic, u32 version = 1,
//   config: 5 x u32 channels, u32 final kernel edge, u8 module shortcuts,
//           u8 longest shortcut, u8 conv mode, u8 relu placement,
//   u64 seed, u64 epoch,
//   u32 layer count, then per layer u32 out, in, kz, ky, kx,
//   per layer f32 weights then f32 biases (canonical layer order),
//   u8 has_adam; if 1: u64 step, f64 alpha, beta1, beta2, epsilon,
//   then first moments and second moments as f32 in tensor order.
struct Checkpoint {
    NetworkParams<float> params;
    std::optional<AdamState<float>> adam;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Network config text: "key = value" lines, '#' starts a comment. Keys:
// channels (comma list of 5), final_kernel (1|3), module_shortcuts (on|off),
// longest_shortcut (on|off), conv_mode (3d|2d), relu_placement
// (before-add|after-add). Missing keys keep their defaults.
std::string format_config(const NetworkConfig& config);
NetworkConfig parse_config(const std::string& text);
NetworkConfig load_config(const std::filesystem::path& path);

// Header "image,bilinear_db,refined_db", one row per image, then "average".
std::string format_report_csv(const CrossvalReport& report);

// Every "*.msc" file of a directory, sorted by file name; ids are stems.
class DirectoryDataset : public Dataset {
public:
    explicit DirectoryDataset(const std::filesystem::path& directory);

    std::size_t size() const override { return files_.size(); }
    std::string id(std::size_t index) const override;
    SpectralCube load(std::size_t index) const override;

private:
    std::vector<std::filesystem::path> files_;
};

} // namespace msdm
