#include "msdm/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "msdm/error.hpp"
#include "msdm/metrics.hpp"

namespace msdm {

namespace fs = std::filesystem;

namespace {

constexpr char kCubeMagic[4] = {'M', 'S', 'C', '1'};
constexpr char kCheckpointMagic[4] = {'M', 'S', 'C', 'K'};
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}
double get_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

void put_floats(std::ostream& out, std::span<const float> values) {
    for (float v : values) put_f32(out, v);
}

void get_floats(std::istream& in, std::span<float> values, const char* what) {
    for (float& v : values) v = get_f32(in, what);
}

void expect_magic(std::istream& in, const char (&magic)[4], const char* kind) {
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("not a ") + kind + " file (bad magic)");
    }
}

void expect_end(std::istream& in, const char* kind) {
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(std::string("trailing bytes after ") + kind + " payload");
    }
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_switch(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "' expects on|off, got '" + v + "'");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(n);
}

} // namespace

void write_cube(std::ostream& out, const SpectralCube& cube) {
    out.write(kCubeMagic, 4);
    put_le(out, static_cast<std::uint32_t>(cube.height()));
    put_le(out, static_cast<std::uint32_t>(cube.width()));
    put_le(out, static_cast<std::uint32_t>(cube.bands()));
    put_le(out, kDtypeF32);
    put_floats(out, cube.data());
    if (!out) throw FormatError("failed writing cube");
}

SpectralCube read_cube(std::istream& in) {
    expect_magic(in, kCubeMagic, "cube");
    const auto h = get_le<std::uint32_t>(in, "cube header");
    const auto w = get_le<std::uint32_t>(in, "cube header");
    const auto b = get_le<std::uint32_t>(in, "cube header");
    const auto dtype = get_le<std::uint32_t>(in, "cube header");
    if (dtype != kDtypeF32) throw FormatError("unsupported cube dtype code " + std::to_string(dtype));
    if (h == 0 || w == 0 || b == 0) throw FormatError("cube header has a zero dimension");
    std::vector<float> data(static_cast<std::size_t>(h) * w * b);
    get_floats(in, data, "cube payload");
    expect_end(in, "cube");
    return SpectralCube(b, h, w, std::move(data));
}

void save_cube(const fs::path& path, const SpectralCube& cube) {
    auto out = open_out(path);
    write_cube(out, cube);
}

SpectralCube load_cube(const fs::path& path) {
    auto in = open_in(path);
    try {
        return read_cube(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string format_pattern(const MsfaPattern& pattern) {
    std::ostringstream os;
    os << pattern.period() << ' ' << pattern.band_count() << '\n';
    for (std::size_t r = 0; r < pattern.period(); ++r) {
        for (std::size_t c = 0; c < pattern.period(); ++c) {
            if (c) os << ' ';
            os << pattern.cell(r, c);
        }
        os << '\n';
    }
    return os.str();
}

MsfaPattern parse_pattern(const std::string& text) {
    std::istringstream is(text);
    long long period = 0, bands = 0;
    if (!(is >> period >> bands) || period <= 0 || bands <= 0) {
        throw FormatError("pattern header must be 'P B' with positive integers");
    }
    std::vector<std::uint32_t> cells;
    for (long long i = 0; i < period * period; ++i) {
        long long v = 0;
        if (!(is >> v)) throw FormatError("pattern needs " + std::to_string(period * period) + " cells");
        if (v < 0) throw FormatError("pattern cell " + std::to_string(i) + " is negative");
        cells.push_back(static_cast<std::uint32_t>(v));
    }
    std::string extra;
    if (is >> extra) throw FormatError("unexpected trailing token '" + extra + "' in pattern");
    return MsfaPattern(static_cast<std::size_t>(period), static_cast<std::size_t>(bands),
                       std::move(cells));
}

void save_pattern(const fs::path& path, const MsfaPattern& pattern) {
    auto out = open_out(path);
    out << format_pattern(pattern);
}

MsfaPattern load_pattern(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_pattern(ss.str());
}

fs::path pattern_sidecar(const fs::path& mosaic_path) {
    return fs::path(mosaic_path.string() + ".pattern");
}

Graymap read_pgm(const fs::path& path) {
    auto in = open_in(path);
    auto fail = [&path](const std::string& msg) {
        return FormatError(path.string() + ": " + msg);
    };
    // Header tokens may be separated by whitespace and '#' comments.
    auto token = [&]() {
        std::string t;
        int ch;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {
                while ((ch = in.get()) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(static_cast<char>(ch));
        }
        return t;
    };
    if (token() != "P5") throw fail("unsupported encoding (expected binary P5 graymap)");
    auto number = [&](const char* what) {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit)) {
            throw fail(std::string("bad ") + what + " in header");
        }
        return std::stoul(t);
    };
    Graymap g;
    g.width = number("width");
    g.height = number("height");
    const auto maxval = number("maxval");
    if (g.width == 0 || g.height == 0) throw fail("zero image dimension");
    if (maxval == 0 || maxval > 65535) throw fail("maxval must be in 1..65535");
    g.maxval = static_cast<std::uint32_t>(maxval);
    const std::size_t n = g.width * g.height;
    const std::size_t bytes_per = g.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bytes_per);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw fail("truncated pixel data");
    }
    g.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.samples[i] = bytes_per == 2
                           ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                           : raw[i];
        if (g.samples[i] > g.maxval) throw fail("sample exceeds maxval");
    }
    return g;
}

void write_pgm(const fs::path& path, const Graymap& image) {
    auto out = open_out(path);
    out << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
    for (std::uint16_t s : image.samples) {
        if (image.maxval > 255) out.put(static_cast<char>(s >> 8));
        out.put(static_cast<char>(s & 0xFF));
    }
    if (!out) throw FormatError("failed writing " + path.string());
}

SpectralCube import_band_images(const fs::path& directory,
                                const std::vector<std::string>& band_files) {
    if (band_files.empty()) throw ConfigError("no band files given");
    std::vector<Graymap> planes;
    for (const auto& name : band_files) {
        const auto path = directory / name;
        if (!fs::exists(path)) throw FormatError("missing band file " + path.string());
        planes.push_back(read_pgm(path));
        const auto& first = planes.front();
        const auto& last = planes.back();
        if (last.width != first.width || last.height != first.height) {
            throw ShapeError("band file " + name + " is " + std::to_string(last.width) + "x" +
                             std::to_string(last.height) + " but " + band_files.front() + " is " +
                             std::to_string(first.width) + "x" + std::to_string(first.height));
        }
    }
    const auto& first = planes.front();
    SpectralCube cube(planes.size(), first.height, first.width);
    for (std::size_t b = 0; b < planes.size(); ++b) {
        auto dst = cube.band(b);
        const float maxval = static_cast<float>(planes[b].maxval);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<float>(planes[b].samples[i]) / maxval;
        }
    }
    return cube;
}

Graymap band_preview(const SpectralCube& cube, std::size_t band) {
    if (band >= cube.bands()) {
        throw BoundsError("band " + std::to_string(band) + " outside [0," +
                          std::to_string(cube.bands()) + ")");
    }
    Graymap g{cube.width(), cube.height(), 255, {}};
    for (float v : cube.band(band)) {
        g.samples.push_back(
            static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    return g;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    const auto& cfg = ck.params.config;
    out.write(kCheckpointMagic, 4);
    put_le(out, kCheckpointVersion);
    for (std::size_t c : cfg.module_channels) put_le(out, static_cast<std::uint32_t>(c));
    put_le(out, static_cast<std::uint32_t>(cfg.final_kernel));
    put_le(out, static_cast<std::uint8_t>(cfg.module_shortcuts));
    put_le(out, static_cast<std::uint8_t>(cfg.longest_shortcut));
    put_le(out, static_cast<std::uint8_t>(cfg.conv_mode));
    put_le(out, static_cast<std::uint8_t>(cfg.relu_placement));
    put_le(out, ck.seed);
    put_le(out, ck.epoch);
    const auto layers = ck.params.layers();
    put_le(out, static_cast<std::uint32_t>(layers.size()));
    for (const auto* l : layers) {
        for (std::size_t v : {l->out_channels, l->in_channels, l->kz, l->ky, l->kx}) {
            put_le(out, static_cast<std::uint32_t>(v));
        }
    }
    for (const auto& t : ck.params.tensors()) put_floats(out, t);
    put_le(out, static_cast<std::uint8_t>(ck.adam.has_value()));
    if (ck.adam) {
        const auto& a = *ck.adam;
        put_le(out, a.step);
        put_f64(out, a.hyper.alpha);
        put_f64(out, a.hyper.beta1);
        put_f64(out, a.hyper.beta2);
        put_f64(out, a.hyper.epsilon);
        for (const auto& m : a.m) put_floats(out, m);
        for (const auto& v : a.v) put_floats(out, v);
    }
    if (!out) throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
    expect_magic(in, kCheckpointMagic, "checkpoint");
    const auto version = get_le<std::uint32_t>(in, "checkpoint version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    NetworkConfig cfg;
    for (auto& c : cfg.module_channels) c = get_le<std::uint32_t>(in, "config");
    cfg.final_kernel = get_le<std::uint32_t>(in, "config");
    const auto shortcuts = get_le<std::uint8_t>(in, "config");
    const auto longest = get_le<std::uint8_t>(in, "config");
    const auto mode = get_le<std::uint8_t>(in, "config");
    const auto placement = get_le<std::uint8_t>(in, "config");
    if (shortcuts > 1 || longest > 1 || mode > 1 || placement > 1) {
        throw FormatError("checkpoint config holds an invalid flag");
    }
    cfg.module_shortcuts = shortcuts == 1;
    cfg.longest_shortcut = longest == 1;
    cfg.conv_mode = static_cast<ConvMode>(mode);
    cfg.relu_placement = static_cast<ReluPlacement>(placement);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }

    Checkpoint ck;
    ck.seed = get_le<std::uint64_t>(in, "seed");
    ck.epoch = get_le<std::uint64_t>(in, "epoch");
    ck.params = NetworkParams<float>::zeros(cfg);
    const auto layers = ck.params.layers();
    const auto count = get_le<std::uint32_t>(in, "layer count");
    if (count != layers.size()) {
        throw FormatError("checkpoint lists " + std::to_string(count) + " layers, config implies " +
                          std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto* l = layers[i];
        for (std::size_t want : {l->out_channels, l->in_channels, l->kz, l->ky, l->kx}) {
            if (get_le<std::uint32_t>(in, "layer shape") != want) {
                throw FormatError("layer " + std::to_string(i) +
                                  " shape header does not match the embedded config");
            }
        }
    }
    for (auto& t : ck.params.tensors()) get_floats(in, t, "parameters");
    for (const auto& t : ck.params.tensors()) require_finite<float>(t, "checkpoint parameters");
    const auto has_adam = get_le<std::uint8_t>(in, "adam flag");
    if (has_adam > 1) throw FormatError("invalid adam flag");
    if (has_adam) {
        auto a = AdamState<float>::like(ck.params);
        a.step = get_le<std::uint64_t>(in, "adam step");
        a.hyper.alpha = get_f64(in, "adam hyper");
        a.hyper.beta1 = get_f64(in, "adam hyper");
        a.hyper.beta2 = get_f64(in, "adam hyper");
        a.hyper.epsilon = get_f64(in, "adam hyper");
        for (auto& m : a.m) get_floats(in, m, "adam moments");
        for (auto& v : a.v) get_floats(in, v, "adam moments");
        ck.adam = std::move(a);
    }
    expect_end(in, "checkpoint");
    return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    auto out = open_out(path);
    write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const fs::path& path) {
    auto in = open_in(path);
    try {
        return read_checkpoint(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string format_config(const NetworkConfig& config) {
    std::ostringstream os;
    os << "channels = ";
    for (std::size_t i = 0; i < config.module_channels.size(); ++i) {
        os << (i ? "," : "") << config.module_channels[i];
    }
    os << "\nfinal_kernel = " << config.final_kernel
       << "\nmodule_shortcuts = " << (config.module_shortcuts ? "on" : "off")
       << "\nlongest_shortcut = " << (config.longest_shortcut ? "on" : "off")
       << "\nconv_mode = " << (config.conv_mode == ConvMode::Planar2d ? "2d" : "3d")
       << "\nrelu_placement = "
       << (config.relu_placement == ReluPlacement::AfterAdd ? "after-add" : "before-add") << '\n';
    return os.str();
}

NetworkConfig parse_config(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line lacks '=': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "channels") {
            std::istringstream vs(value);
            std::string item;
            std::vector<std::size_t> ch;
            while (std::getline(vs, item, ',')) ch.push_back(parse_count(key, trim(item)));
            if (ch.size() != NetworkConfig::kModules) {
                throw ConfigError("channels needs 5 entries, got " + std::to_string(ch.size()));
            }
            std::copy(ch.begin(), ch.end(), cfg.module_channels.begin());
        } else if (key == "final_kernel") {
            cfg.final_kernel = parse_count(key, value);
        } else if (key == "module_shortcuts") {
            cfg.module_shortcuts = parse_switch(key, value);
        } else if (key == "longest_shortcut") {
            cfg.longest_shortcut = parse_switch(key, value);
        } else if (key == "conv_mode") {
            if (value == "3d") cfg.conv_mode = ConvMode::Spatial3d;
            else if (value == "2d") cfg.conv_mode = ConvMode::Planar2d;
            else throw ConfigError("conv_mode expects 3d|2d, got '" + value + "'");
        } else if (key == "relu_placement") {
            if (value == "before-add") cfg.relu_placement = ReluPlacement::BeforeAdd;
            else if (value == "after-add") cfg.relu_placement = ReluPlacement::AfterAdd;
            else throw ConfigError("relu_placement expects before-add|after-add, got '" + value + "'");
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

NetworkConfig load_config(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_report_csv(const CrossvalReport& report) {
    std::ostringstream os;
    os << "image,bilinear_db,refined_db\n";
    for (const auto& r : report.rows) {
        os << r.id << ',' << format_db(r.bilinear_db) << ',' << format_db(r.refined_db) << '\n';
    }
    os << "average," << format_db(report.mean_bilinear_db) << ','
       << format_db(report.mean_refined_db) << '\n';
    return os.str();
}

DirectoryDataset::DirectoryDataset(const fs::path& directory) {
    if (!fs::is_directory(directory)) throw FormatError("not a directory: " + directory.string());
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (entry.is_regular_file() && entry.path().extension() == ".msc") {
            files_.push_back(entry.path());
        }
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw FormatError("no .msc cubes in " + directory.string());
}

std::string DirectoryDataset::id(std::size_t index) const { return files_.at(index).stem().string(); }

SpectralCube DirectoryDataset::load(std::size_t index) const { return load_cube(files_.at(index)); }

} // namespace msdm
