#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "msdm/error.hpp"
#include "msdm/io.hpp"
#include "msdm/metrics.hpp"
#include "oracles.hpp"

using namespace msdm;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("msdm_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

SpectralCube random_float_cube(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
    return cube_cast<float>(oracle::random_cube(b, h, w, seed));
}

NetworkParams<float> random_float_params(const NetworkConfig& cfg, std::uint64_t seed) {
    return params_cast<float>(oracle::random_params(cfg, seed));
}

std::string bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_raw(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

} // namespace

TEST(CubeFileTest, RoundTripIsBitExact) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = random_float_cube(1 + seed, 3 + seed, 7, seed);
        std::stringstream ss;
        write_cube(ss, c);
        const std::string first = ss.str();
        const auto back = read_cube(ss);
        EXPECT_EQ(back, c);
        std::stringstream again;
        write_cube(again, back);
        EXPECT_EQ(again.str(), first);
    }
}

TEST(CubeFileTest, HeaderLayout) {
    SpectralCube c(2, 3, 4);
    c(1, 2, 3) = 1.0f;
    std::stringstream ss;
    write_cube(ss, c);
    const std::string s = ss.str();
    ASSERT_EQ(s.size(), 4 + 16 + 4 * 24u);
    EXPECT_EQ(s.substr(0, 4), "MSC1");
    auto u32 = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = v << 8 | static_cast<unsigned char>(s[off + i]);
        return v;
    };
    EXPECT_EQ(u32(4), 3u);  // height
    EXPECT_EQ(u32(8), 4u);  // width
    EXPECT_EQ(u32(12), 2u); // bands
    EXPECT_EQ(u32(16), 1u); // f32
    EXPECT_EQ(u32(20 + 4 * 23), 0x3F800000u);
}

TEST(CubeFileTest, MalformedInputs) {
    SpectralCube c(1, 2, 2, 0.5f);
    std::stringstream ss;
    write_cube(ss, c);
    const std::string good = ss.str();

    std::istringstream truncated(good.substr(0, good.size() - 1));
    EXPECT_THROW(read_cube(truncated), FormatError);
    std::istringstream trailing(good + "x");
    EXPECT_THROW(read_cube(trailing), FormatError);
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    std::istringstream bm(bad_magic);
    EXPECT_THROW(read_cube(bm), FormatError);
    std::string bad_dtype = good;
    bad_dtype[16] = 2;
    std::istringstream bd(bad_dtype);
    EXPECT_THROW(read_cube(bd), FormatError);
    EXPECT_THROW(load_cube("/nonexistent/cube.msc"), FormatError);
}

TEST(CubeFileTest, SaveLoadFile) {
    TempDir dir;
    const auto c = random_float_cube(16, 5, 6, 9);
    save_cube(dir.path() / "c.msc", c);
    EXPECT_EQ(load_cube(dir.path() / "c.msc"), c);
}

TEST(PatternTest, RoundTrip) {
    const auto p = MsfaPattern::default16();
    EXPECT_EQ(parse_pattern(format_pattern(p)), p);
    const MsfaPattern q(2, 3, {2, 0, 1, 1});
    EXPECT_EQ(parse_pattern(format_pattern(q)), q);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::uint32_t> cells(16);
        for (std::uint32_t i = 0; i < 16; ++i) cells[i] = i;
        std::shuffle(cells.begin(), cells.end(), rng);
        const MsfaPattern r(4, 16, cells);
        EXPECT_EQ(parse_pattern(format_pattern(r)), r);
    }
}

TEST(PatternTest, TextLayout) {
    EXPECT_EQ(format_pattern(MsfaPattern(2, 4, {0, 1, 2, 3})), "2 4\n0 1\n2 3\n");
    EXPECT_EQ(pattern_sidecar("a/b.msc"), fs::path("a/b.msc.pattern"));
}

TEST(PatternTest, Malformed) {
    EXPECT_THROW(parse_pattern(""), FormatError);
    EXPECT_THROW(parse_pattern("2 4\n0 1\n2\n"), FormatError);
    EXPECT_THROW(parse_pattern("2 4\n0 1\n2 3 9\n"), FormatError);
    EXPECT_THROW(parse_pattern("2 4\n0 1\n2 7\n"), ConfigError);
}

TEST(CheckpointTest, RoundTripWithAndWithoutAdam) {
    NetworkConfig ablated;
    ablated.module_shortcuts = false;
    ablated.conv_mode = ConvMode::Planar2d;
    ablated.final_kernel = 3;
    ablated.relu_placement = ReluPlacement::AfterAdd;
    for (const auto& cfg : {NetworkConfig{}, ablated}) {
        Checkpoint ck{random_float_params(cfg, 3), std::nullopt, 77, 12};
        std::stringstream ss;
        write_checkpoint(ss, ck);
        const std::string bytes = ss.str();
        const auto back = read_checkpoint(ss);
        EXPECT_EQ(back, ck);
        std::stringstream again;
        write_checkpoint(again, back);
        EXPECT_EQ(again.str(), bytes);

        auto adam = AdamState<float>::like(ck.params);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<float> u(-1, 1);
        for (auto& t : adam.m) {
            for (float& v : t) v = u(rng);
        }
        for (auto& t : adam.v) {
            for (float& v : t) v = std::abs(u(rng));
        }
        adam.step = 42;
        adam.hyper.alpha = 2.5e-4;
        ck.adam = adam;
        std::stringstream with;
        write_checkpoint(with, ck);
        EXPECT_EQ(read_checkpoint(with), ck);
    }
}

TEST(CheckpointTest, FileRoundTripAndCorruption) {
    TempDir dir;
    const Checkpoint ck{random_float_params(NetworkConfig{}, 8), std::nullopt, 1, 2};
    const auto path = dir.path() / "net.msck";
    save_checkpoint(path, ck);
    EXPECT_EQ(load_checkpoint(path), ck);

    const auto bytes = bytes_of(path);
    EXPECT_EQ(bytes.substr(0, 4), "MSCK");
    write_raw(dir.path() / "short.msck", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_checkpoint(dir.path() / "short.msck"), FormatError);
    std::string shape = bytes;
    // First channel count sits right after magic and version.
    shape[8] = 3;
    write_raw(dir.path() / "shape.msck", shape);
    EXPECT_THROW(load_checkpoint(dir.path() / "shape.msck"), FormatError);
}

TEST(GraymapTest, SixteenBitNormalization) {
    TempDir dir;
    write_pgm(dir.path() / "b.pgm", Graymap{2, 2, 65535, {0, 65535, 32768, 16384}});
    const auto c = import_band_images(dir.path(), {"b.pgm"});
    ASSERT_EQ(c.bands(), 1u);
    EXPECT_EQ(c(0, 0, 0), 0.0f);
    EXPECT_EQ(c(0, 0, 1), 1.0f);
    EXPECT_FLOAT_EQ(c(0, 1, 0), 32768.0f / 65535.0f);
    EXPECT_FLOAT_EQ(c(0, 1, 1), 16384.0f / 65535.0f);
}

TEST(GraymapTest, BigEndianSamplesAndComments) {
    TempDir dir;
    std::string bytes = "P5\n# scanner output\n2 1\n65535\n";
    bytes += std::string("\x01\x02\xff\x00", 4);
    write_raw(dir.path() / "x.pgm", bytes);
    const auto g = read_pgm(dir.path() / "x.pgm");
    EXPECT_EQ(g.samples, (std::vector<std::uint16_t>{0x0102, 0xff00}));

    write_raw(dir.path() / "e.pgm", "P5 2 1 255\n" + std::string("\x00\x80", 2));
    const auto e = read_pgm(dir.path() / "e.pgm");
    EXPECT_EQ(e.samples, (std::vector<std::uint16_t>{0, 128}));
    EXPECT_EQ(e.maxval, 255u);
}

TEST(GraymapTest, RejectsOtherEncodings) {
    TempDir dir;
    write_raw(dir.path() / "a.pgm", "P2\n1 1\n255\n7\n");
    EXPECT_THROW(read_pgm(dir.path() / "a.pgm"), FormatError);
    write_raw(dir.path() / "t.pgm", "P5\n2 2\n255\n" + std::string("\x01\x02\x03", 3));
    EXPECT_THROW(read_pgm(dir.path() / "t.pgm"), FormatError);
}

TEST(ImportTest, IdenticalFilesGiveEqualPlanes) {
    TempDir dir;
    std::vector<std::string> names;
    const Graymap g{3, 2, 255, {0, 10, 20, 30, 40, 255}};
    for (int i = 0; i < 16; ++i) {
        names.push_back("band" + std::to_string(i) + ".pgm");
        write_pgm(dir.path() / names.back(), g);
    }
    const auto c = import_band_images(dir.path(), names);
    ASSERT_EQ(c.bands(), 16u);
    EXPECT_EQ(c.height(), 2u);
    EXPECT_EQ(c.width(), 3u);
    for (std::size_t b = 1; b < 16; ++b) {
        EXPECT_TRUE(std::equal(c.band(b).begin(), c.band(b).end(), c.band(0).begin()));
    }
}

TEST(ImportTest, MismatchedSizesNameBothFiles) {
    TempDir dir;
    write_pgm(dir.path() / "first.pgm", Graymap{2, 2, 255, {1, 2, 3, 4}});
    write_pgm(dir.path() / "second.pgm", Graymap{3, 1, 255, {1, 2, 3}});
    try {
        import_band_images(dir.path(), {"first.pgm", "second.pgm"});
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("first.pgm"), std::string::npos) << msg;
        EXPECT_NE(msg.find("second.pgm"), std::string::npos) << msg;
    }
}

TEST(ImportTest, MissingFile) {
    TempDir dir;
    write_pgm(dir.path() / "a.pgm", Graymap{1, 1, 255, {1}});
    EXPECT_THROW(import_band_images(dir.path(), {"a.pgm", "nope.pgm"}), FormatError);
}

TEST(PreviewTest, ClampsAndRounds) {
    SpectralCube c(2, 1, 3);
    c(1, 0, 0) = 0.0f;
    c(1, 0, 1) = 0.5f;
    c(1, 0, 2) = 1.0f;
    const auto g = band_preview(c, 1);
    EXPECT_EQ(g.maxval, 255u);
    EXPECT_EQ(g.samples, (std::vector<std::uint16_t>{0, 128, 255}));
    EXPECT_THROW(band_preview(c, 2), BoundsError);
}

TEST(ConfigTextTest, RoundTripAndDefaults) {
    NetworkConfig cfg;
    cfg.module_channels = {4, 4, 8, 8, 16};
    cfg.final_kernel = 3;
    cfg.module_shortcuts = false;
    cfg.longest_shortcut = false;
    cfg.conv_mode = ConvMode::Planar2d;
    cfg.relu_placement = ReluPlacement::AfterAdd;
    EXPECT_EQ(parse_config(format_config(cfg)), cfg);
    EXPECT_EQ(parse_config("# empty\n\n"), NetworkConfig{});
    EXPECT_EQ(parse_config("conv_mode = 2d  # ablation\n").conv_mode, ConvMode::Planar2d);
}

TEST(ConfigTextTest, Errors) {
    EXPECT_THROW(parse_config("bogus = 1\n"), ConfigError);
    EXPECT_THROW(parse_config("module_shortcuts = maybe\n"), ConfigError);
    EXPECT_THROW(parse_config("channels = 1,2,3\n"), ConfigError);
    EXPECT_THROW(parse_config("final_kernel = 2\n"), ConfigError);
    EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
}

TEST(ReportCsvTest, Layout) {
    CrossvalReport r;
    r.rows = {{"a", 30.0, 31.23456}, {"b", 20.5, std::numeric_limits<double>::infinity()}};
    r.mean_bilinear_db = 25.25;
    r.mean_refined_db = std::numeric_limits<double>::infinity();
    EXPECT_EQ(format_report_csv(r),
              "image,bilinear_db,refined_db\n"
              "a,30.0000,31.2346\n"
              "b,20.5000,inf\n"
              "average,25.2500,inf\n");
}

TEST(DirectoryDatasetTest, SortedStems) {
    TempDir dir;
    save_cube(dir.path() / "b.msc", SpectralCube(1, 1, 1, 0.2f));
    save_cube(dir.path() / "a.msc", SpectralCube(1, 1, 1, 0.1f));
    write_raw(dir.path() / "notes.txt", "x");
    const DirectoryDataset ds(dir.path());
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.id(0), "a");
    EXPECT_EQ(ds.id(1), "b");
    EXPECT_EQ(ds.load(1)(0, 0, 0), 0.2f);
}

TEST(PsnrTest, IdenticalIsInfinite) {
    const auto a = random_float_cube(3, 4, 4, 1);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_EQ(format_db(psnr(a, a)), "inf");
}

TEST(PsnrTest, HalfOffsetClosedForm) {
    const double db = psnr(SpectralCube(16, 8, 8, 0.0f), SpectralCube(16, 8, 8, 0.5f));
    EXPECT_NEAR(db, 10 * std::log10(4.0), 1e-12);
    EXPECT_NEAR(db, 6.0206, 1e-4);
    EXPECT_EQ(format_db(db), "6.0206");
}

TEST(PsnrTest, DirectOracleSymmetryMonotonicity) {
    const auto a = oracle::random_cube(4, 6, 5, 2);
    const auto b = oracle::random_cube(4, 6, 5, 3);
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    EXPECT_NEAR(psnr(a, b), 10 * std::log10(static_cast<double>(a.size()) / sum), 1e-9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));

    auto worse = b;
    worse.data()[0] = a.data()[0] + (b.data()[0] > a.data()[0] ? 1.0 : -1.0) * 0.9999;
    ASSERT_GT(mse(a, worse), mse(a, b));
    EXPECT_LT(psnr(a, worse), psnr(a, b));
}

TEST(PsnrTest, PerBandAndShapeMismatch) {
    Cube<double> ref(2, 2, 2, 0.0);
    Cube<double> test(2, 2, 2, 0.0);
    for (double& v : test.band(1)) v = 0.5;
    const auto per = psnr_per_band(ref, test);
    ASSERT_EQ(per.size(), 2u);
    EXPECT_TRUE(std::isinf(per[0]));
    EXPECT_NEAR(per[1], 6.0206, 1e-4);
    EXPECT_THROW(psnr(ref, Cube<double>(2, 2, 3)), ShapeError);
}
