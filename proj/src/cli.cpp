#include "msdm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "msdm/classic.hpp"
#include "msdm/error.hpp"
#include "msdm/io.hpp"
#include "msdm/metrics.hpp"
#include "msdm/mosaic.hpp"
#include "msdm/synth.hpp"
#include "msdm/train.hpp"

namespace msdm {

namespace fs = std::filesystem;

namespace {

struct TrainingFlags {
    std::string pattern;
    std::string config;
    std::size_t epochs = 300;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
    double lr = AdamHyper{}.alpha;
    std::size_t grid = 4;
};

void add_training_flags(CLI::App* cmd, TrainingFlags& f) {
    cmd->add_option("--pattern", f.pattern, "Pattern sidecar (default: 4x4 16-band layout)");
    cmd->add_option("--config", f.config, "Network config file (default: built-in)");
    cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", f.batch, "Sub-images per batch")->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Seed for init, shuffling and folds")->capture_default_str();
    cmd->add_option("--steps", f.steps, "Stop after this many optimizer steps (0 = no cap)");
    cmd->add_option("--lr", f.lr, "Adam step size")->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--grid", f.grid, "Sub-image grid edge")->capture_default_str()
        ->check(CLI::PositiveNumber);
}

MsfaPattern pattern_or_default(const std::string& path) {
    return path.empty() ? MsfaPattern::default16() : load_pattern(path);
}

NetworkConfig config_or_default(const std::string& path) {
    return path.empty() ? NetworkConfig{} : load_config(path);
}

TrainPlan plan_from(const TrainingFlags& f) {
    TrainPlan plan;
    plan.epochs = f.epochs;
    plan.batch_size = f.batch;
    plan.seed = f.seed;
    plan.grid = f.grid;
    plan.adam.alpha = f.lr;
    if (f.steps > 0) plan.max_steps = f.steps;
    return plan;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw FormatError("cannot write " + path.string());
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string::npos ? s.size() : comma;
        if (end > start) parts.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return parts;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multispectral filter-array demosaicking toolkit", "msdm"};
    app.require_subcommand(1);

    std::string dir, bands, in, out_path, pattern, method, checkpoint, ref, test, report;
    std::size_t band = 0, folds = 8, count = 8, size = 64, nbands = 16;
    bool per_band = false, verbose = false;
    TrainingFlags tf;

    auto* import_cmd = app.add_subcommand("import", "Stack per-band P5 graymaps into a cube");
    import_cmd->add_option("--dir", dir, "Directory holding the band images")->required();
    import_cmd->add_option("--bands", bands, "Comma-separated band file names, in band order")
        ->required();
    import_cmd->add_option("--out", out_path, "Output cube file")->required();

    auto* mosaic_cmd = app.add_subcommand("mosaic", "Simulate filter-array capture of a cube");
    mosaic_cmd->add_option("--in", in, "Input cube file")->required();
    mosaic_cmd->add_option("--pattern", pattern, "Pattern sidecar (default: 4x4 16-band layout)");
    mosaic_cmd->add_option("--out", out_path, "Output mosaic (1-band cube + .pattern sidecar)")
        ->required();

    auto* demosaic_cmd = app.add_subcommand("demosaic", "Reconstruct a cube from a mosaic");
    demosaic_cmd->add_option("--method", method, "bilinear | ppi | net")->required()
        ->check(CLI::IsMember({"bilinear", "ppi", "net"}));
    demosaic_cmd->add_option("--in", in, "Mosaic file")->required();
    demosaic_cmd->add_option("--pattern", pattern, "Pattern (default: the mosaic's sidecar)");
    demosaic_cmd->add_option("--checkpoint", checkpoint, "Trained network (method net)");
    demosaic_cmd->add_option("--out", out_path, "Output cube file")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the refinement network");
    train_cmd->add_option("--data", dir, "Directory of ground-truth .msc cubes")->required();
    train_cmd->add_option("--out", out_path, "Output checkpoint")->required();
    train_cmd->add_flag("--verbose", verbose, "Print the loss of every epoch");
    add_training_flags(train_cmd, tf);

    auto* crossval_cmd = app.add_subcommand("crossval", "k-fold cross-validation report");
    crossval_cmd->add_option("--data", dir, "Directory of ground-truth .msc cubes")->required();
    crossval_cmd->add_option("--folds", folds, "Number of folds")->capture_default_str()
        ->check(CLI::PositiveNumber);
    crossval_cmd->add_option("--report", report, "CSV report path")->required();
    crossval_cmd->add_flag("--verbose", verbose, "Print fold progress");
    add_training_flags(crossval_cmd, tf);

    auto* psnr_cmd = app.add_subcommand("psnr", "PSNR of a test cube against a reference");
    psnr_cmd->add_option("--ref", ref, "Reference cube")->required();
    psnr_cmd->add_option("--test", test, "Test cube")->required();
    psnr_cmd->add_flag("--per-band", per_band, "Also print one PSNR per band");

    auto* preview_cmd = app.add_subcommand("preview", "Write one band as an 8-bit graymap");
    preview_cmd->add_option("--in", in, "Cube file")->required();
    preview_cmd->add_option("--band", band, "Band index")->required();
    preview_cmd->add_option("--out", out_path, "Output .pgm")->required();

    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic textured cubes");
    synth_cmd->add_option("--out", dir, "Output directory")->required();
    synth_cmd->add_option("--count", count, "Number of cubes")->capture_default_str();
    synth_cmd->add_option("--size", size, "Edge length in pixels")->capture_default_str()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--bands", nbands, "Band count")->capture_default_str()
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", tf.seed, "Base seed")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*import_cmd) {
            const auto names = split_commas(bands);
            save_cube(out_path, import_band_images(dir, names));
        } else if (*mosaic_cmd) {
            const auto pat = pattern_or_default(pattern);
            const auto mosaic = apply_msfa(load_cube(in), pat);
            save_cube(out_path, mosaic.samples);
            save_pattern(pattern_sidecar(out_path), pat);
        } else if (*demosaic_cmd) {
            const auto pat = pattern.empty() ? load_pattern(pattern_sidecar(in)) : load_pattern(pattern);
            const MosaicImage<float> mosaic(load_cube(in), pat);
            SpectralCube result;
            if (method == "bilinear") {
                result = bilinear_demosaic(mosaic);
            } else if (method == "ppi") {
                result = ppi_demosaic(mosaic);
            } else {
                if (checkpoint.empty()) {
                    err << "msdm: --method net requires --checkpoint\n";
                    return kExitUsage;
                }
                const auto ck = load_checkpoint(checkpoint);
                result = refine(ck.params, bilinear_demosaic(mosaic));
            }
            save_cube(out_path, result);
        } else if (*train_cmd) {
            const auto pat = pattern_or_default(tf.pattern);
            const auto cfg = config_or_default(tf.config);
            const DirectoryDataset data(dir);
            std::vector<TrainPair<float>> pairs;
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto p = make_training_pairs(data.load(i), pat, tf.grid);
                std::move(p.begin(), p.end(), std::back_inserter(pairs));
            }
            const auto plan = plan_from(tf);
            auto result = train_network(cfg, pairs, plan, plan.seed, [&](std::size_t e, double l) {
                if (verbose) out << "epoch " << e + 1 << " loss " << l << '\n';
            });
            Checkpoint ck{std::move(result.params), std::move(result.adam), plan.seed,
                          result.epochs_run};
            save_checkpoint(out_path, ck);
            out << "trained " << result.epochs_run << " epochs, " << ck.adam->step
                << " steps on " << pairs.size() << " sub-images";
            if (!result.epoch_losses.empty()) out << ", final loss " << result.epoch_losses.back();
            out << '\n';
        } else if (*crossval_cmd) {
            const auto pat = pattern_or_default(tf.pattern);
            const auto cfg = config_or_default(tf.config);
            const DirectoryDataset data(dir);
            auto plan = plan_from(tf);
            plan.folds = folds;
            const auto rep = crossval_run(data, pat, cfg, plan, [&](const CrossvalEvent& e) {
                if (verbose && e.kind == CrossvalEvent::Kind::TrainingDone) {
                    out << "fold " << e.fold + 1 << "/" << folds << " trained\n";
                }
            });
            write_text(report, format_report_csv(rep));
            out << "average bilinear " << format_db(rep.mean_bilinear_db) << " dB, refined "
                << format_db(rep.mean_refined_db) << " dB\n";
        } else if (*psnr_cmd) {
            const auto a = load_cube(ref);
            const auto b = load_cube(test);
            if (per_band) {
                const auto dbs = psnr_per_band(a, b);
                for (std::size_t i = 0; i < dbs.size(); ++i) {
                    out << "band " << i << ' ' << format_db(dbs[i]) << '\n';
                }
            }
            out << format_db(psnr(a, b)) << '\n';
        } else if (*preview_cmd) {
            write_pgm(out_path, band_preview(load_cube(in), band));
        } else if (*synth_cmd) {
            fs::create_directories(dir);
            for (std::size_t i = 0; i < count; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "synth_%03zu.msc", i);
                save_cube(fs::path(dir) / name, synthetic_cube(nbands, size, size, tf.seed + i));
            }
        }
    } catch (const Error& e) {
        err << "msdm: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "msdm: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

} // namespace msdm
