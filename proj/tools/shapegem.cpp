// Command-line front end for the shapegem pipeline: synthetic dataset
// generation, shape-mixture and profile-model training, single-case
// segmentation, evaluation, and the 4-cell ablation benchmark.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/eval.hpp"
#include "shapegem/mixture.hpp"
#include "shapegem/profile.hpp"
#include "shapegem/segmentation.hpp"
#include "shapegem/shape.hpp"
#include "shapegem/synth.hpp"
#include "shapegem/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shapegem;

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buffer;
}

json default_config() {
    return {
        {"seed", 0},
        {"synth",
         {{"k", 3},
          {"grid", 34},
          {"n_per_component", 34},
          {"latent_dim", 4},
          {"latent_amplitude", 0.7},
          {"dims", {64, 64, 64}},
          {"spacing", {1.0, 1.0, 1.0}},
          {"inside", 0.8},
          {"outside", 0.2},
          {"edge_width", 1.0},
          {"noise_sigma", 0.05},
          {"bias_amplitude", 0.0},
          {"base_radius", 16.0},
          {"bump_amplitude", 7.0},
          {"bump_width", 0.5}}},
        {"mixture",
         {{"k", 3},
          {"dim_policy", {{"type", "variance_fraction"}, {"tau", 0.95}}},
          {"max_iters", 100},
          {"tol", 1e-8},
          {"restarts", 5}}},
        {"profile",
         {{"ell", 5},
          {"step", 1.0},
          {"levels", 2},
          {"ridge", 1e-3},
          {"autoencoder", true},
          {"train",
           {{"lr", 0.01},
            {"momentum", 0.9},
            {"epochs", 500},
            {"sparsity_target", 0.05},
            {"sparsity_weight", 0.1},
            {"weight_decay", 1e-4}}}}},
        {"segmentation",
         {{"search_length", 4},
          {"iters_per_level", 10},
          {"clamp", 3.0},
          {"mstep", "soft"},
          {"init", "global"}}},
    };
}

void deep_merge(json& base, const json& overlay) {
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object()) {
            deep_merge(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

// Shared flag set; individual values are applied only when the flag was
// actually passed on the command line.
struct Flags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int k = 0;
    int levels = 0;
    int ell = 0;
    int search = 0;
    int iters = 0;
    std::string mstep;
    std::string init;
    bool no_ae = false;
    bool no_gmm = false;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config_path, "Pipeline config JSON");
    cmd->add_option("--seed", flags.seed, "Base RNG seed");
    cmd->add_option("--k", flags.k, "Mixture components (synth: population components)");
    cmd->add_option("--levels", flags.levels, "Pyramid levels");
    cmd->add_option("--ell", flags.ell, "Profile half-length in voxels");
    cmd->add_option("--search", flags.search, "Search length s in voxels");
    cmd->add_option("--iters", flags.iters, "Iterations per level");
    cmd->add_option("--mstep", flags.mstep, "M-step mode: soft|hard")
        ->check(CLI::IsMember({"soft", "hard"}));
    cmd->add_option("--init", flags.init, "Initialization: global|component:K");
    cmd->add_flag("--no-ae", flags.no_ae, "Score raw scaled profiles instead of codes");
    cmd->add_flag("--no-gmm", flags.no_gmm, "Force a single mixture component");
}

json resolve_config(const CLI::App* cmd, const Flags& flags, bool synth_k) {
    json cfg = default_config();
    if (cmd->count("--config") > 0) {
        std::ifstream in(flags.config_path);
        if (!in) {
            throw ConfigError("cannot open config file: " + flags.config_path);
        }
        json overlay;
        try {
            in >> overlay;
        } catch (const json::exception& e) {
            throw ConfigError("bad config file " + flags.config_path + ": " +
                              e.what());
        }
        deep_merge(cfg, overlay);
    }
    if (cmd->count("--seed") > 0) cfg["seed"] = flags.seed;
    if (cmd->count("--k") > 0) {
        (synth_k ? cfg["synth"]["k"] : cfg["mixture"]["k"]) = flags.k;
    }
    if (cmd->count("--levels") > 0) cfg["profile"]["levels"] = flags.levels;
    if (cmd->count("--ell") > 0) cfg["profile"]["ell"] = flags.ell;
    if (cmd->count("--search") > 0) cfg["segmentation"]["search_length"] = flags.search;
    if (cmd->count("--iters") > 0) cfg["segmentation"]["iters_per_level"] = flags.iters;
    if (cmd->count("--mstep") > 0) cfg["segmentation"]["mstep"] = flags.mstep;
    if (cmd->count("--init") > 0) cfg["segmentation"]["init"] = flags.init;
    if (flags.no_ae) cfg["profile"]["autoencoder"] = false;
    if (flags.no_gmm) cfg["mixture"]["k"] = 1;
    return cfg;
}

SynthConfig synth_from_config(const json& cfg) {
    const json& s = cfg.at("synth");
    SynthConfig out;
    out.k = s.at("k").get<int>();
    out.grid = s.at("grid").get<int>();
    out.n_per_component = s.at("n_per_component").get<int>();
    out.latent_dim = s.at("latent_dim").get<int>();
    out.latent_amplitude = s.at("latent_amplitude").get<double>();
    out.seed = cfg.at("seed").get<std::uint64_t>();
    for (int axis = 0; axis < 3; ++axis) {
        out.dims[axis] = s.at("dims").at(axis).get<int>();
        out.spacing[axis] = s.at("spacing").at(axis).get<double>();
    }
    out.inside = s.at("inside").get<double>();
    out.outside = s.at("outside").get<double>();
    out.edge_width = s.at("edge_width").get<double>();
    out.noise_sigma = s.at("noise_sigma").get<double>();
    out.bias_amplitude = s.at("bias_amplitude").get<double>();
    out.base_radius = s.at("base_radius").get<double>();
    out.bump_amplitude = s.at("bump_amplitude").get<double>();
    out.bump_width = s.at("bump_width").get<double>();
    if (s.contains("bumps_per_component")) {
        out.bumps_per_component =
            s.at("bumps_per_component").get<std::vector<int>>();
    }
    return out;
}

FitOptions mixture_from_config(const json& cfg) {
    const json& m = cfg.at("mixture");
    FitOptions out;
    out.k = m.at("k").get<int>();
    const json& policy = m.at("dim_policy");
    if (policy.at("type").get<std::string>() == "fixed") {
        out.dim_policy = DimPolicy::fixed(policy.at("d").get<int>());
    } else {
        out.dim_policy = DimPolicy::variance_fraction(policy.at("tau").get<double>());
    }
    out.seed = cfg.at("seed").get<std::uint64_t>();
    out.max_iters = m.at("max_iters").get<int>();
    out.tol = m.at("tol").get<double>();
    out.restarts = m.at("restarts").get<int>();
    return out;
}

ProfileTrainOptions profile_from_config(const json& cfg) {
    const json& p = cfg.at("profile");
    ProfileTrainOptions out;
    out.spec.ell = p.at("ell").get<int>();
    out.spec.step = p.at("step").get<double>();
    out.n_levels = p.at("levels").get<int>();
    out.ridge = p.at("ridge").get<double>();
    out.use_autoencoder = p.at("autoencoder").get<bool>();
    const json& t = p.at("train");
    out.ae.lr = t.at("lr").get<double>();
    out.ae.momentum = t.at("momentum").get<double>();
    out.ae.epochs = t.at("epochs").get<int>();
    out.ae.sparsity_target = t.at("sparsity_target").get<double>();
    out.ae.sparsity_weight = t.at("sparsity_weight").get<double>();
    out.ae.weight_decay = t.at("weight_decay").get<double>();
    out.ae.seed = cfg.at("seed").get<std::uint64_t>();
    return out;
}

SegmentationConfig seg_from_config(const json& cfg) {
    const json& s = cfg.at("segmentation");
    SegmentationConfig out;
    out.search_length = s.at("search_length").get<int>();
    out.iters_per_level = s.at("iters_per_level").get<int>();
    out.n_levels = cfg.at("profile").at("levels").get<int>();
    if (s.at("clamp").is_null()) {
        out.clamp_sd = std::nullopt;
    } else {
        out.clamp_sd = s.at("clamp").get<double>();
    }
    out.mstep = s.at("mstep").get<std::string>() == "hard" ? MStepMode::Hard
                                                           : MStepMode::Soft;
    const std::string init = s.at("init").get<std::string>();
    if (init == "global") {
        out.init = InitMode::GlobalMean;
    } else if (init.rfind("component:", 0) == 0) {
        out.init = InitMode::ComponentMean;
        out.init_component = std::stoi(init.substr(10));
    } else {
        throw ConfigError("init must be 'global' or 'component:K', got " + init);
    }
    return out;
}

// Inserts the resolved config and a timestamp (the only run-varying key)
// into an already-written JSON artifact.
void embed_provenance(const fs::path& path, const json& cfg) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot reopen " + path.string());
    }
    json doc;
    in >> doc;
    in.close();
    doc["config"] = cfg;
    doc["timestamp"] = utc_timestamp();
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

struct DatasetOnDisk {
    json manifest;
    fs::path dir;
    std::vector<std::array<int, 3>> triangles;

    std::vector<json> cases(const std::string& split) const {
        std::vector<json> out;
        for (const auto& item : manifest.at("cases")) {
            if (item.at("split").get<std::string>() == split) {
                out.push_back(item);
            }
        }
        return out;
    }
};

DatasetOnDisk open_dataset(const std::string& dir) {
    DatasetOnDisk data;
    data.dir = dir;
    std::ifstream in(data.dir / "manifest.json");
    if (!in) {
        throw FormatError("cannot open manifest.json in " + dir);
    }
    in >> data.manifest;
    for (const auto& tri : data.manifest.at("triangles")) {
        data.triangles.push_back({tri.at(0).get<int>(), tri.at(1).get<int>(),
                                  tri.at(2).get<int>()});
    }
    return data;
}

std::vector<std::array<int, 3>> triangles_from_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open mesh manifest: " + path);
    }
    json doc;
    in >> doc;
    std::vector<std::array<int, 3>> triangles;
    for (const auto& tri : doc.at("triangles")) {
        triangles.push_back(
            {tri.at(0).get<int>(), tri.at(1).get<int>(), tri.at(2).get<int>()});
    }
    return triangles;
}

int run_synth(const CLI::App* cmd, const Flags& flags) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/true);
    const SynthConfig synth_cfg = synth_from_config(cfg);
    const SynthPopulation population = generate_population(synth_cfg);
    write_population(population, synth_cfg, flags.out_dir);
    embed_provenance(fs::path(flags.out_dir) / "manifest.json", cfg);
    std::cout << "wrote " << population.train.size() << " train + "
              << population.test.size() << " test cases to " << flags.out_dir
              << "\n";
    return 0;
}

ShapeDataset load_train_shapes(const DatasetOnDisk& data) {
    const auto train = data.cases("train");
    if (train.size() < 2) {
        throw FormatError("dataset has fewer than 2 training cases");
    }
    Eigen::VectorXd first = read_landmarks_csv(
        (data.dir / train.front().at("shape").get<std::string>()).string());
    Eigen::MatrixXd shapes(first.size(), static_cast<Eigen::Index>(train.size()));
    shapes.col(0) = first;
    for (std::size_t i = 1; i < train.size(); ++i) {
        shapes.col(static_cast<Eigen::Index>(i)) = read_landmarks_csv(
            (data.dir / train[i].at("shape").get<std::string>()).string());
    }
    return ShapeDataset(std::move(shapes));
}

int run_train_shape(const CLI::App* cmd, const Flags& flags,
                    const std::string& data_dir, const std::string& out_file) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/false);
    const DatasetOnDisk data = open_dataset(data_dir);
    const ShapeDataset dataset = load_train_shapes(data);
    const FitResult fit = fit_mixture(dataset, mixture_from_config(cfg));
    save_mixture(fit.mixture, out_file);
    embed_provenance(out_file, cfg);
    std::cout << "fit " << fit.mixture.k() << "-component mixture on "
              << dataset.count() << " shapes; final log-likelihood "
              << fit.log_likelihood.back() << "\n";
    return 0;
}

int run_train_profiles(const CLI::App* cmd, const Flags& flags,
                       const std::string& data_dir, const std::string& out_file) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/false);
    const DatasetOnDisk data = open_dataset(data_dir);
    const auto train = data.cases("train");
    if (train.size() < 2) {
        throw FormatError("dataset has fewer than 2 training cases");
    }

    std::vector<IntensityVolume> volumes;
    std::vector<Eigen::VectorXd> shapes;
    volumes.reserve(train.size());
    shapes.reserve(train.size());
    for (const auto& item : train) {
        volumes.push_back(
            read_volume((data.dir / item.at("image").get<std::string>()).string()));
        shapes.push_back(read_landmarks_csv(
            (data.dir / item.at("shape").get<std::string>()).string()));
    }
    std::vector<const IntensityVolume*> volume_ptrs;
    volume_ptrs.reserve(volumes.size());
    for (const auto& v : volumes) {
        volume_ptrs.push_back(&v);
    }

    const ProfileModel model = train_profile_models(
        volume_ptrs, shapes, profile_from_config(cfg), data.triangles);
    save_profile_model(model, out_file);
    embed_provenance(out_file, cfg);
    std::cout << "trained profile model: " << model.n_levels << " levels x "
              << model.m << " landmarks"
              << (model.use_autoencoder ? " (autoencoded)" : " (raw profiles)")
              << "\n";
    return 0;
}

int run_segment(const CLI::App* cmd, const Flags& flags,
                const std::string& image_path, const std::string& mixture_path,
                const std::string& profiles_path, const std::string& mesh_path) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/false);
    const ShapeMixture mix = load_mixture(mixture_path);
    const ProfileModel model = load_profile_model(profiles_path);
    const IntensityVolume image = read_volume(image_path);
    std::vector<std::array<int, 3>> triangles;
    if (!mesh_path.empty()) {
        triangles = triangles_from_manifest(mesh_path);
    }

    SegmentationConfig seg_cfg = seg_from_config(cfg);
    seg_cfg.n_levels = model.n_levels;
    const VolumePyramid pyramid = build_pyramid(image, model.n_levels);
    const SegmentationResult result = segment(pyramid, mix, model, seg_cfg, triangles);
    write_segmentation_result(result, seg_cfg, flags.out_dir);
    embed_provenance(fs::path(flags.out_dir) / "result.json", cfg);
    std::cout << "segmented " << image_path << " -> " << flags.out_dir
              << " (final mean profile cost "
              << result.trace.back().mean_profile_cost << ")\n";
    return 0;
}

int run_eval(const CLI::App* cmd, const Flags& flags, const std::string& pred_path,
             const std::string& truth_path, const std::string& label_path,
             const std::string& mesh_path) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/false);
    const Eigen::VectorXd pred = read_landmarks_csv(pred_path);
    const Eigen::VectorXd truth = read_landmarks_csv(truth_path);
    const Eigen::VectorXd distances = point_error(pred, truth);

    std::optional<double> dice_value;
    if (!label_path.empty()) {
        if (mesh_path.empty()) {
            throw ConfigError("--label needs --mesh for voxelization");
        }
        const IntensityVolume truth_label = read_volume(label_path);
        const IntensityVolume pred_label =
            voxelize(pred, triangles_from_manifest(mesh_path), truth_label.dims,
                     truth_label.spacing, truth_label.origin);
        dice_value = dice(pred_label, truth_label);
    }

    const EvalReport report = make_report(distances, dice_value);
    write_report(report, flags.out_dir);
    embed_provenance(fs::path(flags.out_dir) / "report.json", cfg);
    std::cout << "mean " << report.mean << ", median " << report.median
              << ", max " << report.max;
    if (report.dice) {
        std::cout << ", dice " << *report.dice;
    }
    std::cout << "\n";
    return 0;
}

struct BenchCell {
    bool autoencoder = true;
    bool gmm = true;
    double median_dice = 0.0;
    double mean_point_error = 0.0;
    double median_point_error = 0.0;
    std::vector<double> case_dice;
    std::vector<double> case_mean_error;
};

BenchCell run_bench_cell(const SynthPopulation& population, const ShapeMixture& mix,
                         const ProfileModel& model, const SegmentationConfig& cfg,
                         bool autoencoder, bool gmm) {
    BenchCell cell;
    cell.autoencoder = autoencoder;
    cell.gmm = gmm;
    for (const auto& test_case : population.test) {
        const VolumePyramid pyramid = build_pyramid(test_case.image, cfg.n_levels);
        const SegmentationResult result =
            segment(pyramid, mix, model, cfg, population.triangles);
        const Eigen::VectorXd distances =
            point_error(result.final_shape, test_case.shape);
        const IntensityVolume pred_label =
            voxelize(result.final_shape, population.triangles,
                     test_case.label.dims, test_case.label.spacing,
                     test_case.label.origin);
        cell.case_dice.push_back(dice(pred_label, test_case.label));
        cell.case_mean_error.push_back(distances.mean());
    }

    auto median_of = [](std::vector<double> values) {
        std::sort(values.begin(), values.end());
        const std::size_t n = values.size();
        return n % 2 == 1 ? values[n / 2]
                          : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    };
    cell.median_dice = median_of(cell.case_dice);
    cell.median_point_error = median_of(cell.case_mean_error);
    cell.mean_point_error = 0.0;
    for (const double e : cell.case_mean_error) {
        cell.mean_point_error += e;
    }
    cell.mean_point_error /= static_cast<double>(cell.case_mean_error.size());
    return cell;
}

int run_bench(const CLI::App* cmd, const Flags& flags) {
    const json cfg = resolve_config(cmd, flags, /*synth_k=*/false);
    fs::create_directories(flags.out_dir);

    const auto started = std::chrono::steady_clock::now();
    const SynthConfig synth_cfg = synth_from_config(cfg);
    std::cout << "generating population..." << std::endl;
    const SynthPopulation population = generate_population(synth_cfg);

    Eigen::MatrixXd train_shapes(population.train.front().shape.size(),
                                 static_cast<Eigen::Index>(population.train.size()));
    std::vector<const IntensityVolume*> train_volumes;
    std::vector<Eigen::VectorXd> train_shape_list;
    for (std::size_t i = 0; i < population.train.size(); ++i) {
        train_shapes.col(static_cast<Eigen::Index>(i)) = population.train[i].shape;
        train_volumes.push_back(&population.train[i].image);
        train_shape_list.push_back(population.train[i].shape);
    }
    const ShapeDataset dataset(train_shapes);

    std::cout << "fitting mixtures..." << std::endl;
    FitOptions mix_opts = mixture_from_config(cfg);
    const ShapeMixture mix_full = fit_mixture(dataset, mix_opts).mixture;
    FitOptions single = mix_opts;
    single.k = 1;
    const ShapeMixture mix_single = fit_mixture(dataset, single).mixture;

    std::cout << "training profile models..." << std::endl;
    ProfileTrainOptions profile_opts = profile_from_config(cfg);
    profile_opts.use_autoencoder = true;
    const ProfileModel model_ae = train_profile_models(
        train_volumes, train_shape_list, profile_opts, population.triangles);
    profile_opts.use_autoencoder = false;
    const ProfileModel model_raw = train_profile_models(
        train_volumes, train_shape_list, profile_opts, population.triangles);

    const SegmentationConfig seg_cfg = seg_from_config(cfg);
    std::vector<BenchCell> cells;
    for (const bool autoencoder : {true, false}) {
        for (const bool gmm : {true, false}) {
            std::cout << "segmenting cell: autoencoder=" << autoencoder
                      << " mixture=" << gmm << std::endl;
            cells.push_back(run_bench_cell(population,
                                           gmm ? mix_full : mix_single,
                                           autoencoder ? model_ae : model_raw,
                                           seg_cfg, autoencoder, gmm));
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();

    json cell_rows = json::array();
    for (const auto& cell : cells) {
        cell_rows.push_back({{"autoencoder", cell.autoencoder},
                             {"mixture_model", cell.gmm},
                             {"median_dice", cell.median_dice},
                             {"mean_point_error", cell.mean_point_error},
                             {"median_point_error", cell.median_point_error},
                             {"case_dice", cell.case_dice},
                             {"case_mean_error", cell.case_mean_error}});
    }
    json doc = {{"cells", cell_rows},
                {"n_train", population.train.size()},
                {"n_test", population.test.size()},
                {"elapsed_seconds", elapsed}};
    const fs::path bench_path = fs::path(flags.out_dir) / "bench.json";
    std::ofstream out(bench_path);
    out << doc.dump(2) << "\n";
    out.close();
    embed_provenance(bench_path, cfg);

    std::cout << "median Dice (AE x GMM table):\n";
    for (const auto& cell : cells) {
        std::cout << "  autoencoder=" << (cell.autoencoder ? "yes" : "no ")
                  << " mixture=" << (cell.gmm ? "yes" : "no ") << "  dice "
                  << cell.median_dice << "  mean point error "
                  << cell.mean_point_error << "\n";
    }
    std::cout << "bench finished in " << elapsed << " s\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shape-prior-driven landmark segmentation pipeline"};
    app.require_subcommand(1);

    Flags flags;

    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    add_common_flags(synth_cmd, flags);
    synth_cmd->add_option("--out", flags.out_dir, "Output directory")->required();

    std::string data_dir;
    std::string out_file;
    CLI::App* train_shape_cmd =
        app.add_subcommand("train-shape", "Fit and serialize the shape mixture");
    add_common_flags(train_shape_cmd, flags);
    train_shape_cmd->add_option("--data", data_dir, "Dataset directory")->required();
    train_shape_cmd->add_option("--out", out_file, "Output mixture JSON")->required();

    CLI::App* train_profiles_cmd =
        app.add_subcommand("train-profiles", "Train and serialize profile models");
    add_common_flags(train_profiles_cmd, flags);
    train_profiles_cmd->add_option("--data", data_dir, "Dataset directory")
        ->required();
    train_profiles_cmd->add_option("--out", out_file, "Output profile JSON")
        ->required();

    std::string image_path;
    std::string mixture_path;
    std::string profiles_path;
    std::string mesh_path;
    CLI::App* segment_cmd = app.add_subcommand("segment", "Segment one volume");
    add_common_flags(segment_cmd, flags);
    segment_cmd->add_option("--image", image_path, "Input volume header")->required();
    segment_cmd->add_option("--mixture", mixture_path, "Shape mixture JSON")
        ->required();
    segment_cmd->add_option("--profiles", profiles_path, "Profile model JSON")
        ->required();
    segment_cmd->add_option("--mesh", mesh_path,
                            "Manifest with grid triangles (for mesh normals)");
    segment_cmd->add_option("--out", flags.out_dir, "Output directory")->required();

    std::string pred_path;
    std::string truth_path;
    std::string label_path;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a segmentation");
    add_common_flags(eval_cmd, flags);
    eval_cmd->add_option("--pred", pred_path, "Predicted landmarks CSV")->required();
    eval_cmd->add_option("--truth", truth_path, "Ground-truth landmarks CSV")
        ->required();
    eval_cmd->add_option("--label", label_path, "Ground-truth label volume header");
    eval_cmd->add_option("--mesh", mesh_path, "Manifest with grid triangles");
    eval_cmd->add_option("--out", flags.out_dir, "Output directory")->required();

    CLI::App* bench_cmd = app.add_subcommand(
        "bench", "Full 80/20 pipeline with the 4-cell ablation table");
    add_common_flags(bench_cmd, flags);
    bench_cmd->add_option("--out", flags.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth_cmd->parsed()) {
            return run_synth(synth_cmd, flags);
        }
        if (train_shape_cmd->parsed()) {
            return run_train_shape(train_shape_cmd, flags, data_dir, out_file);
        }
        if (train_profiles_cmd->parsed()) {
            return run_train_profiles(train_profiles_cmd, flags, data_dir, out_file);
        }
        if (segment_cmd->parsed()) {
            return run_segment(segment_cmd, flags, image_path, mixture_path,
                               profiles_path, mesh_path);
        }
        if (eval_cmd->parsed()) {
            return run_eval(eval_cmd, flags, pred_path, truth_path, label_path,
                            mesh_path);
        }
        if (bench_cmd->parsed()) {
            return run_bench(bench_cmd, flags);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
