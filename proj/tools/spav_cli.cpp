// spav: point-based animatable avatar pipeline.
//
// Subcommands: generate, train-geom, transfer, train-appearance, repose,
// reconstruct, compose, eval. Every subcommand accepts --config (JSON),
// --seed, and --out; outputs land under --out and metrics go to CSV files.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <iostream>

#include "spav/compose.hpp"
#include "spav/evaluate.hpp"
#include "spav/mesh_io.hpp"
#include "spav/pipeline.hpp"
#include "spav/reconstruct.hpp"
#include "spav/sampling.hpp"

namespace fs = std::filesystem;
using namespace spav;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool paper_scale = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&args](const std::uint64_t& v) { args.seed = v; args.seed_set = true; },
        "override the config seed");
    cmd->add_flag("--paper-scale", args.paper_scale,
                  "published sampling, widths, and schedule instead of desk defaults");
}

TrainConfig load_config(const CommonArgs& args) {
    const TrainConfig base =
        args.paper_scale ? TrainConfig::paper_defaults() : TrainConfig::desk_defaults();
    TrainConfig config = base;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw IoError("cannot open " + args.config_path);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        config = TrainConfig::from_json(text, base);
    }
    if (args.seed_set) config.seed = args.seed;
    return config;
}

fs::path ensure_out(const CommonArgs& args) {
    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    out << header << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

LabeledTemplateMesh subject_template(const SyntheticSubject& subject) {
    LabeledTemplateMesh tpl;
    tpl.mesh = subject.template_mesh;
    tpl.vertex_labels = subject.vertex_labels;
    tpl.vertex_weights = subject.vertex_weights;
    return tpl;
}

// Composite checkpoints carry a second model/template under *1-prefixes.
bool is_composite(const Checkpoint& ck) { return ck.has("deform1.meta"); }

struct LoadedAvatar {
    Avatar host;
    DeformationModel donor_model;
    TriangleMesh donor_template;
    AppearanceModel donor_appearance;
    bool composite = false;
    bool donor_has_appearance = false;
};

LoadedAvatar load_any(const fs::path& path) {
    const Checkpoint ck = Checkpoint::read(path);
    LoadedAvatar out;
    out.host = Avatar::load(ck);
    if (is_composite(ck)) {
        out.composite = true;
        out.donor_model = DeformationModel::load(ck, "deform1.");
        out.donor_template = parse_ply(ck.get_text("template1_ply")).to_mesh();
        if (ck.has("appearance1.meta")) {
            out.donor_appearance = AppearanceModel::load(ck, "appearance1.");
            out.donor_has_appearance = true;
        }
        const TriangleMesh* templates[2] = {&out.host.template_mesh, &out.donor_template};
        out.host.points.refresh_cache(std::span<const TriangleMesh* const>(templates, 2));
    }
    return out;
}

int cmd_generate(const CommonArgs& args, std::size_t poses, int resolution) {
    const fs::path out = ensure_out(args);
    SubjectParams params;
    params.mesh_resolution = resolution;
    const SyntheticSubject subject = generate_subject(args.seed_set ? args.seed : 1, poses, params);
    save_subject(subject, out);
    std::cout << "generated subject: " << subject.template_mesh.vertex_count() << " vertices, "
              << subject.pose_count() << " poses -> " << out << "\n";
    return 0;
}

int cmd_train_geom(const CommonArgs& args, const std::string& data_dir) {
    const TrainConfig config = load_config(args);
    const fs::path out = ensure_out(args);
    const SyntheticSubject subject = load_subject(data_dir);
    const PoseSplit split = split_poses(subject.pose_count(), config.train_fraction);

    std::cout << "training geometry on " << split.train.size() << " poses ("
              << split.held_out.size() << " held out), " << config.geometry_epochs << " epochs\n";
    const GeometryTrainResult result = train_geometry(subject, split.train, config, &out);
    write_train_log(result.log, out / "train_log.csv");

    Avatar avatar;
    avatar.model = result.model;
    avatar.template_mesh = subject.template_mesh;
    Checkpoint ck;
    avatar.save(ck);
    config.save(out / "config_used.json");
    ck.write(out / "checkpoint.spav");
    std::cout << "final mean chamfer " << result.epoch_chamfer.back() << " (first epoch "
              << result.epoch_chamfer.front() << ") -> " << (out / "checkpoint.spav") << "\n";
    return 0;
}

int cmd_transfer(const CommonArgs& args, const std::string& checkpoint_path,
                 const std::string& data_dir) {
    const TrainConfig config = load_config(args);
    const fs::path out = ensure_out(args);
    const SyntheticSubject subject = load_subject(data_dir);
    Checkpoint ck = Checkpoint::read(checkpoint_path);
    Avatar avatar = Avatar::load(ck);

    const LabeledTemplateMesh tpl = subject_template(subject);
    avatar.points = sample_semantic(tpl, config.semantic_points, config.seed);
    const OrientedPointCloud scan =
        sample_surface(subject.scans[0], config.semantic_points, config.seed ^ 0xa11ce);
    AlignConfig align = config.align;
    align.seed = config.seed;
    const AlignStats stats = align_to_template_scan(avatar.points, tpl, scan, align);
    if (!stats.converged)
        std::cerr << "warning: alignment chamfer " << stats.final_chamfer
                  << " above the convergence threshold " << align.converged_chamfer << "\n";

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < stats.chamfer_history.size(); ++i)
        rows.push_back({static_cast<double>(i), stats.chamfer_history[i]});
    write_csv(out / "transfer_log.csv", "iteration,chamfer", rows);

    Checkpoint updated;
    avatar.save(updated);
    updated.write(out / "checkpoint.spav");
    write_semantic_ply(avatar.points, out / "semantic_points.ply");
    std::cout << "aligned " << avatar.points.size() << " semantic points, final chamfer "
              << stats.final_chamfer << " -> " << (out / "checkpoint.spav") << "\n";
    return 0;
}

int cmd_train_appearance(const CommonArgs& args, const std::string& checkpoint_path,
                         const std::string& data_dir) {
    const TrainConfig config = load_config(args);
    const fs::path out = ensure_out(args);
    const SyntheticSubject subject = load_subject(data_dir);
    Checkpoint ck = Checkpoint::read(checkpoint_path);
    Avatar avatar = Avatar::load(ck);
    if (avatar.points.size() == 0)
        throw Error("train-appearance: checkpoint has no semantic points (run transfer first)");

    // Autoencoder pretraining on colors pooled over the training scans,
    // deduplicated and capped (palettes repeat heavily across vertices).
    const PoseSplit split = split_poses(subject.pose_count(), config.train_fraction);
    std::vector<Vec3f> colors;
    {
        std::set<std::array<float, 3>> seen;
        for (const std::size_t p : split.train) {
            const auto& scan = subject.scans[p];
            if (!scan.has_vertex_colors()) throw MissingColors("train-appearance: scan lacks colors");
            for (const auto& c : scan.vertex_colors)
                if (seen.insert({c.x, c.y, c.z}).second) colors.push_back(c);
        }
        if (colors.size() > 4096) {
            Rng shuffle_rng(config.seed ^ 0xc0105eedull);
            for (std::size_t i = colors.size(); i-- > 1;)
                std::swap(colors[i], colors[shuffle_rng.uniform_index(i + 1)]);
            colors.resize(4096);
        }
    }
    PretrainStats pre_stats;
    avatar.appearance = pretrain_autoencoder(colors, 200, 2e-3, config.seed, config.appearance,
                                             &pre_stats);
    avatar.has_appearance = true;

    // Frozen geometry: posed semantic clouds per training pose.
    std::vector<OrientedPointCloud> posed;
    std::vector<TriangleMesh> scans;
    avatar.points.refresh_cache(avatar.template_mesh);
    for (const std::size_t p : split.train) {
        posed.push_back(repose_semantic(avatar.points, avatar.template_mesh, avatar.model,
                                        subject.poses[p]));
        scans.push_back(subject.scans[p]);
    }

    FeatureTrainConfig feature_config;
    feature_config.epochs = config.appearance_epochs;
    feature_config.learning_rate = config.lr_feature;
    feature_config.samples_per_pose = config.appearance_samples;
    feature_config.k = config.knn_k;
    feature_config.seed = config.seed;
    const FeatureTrainStats stats =
        train_features(avatar.appearance, avatar.points, posed, scans, feature_config);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < stats.loss_history.size(); ++i)
        rows.push_back({static_cast<double>(i), stats.loss_history[i]});
    write_csv(out / "appearance_log.csv", "epoch,color_mse", rows);

    Checkpoint updated;
    avatar.save(updated);
    updated.write(out / "checkpoint.spav");
    std::cout << "appearance trained: color mse " << stats.initial_loss << " -> "
              << stats.loss_history.back() << " -> " << (out / "checkpoint.spav") << "\n";
    return 0;
}

int cmd_repose(const CommonArgs& args, const std::string& checkpoint_path,
               const std::string& pose_path) {
    const TrainConfig config = load_config(args);
    const fs::path out = ensure_out(args);
    const LoadedAvatar loaded = load_any(checkpoint_path);
    const Avatar& avatar = loaded.host;
    if (avatar.points.size() == 0)
        throw Error("repose: checkpoint has no semantic points (run transfer first)");
    const PoseParams pose = read_pose_json(pose_path);

    const TriangleMesh* templates[2] = {&avatar.template_mesh, &loaded.donor_template};
    const DeformationModel* models[2] = {&avatar.model, &loaded.donor_model};
    const std::size_t sources = loaded.composite ? 2 : 1;
    std::vector<std::uint8_t> labels;
    const OrientedPointCloud posed =
        repose_semantic(avatar.points, std::span<const TriangleMesh* const>(templates, sources),
                        std::span<const DeformationModel* const>(models, sources), pose, &labels);

    OrientedPointCloud colored = posed;
    const AppearanceModel* appearances[2] = {&avatar.appearance, loaded.donor_has_appearance
                                                                     ? &loaded.donor_appearance
                                                                     : &avatar.appearance};
    if (avatar.has_appearance && avatar.points.has_features())
        colored.colors =
            decode_point_colors(avatar.points, std::span<const AppearanceModel* const>(appearances, 2));
    write_ply(colored, out / "posed.ply", /*binary=*/true, labels);

    TriangleMesh mesh = reconstruct(posed, config.psr_resolution, config.psr_sigma);
    if (avatar.has_appearance && avatar.points.has_features())
        mesh = color_mesh_multi(mesh, posed, avatar.points,
                                std::span<const AppearanceModel* const>(appearances, 2), config.knn_k);
    write_obj(mesh, out / "mesh.obj");
    write_ply(mesh, out / "mesh.ply");
    std::cout << "reposed " << posed.size() << " points, mesh " << mesh.vertex_count()
              << " vertices -> " << (out / "posed.ply") << ", " << (out / "mesh.obj") << "\n";
    return 0;
}

int cmd_reconstruct(const CommonArgs& args, const std::string& input_path, int resolution,
                    double sigma) {
    const fs::path out = ensure_out(args);
    const OrientedPointCloud cloud = read_ply(input_path).to_cloud();
    ReconstructStats stats;
    const TriangleMesh mesh = reconstruct(cloud, resolution, sigma, &stats);
    write_ply(mesh, out / "mesh.ply");
    write_obj(mesh, out / "mesh.obj");
    std::cout << "reconstructed " << mesh.vertex_count() << " vertices / " << mesh.face_count()
              << " faces in " << stats.total_seconds << " s (iso " << stats.isolevel << ") -> "
              << (out / "mesh.ply") << "\n";
    return 0;
}

int cmd_compose(const CommonArgs& args, const std::string& host_path, const std::string& donor_path,
                const std::string& parts_csv, const std::string& mode_name) {
    const TrainConfig config = load_config(args);
    const fs::path out = ensure_out(args);
    const Checkpoint host_ck = Checkpoint::read(host_path);
    const Checkpoint donor_ck = Checkpoint::read(donor_path);
    const Avatar host = Avatar::load(host_ck);
    const Avatar donor = Avatar::load(donor_ck);

    std::set<PartLabel> parts;
    std::stringstream ss(parts_csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) parts.insert(part_from_name(token));
    }
    const ComposeMode mode = mode_name == "texture" ? ComposeMode::Texture : ComposeMode::Points;

    const SemanticPointSet composite = compose(host, donor, parts, mode, config.knn_k);

    // Composite checkpoint: host sections plus the donor under *1-prefixes.
    Checkpoint ck;
    Avatar shell = host;
    shell.points = composite;
    shell.save(ck);
    donor.model.save(ck, "deform1.");
    ck.add_text("template1_ply", ply_bytes(donor.template_mesh));
    if (donor.has_appearance) donor.appearance.save(ck, "appearance1.");
    ck.write(out / "composite.spav");
    write_semantic_ply(composite, out / "composite_points.ply");

    std::cout << "composed " << composite.size() << " points (" << mode_name << " mode, "
              << parts.size() << " parts) -> " << (out / "composite.spav") << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& pred_path, const std::string& gt_path,
             std::size_t samples, int resolution) {
    const fs::path out = ensure_out(args);
    const TriangleMesh pred = read_ply(pred_path).to_mesh();
    const TriangleMesh gt = read_ply(gt_path).to_mesh();
    EvalConfig config;
    config.samples = samples;
    config.iou_resolution = resolution;
    if (args.seed_set) config.seed = args.seed;
    const EvalReport report = evaluate(pred, gt, config);
    std::ofstream json(out / "report.json");
    json << report.to_json() << "\n";
    std::cout << "CD " << report.cd << " mm, CD-MAX " << report.cd_max << " mm, NC " << report.nc;
    if (report.iou) std::cout << ", IoU " << *report.iou;
    if (report.cd_hands) std::cout << ", CD(hands) " << *report.cd_hands << " mm";
    std::cout << " -> " << (out / "report.json") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-based animatable avatar pipeline"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* generate = app.add_subcommand("generate", "generate a synthetic subject");
    add_common(generate, args);
    std::size_t poses = 8;
    int gen_resolution = 64;
    generate->add_option("--poses", poses, "number of poses (rest included)");
    generate->add_option("--resolution", gen_resolution, "template meshing lattice");

    auto* train_geom = app.add_subcommand("train-geom", "train the deformation networks");
    add_common(train_geom, args);
    std::string data_dir;
    train_geom->add_option("--data", data_dir, "subject directory")->required();

    auto* transfer = app.add_subcommand("transfer", "transfer semantics onto optimized points");
    add_common(transfer, args);
    std::string checkpoint_path;
    transfer->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    transfer->add_option("--data", data_dir, "subject directory")->required();

    auto* train_app = app.add_subcommand("train-appearance", "fit per-point neural texture");
    add_common(train_app, args);
    train_app->add_option("--checkpoint", checkpoint_path, "checkpoint with semantics")->required();
    train_app->add_option("--data", data_dir, "subject directory")->required();

    auto* repose = app.add_subcommand("repose", "deform the avatar to a pose");
    add_common(repose, args);
    std::string pose_path;
    repose->add_option("--checkpoint", checkpoint_path, "avatar checkpoint")->required();
    repose->add_option("--pose", pose_path, "pose JSON")->required();

    auto* recon = app.add_subcommand("reconstruct", "Poisson-mesh an oriented point cloud");
    add_common(recon, args);
    std::string input_path;
    int resolution = 128;
    double sigma = 2.0;
    recon->add_option("--input", input_path, "oriented point cloud (PLY)")->required();
    recon->add_option("--resolution", resolution, "grid resolution (power of two)");
    recon->add_option("--sigma", sigma, "smoothing in cells");

    auto* comp = app.add_subcommand("compose", "exchange parts between two avatars");
    add_common(comp, args);
    std::string donor_path, parts_csv;
    std::string mode_name = "points";
    comp->add_option("--host", checkpoint_path, "host checkpoint")->required();
    comp->add_option("--donor", donor_path, "donor checkpoint")->required();
    comp->add_option("--parts", parts_csv, "comma-separated part names")->required();
    comp->add_option("--mode", mode_name, "points|texture")
        ->check(CLI::IsMember({"points", "texture"}));

    auto* eval = app.add_subcommand("eval", "compare a predicted mesh against ground truth");
    add_common(eval, args);
    std::string pred_path, gt_path;
    std::size_t eval_samples = 20000;
    int eval_resolution = 128;
    eval->add_option("--pred", pred_path, "predicted mesh (PLY)")->required();
    eval->add_option("--gt", gt_path, "ground-truth mesh (PLY)")->required();
    eval->add_option("--samples", eval_samples, "samples per direction");
    eval->add_option("--iou-resolution", eval_resolution, "voxel resolution for IoU");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (generate->parsed()) return cmd_generate(args, poses, gen_resolution);
        if (train_geom->parsed()) return cmd_train_geom(args, data_dir);
        if (transfer->parsed()) return cmd_transfer(args, checkpoint_path, data_dir);
        if (train_app->parsed()) return cmd_train_appearance(args, checkpoint_path, data_dir);
        if (repose->parsed()) return cmd_repose(args, checkpoint_path, pose_path);
        if (recon->parsed()) return cmd_reconstruct(args, input_path, resolution, sigma);
        if (comp->parsed()) return cmd_compose(args, checkpoint_path, donor_path, parts_csv, mode_name);
        if (eval->parsed()) return cmd_eval(args, pred_path, gt_path, eval_samples, eval_resolution);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
