#include "spav/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "spav/grid.hpp"
#include "spav/mesh_io.hpp"
#include "spav/rng.hpp"
#include "spav/sampling.hpp"

namespace spav {

NetSizes TrainConfig::desk_net() {
    NetSizes n;
    n.deltanet_width = 64;
    n.lbsnet_width = 64;
    n.encoder_width = 32;
    return n;
}

NetSizes TrainConfig::paper_net() { return NetSizes{}; }

AppearanceSizes TrainConfig::desk_appearance() {
    AppearanceSizes a;
    a.width = 64;
    return a;
}

AppearanceSizes TrainConfig::paper_appearance() { return AppearanceSizes{}; }

TrainConfig TrainConfig::desk_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_defaults() {
    TrainConfig c;
    c.samples_per_iteration = 51200;
    c.emd_points = 51200;
    c.reg_points = 8192;
    c.net = paper_net();
    c.appearance = paper_appearance();
    c.semantic_points = 51200;
    c.appearance_samples = 8192;
    c.auction_max_bids = -1;
    c.lbs_detach_iterations = 0;
    c.lr_lbsnet = 1e-4;
    return c;
}

void TrainConfig::validate() const {
    if (samples_per_iteration == 0 || semantic_points == 0 || appearance_samples == 0)
        throw Error("config: sample counts must be positive");
    if (geometry_epochs < 0 || appearance_epochs < 0) throw Error("config: negative epoch count");
    if (train_fraction <= 0 || train_fraction > 1) throw Error("config: train_fraction in (0,1]");
    loss_weights.validate();
    GridLayout::validate_resolution(psr_resolution);
}

std::string TrainConfig::to_json() const {
    nlohmann::json j{
        {"seed", seed},
        {"samples_per_iteration", samples_per_iteration},
        {"emd_points", emd_points},
        {"reg_points", reg_points},
        {"geometry_epochs", geometry_epochs},
        {"appearance_epochs", appearance_epochs},
        {"lr_deltanet", lr_deltanet},
        {"lr_lbsnet", lr_lbsnet},
        {"lr_feature", lr_feature},
        {"loss_weights",
         {{"chamfer", loss_weights.chamfer},
          {"emd", loss_weights.emd},
          {"normal", loss_weights.normal},
          {"reg", loss_weights.reg},
          {"color", loss_weights.color},
          {"enable_chamfer", loss_weights.enable_chamfer},
          {"enable_emd", loss_weights.enable_emd},
          {"enable_normal", loss_weights.enable_normal},
          {"enable_reg", loss_weights.enable_reg},
          {"enable_color", loss_weights.enable_color}}},
        {"net",
         {{"deltanet_depth", net.deltanet_depth},
          {"deltanet_width", net.deltanet_width},
          {"deltanet_skip", net.deltanet_skip},
          {"lbsnet_depth", net.lbsnet_depth},
          {"lbsnet_width", net.lbsnet_width},
          {"encoder_width", net.encoder_width},
          {"pose_code_dim", net.pose_code_dim},
          {"pe_levels", net.pe_levels}}},
        {"appearance",
         {{"feature_dim", appearance.feature_dim},
          {"encoder_depth", appearance.encoder_depth},
          {"decoder_depth", appearance.decoder_depth},
          {"width", appearance.width}}},
        {"knn_k", knn_k},
        {"psr_resolution", psr_resolution},
        {"psr_sigma", psr_sigma},
        {"semantic_points", semantic_points},
        {"align",
         {{"iterations", align.iterations},
          {"learning_rate", align.learning_rate},
          {"emd_points", align.emd_points},
          {"max_normal_offset", align.max_normal_offset},
          {"converged_chamfer", align.converged_chamfer}}},
        {"appearance_samples", appearance_samples},
        {"train_fraction", train_fraction},
        {"checkpoint_every", checkpoint_every},
        {"auction_max_bids", auction_max_bids},
        {"lbs_detach_iterations", lbs_detach_iterations},
    };
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    return from_json(text, TrainConfig{});
}

TrainConfig TrainConfig::from_json(const std::string& text, const TrainConfig& base) {
    TrainConfig c = base;
    const nlohmann::json j = nlohmann::json::parse(text);
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("samples_per_iteration", c.samples_per_iteration);
    get("emd_points", c.emd_points);
    get("reg_points", c.reg_points);
    get("geometry_epochs", c.geometry_epochs);
    get("appearance_epochs", c.appearance_epochs);
    get("lr_deltanet", c.lr_deltanet);
    get("lr_lbsnet", c.lr_lbsnet);
    get("lr_feature", c.lr_feature);
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        auto getw = [&](const char* key, auto& field) {
            if (w.contains(key)) field = w.at(key).get<std::decay_t<decltype(field)>>();
        };
        getw("chamfer", c.loss_weights.chamfer);
        getw("emd", c.loss_weights.emd);
        getw("normal", c.loss_weights.normal);
        getw("reg", c.loss_weights.reg);
        getw("color", c.loss_weights.color);
        getw("enable_chamfer", c.loss_weights.enable_chamfer);
        getw("enable_emd", c.loss_weights.enable_emd);
        getw("enable_normal", c.loss_weights.enable_normal);
        getw("enable_reg", c.loss_weights.enable_reg);
        getw("enable_color", c.loss_weights.enable_color);
    }
    if (j.contains("net")) {
        const auto& n = j.at("net");
        auto getn = [&](const char* key, auto& field) {
            if (n.contains(key)) field = n.at(key).get<std::decay_t<decltype(field)>>();
        };
        getn("deltanet_depth", c.net.deltanet_depth);
        getn("deltanet_width", c.net.deltanet_width);
        getn("deltanet_skip", c.net.deltanet_skip);
        getn("lbsnet_depth", c.net.lbsnet_depth);
        getn("lbsnet_width", c.net.lbsnet_width);
        getn("encoder_width", c.net.encoder_width);
        getn("pose_code_dim", c.net.pose_code_dim);
        getn("pe_levels", c.net.pe_levels);
    }
    if (j.contains("appearance")) {
        const auto& a = j.at("appearance");
        auto geta = [&](const char* key, auto& field) {
            if (a.contains(key)) field = a.at(key).get<std::decay_t<decltype(field)>>();
        };
        geta("feature_dim", c.appearance.feature_dim);
        geta("encoder_depth", c.appearance.encoder_depth);
        geta("decoder_depth", c.appearance.decoder_depth);
        geta("width", c.appearance.width);
    }
    get("knn_k", c.knn_k);
    get("psr_resolution", c.psr_resolution);
    get("psr_sigma", c.psr_sigma);
    get("semantic_points", c.semantic_points);
    if (j.contains("align")) {
        const auto& a = j.at("align");
        auto geta = [&](const char* key, auto& field) {
            if (a.contains(key)) field = a.at(key).get<std::decay_t<decltype(field)>>();
        };
        geta("iterations", c.align.iterations);
        geta("learning_rate", c.align.learning_rate);
        geta("emd_points", c.align.emd_points);
        geta("max_normal_offset", c.align.max_normal_offset);
        geta("converged_chamfer", c.align.converged_chamfer);
    }
    get("appearance_samples", c.appearance_samples);
    get("train_fraction", c.train_fraction);
    get("checkpoint_every", c.checkpoint_every);
    get("auction_max_bids", c.auction_max_bids);
    get("lbs_detach_iterations", c.lbs_detach_iterations);
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void TrainConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << to_json() << "\n";
}

PoseSplit split_poses(std::size_t pose_count, double train_fraction) {
    PoseSplit split;
    split.train.push_back(0);
    if (pose_count <= 1) return split;
    const std::size_t rest = pose_count - 1;
    std::size_t train_n = static_cast<std::size_t>(std::llround(train_fraction * rest));
    train_n = std::min(std::max<std::size_t>(train_n, 1), rest);
    for (std::size_t p = 1; p < pose_count; ++p) {
        if (p <= train_n) split.train.push_back(p);
        else split.held_out.push_back(p);
    }
    return split;
}

GeometryTrainResult train_geometry(const SyntheticSubject& subject,
                                   const std::vector<std::size_t>& train_poses,
                                   const TrainConfig& config,
                                   const std::filesystem::path* out_dir) {
    config.validate();
    if (train_poses.size() < 2) throw Error("train_geometry: need at least 2 training poses");
    using clock = std::chrono::steady_clock;
    const auto start_time = clock::now();

    Rng rng(config.seed);
    DeformationModel model = DeformationModel::init(subject.skeleton, subject.template_pose,
                                                    subject.params.expression_dim, config.net, rng);

    AdamState adam_delta(config.lr_deltanet);
    AdamState adam_lbs(config.lr_lbsnet);
    const auto delta_params = model.deltanet_parameters();
    const auto lbs_params = model.lbsnet_parameters();

    AuctionConfig auction;
    auction.max_bids = config.auction_max_bids;

    const TriangleMesh& template_scan = subject.scans[0];
    const std::size_t nb = subject.skeleton.bone_count();

    GeometryTrainResult result{std::move(model), {}, {}};
    DeformationModel& m = result.model;
    std::int64_t iteration_count = 0;

    for (int epoch = 0; epoch < config.geometry_epochs; ++epoch) {
        double epoch_chamfer = 0;
        for (const std::size_t pose_idx : train_poses) {
            const auto iter_start = clock::now();
            // Fresh template and target samples each iteration.
            const OrientedPointCloud template_points =
                sample_surface(template_scan, config.samples_per_iteration, rng.next_u64());
            const OrientedPointCloud target_points =
                sample_surface(subject.scans[pose_idx], config.samples_per_iteration, rng.next_u64());

            std::vector<Vec3d> pos(template_points.size()), nrm(template_points.size());
            for (std::size_t i = 0; i < template_points.size(); ++i) {
                pos[i] = Vec3d(template_points.positions[i]);
                nrm[i] = Vec3d(template_points.normals[i]);
            }
            DeformOptions deform_options;
            deform_options.detach_weights = config.lbs_detach_iterations < 0 ||
                                            iteration_count < config.lbs_detach_iterations;
            ++iteration_count;
            DeformGraph graph = deform_graph(m, pos, nrm, subject.poses[pose_idx], deform_options);

            const std::vector<Vec3d> posed = graph.values3(graph.posed_positions);
            const std::vector<Vec3d> posed_normals = graph.values3(graph.posed_normals);
            std::vector<Vec3d> target(target_points.size()), target_normals(target_points.size());
            for (std::size_t i = 0; i < target_points.size(); ++i) {
                target[i] = Vec3d(target_points.positions[i]);
                target_normals[i] = Vec3d(target_points.normals[i]);
            }

            LossTerms terms;
            std::vector<double> posed_seed(posed.size() * 3, 0.0);
            std::vector<double> normal_seed(posed.size() * 3, 0.0);

            if (config.loss_weights.enable_chamfer) {
                const PointLoss ch = chamfer(posed, target);
                terms.chamfer = ch.value;
                for (std::size_t i = 0; i < posed.size(); ++i) {
                    posed_seed[i * 3] += config.loss_weights.chamfer * ch.grad[i].x;
                    posed_seed[i * 3 + 1] += config.loss_weights.chamfer * ch.grad[i].y;
                    posed_seed[i * 3 + 2] += config.loss_weights.chamfer * ch.grad[i].z;
                }
            }

            if (config.loss_weights.enable_emd || config.loss_weights.enable_normal) {
                const std::size_t sub = std::min(config.emd_points, posed.size());
                std::vector<Vec3d> sub_posed(posed.begin(), posed.begin() + sub);
                std::vector<Vec3d> sub_target(target.begin(), target.begin() + sub);
                const MatchResult match = emd_match(sub_posed, sub_target, auction);

                if (config.loss_weights.enable_emd) {
                    const PointLoss emd = emd_loss(match, sub_posed, sub_target);
                    terms.emd = emd.value;
                    for (std::size_t i = 0; i < sub; ++i) {
                        posed_seed[i * 3] += config.loss_weights.emd * emd.grad[i].x;
                        posed_seed[i * 3 + 1] += config.loss_weights.emd * emd.grad[i].y;
                        posed_seed[i * 3 + 2] += config.loss_weights.emd * emd.grad[i].z;
                    }
                }
                if (config.loss_weights.enable_normal) {
                    std::vector<Vec3d> sub_nd(posed_normals.begin(), posed_normals.begin() + sub);
                    std::vector<Vec3d> sub_np(sub);
                    for (std::size_t i = 0; i < sub; ++i) sub_np[i] = target_normals[i];
                    const PointLoss nl = normal_loss(sub_nd, match, sub_np);
                    terms.normal = nl.value;
                    for (std::size_t i = 0; i < sub; ++i) {
                        normal_seed[i * 3] += config.loss_weights.normal * nl.grad[i].x;
                        normal_seed[i * 3 + 1] += config.loss_weights.normal * nl.grad[i].y;
                        normal_seed[i * 3 + 2] += config.loss_weights.normal * nl.grad[i].z;
                    }
                }
            }

            // Regularization: weight field at registered template vertices
            // plus offset shrinkage on the sampled batch.
            Tape::NodeId reg_weights_node = -1;
            std::vector<double> reg_weight_seed;
            if (config.loss_weights.enable_reg) {
                const std::size_t vcount = subject.template_mesh.vertex_count();
                const std::size_t sub = std::min(config.reg_points, vcount);
                std::vector<std::uint32_t> ids(sub);
                for (auto& id : ids) id = static_cast<std::uint32_t>(rng.uniform_index(vcount));
                std::vector<Vec3d> reg_pos(sub);
                std::vector<double> ref_rows(sub * nb);
                for (std::size_t i = 0; i < sub; ++i) {
                    reg_pos[i] = Vec3d(subject.template_mesh.vertices[ids[i]]);
                    const double* row = subject.vertex_weights.row(ids[i]);
                    std::copy(row, row + nb, ref_rows.begin() + i * nb);
                }
                reg_weights_node = lbs_weights_graph(m, graph.tape, reg_pos);
                const auto& w_rows = graph.tape.value(reg_weights_node).values;

                const RegLoss reg = reg_loss(w_rows, ref_rows, nb, graph.tape.value(graph.delta).values);
                terms.reg = reg.value;
                reg_weight_seed.assign(reg.grad_weights.size(), 0.0);
                for (std::size_t i = 0; i < reg.grad_weights.size(); ++i)
                    reg_weight_seed[i] = config.loss_weights.reg * reg.grad_weights[i];

                std::vector<double> delta_seed(reg.grad_offsets.size());
                for (std::size_t i = 0; i < delta_seed.size(); ++i)
                    delta_seed[i] = config.loss_weights.reg * reg.grad_offsets[i];
                graph.tape.seed(graph.delta, delta_seed);
            }

            const double total = total_loss(terms, config.loss_weights);
            if (!std::isfinite(total))
                throw Error("train_geometry: non-finite loss at epoch " + std::to_string(epoch) +
                            ", pose " + std::to_string(pose_idx) + " (chamfer " +
                            std::to_string(terms.chamfer) + ", emd " + std::to_string(terms.emd) + ")");

            m.zero_grad();
            graph.tape.seed(graph.posed_positions, posed_seed);
            graph.tape.seed(graph.posed_normals, normal_seed);
            if (reg_weights_node >= 0) graph.tape.seed(reg_weights_node, reg_weight_seed);
            graph.tape.backward();

            adam_delta.step(delta_params);
            adam_lbs.step(lbs_params);

            epoch_chamfer += terms.chamfer;
            result.log.push_back({epoch, pose_idx, terms.chamfer, terms.emd, terms.normal, terms.reg,
                                  total,
                                  std::chrono::duration<double>(clock::now() - iter_start).count()});
        }
        result.epoch_chamfer.push_back(epoch_chamfer / static_cast<double>(train_poses.size()));

        if (out_dir && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
            Checkpoint ck;
            m.save(ck);
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.spav", epoch + 1);
            ck.write(*out_dir / name);
        }
    }
    (void)start_time;
    return result;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "epoch,pose,chamfer,emd,normal,reg,total,seconds\n";
    char line[256];
    for (const auto& row : log) {
        std::snprintf(line, sizeof line, "%d,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", row.epoch, row.pose,
                      row.chamfer, row.emd, row.normal, row.reg, row.total, row.seconds);
        out << line;
    }
}

double nn_distance_variance(const OrientedPointCloud& cloud) {
    if (cloud.size() < 2) return 0;
    const KdIndex index{std::span<const Vec3f>(cloud.positions)};
    std::vector<double> dists(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto nn = index.knn(Vec3d(cloud.positions[i]), 2);  // first is the point itself
        dists[i] = nn[1].distance;
    }
    double mean = 0;
    for (double d : dists) mean += d;
    mean /= static_cast<double>(dists.size());
    double var = 0;
    for (double d : dists) var += (d - mean) * (d - mean);
    return var / static_cast<double>(dists.size());
}

void Avatar::save(Checkpoint& ck) const {
    model.save(ck);
    save_semantic(points, ck);
    if (has_appearance) appearance.save(ck);
    // Template mesh with labels rides in the checkpoint as binary PLY.
    ck.add_text("template_ply", ply_bytes(template_mesh));
}

Avatar Avatar::load(const Checkpoint& ck) {
    Avatar avatar;
    avatar.model = DeformationModel::load(ck);
    avatar.points = load_semantic(ck);
    if (ck.has("appearance.meta")) {
        avatar.appearance = AppearanceModel::load(ck);
        avatar.has_appearance = true;
    }
    avatar.template_mesh = parse_ply(ck.get_text("template_ply")).to_mesh();
    // Composite sets route points to donor templates the caller owns; only
    // single-source sets can be cached here.
    bool single_source = true;
    for (const auto s : avatar.points.source) single_source = single_source && s == 0;
    if (single_source && avatar.points.size() > 0) avatar.points.refresh_cache(avatar.template_mesh);
    return avatar;
}

}  // namespace spav
