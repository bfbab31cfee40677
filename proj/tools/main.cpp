// meshrec command line: mesh hierarchy construction, spiral tables, synthetic
// data, training, evaluation, inference and gradient checking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshrec/gradcheck_suite.hpp"
#include "meshrec/meshrec.hpp"

using namespace meshrec;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        const size_t next = csv.find(',', pos);
        out.push_back(std::stoi(csv.substr(pos, next - pos)));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

// Assets the train/eval/infer commands need besides the checkpoint.
struct PipelineAssets {
    TriMesh tmpl;
    MeshHierarchy hier;
    std::vector<SpiralTable> spirals;
};

PipelineAssets load_assets(const TrainConfig& cfg) {
    if (cfg.template_path.empty() || cfg.hierarchy_path.empty())
        throw std::runtime_error("config must set template_path and hierarchy_path");
    PipelineAssets a;
    a.tmpl = load_obj(cfg.template_path);
    a.hier = load_hierarchy(cfg.hierarchy_path, a.tmpl);
    if (!cfg.spirals_path.empty())
        a.spirals = load_spirals(cfg.spirals_path);
    else
        a.spirals = precompute_spirals(a.hier, cfg.decoder.spiral_lengths);
    return a;
}

template <class Real>
int run_train(const TrainConfig& cfg) {
    PipelineAssets assets = load_assets(cfg);
    if (cfg.dataset_dir.empty()) throw std::runtime_error("config must set dataset_dir");
    const SyntheticDataset data = load_dataset(cfg.dataset_dir, assets.hier);
    Model<Real> model(cfg, std::move(assets.tmpl), std::move(assets.hier),
                      std::move(assets.spirals));
    const TrainResult res = train_model(model, data);
    for (const EpochLog& e : res.log) std::cout << epoch_log_json(e).dump() << '\n';
    if (!cfg.checkpoint_dir.empty())
        std::cout << "checkpoint written to " << cfg.checkpoint_dir << '\n';
    return 0;
}

template <class Real>
Model<Real> model_from_checkpoint(const std::string& ckpt_dir, TrainConfig& cfg_out) {
    const nlohmann::json manifest = read_manifest(ckpt_dir);
    cfg_out = train_config_from_json(manifest.at("config"));
    PipelineAssets assets = load_assets(cfg_out);
    Model<Real> model(cfg_out, std::move(assets.tmpl), std::move(assets.hier),
                      std::move(assets.spirals));
    load_checkpoint(model.store, ckpt_dir);
    return model;
}

template <class Real>
int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& regressor_path,
             const std::string& out_path) {
    TrainConfig cfg;
    Model<Real> model = model_from_checkpoint<Real>(ckpt, cfg);
    const SyntheticDataset data = load_dataset(data_dir, model.hier);
    const SparseMatrix regressor =
        load_regressor(regressor_path.empty() ? cfg.regressor_path : regressor_path);
    const EvalReport rep = evaluate_model(model, data, regressor);
    std::cout << eval_report_table(rep);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot open " + out_path);
        out << eval_report_json(rep).dump(2) << '\n';
        std::cout << "report written to " << out_path << '\n';
    }
    return 0;
}

template <class Real>
int run_infer(const std::string& ckpt, const std::string& image_path, const std::string& cam_path,
              const std::string& out_dir) {
    TrainConfig cfg;
    Model<Real> model = model_from_checkpoint<Real>(ckpt, cfg);

    Camera cam;
    {
        std::ifstream in(cam_path);
        if (!in) throw std::runtime_error("cannot open camera file " + cam_path);
        nlohmann::json j;
        in >> j;
        cam = camera_from_json(j);
    }
    const Tensor<Real> image = read_tensor<Real>(image_path);

    Tape<Real> tape(cfg.check_finite);
    const auto enc_out = model.enc.forward(tape, tape.constant(image));
    const auto dec_out = model.dec.forward(tape, enc_out.fused, cam);

    std::filesystem::create_directories(out_dir);
    nlohmann::json levels = nlohmann::json::array();
    for (int s = cfg.decoder.levels - 1; s >= 0; --s) {
        const Tensor<double> v =
            tape.value(dec_out.meshes[static_cast<size_t>(s)]).template cast<double>();
        TriMesh mesh;
        mesh.vertices = tensor_vertices(v);
        mesh.faces = model.hier.levels[static_cast<size_t>(s)].faces;
        // m1 is the finest level
        const std::string name = "m" + std::to_string(s + 1) + ".obj";
        save_obj(mesh, (std::filesystem::path(out_dir) / name).string());
        nlohmann::json verts = nlohmann::json::array();
        for (int i = 0; i < v.dim(0); ++i) verts.push_back({v(i, 0), v(i, 1), v(i, 2)});
        levels.push_back({{"level", s}, {"file", name}, {"vertices", std::move(verts)}});
    }
    std::ofstream out(std::filesystem::path(out_dir) / "meshes.json");
    out << nlohmann::json{{"levels", std::move(levels)}}.dump() << '\n';
    std::cout << "meshes written to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-to-fine hand mesh reconstruction toolkit"};
    app.require_subcommand(1);

    // hierarchy
    auto* hier_cmd = app.add_subcommand("hierarchy", "decimate a template into a mesh hierarchy");
    std::string hier_in, hier_out, hier_targets;
    hier_cmd->add_option("--in", hier_in, "template OBJ")->required();
    hier_cmd->add_option("--targets", hier_targets, "vertex counts, finest first, e.g. 778,389,195,98")
        ->required();
    hier_cmd->add_option("--out", hier_out, "output hierarchy JSON")->required();

    // spirals
    auto* spiral_cmd = app.add_subcommand("spirals", "precompute spiral orderings per level");
    std::string sp_hier, sp_mesh, sp_out, sp_lengths = "27";
    spiral_cmd->add_option("--hier", sp_hier, "hierarchy JSON")->required();
    spiral_cmd->add_option("--mesh", sp_mesh, "finest template OBJ")->required();
    spiral_cmd->add_option("--l", sp_lengths, "spiral length (single value or per-level list)");
    spiral_cmd->add_option("--out", sp_out, "output spiral JSON")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string sy_tmpl, sy_hier, sy_reg, sy_out;
    int sy_n = 8, sy_size = 64;
    uint64_t sy_seed = 1;
    synth_cmd->add_option("--template", sy_tmpl, "template OBJ")->required();
    synth_cmd->add_option("--hier", sy_hier, "hierarchy JSON")->required();
    synth_cmd->add_option("--regressor", sy_reg, "landmark regressor JSON")->required();
    synth_cmd->add_option("--n", sy_n, "sample count");
    synth_cmd->add_option("--seed", sy_seed, "RNG seed");
    synth_cmd->add_option("--image-size", sy_size, "square image side");
    synth_cmd->add_option("--out", sy_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train from a JSON config");
    std::string tr_config;
    train_cmd->add_option("--config", tr_config, "TrainConfig JSON file")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_reg, ev_out;
    eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
    eval_cmd->add_option("--regressor", ev_reg, "landmark regressor JSON");
    eval_cmd->add_option("--out", ev_out, "metrics report JSON");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "reconstruct meshes from one image tensor");
    std::string in_ckpt, in_image, in_cam, in_out;
    infer_cmd->add_option("--ckpt", in_ckpt, "checkpoint directory")->required();
    infer_cmd->add_option("--image", in_image, "input image TNSR")->required();
    infer_cmd->add_option("--camera", in_cam, "camera JSON")->required();
    infer_cmd->add_option("--out", in_out, "output directory")->required();

    // grad-check
    auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference check of all primitives");
    double gc_eps = 1e-5, gc_tol = 1e-6;
    grad_cmd->add_option("--eps", gc_eps, "central difference step");
    grad_cmd->add_option("--tol", gc_tol, "max relative error tolerance");

    // make-template
    auto* tpl_cmd = app.add_subcommand("make-template", "write a procedural template + regressor");
    std::string mt_preset = "hand", mt_mesh, mt_reg;
    int mt_landmarks = 5;
    tpl_cmd->add_option("--preset", mt_preset, "hand (778 vertices) or desk (48 vertices)");
    tpl_cmd->add_option("--out-mesh", mt_mesh, "output OBJ")->required();
    tpl_cmd->add_option("--out-regressor", mt_reg, "output regressor JSON");
    tpl_cmd->add_option("--landmarks", mt_landmarks, "regressor landmark count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*hier_cmd) {
            const TriMesh mesh = load_obj(hier_in);
            const MeshHierarchy h = build_hierarchy(mesh, parse_int_list(hier_targets));
            save_hierarchy(h, hier_out);
            std::cout << "hierarchy with " << h.level_count() << " levels written to " << hier_out
                      << '\n';
        } else if (*spiral_cmd) {
            const TriMesh mesh = load_obj(sp_mesh);
            const MeshHierarchy h = load_hierarchy(sp_hier, mesh);
            const auto tables = precompute_spirals(h, parse_int_list(sp_lengths));
            save_spirals(tables, sp_out);
            std::cout << "spiral tables written to " << sp_out << '\n';
        } else if (*synth_cmd) {
            const TriMesh tmpl = load_obj(sy_tmpl);
            const MeshHierarchy h = load_hierarchy(sy_hier, tmpl);
            const SparseMatrix reg = load_regressor(sy_reg);
            SynthConfig scfg;
            scfg.image_size = sy_size;
            const SyntheticDataset ds = generate_synthetic(sy_n, tmpl, h, reg, sy_seed, scfg);
            save_dataset(ds, tmpl, sy_out);
            std::cout << sy_n << " samples written to " << sy_out << '\n';
        } else if (*train_cmd) {
            const TrainConfig cfg = load_train_config(tr_config);
            cfg.validate();
            return cfg.dtype == "f64" ? run_train<double>(cfg) : run_train<float>(cfg);
        } else if (*eval_cmd) {
            const std::string dtype = read_manifest(ev_ckpt).at("dtype").get<std::string>();
            return dtype == "f64" ? run_eval<double>(ev_ckpt, ev_data, ev_reg, ev_out)
                                  : run_eval<float>(ev_ckpt, ev_data, ev_reg, ev_out);
        } else if (*infer_cmd) {
            const std::string dtype = read_manifest(in_ckpt).at("dtype").get<std::string>();
            return dtype == "f64" ? run_infer<double>(in_ckpt, in_image, in_cam, in_out)
                                  : run_infer<float>(in_ckpt, in_image, in_cam, in_out);
        } else if (*grad_cmd) {
            bool ok = true;
            for (const NamedGradCheck& c : run_gradient_suite(gc_eps)) {
                const bool pass = c.report.max_rel_err < gc_tol;
                ok &= pass;
                std::printf("%-16s max rel err %.3e  worst %-12s %s\n", c.op.c_str(),
                            c.report.max_rel_err, c.report.worst_param.c_str(),
                            pass ? "ok" : "FAIL");
            }
            return ok ? 0 : 1;
        } else if (*tpl_cmd) {
            TriMesh mesh;
            if (mt_preset == "hand")
                mesh = hand_template();
            else if (mt_preset == "desk")
                mesh = desk_template();
            else
                throw std::runtime_error("unknown preset '" + mt_preset + "'");
            save_obj(mesh, mt_mesh);
            std::cout << "template with " << mesh.vertex_count() << " vertices written to "
                      << mt_mesh << '\n';
            if (!mt_reg.empty()) {
                save_regressor(extreme_vertex_regressor(mesh, mt_landmarks), mt_reg);
                std::cout << "regressor written to " << mt_reg << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
