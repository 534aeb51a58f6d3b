#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "tailor/tailor.hpp"

namespace fs = std::filesystem;
using namespace tailor;

namespace {

void progress(const std::string& line) { std::cerr << line << std::endl; }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UnwritableOutputDir("cannot create " + dir.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw UnwritableOutputDir("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UnwritableOutputDir("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// config file first, then --set pairs, then the dedicated flags
struct ConfigFlags {
    std::string file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> recon_iters;
    std::optional<int> adv_iters;
    std::optional<double> lr;
    std::optional<int> batch;
    bool skip_recon = false;
    bool rgb_input = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", file, "key = value config file");
        cmd->add_option("--set", sets, "override one config key, KEY=VALUE (repeatable)");
        cmd->add_option("--seed", seed, "training seed");
        cmd->add_option("--recon-iters", recon_iters, "reconstruction-stage iterations");
        cmd->add_option("--adv-iters", adv_iters, "adversarial-stage iterations");
        cmd->add_option("--lr", lr, "Adam learning rate");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_flag("--skip-recon", skip_recon, "start the adversarial stage from fresh weights");
        cmd->add_flag("--rgb-input", rgb_input, "feed target RGB pixels instead of the edge map");
    }

    TrainConfig build() const {
        TrainConfig c;
        if (!file.empty()) {
            for (const auto& [k, v] : read_config_file(file)) apply_setting(c, k, v);
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw InvalidConfig("--set expects KEY=VALUE, got '" + s + "'");
            apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
        }
        if (seed) c.seed = *seed;
        if (recon_iters) c.recon_iters = *recon_iters;
        if (adv_iters) c.adv_iters = *adv_iters;
        if (lr) c.learning_rate = *lr;
        if (batch) c.batch_size = *batch;
        if (skip_recon) c.skip_recon_stage = true;
        if (rgb_input) c.rgb_instead_of_edge = true;
        c.finalize();
        return c;
    }
};

LossObserver progress_observer(int every) {
    return [every](const LossRow& r) {
        if (r.step % every != 0 && r.step != 1) return;
        std::ostringstream os;
        os.imbue(std::locale::classic());
        os << "[" << to_string(r.stage) << " " << r.net << "] step " << r.step << " total " << r.total;
        progress(os.str());
    };
}

std::unique_ptr<AttributeClassifier> make_classifier(const std::string& name, const std::string& dir, int class_count) {
    const auto b = parse_classifier_backend(name);
    if (!b) throw InvalidConfig("unknown classifier '" + name + "'; expected synthetic_oracle or trained_cnn");
    if (*b == ClassifierBackend::synthetic_oracle) return std::make_unique<SyntheticOracle>(class_count);
    if (dir.empty()) throw ClassifierUnavailable("trained_cnn needs --classifier-dir");
    return std::make_unique<TrainedCnnClassifier>(TrainedCnnClassifier::load(dir));
}

Checkpoint<float> load_adversarial(const fs::path& dir) {
    auto ckpt = load_checkpoint<float>(dir);
    if (ckpt.stage != Stage::adversarial) {
        throw StageMismatch(std::string("this command needs an adversarial-stage checkpoint; ") + dir.string() +
                            " is a " + to_string(ckpt.stage) + "-stage checkpoint");
    }
    return ckpt;
}

std::optional<RegionBox> parse_region(const std::string& s) {
    if (s.empty()) return std::nullopt;
    RegionBox r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    in >> r.x0 >> c1 >> r.y0 >> c2 >> r.x1 >> c3 >> r.y1;
    if (in.fail() || c1 != ',' || c2 != ',' || c3 != ',') throw InvalidRegion("--region expects x0,y0,x1,y1");
    return r;
}

std::atomic<httplib::Server*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tailor: garment attribute editing (train, edit, evaluate, serve)"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "print help for every subcommand");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a procedural collar dataset");
    std::string synth_out;
    SyntheticSpec spec;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output directory (images/ + manifest.jsonl)")->required();
    synth->add_option("--n", spec.n_images, "number of images")->capture_default_str();
    synth->add_option("--size", spec.image_size, "image side in pixels")->capture_default_str();
    synth->add_option("--shapes", spec.n_collar_shapes, "number of collar types (1..12)")->capture_default_str();
    synth->add_option("--palette", spec.palette_size, "number of garment colours")->capture_default_str();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "two-stage training: reconstruction then adversarial");
    std::string train_data, train_out;
    ConfigFlags train_cfg;
    train->add_option("--data", train_data, "manifest.jsonl of the training set")->required();
    train->add_option("--out", train_out, "run directory (recon/, adversarial/, losses.csv)")->required();
    train_cfg.add_to(train);

    // edit
    auto* edit = app.add_subcommand("edit", "edit one reference garment toward a target attribute");
    std::string edit_ckpt, edit_ref, edit_target, edit_edge, edit_out, edit_region;
    edit->add_option("--ckpt", edit_ckpt, "adversarial-stage checkpoint directory")->required();
    edit->add_option("--reference", edit_ref, "reference garment PNG")->required();
    auto* t_opt = edit->add_option("--target", edit_target, "target garment PNG (its edge map is extracted)");
    auto* e_opt = edit->add_option("--target-edge", edit_edge, "target edge map PNG (single channel)");
    t_opt->excludes(e_opt);
    e_opt->excludes(t_opt);
    edit->add_option("--region", edit_region, "edit rectangle x0,y0,x1,y1 in reference pixels (default top-centre box)");
    edit->add_option("--out", edit_out, "output directory (edited.png, mask.png, edge.png)")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a test manifest");
    std::string eval_ckpt, eval_data, eval_classifier = "synthetic_oracle", eval_classifier_dir, eval_out;
    std::optional<std::uint64_t> eval_seed;
    eval->add_option("--ckpt", eval_ckpt, "adversarial-stage checkpoint directory")->required();
    eval->add_option("--data", eval_data, "manifest.jsonl of the test set")->required();
    eval->add_option("--classifier", eval_classifier, "synthetic_oracle or trained_cnn")->capture_default_str();
    eval->add_option("--classifier-dir", eval_classifier_dir, "trained_cnn checkpoint directory");
    eval->add_option("--seed", eval_seed, "target-pairing seed (default: the checkpoint's training seed)");
    eval->add_option("--out", eval_out, "directory for report.json (table goes to stdout)");

    // oneout
    auto* oneout = app.add_subcommand("oneout", "leave-one-out: train with and without a held type, edit toward it");
    std::string oo_data, oo_test, oo_out, oo_classifier = "synthetic_oracle", oo_classifier_dir;
    int oo_held = 0;
    double oo_fraction = 0.8;
    std::uint64_t oo_split_seed = 7;
    ConfigFlags oo_cfg;
    oneout->add_option("--data", oo_data, "manifest.jsonl (split into train/test unless --test is given)")->required();
    oneout->add_option("--test", oo_test, "separate test manifest");
    oneout->add_option("--held-type", oo_held, "type id left out of training")->required();
    oneout->add_option("--train-fraction", oo_fraction, "train share when splitting --data")->capture_default_str();
    oneout->add_option("--split-seed", oo_split_seed, "seed of the train/test split")->capture_default_str();
    oneout->add_option("--classifier", oo_classifier, "synthetic_oracle or trained_cnn")->capture_default_str();
    oneout->add_option("--classifier-dir", oo_classifier_dir, "trained_cnn checkpoint directory");
    oneout->add_option("--out", oo_out, "directory for report.json and losses.csv")->required();
    oo_cfg.add_to(oneout);

    // serve
    auto* serve = app.add_subcommand("serve", "run the /v1 HTTP edit service");
    std::string serve_ckpt, serve_host = "127.0.0.1", serve_classifier_dir, serve_hed;
    std::optional<int> serve_port;
    int serve_workers = 2;
    serve->add_option("--ckpt", serve_ckpt, "adversarial-stage checkpoint directory")->required();
    serve->add_option("--port", serve_port, "TCP port (default: $TAILOR_PORT, else 8080)");
    serve->add_option("--host", serve_host, "bind address")->capture_default_str();
    serve->add_option("--workers", serve_workers, "maximum concurrent forward passes")->capture_default_str();
    serve->add_option("--classifier-dir", serve_classifier_dir, "trained_cnn checkpoint used for predicted_type");
    serve->add_option("--hed-weights", serve_hed, "HED weights directory, enables edge_backend=hed_pretrained");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) {
            const auto m = generate_synthetic(spec, synth_seed, synth_out);
            progress("wrote " + std::to_string(m.size()) + " images to " + synth_out);
        } else if (*train) {
            TrainConfig cfg = train_cfg.build();
            cfg.checkpoint_dir = train_out;
            ensure_dir(train_out);
            const auto manifest = load_manifest(train_data);
            progress("training on " + std::to_string(manifest.size()) + " records, config " + config_hash(cfg));
            auto run = run_full<float>(cfg, manifest, progress_observer(cfg.log_every));
            if (run.recon) save_checkpoint(*run.recon, fs::path(train_out) / "recon");
            save_checkpoint(run.adversarial, fs::path(train_out) / "adversarial");
            write_loss_csv(fs::path(train_out) / "losses.csv", run.log);
            progress("saved " + (fs::path(train_out) / "adversarial").string());
        } else if (*edit) {
            if (edit_target.empty() == edit_edge.empty()) {
                std::cerr << "error: give exactly one of --target or --target-edge" << std::endl;
                return 2;
            }
            load_adversarial(edit_ckpt);  // stage gate with a CLI-worded message
            EditService service;
            service.load(edit_ckpt);
            EditRequest req;
            req.reference_png = read_file_bytes(edit_ref);
            if (!edit_target.empty()) req.target_png = read_file_bytes(edit_target);
            if (!edit_edge.empty()) req.edge_png = read_file_bytes(edit_edge);
            req.options.return_mask = true;
            req.options.return_edge = true;
            req.options.region = parse_region(edit_region);
            const EditResult r = service.edit(req);
            ensure_dir(edit_out);
            write_bytes(fs::path(edit_out) / "edited.png", r.edited_png);
            write_bytes(fs::path(edit_out) / "mask.png", *r.mask_png);
            write_bytes(fs::path(edit_out) / "edge.png", *r.edge_png);
            progress("wrote edited.png, mask.png, edge.png to " + edit_out);
        } else if (*eval) {
            const auto ckpt = load_adversarial(eval_ckpt);
            const auto test = load_manifest(eval_data);
            const auto clf = make_classifier(eval_classifier, eval_classifier_dir, test.class_count);
            EvalOptions opts;
            opts.seed = eval_seed.value_or(ckpt.config.seed);
            const auto report = evaluate(ckpt, test, *clf, opts);
            std::cout << render_table({{"model", &report}});
            if (!eval_out.empty()) {
                ensure_dir(eval_out);
                write_json(fs::path(eval_out) / "report.json", to_json(report));
            }
        } else if (*oneout) {
            const TrainConfig cfg = oo_cfg.build();
            auto data = load_manifest(oo_data);
            DatasetManifest train_set, test_set;
            if (!oo_test.empty()) {
                train_set = data;
                test_set = load_manifest(oo_test);
            } else {
                std::tie(train_set, test_set) = split_dataset(data, oo_fraction, oo_split_seed);
            }
            const auto clf = make_classifier(oo_classifier, oo_classifier_dir, data.class_count);
            ensure_dir(oo_out);
            std::vector<LossRow> log;
            auto observer = progress_observer(cfg.log_every);
            const auto reports = one_out_protocol<float>(cfg, train_set, test_set, oo_held, *clf, nullptr,
                                                         [&](const LossRow& r) {
                                                             log.push_back(r);
                                                             observer(r);
                                                         });
            std::cout << render_table({{"full", &reports.full}, {"one-out", &reports.one_out}});
            nlohmann::ordered_json j;
            j["held_type"] = reports.held_type;
            j["full"] = to_json(reports.full);
            j["one_out"] = to_json(reports.one_out);
            write_json(fs::path(oo_out) / "report.json", j);
            write_loss_csv(fs::path(oo_out) / "losses.csv", log);
        } else if (*serve) {
            load_adversarial(serve_ckpt);
            int port = 8080;
            if (serve_port) {
                port = *serve_port;
            } else if (const char* env = std::getenv("TAILOR_PORT")) {
                try {
                    port = std::stoi(env);
                } catch (const std::exception&) {
                    std::cerr << "error: TAILOR_PORT is not a number" << std::endl;
                    return 2;
                }
            }
            EditServiceOptions so;
            so.max_concurrent = serve_workers;
            so.classifier_dir = serve_classifier_dir;
            so.hed_weights = serve_hed;
            EditService service(so);
            httplib::Server server;
            bind_routes(server, service);
            if (!server.bind_to_port(serve_host, port)) throw UnwritableOutputDir("cannot bind " + serve_host + ":" + std::to_string(port));
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::thread loader([&] {
                try {
                    service.load(serve_ckpt);
                    progress("model ready");
                } catch (const std::exception& e) {
                    progress(std::string("error: model load failed: ") + e.what());
                    server.stop();
                }
            });
            progress("listening on " + serve_host + ":" + std::to_string(port));
            server.listen_after_bind();
            loader.join();
            g_server = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
