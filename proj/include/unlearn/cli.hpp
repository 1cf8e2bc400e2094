#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unlearn/config.hpp"
#include "unlearn/diagnostics.hpp"
#include "unlearn/emn.hpp"
#include "unlearn/encrypt.hpp"
#include "unlearn/gan.hpp"
#include "unlearn/image_io.hpp"
#include "unlearn/nn/checkpoint.hpp"
#include "unlearn/nn/train.hpp"
#include "unlearn/results.hpp"
#include "unlearn/version.hpp"

namespace unlearn::cli {

namespace fs = std::filesystem;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

namespace detail_cli {

inline std::string out_root(const ExperimentConfig& cfg, const CommonOpts& opts) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (!cfg.out_root.empty()) return cfg.out_root;
    if (const char* env = std::getenv("UNLEARN_OUT")) return env;
    return "runs";
}

/// Creates runs/<command>-<config digest prefix>-s<seed>[-N]; a rerun of the
/// same config gets a fresh numbered directory.
inline fs::path make_run_dir(const std::string& root, const std::string& command,
                             const ExperimentConfig& cfg) {
    const std::string base = command + "-" + cfg.digest().substr(0, 8) + "-s" +
                             std::to_string(cfg.seed);
    fs::create_directories(root);
    fs::path dir = fs::path(root) / base;
    for (int n = 2; fs::exists(dir); ++n) dir = fs::path(root) / (base + "-" + std::to_string(n));
    fs::create_directories(dir);
    return dir;
}

struct Manifest {
    std::string command;
    ExperimentConfig cfg;
    std::map<std::string, std::string> input_digests;
    std::vector<std::string> outputs;
    nlohmann::json extra;

    void write(const fs::path& dir) const {
        nlohmann::json j;
        j["tool_version"] = kVersion;
        j["command"] = command;
        j["config"] = nlohmann::json::parse(cfg.canonical_json());
        j["config_digest"] = cfg.digest();
        j["seed"] = cfg.seed;
        j["inputs"] = input_digests;
        j["outputs"] = outputs;
        if (!extra.is_null()) j["extra"] = extra;
        std::ofstream f(dir / "manifest.json");
        f << j.dump(2) << "\n";
    }
};

inline Dataset load_train_pool(const ExperimentConfig& cfg) {
    if (cfg.data_source == "synthetic") {
        return make_synthetic(cfg.classes, cfg.per_class, cfg.img_c, cfg.img_h, cfg.img_w,
                              cfg.separation, cfg.seed);
    }
    return load_dataset(cfg.data_source, cfg.img_h, cfg.img_w);
}

inline Dataset load_test_pool(const ExperimentConfig& cfg) {
    if (!cfg.test_source.empty() && cfg.test_source != "synthetic") {
        return load_dataset(cfg.test_source, cfg.img_h, cfg.img_w);
    }
    if (cfg.data_source == "synthetic" || cfg.test_source == "synthetic") {
        return make_synthetic(cfg.classes, cfg.per_class, cfg.img_c, cfg.img_h, cfg.img_w,
                              cfg.separation, derive_seed(cfg.seed, 0x7e57ULL));
    }
    const fs::path guess = fs::path(cfg.data_source).parent_path() / "test";
    if (fs::is_directory(guess)) return load_dataset(guess.string(), cfg.img_h, cfg.img_w);
    throw std::invalid_argument("config: no test_source given and no sibling test/ directory");
}

inline void check_generator_shape(const nn::ModelHandle& gen, const Dataset& ds) {
    if (!ds.items.empty() &&
        (gen.spec.in_c != ds.channels() || gen.spec.in_h != ds.height() ||
         gen.spec.in_w != ds.width())) {
        throw std::invalid_argument(
            "generator checkpoint expects (" + std::to_string(gen.spec.in_c) + "," +
            std::to_string(gen.spec.in_h) + "," + std::to_string(gen.spec.in_w) +
            ") but the data is (" + std::to_string(ds.channels()) + "," +
            std::to_string(ds.height()) + "," + std::to_string(ds.width()) + ")");
    }
}

inline PatchTable patch_table_for(const ExperimentConfig& cfg) {
    PatchTable t = cfg.patch_table_path.empty()
                       ? default_patch_table(cfg.patch_size)
                       : load_patch_table(cfg.patch_table_path, cfg.patch_size);
    return t;
}

} // namespace detail_cli

inline int cmd_pretrain(const ExperimentConfig& cfg, const CommonOpts& opts) {
    using namespace detail_cli;
    const Dataset train = load_train_pool(cfg);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "pretrain", cfg);
    nn::FitCurves curves;
    nn::ModelHandle model = nn::pretrain_classifier(train, cfg.classifier_arch(), cfg.pretrain,
                                                    &curves);
    const std::string ckpt = (dir / "classifier.ckpt").string();
    nn::save_checkpoint(model, ckpt);
    {
        std::ofstream f(dir / "curves.jsonl");
        for (std::size_t e = 0; e < curves.train_acc.size(); ++e) {
            f << nlohmann::json{{"epoch", e + 1},
                                {"train_acc", curves.train_acc[e]},
                                {"train_loss", curves.train_loss[e]}}
                     .dump()
              << "\n";
        }
    }
    detail_cli::Manifest man{"pretrain", cfg, {}, {"classifier.ckpt", "curves.jsonl"}, {}};
    man.extra = {{"classifier_digest", digest_file(ckpt)},
                 {"final_train_acc", curves.train_acc.empty() ? 0.0 : curves.train_acc.back()}};
    man.write(dir);
    std::cout << "pretrained " << cfg.classifier << " -> " << ckpt << "\n";
    return 0;
}

inline int cmd_train_gan(const ExperimentConfig& cfg, const CommonOpts& opts,
                         const std::string& classifier_path) {
    using namespace detail_cli;
    const Dataset train = load_train_pool(cfg);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "train-gan", cfg);

    detail_cli::Manifest man{"train-gan", cfg, {}, {}, {}};
    nn::ModelHandle classifier = [&] {
        if (!classifier_path.empty()) {
            man.input_digests["classifier"] = digest_file(classifier_path);
            return nn::load_checkpoint(classifier_path);
        }
        std::cout << "no --classifier given; pretraining one first\n";
        return nn::pretrain_classifier(train, cfg.classifier_arch(), cfg.pretrain);
    }();
    if (classifier.spec.class_count != train.class_count) {
        throw std::invalid_argument("classifier checkpoint has class_count " +
                                    std::to_string(classifier.spec.class_count) +
                                    ", data has " + std::to_string(train.class_count));
    }

    const nn::ArchSpec gen_arch = cfg.generator_arch();
    const nn::ArchSpec disc_arch = cfg.discriminator_arch();
    GanResult result = train_confounder_gan(train, classifier, cfg.gan, &gen_arch, &disc_arch);

    const std::string gen_ckpt = (dir / "generator.ckpt").string();
    const std::string disc_ckpt = (dir / "discriminator.ckpt").string();
    nn::save_checkpoint(result.generator, gen_ckpt);
    nn::save_checkpoint(result.discriminator, disc_ckpt);
    {
        std::ofstream f(dir / "loss_curves.jsonl");
        for (std::size_t e = 0; e < result.curves.l_dis.size(); ++e) {
            f << nlohmann::json{{"epoch", e + 1},
                                {"l_dis", result.curves.l_dis[e]},
                                {"l_confounder", result.curves.l_confounder[e]},
                                {"l_hinge", result.curves.l_hinge[e]},
                                {"l_gen_adv", result.curves.l_gen_adv[e]}}
                     .dump()
              << "\n";
        }
    }
    man.outputs = {"generator.ckpt", "discriminator.ckpt", "loss_curves.jsonl"};
    man.extra = {{"generator_digest", digest_file(gen_ckpt)},
                 {"discriminator_digest", digest_file(disc_ckpt)},
                 {"noise_label_accuracy",
                  noise_label_accuracy(classifier, result.generator, train)}};
    man.write(dir);
    std::cout << "trained generator -> " << gen_ckpt << "\n";
    return 0;
}

inline int cmd_encrypt(const ExperimentConfig& cfg, const CommonOpts& opts,
                       const std::string& generator_path, const std::string& provenance) {
    using namespace detail_cli;
    if (generator_path.empty()) throw std::invalid_argument("encrypt: --generator is required");
    const Provenance prov = provenance_from_string(provenance);
    nn::ModelHandle gen = nn::load_checkpoint(generator_path);
    const Dataset data = load_train_pool(cfg);
    check_generator_shape(gen, data);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "encrypt", cfg);
    const Dataset enc = encrypt_dataset(gen, data, cfg.budget(), prov);
    export_dataset(enc, (dir / "images").string());

    detail_cli::Manifest man{"encrypt", cfg, {}, {"images/"}, {}};
    man.input_digests["generator"] = digest_file(generator_path);
    man.extra = {{"epsilon", cfg.budget().epsilon},
                 {"provenance", to_string(prov)},
                 {"items", enc.items.size()}};
    man.write(dir);
    std::cout << "encrypted " << enc.items.size() << " images -> " << (dir / "images").string()
              << "\n";
    return 0;
}

inline int cmd_emn(const ExperimentConfig& cfg, const CommonOpts& opts) {
    using namespace detail_cli;
    const Dataset data = load_train_pool(cfg);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "emn", cfg);
    nn::ArchSpec src = cfg.classifier_arch();
    EmnResult result = emn_generate(data, src, cfg.emn);
    if (!result.converged) {
        std::cerr << "warning: round cap " << cfg.emn.max_rounds
                  << " reached before the stop criterion\n";
    }
    export_dataset(result.encrypted, (dir / "images").string());
    detail_cli::Manifest man{"emn", cfg, {}, {"images/"}, {}};
    man.extra = {{"converged", result.converged},
                 {"outer_rounds", result.outer_rounds},
                 {"epsilon", cfg.emn.epsilon},
                 {"items", result.encrypted.items.size()}};
    man.write(dir);
    std::cout << "emn-encrypted " << result.encrypted.items.size() << " images -> "
              << (dir / "images").string() << "\n";
    return 0;
}

inline int cmd_patch(const ExperimentConfig& cfg, const CommonOpts& opts) {
    using namespace detail_cli;
    const Dataset data = load_train_pool(cfg);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "patch", cfg);
    const Dataset patched = apply_class_patch(data, patch_table_for(cfg));
    export_dataset(patched, (dir / "images").string());
    detail_cli::Manifest man{"patch", cfg, {}, {"images/"}, {}};
    man.extra = {{"patch_size", cfg.patch_size}, {"items", patched.items.size()}};
    man.write(dir);
    std::cout << "patched " << patched.items.size() << " images -> " << (dir / "images").string()
              << "\n";
    return 0;
}

inline int cmd_classnoise(const ExperimentConfig& cfg, const CommonOpts& opts) {
    using namespace detail_cli;
    const Dataset data = load_train_pool(cfg);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "classnoise", cfg);
    const Dataset noised =
        apply_class_noise(data, cfg.budget().epsilon, derive_seed(cfg.seed, 0xc1a55ULL));
    export_dataset(noised, (dir / "images").string());
    detail_cli::Manifest man{"classnoise", cfg, {}, {"images/"}, {}};
    man.extra = {{"epsilon", cfg.budget().epsilon}, {"items", noised.items.size()}};
    man.write(dir);
    std::cout << "class-noised " << noised.items.size() << " images -> "
              << (dir / "images").string() << "\n";
    return 0;
}

/// Victim-training protocol on the configured data: always a natural
/// baseline; with a generator also 100% in-distribution encryption plus the
/// p / (1-p) mixtures against natural and out-of-distribution pools.
inline int cmd_eval(const ExperimentConfig& cfg, const CommonOpts& opts,
                    const std::string& generator_path, std::optional<real> p_override,
                    const std::string& backbone_override, const std::string& aug_override) {
    using namespace detail_cli;
    ExperimentConfig c = cfg;
    if (p_override) c.split_p = *p_override;
    if (!backbone_override.empty()) c.backbones = {backbone_override};
    if (!aug_override.empty()) c.augmentation = aug_override;
    c.validate();

    const Dataset train = load_train_pool(c);
    const Dataset test = load_test_pool(c);
    const fs::path dir = make_run_dir(out_root(c, opts), "eval", c);

    std::vector<std::pair<std::string, Dataset>> train_sets;
    auto maybe_quantize = [&](Dataset ds) { return c.quantize_eval ? quantize_dataset(ds) : ds; };
    train_sets.emplace_back("natural", maybe_quantize(train));

    detail_cli::Manifest man{"eval", c, {}, {}, {}};
    if (!generator_path.empty()) {
        nn::ModelHandle gen = nn::load_checkpoint(generator_path);
        check_generator_shape(gen, train);
        man.input_digests["generator"] = digest_file(generator_path);
        const PerturbationBudget bud = c.budget();
        train_sets.emplace_back(
            "100% in_enc",
            maybe_quantize(encrypt_dataset(gen, train, bud, Provenance::in_encrypted)));
        if (c.split_p > 0.0 && c.split_p < 1.0) {
            auto [in_pool, out_pool] = split_in_out(train, c.split_p, derive_seed(c.seed, 0x5911ULL));
            const Dataset in_enc = encrypt_dataset(gen, in_pool, bud, Provenance::in_encrypted);
            const Dataset out_enc = encrypt_dataset(gen, out_pool, bud, Provenance::out_encrypted);
            const std::string pstr = std::to_string(static_cast<int>(c.split_p * 100 + 0.5));
            MixtureSpec nat_mix{{{&in_enc, 1.0}, {&out_pool, 1.0}},
                                pstr + "% in_enc + " + std::to_string(100 - static_cast<int>(
                                                           c.split_p * 100 + 0.5)) + "% natural"};
            MixtureSpec ood_mix{{{&in_enc, 1.0}, {&out_enc, 1.0}},
                                pstr + "% in_enc + " + std::to_string(100 - static_cast<int>(
                                                           c.split_p * 100 + 0.5)) + "% out_enc"};
            train_sets.emplace_back(nat_mix.description,
                                    maybe_quantize(compose_training_set(nat_mix,
                                                                        derive_seed(c.seed, 21))));
            train_sets.emplace_back(ood_mix.description,
                                    maybe_quantize(compose_training_set(ood_mix,
                                                                        derive_seed(c.seed, 22))));
        }
    }

    std::vector<RunRecord> records;
    int run_no = 0;
    for (const auto& backbone : c.backbones) {
        for (const auto& [label, ds] : train_sets) {
            nn::TrainSpec vspec = c.victim;
            nn::ModelHandle victim;
            std::string ckpt_dir;
            if (c.victim_save_epoch_checkpoints) {
                const fs::path vdir =
                    dir / ("victim_" + backbone + "_" + std::to_string(run_no));
                fs::create_directories(vdir);
                ckpt_dir = vdir.string();
            }
            RunRecord rec = train_victim(ds, test, c.backbone_arch(backbone), vspec,
                                         c.augmentation, c.aug, &victim, ckpt_dir);
            rec.run_id = dir.filename().string() + "#" + std::to_string(run_no++);
            rec.mixture = label;
            records.push_back(rec);
            std::cout << backbone << " on [" << label << "]: final test acc " << rec.final_test_acc
                      << (rec.diverged ? " (diverged)" : "") << "\n";
        }
    }
    append_records((dir / "results.jsonl").string(), records);
    man.outputs = {"results.jsonl"};
    man.write(dir);
    std::cout << "wrote " << records.size() << " run records -> "
              << (dir / "results.jsonl").string() << "\n";
    return 0;
}

inline int cmd_diagnose(const ExperimentConfig& cfg, const CommonOpts& opts,
                        const std::string& generator_path, const std::string& victim_path,
                        std::optional<int> epoch) {
    using namespace detail_cli;
    if (generator_path.empty() || victim_path.empty()) {
        throw std::invalid_argument("diagnose: --generator and --victim are required");
    }
    std::string victim_file = victim_path;
    if (fs::is_directory(victim_path)) {
        if (!epoch) throw std::invalid_argument("diagnose: --epoch required with a victim directory");
        victim_file = (fs::path(victim_path) / ("epoch_" + std::to_string(*epoch) + ".ckpt"))
                          .string();
    }
    nn::ModelHandle gen = nn::load_checkpoint(generator_path);
    nn::ModelHandle victim = nn::load_checkpoint(victim_file);
    const Dataset data = load_train_pool(cfg);
    check_generator_shape(gen, data);
    const PerturbationBudget bud = cfg.budget();

    const real car_value = car(victim, data, gen, bud);
    const GcrResult gcr_value = gcr(victim, data, gen, bud);
    const fs::path dir = make_run_dir(out_root(cfg, opts), "diagnose", cfg);
    nlohmann::json report = {{"car", car_value},
                             {"gcr", gcr_value.value},
                             {"n", gcr_value.n},
                             {"excluded", gcr_value.excluded},
                             {"victim_epoch", victim.meta.epoch},
                             {"victim_digest", digest_file(victim_file)},
                             {"generator_digest", digest_file(generator_path)}};
    {
        std::ofstream f(dir / "diagnostics.json");
        f << report.dump(2) << "\n";
    }
    const Tensor grid = noise_triptych(gen, data, bud, std::min<int>(8, static_cast<int>(data.items.size())));
    save_image_png((dir / "triptych.png").string(), grid);

    detail_cli::Manifest man{"diagnose", cfg, {}, {"diagnostics.json", "triptych.png"}, {}};
    man.input_digests["generator"] = digest_file(generator_path);
    man.input_digests["victim"] = digest_file(victim_file);
    man.extra = report;
    man.write(dir);
    std::cout << "car " << car_value << " gcr " << gcr_value.value << " (excluded "
              << gcr_value.excluded << "/" << gcr_value.n << ") -> "
              << (dir / "diagnostics.json").string() << "\n";
    return 0;
}

inline int cmd_report(const std::string& results_path, const std::string& out_dir) {
    std::vector<RunRecord> records = read_records(results_path);
    fs::create_directories(out_dir.empty() ? "." : out_dir);
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    const std::string md = render_markdown(records);
    {
        std::ofstream f(dir / "report.md");
        f << md;
    }
    {
        std::ofstream f(dir / "report.csv");
        f << render_csv(records);
    }
    if (!records.empty()) plot_curves_png(records, (dir / "curves.png").string());
    std::cout << md;
    std::cout << "report -> " << (dir / "report.md").string() << "\n";
    return 0;
}

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 2 configuration/validation errors (with the offending field), 1 runtime
/// failures.
inline int run(const std::vector<std::string>& args) {
    CLI::App app{"unlearn: confounder-noise data encryption toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string generator_path, classifier_path, victim_path, provenance = "in_encrypted";
    std::optional<real> p_override;
    std::optional<int> epoch;
    std::string backbone_override, aug_override;
    std::string results_path = "results.jsonl";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", opts.seed, "override data.seed");
        sub->add_option("--out", opts.out_dir, "output root (default: config, $UNLEARN_OUT, ./runs)");
    };

    CLI::App* pretrain = app.add_subcommand("pretrain", "train the source classifier");
    add_common(pretrain);
    CLI::App* traingan = app.add_subcommand("train-gan", "train the confounder-noise generator");
    add_common(traingan);
    traingan->add_option("--classifier", classifier_path, "pretrained classifier checkpoint");
    CLI::App* encrypt = app.add_subcommand("encrypt", "encrypt a dataset with a trained generator");
    add_common(encrypt);
    encrypt->add_option("--generator", generator_path, "generator checkpoint")->required();
    encrypt->add_option("--provenance", provenance, "in_encrypted|out_encrypted");
    CLI::App* emn = app.add_subcommand("emn", "error-minimizing-noise baseline encryption");
    add_common(emn);
    CLI::App* patch = app.add_subcommand("patch", "class-wise patch baseline");
    add_common(patch);
    CLI::App* classnoise = app.add_subcommand("classnoise", "class-wise noise baseline");
    add_common(classnoise);
    CLI::App* eval_cmd = app.add_subcommand("eval", "train victim models on data compositions");
    add_common(eval_cmd);
    eval_cmd->add_option("--generator", generator_path, "generator checkpoint (enables encrypted runs)");
    eval_cmd->add_option("--p", p_override, "in-distribution fraction for mixtures");
    eval_cmd->add_option("--backbone", backbone_override, "restrict to one victim backbone");
    eval_cmd->add_option("--augmentation", aug_override, "augmentation name");
    CLI::App* diagnose = app.add_subcommand("diagnose", "confidence/gradient diagnostics");
    add_common(diagnose);
    diagnose->add_option("--generator", generator_path, "generator checkpoint")->required();
    diagnose->add_option("--victim", victim_path, "victim checkpoint (or directory)")->required();
    diagnose->add_option("--epoch", epoch, "epoch selector when --victim is a directory");
    CLI::App* report = app.add_subcommand("report", "render results tables and plots");
    report->add_option("--results", results_path, "results.jsonl path");
    report->add_option("--out", opts.out_dir, "output directory");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::cout << app.help();
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (report->parsed()) return cmd_report(results_path, opts.out_dir);
        ExperimentConfig cfg = ExperimentConfig::from_file(opts.config_path);
        if (opts.seed) {
            nlohmann::json j = nlohmann::json::parse(cfg.canonical_json());
            j["data"]["seed"] = *opts.seed;
            cfg = ExperimentConfig::from_json(j);
        }
        if (pretrain->parsed()) return cmd_pretrain(cfg, opts);
        if (traingan->parsed()) return cmd_train_gan(cfg, opts, classifier_path);
        if (encrypt->parsed()) return cmd_encrypt(cfg, opts, generator_path, provenance);
        if (emn->parsed()) return cmd_emn(cfg, opts);
        if (patch->parsed()) return cmd_patch(cfg, opts);
        if (classnoise->parsed()) return cmd_classnoise(cfg, opts);
        if (eval_cmd->parsed())
            return cmd_eval(cfg, opts, generator_path, p_override, backbone_override, aug_override);
        if (diagnose->parsed()) return cmd_diagnose(cfg, opts, generator_path, victim_path, epoch);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace unlearn::cli
