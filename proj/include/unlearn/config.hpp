#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/augment.hpp"
#include "unlearn/data.hpp"
#include "unlearn/emn.hpp"
#include "unlearn/gan.hpp"
#include "unlearn/nn/arch.hpp"
#include "unlearn/nn/optim.hpp"
#include "unlearn/serial.hpp"
#include "unlearn/version.hpp"

namespace unlearn {

using json = nlohmann::json;

namespace detail_cfg {

// checked extraction with a dotted field path in every error message
inline void reject_unknown(const json& obj, const std::string& path,
                           const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw std::invalid_argument("config: unknown key " +
                                        (path.empty() ? key : path + "." + key));
        }
    }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: bad value at " + path + "." + key);
    }
}

} // namespace detail_cfg

/// Full declarative experiment description. Defaults follow the reference
/// training recipes: SGD momentum 0.9, lr 0.025 cosine, alpha 0.001, victim
/// epochs 90, EMN lr 0.003 with 20/10 steps, epsilon 8/255 for small images
/// and 16/255 for large ones.
struct ExperimentConfig {
    // data
    std::string data_source = "synthetic"; // or a directory tree
    std::string test_source;               // empty: synthetic sibling / "<tree>/test"
    int classes = 2;
    int per_class = 100;
    int img_c = 3, img_h = 16, img_w = 16;
    real separation = 1.0;
    real split_p = 0.5;
    std::uint64_t seed = 1;
    int patch_size = 32;
    std::string patch_table_path; // empty: built-in 25-entry table

    // model
    std::string classifier = "smallcnn";
    real classifier_scale = 1.0;
    real generator_scale = 1.0;
    real discriminator_scale = 1.0;

    // budget: epsilon 0 = auto (8/255 below 65px, 16/255 above), c 0 = auto
    real epsilon = 0.0;
    real hinge_c = 0.0;

    nn::TrainSpec pretrain;
    GanTrainSpec gan;
    EmnSpec emn;

    nn::TrainSpec victim;
    std::vector<std::string> backbones = {"resnet18"};
    real backbone_scale = 1.0;
    std::string augmentation = "none";
    bool victim_save_epoch_checkpoints = false;
    bool quantize_eval = false; // run victims on 8-bit round-tripped pixels

    nn::TrainSpec denoiser_train;
    real denoiser_scale = 1.0;

    AugParams aug;
    std::string out_root;

    ExperimentConfig() {
        pretrain.epochs = 30;
        gan.gen_train.lr = 0.025;
        gan.disc_train.lr = 0.025;
        gan.disc_train.lr_schedule = "constant";
        victim.epochs = 90;
        denoiser_train.epochs = 30;
        denoiser_train.lr = 0.01;
    }

    real resolved_epsilon() const {
        if (epsilon > 0.0) return epsilon;
        return std::max(img_h, img_w) <= 64 ? 8.0 / 255.0 : 16.0 / 255.0;
    }

    PerturbationBudget budget() const {
        return resolve_budget(resolved_epsilon(), hinge_c, img_c, img_h, img_w);
    }

    nn::ArchSpec classifier_arch() const {
        return {classifier, img_c, img_h, img_w, classes, classifier_scale};
    }
    nn::ArchSpec generator_arch() const {
        return {"generator4x4", img_c, img_h, img_w, 0, generator_scale};
    }
    nn::ArchSpec discriminator_arch() const {
        return {"discriminator4", img_c, img_h, img_w, 0, discriminator_scale};
    }
    nn::ArchSpec backbone_arch(const std::string& id) const {
        return {id, img_c, img_h, img_w, classes, backbone_scale};
    }

    void validate() const {
        if (classes < 2) throw std::invalid_argument("config: data.classes must be >= 2");
        if (per_class < 1) throw std::invalid_argument("config: data.per_class must be >= 1");
        if (img_c < 1 || img_h < 1 || img_w < 1)
            throw std::invalid_argument("config: data.image_size must be positive");
        if (split_p < 0.0 || split_p > 1.0)
            throw std::invalid_argument("config: data.split_p must be in [0,1]");
        if (separation <= 0.0) throw std::invalid_argument("config: data.separation must be > 0");
        if (patch_size < 0) throw std::invalid_argument("config: data.patch_size must be >= 0");
        pretrain.validate();
        gan.validate();
        emn.validate();
        victim.validate();
        denoiser_train.validate();
        if (!nn::is_classifier_arch(classifier))
            throw std::invalid_argument("config: model.classifier must be a classifier arch");
        for (const auto& b : backbones) {
            if (!nn::is_classifier_arch(b))
                throw std::invalid_argument("config: victim.backbones entry '" + b +
                                            "' is not a classifier arch");
        }
        const auto& names = augmentation_names();
        if (std::find(names.begin(), names.end(), augmentation) == names.end())
            throw std::invalid_argument("config: victim.augmentation '" + augmentation +
                                        "' unknown");
        if (epsilon < 0.0 || epsilon > 1.0)
            throw std::invalid_argument("config: budget.epsilon must be in [0,1]");
    }

    std::string canonical_json() const;
    std::string digest() const { return digest_bytes(canonical_json()); }

    static ExperimentConfig from_json(const json& j);
    static ExperimentConfig from_file(const std::string& path);
};

namespace detail_cfg {

// callers reject unknown keys (their sections may carry extra fields)
inline void parse_trainspec(const json& j, const std::string& path, nn::TrainSpec& spec) {
    spec.lr = get_or(j, path, "lr", spec.lr);
    spec.momentum = get_or(j, path, "momentum", spec.momentum);
    spec.lr_schedule = get_or<std::string>(j, path, "schedule", spec.lr_schedule);
    if (spec.lr_schedule == "cosine") spec.lr_schedule = "cosine_no_restart";
    spec.epochs = get_or(j, path, "epochs", spec.epochs);
    spec.batch_size = get_or(j, path, "batch_size", spec.batch_size);
}

} // namespace detail_cfg

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
    using namespace detail_cfg;
    ExperimentConfig c;
    reject_unknown(j, "", {"version", "data", "model", "budget", "pretrain", "gan", "emn",
                           "victim", "denoiser", "augment", "outputs"});
    const int version = get_or(j, "", "version", kConfigVersion);
    if (version != kConfigVersion) {
        throw std::invalid_argument("config: unsupported version " + std::to_string(version));
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, "data",
                       {"source", "test_source", "classes", "per_class", "image_size",
                        "separation", "split_p", "seed", "patch_size", "patch_table"});
        c.data_source = get_or<std::string>(d, "data", "source", c.data_source);
        c.test_source = get_or<std::string>(d, "data", "test_source", c.test_source);
        c.classes = get_or(d, "data", "classes", c.classes);
        c.per_class = get_or(d, "data", "per_class", c.per_class);
        if (d.contains("image_size")) {
            const auto v = d.at("image_size").get<std::vector<int>>();
            if (v.size() != 3) throw std::invalid_argument("config: data.image_size must be [c,h,w]");
            c.img_c = v[0];
            c.img_h = v[1];
            c.img_w = v[2];
        }
        c.separation = get_or(d, "data", "separation", c.separation);
        c.split_p = get_or(d, "data", "split_p", c.split_p);
        c.seed = get_or<std::uint64_t>(d, "data", "seed", c.seed);
        c.patch_size = get_or(d, "data", "patch_size", c.patch_size);
        c.patch_table_path = get_or<std::string>(d, "data", "patch_table", c.patch_table_path);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, "model",
                       {"classifier", "classifier_scale", "generator_scale", "discriminator_scale"});
        c.classifier = get_or<std::string>(m, "model", "classifier", c.classifier);
        c.classifier_scale = get_or(m, "model", "classifier_scale", c.classifier_scale);
        c.generator_scale = get_or(m, "model", "generator_scale", c.generator_scale);
        c.discriminator_scale = get_or(m, "model", "discriminator_scale", c.discriminator_scale);
    }
    if (j.contains("budget")) {
        const auto& b = j.at("budget");
        reject_unknown(b, "budget", {"epsilon", "c"});
        c.epsilon = get_or(b, "budget", "epsilon", c.epsilon);
        c.hinge_c = get_or(b, "budget", "c", c.hinge_c);
    }
    if (j.contains("pretrain")) {
        reject_unknown(j.at("pretrain"), "pretrain", {"lr", "momentum", "schedule", "epochs", "batch_size"});
        parse_trainspec(j.at("pretrain"), "pretrain", c.pretrain);
    }
    if (j.contains("gan")) {
        const auto& g = j.at("gan");
        reject_unknown(g, "gan",
                       {"lr", "disc_lr", "momentum", "alpha", "epochs", "batch_size",
                        "generator_adversarial_term"});
        c.gan.gen_train.lr = get_or(g, "gan", "lr", c.gan.gen_train.lr);
        c.gan.disc_train.lr = get_or(g, "gan", "disc_lr", c.gan.disc_train.lr);
        c.gan.gen_train.momentum = get_or(g, "gan", "momentum", c.gan.gen_train.momentum);
        c.gan.disc_train.momentum = c.gan.gen_train.momentum;
        c.gan.alpha = get_or(g, "gan", "alpha", c.gan.alpha);
        c.gan.epochs = get_or(g, "gan", "epochs", c.gan.epochs);
        c.gan.gen_train.batch_size = get_or(g, "gan", "batch_size", c.gan.gen_train.batch_size);
        c.gan.use_generator_adversarial_term =
            get_or(g, "gan", "generator_adversarial_term", c.gan.use_generator_adversarial_term);
    }
    if (j.contains("emn")) {
        const auto& e = j.at("emn");
        reject_unknown(e, "emn",
                       {"inner_lr", "inner_steps", "outer_lr", "outer_steps", "stop_train_error",
                        "max_rounds", "batch_size", "signed_steps"});
        c.emn.inner_lr = get_or(e, "emn", "inner_lr", c.emn.inner_lr);
        c.emn.inner_steps = get_or(e, "emn", "inner_steps", c.emn.inner_steps);
        c.emn.outer_lr = get_or(e, "emn", "outer_lr", c.emn.outer_lr);
        c.emn.outer_steps = get_or(e, "emn", "outer_steps", c.emn.outer_steps);
        c.emn.stop_train_error = get_or(e, "emn", "stop_train_error", c.emn.stop_train_error);
        c.emn.max_rounds = get_or(e, "emn", "max_rounds", c.emn.max_rounds);
        c.emn.batch_size = get_or(e, "emn", "batch_size", c.emn.batch_size);
        c.emn.signed_steps = get_or(e, "emn", "signed_steps", c.emn.signed_steps);
    }
    if (j.contains("victim")) {
        const auto& v = j.at("victim");
        reject_unknown(v, "victim",
                       {"lr", "momentum", "schedule", "epochs", "batch_size", "backbones",
                        "backbone_scale", "augmentation", "save_epoch_checkpoints", "quantize"});
        parse_trainspec(v, "victim", c.victim);
        if (v.contains("backbones")) c.backbones = v.at("backbones").get<std::vector<std::string>>();
        c.backbone_scale = get_or(v, "victim", "backbone_scale", c.backbone_scale);
        c.augmentation = get_or<std::string>(v, "victim", "augmentation", c.augmentation);
        c.victim_save_epoch_checkpoints =
            get_or(v, "victim", "save_epoch_checkpoints", c.victim_save_epoch_checkpoints);
        c.quantize_eval = get_or(v, "victim", "quantize", c.quantize_eval);
    }
    if (j.contains("denoiser")) {
        const auto& d = j.at("denoiser");
        reject_unknown(d, "denoiser", {"lr", "momentum", "schedule", "epochs", "batch_size", "scale"});
        parse_trainspec(d, "denoiser", c.denoiser_train);
        c.denoiser_scale = get_or(d, "denoiser", "scale", c.denoiser_scale);
    }
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        reject_unknown(a, "augment",
                       {"pad", "cutout", "mixup_alpha", "fa_contrast", "fa_brightness",
                        "fa_sharpness", "fa_rotate_deg"});
        c.aug.pad = get_or(a, "augment", "pad", c.aug.pad);
        c.aug.cutout_len = get_or(a, "augment", "cutout", c.aug.cutout_len);
        c.aug.mixup_alpha = get_or(a, "augment", "mixup_alpha", c.aug.mixup_alpha);
        c.aug.fa_contrast = get_or(a, "augment", "fa_contrast", c.aug.fa_contrast);
        c.aug.fa_brightness = get_or(a, "augment", "fa_brightness", c.aug.fa_brightness);
        c.aug.fa_sharpness = get_or(a, "augment", "fa_sharpness", c.aug.fa_sharpness);
        c.aug.fa_rotate_deg = get_or(a, "augment", "fa_rotate_deg", c.aug.fa_rotate_deg);
    }
    if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        reject_unknown(o, "outputs", {"root"});
        c.out_root = get_or<std::string>(o, "outputs", "root", c.out_root);
    }
    // seeds: every module stream derives from the top-level data seed unless
    // a caller overrides them after parsing
    c.pretrain.seed = derive_seed(c.seed, 1);
    c.gan.gen_train.seed = derive_seed(c.seed, 2);
    c.gan.disc_train.seed = derive_seed(c.seed, 3);
    c.emn.seed = derive_seed(c.seed, 4);
    c.victim.seed = derive_seed(c.seed, 5);
    c.denoiser_train.seed = derive_seed(c.seed, 6);
    c.gan.epsilon = c.resolved_epsilon();
    c.gan.c = c.hinge_c;
    c.emn.epsilon = c.resolved_epsilon();
    c.validate();
    return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

inline std::string ExperimentConfig::canonical_json() const {
    json j;
    j["version"] = kConfigVersion;
    j["data"] = {{"source", data_source},
                 {"test_source", test_source},
                 {"classes", classes},
                 {"per_class", per_class},
                 {"image_size", {img_c, img_h, img_w}},
                 {"separation", separation},
                 {"split_p", split_p},
                 {"seed", seed},
                 {"patch_size", patch_size},
                 {"patch_table", patch_table_path}};
    j["model"] = {{"classifier", classifier},
                  {"classifier_scale", classifier_scale},
                  {"generator_scale", generator_scale},
                  {"discriminator_scale", discriminator_scale}};
    j["budget"] = {{"epsilon", resolved_epsilon()}, {"c", hinge_c}};
    auto ts = [](const nn::TrainSpec& t) {
        return json{{"lr", t.lr},
                    {"momentum", t.momentum},
                    {"schedule", t.lr_schedule},
                    {"epochs", t.epochs},
                    {"batch_size", t.batch_size}};
    };
    j["pretrain"] = ts(pretrain);
    j["gan"] = {{"lr", gan.gen_train.lr},
                {"disc_lr", gan.disc_train.lr},
                {"momentum", gan.gen_train.momentum},
                {"alpha", gan.alpha},
                {"epochs", gan.epochs},
                {"batch_size", gan.gen_train.batch_size},
                {"generator_adversarial_term", gan.use_generator_adversarial_term}};
    j["emn"] = {{"inner_lr", emn.inner_lr},
                {"inner_steps", emn.inner_steps},
                {"outer_lr", emn.outer_lr},
                {"outer_steps", emn.outer_steps},
                {"stop_train_error", emn.stop_train_error},
                {"max_rounds", emn.max_rounds},
                {"batch_size", emn.batch_size},
                {"signed_steps", emn.signed_steps}};
    json v = ts(victim);
    v["backbones"] = backbones;
    v["backbone_scale"] = backbone_scale;
    v["augmentation"] = augmentation;
    v["save_epoch_checkpoints"] = victim_save_epoch_checkpoints;
    v["quantize"] = quantize_eval;
    j["victim"] = v;
    json dn = ts(denoiser_train);
    dn["scale"] = denoiser_scale;
    j["denoiser"] = dn;
    j["augment"] = {{"pad", aug.pad},
                    {"cutout", aug.cutout_len},
                    {"mixup_alpha", aug.mixup_alpha},
                    {"fa_contrast", aug.fa_contrast},
                    {"fa_brightness", aug.fa_brightness},
                    {"fa_sharpness", aug.fa_sharpness},
                    {"fa_rotate_deg", aug.fa_rotate_deg}};
    j["outputs"] = {{"root", out_root}};
    return j.dump(2);
}

} // namespace unlearn
