#include "racseg/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace racseg {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ParseError("config key '" + key + "': expected a number, got '" + value + "'");
    return v;
}

long to_long(const std::string& key, const std::string& value) {
    long v = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ParseError("config key '" + key + "': expected an integer, got '" + value + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ParseError("config key '" + key + "': expected true/false, got '" + value + "'");
}

const std::map<std::string, PrimitiveKind> kKindNames = {
    {"floor", PrimitiveKind::Floor},   {"wall", PrimitiveKind::Wall},
    {"box", PrimitiveKind::Box},       {"sphere", PrimitiveKind::Sphere},
    {"cylinder", PrimitiveKind::Cylinder},
};

std::string kind_name(PrimitiveKind kind) {
    for (const auto& [name, k] : kKindNames)
        if (k == kind) return name;
    return "box";
}

/// "kind:r,g,b:scale" entries separated by ';'.
std::vector<ClassSpec> parse_palette(const std::string& value) {
    std::vector<ClassSpec> palette;
    std::istringstream entries(value);
    std::string entry;
    while (std::getline(entries, entry, ';')) {
        entry = trim(entry);
        if (entry.empty()) continue;
        std::istringstream parts(entry);
        std::string kind_str, color_str, scale_str;
        std::getline(parts, kind_str, ':');
        std::getline(parts, color_str, ':');
        std::getline(parts, scale_str, ':');
        const auto it = kKindNames.find(trim(kind_str));
        if (it == kKindNames.end())
            throw ParseError("config key 'scene.palette': unknown primitive '" + kind_str + "'");
        ClassSpec spec;
        spec.name = it->first;
        spec.kind = it->second;
        std::istringstream colors(color_str);
        std::string ch;
        for (int c = 0; c < 3; ++c) {
            if (!std::getline(colors, ch, ','))
                throw ParseError("config key 'scene.palette': expected r,g,b colors");
            spec.color(c) = to_double("scene.palette", trim(ch));
        }
        spec.size_scale = scale_str.empty() ? 1.0 : to_double("scene.palette", trim(scale_str));
        palette.push_back(std::move(spec));
    }
    if (palette.size() < 2)
        throw ParseError("config key 'scene.palette': at least 2 classes required");
    return palette;
}

std::string palette_to_string(const std::vector<ClassSpec>& palette) {
    std::string out;
    for (std::size_t i = 0; i < palette.size(); ++i) {
        if (i) out += ';';
        out += kind_name(palette[i].kind) + ':' + format_double(palette[i].color(0)) + ',' +
               format_double(palette[i].color(1)) + ',' + format_double(palette[i].color(2)) +
               ':' + format_double(palette[i].size_scale);
    }
    return out;
}

std::vector<AugMethod> parse_methods(const std::string& value) {
    std::vector<AugMethod> methods;
    std::istringstream parts(value);
    std::string name;
    while (std::getline(parts, name, ',')) {
        name = trim(name);
        if (name == "pointwolf")
            methods.push_back(AugMethod::PointWolf);
        else if (name == "affine")
            methods.push_back(AugMethod::Affine);
        else if (name == "noise")
            methods.push_back(AugMethod::Noise);
        else
            throw ParseError("config key 'augment.methods': unknown method '" + name + "'");
    }
    if (methods.empty())
        throw ParseError("config key 'augment.methods': at least one method required");
    return methods;
}

std::string methods_to_string(const std::vector<AugMethod>& methods) {
    std::string out;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) out += ',';
        switch (methods[i]) {
            case AugMethod::PointWolf: out += "pointwolf"; break;
            case AugMethod::Affine: out += "affine"; break;
            case AugMethod::Noise: out += "noise"; break;
        }
    }
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    cfg.scene.palette = default_palette();

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");

        if (key == "scene.n_points") cfg.scene.n_points = static_cast<int>(to_long(key, value));
        else if (key == "scene.palette") cfg.scene.palette = parse_palette(value);
        else if (key == "scene.objects_min") cfg.scene.objects_min = static_cast<int>(to_long(key, value));
        else if (key == "scene.objects_max") cfg.scene.objects_max = static_cast<int>(to_long(key, value));
        else if (key == "scene.extent") cfg.scene.extent = to_double(key, value);
        else if (key == "scene.surface_noise") cfg.scene.surface_noise = to_double(key, value);
        else if (key == "scene.color_noise") cfg.scene.color_noise = to_double(key, value);
        else if (key == "scene.seed") cfg.scene.rng_seed = static_cast<std::uint64_t>(to_long(key, value));
        else if (key == "data.n_train") cfg.n_train = static_cast<int>(to_long(key, value));
        else if (key == "data.n_test") cfg.n_test = static_cast<int>(to_long(key, value));
        else if (key == "data.clicks_per_thing") cfg.clicks.clicks_per_thing = static_cast<int>(to_long(key, value));
        else if (key == "data.click_seed") cfg.clicks.rng_seed = static_cast<std::uint64_t>(to_long(key, value));
        else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(to_long(key, value));
        else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(to_long(key, value));
        else if (key == "train.lr") cfg.train.learning_rate = to_double(key, value);
        else if (key == "train.momentum") cfg.train.momentum = to_double(key, value);
        else if (key == "train.hidden") cfg.train.hidden = static_cast<int>(to_long(key, value));
        else if (key == "train.knn") cfg.train.knn = static_cast<int>(to_long(key, value));
        else if (key == "train.tau") cfg.train.tau = to_double(key, value);
        else if (key == "train.kappa") cfg.train.kappa = to_double(key, value);
        else if (key == "train.lambda1") cfg.train.lambda1 = to_double(key, value);
        else if (key == "train.lambda2") cfg.train.lambda2 = to_double(key, value);
        else if (key == "train.lambda3") cfg.train.lambda3 = to_double(key, value);
        else if (key == "train.reliable_loss") {
            if (value == "ce") cfg.train.reliable_loss = ReliableLossKind::CrossEntropy;
            else if (value == "dice") cfg.train.reliable_loss = ReliableLossKind::Dice;
            else throw ParseError("config key 'train.reliable_loss': expected ce|dice");
        } else if (key == "train.ambiguous_loss") {
            if (value == "kl") cfg.train.ambiguous_loss = AmbiguousLossKind::KL;
            else if (value == "mse") cfg.train.ambiguous_loss = AmbiguousLossKind::MSE;
            else throw ParseError("config key 'train.ambiguous_loss': expected kl|mse");
        } else if (key == "train.eval_interval") cfg.train.eval_interval = static_cast<int>(to_long(key, value));
        else if (key == "train.seed") cfg.train.seed = static_cast<std::uint64_t>(to_long(key, value));
        else if (key == "train.deterministic") cfg.train.deterministic = to_bool(key, value);
        else if (key == "augment.methods") cfg.train.augment.methods = parse_methods(value);
        else if (key == "augment.pointwolf.anchors") cfg.train.augment.pointwolf.n_anchors = static_cast<int>(to_long(key, value));
        else if (key == "augment.pointwolf.bandwidth") cfg.train.augment.pointwolf.kernel_bandwidth = to_double(key, value);
        else if (key == "augment.pointwolf.rot_max_deg") cfg.train.augment.pointwolf.rotation_max_deg = to_double(key, value);
        else if (key == "augment.pointwolf.scale_min") cfg.train.augment.pointwolf.scale_min = to_double(key, value);
        else if (key == "augment.pointwolf.scale_max") cfg.train.augment.pointwolf.scale_max = to_double(key, value);
        else if (key == "augment.pointwolf.trans_max") cfg.train.augment.pointwolf.translation_max = to_double(key, value);
        else if (key == "augment.affine.scale_min") cfg.train.augment.affine.scale_min = to_double(key, value);
        else if (key == "augment.affine.scale_max") cfg.train.augment.affine.scale_max = to_double(key, value);
        else if (key == "augment.affine.trans_max") cfg.train.augment.affine.translation_max = to_double(key, value);
        else if (key == "augment.noise.sigma") cfg.train.augment.noise.sigma = to_double(key, value);
        else if (key == "augment.noise.clip") cfg.train.augment.noise.clip = to_double(key, value);
        else throw ParseError("unknown config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
    }

    if (cfg.scene.n_points < 1) throw ParseError("config: scene.n_points must be >= 1");
    if (cfg.n_train < 1 || cfg.n_test < 0) throw ParseError("config: invalid data split sizes");
    if (cfg.clicks.clicks_per_thing < 1)
        throw ParseError("config: data.clicks_per_thing must be >= 1");
    if (!(cfg.train.tau > 0.0 && cfg.train.tau < 1.0))
        throw ParseError("config: train.tau must lie in (0, 1)");
    if (!(cfg.train.kappa >= 0.0)) throw ParseError("config: train.kappa must be >= 0");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string canonical_run_config(const RunConfig& cfg) {
    std::ostringstream out;
    auto kv = [&](const char* key, const std::string& value) {
        out << key << " = " << value << '\n';
    };
    kv("scene.n_points", std::to_string(cfg.scene.n_points));
    kv("scene.palette", palette_to_string(cfg.scene.palette));
    kv("scene.objects_min", std::to_string(cfg.scene.objects_min));
    kv("scene.objects_max", std::to_string(cfg.scene.objects_max));
    kv("scene.extent", format_double(cfg.scene.extent));
    kv("scene.surface_noise", format_double(cfg.scene.surface_noise));
    kv("scene.color_noise", format_double(cfg.scene.color_noise));
    kv("scene.seed", std::to_string(cfg.scene.rng_seed));
    kv("data.n_train", std::to_string(cfg.n_train));
    kv("data.n_test", std::to_string(cfg.n_test));
    kv("data.clicks_per_thing", std::to_string(cfg.clicks.clicks_per_thing));
    kv("data.click_seed", std::to_string(cfg.clicks.rng_seed));
    kv("train.epochs", std::to_string(cfg.train.epochs));
    kv("train.batch_size", std::to_string(cfg.train.batch_size));
    kv("train.lr", format_double(cfg.train.learning_rate));
    kv("train.momentum", format_double(cfg.train.momentum));
    kv("train.hidden", std::to_string(cfg.train.hidden));
    kv("train.knn", std::to_string(cfg.train.knn));
    kv("train.tau", format_double(cfg.train.tau));
    kv("train.kappa", format_double(cfg.train.kappa));
    kv("train.lambda1", format_double(cfg.train.lambda1));
    kv("train.lambda2", format_double(cfg.train.lambda2));
    kv("train.lambda3", format_double(cfg.train.lambda3));
    kv("train.reliable_loss",
       cfg.train.reliable_loss == ReliableLossKind::CrossEntropy ? "ce" : "dice");
    kv("train.ambiguous_loss",
       cfg.train.ambiguous_loss == AmbiguousLossKind::KL ? "kl" : "mse");
    kv("train.eval_interval", std::to_string(cfg.train.eval_interval));
    kv("train.seed", std::to_string(cfg.train.seed));
    kv("train.deterministic", cfg.train.deterministic ? "true" : "false");
    kv("augment.methods", methods_to_string(cfg.train.augment.methods));
    kv("augment.pointwolf.anchors", std::to_string(cfg.train.augment.pointwolf.n_anchors));
    kv("augment.pointwolf.bandwidth",
       format_double(cfg.train.augment.pointwolf.kernel_bandwidth));
    kv("augment.pointwolf.rot_max_deg",
       format_double(cfg.train.augment.pointwolf.rotation_max_deg));
    kv("augment.pointwolf.scale_min", format_double(cfg.train.augment.pointwolf.scale_min));
    kv("augment.pointwolf.scale_max", format_double(cfg.train.augment.pointwolf.scale_max));
    kv("augment.pointwolf.trans_max",
       format_double(cfg.train.augment.pointwolf.translation_max));
    kv("augment.affine.scale_min", format_double(cfg.train.augment.affine.scale_min));
    kv("augment.affine.scale_max", format_double(cfg.train.augment.affine.scale_max));
    kv("augment.affine.trans_max", format_double(cfg.train.augment.affine.translation_max));
    kv("augment.noise.sigma", format_double(cfg.train.augment.noise.sigma));
    kv("augment.noise.clip", format_double(cfg.train.augment.noise.clip));
    return out.str();
}

}  // namespace racseg
