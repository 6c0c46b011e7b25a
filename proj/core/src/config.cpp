#include "alasca/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "alasca/noise.hpp"

namespace alasca {

void DataSpec::validate() const {
    if (!path.empty()) {
        if (test_path.empty()) {
            throw ContractError("config: data.test_path is required when data.path is set");
        }
        return;
    }
    if (n == 0) throw ContractError("config: missing required key data.n (or data.path)");
    if (epsilon < 0.0 || epsilon > 1.0) throw ContractError("config: data.epsilon outside [0,1]");
    if (separation < 0.0) throw ContractError("config: data.separation must be >= 0");
    if (test_n == 0) throw ContractError("config: data.test_n must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ContractError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ContractError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ContractError("config: bad boolean value for " + key + ": '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    bool keep_fraction_set = false;

    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"data.path", [&](const std::string&, const std::string& v) { cfg.data.path = v; }},
        {"data.test_path", [&](const std::string&, const std::string& v) { cfg.data.test_path = v; }},
        {"data.n", [&](const std::string& k, const std::string& v) { cfg.data.n = parse_u64(k, v); }},
        {"data.dim", [&](const std::string& k, const std::string& v) { cfg.data.dim = parse_u64(k, v); }},
        {"data.classes",
         [&](const std::string& k, const std::string& v) { cfg.data.classes = parse_u64(k, v); }},
        {"data.separation",
         [&](const std::string& k, const std::string& v) { cfg.data.separation = parse_double(k, v); }},
        {"data.test_n",
         [&](const std::string& k, const std::string& v) { cfg.data.test_n = parse_u64(k, v); }},
        {"data.noise",
         [&](const std::string&, const std::string& v) { cfg.data.noise = noise_kind_from_string(v); }},
        {"data.epsilon",
         [&](const std::string& k, const std::string& v) { cfg.data.epsilon = parse_double(k, v); }},
        {"data.seed",
         [&](const std::string& k, const std::string& v) { cfg.data.seed = parse_u64(k, v); }},
        {"data.mapping", [&](const std::string&, const std::string& v) { cfg.data.mapping = v; }},
        {"data.self_flip",
         [&](const std::string& k, const std::string& v) { cfg.data.self_flip = parse_bool(k, v); }},

        {"train.lambda",
         [&](const std::string& k, const std::string& v) { cfg.train.lambda = parse_double(k, v); }},
        {"train.warmup",
         [&](const std::string& k, const std::string& v) {
             cfg.train.warmup_epochs = static_cast<int>(parse_u64(k, v));
         }},
        {"train.alpha.initial",
         [&](const std::string& k, const std::string& v) { cfg.train.alpha.initial = parse_double(k, v); }},
        {"train.alpha.final",
         [&](const std::string& k, const std::string& v) { cfg.train.alpha.final = parse_double(k, v); }},
        {"train.alpha.ramp",
         [&](const std::string& k, const std::string& v) {
             cfg.train.alpha.ramp_fraction = parse_double(k, v);
         }},
        {"train.epochs",
         [&](const std::string& k, const std::string& v) {
             cfg.train.epochs = static_cast<int>(parse_u64(k, v));
         }},
        {"train.batch",
         [&](const std::string& k, const std::string& v) { cfg.train.batch_size = parse_u64(k, v); }},
        {"train.lr",
         [&](const std::string& k, const std::string& v) { cfg.train.learning_rate = parse_double(k, v); }},
        {"train.momentum",
         [&](const std::string& k, const std::string& v) { cfg.train.momentum = parse_double(k, v); }},
        {"train.seed",
         [&](const std::string& k, const std::string& v) { cfg.train.seed = parse_u64(k, v); }},
        {"train.lnl",
         [&](const std::string&, const std::string& v) { cfg.train.lnl.kind = lnl_kind_from_string(v); }},
        {"train.gce.q",
         [&](const std::string& k, const std::string& v) { cfg.train.lnl.gce_q = parse_double(k, v); }},
        {"train.sce.w1",
         [&](const std::string& k, const std::string& v) { cfg.train.lnl.sce_w1 = parse_double(k, v); }},
        {"train.sce.w2",
         [&](const std::string& k, const std::string& v) { cfg.train.lnl.sce_w2 = parse_double(k, v); }},
        {"train.keep_fraction",
         [&](const std::string& k, const std::string& v) {
             cfg.train.lnl.keep_fraction = parse_double(k, v);
             keep_fraction_set = true;
         }},
        {"train.main_ls_alpha",
         [&](const std::string& k, const std::string& v) { cfg.train.main_ls_alpha = parse_double(k, v); }},
        {"train.ema.w",
         [&](const std::string& k, const std::string& v) { cfg.train.w_ema = parse_double(k, v); }},
        {"train.ema.tau",
         [&](const std::string& k, const std::string& v) { cfg.train.tau = parse_double(k, v); }},
        {"train.agreement",
         [&](const std::string& k, const std::string& v) {
             if (v == "last") {
                 cfg.train.agreement = AgreementRule::kLastSub;
             } else if (v == "all") {
                 cfg.train.agreement = AgreementRule::kAllHeads;
             } else {
                 throw ContractError("config: bad value for " + k + ": '" + v + "' (want last|all)");
             }
         }},

        {"net.width",
         [&](const std::string& k, const std::string& v) { cfg.train.net.width = parse_u64(k, v); }},
        {"net.stages",
         [&](const std::string& k, const std::string& v) { cfg.train.net.stages = parse_u64(k, v); }},
        {"net.bottleneck",
         [&](const std::string& k, const std::string& v) { cfg.train.net.bottleneck = parse_u64(k, v); }},
        {"net.activation",
         [&](const std::string&, const std::string& v) {
             cfg.train.net.activation = activation_from_string(v);
         }},

        {"metrics.jacobian_every",
         [&](const std::string& k, const std::string& v) {
             cfg.train.jacobian_every = static_cast<int>(parse_u64(k, v));
         }},
        {"metrics.jacobian_subsample",
         [&](const std::string& k, const std::string& v) {
             cfg.train.jacobian_subsample = parse_u64(k, v);
         }},
    };

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError("config: line " + std::to_string(lineno) + " is not key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) throw ContractError("config: unknown key '" + key + "'");
        it->second(key, value);
    }

    // Small-loss keeps 1 - epsilon of every batch unless told otherwise.
    if (cfg.train.lnl.kind == LnlKind::kSmallLoss && !keep_fraction_set) {
        cfg.train.lnl.keep_fraction = std::max(0.05, 1.0 - cfg.data.epsilon);
    }

    cfg.data.validate();
    cfg.train.net.input_dim = cfg.data.dim;
    cfg.train.net.classes = cfg.data.classes;
    cfg.train.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream out;
    out << "data.classes=" << data.classes << '\n'
        << "data.dim=" << data.dim << '\n'
        << "data.epsilon=" << format_double(data.epsilon) << '\n'
        << "data.mapping=" << data.mapping << '\n'
        << "data.n=" << data.n << '\n'
        << "data.noise=" << to_string(data.noise) << '\n'
        << "data.path=" << data.path << '\n'
        << "data.seed=" << data.seed << '\n'
        << "data.self_flip=" << (data.self_flip ? 1 : 0) << '\n'
        << "data.separation=" << format_double(data.separation) << '\n'
        << "data.test_n=" << data.test_n << '\n'
        << "data.test_path=" << data.test_path << '\n'
        << "metrics.jacobian_every=" << train.jacobian_every << '\n'
        << "metrics.jacobian_subsample=" << train.jacobian_subsample << '\n'
        << "net.activation=" << to_string(train.net.activation) << '\n'
        << "net.bottleneck=" << train.net.bottleneck_width() << '\n'
        << "net.stages=" << train.net.stages << '\n'
        << "net.width=" << train.net.width << '\n'
        << "train.agreement=" << (train.agreement == AgreementRule::kLastSub ? "last" : "all") << '\n'
        << "train.alpha.final=" << format_double(train.alpha.final) << '\n'
        << "train.alpha.initial=" << format_double(train.alpha.initial) << '\n'
        << "train.alpha.ramp=" << format_double(train.alpha.ramp_fraction) << '\n'
        << "train.batch=" << train.batch_size << '\n'
        << "train.epochs=" << train.epochs << '\n'
        << "train.gce.q=" << format_double(train.lnl.gce_q) << '\n'
        << "train.keep_fraction=" << format_double(train.lnl.keep_fraction) << '\n'
        << "train.lambda=" << format_double(train.lambda) << '\n'
        << "train.lnl=" << to_string(train.lnl.kind) << '\n'
        << "train.lr=" << format_double(train.learning_rate) << '\n'
        << "train.main_ls_alpha=" << format_double(train.main_ls_alpha) << '\n'
        << "train.momentum=" << format_double(train.momentum) << '\n'
        << "train.sce.w1=" << format_double(train.lnl.sce_w1) << '\n'
        << "train.sce.w2=" << format_double(train.lnl.sce_w2) << '\n'
        << "train.seed=" << train.seed << '\n'
        << "train.ema.tau=" << format_double(train.tau) << '\n'
        << "train.ema.w=" << format_double(train.w_ema) << '\n'
        << "train.warmup=" << train.warmup_epochs << '\n';
    return out.str();
}

std::uint64_t ExperimentConfig::digest() const { return fnv1a(canonical()); }

std::map<int, int> resolve_mapping(const std::string& mapping, std::size_t classes) {
    if (mapping == "cifar10") {
        if (classes < 10) {
            throw ContractError("config: cifar10 mapping needs at least 10 classes");
        }
        return cifar10_style_mapping();
    }
    if (mapping.rfind("cyclic:", 0) == 0) {
        const std::uint64_t group = parse_u64("data.mapping", mapping.substr(7));
        return cyclic_superclass_mapping(classes, group);
    }
    throw ContractError("config: bad data.mapping '" + mapping + "' (want cifar10 or cyclic:<k>)");
}

std::pair<NoisyDataset, NoisyDataset> materialize_data(const DataSpec& spec) {
    spec.validate();
    if (!spec.path.empty()) {
        return {load_csv(spec.path), load_csv(spec.test_path)};
    }
    NoisyDataset train =
        make_gaussian_dataset(spec.n, spec.dim, spec.classes, spec.separation, spec.seed);
    switch (spec.noise) {
        case NoiseKind::kNone:
            break;
        case NoiseKind::kSymmetric:
            train = inject_symmetric(train, spec.epsilon, spec.seed + 1, spec.self_flip);
            break;
        case NoiseKind::kAsymmetric:
            train = inject_asymmetric(train, spec.epsilon,
                                      resolve_mapping(spec.mapping, spec.classes), spec.seed + 1);
            break;
        case NoiseKind::kInstance:
            train = inject_instance_dependent(train, spec.epsilon, spec.seed + 1);
            break;
    }
    NoisyDataset test =
        make_gaussian_dataset(spec.test_n, spec.dim, spec.classes, spec.separation, spec.seed + 2);
    return {std::move(train), std::move(test)};
}

}  // namespace alasca
