#include "collapselab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace collapselab {

using nlohmann::json;

std::string type_name(ValueType t) {
    switch (t) {
    case ValueType::number: return "number";
    case ValueType::integer: return "integer";
    case ValueType::boolean: return "bool";
    case ValueType::string: return "string";
    case ValueType::number_list: return "number[]";
    }
    return "?";
}

namespace {

json linspace(double a, double b, int n) {
    json out = json::array();
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
    return out;
}

json logspace(double a, double b, int n) {
    json out = json::array();
    for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (n - 1)));
    return out;
}

json int_range(int a, int b) {
    json out = json::array();
    for (int i = a; i <= b; ++i) out.push_back(i);
    return out;
}

KeySpec num(std::string p, double def, std::string doc, double lo = -1e308, double hi = 1e308) {
    return KeySpec{std::move(p), ValueType::number, def, std::move(doc), lo, hi, {}};
}
KeySpec integer(std::string p, std::int64_t def, std::string doc, double lo = 0, double hi = 1e18) {
    return KeySpec{std::move(p), ValueType::integer, def, std::move(doc), lo, hi, {}};
}
KeySpec boolean(std::string p, bool def, std::string doc) {
    return KeySpec{std::move(p), ValueType::boolean, def, std::move(doc), 0, 0, {}};
}
KeySpec str(std::string p, std::string def, std::string doc, std::vector<std::string> choices = {}) {
    return KeySpec{std::move(p), ValueType::string, def, std::move(doc), 0, 0, std::move(choices)};
}
KeySpec list(std::string p, json def, std::string doc, double lo = -1e308, double hi = 1e308) {
    return KeySpec{std::move(p), ValueType::number_list, std::move(def), std::move(doc), lo, hi, {}};
}

std::vector<KeySpec> build_schema() {
    const std::vector<std::string> families = {"infonce",      "weighted_infonce", "beta_infonce",
                                               "spectral_contrastive", "barlow_twins", "effective_quartic"};
    std::vector<KeySpec> s = {
        str("command", "solve", "what to run",
            {"solve", "predict", "train", "verify", "slice", "sweep:sigma_scaling", "sweep:critical_n_sweep",
             "sweep:beta_collapse_sweep", "sweep:normalization_collapse", "sweep:phase_diagram",
             "sweep:downstream_eval", "sweep:imbalance_robustness"}),
        integer("seed", 0, "master seed; every random draw derives from it", 0, 1.8446744073709552e19),
        integer("threads", 0, "worker threads for sweeps (0: COLLAPSELAB_THREADS or hardware)", 0, 4096),
        str("out", "out", "output directory"),

        integer("instance.d0", 2, "input dimension", 1, 512),
        integer("instance.d1", 0, "output dimension (0: same as d0)", 0, 512),
        str("instance.a0.kind", "diagonal", "clean covariance A0 source",
            {"identity", "diagonal", "matrix", "sampled", "dataset"}),
        list("instance.a0.values", json::array({1.0, 1.0}), "diagonal entries, or row-major entries for kind=matrix"),
        integer("instance.a0.samples", 100, "points drawn from N(0, I) for kind=sampled", 1, 1e9),
        str("instance.a0.path", "", "CSV dataset for kind=dataset (header x0..x{d-1})"),
        str("instance.c.kind", "zero", "augmentation covariance C source",
            {"zero", "isotropic", "diagonal", "structured", "matrix"}),
        num("instance.c.sigma", 0.0, "augmentation strength for isotropic/structured", 0.0),
        num("instance.c.theta", 0.5, "structured split: sigma^2 diag(1 - theta, theta)", 0.0, 1.0),
        list("instance.c.values", json::array(), "diagonal variances, or row-major entries for kind=matrix"),

        str("loss.family", "infonce", "loss family", families),
        num("loss.alpha", 1.0, "weight of the positive pair in the partition sum", 0.0),
        num("loss.beta", 1.0, "weight of the entropy (log-partition) term", 0.0),
        integer("loss.n", 0, "dataset size N for weighted_infonce (0: trainer.n_samples)", 0, 1e12),
        num("loss.weight_decay", 0.0, "gamma ||W||_F^2", 0.0),
        boolean("loss.normalized", false, "add kappa (E|f|^2 - target)^2"),
        num("loss.kappa", 1.0, "normalization strength", 0.0),
        boolean("loss.kappa_infinite", false, "use the kappa -> inf limit (solve and predict only)"),
        num("loss.target", 1.0, "normalization target c", 0.0),
        boolean("loss.bias", false, "learn a bias vector (with normalization)"),
        list("loss.b", json::array(), "B for effective_quartic: diagonal, or d0*d0 row-major entries"),

        str("trainer.optimizer", "adam", "optimizer", {"adam", "gd"}),
        num("trainer.lr", 6e-4, "learning rate", 0.0),
        boolean("trainer.auto_lr", false, "gd on the closed form: lr = 0.9 * stable step"),
        num("trainer.beta1", 0.9, "adam first-moment decay", 0.0, 1.0),
        num("trainer.beta2", 0.999, "adam second-moment decay", 0.0, 1.0),
        num("trainer.eps", 1e-8, "adam epsilon", 0.0),
        integer("trainer.max_iters", 5000, "iteration cap", 0, 1e12),
        num("trainer.grad_tol", 1e-9, "stop when the gradient max-norm falls below this", 0.0),
        num("trainer.init_scale", 0.1, "initial W entries ~ N(0, (init_scale / sqrt(d0))^2)", 0.0),
        integer("trainer.record_every", 100, "checkpoint stride", 1, 1e12),
        str("trainer.source", "closed_form", "landscape to train on", {"closed_form", "samples"}),
        integer("trainer.n_samples", 4096, "dataset size for source=samples", 2, 1e9),
        integer("trainer.mc_draws", 1, "augmentation draws for source=samples", 1, 1e6),

        num("verify.tol", 1e-3, "relative tolerance on surviving eigenvalues", 0.0),

        boolean("slice.two_d", true, "2d (r1, r2) slice instead of the scalar a W* slice"),
        list("slice.values", linspace(-1.5, 1.5, 31), "scale grid; must contain 0"),

        str("sweep.mode", "analytic", "analytic or trained", {"analytic", "trained"}),
        list("sweep.sigma_scaling.sigmas", logspace(-1.0, 3.0, 41), "augmentation strengths", 0.0),
        num("sweep.critical_n_sweep.alpha", 0.1, "positive-pair weight", 0.0),
        num("sweep.critical_n_sweep.sigma", 5.0, "isotropic augmentation strength", 0.0),
        list("sweep.critical_n_sweep.a", json::array({1.0, 1.0, 1.0, 1.0}), "diagonal of A0", 0.0),
        list("sweep.critical_n_sweep.ns", int_range(2, 64), "dataset sizes", 2.0),
        integer("sweep.critical_n_sweep.mc_draws", 4, "augmentation draws in trained mode", 1, 1e6),
        list("sweep.beta_collapse_sweep.a", json::array({1, 1, 1, 1, 1}), "diagonal of A0", 0.0),
        list("sweep.beta_collapse_sweep.c", json::array({0, 1, 2, 4, 8}), "augmentation variances per mode", 0.0),
        list("sweep.beta_collapse_sweep.betas", linspace(0.0, 2.0, 41), "entropy weights", 0.0),
        list("sweep.beta_collapse_sweep.sigmas", json::array({1.0}), "scale: C = sigma^2 diag(c)", 0.0),
        num("sweep.normalization_collapse.target", 1.0, "normalization target c", 0.0),
        list("sweep.normalization_collapse.sigmas", linspace(0.0, 2.0, 41), "augmentation strengths", 0.0),
        num("sweep.normalization_collapse.kappa", 1e3, "finite kappa for trained mode", 0.0),
        num("sweep.phase_diagram.a1", 1.0, "content variance", 0.0),
        num("sweep.phase_diagram.a2", 1.0, "style variance", 0.0),
        num("sweep.phase_diagram.beta", 0.5, "entropy weight", 0.0),
        list("sweep.phase_diagram.sigmas", linspace(0.0, 4.0, 17), "augmentation strengths", 0.0),
        list("sweep.phase_diagram.thetas", linspace(0.0, 1.0, 21), "augmentation split", 0.0, 1.0),
        num("sweep.downstream_eval.a1", 1.0, "content variance", 0.0),
        num("sweep.downstream_eval.a2", 1.0, "style variance", 0.0),
        num("sweep.downstream_eval.target_coeff", 1.0, "y = target_coeff * x1"),
        num("sweep.downstream_eval.ridge", 1e-3, "ridge penalty", 0.0),
        num("sweep.downstream_eval.beta", 0.5, "entropy weight", 0.0),
        integer("sweep.downstream_eval.n_train", 2048, "train split size", 1, 1e9),
        integer("sweep.downstream_eval.n_test", 2048, "test split size", 1, 1e9),
        list("sweep.downstream_eval.sigmas", linspace(0.0, 4.0, 17), "augmentation strengths", 0.0),
        list("sweep.downstream_eval.thetas", json::array({0.5, 1.0}), "augmentation split", 0.0, 1.0),
        list("sweep.imbalance_robustness.proportions", linspace(0.5, 0.98, 25), "weight of class 0", 0.0, 1.0),
        list("sweep.imbalance_robustness.mean0", json::array({2.0, 0.5, 0.0}), "class-0 mean"),
        list("sweep.imbalance_robustness.mean1", json::array({0.5, 2.0, 0.0}), "class-1 mean"),
        num("sweep.imbalance_robustness.class_var", 0.3, "isotropic within-class variance", 0.0),
        list("sweep.imbalance_robustness.c", json::array({1.0, 0.5, 0.2}), "augmentation variances", 0.0),
    };
    std::sort(s.begin(), s.end(), [](const KeySpec& a, const KeySpec& b) { return a.path < b.path; });
    return s;
}

const KeySpec* find_key(const std::string& path) {
    for (const auto& k : config_schema())
        if (k.path == path) return &k;
    return nullptr;
}

std::string show(const json& j) { return j.dump(); }

json check_value(const KeySpec& k, const json& v) {
    const std::string where = "config key '" + k.path + "'";
    auto range = [&](double x) {
        if (!std::isfinite(x)) throw ConfigError(k.path, where + ": value must be finite");
        if (x < k.min || x > k.max)
            throw ConfigError(k.path, where + ": value " + show(v) + " outside [" + show(k.min) + ", " +
                                          show(k.max) + "]");
    };
    switch (k.type) {
    case ValueType::number:
        if (!v.is_number()) throw ConfigError(k.path, where + ": expected a number, got " + show(v));
        range(v.get<double>());
        return v.get<double>();
    case ValueType::integer: {
        if (v.is_number_unsigned()) {
            range(static_cast<double>(v.get<std::uint64_t>()));
            return v;
        }
        if (v.is_number_integer()) {
            range(static_cast<double>(v.get<std::int64_t>()));
            return v;
        }
        if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) {
            range(v.get<double>());
            return static_cast<std::int64_t>(v.get<double>());
        }
        throw ConfigError(k.path, where + ": expected an integer, got " + show(v));
    }
    case ValueType::boolean:
        if (!v.is_boolean()) throw ConfigError(k.path, where + ": expected true or false, got " + show(v));
        return v;
    case ValueType::string:
        if (!v.is_string()) throw ConfigError(k.path, where + ": expected a string, got " + show(v));
        if (!k.choices.empty() &&
            std::find(k.choices.begin(), k.choices.end(), v.get<std::string>()) == k.choices.end())
            throw ConfigError(k.path, where + ": '" + v.get<std::string>() + "' is not one of " + show(k.choices));
        return v;
    case ValueType::number_list: {
        if (!v.is_array()) throw ConfigError(k.path, where + ": expected a list of numbers, got " + show(v));
        json out = json::array();
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(k.path, where + ": list entries must be numbers");
            range(e.get<double>());
            out.push_back(e.get<double>());
        }
        return out;
    }
    }
    return v;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object() && !find_key(path)) flatten(*it, path, out);
        else out.emplace_back(path, *it);
    }
}

} // namespace

const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> schema = build_schema();
    return schema;
}

std::string config_help() {
    std::ostringstream os;
    os << "Config keys (JSON, nested objects or dotted paths; override with --set key=value):\n";
    for (const auto& k : config_schema()) {
        os << "  " << k.path << " (" << type_name(k.type) << ", default " << k.def.dump() << ")\n      " << k.doc;
        if (!k.choices.empty()) {
            os << "; one of:";
            for (const auto& c : k.choices) os << ' ' << c;
        }
        os << '\n';
    }
    return os.str();
}

Config::Config() : values_(json::object()) {
    for (const auto& k : config_schema()) values_[k.path] = check_value(k, k.def);
}

void Config::set(const std::string& path, const json& value) {
    const KeySpec* k = find_key(path);
    if (!k) throw ConfigError(path, "unknown config key '" + path + "'");
    values_[path] = check_value(*k, value);
}

Config Config::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
    Config c;
    json body = j;
    body.erase("provenance");
    std::vector<std::pair<std::string, json>> flat;
    flatten(body, "", flat);
    for (const auto& [path, v] : flat) c.set(path, v);
    return c;
}

Config Config::parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError("", "config parse error at line " + std::to_string(line) + ": " + e.what());
    }
    return from_json(j);
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return parse(os.str());
}

void Config::set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(assignment, "override '" + assignment + "' must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) v = text;
    set(path, v);
}

const json& Config::raw(const std::string& path) const {
    const auto it = values_.find(path);
    if (it == values_.end()) throw ConfigError(path, "unknown config key '" + path + "'");
    return *it;
}

double Config::number(const std::string& path) const { return raw(path).get<double>(); }
std::int64_t Config::integer(const std::string& path) const { return raw(path).get<std::int64_t>(); }
std::uint64_t Config::u64(const std::string& path) const { return raw(path).get<std::uint64_t>(); }
bool Config::flag(const std::string& path) const { return raw(path).get<bool>(); }
const std::string& Config::str(const std::string& path) const { return raw(path).get_ref<const std::string&>(); }
std::vector<double> Config::list(const std::string& path) const { return raw(path).get<std::vector<double>>(); }

json Config::to_json() const {
    json out = json::object();
    for (auto it = values_.begin(); it != values_.end(); ++it) out[json::json_pointer("/" + [&] {
        std::string p = it.key();
        std::replace(p.begin(), p.end(), '.', '/');
        return p;
    }())] = *it;
    return out;
}

} // namespace collapselab
