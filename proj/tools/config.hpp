#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mrfsel/evaluation.hpp"

namespace mrfsel::cli {

inline constexpr int kSchemaVersion = 1;

/// Schema violation, tagged with the section and key it concerns.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string section, std::string key, const std::string& message)
        : std::runtime_error(section + (key.empty() ? "" : "." + key) + ": " + message),
          section_(std::move(section)),
          key_(std::move(key)) {}

    const std::string& section() const { return section_; }
    const std::string& key() const { return key_; }

private:
    std::string section_, key_;
};

struct ExperimentConfig {
    SweepSpec sweep;
    std::filesystem::path output_dir = "results";
    bool keep_samples = false;
    std::string text;  // the config file as read
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"run", {"id"}},
        {"graph",
         {"family", "a", "b", "target_rho", "preserve_max_degree", "groups", "group_size", "beta_in", "beta_out", "p",
          "d_max", "m", "require_connected"}},
        {"model", {"kind", "coupling", "law", "low", "high", "k"}},
        {"sampling", {"sampler", "n", "burn_in", "thin", "independent_chains"}},
        {"penalty", {"lambda1", "lambda2", "lambda2_steps", "lambda2_scale", "alpha"}},
        {"selection", {"methods", "mode", "folds", "grid_size", "vote_threshold", "top", "rules"}},
        {"evaluation", {"trials", "seed", "workers"}},
        {"output", {"directory", "keep_samples"}},
    };
    return keys;
}

class Reader {
public:
    explicit Reader(const ptree& root) : root_(root) {}

    bool has(const std::string& section, const std::string& key) const {
        const auto s = root_.get_child_optional(section);
        return s && s->get_child_optional(key);
    }

    std::string str(const std::string& section, const std::string& key) const {
        const auto s = root_.get_child_optional(section);
        if (!s) throw ConfigError(section, "", "missing section");
        const auto v = s->get_optional<std::string>(key);
        if (!v) throw ConfigError(section, key, "missing key");
        return trim(*v);
    }

    std::string str(const std::string& section, const std::string& key, const std::string& fallback) const {
        return has(section, key) ? str(section, key) : fallback;
    }

    double real(const std::string& section, const std::string& key) const {
        try {
            return parse_double(str(section, key));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(section, key, e.what());
        }
    }

    double real(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? real(section, key) : fallback;
    }

    long long integer(const std::string& section, const std::string& key) const {
        const std::string s = str(section, key);
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw ConfigError(section, key, "not an integer: '" + s + "'");
        return v;
    }

    int integer(const std::string& section, const std::string& key, int fallback) const {
        return has(section, key) ? static_cast<int>(integer(section, key)) : fallback;
    }

    bool boolean(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string s = str(section, key);
        if (s == "true" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "no" || s == "0") return false;
        throw ConfigError(section, key, "not a boolean: '" + s + "'");
    }

    std::vector<std::string> list(const std::string& section, const std::string& key) const {
        std::vector<std::string> out;
        const std::string text = str(section, key);
        for (auto part : split(text, ',')) {
            std::string t = trim(std::string(part));
            if (t.empty()) throw ConfigError(section, key, "empty list entry");
            out.push_back(t);
        }
        return out;
    }

    std::vector<double> reals(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const auto& s : list(section, key)) {
            try {
                out.push_back(parse_double(s));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(section, key, e.what());
            }
        }
        return out;
    }

    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

private:
    const ptree& root_;
};

template <class T>
T one_of(const std::string& section, const std::string& key, const std::string& value,
         const std::vector<std::pair<std::string, T>>& options) {
    std::string names;
    for (const auto& [name, v] : options) {
        if (name == value) return v;
        names += (names.empty() ? "" : ", ") + name;
    }
    throw ConfigError(section, key, "unknown value '" + value + "' (expected one of: " + names + ")");
}

inline void check_keys(const ptree& root) {
    const auto& allowed = allowed_keys();
    for (const auto& [name, child] : root) {
        if (name == "schema_version") continue;
        const auto it = allowed.find(name);
        if (it == allowed.end()) {
            if (!child.data().empty()) throw ConfigError(name, "", "key outside any section");
            throw ConfigError(name, "", "unknown section");
        }
        for (const auto& [key, value] : child)
            if (!it->second.count(key)) throw ConfigError(name, key, "unknown key");
    }
}

inline void parse_graph(const Reader& r, GraphSpec& g) {
    g.family = one_of<std::string>("graph", "family", r.str("graph", "family"),
                                   {{"star", "star"},
                                    {"densified_star", "densified_star"},
                                    {"community", "community"},
                                    {"bounded_degree", "bounded_degree"}});
    if (g.family == "star" || g.family == "densified_star") {
        g.a = static_cast<int>(r.integer("graph", "a"));
        g.b = static_cast<int>(r.integer("graph", "b"));
        if (g.a < 1) throw ConfigError("graph", "a", "must be >= 1");
        if (g.b < 1) throw ConfigError("graph", "b", "must be >= 1");
    }
    if (g.family == "densified_star") {
        g.target_rho = r.real("graph", "target_rho");
        g.preserve_max_degree = r.boolean("graph", "preserve_max_degree", true);
        if (!(g.target_rho > 0.0 && g.target_rho <= 1.0)) throw ConfigError("graph", "target_rho", "must lie in (0, 1]");
    }
    if (g.family == "community") {
        g.groups = static_cast<int>(r.integer("graph", "groups"));
        g.group_size = static_cast<int>(r.integer("graph", "group_size"));
        g.beta_in = r.real("graph", "beta_in");
        g.beta_out = r.real("graph", "beta_out");
        if (g.groups < 1) throw ConfigError("graph", "groups", "must be >= 1");
        if (g.group_size < 1) throw ConfigError("graph", "group_size", "must be >= 1");
        for (const char* key : {"beta_in", "beta_out"}) {
            const double v = r.real("graph", key);
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("graph", key, "must lie in [0, 1]");
        }
    }
    if (g.family == "bounded_degree") {
        g.p = static_cast<int>(r.integer("graph", "p"));
        g.d_max = static_cast<int>(r.integer("graph", "d_max"));
        g.m = static_cast<int>(r.integer("graph", "m"));
        if (g.p < 1) throw ConfigError("graph", "p", "must be >= 1");
        if (g.d_max < 1) throw ConfigError("graph", "d_max", "must be >= 1");
        if (g.m < 0) throw ConfigError("graph", "m", "must be >= 0");
    }
    g.require_connected = r.boolean("graph", "require_connected", false);
}

inline void parse_model(const Reader& r, ModelSpec& m) {
    m.kind = one_of<std::string>("model", "kind", r.str("model", "kind"),
                                 {{"gmrf", "gmrf"}, {"ising", "ising"}, {"potts", "potts"}});
    if (m.kind == "gmrf") {
        m.gmrf_coupling = r.real("model", "coupling", 0.5);
        if (m.gmrf_coupling == 0.0) throw ConfigError("model", "coupling", "must be nonzero");
        return;
    }
    const std::string law = r.str("model", "law", "constant");
    try {
        if (law == "constant") {
            m.law = CouplingLaw::constant(r.real("model", "coupling", 0.25));
        } else if (law == "rademacher") {
            m.law = CouplingLaw::rademacher(r.real("model", "coupling", 0.25));
        } else if (law == "uniform") {
            m.law = CouplingLaw::uniform(r.real("model", "low"), r.real("model", "high"));
        } else {
            throw ConfigError("model", "law", "unknown value '" + law + "' (expected one of: constant, uniform, rademacher)");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", law == "uniform" ? "low" : "coupling", e.what());
    }
    if (m.kind == "potts") {
        m.k = static_cast<int>(r.integer("model", "k"));
        if (m.k < 2) throw ConfigError("model", "k", "must be >= 2");
    }
}

inline void parse_sampling(const Reader& r, SamplingSpec& s, const std::string& kind) {
    s.sampler = one_of<SamplerKind>("sampling", "sampler", r.str("sampling", "sampler", kind == "gmrf" ? "exact" : "gibbs"),
                                    {{"exact", SamplerKind::exact},
                                     {"gibbs", SamplerKind::gibbs},
                                     {"swendsen_wang", SamplerKind::swendsen_wang}});
    if (kind == "gmrf" && s.sampler != SamplerKind::exact) {
        throw ConfigError("sampling", "sampler", "gmrf models use the exact sampler");
    }
    if (kind != "gmrf" && s.sampler == SamplerKind::exact) {
        throw ConfigError("sampling", "sampler", "discrete models need gibbs or swendsen_wang");
    }
    s.n.clear();
    for (double v : r.reals("sampling", "n")) {
        if (v != std::floor(v) || v < 2) throw ConfigError("sampling", "n", "sample sizes must be integers >= 2");
        s.n.push_back(static_cast<int>(v));
    }
    s.chain.burn_in = r.integer("sampling", "burn_in", 200);
    s.chain.thin = r.integer("sampling", "thin", 5);
    s.chain.independent_chains = r.boolean("sampling", "independent_chains", false);
    if (s.chain.burn_in < 0) throw ConfigError("sampling", "burn_in", "must be >= 0");
    if (s.chain.thin < 1) throw ConfigError("sampling", "thin", "must be >= 1");
}

inline void parse_penalty(const Reader& r, PenaltyGrid& pen) {
    const std::string l1 = r.str("penalty", "lambda1", "default");
    if (l1 != "default") {
        pen.lambda1_fixed = r.real("penalty", "lambda1");
        if (!(*pen.lambda1_fixed >= 0.0)) throw ConfigError("penalty", "lambda1", "must be >= 0");
    }
    const int given = r.has("penalty", "lambda2") + r.has("penalty", "lambda2_steps") + r.has("penalty", "alpha");
    if (given != 1) {
        throw ConfigError("penalty", "", "exactly one of lambda2, lambda2_steps and alpha must be given");
    }
    pen.lambda2.clear();
    pen.alpha.clear();
    if (r.has("penalty", "alpha")) {
        if (r.has("penalty", "lambda2_scale")) throw ConfigError("penalty", "lambda2_scale", "not used with alpha");
        pen.alpha = r.reals("penalty", "alpha");
        for (double a : pen.alpha)
            if (!(a > 0.0 && a <= 1.0)) throw ConfigError("penalty", "alpha", "values must lie in (0, 1]");
        return;
    }
    if (r.has("penalty", "lambda2_steps")) {
        const int steps = r.integer("penalty", "lambda2_steps", 0);
        if (steps < 1) throw ConfigError("penalty", "lambda2_steps", "must be >= 1");
        if (r.str("penalty", "lambda2_scale", "relative") != "relative") {
            throw ConfigError("penalty", "lambda2_scale", "lambda2_steps always spans [0, sqrt(log p / n)]");
        }
        for (int i = 0; i <= steps; ++i) pen.lambda2.push_back(static_cast<double>(i) / steps);
        pen.lambda2_relative = true;
        return;
    }
    pen.lambda2 = r.reals("penalty", "lambda2");
    for (double v : pen.lambda2)
        if (!(v >= 0.0)) throw ConfigError("penalty", "lambda2", "values must be >= 0");
    pen.lambda2_relative = one_of<bool>("penalty", "lambda2_scale", r.str("penalty", "lambda2_scale", "absolute"),
                                        {{"absolute", false}, {"relative", true}});
}

inline void parse_selection(const Reader& r, SelectionSpec& sel, const std::string& kind) {
    if (r.has("selection", "methods")) {
        sel.methods.clear();
        for (const auto& m : r.list("selection", "methods")) {
            sel.methods.push_back(one_of<Method>(
                "selection", "methods", m,
                {{"N1", Method::N1}, {"N2_L", Method::N2_L}, {"N2_S", Method::N2_S}, {"N2_Sbar", Method::N2_Sbar}}));
        }
        for (Method m : sel.methods)
            if (m != Method::N1 && kind != "gmrf") {
                throw ConfigError("selection", "methods", "pair-vote methods need a gmrf model");
            }
    }
    sel.mode = one_of<NodeSelection::Mode>(
        "selection", "mode", r.str("selection", "mode", "fixed"),
        {{"fixed", NodeSelection::Mode::fixed}, {"cv", NodeSelection::Mode::cv}, {"degree", NodeSelection::Mode::degree}});
    sel.folds = r.integer("selection", "folds", 10);
    if (sel.folds < 2) throw ConfigError("selection", "folds", "must be >= 2");
    sel.grid_size = r.integer("selection", "grid_size", 50);
    if (sel.grid_size < 2) throw ConfigError("selection", "grid_size", "must be >= 2");
    sel.vote_threshold = one_of<Threshold::Kind>(
        "selection", "vote_threshold", r.str("selection", "vote_threshold", "degree"),
        {{"degree", Threshold::Kind::degree}, {"jump", Threshold::Kind::jump}, {"top", Threshold::Kind::top}});
    sel.top = r.integer("selection", "top", 0);
    if (sel.vote_threshold == Threshold::Kind::top && sel.top < 1) throw ConfigError("selection", "top", "must be >= 1");
    if (r.has("selection", "rules")) {
        sel.rules.clear();
        for (const auto& rule : r.list("selection", "rules"))
            sel.rules.push_back(one_of<EdgeRule>("selection", "rules", rule, {{"AND", EdgeRule::AND}, {"OR", EdgeRule::OR}}));
    }
}

}  // namespace detail

/// Parses an INI experiment config. The file must declare
/// `schema_version = 1` before the first section.
inline ExperimentConfig parse_config(const std::string& text) {
    detail::ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("file", "", "line " + std::to_string(e.line()) + ": " + e.message());
    }
    const auto version = root.get_optional<std::string>("schema_version");
    if (!version) throw ConfigError("file", "schema_version", "missing");
    if (detail::Reader::trim(*version) != std::to_string(kSchemaVersion)) {
        throw ConfigError("file", "schema_version", "unsupported version '" + *version + "'");
    }
    detail::check_keys(root);
    const detail::Reader r(root);

    ExperimentConfig cfg;
    cfg.text = text;
    SweepSpec& s = cfg.sweep;
    s.run_id = r.str("run", "id", "run");
    if (s.run_id.empty() || s.run_id.find_first_of(",\n/\\") != std::string::npos) {
        throw ConfigError("run", "id", "must be non-empty without commas or slashes");
    }
    detail::parse_graph(r, s.graph);
    detail::parse_model(r, s.model);
    detail::parse_sampling(r, s.sampling, s.model.kind);
    detail::parse_penalty(r, s.penalty);
    detail::parse_selection(r, s.selection, s.model.kind);

    s.trials = r.integer("evaluation", "trials", 1);
    if (s.trials < 1) throw ConfigError("evaluation", "trials", "must be >= 1");
    const std::string seed = r.str("evaluation", "seed");
    try {
        std::size_t used = 0;
        s.seed = std::stoull(seed, &used);
        if (used != seed.size() || seed.front() == '-') throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw ConfigError("evaluation", "seed", "not an unsigned integer: '" + seed + "'");
    }
    const int workers = r.integer("evaluation", "workers", 0);
    if (workers < 0) throw ConfigError("evaluation", "workers", "must be >= 0 (0 = all cores)");
    s.workers = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());

    cfg.output_dir = r.str("output", "directory", "results");
    cfg.keep_samples = r.boolean("output", "keep_samples", false);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config", "", e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("file", "", "cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace mrfsel::cli
