#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace mrfsel::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kPartialFailure = 1, kConfigError = 2, kRuntimeError = 3 };

/// Relative output directories resolve against MRFSEL_OUTPUT_ROOT when set,
/// otherwise against the working directory.
inline fs::path output_root() {
    if (const char* env = std::getenv("MRFSEL_OUTPUT_ROOT"); env && *env) return fs::path(env);
    return fs::current_path();
}

inline fs::path resolve_output(const fs::path& dir) { return dir.is_absolute() ? dir : output_root() / dir; }

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << bytes;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <class F>
std::string to_text(F&& write) {
    std::ostringstream s;
    write(s);
    return s.str();
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

inline std::string sample_file_name(int n, int trial) {
    return "samples/n" + std::to_string(n) + "_trial" + std::to_string(trial) + ".csv";
}

/// Writes the error report and a copy of a rejected config under
/// <root>/quarantine/<config name>/ and nowhere else.
inline fs::path quarantine(const fs::path& config_path, const std::string& text, const std::string& error) {
    const fs::path dir = output_root() / "quarantine" / config_path.stem();
    write_file(dir / "config_error.txt", error + "\n");
    if (!text.empty()) write_file(dir / config_path.filename(), text);
    return dir;
}

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<std::size_t> workers;
};

/// Runs a full sweep from a config file and writes every artifact plus
/// manifest.json into the output directory.
inline int run_config(const fs::path& config_path, const RunOptions& opt, std::ostream& log = std::cerr) {
    std::string text;
    ExperimentConfig cfg;
    try {
        text = read_file(config_path);
        cfg = parse_config(text);
    } catch (const std::exception& e) {
        std::string where;
        try {
            where = quarantine(config_path, text, e.what()).string();
        } catch (const std::exception& q) {
            where = std::string("(quarantine failed: ") + q.what() + ")";
        }
        log << "config error: " << e.what() << "\nreport written to " << where << '\n';
        return kConfigError;
    }
    if (opt.seed) cfg.sweep.seed = *opt.seed;
    if (opt.workers) cfg.sweep.workers = *opt.workers;
    const fs::path dir = opt.out ? *opt.out : resolve_output(cfg.output_dir);

    try {
        const SweepSpec& spec = cfg.sweep;
        const SweepResult res = run_sweep(spec);

        std::vector<std::pair<std::string, std::string>> artifacts;
        auto emit = [&](const std::string& name, const std::string& bytes) {
            write_file(dir / name, bytes);
            artifacts.emplace_back(name, bytes);
        };
        emit("config.ini", text);
        emit("graph.txt", to_text([&](std::ostream& o) { write_graph(o, res.graph); }));
        emit("model.txt", to_text([&](std::ostream& o) { write_model(o, res.model); }));
        if (cfg.keep_samples) {
            for (int n : spec.sampling.n)
                for (int t = 0; t < spec.trials; ++t) {
                    const auto s = draw_samples(res.model, spec.sampling, n, t, spec.seed);
                    emit(sample_file_name(n, t), to_text([&](std::ostream& o) { write_samples(o, s); }));
                }
        }
        emit("results.csv", to_text([&](std::ostream& o) { write_results(o, res); }));

        nlohmann::ordered_json manifest;
        manifest["schema_version"] = kSchemaVersion;
        manifest["run_id"] = spec.run_id;
        manifest["seed"] = spec.seed;
        manifest["created_utc"] = utc_timestamp();
        manifest["config_path"] = fs::absolute(config_path).string();
        manifest["config"] = text;
        manifest["workers"] = spec.workers;
        manifest["artifacts"] = nlohmann::ordered_json::array();
        for (const auto& [name, bytes] : artifacts)
            manifest["artifacts"].push_back({{"path", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
        manifest["failures"] = nlohmann::ordered_json::array();
        for (const auto& f : res.failures) manifest["failures"].push_back({{"cell", f.cell}, {"message", f.message}});
        manifest["status"] = res.failures.empty() ? "ok" : "partial";
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");

        log << "wrote " << artifacts.size() + 1 << " artifacts to " << dir.string() << '\n';
        if (!res.failures.empty()) {
            log << res.failures.size() << " failed cells, see manifest.json\n";
            return kPartialFailure;
        }
        return kOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace mrfsel::cli
