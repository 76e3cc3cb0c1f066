#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvn/io.hpp"
#include "lvn/rng.hpp"

namespace lvn::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { uint, real, text, flag };

inline std::string hash_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

// Parameters resolve in three layers: defaults, then a JSON config (a plain
// object or a previous run's manifest), then explicit flags.
class ParamSet {
public:
    explicit ParamSet(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON config file or a previous run's manifest.json");
        app_->add_option("--out", out_dir_, "Output directory")->required();
    }

    void add(const std::string& key, Kind kind, Json def, const std::string& help) {
        std::string flag = "--" + key;
        for (char& ch : flag)
            if (ch == '_') ch = '-';
        auto& p = params_[key];
        p.kind = kind;
        p.value = std::move(def);
        p.option = app_->add_option(flag, p.raw, help);
        order_.push_back(key);
    }

    void resolve(const std::string& command) {
        if (!config_path_.empty()) {
            Json cfg;
            try {
                cfg = Json::parse(read_file(config_path_));
            } catch (const Json::parse_error& e) {
                throw UsageError("config: " + config_path_ + " is not valid JSON: " + e.what());
            }
            if (!cfg.is_object()) throw UsageError("config: top level must be an object");
            if (cfg.contains("parameters")) {
                if (cfg.contains("command") && cfg["command"] != command)
                    throw UsageError("config: manifest is for '" + cfg["command"].get<std::string>() + "', not '" +
                                     command + "'");
                cfg = cfg["parameters"];
            }
            for (auto& [key, value] : cfg.items()) {
                auto it = params_.find(key);
                if (it == params_.end()) throw UsageError("config: unknown parameter '" + key + "'");
                it->second.value = check_json(key, it->second.kind, value);
            }
        }
        for (auto& [key, p] : params_)
            if (p.option->count() > 0) p.value = from_string(key, p.kind, p.raw);
    }

    bool has(const std::string& key) const { return !at(key).is_null(); }
    std::uint64_t uint(const std::string& key) const { return require(key).get<std::uint64_t>(); }
    double real(const std::string& key) const { return require(key).get<double>(); }
    std::string text(const std::string& key) const { return require(key).get<std::string>(); }
    bool flag(const std::string& key) const { return require(key).get<bool>(); }
    void set(const std::string& key, Json value) { params_.at(key).value = std::move(value); }

    Json resolved() const {
        Json out = Json::object();
        for (const auto& key : order_) out[key] = params_.at(key).value;
        return out;
    }

    const std::string& out_dir() const { return out_dir_; }

private:
    struct Param {
        Kind kind;
        Json value;
        std::string raw;
        CLI::Option* option = nullptr;
    };

    const Json& at(const std::string& key) const { return params_.at(key).value; }

    const Json& require(const std::string& key) const {
        const Json& v = at(key);
        if (v.is_null()) throw UsageError("parameter '" + key + "' is required");
        return v;
    }

    static Json check_json(const std::string& key, Kind kind, const Json& v) {
        if (v.is_null()) return v;
        switch (kind) {
            case Kind::uint:
                if (v.is_number_unsigned()) return v;
                if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
                break;
            case Kind::real:
                if (v.is_number()) return v.get<double>();
                break;
            case Kind::text:
                if (v.is_string()) return v;
                break;
            case Kind::flag:
                if (v.is_boolean()) return v;
                break;
        }
        throw UsageError("parameter '" + key + "': wrong type in config (" + v.dump() + ")");
    }

    static Json from_string(const std::string& key, Kind kind, const std::string& s) {
        switch (kind) {
            case Kind::uint: {
                std::uint64_t v = 0;
                const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                if (ec != std::errc() || end != s.data() + s.size())
                    throw UsageError("parameter '" + key + "': expected a non-negative integer, got '" + s + "'");
                return v;
            }
            case Kind::real: {
                std::size_t used = 0;
                double v = 0;
                try {
                    v = std::stod(s, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != s.size() || s.empty() || !std::isfinite(v))
                    throw UsageError("parameter '" + key + "': expected a finite number, got '" + s + "'");
                return v;
            }
            case Kind::text:
                return s;
            case Kind::flag:
                if (s == "true" || s == "1") return true;
                if (s == "false" || s == "0") return false;
                throw UsageError("parameter '" + key + "': expected true|false, got '" + s + "'");
        }
        return nullptr;
    }

    CLI::App* app_;
    std::string config_path_;
    std::string out_dir_;
    std::map<std::string, Param> params_;
    std::vector<std::string> order_;
};

// Collects every file a run writes so a failure can remove them again.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void open() {
        created_dir_ = !fs::exists(dir_);
        fs::create_directories(dir_);
    }

    void write(const std::string& name, std::string_view bytes) {
        const fs::path path = dir_ / name;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file_atomic(path, bytes);
        written_.push_back(path);
        hashes_[name] = hash_hex(bytes);
    }

    void input(const std::string& path) { inputs_[path] = hash_hex(read_file(path)); }

    void manifest(const std::string& command, const Json& params) {
        Json m = {{"command", command}, {"format", 1}, {"parameters", params}};
        Json in = Json::object(), art = Json::object();
        for (const auto& [k, v] : inputs_) in[k] = v;
        for (const auto& [k, v] : hashes_) art[k] = v;
        m["inputs"] = in;
        m["artifacts"] = art;
        m["hash"] = "fnv1a64";
        write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
        written_.push_back(dir_ / "manifest.json");
    }

    void rollback() noexcept {
        std::error_code ec;
        for (const auto& p : written_) fs::remove(p, ec);
        if (created_dir_) fs::remove_all(dir_, ec);
    }

private:
    fs::path dir_;
    bool created_dir_ = false;
    std::vector<fs::path> written_;
    std::map<std::string, std::string> hashes_;
    std::map<std::string, std::string> inputs_;
};

}  // namespace lvn::cli
