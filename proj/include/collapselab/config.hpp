#pragma once

// JSON run configuration with a fixed schema. Every key has a type, a
// default and a one-line description; unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapselab/error.hpp"

namespace collapselab {

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what) : Error(what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

enum class ValueType { number, integer, boolean, string, number_list };

std::string type_name(ValueType t);

struct KeySpec {
    std::string path;  // dotted, e.g. "loss.beta"
    ValueType type;
    nlohmann::json def;
    std::string doc;
    double min = -1e308;
    double max = 1e308;
    std::vector<std::string> choices;  // strings only
};

const std::vector<KeySpec>& config_schema();

/// One line per key: path, type, default, description.
std::string config_help();

class Config {
public:
    /// Every key at its default.
    Config();

    /// Nested or dotted keys. A top-level "provenance" block is ignored.
    static Config from_json(const nlohmann::json& j);
    /// Parses text; syntax errors become ConfigError with the line number.
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    /// `key.path=value`; value is read as JSON when possible, else as a string.
    void set_override(const std::string& assignment);
    void set(const std::string& path, const nlohmann::json& value);

    double number(const std::string& path) const;
    std::int64_t integer(const std::string& path) const;
    std::uint64_t u64(const std::string& path) const;
    bool flag(const std::string& path) const;
    const std::string& str(const std::string& path) const;
    std::vector<double> list(const std::string& path) const;

    /// Nested JSON with sorted keys and every key present.
    nlohmann::json to_json() const;

private:
    const nlohmann::json& raw(const std::string& path) const;
    nlohmann::json values_;  // flat: path -> value
};

} // namespace collapselab
