#pragma once

#include <sfde/integrator.hpp>
#include <sfde/mc.hpp>
#include <sfde/model.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Run configuration: one JSON document drives every subcommand.  Parsing
// resolves the model, applies optional overrides (fading rate, initial
// history, generator) and validates the pieces against each other; errors
// carry the offending field path.
// ---------------------------------------------------------------------------

struct StudySpec {
    enum class Type { None, K, Dt };
    Type type = Type::None;
    std::vector<int> k_values;
    int k_ref = 0;
    std::vector<double> dt_values; // decreasing
    double dt_ref = 0.0;
};

struct RunConfig {
    ModelSetup setup;
    GridSpec grid;
    std::string scheme = "auto";
    Seeds seeds = Seeds::from_master(42);
    long samples = 1;
    int parallelism = 1;
    EmOptions em;
    bool sup_error = false;
    StudySpec study;
    std::string output_dir = "out";

    nlohmann::json resolved; // normalized document, embedded in manifests
};

/// Parses and validates a configuration document.
RunConfig parse_config(const nlohmann::json& doc);

/// Loads a JSON file (or stdin for "-") and parses it.
RunConfig load_config(const std::string& path);

/// Baked configurations reproducing the library's reference experiments at
/// desk scale: example54-k, example54-dt, example55-k, example55-dt.
nlohmann::json preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Applies a dotted-path override "a.b.c=value"; the value is parsed as
/// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Measure (de)serialization used by configs and manifests.
DelayMeasure measure_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json measure_to_json(const DelayMeasure& m);

} // namespace sfde
