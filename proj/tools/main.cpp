#include <sfde/config.hpp>
#include <sfde/drivers.hpp>
#include <sfde/errors.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

// Shared options: a config file, a preset name, or both (preset as base with
// a file layered on top is not supported; pick one), plus --set overrides.
struct SourceOpts {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
};

void add_source_opts(CLI::App* cmd, SourceOpts& opts) {
    auto* cfg = cmd->add_option("--config", opts.config_path, "JSON config file ('-' for stdin)");
    auto* pre = cmd->add_option("--preset", opts.preset, "built-in preset name");
    cfg->excludes(pre);
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set samples=100");
}

nlohmann::json load_document(const SourceOpts& opts) {
    nlohmann::json doc;
    if (!opts.preset.empty()) {
        doc = sfde::preset_config(opts.preset);
    } else if (!opts.config_path.empty()) {
        if (opts.config_path == "-") {
            doc = nlohmann::json::parse(std::cin, nullptr, true);
        } else {
            std::ifstream in(opts.config_path);
            if (!in) throw sfde::ConfigError("cannot open config file '" + opts.config_path + "'");
            doc = nlohmann::json::parse(in, nullptr, true);
        }
    } else {
        throw sfde::ConfigError("either --config or --preset is required");
    }
    for (const auto& assignment : opts.overrides) sfde::apply_override(doc, assignment);
    return doc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-window simulation of hybrid stochastic functional differential equations"};
    app.require_subcommand(1);

    SourceOpts sim_opts, study_opts, val_opts;
    std::string preset_name, preset_out;

    auto* sim = app.add_subcommand("simulate", "integrate trajectories and write CSV + manifest");
    add_source_opts(sim, sim_opts);
    auto* study = app.add_subcommand("study", "run the configured k- or dt-convergence study");
    add_source_opts(study, study_opts);
    auto* validate = app.add_subcommand("validate", "run configuration self-checks");
    add_source_opts(validate, val_opts);
    auto* preset = app.add_subcommand("preset", "print a built-in preset config as JSON");
    preset->add_option("name", preset_name, "preset name")->required();
    preset->add_option("-o,--output", preset_out, "write to a file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const auto doc = load_document(sim_opts);
            return sfde::cmd_simulate(sfde::parse_config(doc), std::cout);
        }
        if (study->parsed()) {
            const auto doc = load_document(study_opts);
            return sfde::cmd_study(sfde::parse_config(doc), std::cout);
        }
        if (validate->parsed()) {
            nlohmann::json doc;
            if (val_opts.preset.empty() && val_opts.config_path.empty()) {
                doc = sfde::preset_config("example54-k"); // default self-check target
                for (const auto& a : val_opts.overrides) sfde::apply_override(doc, a);
            } else {
                doc = load_document(val_opts);
            }
            return sfde::cmd_validate(doc, std::cout);
        }
        if (preset->parsed()) {
            const auto doc = sfde::preset_config(preset_name);
            if (preset_out.empty()) {
                std::cout << doc.dump(2) << "\n";
            } else {
                std::ofstream out(preset_out);
                if (!out) throw sfde::ConfigError("cannot open '" + preset_out + "'");
                out << doc.dump(2) << "\n";
            }
            return sfde::kExitOk;
        }
    } catch (const sfde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return sfde::kExitConfig;
    } catch (const sfde::UnknownModelError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return sfde::kExitConfig;
    } catch (const sfde::BlowUpError& e) {
        std::cerr << "blow-up: " << e.what();
        if (e.sample >= 0) std::cerr << " (sample " << e.sample << ", param " << e.param << ")";
        std::cerr << "\n";
        return sfde::kExitAllBlowUp;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
