#include <sfde/config.hpp>

#include <sfde/errors.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace sfde {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json& member(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) fail(path + "." + key, "missing required field");
    return j.at(key);
}

double number_at(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

long integer_at(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<long>();
}

std::string string_at(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

ScalarSegment segment_from_json(const json& j, const std::string& path) {
    const std::string kind = string_at(member(j, "kind", path), path + ".kind");
    if (kind == "exp_scaled")
        return ScalarSegment::exp_scaled(number_at(member(j, "coeff", path), path + ".coeff"),
                                         number_at(member(j, "rate", path), path + ".rate"));
    if (kind == "constant")
        return ScalarSegment::constant(number_at(member(j, "value", path), path + ".value"));
    if (kind == "poly") {
        const json& c = member(j, "coeffs", path);
        if (!c.is_array() || c.empty()) fail(path + ".coeffs", "expected a nonempty array");
        std::vector<double> coeffs;
        for (std::size_t i = 0; i < c.size(); ++i)
            coeffs.push_back(number_at(c[i], path + ".coeffs[" + std::to_string(i) + "]"));
        return ScalarSegment::polynomial(std::move(coeffs));
    }
    fail(path + ".kind", "unknown segment kind '" + kind + "' (exp_scaled | constant | poly)");
}

json segment_to_json(const ScalarSegment& s) {
    switch (s.kind) {
        case ScalarSegment::Kind::ExpScaled:
            return json{{"kind", "exp_scaled"}, {"coeff", s.coeff}, {"rate", s.rate}};
        case ScalarSegment::Kind::Constant:
            return json{{"kind", "constant"}, {"value", s.value}};
        case ScalarSegment::Kind::Polynomial:
            return json{{"kind", "poly"}, {"coeffs", s.poly}};
    }
    return {};
}

ModelSetup model_from_json(const json& j, const std::string& path) {
    const std::string id = string_at(member(j, "id", path), path + ".id");
    if (id == "volatility54") return make_volatility_model();
    if (id == "lotka55") return make_lotka_volterra_model();
    if (id == "linear_test") {
        LinearTestParams p;
        if (j.contains("a")) p.a = number_at(j.at("a"), path + ".a");
        if (j.contains("sigma")) p.sigma = number_at(j.at("sigma"), path + ".sigma");
        if (j.contains("c")) p.c = number_at(j.at("c"), path + ".c");
        if (j.contains("x0")) p.x0 = number_at(j.at("x0"), path + ".x0");
        if (j.contains("aggregate")) p.aggregate = measure_from_json(j.at("aggregate"), path + ".aggregate");
        return make_linear_test_model(p);
    }
    throw UnknownModelError(path + ".id: unknown model '" + id +
                            "' (volatility54 | lotka55 | linear_test)");
}

json model_to_json(const json& original) { return original; } // already normalized

} // namespace

DelayMeasure measure_from_json(const json& j, const std::string& path) {
    const std::string kind = string_at(member(j, "kind", path), path + ".kind");
    if (kind == "dirac0") return DelayMeasure::dirac_at_zero();
    if (kind == "exp") {
        const double rate = number_at(member(j, "rate", path), path + ".rate");
        if (!(rate > 0.0)) fail(path + ".rate", "must be positive");
        return DelayMeasure::exponential(rate);
    }
    if (kind == "mixture") {
        const json& parts = member(j, "parts", path);
        if (!parts.is_array() || parts.empty()) fail(path + ".parts", "expected a nonempty array");
        std::vector<std::pair<double, DelayMeasure>> out;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const std::string ppath = path + ".parts[" + std::to_string(i) + "]";
            const json& pair = parts[i];
            if (!pair.is_array() || pair.size() != 2) fail(ppath, "expected [weight, measure]");
            out.emplace_back(number_at(pair[0], ppath + "[0]"), measure_from_json(pair[1], ppath + "[1]"));
        }
        try {
            return DelayMeasure::mixture(std::move(out));
        } catch (const ConfigError& e) {
            fail(path, e.what());
        }
    }
    fail(path + ".kind", "unknown measure kind '" + kind + "' (dirac0 | exp | mixture)");
}

json measure_to_json(const DelayMeasure& m) {
    switch (m.kind()) {
        case MeasureKind::DiracAtZero:
            return json{{"kind", "dirac0"}};
        case MeasureKind::ExponentialDensity:
            return json{{"kind", "exp"}, {"rate", m.rate()}};
        case MeasureKind::Mixture: {
            json parts = json::array();
            for (const auto& [w, part] : m.parts()) parts.push_back(json::array({w, measure_to_json(part)}));
            return json{{"kind", "mixture"}, {"parts", parts}};
        }
    }
    return {};
}

RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    RunConfig cfg;

    cfg.setup = model_from_json(member(doc, "model", "config"), "config.model");

    if (doc.contains("r")) {
        cfg.setup.fading_rate = number_at(doc.at("r"), "config.r");
        cfg.setup.initial.fading_rate = cfg.setup.fading_rate;
        if (!(cfg.setup.fading_rate > 0.0)) fail("config.r", "must be positive");
    }
    if (doc.contains("generator")) {
        const json& g = doc.at("generator");
        if (!g.is_array() || g.empty()) fail("config.generator", "expected a square matrix");
        const std::size_t n = g.size();
        Eigen::MatrixXd gamma(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            const json& row = g[i];
            if (!row.is_array() || row.size() != n) fail("config.generator", "expected a square matrix");
            for (std::size_t k = 0; k < n; ++k)
                gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    number_at(row[k], "config.generator[" + std::to_string(i) + "][" + std::to_string(k) + "]");
        }
        try {
            cfg.setup.generator = RegimeGenerator(gamma);
        } catch (const NonGeneratorError& e) {
            fail("config.generator", e.what());
        }
    }
    if (doc.contains("initial_state")) {
        cfg.setup.initial_state =
            static_cast<int>(integer_at(doc.at("initial_state"), "config.initial_state"));
        if (cfg.setup.initial_state < 1 || cfg.setup.initial_state > cfg.setup.generator.states())
            fail("config.initial_state", "outside the generator's state space");
    }
    if (doc.contains("initial")) {
        const json& init = doc.at("initial");
        std::vector<ScalarSegment> comps;
        if (init.is_array()) {
            for (std::size_t i = 0; i < init.size(); ++i)
                comps.push_back(segment_from_json(init[i], "config.initial[" + std::to_string(i) + "]"));
        } else {
            comps.push_back(segment_from_json(init, "config.initial"));
        }
        if (static_cast<int>(comps.size()) != cfg.setup.model.dim)
            fail("config.initial", "component count does not match the model dimension " +
                                       std::to_string(cfg.setup.model.dim));
        cfg.setup.initial.components = std::move(comps);
        cfg.setup.initial.fading_rate = cfg.setup.fading_rate;
    }

    const json& grid = member(doc, "grid", "config");
    cfg.grid.k1 = static_cast<int>(integer_at(member(grid, "k1", "config.grid"), "config.grid.k1"));
    cfg.grid.horizon = static_cast<int>(integer_at(member(grid, "k", "config.grid"), "config.grid.k"));
    cfg.grid.t_final = number_at(member(grid, "T", "config.grid"), "config.grid.T");
    try {
        cfg.grid.validate();
    } catch (const ConfigError& e) {
        fail("config.grid", e.what());
    }

    if (doc.contains("scheme")) cfg.scheme = string_at(doc.at("scheme"), "config.scheme");
    if (cfg.scheme != "em" && cfg.scheme != "truncated-em" && cfg.scheme != "auto")
        fail("config.scheme", "expected em | truncated-em | auto");

    if (doc.contains("seeds")) {
        const json& seeds = doc.at("seeds");
        if (seeds.contains("master"))
            cfg.seeds = Seeds::from_master(
                static_cast<std::uint64_t>(integer_at(seeds.at("master"), "config.seeds.master")));
        if (seeds.contains("noise"))
            cfg.seeds.noise = static_cast<std::uint64_t>(integer_at(seeds.at("noise"), "config.seeds.noise"));
        if (seeds.contains("regime"))
            cfg.seeds.regime =
                static_cast<std::uint64_t>(integer_at(seeds.at("regime"), "config.seeds.regime"));
    }

    if (doc.contains("samples")) cfg.samples = integer_at(doc.at("samples"), "config.samples");
    if (cfg.samples < 1) fail("config.samples", "must be >= 1");
    if (doc.contains("parallelism"))
        cfg.parallelism = static_cast<int>(integer_at(doc.at("parallelism"), "config.parallelism"));
    if (cfg.parallelism < 1) fail("config.parallelism", "must be >= 1");
    if (doc.contains("guard")) cfg.em.guard = number_at(doc.at("guard"), "config.guard");
    if (!(cfg.em.guard > 0.0)) fail("config.guard", "must be positive");
    if (doc.contains("truncation")) {
        const json& tr = doc.at("truncation");
        if (tr.contains("scale") && !tr.at("scale").is_null())
            cfg.em.clamp_scale = number_at(tr.at("scale"), "config.truncation.scale");
        if (tr.contains("exponent"))
            cfg.em.clamp_exponent = number_at(tr.at("exponent"), "config.truncation.exponent");
    }
    if (doc.contains("error_at")) {
        const std::string where = string_at(doc.at("error_at"), "config.error_at");
        if (where != "terminal" && where != "sup") fail("config.error_at", "expected terminal | sup");
        cfg.sup_error = (where == "sup");
    }
    if (doc.contains("output_dir")) cfg.output_dir = string_at(doc.at("output_dir"), "config.output_dir");

    if (doc.contains("study") && !doc.at("study").is_null()) {
        const json& st = doc.at("study");
        const std::string type = string_at(member(st, "type", "config.study"), "config.study.type");
        if (type == "k") {
            cfg.study.type = StudySpec::Type::K;
            const json& kv = member(st, "k_values", "config.study");
            if (!kv.is_array() || kv.size() < 3) fail("config.study.k_values", "expected >= 3 values");
            for (std::size_t i = 0; i < kv.size(); ++i)
                cfg.study.k_values.push_back(static_cast<int>(
                    integer_at(kv[i], "config.study.k_values[" + std::to_string(i) + "]")));
            cfg.study.k_ref =
                static_cast<int>(integer_at(member(st, "k_ref", "config.study"), "config.study.k_ref"));
            if (!(static_cast<double>(cfg.study.k_values.back()) > cfg.grid.t_final))
                fail("config.study.k_values", "largest k must exceed grid.T");
        } else if (type == "dt") {
            cfg.study.type = StudySpec::Type::Dt;
            if (!(static_cast<double>(cfg.grid.horizon) > cfg.grid.t_final))
                fail("config.grid.k", "window length must exceed grid.T for step-size studies");
            const json& dv = member(st, "dt_values", "config.study");
            if (!dv.is_array() || dv.size() < 3) fail("config.study.dt_values", "expected >= 3 values");
            for (std::size_t i = 0; i < dv.size(); ++i)
                cfg.study.dt_values.push_back(
                    number_at(dv[i], "config.study.dt_values[" + std::to_string(i) + "]"));
            cfg.study.dt_ref = number_at(member(st, "dt_ref", "config.study"), "config.study.dt_ref");
            if (std::abs(1.0 / cfg.study.dt_ref - cfg.grid.k1) > 1e-9)
                fail("config.grid.k1", "must equal 1/dt_ref (the finest grid) for step-size studies");
        } else {
            fail("config.study.type", "expected k | dt");
        }
    }

    // Fading rate must stay strictly below every aggregate measure's moment
    // boundary, otherwise the phase-space norm of the history diverges.
    const double margin = cfg.setup.moment_margin();
    if (!(margin > 0.0))
        fail("config.r", "fading rate " + std::to_string(cfg.setup.fading_rate) +
                             " is at or beyond an aggregate measure's moment boundary");

    // Normalized echo of the document for manifests and replay.
    json resolved = doc;
    resolved["scheme"] = cfg.scheme;
    resolved["samples"] = cfg.samples;
    resolved["parallelism"] = cfg.parallelism;
    resolved["guard"] = cfg.em.guard;
    resolved["output_dir"] = cfg.output_dir;
    resolved["seeds"] =
        json{{"master", cfg.seeds.master}, {"noise", cfg.seeds.noise}, {"regime", cfg.seeds.regime}};
    resolved["error_at"] = cfg.sup_error ? "sup" : "terminal";
    resolved["model"] = model_to_json(doc.at("model"));
    cfg.resolved = std::move(resolved);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    json doc;
    try {
        if (path == "-") {
            doc = json::parse(std::cin);
        } else {
            std::ifstream in(path);
            if (!in) throw ConfigError("cannot open config file '" + path + "'");
            doc = json::parse(in);
        }
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return parse_config(doc);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' must look like path.to.key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw; // plain string
    }

    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

json preset_config(const std::string& name) {
    json base{{"scheme", "auto"},
              {"seeds", json{{"master", 42}}},
              {"samples", 1000},
              {"parallelism", 1},
              {"guard", 1e8}};
    if (name == "example54-k") {
        base["model"] = json{{"id", "volatility54"}};
        base["grid"] = json{{"k1", 64}, {"k", 50}, {"T", 10.0}};
        base["study"] = json{{"type", "k"}, {"k_values", {4, 6, 8, 10, 12}}, {"k_ref", 50}};
        base["output_dir"] = "out/example54-k";
        return base;
    }
    if (name == "example54-dt") {
        base["model"] = json{{"id", "volatility54"}};
        base["grid"] = json{{"k1", 4096}, {"k", 14}, {"T", 10.0}};
        base["study"] =
            json{{"type", "dt"},
                 {"dt_values", {0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125}},
                 {"dt_ref", 0.000244140625}};
        base["output_dir"] = "out/example54-dt";
        return base;
    }
    if (name == "example55-k") {
        base["model"] = json{{"id", "lotka55"}};
        base["grid"] = json{{"k1", 64}, {"k", 50}, {"T", 10.0}};
        base["study"] = json{{"type", "k"}, {"k_values", {4, 6, 8, 10, 12}}, {"k_ref", 50}};
        base["output_dir"] = "out/example55-k";
        return base;
    }
    if (name == "example55-dt") {
        base["model"] = json{{"id", "lotka55"}};
        base["grid"] = json{{"k1", 4096}, {"k", 30}, {"T", 10.0}};
        base["study"] =
            json{{"type", "dt"},
                 {"dt_values", {0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125}},
                 {"dt_ref", 0.000244140625}};
        base["output_dir"] = "out/example55-dt";
        return base;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"example54-k", "example54-dt", "example55-k", "example55-dt"};
}

} // namespace sfde
