#include <sfde/drivers.hpp>

#include <sfde/errors.hpp>
#include <sfde/integrator.hpp>
#include <sfde/mc.hpp>
#include <sfde/noise.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

namespace sfde {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string resolve_output_dir(const RunConfig& cfg) {
    if (const char* root = std::getenv("SFDE_OUTPUT_ROOT"); root && *root)
        return (fs::path(root) / cfg.output_dir).string();
    return cfg.output_dir;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file '" + path.string() + "'");
    out << content;
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream os;
    os << 't';
    for (int i = 1; i <= traj.states.rows(); ++i) os << ",x_" << i;
    os << ",regime\n";
    for (long j = 0; j <= traj.n_steps(); ++j) {
        os << format_g17(traj.time_at(j));
        for (Eigen::Index i = 0; i < traj.states.rows(); ++i)
            os << ',' << format_g17(traj.states(i, j));
        os << ',' << traj.regimes[static_cast<std::size_t>(j)] << '\n';
    }
    return os.str();
}

std::string study_csv(const StudyResult& res) {
    std::ostringstream os;
    os << "param,mse,rmse,stderr,samples\n";
    for (const auto& p : res.points)
        os << format_g17(p.param) << ',' << format_g17(p.mse) << ',' << format_g17(p.rmse) << ','
           << format_g17(p.stderr_mse) << ',' << p.samples << '\n';
    return os.str();
}

std::string plot_script(const StudyResult& res) {
    std::ostringstream os;
    os << "# Regenerates the study figure from study.csv in this directory:\n"
          "#   gnuplot plot.gp\n"
          "set datafile separator comma\n"
          "set terminal pngcairo size 900,620\n"
          "set output 'study.png'\n"
          "set key top right\n";
    if (res.axis == "k") {
        os << "set xlabel 'truncation window k'\n"
              "set ylabel 'mean square error at T'\n"
              "set logscale y\n"
              "plot 'study.csv' skip 1 using 1:2 with linespoints lw 2 pt 7 title 'MSE', \\\n"
              "     'study.csv' skip 1 using 1:2:(3*column(4)) with yerrorbars pt 0 title '3 s.e.'\n";
    } else {
        os << "set xlabel 'step size'\n"
              "set ylabel 'root mean square error at T'\n"
              "set logscale xy\n"
              "plot 'study.csv' skip 1 using 1:3 with linespoints lw 2 pt 7 title 'RMSE'\n";
    }
    return os.str();
}

json seeds_json(const Seeds& s) {
    return json{{"master", s.master}, {"noise", s.noise}, {"regime", s.regime}};
}

} // namespace

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    if (cfg.study.type != StudySpec::Type::None)
        throw ConfigError("config.study: simulate does not take a study block (use the study subcommand)");
    const SchemeKind scheme = resolve_scheme(cfg.scheme, cfg.setup.model);
    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);

    const long n_steps = cfg.grid.n_steps();
    const NoiseSource noise(cfg.seeds.noise, cfg.setup.model.brownian_dim, cfg.grid.k1);
    const TransitionMatrix tm = transition_matrix(cfg.setup.generator, cfg.grid.dt());

    struct SampleOut {
        std::string csv;
        bool blown = false;
        std::string error;
    };
    std::vector<SampleOut> results(static_cast<std::size_t>(cfg.samples));

    detail::for_each_sample(cfg.samples, cfg.parallelism, [&](long s) {
        const Eigen::MatrixXd inc = noise.fine_increments(static_cast<std::uint32_t>(s), n_steps);
        const RegimePath regimes =
            sample_regime_path(tm, cfg.setup.initial_state, n_steps,
                               RegimeUniforms(cfg.seeds.regime, static_cast<std::uint32_t>(s)));
        auto& out = results[static_cast<std::size_t>(s)];
        try {
            out.csv = trajectory_csv(integrate(cfg.setup, cfg.grid, regimes, inc, scheme, cfg.em));
        } catch (const BlowUpError& e) {
            out.blown = true;
            out.error = e.what();
        }
    });

    json outputs = json::array();
    long blown = 0;
    for (long s = 0; s < cfg.samples; ++s) {
        char name[48];
        std::snprintf(name, sizeof(name), "trajectory_%06ld.csv", s);
        const auto& r = results[static_cast<std::size_t>(s)];
        json entry{{"sample", s}, {"file", name}};
        if (r.blown) {
            ++blown;
            entry["status"] = "blowup";
            entry["error"] = r.error;
        } else {
            entry["status"] = "ok";
            write_file(dir / name, r.csv);
        }
        outputs.push_back(entry);
    }

    json manifest{{"command", "simulate"},
                  {"config", cfg.resolved},
                  {"scheme", scheme_name(scheme)},
                  {"seeds", seeds_json(cfg.seeds)},
                  {"outputs", outputs}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    log << "simulate: " << (cfg.samples - blown) << "/" << cfg.samples << " trajectories written to "
        << dir.string() << "\n";
    return blown == cfg.samples ? kExitAllBlowUp : kExitOk;
}

int cmd_study(const RunConfig& cfg, std::ostream& log) {
    if (cfg.study.type == StudySpec::Type::None)
        throw ConfigError("config.study: study subcommand needs a study block");

    McOptions opts;
    opts.samples = cfg.samples;
    opts.parallelism = cfg.parallelism;
    opts.seeds = cfg.seeds;
    opts.scheme = resolve_scheme(cfg.scheme, cfg.setup.model);
    opts.em = cfg.em;
    opts.sup_error = cfg.sup_error;

    StudyResult res;
    if (cfg.study.type == StudySpec::Type::K) {
        res = k_study(cfg.setup, cfg.study.k_values, cfg.study.k_ref, cfg.grid.k1, cfg.grid.t_final,
                      opts);
    } else {
        std::vector<int> k1_values;
        for (double dt : cfg.study.dt_values) {
            const double raw = 1.0 / dt;
            const int k1 = static_cast<int>(std::llround(raw));
            if (std::abs(raw - k1) > 1e-9)
                throw ConfigError("config.study.dt_values: dt=" + format_g17(dt) +
                                  " is not the reciprocal of an integer");
            k1_values.push_back(k1);
        }
        const double raw_ref = 1.0 / cfg.study.dt_ref;
        const int k1_ref = static_cast<int>(std::llround(raw_ref));
        if (std::abs(raw_ref - k1_ref) > 1e-9)
            throw ConfigError("config.study.dt_ref: not the reciprocal of an integer");
        res = dt_study(cfg.setup, k1_values, k1_ref, cfg.grid.horizon, cfg.grid.t_final, opts);
    }

    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);
    write_file(dir / "study.csv", study_csv(res));

    json summary{{"axis", res.axis},
                 {"slope", res.slope},
                 {"intercept", res.intercept},
                 {"residual", res.residual},
                 {"fit_valid", res.fit_valid},
                 {"model", res.model_id},
                 {"scheme", res.scheme},
                 {"seeds", seeds_json(res.seeds)},
                 {"samples", res.samples},
                 {"config", cfg.resolved}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    write_file(dir / "plot.gp", plot_script(res));

    for (const auto& p : res.points)
        log << "  param=" << format_g17(p.param) << "  mse=" << format_g17(p.mse)
            << "  rmse=" << format_g17(p.rmse) << "  se=" << format_g17(p.stderr_mse) << "\n";
    log << "study: axis=" << res.axis << " slope=" << format_g17(res.slope)
        << " residual=" << format_g17(res.residual) << " -> " << dir.string() << "\n";

    // Guard band on the fitted strong order for step-size studies; all-zero
    // errors mean the truncation was a no-op and there is nothing to fit.
    if (cfg.study.type == StudySpec::Type::Dt && res.fit_valid &&
        (res.slope < 0.2 || res.slope > 0.8)) {
        log << "study: fitted slope " << format_g17(res.slope) << " outside the guard band [0.2, 0.8]\n";
        return kExitInvariant;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate: staged self-checks.  Stages run independently so that one broken
// piece of the configuration does not hide reports about the others.
// ---------------------------------------------------------------------------

namespace {

class CheckReport {
public:
    explicit CheckReport(std::ostream& log) : log_(log) {}

    template <class Fn>
    void stage(const std::string& name, Fn&& fn) {
        try {
            fn();
            log_ << "[ ok ] " << name << "\n";
        } catch (const std::exception& e) {
            failed_ = true;
            log_ << "[fail] " << name << ": " << e.what() << "\n";
        }
    }

    void skip(const std::string& name, const std::string& why) {
        log_ << "[skip] " << name << ": " << why << "\n";
    }

    bool failed() const { return failed_; }

private:
    std::ostream& log_;
    bool failed_ = false;
};

void expect(bool cond, const std::string& what) {
    if (!cond) throw InternalConsistencyError(what);
}

std::vector<DelayAggregateSpec> collect_aggregates(const ModelSetup& setup) {
    std::vector<DelayAggregateSpec> out = setup.model.drift_aggregates;
    out.insert(out.end(), setup.model.diffusion_aggregates.begin(),
               setup.model.diffusion_aggregates.end());
    return out;
}

} // namespace

int cmd_validate(const json& doc, std::ostream& log) {
    CheckReport report(log);

    // Raw-piece checks first: these must produce readable failures even when
    // the full config cannot be parsed.
    report.stage("measure definitions", [&] {
        if (doc.contains("model") && doc.at("model").contains("aggregate"))
            (void)measure_from_json(doc.at("model").at("aggregate"), "config.model.aggregate");
    });
    report.stage("generator matrix", [&] {
        if (!doc.contains("generator")) return;
        const auto& g = doc.at("generator");
        expect(g.is_array() && !g.empty(), "generator must be a nonempty matrix");
        const std::size_t n = g.size();
        Eigen::MatrixXd gamma(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            expect(g[i].is_array() && g[i].size() == n, "generator must be square");
            for (std::size_t j = 0; j < n; ++j) gamma(i, j) = g[i][j].get<double>();
        }
        (void)RegimeGenerator(gamma); // throws NonGeneratorError on bad rows
    });

    RunConfig cfg;
    bool parsed = false;
    report.stage("config schema", [&] {
        cfg = parse_config(doc);
        parsed = true;
    });
    if (!parsed) {
        report.skip("transition matrix", "config did not parse");
        report.skip("discretized mass", "config did not parse");
        report.skip("fading-rate integrability", "config did not parse");
        report.skip("fast aggregation", "config did not parse");
    } else {
        report.stage("transition matrix", [&] {
            const TransitionMatrix tm = transition_matrix(cfg.setup.generator, cfg.grid.dt());
            for (Eigen::Index i = 0; i < tm.P.rows(); ++i)
                expect(std::abs(tm.P.row(i).sum() - 1.0) <= 1e-12, "row sums differ from 1");
            const TransitionMatrix tm2 = transition_matrix(cfg.setup.generator, 2.0 * cfg.grid.dt());
            expect((tm2.P - tm.P * tm.P).cwiseAbs().maxCoeff() <= 1e-10,
                   "semigroup property violated");
        });
        report.stage("discretized mass conservation", [&] {
            for (const auto& spec : collect_aggregates(cfg.setup)) {
                const DiscretizedMeasure d = discretize(spec.measure, cfg.grid.k1, cfg.grid.horizon);
                expect(std::abs(total_mass(d) - 1.0) <= 1e-12, "weights plus tail differ from 1");
                expect(d.weights.minCoeff() >= 0.0 && d.tail >= 0.0, "negative cell weight");
            }
        });
        report.stage("fading-rate integrability", [&] {
            expect(cfg.setup.moment_margin() > 0.0,
                   "fading rate at or beyond a measure's moment boundary");
        });
        report.stage("fast aggregation matches naive", [&] {
            const DelayAggregateSpec spec{DelayMeasure::exponential(1.0), Transform::Square};
            HistoryWindow w(1, 32, 2);
            InitialSegment xi;
            xi.components = {ScalarSegment::exp_scaled(1.0, 1.0)};
            w.fill(xi);
            const DiscretizedMeasure d = discretize(spec.measure, 32, 2);
            ExpAggregateCarry carry = init_exp_carry(w, 1.0, spec);
            for (int j = 0; j < 400; ++j) {
                const Eigen::VectorXd fast = aggregate_fast_exponential(w, spec, carry);
                const Eigen::VectorXd naive = aggregate_naive(w, d, spec);
                expect((fast - naive).norm() <= 1e-10 * (1.0 + naive.norm()),
                       "fast path diverged from the weighted sum");
                Eigen::VectorXd next(1);
                next(0) = std::sin(0.1 * j) + 0.5;
                exp_carry_push(carry, w, spec);
                w.push(next);
            }
        });
    }

    report.stage("deterministic decay reduction", [&] {
        LinearTestParams p;
        p.a = -1.0;
        p.sigma = 0.0;
        p.c = 0.0;
        const ModelSetup setup = make_linear_test_model(p);
        GridSpec grid{64, 1, 1.0};
        const long n = grid.n_steps();
        RegimePath constant_path;
        constant_path.state_count = 1;
        constant_path.states.assign(static_cast<std::size_t>(n) + 1, 1);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, n);
        const Trajectory traj = em_integrate(setup.model, setup.initial, grid, constant_path, zero);
        double expected = 1.0;
        for (long j = 0; j < n; ++j) expected *= 1.0 - grid.dt();
        expect(std::abs(traj.terminal()(0) - expected) <= 1e-12, "(1-dt)^N reduction violated");
    });
    report.stage("identity chain stays constant", [&] {
        const RegimeGenerator frozen(Eigen::MatrixXd::Zero(3, 3));
        const TransitionMatrix tm = transition_matrix(frozen, 0.5);
        const RegimePath path = sample_regime_path(tm, 2, 200, RegimeUniforms(7, 0));
        for (int s : path.states) expect(s == 2, "state changed under the identity matrix");
    });

    log << (report.failed() ? "validate: FAILED\n" : "validate: all checks passed\n");
    return report.failed() ? kExitInvariant : kExitOk;
}

} // namespace sfde
