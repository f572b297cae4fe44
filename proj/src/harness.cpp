#include "badvamp/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "badvamp/badvamp.hpp"
#include "badvamp/parallel.hpp"

namespace badvamp {

namespace {

using ParamMap = std::map<std::string, double>;

constexpr double kSuccessDb = -50.0;

std::optional<double> lookup(const ParamMap& point, const ParamMap& params, const std::string& key) {
    if (auto it = point.find(key); it != point.end()) return it->second;
    if (auto it = params.find(key); it != params.end()) return it->second;
    return std::nullopt;
}

double need(const ParamMap& point, const ParamMap& params, const std::string& key) {
    if (auto v = lookup(point, params, key)) return *v;
    throw ConfigError("missing required parameter: " + key);
}

int need_int(const ParamMap& point, const ParamMap& params, const std::string& key) {
    return static_cast<int>(std::llround(need(point, params, key)));
}

int dl_training_length(int n, double l_param) {
    const int l = static_cast<int>(std::llround(l_param));
    if (l > 0) return l;
    return static_cast<int>(std::ceil(5.0 * n * std::log(static_cast<double>(n))));
}

std::vector<ParamMap> grid_points(const ExperimentConfig& cfg) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : cfg.grid) {
        if (v.empty()) throw ConfigError("grid list for '" + k + "' is empty");
        keys.push_back(k);  // std::map iterates keys in sorted order
    }
    std::vector<ParamMap> points(1);
    for (const auto& key : keys) {
        std::vector<ParamMap> expanded;
        for (const auto& p : points) {
            for (double v : cfg.grid.at(key)) {
                ParamMap q = p;
                q[key] = v;
                expanded.push_back(std::move(q));
            }
        }
        points = std::move(expanded);
    }
    return points;
}

DlMode dl_mode_from_options(const ExperimentConfig& cfg) {
    if (cfg.experiment == Experiment::kDlCond) return DlMode::kIllConditioned;
    const auto it = cfg.options.find("mode");
    if (it == cfg.options.end()) throw ConfigError("dl_phase requires options.mode");
    if (it->second == "structured") return DlMode::kStructured;
    if (it->second == "unstructured") return DlMode::kUnstructured;
    throw ConfigError("unknown dictionary-learning mode: " + it->second);
}

ProblemInstance generate_instance(const ExperimentConfig& cfg, const ParamMap& point,
                                  std::uint64_t seed) {
    const ParamMap& pp = cfg.params;
    switch (cfg.experiment) {
        case Experiment::kCsmuSweepMn:
        case Experiment::kCsmuSweepMu: {
            const int n = need_int(point, pp, "n");
            const int m = std::max(1, static_cast<int>(std::llround(need(point, pp, "mn_ratio") * n)));
            double mu = 0.0;
            if (auto v = lookup(point, pp, "mu")) mu = *v;
            return gen_csmu(m, n, need_int(point, pp, "q"), need_int(point, pp, "k"),
                            need(point, pp, "snr_db"), mu, seed);
        }
        case Experiment::kSelfcalGrid:
            return gen_selfcal(need_int(point, pp, "m"), need_int(point, pp, "n"),
                               need_int(point, pp, "q"), need_int(point, pp, "k"), seed);
        case Experiment::kDlPhase:
        case Experiment::kDlCond: {
            const int n = need_int(point, pp, "n");
            double l_param = 0.0;
            if (auto v = lookup(point, pp, "l")) l_param = *v;
            std::optional<double> snr;
            if (auto v = lookup(point, pp, "snr_db")) snr = *v;
            double kappa = 1.0;
            if (cfg.experiment == Experiment::kDlCond) kappa = need(point, pp, "kappa");
            return gen_dl(n, dl_training_length(n, l_param), need_int(point, pp, "k"),
                          dl_mode_from_options(cfg), snr, kappa, seed);
        }
    }
    throw ConfigError("unknown experiment");
}

void score_trial(const ExperimentConfig& cfg, const ProblemInstance& inst, const RunResult& run,
                 TrialRecord& rec) {
    switch (cfg.experiment) {
        case Experiment::kCsmuSweepMn:
        case Experiment::kCsmuSweepMu: {
            rec.metrics.nmse_b_db = nmse_db(inst.theta_true, run.theta_a_hat);
            rec.metrics.nmse_c_db = nmse_db(inst.x_true, run.x_hat);
            rec.metrics.success = rec.metrics.nmse_c_db <= kSuccessDb;
            rec.oracle.nmse_b_db = nmse_db(inst.theta_true, oracle_b_given_c(inst));
            rec.oracle.nmse_c_db = nmse_db(inst.x_true, oracle_c_given_b_support(inst));
            break;
        }
        case Experiment::kSelfcalGrid: {
            rec.metrics.nmse_b_db = nmse_db(inst.theta_true, run.theta_a_hat);
            rec.metrics.nmse_c_db = nmse_db(inst.x_true, run.x_hat);
            rec.metrics.rank1_nmse_db = rank1_nmse(inst.theta_true, inst.x_true.col(0),
                                                   run.theta_a_hat, run.x_hat.col(0));
            rec.metrics.success = rec.metrics.rank1_nmse_db <= kSuccessDb;
            rec.oracle.nmse_b_db = nmse_db(inst.theta_true, oracle_b_given_c(inst));
            rec.oracle.nmse_c_db = nmse_db(inst.x_true, oracle_c_given_b_support(inst));
            break;
        }
        case Experiment::kDlPhase:
        case Experiment::kDlCond: {
            const bool structured = !inst.op.unstructured;
            if (structured) {
                rec.metrics.nmse_a_db = nmse_scalar_ambiguity(inst.a_true, run.a_hat);
                rec.metrics.nmse_x_db = nmse_scalar_ambiguity(inst.x_true, run.x_hat);
                rec.oracle.nmse_a_db = nmse_scalar_ambiguity(inst.a_true, oracle_a_given_x(inst));
                rec.oracle.nmse_x_db =
                    nmse_scalar_ambiguity(inst.x_true, oracle_x_given_a_support(inst));
            } else {
                rec.metrics.nmse_a_db = nmse_genperm_ambiguity(inst.a_true, run.a_hat);
                rec.metrics.nmse_x_db = nmse_genperm_ambiguity(inst.x_true.transpose(),
                                                               run.x_hat.transpose());
                rec.oracle.nmse_a_db = nmse_genperm_ambiguity(inst.a_true, oracle_a_given_x(inst));
                rec.oracle.nmse_x_db = nmse_genperm_ambiguity(
                    inst.x_true.transpose(), oracle_x_given_a_support(inst).transpose());
            }
            rec.metrics.success = rec.metrics.nmse_a_db <= kSuccessDb;
            break;
        }
    }
}

TrialRecord run_single_trial(const ExperimentConfig& cfg, const ParamMap& point, int grid_index,
                             int trial_index) {
    TrialRecord rec;
    rec.grid_index = grid_index;
    rec.trial_index = trial_index;
    for (const auto& [k, v] : point) rec.grid_point.emplace_back(k, v);
    rec.seed = derive_seed(cfg.base_seed, static_cast<std::uint64_t>(grid_index),
                           static_cast<std::uint64_t>(trial_index), 1);
    const std::uint64_t solver_seed = derive_seed(
        cfg.base_seed, static_cast<std::uint64_t>(grid_index),
        static_cast<std::uint64_t>(trial_index), 2);

    const auto start = std::chrono::steady_clock::now();
    try {
        const ProblemInstance inst = generate_instance(cfg, point, rec.seed);

        // Prior policy: the activity rate is learned by default; noiseless
        // unstructured dictionary learning pins it at the K/N hint instead,
        // since exact-fit basins with a drifting rate are indistinguishable
        // from the truth by residual alone. Overridable via options.lambda.
        bool fix_lambda = cfg.experiment == Experiment::kDlPhase && inst.noiseless() &&
                          inst.op.unstructured;
        if (auto it = cfg.options.find("lambda"); it != cfg.options.end())
            fix_lambda = it->second == "fixed";
        PriorParams prior = PriorParams::bernoulli_gaussian(
            fix_lambda ? std::min(1.0, double(inst.meta.k) / inst.op.cols()) : 0.1, 1.0);
        prior.learn_lambda = !fix_lambda;
        prior.learn_variance = true;

        Rng solver_rng(solver_seed);
        const RunResult run = run_badvamp_with_restarts(inst.y, inst.op, cfg.solver, prior,
                                                        solver_rng, inst.meta.k);
        rec.iterations = run.iterations;
        rec.restarts = run.restarts_used;
        score_trial(cfg, inst, run, rec);
    } catch (const std::exception&) {
        rec.metrics = Metrics{};  // NaN-coded, success = false
    }
    if (cfg.record_timing) {
        rec.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
    }
    return rec;
}

std::string format_db(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string format_general(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string summary_path_for(const std::string& path) {
    const auto dot = path.find_last_of('.');
    const auto slash = path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + "_summary";
    return path.substr(0, dot) + "_summary" + path.substr(dot);
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "nmse_b_db", "nmse_c_db", "nmse_a_db", "nmse_x_db", "rank1_nmse_db"};
    return names;
}

double metric_by_name(const Metrics& m, const std::string& name) {
    if (name == "nmse_b_db") return m.nmse_b_db;
    if (name == "nmse_c_db") return m.nmse_c_db;
    if (name == "nmse_a_db") return m.nmse_a_db;
    if (name == "nmse_x_db") return m.nmse_x_db;
    return m.rank1_nmse_db;
}

}  // namespace

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::kCsmuSweepMn: return "csmu_sweep_mn";
        case Experiment::kCsmuSweepMu: return "csmu_sweep_mu";
        case Experiment::kSelfcalGrid: return "selfcal_grid";
        case Experiment::kDlPhase: return "dl_phase";
        case Experiment::kDlCond: return "dl_cond";
    }
    throw std::logic_error("unknown Experiment");
}

Experiment experiment_from_string(const std::string& s) {
    if (s == "csmu_sweep_mn") return Experiment::kCsmuSweepMn;
    if (s == "csmu_sweep_mu") return Experiment::kCsmuSweepMu;
    if (s == "selfcal_grid") return Experiment::kSelfcalGrid;
    if (s == "dl_phase") return Experiment::kDlPhase;
    if (s == "dl_cond") return Experiment::kDlCond;
    throw ConfigError("unknown experiment: " + s);
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("solver: ") + e.what());
    }
    // dry-run every grid point against the generator preconditions
    for (const auto& point : grid_points(*this)) {
        switch (experiment) {
            case Experiment::kCsmuSweepMn:
            case Experiment::kCsmuSweepMu: {
                const int n = need_int(point, params, "n");
                const int k = need_int(point, params, "k");
                const double ratio = need(point, params, "mn_ratio");
                need(point, params, "snr_db");
                if (need_int(point, params, "q") < 1 || k < 1 || k > n || ratio <= 0.0)
                    throw ConfigError("csmu: invalid dimensions in grid");
                break;
            }
            case Experiment::kSelfcalGrid: {
                const int m = need_int(point, params, "m");
                const int n = need_int(point, params, "n");
                const int q = need_int(point, params, "q");
                const int k = need_int(point, params, "k");
                if (m < 1 || (m & (m - 1)) != 0) throw ConfigError("selfcal: m must be a power of two");
                if (q < 1 || q > m || k < 1 || k > n)
                    throw ConfigError("selfcal: invalid dimensions in grid");
                break;
            }
            case Experiment::kDlPhase:
            case Experiment::kDlCond: {
                const int n = need_int(point, params, "n");
                const int k = need_int(point, params, "k");
                if (n < 1 || k < 1 || k > n) throw ConfigError("dl: invalid dimensions in grid");
                dl_mode_from_options(*this);
                if (experiment == Experiment::kDlCond) {
                    if (need(point, params, "kappa") < 1.0)
                        throw ConfigError("dl_cond: kappa must be >= 1");
                    need(point, params, "snr_db");
                }
                break;
            }
        }
    }
}

std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<ParamMap> points = grid_points(cfg);
    const int total = static_cast<int>(points.size()) * cfg.trials;
    std::vector<TrialRecord> records(total);

#pragma omp parallel for schedule(dynamic) num_threads(parallel::threads())
    for (int idx = 0; idx < total; ++idx) {
        const int g = idx / cfg.trials;
        const int k = idx % cfg.trials;
        records[idx] = run_single_trial(cfg, points[g], g, k);
    }
    return records;
}

void emit_csv(const std::vector<TrialRecord>& records, const std::string& path) {
    if (records.empty()) throw std::invalid_argument("emit_csv: no records");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);

    std::vector<std::string> grid_keys;
    for (const auto& [k, v] : records.front().grid_point) grid_keys.push_back(k);

    for (const auto& k : grid_keys) out << k << ",";
    out << "seed";
    for (const auto& m : metric_names()) out << "," << m;
    out << ",success";
    for (const auto& m : metric_names()) out << ",oracle_" << m;
    out << ",iterations,restarts,wall_time_ms\n";

    for (const auto& rec : records) {
        for (const auto& [k, v] : rec.grid_point) out << format_general(v) << ",";
        out << rec.seed;
        for (const auto& m : metric_names()) out << "," << format_db(metric_by_name(rec.metrics, m));
        out << "," << (rec.metrics.success ? 1 : 0);
        for (const auto& m : metric_names()) out << "," << format_db(metric_by_name(rec.oracle, m));
        out << "," << rec.iterations << "," << rec.restarts << ","
            << format_general(rec.wall_time_ms) << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
    out.close();

    // companion summary: per-grid-point medians and success rate
    std::map<int, std::vector<const TrialRecord*>> by_point;
    for (const auto& rec : records) by_point[rec.grid_index].push_back(&rec);

    const std::string spath = summary_path_for(path);
    std::ofstream sum(spath);
    if (!sum) throw IoError("cannot open for writing: " + spath);
    for (const auto& k : grid_keys) sum << k << ",";
    sum << "trials";
    for (const auto& m : metric_names()) sum << ",median_" << m;
    sum << ",success_rate\n";
    for (const auto& [g, recs] : by_point) {
        for (const auto& [k, v] : recs.front()->grid_point) sum << format_general(v) << ",";
        sum << recs.size();
        for (const auto& m : metric_names()) {
            std::vector<double> vals;
            for (const auto* r : recs) vals.push_back(metric_by_name(r->metrics, m));
            sum << "," << format_db(median_ignoring_nan(std::move(vals)));
        }
        double rate = 0.0;
        for (const auto* r : recs) rate += r->metrics.success ? 1.0 : 0.0;
        sum << "," << format_db(rate / recs.size()) << "\n";
    }
    if (!sum) throw IoError("write failed: " + spath);
}

namespace {

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["nmse_b_db"] = m.nmse_b_db;
    j["nmse_c_db"] = m.nmse_c_db;
    j["nmse_a_db"] = m.nmse_a_db;
    j["nmse_x_db"] = m.nmse_x_db;
    j["rank1_nmse_db"] = m.rank1_nmse_db;
    j["success"] = m.success;
    return j;
}

Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    auto get = [&](const char* key) {
        const auto& v = j.at(key);
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    };
    m.nmse_b_db = get("nmse_b_db");
    m.nmse_c_db = get("nmse_c_db");
    m.nmse_a_db = get("nmse_a_db");
    m.nmse_x_db = get("nmse_x_db");
    m.rank1_nmse_db = get("rank1_nmse_db");
    m.success = j.at("success").get<bool>();
    return m;
}

}  // namespace

void emit_json(const std::vector<TrialRecord>& records, const std::string& path) {
    if (records.empty()) throw std::invalid_argument("emit_json: no records");
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& rec : records) {
        nlohmann::json j;
        nlohmann::json gp = nlohmann::json::object();
        for (const auto& [k, v] : rec.grid_point) gp[k] = v;
        j["grid_point"] = gp;
        j["grid_index"] = rec.grid_index;
        j["trial_index"] = rec.trial_index;
        j["seed"] = rec.seed;
        j["metrics"] = metrics_to_json(rec.metrics);
        j["oracle"] = metrics_to_json(rec.oracle);
        j["iterations"] = rec.iterations;
        j["restarts"] = rec.restarts;
        j["wall_time_ms"] = rec.wall_time_ms;
        arr.push_back(std::move(j));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << arr.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<TrialRecord> records_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    nlohmann::json arr;
    in >> arr;
    std::vector<TrialRecord> records;
    for (const auto& j : arr) {
        TrialRecord rec;
        for (const auto& [k, v] : j.at("grid_point").items())
            rec.grid_point.emplace_back(k, v.get<double>());
        std::sort(rec.grid_point.begin(), rec.grid_point.end());
        rec.grid_index = j.at("grid_index").get<int>();
        rec.trial_index = j.at("trial_index").get<int>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.metrics = metrics_from_json(j.at("metrics"));
        rec.oracle = metrics_from_json(j.at("oracle"));
        rec.iterations = j.at("iterations").get<int>();
        rec.restarts = j.at("restarts").get<int>();
        rec.wall_time_ms = j.at("wall_time_ms").is_null() ? 0.0
                                                          : j.at("wall_time_ms").get<double>();
        records.push_back(std::move(rec));
    }
    return records;
}

void emit(const std::vector<TrialRecord>& records, EmitFormat format, const std::string& path) {
    if (format == EmitFormat::kCsv)
        emit_csv(records, path);
    else
        emit_json(records, path);
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "experiment")
                cfg.experiment = experiment_from_string(value.get<std::string>());
            else if (key == "grid")
                for (const auto& [k, v] : value.items())
                    cfg.grid[k] = v.get<std::vector<double>>();
            else if (key == "params")
                for (const auto& [k, v] : value.items()) cfg.params[k] = v.get<double>();
            else if (key == "options")
                for (const auto& [k, v] : value.items()) cfg.options[k] = v.get<std::string>();
            else if (key == "trials")
                cfg.trials = value.get<int>();
            else if (key == "base_seed")
                cfg.base_seed = value.get<std::uint64_t>();
            else if (key == "output_path")
                cfg.output_path = value.get<std::string>();
            else if (key == "format")
                cfg.format = value.get<std::string>() == "json" ? EmitFormat::kJson
                                                                : EmitFormat::kCsv;
            else if (key == "record_timing")
                cfg.record_timing = value.get<bool>();
            else if (key == "solver") {
                for (const auto& [k, v] : value.items()) {
                    if (k == "t_max") cfg.solver.t_max = v.get<int>();
                    else if (k == "tau1_max") cfg.solver.tau1_max = v.get<int>();
                    else if (k == "tau2_max") cfg.solver.tau2_max = v.get<int>();
                    else if (k == "zeta") cfg.solver.zeta = v.get<double>();
                    else if (k == "gamma_min") cfg.solver.gamma_min = v.get<double>();
                    else if (k == "gamma_max") cfg.solver.gamma_max = v.get<double>();
                    else if (k == "tol") cfg.solver.tol = v.get<double>();
                    else if (k == "restarts") cfg.solver.restarts = v.get<int>();
                    else if (k == "gamma1_init") cfg.solver.gamma1_init = v.get<double>();
                    else if (k == "auto_tune") cfg.solver.auto_tune = v.get<bool>();
                    else if (k == "symmetric_damping") cfg.solver.symmetric_damping = v.get<bool>();
                    else if (k == "restart_residual_db")
                        cfg.solver.restart_residual_db = v.get<double>();
                    else if (k == "prior_warmup") cfg.solver.prior_warmup = v.get<int>();
                    else if (k == "auto_tune_warmup") cfg.solver.auto_tune_warmup = v.get<int>();
                    else
                        throw ConfigError("unknown solver key: " + k);
                }
            } else {
                throw ConfigError("unknown config key: " + key);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = to_string(cfg.experiment);
    j["grid"] = cfg.grid;
    j["params"] = cfg.params;
    if (!cfg.options.empty()) j["options"] = cfg.options;
    j["trials"] = cfg.trials;
    j["base_seed"] = cfg.base_seed;
    j["output_path"] = cfg.output_path;
    j["format"] = cfg.format == EmitFormat::kJson ? "json" : "csv";
    j["record_timing"] = cfg.record_timing;
    nlohmann::json s;
    s["t_max"] = cfg.solver.t_max;
    s["tau1_max"] = cfg.solver.tau1_max;
    s["tau2_max"] = cfg.solver.tau2_max;
    s["zeta"] = cfg.solver.zeta;
    s["gamma_min"] = cfg.solver.gamma_min;
    s["gamma_max"] = cfg.solver.gamma_max;
    s["tol"] = cfg.solver.tol;
    s["restarts"] = cfg.solver.restarts;
    s["gamma1_init"] = cfg.solver.gamma1_init;
    s["auto_tune"] = cfg.solver.auto_tune;
    s["symmetric_damping"] = cfg.solver.symmetric_damping;
    s["restart_residual_db"] = cfg.solver.restart_residual_db;
    s["prior_warmup"] = cfg.solver.prior_warmup;
    s["auto_tune_warmup"] = cfg.solver.auto_tune_warmup;
    j["solver"] = s;
    return j;
}

double median_ignoring_nan(std::vector<double> values) {
    values.erase(std::remove_if(values.begin(), values.end(),
                                [](double v) { return std::isnan(v); }),
                 values.end());
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace badvamp
