#pragma once
// tissue/experiment.hpp: the repeatable experiment pipeline. A plan names a
// config, training datasets, labeled evaluation datasets, a repeat count and
// a base seed; the runner replays each dataset repeats times (run i uses
// seed base_seed+i, recorded in its manifest), generates the union policy
// and per-syscall statistics, evaluates naive and generated policies on the
// labeled data, and writes everything as CSV. A signal-compare plan instead
// runs the signal-coupled arm, measures its mean producer action time, and
// reruns with that value fixed for a like-for-like comparison.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tissue/config.hpp"
#include "tissue/engine.hpp"
#include "tissue/policy.hpp"
#include "tissue/replay.hpp"
#include "tissue/server.hpp"
#include "tissue/twocell.hpp"

namespace tissue {

struct ExperimentPlan {
    enum class Mode { deterministic, realtime };

    ExperimentConfig config;
    std::vector<std::string> datasets;  // replay logs to train on
    std::vector<std::string> evals;     // labeled logs to evaluate against
    std::size_t repeats = 1;
    std::uint64_t base_seed = 1;
    Mode mode = Mode::deterministic;
    double accel = 1.0;  // clock and replay speed-up in realtime mode
    std::string out;     // output directory; empty keeps everything in memory
    bool signal_compare = false;
};

// Plan file: key=value lines; dataset= and eval= may repeat.
inline ExperimentPlan parse_plan(std::istream& in) {
    ExperimentPlan plan;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("plan line " + std::to_string(lineno) + " is not key=value: '" +
                              line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key == "config") {
            std::ifstream f(value);
            if (!f) throw ConfigError("plan: cannot open config file '" + value + "'");
            plan.config = parse_config(f);
        } else if (key == "dataset") {
            plan.datasets.push_back(value);
        } else if (key == "eval") {
            plan.evals.push_back(value);
        } else if (key == "repeats") {
            plan.repeats = detail::parse_u64(key, value);
        } else if (key == "base_seed") {
            plan.base_seed = detail::parse_u64(key, value);
        } else if (key == "mode") {
            if (value == "deterministic") plan.mode = ExperimentPlan::Mode::deterministic;
            else if (value == "realtime") plan.mode = ExperimentPlan::Mode::realtime;
            else throw ConfigError("plan: mode must be deterministic or realtime");
        } else if (key == "accel") {
            try {
                plan.accel = std::stod(value);
            } catch (const std::exception&) {
                throw ConfigError("plan: bad accel value '" + value + "'");
            }
            if (plan.accel <= 0.0) throw ConfigError("plan: accel must be > 0");
        } else if (key == "out") {
            plan.out = value;
        } else if (key == "signal_compare") {
            plan.signal_compare = detail::parse_bool(key, value);
        } else {
            throw ConfigError("plan: unknown key '" + key + "'");
        }
    }
    if (plan.repeats == 0) throw ConfigError("plan: repeats must be >= 1");
    if (plan.datasets.empty()) throw ConfigError("plan: at least one dataset= required");
    return plan;
}

// Events and responses bucketed into 1 s bins, long enough for both series.
struct RateSeries {
    std::vector<std::size_t> antigen;
    std::vector<std::size_t> responses;
};

inline RateSeries rate_series(const std::vector<InputEvent>& log,
                              const std::vector<ResponseRecord>& responses) {
    RateSeries series;
    auto bucket = [](std::uint64_t t_us) { return static_cast<std::size_t>(t_us / 1000000); };
    std::size_t buckets = 0;
    for (const auto& e : log)
        if (e.kind == InputEvent::Kind::antigen) buckets = std::max(buckets, bucket(e.t_us) + 1);
    for (const auto& r : responses) buckets = std::max(buckets, bucket(r.t_us) + 1);
    series.antigen.assign(buckets, 0);
    series.responses.assign(buckets, 0);
    for (const auto& e : log)
        if (e.kind == InputEvent::Kind::antigen) ++series.antigen[bucket(e.t_us)];
    for (const auto& r : responses) ++series.responses[bucket(r.t_us)];
    return series;
}

// Response-burst summary used by the signal comparison: span between first
// and last response plus the strongest 1 s bucket.
struct BurstShape {
    bool any = false;
    std::uint64_t first_us = 0;
    std::uint64_t last_us = 0;
    std::uint64_t duration_us = 0;
    std::size_t peak_bucket = 0;  // seconds
    std::size_t peak_count = 0;
};

inline BurstShape burst_shape(const std::vector<ResponseRecord>& responses) {
    BurstShape shape;
    if (responses.empty()) return shape;
    shape.any = true;
    shape.first_us = responses.front().t_us;
    shape.last_us = responses.front().t_us;
    std::map<std::size_t, std::size_t> buckets;
    for (const auto& r : responses) {
        shape.first_us = std::min(shape.first_us, r.t_us);
        shape.last_us = std::max(shape.last_us, r.t_us);
        ++buckets[static_cast<std::size_t>(r.t_us / 1000000)];
    }
    shape.duration_us = shape.last_us - shape.first_us;
    for (const auto& [b, c] : buckets) {
        if (c > shape.peak_count) {
            shape.peak_count = c;
            shape.peak_bucket = b;
        }
    }
    return shape;
}

struct RunOutput {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string dataset;
    Transcript transcript;
    Policy policy;
    double mean_action_time = 0.0;
};

struct ExperimentReport {
    Policy naive;
    AggregateResult aggregate;
    std::vector<RunOutput> runs;
    std::vector<std::string> eval_names;
    std::vector<EvalRow> dataset_rows;  // label composition, one per eval
    std::vector<EvalRow> naive_rows;
    std::vector<EvalRow> generated_rows;
    // Signal comparison numbers (signal_compare plans only).
    double mean_action_time = 0.0;
    std::uint32_t fixed_action_time = 0;
};

namespace experiment_detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

inline std::vector<InputEvent> strip_signals(const std::vector<InputEvent>& log) {
    std::vector<InputEvent> out;
    out.reserve(log.size());
    for (const auto& e : log)
        if (e.kind == InputEvent::Kind::antigen) out.push_back(e);
    return out;
}

// One complete run of the twocell server over a log, in either mode.
inline Transcript run_once(const ExperimentConfig& cfg, const std::vector<InputEvent>& log,
                           std::uint64_t seed, ExperimentPlan::Mode mode, double accel,
                           TwocellHandles* handles) {
    CellAlgorithm alg = make_twocell(cfg, handles);
    if (mode == ExperimentPlan::Mode::deterministic) {
        RunOptions opt;
        opt.seed = seed;
        return run_replay_deterministic(cfg, alg, log, opt);
    }

    ServerOptions opt;
    opt.seed = seed;
    auto listener = std::make_unique<TcpListener>(parse_endpoint(cfg.listen));
    TissueServer server(cfg, alg, RunClock::accelerated(accel), std::move(listener), opt);
    server.start();
    Endpoint ep = parse_endpoint(server.endpoint());

    // A log with signal events needs the signal connection only when the
    // compartment has signal slots; otherwise the events are dropped here
    // rather than bounced off the server as protocol errors.
    std::vector<InputEvent> to_send = log;
    bool want_signals = cfg.tissue.max_cytokines > 0;
    if (!want_signals) to_send = strip_signals(log);
    bool has_signals = false;
    for (const auto& e : to_send)
        if (e.kind == InputEvent::Kind::signal) has_signals = true;

    auto antigen_conn = connect_tcp(ep);
    std::unique_ptr<Stream> signal_conn;
    if (has_signals) signal_conn = connect_tcp(ep);
    ReplayResult rr = replay(to_send, accel, antigen_conn.get(), signal_conn.get());
    antigen_conn.reset();
    signal_conn.reset();
    Transcript t = server.finish();
    if (!rr.ok())
        throw std::runtime_error("replay aborted with " + std::to_string(rr.unsent) +
                                 " unsent events");
    return t;
}

inline std::vector<InputEvent> load_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset '" + path + "'");
    return read_replay_log(f);
}

inline DatasetLabels load_labels(const std::string& log_path) {
    std::ifstream f(log_path + ".labels");
    if (!f) throw std::runtime_error("cannot open labels '" + log_path + ".labels'");
    return read_labels(f);
}

inline std::string rates_csv(const std::vector<RunOutput>& runs,
                             const std::vector<std::vector<InputEvent>>& logs,
                             const std::vector<std::string>& dataset_names) {
    std::string out = "run,dataset,bucket_s,antigen,responses\n";
    for (const auto& run : runs) {
        std::size_t d = 0;
        for (std::size_t i = 0; i < dataset_names.size(); ++i)
            if (dataset_names[i] == run.dataset) d = i;
        RateSeries series = rate_series(logs[d], run.transcript.responses);
        for (std::size_t b = 0; b < series.antigen.size(); ++b) {
            out += std::to_string(run.index) + "," + run.dataset + "," + std::to_string(b) + "," +
                   std::to_string(series.antigen[b]) + "," + std::to_string(series.responses[b]) +
                   "\n";
        }
    }
    return out;
}

inline std::string eval_csv(const ExperimentReport& report) {
    std::string out =
        "dataset,normal_pct,attack_pct,naive_permit,naive_deny,twocell_permit,twocell_deny\n";
    for (std::size_t i = 0; i < report.eval_names.size(); ++i) {
        out += report.eval_names[i] + "," + std::to_string(report.dataset_rows[i].normal_pct) +
               "," + std::to_string(report.dataset_rows[i].attack_pct) + "," +
               std::to_string(report.naive_rows[i].permit_pct) + "," +
               std::to_string(report.naive_rows[i].deny_pct) + "," +
               std::to_string(report.generated_rows[i].permit_pct) + "," +
               std::to_string(report.generated_rows[i].deny_pct) + "\n";
    }
    return out;
}

inline void write_run_dir(const ExperimentPlan& plan, const RunOutput& run) {
    if (plan.out.empty()) return;
    std::filesystem::path dir =
        std::filesystem::path(plan.out) / ("run_" + std::to_string(run.index));
    std::filesystem::create_directories(dir);
    write_file(dir / "responses.csv", run.transcript.response_csv());
    write_file(dir / "manifest.txt", run.transcript.manifest);
}

}  // namespace experiment_detail

// The standard pipeline: repeats x datasets runs, union policy, statistics
// against the combined training data, then evaluation of both policies on
// every labeled dataset.
inline ExperimentReport run_experiment(const ExperimentPlan& plan,
                                       std::ostream* progress = nullptr) {
    namespace ed = experiment_detail;
    if (!plan.out.empty()) std::filesystem::create_directories(plan.out);

    std::vector<std::vector<InputEvent>> logs;
    for (const auto& path : plan.datasets) logs.push_back(ed::load_log(path));

    ExperimentReport report;
    report.naive = naive_policy(logs);

    std::size_t run_index = 0;
    for (std::size_t d = 0; d < logs.size(); ++d) {
        for (std::size_t i = 0; i < plan.repeats; ++i, ++run_index) {
            RunOutput run;
            run.index = run_index;
            run.seed = plan.base_seed + run_index;
            run.dataset = plan.datasets[d];
            if (progress)
                *progress << "run " << (run_index + 1) << "/" << logs.size() * plan.repeats
                          << ": dataset=" << run.dataset << " seed=" << run.seed << "\n";
            run.transcript =
                ed::run_once(plan.config, logs[d], run.seed, plan.mode, plan.accel, nullptr);
            run.policy = policy_from_responses(run.transcript.responses,
                                               "generated(run " + std::to_string(run_index) + ")");
            ed::write_run_dir(plan, run);
            report.runs.push_back(std::move(run));
        }
    }

    std::vector<InputEvent> combined;
    for (const auto& log : logs)
        for (const auto& e : log) combined.push_back(e);
    std::vector<std::vector<ResponseRecord>> response_logs;
    for (const auto& run : report.runs) response_logs.push_back(run.transcript.responses);
    report.aggregate = aggregate_policies(response_logs, combined);

    for (const auto& eval_path : plan.evals) {
        auto events = ed::load_log(eval_path);
        auto labels = ed::load_labels(eval_path);
        report.eval_names.push_back(eval_path);
        Policy permit_all;
        for (const auto& e : events)
            if (e.kind == InputEvent::Kind::antigen) permit_all.permitted.insert(e.antigen);
        report.dataset_rows.push_back(evaluate_policy(permit_all, events, labels));
        report.naive_rows.push_back(evaluate_policy(report.naive, events, labels));
        report.generated_rows.push_back(evaluate_policy(report.aggregate.policy, events, labels));
    }

    if (!plan.out.empty()) {
        std::filesystem::path out(plan.out);
        std::ostringstream naive_txt, policy_txt;
        write_policy(naive_txt, report.naive);
        write_policy(policy_txt, report.aggregate.policy);
        ed::write_file(out / "naive_policy.txt", naive_txt.str());
        ed::write_file(out / "policy.txt", policy_txt.str());
        ed::write_file(out / "stats.csv", stats_csv(report.aggregate.stats));
        ed::write_file(out / "rates.csv", ed::rates_csv(report.runs, logs, plan.datasets));
        if (!plan.evals.empty()) ed::write_file(out / "eval.csv", ed::eval_csv(report));
        if (!report.runs.empty()) {
            const auto* rep = report.runs.front().transcript.probe("repertoire");
            if (rep) ed::write_file(out / "repertoire.csv", rep->csv);
        }
    }
    return report;
}

// The signal comparison: run the signal-coupled arm, compute the mean
// producer action time it exhibited, then rerun with signals off and the
// action time fixed to the rounded mean. Matching seeds pair the arms.
inline ExperimentReport run_signal_compare(const ExperimentPlan& plan,
                                           std::ostream* progress = nullptr) {
    namespace ed = experiment_detail;
    if (!plan.out.empty()) std::filesystem::create_directories(plan.out);

    std::vector<std::vector<InputEvent>> logs;
    for (const auto& path : plan.datasets) logs.push_back(ed::load_log(path));

    ExperimentConfig signal_cfg = plan.config;
    signal_cfg.signal_enabled = true;
    if (signal_cfg.tissue.max_cytokines == 0) signal_cfg.tissue.max_cytokines = 1;

    ExperimentReport report;
    std::uint64_t at_sum = 0, at_samples = 0;
    std::size_t run_index = 0;
    for (std::size_t d = 0; d < logs.size(); ++d) {
        for (std::size_t i = 0; i < plan.repeats; ++i, ++run_index) {
            RunOutput run;
            run.index = run_index;
            run.seed = plan.base_seed + run_index;
            run.dataset = plan.datasets[d];
            if (progress)
                *progress << "signal arm run " << (run_index + 1) << "/"
                          << logs.size() * plan.repeats << " seed=" << run.seed << "\n";
            TwocellHandles handles;
            run.transcript =
                ed::run_once(signal_cfg, logs[d], run.seed, plan.mode, plan.accel, &handles);
            run.mean_action_time = handles.mean_action_time();
            at_sum += handles.state->action_time_sum;
            at_samples += handles.state->action_time_samples;
            run.policy = policy_from_responses(run.transcript.responses);
            report.runs.push_back(std::move(run));
        }
    }

    report.mean_action_time =
        at_samples == 0 ? 0.0 : static_cast<double>(at_sum) / static_cast<double>(at_samples);
    report.fixed_action_time =
        std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::llround(report.mean_action_time)));

    ExperimentConfig fixed_cfg = plan.config;
    fixed_cfg.signal_enabled = false;
    fixed_cfg.type1.antigen_producer_action_time = report.fixed_action_time;

    std::size_t fixed_index = 0;
    for (std::size_t d = 0; d < logs.size(); ++d) {
        for (std::size_t i = 0; i < plan.repeats; ++i, ++fixed_index) {
            RunOutput run;
            run.index = report.runs.size();
            run.seed = plan.base_seed + fixed_index;
            run.dataset = plan.datasets[d] + " (fixed)";
            if (progress)
                *progress << "fixed arm run " << (fixed_index + 1) << "/"
                          << logs.size() * plan.repeats << " seed=" << run.seed << "\n";
            run.transcript =
                ed::run_once(fixed_cfg, logs[d], run.seed, plan.mode, plan.accel, nullptr);
            run.policy = policy_from_responses(run.transcript.responses);
            report.runs.push_back(std::move(run));
        }
    }

    if (!plan.out.empty()) {
        std::string csv =
            "arm,run,seed,responses,first_us,last_us,burst_us,peak_bucket_s,peak_per_s\n";
        std::size_t arm_size = report.runs.size() / 2;
        for (std::size_t i = 0; i < report.runs.size(); ++i) {
            const auto& run = report.runs[i];
            BurstShape shape = burst_shape(run.transcript.responses);
            csv += std::string(i < arm_size ? "signal" : "fixed") + "," +
                   std::to_string(run.index) + "," + std::to_string(run.seed) + "," +
                   std::to_string(run.transcript.responses.size()) + "," +
                   std::to_string(shape.first_us) + "," + std::to_string(shape.last_us) + "," +
                   std::to_string(shape.duration_us) + "," + std::to_string(shape.peak_bucket) +
                   "," + std::to_string(shape.peak_count) + "\n";
        }
        experiment_detail::write_file(std::filesystem::path(plan.out) / "comparison.csv", csv);
    }
    return report;
}

}  // namespace tissue
