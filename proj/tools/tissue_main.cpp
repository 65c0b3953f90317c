// The tissue command line: serve a live algorithm, replay or synthesize
// datasets, parse raw traces into the replay format, and run full
// experiment plans.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "tissue/tissue.hpp"

namespace {

tissue::ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream f(path);
    if (!f) throw tissue::ConfigError("cannot open config file '" + path + "'");
    return tissue::parse_config(f);
}

std::string slurp(const std::string& path, const char* what) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error(std::string("cannot open ") + what + " '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

int cmd_serve(const std::string& config_path, double accel, std::uint64_t seed,
              const std::string& out_dir) {
    tissue::ExperimentConfig cfg = load_config(config_path);
    tissue::CellAlgorithm alg = tissue::make_twocell(cfg);
    auto listener = std::make_unique<tissue::TcpListener>(tissue::parse_endpoint(cfg.listen));
    tissue::ServerOptions opt;
    opt.seed = seed;
    tissue::TissueServer server(cfg, alg, tissue::RunClock::accelerated(accel),
                                std::move(listener), opt);
    server.start();
    std::cerr << "tissue: serving twocell on " << server.endpoint() << " (seed " << seed
              << ", x" << accel << ")\n";
    tissue::Transcript t = server.finish();
    std::cerr << "tissue: run finished, " << t.responses.size() << " responses, "
              << t.protocol_errors << " protocol errors\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::filesystem::path out(out_dir);
        tissue::experiment_detail::write_file(out / "responses.csv", t.response_csv());
        tissue::experiment_detail::write_file(out / "manifest.txt", t.manifest);
        for (const auto& p : t.probes)
            tissue::experiment_detail::write_file(out / (p.name + ".csv"), p.csv);
    }
    return 0;
}

int cmd_replay(const std::string& log_path, double rate, const std::string& server) {
    std::istringstream log_in(slurp(log_path, "replay log"));
    auto log = tissue::read_replay_log(log_in);
    tissue::Endpoint ep = tissue::parse_endpoint(server);
    auto antigen_conn = tissue::connect_tcp(ep);
    bool has_signals = false;
    for (const auto& e : log)
        if (e.kind == tissue::InputEvent::Kind::signal) has_signals = true;
    std::unique_ptr<tissue::Stream> signal_conn;
    if (has_signals) signal_conn = tissue::connect_tcp(ep);
    tissue::ReplayResult r = tissue::replay(log, rate, antigen_conn.get(), signal_conn.get());
    std::cerr << "tissue: replayed " << r.sent << " events";
    if (!r.ok()) {
        std::cerr << ", " << r.unsent << " unsent (connection lost)\n";
        return 1;
    }
    std::cerr << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out_path) {
    std::istringstream spec_in(slurp(spec_path, "synth spec"));
    tissue::SynthSpec spec = tissue::parse_synth_spec(spec_in);
    tissue::SynthResult result = tissue::generate_synthetic(spec, seed);
    {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
        tissue::write_replay_log(out, result.events,
                                 {"group " + std::string(tissue::dataset_group_name(spec.group)),
                                  "seed " + std::to_string(seed)});
    }
    if (spec.group != tissue::DatasetGroup::normal) {
        std::ofstream out(out_path + ".labels", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + out_path + ".labels'");
        tissue::write_labels(out, result.labels);
    }
    std::cerr << "tissue: wrote " << result.events.size() << " events to " << out_path << "\n";
    return 0;
}

int cmd_parse(const std::string& strace_path, const std::string& cpu_path,
              const std::string& table_path, const std::string& out_path) {
    tissue::SyscallTable table = tissue::SyscallTable::builtin();
    if (!table_path.empty()) {
        std::istringstream table_in(slurp(table_path, "syscall table"));
        table = tissue::SyscallTable::from_stream(table_in);
    }
    std::vector<tissue::InputEvent> events;
    std::istringstream strace_in(slurp(strace_path, "strace log"));
    if (!cpu_path.empty()) {
        std::istringstream cpu_in(slurp(cpu_path, "cpu log"));
        events = tissue::parse_session(strace_in, cpu_in, table, &std::cerr);
    } else {
        auto syscalls = tissue::parse_strace(strace_in, table, &std::cerr);
        events = tissue::merge_logs(syscalls, {});
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    tissue::write_replay_log(out, events);
    std::cerr << "tissue: wrote " << events.size() << " events to " << out_path << "\n";
    return 0;
}

int cmd_experiment(const std::string& plan_path) {
    std::istringstream plan_in(slurp(plan_path, "plan"));
    tissue::ExperimentPlan plan = tissue::parse_plan(plan_in);
    if (plan.signal_compare) {
        tissue::ExperimentReport report = tissue::run_signal_compare(plan, &std::cerr);
        std::size_t arm = report.runs.size() / 2;
        std::uint64_t signal_burst = 0, fixed_burst = 0;
        for (std::size_t i = 0; i < report.runs.size(); ++i) {
            auto shape = tissue::burst_shape(report.runs[i].transcript.responses);
            (i < arm ? signal_burst : fixed_burst) += shape.duration_us;
        }
        std::cout << "mean_action_time=" << report.mean_action_time << "\n"
                  << "fixed_action_time=" << report.fixed_action_time << "\n";
        if (arm > 0)
            std::cout << "signal_mean_burst_us=" << signal_burst / arm << "\n"
                      << "fixed_mean_burst_us=" << fixed_burst / arm << "\n";
        return 0;
    }
    tissue::ExperimentReport report = tissue::run_experiment(plan, &std::cerr);
    std::cout << "runs=" << report.runs.size() << "\n"
              << "naive_permits=" << report.naive.permitted.size() << "\n"
              << "generated_permits=" << report.aggregate.policy.permitted.size() << "\n";
    for (std::size_t i = 0; i < report.eval_names.size(); ++i) {
        std::cout << report.eval_names[i] << ": naive " << report.naive_rows[i].permit_pct
                  << "/" << report.naive_rows[i].deny_pct << " twocell "
                  << report.generated_rows[i].permit_pct << "/"
                  << report.generated_rows[i].deny_pct << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tissue: immune-inspired client/server framework and twocell tooling"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "run a twocell server until its clients finish");
    std::string serve_config, serve_out;
    double serve_accel = 1.0;
    std::uint64_t serve_seed = 1;
    serve->add_option("--config", serve_config, "config file (key=value)");
    serve->add_option("--accel", serve_accel, "clock acceleration factor")->check(CLI::PositiveNumber);
    serve->add_option("--seed", serve_seed, "rng seed");
    serve->add_option("--out", serve_out, "directory for responses/probes/manifest");

    auto* replay_cmd = app.add_subcommand("replay", "play a replay log into a server");
    std::string replay_log, replay_server = "127.0.0.1:7777";
    double replay_rate = 1.0;
    replay_cmd->add_option("--log", replay_log, "replay log file")->required();
    replay_cmd->add_option("--rate", replay_rate, "rate factor (1.0 = realtime)")
        ->check(CLI::PositiveNumber);
    replay_cmd->add_option("--server", replay_server, "server host:port");

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 1;
    synth->add_option("--spec", synth_spec, "synth spec file")->required();
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--out", synth_out, "output replay log path")->required();

    auto* parse = app.add_subcommand("parse", "convert strace/cpu logs to the replay format");
    std::string parse_strace_path, parse_cpu_path, parse_table, parse_out;
    parse->add_option("--strace", parse_strace_path, "strace-style log")->required();
    parse->add_option("--cpu", parse_cpu_path, "cpu usage log (optional)");
    parse->add_option("--table", parse_table, "syscall name/number table file");
    parse->add_option("--out", parse_out, "output replay log path")->required();

    auto* experiment = app.add_subcommand("experiment", "run an experiment plan");
    std::string plan_path;
    experiment->add_option("--plan", plan_path, "plan file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed()) return cmd_serve(serve_config, serve_accel, serve_seed, serve_out);
        if (replay_cmd->parsed()) return cmd_replay(replay_log, replay_rate, replay_server);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_seed, synth_out);
        if (parse->parsed()) return cmd_parse(parse_strace_path, parse_cpu_path, parse_table, parse_out);
        if (experiment->parsed()) return cmd_experiment(plan_path);
    } catch (const std::exception& e) {
        std::cerr << "tissue: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
