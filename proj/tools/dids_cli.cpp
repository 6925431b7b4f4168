// dids: run the detection pipeline, generate labelled traffic, report metrics.

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dids/io.hpp"
#include "dids/pipeline.hpp"
#include "dids/simgen.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_malformed = 2;
constexpr int exit_config = 3;

/// alerts.jsonl -> alerts.graph.jsonl
std::string sibling_graph_path(const std::string& alerts)
{
    std::filesystem::path p(alerts);
    if (p.extension() == ".jsonl") {
        return (p.parent_path() / (p.stem().string() + ".graph.jsonl")).string();
    }
    return alerts + ".graph.jsonl";
}

struct RunArgs {
    std::string graph, signatures, packets, out, config, graph_out;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a)
{
    auto attacks = std::make_shared<const dids::AttackGraph>(dids::load_graph(a.graph));
    auto sigs = dids::load_signatures(a.signatures, *attacks);
    dids::Config config = a.config.empty() ? dids::Config{} : dids::load_config(a.config);
    if (a.seed) config.seed = *a.seed;
    const auto packets = dids::read_packets(a.packets);

    dids::Pipeline pipeline(attacks, std::move(sigs), config);
    pipeline.run(packets);

    const auto log = pipeline.log();
    auto out = dids::open_output(a.out);
    dids::write_alerts(out, log);
    auto gout = dids::open_output(a.graph_out.empty() ? sibling_graph_path(a.out) : a.graph_out);
    dids::write_jsonl(gout, pipeline.graph_export());
    std::cerr << "dids run: " << packets.size() << " packets, " << log.size() << " alerts\n";
    return exit_ok;
}

struct GenArgs {
    std::string graph, signatures, profile, out_packets, out_truth;
    std::uint64_t seed = dids::default_seed;
};

int cmd_gen(const GenArgs& a)
{
    const auto attacks = dids::load_graph(a.graph);
    const auto sigs = dids::load_signatures(a.signatures, attacks);
    const auto profile = dids::load_profile(a.profile, attacks);
    const auto stream = dids::gen_stream(attacks, sigs, profile, a.seed);
    auto pout = dids::open_output(a.out_packets);
    dids::write_packets(pout, stream.packets);
    auto tout = dids::open_output(a.out_truth);
    dids::write_truth(tout, stream.truth);
    return exit_ok;
}

struct ReportArgs {
    std::string alerts, truth, graph;
};

int cmd_report(const ReportArgs& a)
{
    const auto log = dids::read_alerts(a.alerts);
    const auto truth = dids::read_truth(a.truth);
    std::optional<dids::GraphSummary> summary;
    const std::string graph = a.graph.empty() ? sibling_graph_path(a.alerts) : a.graph;
    if (!a.graph.empty() || std::filesystem::exists(graph)) {
        const auto lines = dids::read_jsonl(graph);
        summary = dids::summarize_graph(lines);
    }
    std::cout << dids::to_json(dids::report(log, truth, summary)).dump() << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Danger-context intrusion detection pipeline"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run the pipeline over a packet file and write the alert log");
    run_cmd->add_option("--graph", run.graph, "Attack graph (graph.json)")->required();
    run_cmd->add_option("--signatures", run.signatures, "Signature database (signatures.json)")->required();
    run_cmd->add_option("--packets", run.packets, "Packet stream (packets.jsonl)")->required();
    run_cmd->add_option("--out", run.out, "Alert log to write (alerts.jsonl)")->required();
    run_cmd->add_option("--config", run.config, "Immune parameter config (JSON)");
    run_cmd->add_option("--seed", run.seed, "Run seed (overrides the config)");
    run_cmd->add_option("--graph-out", run.graph_out, "Graph export (default: <out>.graph.jsonl)");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a labelled packet stream");
    gen_cmd->add_option("--graph", gen.graph, "Attack graph (graph.json)")->required();
    gen_cmd->add_option("--signatures", gen.signatures, "Signature database (signatures.json)")->required();
    gen_cmd->add_option("--profile", gen.profile, "Scenario profile (profile.json)")->required();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");
    gen_cmd->add_option("--out-packets", gen.out_packets, "Packets output (packets.jsonl)")->required();
    gen_cmd->add_option("--out-truth", gen.out_truth, "Ground truth output (truth.jsonl)")->required();

    ReportArgs rep;
    auto* report_cmd = app.add_subcommand("report", "Compute metrics for an alert log against ground truth");
    report_cmd->add_option("--alerts", rep.alerts, "Alert log (alerts.jsonl)")->required();
    report_cmd->add_option("--truth", rep.truth, "Ground truth (truth.jsonl)")->required();
    report_cmd->add_option("--graph", rep.graph, "Graph export (default: sibling of --alerts, if present)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(run);
        if (gen_cmd->parsed()) return cmd_gen(gen);
        if (report_cmd->parsed()) return cmd_report(rep);
    } catch (const dids::ConfigError& e) {
        std::cerr << "dids: config error: " << e.what() << '\n';
        return exit_config;
    } catch (const dids::ParseError& e) {
        std::cerr << "dids: " << e.what() << '\n';
        return exit_malformed;
    } catch (const std::exception& e) {
        std::cerr << "dids: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_failure;
}
