#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "refsynth/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"refsynth: reference synthesis for scope-graph type systems"};
    app.require_subcommand(1);

    std::string input;
    std::string spec_file;
    std::string report_path = "refsynth-bench.txt";
    refsynth::cli::SynthFlags flags;
    std::string heuristics = "on";

    auto add_common = [&](CLI::App* cmd, bool dir) {
        cmd->add_option(dir ? "dir" : "file", input, dir ? "corpus directory" : "program file")
            ->required();
        cmd->add_option("--spec", spec_file, "type-system rule file")->required();
    };
    auto add_synth_flags = [&](CLI::App* cmd) {
        cmd->add_option("--max-solutions", flags.max_solutions, "solutions per hole");
        cmd->add_option("--max-depth", flags.max_depth, "qualifier depth bound");
        cmd->add_option("--timeout-ms", flags.timeout_ms, "wall-clock budget");
        cmd->add_option("--heuristics", heuristics, "on|off");
        cmd->add_option("--workers", flags.workers, "parallel workers (bench)");
        cmd->add_option("--seed", flags.seed, "constraint-permutation seed (check)");
    };

    auto* check = app.add_subcommand("check", "type-check a program");
    add_common(check, false);
    check->add_option("--seed", flags.seed, "constraint-permutation seed");

    auto* synth = app.add_subcommand("synth", "synthesize locked references");
    add_common(synth, false);
    add_synth_flags(synth);
    synth->add_flag("--emit-program", flags.emit_program, "print the unlocked program");

    auto* graph = app.add_subcommand("graph", "export the scope graph as DOT");
    add_common(graph, false);

    auto* bench = app.add_subcommand("bench", "run the corpus and report outcomes");
    add_common(bench, true);
    add_synth_flags(bench);
    bench->add_option("--report", report_path, "machine-readable report path");

    CLI11_PARSE(app, argc, argv);
    flags.heuristics_on = (heuristics != "off");

    if (check->parsed())
        return refsynth::cli::cmd_check(input, spec_file, std::cout, std::cerr, flags.seed);
    if (synth->parsed())
        return refsynth::cli::cmd_synth(input, spec_file, flags, std::cout, std::cerr);
    if (graph->parsed()) return refsynth::cli::cmd_graph(input, spec_file, std::cout, std::cerr);
    if (bench->parsed())
        return refsynth::cli::cmd_bench(input, spec_file, flags, std::cout, std::cerr, report_path);
    return 1;
}
