#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "refsynth/heuristics.hpp"
#include "refsynth/lm.hpp"
#include "refsynth/spec_io.hpp"

namespace refsynth::cli {

// Exit codes: 0 ok, 1 type failure, 2 stuck, 3 I/O or parse error,
// 4 target not found, 5 no solution for some hole within budget,
// 6 internal soundness violation (fail-stop).

struct SynthFlags {
    int max_solutions = 1;
    int max_depth = 3;
    int64_t timeout_ms = 60000;
    bool heuristics_on = true;
    int workers = 1;
    bool emit_program = false;
    uint64_t seed = 0;
};

namespace detail {

inline std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct LoadedProblem {
    Specification spec;
    Footprints fp;
    lm::LmProgram program;
    lm::GenResult gen;
};

inline std::variant<LoadedProblem, std::string> load_problem(const std::string& program_path,
                                                             const std::string& spec_path) {
    auto spec_text = read_file(spec_path);
    if (!spec_text) return "cannot read spec file " + spec_path;
    auto loaded = load_spec(*spec_text);
    if (std::holds_alternative<SpecError>(loaded))
        return "spec error: " + std::get<SpecError>(loaded).message;

    auto prog_text = read_file(program_path);
    if (!prog_text) return "cannot read program file " + program_path;
    auto parsed = lm::parse_lm(*prog_text);
    if (std::holds_alternative<lm::LmParseError>(parsed)) {
        const auto& e = std::get<lm::LmParseError>(parsed);
        return "parse error at " + std::to_string(e.line) + ":" + std::to_string(e.col) + ": " +
               e.message;
    }

    LoadedProblem out;
    out.spec = std::move(std::get<Specification>(loaded));
    out.fp = compute_footprints(out.spec);
    out.program = std::move(std::get<lm::LmProgram>(parsed));
    out.gen = lm::gen_constraint(out.program, out.spec.initial_predicate);
    return out;
}

inline SearchBudget budget_of(const SynthFlags& flags) {
    SearchBudget b;
    b.wall_clock_ms = flags.timeout_ms;
    b.max_solutions_per_hole = flags.max_solutions;
    b.max_expansion_depth = flags.max_depth;
    return b;
}

inline std::string solution_line(const SolutionRecord& r) {
    std::ostringstream os;
    os << "{hole: h" << r.hole.value << ", term: " << to_string(r.term) << ", path: [";
    for (size_t i = 0; i < r.path.size(); ++i) {
        if (i) os << ", ";
        os << "$s" << r.path[i].value;
    }
    os << "], steps: " << r.query_steps() << "}";
    return os.str();
}

} // namespace detail

// Type-checks a program: 0 well-typed, 1 failure, 2 stuck (locks need
// synthesis), 3 I/O or parse errors.  A nonzero seed randomizes constraint
// selection (the confluence harness hook).
inline int cmd_check(const std::string& program_path, const std::string& spec_path,
                     std::ostream& out, std::ostream& err, uint64_t seed = 0) {
    auto loaded = detail::load_problem(program_path, spec_path);
    if (std::holds_alternative<std::string>(loaded)) {
        err << std::get<std::string>(loaded) << '\n';
        return 3;
    }
    auto& p = std::get<detail::LoadedProblem>(loaded);
    Configuration k;
    k.push_back(p.gen.goal);
    for (const auto& [h, var] : p.gen.hole_vars) k.u[var] = h;
    auto policy = seed ? seeded_policy(seed) : fifo_policy();
    auto solved = solve_exhaustively(p.spec, p.fp, std::move(k), policy);
    switch (solved.status) {
        case SolveStatus::Success:
            out << "ok: " << p.program.decls.size() << " top-level declarations, "
                << solved.config.graph.scopes().size() << " scopes\n";
            return 0;
        case SolveStatus::Failure:
            out << "type failure: " << solved.fail.reason << "\n  violated: " << solved.fail.constraint
                << '\n';
            return 1;
        case SolveStatus::Stuck:
            out << "stuck: " << solved.config.constraints.size() << " constraints remain\n";
            for (const auto& pc : solved.config.constraints) out << "  " << to_string(pc.c) << '\n';
            return 2;
        case SolveStatus::FuelExhausted: err << "solver fuel exhausted\n"; return 3;
    }
    return 3;
}

// Prints the (possibly partial) scope graph as DOT.
inline int cmd_graph(const std::string& program_path, const std::string& spec_path,
                     std::ostream& out, std::ostream& err) {
    auto loaded = detail::load_problem(program_path, spec_path);
    if (std::holds_alternative<std::string>(loaded)) {
        err << std::get<std::string>(loaded) << '\n';
        return 3;
    }
    auto& p = std::get<detail::LoadedProblem>(loaded);
    Configuration k;
    k.push_back(p.gen.goal);
    for (const auto& [h, var] : p.gen.hole_vars) k.u[var] = h;
    auto solved = solve_exhaustively(p.spec, p.fp, std::move(k));
    out << to_dot(solved.config.graph);
    return 0;
}

// Synthesizes references for all locked holes; prints one record line per
// solution.  Every record passes check_solution before printing (fail-stop).
inline int cmd_synth(const std::string& program_path, const std::string& spec_path,
                     const SynthFlags& flags, std::ostream& out, std::ostream& err) {
    auto loaded = detail::load_problem(program_path, spec_path);
    if (std::holds_alternative<std::string>(loaded)) {
        err << std::get<std::string>(loaded) << '\n';
        return 3;
    }
    auto& p = std::get<detail::LoadedProblem>(loaded);
    auto input = p.gen.input();

    bool violation = false;
    std::map<int, TermPtr> first_solutions;
    auto sink = [&](const SolutionRecord& r) {
        if (violation) return;
        if (!check_solution(p.spec, p.fp, input, r)) {
            violation = true;
            return;
        }
        if (!first_solutions.count(r.hole.value)) first_solutions[r.hole.value] = r.term;
        out << detail::solution_line(r) << '\n';
    };

    SearchOptions options;
    options.heuristics_on = flags.heuristics_on;
    auto outcome = synthesize(p.spec, p.fp, input, detail::budget_of(flags), options, sink);

    if (violation) {
        err << "internal error: emitted record failed re-validation\n";
        return 6;
    }
    if (outcome.error) {
        switch (outcome.error->kind) {
            case SynthesisError::Kind::TargetNotFound:
                err << "target not found: " << outcome.error->message << '\n';
                return 4;
            case SynthesisError::Kind::BudgetExhausted:
                err << "budget exhausted: " << outcome.error->message << '\n';
                return 5;
            case SynthesisError::Kind::InitialTypeError:
                err << "program is ill-typed before synthesis: " << outcome.error->message << '\n';
                return 1;
            case SynthesisError::Kind::Internal:
                err << "internal error: " << outcome.error->message << '\n';
                return 6;
        }
    }

    for (const auto& [h, var] : input.hole_vars) {
        bool any = false;
        for (const auto& r : outcome.records)
            if (r.hole == h) any = true;
        if (!any) {
            err << "no solution for hole h" << h.value
                << (outcome.budget_exhausted ? " (budget exhausted)\n" : " (search space exhausted)\n");
            return 5;
        }
    }

    if (flags.emit_program) {
        if (auto unlocked = lm::substitute_locks(p.program, first_solutions)) {
            out << "--- program ---\n" << lm::pretty_print(*unlocked);
        } else {
            err << "cannot render unlocked program\n";
            return 6;
        }
    }
    return 0;
}

// --- bench ------------------------------------------------------------------------

struct FileReport {
    std::string file;
    std::string status; // Success / Timeout / Failure
    int holes = 0;
    int solutions = 0;
    int64_t time_ms = 0;
    std::vector<int64_t> per_hole_ms; // latency to first solution per hole
};

struct RunReport {
    std::vector<FileReport> files;

    int count(const std::string& status) const {
        int n = 0;
        for (const auto& f : files)
            if (f.status == status) n++;
        return n;
    }
};

namespace detail {

inline FileReport bench_one(const std::string& file, const std::string& spec_path,
                            const SynthFlags& flags) {
    FileReport rep;
    rep.file = std::filesystem::path(file).filename().string();
    auto loaded = load_problem(file, spec_path);
    if (std::holds_alternative<std::string>(loaded)) {
        rep.status = "Failure";
        return rep;
    }
    auto& p = std::get<LoadedProblem>(loaded);
    auto input = p.gen.input();
    rep.holes = static_cast<int>(input.hole_vars.size());

    auto t0 = std::chrono::steady_clock::now();
    std::map<int, int64_t> first_ms;
    bool violation = false;
    auto sink = [&](const SolutionRecord& r) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        if (!check_solution(p.spec, p.fp, input, r)) violation = true;
        if (!first_ms.count(r.hole.value)) first_ms[r.hole.value] = ms;
    };
    SearchOptions options;
    options.heuristics_on = flags.heuristics_on;
    auto outcome = synthesize(p.spec, p.fp, input, budget_of(flags), options, sink);
    rep.time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    rep.solutions = static_cast<int>(outcome.records.size());
    for (const auto& [h, ms] : first_ms) rep.per_hole_ms.push_back(ms);

    bool all_holes_solved = true;
    for (const auto& [h, var] : input.hole_vars)
        if (!first_ms.count(h.value)) all_holes_solved = false;

    if (violation || (outcome.error && outcome.error->kind != SynthesisError::Kind::BudgetExhausted))
        rep.status = "Failure"; // soundness violations and engine errors only
    else if (!all_holes_solved)
        rep.status = "Timeout";
    else
        rep.status = "Success";
    return rep;
}

inline int64_t percentile(std::vector<int64_t> xs, double q) {
    if (xs.empty()) return 0;
    std::sort(xs.begin(), xs.end());
    size_t i = static_cast<size_t>(q * static_cast<double>(xs.size() - 1) + 0.5);
    return xs[std::min(i, xs.size() - 1)];
}

} // namespace detail

// Runs cmd_synth over every .lm file in a directory and aggregates an
// outcome table plus the per-hole timing distribution.
inline int cmd_bench(const std::string& corpus_dir, const std::string& spec_path,
                     const SynthFlags& flags, std::ostream& out, std::ostream& err,
                     const std::string& report_path = "refsynth-bench.txt") {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec))
        if (entry.path().extension() == ".lm") files.push_back(entry.path().string());
    if (ec) {
        err << "cannot read corpus directory " << corpus_dir << '\n';
        return 3;
    }
    std::sort(files.begin(), files.end());

    RunReport report;
    int workers = std::max(1, flags.workers);
    if (workers == 1) {
        for (const auto& f : files) report.files.push_back(detail::bench_one(f, spec_path, flags));
    } else {
        std::vector<std::future<FileReport>> futures;
        futures.reserve(files.size());
        for (const auto& f : files)
            futures.push_back(std::async(std::launch::async,
                                         [&, f] { return detail::bench_one(f, spec_path, flags); }));
        for (auto& fut : futures) report.files.push_back(fut.get());
        std::sort(report.files.begin(), report.files.end(),
                  [](const FileReport& a, const FileReport& b) { return a.file < b.file; });
    }

    int total = static_cast<int>(report.files.size());
    auto pct = [&](int n) {
        return total ? static_cast<int>(100.0 * n / total + 0.5) : 0;
    };
    out << "Outcome   Count  Percent\n";
    for (const char* status : {"Success", "Timeout", "Failure"}) {
        int n = report.count(status);
        out << status << std::string(10 - std::string(status).size(), ' ') << n << "      "
            << pct(n) << "%\n";
    }
    out << "Total     " << total << "\n\n";

    std::vector<int64_t> hole_ms;
    for (const auto& f : report.files)
        hole_ms.insert(hole_ms.end(), f.per_hole_ms.begin(), f.per_hole_ms.end());
    out << "per-hole synthesis time (ms): min=" << detail::percentile(hole_ms, 0.0)
        << " median=" << detail::percentile(hole_ms, 0.5)
        << " p90=" << detail::percentile(hole_ms, 0.9)
        << " max=" << detail::percentile(hole_ms, 1.0) << '\n';

    std::ofstream rf(report_path);
    if (rf) {
        for (const auto& f : report.files)
            rf << "file=" << f.file << " status=" << f.status << " holes=" << f.holes
               << " solutions=" << f.solutions << " time_ms=" << f.time_ms << '\n';
        rf << "summary success=" << report.count("Success") << " timeout=" << report.count("Timeout")
           << " failure=" << report.count("Failure") << " total=" << total << '\n';
    }
    return 0;
}

} // namespace refsynth::cli
