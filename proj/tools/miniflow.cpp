#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "miniflow/errors.hpp"
#include "miniflow/frontend.hpp"
#include "miniflow/ir.hpp"
#include "miniflow/runtime.hpp"

namespace {

constexpr int kExitCompile = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitUsage = 64;
constexpr int kExitNoInput = 66;

struct NoInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_script(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NoInput("cannot open script '" + path + "'");
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

miniflow::IrProgram compile(const std::string& path) {
    const std::string src = read_script(path);
    return miniflow::lower(miniflow::compile_source(src));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"miniflow: implicitly parallel dataflow scripts with leaf tasks in guest "
                 "interpreters or native code.\nA run uses one engine, one server and N workers; "
                 "engine and server counts are fixed at one each."};
    app.require_subcommand(1);

    std::string script;
    int workers = 1;
    std::string mode = "threads";
    std::string policy = "retain";
    std::string guest_path;
    std::string log_level = "warn";
    std::string listen = "127.0.0.1:0";
    std::string backend = "toy";
    bool stats = false;

    auto* run = app.add_subcommand("run", "Compile and run a script to quiescence");
    run->add_option("script", script, "Script file")->required();
    run->add_option("--workers", workers, "Number of worker roles")->check(CLI::Range(1, 65536));
    run->add_option("--mode", mode, "threads (in-process queues) or processes (TCP loopback)")
        ->check(CLI::IsMember({"threads", "processes"}));
    run->add_option("--policy", policy, "Guest interpreter lifecycle between tasks")
        ->check(CLI::IsMember({"retain", "reinit"}));
    run->add_option("--guest-path", guest_path,
                    "Colon-separated package directories; overrides MINIFLOW_GUEST_PATH");
    run->add_option("--log-level", log_level, "error, warn, info or debug (debug echoes the event log)")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
    run->add_option("--listen", listen, "Server address in processes mode");
    run->add_option("--guest-backend", backend, "Guest interpreter: toy or python")
        ->check(CLI::IsMember(miniflow::available_backends()));
    run->add_flag("--stats", stats, "Print task statistics to stderr after the run");

    auto* check = app.add_subcommand("check", "Compile only");
    check->add_option("script", script, "Script file")->required();
    auto* dump = app.add_subcommand("dump-ir", "Print the lowered program");
    dump->add_option("script", script, "Script file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    miniflow::IrProgram ir;
    try {
        ir = compile(script);
    } catch (const NoInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoInput;
    } catch (const miniflow::CompileError& e) {
        std::cerr << script << ":" << e.what() << "\n";
        return kExitCompile;
    } catch (const std::exception& e) {
        std::cerr << script << ": " << e.what() << "\n";
        return kExitCompile;
    }

    if (check->parsed()) {
        std::cout << "ok: " << ir.future_count() << " futures, " << ir.rules.size() << " rules\n";
        return 0;
    }
    if (dump->parsed()) {
        std::cout << miniflow::dump(ir);
        return 0;
    }

    miniflow::PackageIndex packages;
    miniflow::Address address;
    try {
        packages = guest_path.empty() ? miniflow::PackageIndex::from_env()
                                      : miniflow::PackageIndex(miniflow::split_path_list(guest_path));
        address = miniflow::parse_address(listen);
    } catch (const std::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    miniflow::EventLog log;
    log.set_echo(log_level == "debug");
    miniflow::RunOptions opts;
    opts.workers = workers;
    opts.mode = *miniflow::parse_mode(mode);
    opts.policy = *miniflow::parse_policy(policy);
    opts.backend = backend;
    opts.packages = &packages;
    opts.log = &log;
    opts.listen = address;
    opts.trace = [](std::string_view text) {
        std::cout << text;
        std::cout.flush();
    };

    const miniflow::RunResult r = miniflow::run_program(ir, opts);
    if (stats || log_level == "info" || log_level == "debug") {
        std::cerr << miniflow::format_stats(miniflow::compute_stats(log.snapshot(), workers));
    }
    if (!r.ok()) {
        std::cerr << "error: " << r.error << "\n";
        return kExitRuntime;
    }
    for (auto fid : ir.named) {
        const auto& v = r.store.at(fid.value);
        std::cout << ir.futures[fid.value].name << " = " << (v ? miniflow::display(*v) : "<unset>") << "\n";
    }
    return 0;
}
