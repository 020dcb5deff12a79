#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "support/progen.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(MINIFLOW_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

Result run_stdout(const std::string& args) {
    const std::string cmd = std::string(MINIFLOW_CLI) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Dir {
    fs::path path;
    Dir() {
        path = fs::temp_directory_path() / ("mf_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~Dir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string write(const std::string& name, std::string_view text) const {
        fs::create_directories((path / name).parent_path());
        std::ofstream(path / name) << text;
        return (path / name).string();
    }
};

constexpr const char* kFragment =
    "leaf (int o) f () guest \"o = 1\";\n"
    "leaf (int o) g (int v) guest \"o = v + 10\";\n"
    "int x;\n"
    "x = f();\n"
    "int y = g(x);\n"
    "int z = g(x);\n";

}  // namespace

TEST_CASE("run prints named futures") {
    Dir d;
    auto ex = d.write("ex.mf", kFragment);
    for (const char* mode : {"threads", "processes"}) {
        auto r = run_stdout("run " + ex + " --workers 4 --mode " + mode);
        CHECK(r.code == 0);
        CHECK(r.out == "x = 1\ny = 11\nz = 11\n");
    }
}

TEST_CASE("usage and input errors") {
    Dir d;
    auto ex = d.write("ex.mf", kFragment);
    CHECK(run("run " + ex + " --workers 0").code == 64);
    CHECK(run("run " + ex + " --mode fibers").code == 64);
    CHECK(run("run").code == 64);
    CHECK(run("frobnicate").code == 64);
    auto missing = run("run " + (d.path / "nope.mf").string());
    CHECK(missing.code == 66);
    CHECK(missing.out.find("nope.mf") != std::string::npos);

    auto bad = d.write("bad.mf", "int x = ;\n");
    auto r = run("run " + bad);
    CHECK(r.code == 2);
    CHECK(r.out.find("bad.mf") != std::string::npos);
    CHECK(run("check " + bad).code == 2);
}

TEST_CASE("runtime errors exit 3") {
    Dir d;
    auto s = d.write("boom.mf", "leaf (int o) boom (int a) guest \"o = a / 0\"; int r = boom(1);\n");
    auto r = run("run " + s);
    CHECK(r.code == 3);
    CHECK(r.out.find("rule 0") != std::string::npos);
    CHECK(r.out.find("task 1") != std::string::npos);
}

TEST_CASE("check and dump-ir") {
    Dir d;
    auto ex = d.write("ex.mf", kFragment);
    auto c = run("check " + ex);
    CHECK(c.code == 0);
    CHECK(c.out.find("3 futures, 3 rules") != std::string::npos);
    auto ir = run("dump-ir " + ex);
    CHECK(ir.code == 0);
    CHECK(ir.out.find("rule 0: [] -> ") != std::string::npos);
    CHECK(ir.out.find("rule 2: [0] -> ") != std::string::npos);
}

TEST_CASE("guest path and packages") {
    Dir d;
    d.write("pkgs/tw/package.mfpkg", "package twice 1.0\nsource lib.toy\n");
    d.write("pkgs/tw/lib.toy", "def twice(x) { return 2 * x }\n");
    auto s = d.write("p.mf",
                     "leaf (int o) tw (int a) package \"twice\" \"1.0\" guest \"o = twice(a)\";\n"
                     "int r = tw(21);\n");
    auto r = run_stdout("run " + s + " --guest-path " + (d.path / "pkgs").string());
    CHECK(r.code == 0);
    CHECK(r.out == "r = 42\n");
    const std::string env_cmd = "env MINIFLOW_GUEST_PATH=" + (d.path / "pkgs").string() + " " + MINIFLOW_CLI +
                                " run " + s + " 2>/dev/null";
    FILE* p = ::popen(env_cmd.c_str(), "r");
    std::string out(64, '\0');
    out.resize(std::fread(out.data(), 1, out.size(), p));
    CHECK(WEXITSTATUS(::pclose(p)) == 0);
    CHECK(out == "r = 42\n");
    CHECK(run("run " + s).code == 3);
}

TEST_CASE("policy flag") {
    Dir d;
    auto s = d.write("canary.mf",
                     "leaf (int o) setg (int v) guest \"G = v\\no = v\";\n"
                     "leaf (int o) getg (int d) guest \"o = G\";\n"
                     "@target(0) int a = setg(5);\n"
                     "@target(0) int b = getg(a);\n");
    CHECK(run_stdout("run " + s + " --workers 2 --policy retain").out == "a = 5\nb = 5\n");
    CHECK(run("run " + s + " --workers 2 --policy reinit").code == 3);
}

TEST_CASE("output is identical across worker counts") {
    Dir d;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto g = progen::generate(seed * 31, 30);
        auto s = d.write("g" + std::to_string(seed) + ".mf", g.source);
        const auto base = run_stdout("run " + s + " --workers 1");
        REQUIRE(base.code == 0);
        for (int w = 1; w <= 8; ++w) {
            auto r = run_stdout("run " + s + " --workers " + std::to_string(w));
            CHECK(r.code == 0);
            CHECK(r.out == base.out);
        }
    }
}

TEST_CASE("stats and debug log go to stderr") {
    Dir d;
    auto ex = d.write("ex.mf", kFragment);
    auto r = run("run " + ex + " --workers 2 --stats --log-level debug");
    CHECK(r.code == 0);
    CHECK(r.out.find("tasks: 3") != std::string::npos);
    CHECK(r.out.find("ev=dispatch") != std::string::npos);
    CHECK(run_stdout("run " + ex + " --workers 2 --stats").out == "x = 1\ny = 11\nz = 11\n");
    auto l = run_stdout("run " + ex + " --mode processes --listen 127.0.0.1:0");
    CHECK(l.code == 0);
}
