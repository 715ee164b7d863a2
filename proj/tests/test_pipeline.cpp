#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "enclave_taint/pipeline.hpp"
#include "test_util.hpp"

using namespace etaint;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("pipeline");

namespace {

const char* kLeakEdl =
    "trusted { public void ecall_f([out, size=8] void* out); };";
const char* kLeakSir = R"(
define @ecall_f(%out: ptr) {
entry:
  %s = alloca 8     !loc "x.c:2"
  %v = load %s      !loc "x.c:3"
  store %v, %out    !loc "x.c:4"
  ret
}
)";
const char* kCleanSir = R"(
define @ecall_f(%out: ptr) {
entry:
  %s = alloca 8
  store 1, %s
  ret
}
)";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("etaint_test_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        fs::path p = path / name;
        fs::create_directories(p.parent_path());
        std::ofstream(p) << content;
        return p.string();
    }
};

RunConfig config_for(const TempDir& dir, const std::string& edl,
                     const std::string& sir) {
    RunConfig cfg;
    cfg.edl_paths = {dir.file("iface.edl", edl)};
    cfg.sir_paths = {dir.file("prog.sir", sir)};
    cfg.format = ReportFormat::Json;
    return cfg;
}

} // namespace

TEST_CASE("exit code 0 on a clean program") {
    TempDir dir("clean");
    AnalyzeOutcome out = run_analyze(config_for(dir, kLeakEdl, kCleanSir));
    CHECK(out.exit_code == 0);
    CHECK(out.errors.empty());
    CHECK(out.output.find("\"total\": 0") != std::string::npos);
}

TEST_CASE("exit code 1 when findings are present") {
    TempDir dir("leak");
    AnalyzeOutcome out = run_analyze(config_for(dir, kLeakEdl, kLeakSir));
    CHECK(out.exit_code == 1);
    CHECK(out.output.find("\"pattern\": \"P1\"") != std::string::npos);
}

TEST_CASE("exit code 2 on unreadable, unparsable, or unverifiable input") {
    RunConfig missing;
    missing.edl_paths = {"/nonexistent/iface.edl"};
    missing.sir_paths = {"/nonexistent/prog.sir"};
    CHECK(run_analyze(missing).exit_code == 2);

    RunConfig empty;
    CHECK(run_analyze(empty).exit_code == 2);

    TempDir dir("bad");
    AnalyzeOutcome parse_err =
        run_analyze(config_for(dir, "trusted { ???", kCleanSir));
    CHECK(parse_err.exit_code == 2);
    CHECK_FALSE(parse_err.errors.empty());

    TempDir dir2("badsir");
    AnalyzeOutcome verify_err = run_analyze(config_for(
        dir2, kLeakEdl,
        "define @ecall_f(%x: val) {\nentry:\n  store 1, %x\n  ret\n}\n"));
    CHECK(verify_err.exit_code == 2);
    CHECK(verify_err.errors.find("verification failed") != std::string::npos);
}

TEST_CASE("json output is byte-identical across runs and modes") {
    TempDir dir("det");
    RunConfig cfg = config_for(dir, kLeakEdl, kLeakSir);
    AnalyzeOutcome first = run_analyze(cfg);
    AnalyzeOutcome second = run_analyze(cfg);
    CHECK(first.output == second.output);

    RunConfig serial = cfg;
    serial.jobs = 1;
    RunConfig wide = cfg;
    wide.jobs = 4;
    CHECK(run_analyze(serial).output == run_analyze(wide).output);
}

TEST_CASE("dump flags prepend deterministic sections") {
    TempDir dir("dump");
    RunConfig cfg = config_for(dir, kLeakEdl, kLeakSir);
    cfg.dump_flags = {"pts", "cg", "vfg", "sinks"};
    AnalyzeOutcome out = run_analyze(cfg);
    CHECK(out.output.find("== points-to ==") != std::string::npos);
    CHECK(out.output.find("== call graph ==") != std::string::npos);
    CHECK(out.output.find("== value flow graph ==") != std::string::npos);
    CHECK(out.output.find("== sinks ==") != std::string::npos);
    CHECK(out.output.find("%s@ecall_f -> {%s@ecall_f}") != std::string::npos);
    CHECK(out.output == run_analyze(cfg).output);
}

TEST_CASE("barrier config file overrides the defaults") {
    TempDir dir("cfg");
    RunConfig cfg = config_for(dir, kLeakEdl, kLeakSir);
    // An empty config drops every default barrier; the leak stays a leak.
    cfg.barrier_config_path =
        dir.file("cfg.json", R"({"barriers": [], "high_risk": []})");
    CHECK(run_analyze(cfg).exit_code == 1);
}

TEST_CASE("run_corpus verdicts: pass, mismatch, error, empty") {
    TempDir dir("corpus");
    dir.file("good/iface.edl", kLeakEdl);
    dir.file("good/prog.sir", kLeakSir);
    dir.file("good/expected.json",
             R"({"findings": [{"pattern": "P1", "risk": "normal",
                 "sink_loc": "x.c:4", "source_loc": "x.c:2"}]})");
    dir.file("drift/iface.edl", kLeakEdl);
    dir.file("drift/prog.sir", kCleanSir);
    dir.file("drift/expected.json",
             R"({"findings": [{"pattern": "P1", "risk": "normal",
                 "sink_loc": "x.c:4", "source_loc": "x.c:2"}]})");
    dir.file("broken/iface.edl", kLeakEdl);
    dir.file("broken/prog.sir", kLeakSir);
    dir.file("broken/expected.json", "{not json");

    std::ostringstream out;
    int rc = run_corpus(dir.path.string(), out);
    CHECK(rc == 1);
    CHECK(out.str().find("PASS good") != std::string::npos);
    CHECK(out.str().find("FAIL drift") != std::string::npos);
    CHECK(out.str().find("ERROR broken") != std::string::npos);
    CHECK(out.str().find("1/3 cases pass") != std::string::npos);

    TempDir empty("corpus_empty");
    std::ostringstream out2;
    CHECK(run_corpus(empty.path.string(), out2) == 0);
    CHECK(out2.str().find("warning") != std::string::npos);
}

TEST_CASE("multiple input files merge into one interface and module") {
    TempDir dir("multi");
    RunConfig cfg;
    cfg.edl_paths = {
        dir.file("a.edl", "trusted { public void ecall_f([out, size=8] void* "
                          "out); };"),
        dir.file("b.edl", "untrusted { void ocall_log([in, size=4] void* m); };"),
    };
    cfg.sir_paths = {
        dir.file("a.sir", kLeakSir),
        dir.file("b.sir", "define @helper() {\nentry:\n  ret\n}\n"),
    };
    cfg.format = ReportFormat::Json;
    AnalyzeOutcome out = run_analyze(cfg);
    CHECK(out.exit_code == 1);
}

TEST_SUITE_END();
