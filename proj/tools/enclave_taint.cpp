//===- enclave_taint.cpp - command-line driver -----------------------------===//

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "enclave_taint/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"enclave interface leak analyzer"};
    app.require_subcommand(1);

    etaint::RunConfig cfg;
    std::string format = "text";
    std::string dump;

    CLI::App* analyze = app.add_subcommand("analyze", "analyze EDL + IR inputs");
    analyze->add_option("--edl", cfg.edl_paths, "EDL interface file(s)")
        ->required();
    analyze->add_option("--ir", cfg.sir_paths, "IR program file(s)")->required();
    analyze->add_option("--config", cfg.barrier_config_path,
                        "barrier / high-risk config (JSON)");
    analyze->add_option("--format", format, "report format: text|json")
        ->check(CLI::IsMember({"text", "json"}));
    analyze->add_option("--dump", dump,
                        "comma-separated debug dumps: pts,cg,vfg,sinks");
    analyze
        ->add_option("--max-paths", cfg.max_paths, "per-sink leak path cap")
        ->check(CLI::PositiveNumber);
    analyze
        ->add_option("--max-path-len", cfg.max_path_len, "leak path length cap")
        ->check(CLI::PositiveNumber);
    analyze->add_option("--jobs", cfg.jobs,
                        "worker threads (1 = serial reference path)");

    std::string corpus_dir;
    CLI::App* corpus = app.add_subcommand("corpus", "run a corpus directory");
    corpus->add_option("dir", corpus_dir, "corpus cases directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        // Usage problems are input errors under the exit-code contract.
        return code == 0 ? 0 : 2;
    }

    if (analyze->parsed()) {
        cfg.format = format == "json" ? etaint::ReportFormat::Json
                                      : etaint::ReportFormat::Text;
        std::stringstream flags(dump);
        std::string flag;
        while (std::getline(flags, flag, ','))
            if (!flag.empty()) cfg.dump_flags.insert(flag);
        etaint::AnalyzeOutcome out = etaint::run_analyze(cfg);
        std::cout << out.output;
        std::cerr << out.errors;
        return out.exit_code;
    }
    return etaint::run_corpus(corpus_dir, std::cout);
}
