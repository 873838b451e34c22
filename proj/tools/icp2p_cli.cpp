// Command-line front end. Talks to the core exclusively through the C API
// (icp2p/icp2p.h); file layout and flag plumbing live here.
//
//   icp2p run       — execute the configured method over its seed list
//   icp2p compare   — execute several methods over shared seeds, join results
//   icp2p validate  — run the build self-check suite
//   icp2p dump-data — write the synthetic datasets as PGM images
//
// Every flag has a config-file equivalent; flags override file values, and
// the ICP2P_OUTPUT_DIR environment variable overrides the output directory
// over both.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icp2p/icp2p.h"

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets; // raw key=value pairs, applied in order
    std::string method;
    std::string seeds;
    std::string transport;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_method) {
    cmd->add_option("-c,--config", o.config_path, "experiment config file (key = value lines)");
    cmd->add_option("--set", o.sets, "override one config key, e.g. --set train.lr=0.1")
        ->take_all();
    if (with_method)
        cmd->add_option("-m,--method", o.method,
                        "method: icp2pfl | fedavg | cl-si | cl-mi | seq-ablation");
    cmd->add_option("--seeds", o.seeds, "comma-separated seed list");
    cmd->add_option("--transport", o.transport, "inproc | socket");
    cmd->add_option("-o,--out", o.out_dir, "output directory (config key output.dir)");
}

[[noreturn]] void die(const std::string& context) {
    std::fprintf(stderr, "error: %s: %s\n", context.c_str(), icp2p_last_error());
    std::exit(1);
}

std::string take_string(icp2p_status st, char* p, const std::string& context) {
    if (st != ICP2P_OK) die(context);
    std::string s = p ? p : "";
    icp2p_free(p);
    return s;
}

icp2p_config* load_config(const CommonOpts& o) {
    icp2p_config* cfg = nullptr;
    icp2p_status st = o.config_path.empty() ? icp2p_config_parse_text("", &cfg)
                                            : icp2p_config_parse_file(o.config_path.c_str(), &cfg);
    if (st != ICP2P_OK) die("loading config");
    auto set = [&](const char* key, const std::string& value) {
        if (value.empty()) return;
        if (icp2p_config_set(cfg, key, value.c_str()) != ICP2P_OK)
            die(std::string("--") + key);
    };
    set("method", o.method);
    set("seeds", o.seeds);
    set("transport", o.transport);
    set("output.dir", o.out_dir);
    for (const std::string& kv : o.sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got \"%s\"\n", kv.c_str());
            std::exit(1);
        }
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        if (icp2p_config_set(cfg, key.c_str(), value.c_str()) != ICP2P_OK)
            die("--set " + kv);
    }
    if (const char* env = std::getenv("ICP2P_OUTPUT_DIR"); env && *env)
        if (icp2p_config_set(cfg, "output.dir", env) != ICP2P_OK) die("ICP2P_OUTPUT_DIR");
    return cfg;
}

std::vector<uint64_t> config_seeds(const icp2p_config* cfg) {
    size_t n = 0;
    if (icp2p_config_seed_count(cfg, &n) != ICP2P_OK) die("reading seed list");
    std::vector<uint64_t> seeds(n);
    for (size_t i = 0; i < n; ++i)
        if (icp2p_config_seed_at(cfg, i, &seeds[i]) != ICP2P_OK) die("reading seed list");
    return seeds;
}

std::string output_dir(const icp2p_config* cfg) {
    char* p = nullptr;
    return take_string(icp2p_config_output_dir(cfg, &p), p, "reading output dir");
}

void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) {
            std::fprintf(stderr, "error: cannot create %s: %s\n",
                         p.parent_path().c_str(), ec.message().c_str());
            std::exit(1);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
        std::exit(1);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) {
        std::fprintf(stderr, "error: write failed for %s\n", path.c_str());
        std::exit(1);
    }
}

/// One executed run plus where its artifacts went.
struct Executed {
    icp2p_result* result = nullptr;
    std::string method;
    uint64_t seed = 0;
};

void write_run_artifacts(const std::string& dir, const Executed& e) {
    std::string stem = dir + "/" + e.method + "-seed" + std::to_string(e.seed);
    char* p = nullptr;
    write_file(stem + ".report.json", take_string(icp2p_result_json(e.result, &p), p, "json"));
    p = nullptr;
    write_file(stem + ".report.csv", take_string(icp2p_result_csv(e.result, &p), p, "csv"));
    p = nullptr;
    std::string transcript =
        take_string(icp2p_result_transcript(e.result, &p), p, "transcript");
    if (!transcript.empty()) write_file(stem + ".transcript.txt", transcript);
    double ms = 0.0;
    if (icp2p_result_wall_ms(e.result, &ms) != ICP2P_OK) die("wall clock");
    char line[64];
    std::snprintf(line, sizeof(line), "wall_ms %.3f\n", ms);
    write_file(stem + ".timing.txt", line);
}

Executed execute(const icp2p_config* cfg, uint64_t seed) {
    Executed e;
    char* m = nullptr;
    e.method = take_string(icp2p_config_method(cfg, &m), m, "method name");
    e.seed = seed;
    if (icp2p_run(cfg, seed, &e.result) != ICP2P_OK)
        die(e.method + " seed " + std::to_string(seed));
    return e;
}

void print_summary(const std::vector<Executed>& runs) {
    std::vector<const icp2p_result*> rs;
    rs.reserve(runs.size());
    for (const Executed& e : runs) rs.push_back(e.result);
    char* p = nullptr;
    std::string table =
        take_string(icp2p_summary_table(rs.data(), rs.size(), &p), p, "summary table");
    std::fputs(table.c_str(), stdout);
}

int cmd_run(const CommonOpts& opts) {
    icp2p_config* cfg = load_config(opts);
    std::string dir = output_dir(cfg);
    std::vector<uint64_t> seeds = config_seeds(cfg);

    char* dump = nullptr;
    write_file(dir + "/config.txt",
               take_string(icp2p_config_dump(cfg, &dump), dump, "config dump"));

    std::vector<Executed> runs;
    for (uint64_t seed : seeds) {
        Executed e = execute(cfg, seed);
        write_run_artifacts(dir, e);
        double ms = 0.0;
        icp2p_result_wall_ms(e.result, &ms);
        std::printf("%s seed %llu: done (%.1f s) -> %s/%s-seed%llu.report.json\n",
                    e.method.c_str(), static_cast<unsigned long long>(seed), ms / 1000.0,
                    dir.c_str(), e.method.c_str(), static_cast<unsigned long long>(seed));
        runs.push_back(e);
    }
    print_summary(runs);
    for (Executed& e : runs) icp2p_result_free(e.result);
    icp2p_config_free(cfg);
    return 0;
}

int cmd_compare(const CommonOpts& opts, const std::string& methods_csv) {
    icp2p_config* base = load_config(opts);
    std::string dir = output_dir(base);

    std::vector<std::string> methods;
    std::string cur;
    for (char c : methods_csv + ",") {
        if (c == ',') {
            while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
            while (!cur.empty() && cur.back() == ' ') cur.pop_back();
            if (!cur.empty()) methods.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (methods.empty()) {
        std::fprintf(stderr, "error: --methods needs at least one method name\n");
        return 1;
    }

    std::vector<uint64_t> seeds = config_seeds(base);
    std::vector<Executed> runs;
    for (const std::string& m : methods) {
        icp2p_config* cfg = nullptr;
        if (icp2p_config_clone(base, &cfg) != ICP2P_OK) die("clone config");
        if (icp2p_config_set(cfg, "method", m.c_str()) != ICP2P_OK) die("method " + m);
        for (uint64_t seed : seeds) {
            Executed e = execute(cfg, seed);
            write_run_artifacts(dir, e);
            double ms = 0.0;
            icp2p_result_wall_ms(e.result, &ms);
            std::printf("%s seed %llu: done (%.1f s)\n", m.c_str(),
                        static_cast<unsigned long long>(seed), ms / 1000.0);
            runs.push_back(e);
        }
        icp2p_config_free(cfg);
    }

    std::vector<const icp2p_result*> rs;
    for (const Executed& e : runs) rs.push_back(e.result);
    char* p = nullptr;
    write_file(dir + "/compare.csv",
               take_string(icp2p_compare_csv(rs.data(), rs.size(), &p), p, "compare csv"));
    p = nullptr;
    std::string table =
        take_string(icp2p_summary_table(rs.data(), rs.size(), &p), p, "summary table");
    write_file(dir + "/summary.txt", table);
    std::fputs(table.c_str(), stdout);
    std::printf("wrote %s/compare.csv and %s/summary.txt\n", dir.c_str(), dir.c_str());

    for (Executed& e : runs) icp2p_result_free(e.result);
    icp2p_config_free(base);
    return 0;
}

int cmd_validate() {
    int ok = 0;
    char* report = nullptr;
    if (icp2p_validate(&ok, &report) != ICP2P_OK) die("validate");
    std::fputs(report ? report : "", stdout);
    icp2p_free(report);
    return ok ? 0 : 1;
}

int cmd_dump_data(const CommonOpts& opts, uint64_t seed, bool seed_given) {
    icp2p_config* cfg = load_config(opts);
    std::string dir = output_dir(cfg);
    if (!seed_given) {
        std::vector<uint64_t> seeds = config_seeds(cfg);
        seed = seeds.front();
    }
    if (icp2p_dump_data(cfg, seed, dir.c_str()) != ICP2P_OK) die("dump-data");
    std::printf("wrote datasets for base seed %llu under %s/ (see manifest.txt)\n",
                static_cast<unsigned long long>(seed), dir.c_str());
    icp2p_config_free(cfg);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(icp2p_version()) +
                 " - serverless federated continual-learning denoiser testbed"};
    app.require_subcommand(1);

    CommonOpts run_opts;
    CLI::App* run = app.add_subcommand("run", "execute the configured method over its seeds");
    add_common(run, run_opts, true);

    CommonOpts cmp_opts;
    std::string methods_csv = "icp2pfl,fedavg,cl-mi";
    CLI::App* cmp = app.add_subcommand("compare", "run several methods over shared seeds");
    add_common(cmp, cmp_opts, false);
    cmp->add_option("--methods", methods_csv, "comma-separated method list");

    CLI::App* val = app.add_subcommand("validate", "run the build self-check suite");

    CommonOpts dump_opts;
    uint64_t dump_seed = 0;
    CLI::App* dump = app.add_subcommand("dump-data", "write synthetic datasets as PGM files");
    add_common(dump, dump_opts, false);
    CLI::Option* seed_opt = dump->add_option("--seed", dump_seed, "base seed (default: first configured seed)");

    CLI11_PARSE(app, argc, argv);

    if (*run) return cmd_run(run_opts);
    if (*cmp) return cmd_compare(cmp_opts, methods_csv);
    if (*val) return cmd_validate();
    if (*dump) return cmd_dump_data(dump_opts, dump_seed, seed_opt->count() > 0);
    return 1;
}
