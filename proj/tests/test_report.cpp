#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "errors.hpp"
#include "json.hpp"
#include "report.hpp"

using namespace icp2p;

namespace {

RunReport sample_report() {
    RunReport r;
    r.method = Method::FedAvg;
    r.seed = 9;
    r.transport = TransportKind::InProc;
    r.executed_cycles = 2;
    r.model_packets = 0;
    r.score_reports = 0;
    for (int32_t id = 1; id <= 2; ++id) {
        InstitutionTrail t;
        t.id = id;
        t.noisy_test = {24.0 + id, 0.80, 3e-3};
        t.final_test = {27.5 + id, 0.90, 1.5e-3};
        t.final_characteristic = {27.0 + id, 0.89, 1.7e-3};
        t.final_digest = 0x0123456789abcdefull;
        for (int32_t c = 0; c < 2; ++c) {
            CycleRecord rec;
            rec.cycle = c;
            rec.test = {25.0 + c, 0.85, 2e-3};
            rec.characteristic = {24.5 + c, 0.84, 2.2e-3};
            rec.rho = std::nan("");
            t.cycles.push_back(rec);
        }
        r.institutions.push_back(std::move(t));
    }
    return r;
}

} // namespace

TEST_CASE("json report carries the full structure") {
    RunReport r = sample_report();
    r.wall_ms = 123456.0; // must NOT appear in canonical output
    std::string text = report_to_json(r);
    auto j = nlohmann::json::parse(text);
    CHECK(j["method"] == "fedavg");
    CHECK(j["seed"] == 9);
    CHECK(j["transport"] == "inproc");
    CHECK(j["executed_cycles"] == 2);
    REQUIRE(j["institutions"].size() == 2);
    CHECK(j["institutions"][0]["id"] == 1);
    CHECK(j["institutions"][0]["noisy_test"]["psnr"] == 25.0);
    CHECK(j["institutions"][0]["final_digest"] == "0123456789abcdef");
    CHECK(j["institutions"][0]["final_rho"].is_null());
    REQUIRE(j["institutions"][0]["cycles"].size() == 2);
    CHECK(j["institutions"][0]["cycles"][1]["test"]["psnr"] == 26.0);
    CHECK(j["institutions"][0]["cycles"][0]["rho"].is_null());
    CHECK(j["directives"].is_array());
    CHECK(text.find("wall") == std::string::npos);
}

TEST_CASE("ring fields serialize: rho values and directives") {
    RunReport r = sample_report();
    r.method = Method::Icp2pFl;
    r.final_rho[1] = 1.25;
    r.final_rho[2] = 1.5;
    for (auto& t : r.institutions)
        for (auto& c : t.cycles) c.rho = 0.75;
    DirectiveRecord d;
    d.cycle = 0;
    d.directive.sequence = {2, 1};
    d.directive.site_rounds = {7, 5};
    d.directive.trans_rounds = 2;
    d.directive.streak = 1;
    r.directives.push_back(d);
    auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["institutions"][0]["final_rho"] == 1.25);
    CHECK(j["institutions"][0]["cycles"][0]["rho"] == 0.75);
    REQUIRE(j["directives"].size() == 1);
    CHECK(j["directives"][0]["sequence"] == nlohmann::json({2, 1}));
    CHECK(j["directives"][0]["site_rounds"] == nlohmann::json({7, 5}));
    CHECK(j["directives"][0]["converged"] == false);
    CHECK(j["directives"][0]["streak"] == 1);
}

TEST_CASE("serialization is deterministic") {
    RunReport r = sample_report();
    CHECK(report_to_json(r) == report_to_json(r));
    CHECK(report_to_csv(r) == report_to_csv(r));
}

TEST_CASE("per-run csv shape and empty rho for baselines") {
    RunReport r = sample_report();
    std::string csv = report_to_csv(r);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "method,seed,cycle,institution,split,psnr,ssim,mse,rho");
    int rows = 0;
    bool saw_test = false, saw_char = false;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(line.back() == ','); // NaN rho serializes as empty
        saw_test = saw_test || line.find(",test,") != std::string::npos;
        saw_char = saw_char || line.find(",characteristic,") != std::string::npos;
    }
    CHECK(rows == 2 * 2 * 2); // institutions x cycles x splits
    CHECK(saw_test);
    CHECK(saw_char);
}

TEST_CASE("compare csv: one row per method-seed-cycle-institution") {
    RunReport a = sample_report();
    RunReport b = sample_report();
    b.method = Method::ClMi;
    b.seed = 10;
    std::string csv = compare_to_csv({a, b});
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "method,seed,cycle,institution,psnr,ssim,mse,rho");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2 * 2 * 2); // runs x institutions x cycles
    CHECK(csv.find("fedavg,9,0,1,") != std::string::npos);
    CHECK(csv.find("cl-mi,10,1,2,") != std::string::npos);
}

TEST_CASE("summary table lists noisy baseline and per-method rows") {
    RunReport a = sample_report();
    RunReport b = sample_report();
    b.seed = 10;
    for (auto& t : b.institutions) t.final_test.p += 1.0;
    std::string table = summary_table({a, b});
    CHECK(table.find("noisy-input") != std::string::npos);
    CHECK(table.find("fedavg") != std::string::npos);
    // inst 1 mean over seeds 9,10: (28.5 + 29.5)/2 = 29.00
    CHECK(table.find("29.00") != std::string::npos);
    CHECK(table.find("seeds") != std::string::npos);
}

TEST_CASE("write_text_file creates parents and reports failures") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "icp2p_report_test";
    fs::remove_all(dir);
    std::string path = (dir / "a" / "b.txt").string();
    write_text_file(path, "hello");
    std::ifstream in(path);
    std::string got;
    std::getline(in, got);
    CHECK(got == "hello");
    // a path through an existing regular file cannot be created
    CHECK_THROWS_AS(write_text_file((dir / "a" / "b.txt" / "c.txt").string(), "x"), ConfigError);
    fs::remove_all(dir);
}
