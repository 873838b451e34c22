#include "report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"
#include "tensor.hpp"

namespace icp2p {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

ordered_json metric_json(const MetricVector& mv) {
    return ordered_json{{"psnr", mv.p}, {"ssim", mv.s}, {"mse", mv.m}};
}

ordered_json rho_json(double rho) {
    if (std::isnan(rho)) return nullptr;
    return rho;
}

void csv_row(std::ostringstream& os, const RunReport& r, int32_t cycle, int32_t inst,
             const char* split, const MetricVector& mv, double rho) {
    os << method_name(r.method) << ',' << r.seed << ',' << cycle << ',' << inst;
    if (split) os << ',' << split;
    os << ',' << fmt_shortest(mv.p) << ',' << fmt_shortest(mv.s) << ',' << fmt_shortest(mv.m)
       << ',';
    if (!std::isnan(rho)) os << fmt_shortest(rho);
    os << '\n';
}

} // namespace

std::string report_to_json(const RunReport& r) {
    ordered_json j;
    j["method"] = method_name(r.method);
    j["seed"] = r.seed;
    j["transport"] = transport_name(r.transport);
    j["executed_cycles"] = r.executed_cycles;
    j["model_packets"] = r.model_packets;
    j["score_reports"] = r.score_reports;

    ordered_json insts = ordered_json::array();
    for (const InstitutionTrail& t : r.institutions) {
        ordered_json ji;
        ji["id"] = t.id;
        ji["noisy_test"] = metric_json(t.noisy_test);
        ji["final_test"] = metric_json(t.final_test);
        ji["final_characteristic"] = metric_json(t.final_characteristic);
        ji["final_digest"] = digest_hex(t.final_digest);
        auto fr = r.final_rho.find(t.id);
        ji["final_rho"] = fr == r.final_rho.end() ? ordered_json(nullptr) : rho_json(fr->second);
        ordered_json cycles = ordered_json::array();
        for (const CycleRecord& c : t.cycles) {
            ordered_json jc;
            jc["cycle"] = c.cycle;
            jc["test"] = metric_json(c.test);
            jc["characteristic"] = metric_json(c.characteristic);
            jc["rho"] = rho_json(c.rho);
            cycles.push_back(std::move(jc));
        }
        ji["cycles"] = std::move(cycles);
        insts.push_back(std::move(ji));
    }
    j["institutions"] = std::move(insts);

    ordered_json dirs = ordered_json::array();
    for (const DirectiveRecord& d : r.directives) {
        ordered_json jd;
        jd["cycle"] = d.cycle;
        jd["sequence"] = d.directive.sequence;
        jd["site_rounds"] = d.directive.site_rounds;
        jd["converged"] = d.directive.converged;
        jd["streak"] = d.directive.streak;
        jd["origin"] = d.directive.origin_id;
        dirs.push_back(std::move(jd));
    }
    j["directives"] = std::move(dirs);
    return j.dump(2) + "\n";
}

std::string report_to_csv(const RunReport& r) {
    std::ostringstream os;
    os << "method,seed,cycle,institution,split,psnr,ssim,mse,rho\n";
    for (const InstitutionTrail& t : r.institutions)
        for (const CycleRecord& c : t.cycles) {
            csv_row(os, r, c.cycle, t.id, "test", c.test, c.rho);
            csv_row(os, r, c.cycle, t.id, "characteristic", c.characteristic, c.rho);
        }
    return os.str();
}

std::string compare_to_csv(const std::vector<RunReport>& rs) {
    std::ostringstream os;
    os << "method,seed,cycle,institution,psnr,ssim,mse,rho\n";
    for (const RunReport& r : rs)
        for (const InstitutionTrail& t : r.institutions)
            for (const CycleRecord& c : t.cycles) csv_row(os, r, c.cycle, t.id, nullptr, c.test, c.rho);
    return os.str();
}

std::string summary_table(const std::vector<RunReport>& rs) {
    if (rs.empty()) return "(no runs)\n";

    // (method order of first appearance) x (institution id) -> finals per seed
    std::vector<Method> methods;
    std::map<int32_t, std::vector<double>> noisy_p, noisy_s;
    std::map<int32_t, std::set<uint64_t>> noisy_seen; // same seed => same noisy data
    struct Cell {
        std::vector<double> p, s;
    };
    std::map<std::pair<int, int32_t>, Cell> cells;
    std::vector<int32_t> inst_ids;
    for (const RunReport& r : rs) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
        int mi = static_cast<int>(std::find(methods.begin(), methods.end(), r.method) -
                                  methods.begin());
        for (const InstitutionTrail& t : r.institutions) {
            if (std::find(inst_ids.begin(), inst_ids.end(), t.id) == inst_ids.end())
                inst_ids.push_back(t.id);
            cells[{mi, t.id}].p.push_back(t.final_test.p);
            cells[{mi, t.id}].s.push_back(t.final_test.s);
            if (noisy_seen[t.id].insert(r.seed).second) {
                noisy_p[t.id].push_back(t.noisy_test.p);
                noisy_s[t.id].push_back(t.noisy_test.s);
            }
        }
    }
    std::sort(inst_ids.begin(), inst_ids.end());

    auto mean_std = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double var = 0;
        for (double x : v) var += (x - m) * (x - m);
        double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>(m, sd);
    };
    auto cell_text = [&](const std::vector<double>& v, const char* fmt_mean,
                         const char* fmt_std) {
        auto [m, sd] = mean_std(v);
        char buf[64];
        std::snprintf(buf, sizeof(buf), fmt_mean, m);
        std::string out = buf;
        std::snprintf(buf, sizeof(buf), fmt_std, sd);
        return out + "+-" + buf;
    };

    std::ostringstream os;
    os << "method        inst  psnr (mean+-std)    ssim (mean+-std)    seeds\n";
    os << "------------  ----  ------------------  ------------------  -----\n";
    auto emit = [&](const std::string& name, int32_t inst, const std::vector<double>& p,
                    const std::vector<double>& s) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-12s  %4d  %-18s  %-18s  %5zu\n", name.c_str(), inst,
                      cell_text(p, "%.2f", "%.4f").c_str(),
                      cell_text(s, "%.4f", "%.4f").c_str(), p.size());
        os << line;
    };
    for (int32_t id : inst_ids) emit("noisy-input", id, noisy_p[id], noisy_s[id]);
    for (size_t mi = 0; mi < methods.size(); ++mi)
        for (int32_t id : inst_ids) {
            auto it = cells.find({static_cast<int>(mi), id});
            if (it == cells.end()) continue;
            emit(method_name(methods[mi]), id, it->second.p, it->second.s);
        }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw ConfigError(0, "cannot create directory \"" + p.parent_path().string() +
                                         "\": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(0, "cannot open \"" + path + "\" for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw ConfigError(0, "write failed for \"" + path + "\"");
}

} // namespace icp2p
