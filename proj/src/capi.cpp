#include "icp2p/icp2p.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "orchestrator.hpp"
#include "report.hpp"
#include "validate.hpp"
#include "wire.hpp"

using namespace icp2p;

struct icp2p_config {
    ExperimentConfig cfg;
};

struct icp2p_result {
    RunOutput out;
};

namespace {

thread_local std::string g_last_error;

icp2p_status fail(icp2p_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

icp2p_status fail_invalid(const char* what) {
    return fail(ICP2P_ERR_INVALID_ARGUMENT, std::string("invalid argument: ") + what);
}

/// Run `body` and translate exceptions into status codes + last-error text.
template <typename F>
icp2p_status guarded(F&& body) {
    try {
        body();
        return ICP2P_OK;
    } catch (const ConfigError& e) {
        return fail(ICP2P_ERR_CONFIG, e.what());
    } catch (const WireError& e) {
        return fail(ICP2P_ERR_PROTOCOL, e.what());
    } catch (const ProtocolError& e) {
        return fail(ICP2P_ERR_PROTOCOL, e.what());
    } catch (const NumericError& e) {
        return fail(ICP2P_ERR_NUMERIC, e.what());
    } catch (const ShapeError& e) {
        return fail(ICP2P_ERR_SHAPE, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(ICP2P_ERR_IO, e.what());
    } catch (const std::ios_base::failure& e) {
        return fail(ICP2P_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(ICP2P_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(ICP2P_ERR_INTERNAL, "unknown error");
    }
}

/// Copy into malloc storage so callers release with icp2p_free -> free().
char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

std::vector<InstitutionDataset> build_datasets(const ExperimentConfig& cfg, uint64_t seed) {
    std::vector<InstitutionDataset> data;
    data.reserve(cfg.protocols.size());
    for (const ProtocolParams& proto : cfg.protocols)
        data.push_back(make_institution_dataset(proto, cfg.data, seed));
    return data;
}

void write_pgm(const std::string& path, const Tensor& img) {
    std::ostringstream os;
    os << "P5\n" << img.w() << " " << img.h() << "\n255\n";
    std::string head = os.str();
    std::string bytes;
    bytes.reserve(head.size() + static_cast<size_t>(img.numel()));
    bytes += head;
    for (int64_t i = 0; i < img.numel(); ++i) {
        float v = img.data[static_cast<size_t>(i)] * 255.0f + 0.5f;
        if (v < 0.0f) v = 0.0f;
        if (v > 255.0f) v = 255.0f;
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    write_text_file(path, bytes);
}

} // namespace

extern "C" {

const char* icp2p_version(void) { return "icp2p 1.0.0"; }

const char* icp2p_last_error(void) { return g_last_error.c_str(); }

icp2p_status icp2p_config_parse_file(const char* path, icp2p_config** out) {
    if (!path || !out) return fail_invalid("icp2p_config_parse_file");
    *out = nullptr;
    return guarded([&] { *out = new icp2p_config{parse_config_file(path)}; });
}

icp2p_status icp2p_config_parse_text(const char* text, icp2p_config** out) {
    if (!text || !out) return fail_invalid("icp2p_config_parse_text");
    *out = nullptr;
    return guarded([&] { *out = new icp2p_config{parse_config_text(text)}; });
}

icp2p_status icp2p_config_set(icp2p_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail_invalid("icp2p_config_set");
    return guarded([&] {
        ExperimentConfig next = cfg->cfg; // mutate a copy: failed sets leave cfg intact
        apply_override(next, key, value);
        next.check();
        cfg->cfg = std::move(next);
    });
}

icp2p_status icp2p_config_clone(const icp2p_config* cfg, icp2p_config** out) {
    if (!cfg || !out) return fail_invalid("icp2p_config_clone");
    *out = nullptr;
    return guarded([&] { *out = new icp2p_config{cfg->cfg}; });
}

icp2p_status icp2p_config_dump(const icp2p_config* cfg, char** out_text) {
    if (!cfg || !out_text) return fail_invalid("icp2p_config_dump");
    *out_text = nullptr;
    return guarded([&] { *out_text = dup_string(config_to_text(cfg->cfg)); });
}

icp2p_status icp2p_config_seed_count(const icp2p_config* cfg, size_t* out_count) {
    if (!cfg || !out_count) return fail_invalid("icp2p_config_seed_count");
    *out_count = cfg->cfg.seeds.size();
    return ICP2P_OK;
}

icp2p_status icp2p_config_seed_at(const icp2p_config* cfg, size_t index, uint64_t* out_seed) {
    if (!cfg || !out_seed) return fail_invalid("icp2p_config_seed_at");
    if (index >= cfg->cfg.seeds.size())
        return fail(ICP2P_ERR_INVALID_ARGUMENT, "seed index out of range");
    *out_seed = cfg->cfg.seeds[index];
    return ICP2P_OK;
}

icp2p_status icp2p_config_output_dir(const icp2p_config* cfg, char** out_dir) {
    if (!cfg || !out_dir) return fail_invalid("icp2p_config_output_dir");
    *out_dir = nullptr;
    return guarded([&] { *out_dir = dup_string(cfg->cfg.output_dir); });
}

icp2p_status icp2p_config_method(const icp2p_config* cfg, char** out_method) {
    if (!cfg || !out_method) return fail_invalid("icp2p_config_method");
    *out_method = nullptr;
    return guarded([&] { *out_method = dup_string(method_name(cfg->cfg.run.method)); });
}

void icp2p_config_free(icp2p_config* cfg) { delete cfg; }

icp2p_status icp2p_run(const icp2p_config* cfg, uint64_t seed, icp2p_result** out) {
    if (!cfg || !out) return fail_invalid("icp2p_run");
    *out = nullptr;
    return guarded([&] {
        ExperimentConfig ec = cfg->cfg;
        ec.check();
        ec.run.train.seed = seed;
        std::vector<InstitutionDataset> data = build_datasets(ec, seed);
        RunOutput run = run_method(ec.run, data, ec.transport);
        *out = new icp2p_result{std::move(run)};
    });
}

icp2p_status icp2p_result_json(const icp2p_result* res, char** out) {
    if (!res || !out) return fail_invalid("icp2p_result_json");
    *out = nullptr;
    return guarded([&] { *out = dup_string(report_to_json(res->out.report)); });
}

icp2p_status icp2p_result_csv(const icp2p_result* res, char** out) {
    if (!res || !out) return fail_invalid("icp2p_result_csv");
    *out = nullptr;
    return guarded([&] { *out = dup_string(report_to_csv(res->out.report)); });
}

icp2p_status icp2p_result_transcript(const icp2p_result* res, char** out) {
    if (!res || !out) return fail_invalid("icp2p_result_transcript");
    *out = nullptr;
    return guarded([&] { *out = dup_string(res->out.transcript); });
}

icp2p_status icp2p_result_wall_ms(const icp2p_result* res, double* out_ms) {
    if (!res || !out_ms) return fail_invalid("icp2p_result_wall_ms");
    *out_ms = res->out.report.wall_ms;
    return ICP2P_OK;
}

icp2p_status icp2p_compare_csv(const icp2p_result* const* results, size_t count, char** out) {
    if (!results || !out) return fail_invalid("icp2p_compare_csv");
    *out = nullptr;
    return guarded([&] {
        std::vector<RunReport> rs;
        rs.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            if (!results[i]) throw ShapeError("compare: NULL result handle");
            rs.push_back(results[i]->out.report);
        }
        *out = dup_string(compare_to_csv(rs));
    });
}

icp2p_status icp2p_summary_table(const icp2p_result* const* results, size_t count, char** out) {
    if (!results || !out) return fail_invalid("icp2p_summary_table");
    *out = nullptr;
    return guarded([&] {
        std::vector<RunReport> rs;
        rs.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            if (!results[i]) throw ShapeError("summary: NULL result handle");
            rs.push_back(results[i]->out.report);
        }
        *out = dup_string(summary_table(rs));
    });
}

void icp2p_result_free(icp2p_result* res) { delete res; }

icp2p_status icp2p_validate(int* out_ok, char** out_report) {
    if (!out_ok) return fail_invalid("icp2p_validate");
    *out_ok = 0;
    if (out_report) *out_report = nullptr;
    return guarded([&] {
        std::vector<ValidationResult> results = run_validation();
        *out_ok = all_ok(results) ? 1 : 0;
        if (out_report) *out_report = dup_string(format_validation(results));
    });
}

icp2p_status icp2p_dump_data(const icp2p_config* cfg, uint64_t seed, const char* dir) {
    if (!cfg || !dir) return fail_invalid("icp2p_dump_data");
    return guarded([&] {
        cfg->cfg.check();
        std::vector<InstitutionDataset> data = build_datasets(cfg->cfg, seed);
        std::ostringstream manifest;
        manifest << "base_seed " << seed << "\n";
        for (const InstitutionDataset& inst : data) {
            manifest << "institution " << inst.id << " gain " << inst.protocol.gain << " sigma "
                     << inst.protocol.sigma << " window [" << inst.protocol.window_lo << ", "
                     << inst.protocol.window_hi << "] family " << inst.protocol.family << "\n";
            auto dump_split = [&](const char* split, const std::vector<ImagePair>& pairs) {
                for (size_t i = 0; i < pairs.size(); ++i) {
                    std::ostringstream stem;
                    stem << dir << "/institution-" << inst.id << "/" << split << "-" << i;
                    write_pgm(stem.str() + "-clean.pgm", pairs[i].clean);
                    write_pgm(stem.str() + "-noisy.pgm", pairs[i].noisy);
                    manifest << "  " << split << " " << i << " "
                             << "institution-" << inst.id << "/" << split << "-" << i
                             << "-{clean,noisy}.pgm\n";
                }
            };
            dump_split("train", inst.train);
            dump_split("test", inst.test);
            dump_split("characteristic", inst.characteristic);
        }
        write_text_file(std::string(dir) + "/manifest.txt", manifest.str());
    });
}

void icp2p_free(char* p) { std::free(p); }

} // extern "C"
