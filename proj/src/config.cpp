#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "errors.hpp"

namespace icp2p {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(int line, const std::string& msg) { throw ConfigError(line, msg); }

double parse_f64(const std::string& key, const std::string& val, int line) {
    try {
        size_t used = 0;
        double v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument("");
        if (!std::isfinite(v)) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad(line, key + ": expected a finite number, got \"" + val + "\"");
    }
}

int64_t parse_i64(const std::string& key, const std::string& val, int line) {
    try {
        size_t used = 0;
        long long v = std::stoll(val, &used);
        if (used != val.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad(line, key + ": expected an integer, got \"" + val + "\"");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& val, int line) {
    try {
        if (!val.empty() && val[0] == '-') throw std::invalid_argument("");
        size_t used = 0;
        unsigned long long v = std::stoull(val, &used);
        if (used != val.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad(line, key + ": expected a non-negative integer, got \"" + val + "\"");
    }
}

bool parse_bool(const std::string& key, const std::string& val, int line) {
    if (val == "true" || val == "1" || val == "on" || val == "yes") return true;
    if (val == "false" || val == "0" || val == "off" || val == "no") return false;
    bad(line, key + ": expected a boolean (true/false), got \"" + val + "\"");
}

int32_t parse_count(const std::string& key, const std::string& val, int line, int64_t lo,
                    int64_t hi) {
    int64_t v = parse_i64(key, val, line);
    if (v < lo || v > hi)
        bad(line, key + ": must be in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "], got " + val);
    return static_cast<int32_t>(v);
}

double parse_positive(const std::string& key, const std::string& val, int line) {
    double v = parse_f64(key, val, line);
    if (!(v > 0.0)) bad(line, key + ": must be positive, got " + val);
    return v;
}

double parse_nonneg(const std::string& key, const std::string& val, int line) {
    double v = parse_f64(key, val, line);
    if (v < 0.0) bad(line, key + ": must be >= 0, got " + val);
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

ProtocolParams* find_protocol(ExperimentConfig& cfg, int id, const std::string& key, int line) {
    for (ProtocolParams& p : cfg.protocols)
        if (p.id == id) return &p;
    bad(line, key + ": institution id " + std::to_string(id) + " is outside 1.." +
                  std::to_string(cfg.protocols.size()) + " (set `institutions` first)");
}

void set_institution_key(ExperimentConfig& cfg, const std::string& key,
                         const std::vector<std::string>& parts, const std::string& val,
                         int line) {
    if (parts.size() != 3 || parts[1].empty() || parts[2].empty())
        bad(line, key + ": expected institution.<id>.<field>");
    int id = static_cast<int>(parse_i64(key, parts[1], line));
    ProtocolParams* p = find_protocol(cfg, id, key, line);
    const std::string& field = parts[2];
    if (field == "gain")
        p->gain = parse_nonneg(key, val, line);
    else if (field == "sigma")
        p->sigma = parse_nonneg(key, val, line);
    else if (field == "window_lo")
        p->window_lo = parse_f64(key, val, line);
    else if (field == "window_hi")
        p->window_hi = parse_f64(key, val, line);
    else if (field == "family")
        p->family = static_cast<int>(parse_i64(key, val, line));
    else
        bad(line, key + ": unknown institution field \"" + field + "\"");
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& val, int line) {
    if (val.empty()) bad(line, key + ": empty value");
    if (key == "method") {
        try {
            cfg.run.method = method_from_name(val);
        } catch (const Error&) {
            bad(line, key + ": unknown method \"" + val +
                          "\" (expected icp2pfl | fedavg | cl-si | cl-mi | seq-ablation)");
        }
    } else if (key == "transport") {
        if (val == "inproc")
            cfg.transport = TransportKind::InProc;
        else if (val == "socket")
            cfg.transport = TransportKind::Socket;
        else
            bad(line, key + ": expected inproc or socket, got \"" + val + "\"");
    } else if (key == "seeds") {
        std::vector<uint64_t> seeds;
        for (const std::string& part : split(val, ',')) {
            std::string t = trim(part);
            if (t.empty()) bad(line, key + ": empty element in seed list");
            seeds.push_back(parse_u64(key, t, line));
        }
        std::set<uint64_t> uniq(seeds.begin(), seeds.end());
        if (uniq.size() != seeds.size()) bad(line, key + ": duplicate seed in list");
        cfg.seeds = std::move(seeds);
    } else if (key == "output.dir") {
        cfg.output_dir = val;
    } else if (key == "institutions") {
        cfg.protocols = ExperimentConfig::default_protocols(parse_count(key, val, line, 1, 256));
    } else if (key == "train.lr") {
        cfg.run.train.lr = parse_positive(key, val, line);
    } else if (key == "train.batch") {
        cfg.run.train.batch = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "train.eps") {
        cfg.run.train.eps = parse_nonneg(key, val, line);
    } else if (key == "train.transmissions") {
        cfg.run.train.transmissions = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "train.site_rounds") {
        cfg.run.train.site_rounds = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "train.threshold") {
        cfg.run.train.threshold = parse_positive(key, val, line);
    } else if (key == "train.patch") {
        cfg.run.train.patch = parse_count(key, val, line, 1, 1 << 16);
    } else if (key == "train.stride") {
        cfg.run.train.stride = parse_count(key, val, line, 1, 1 << 16);
    } else if (key == "train.decay_round") {
        cfg.run.lr_decay_round = parse_count(key, val, line, 0, 1 << 30);
    } else if (key == "train.decay_factor") {
        double v = parse_positive(key, val, line);
        if (v > 1.0) bad(line, key + ": must be in (0, 1], got " + val);
        cfg.run.lr_decay_factor = v;
    } else if (key == "train.fine_tune_incoming") {
        cfg.run.fine_tune_incoming = parse_bool(key, val, line);
    } else if (key == "model.blocks") {
        cfg.run.arch.blocks = parse_count(key, val, line, 1, 64);
    } else if (key == "model.channels") {
        cfg.run.arch.channels = parse_count(key, val, line, 1, 1024);
    } else if (key == "model.residual") {
        cfg.run.arch.global_residual = parse_bool(key, val, line);
    } else if (key == "odm.switch") {
        cfg.run.odm_switch = parse_bool(key, val, line);
    } else if (key == "odm.use_pam") {
        cfg.run.use_pam = parse_bool(key, val, line);
    } else if (key == "eval.range") {
        cfg.run.dynamic_range = parse_positive(key, val, line);
    } else if (key == "eval.psnr_cap") {
        cfg.run.psnr_cap = parse_positive(key, val, line);
    } else if (key == "si.institution") {
        cfg.run.si_institution = parse_count(key, val, line, 1, 256);
    } else if (key == "data.train_count") {
        cfg.data.train_count = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "data.test_count") {
        cfg.data.test_count = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "data.characteristic_count") {
        cfg.data.characteristic_count = parse_count(key, val, line, 1, 1 << 20);
    } else if (key == "data.image_size") {
        cfg.data.image_size = parse_count(key, val, line, 32, 4096);
    } else {
        std::vector<std::string> parts = split(key, '.');
        if (!parts.empty() && parts[0] == "institution")
            set_institution_key(cfg, key, parts, val, line);
        else
            bad(line, "unknown key \"" + key + "\"");
    }
}

void fmt_f64(std::ostringstream& os, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    os.write(buf, res.ptr - buf);
}

} // namespace

std::vector<ProtocolParams> ExperimentConfig::default_protocols(int count) {
    if (count < 1) throw ShapeError("institution count must be >= 1");
    std::vector<ProtocolParams> out;
    out.reserve(static_cast<size_t>(count));
    for (int id = 1; id <= count; ++id) {
        ProtocolParams p;
        p.id = id;
        p.gain = 0.002 * id;
        p.sigma = 0.010 + 0.015 * (id - 1);
        p.family = id;
        out.push_back(p);
    }
    return out;
}

void ExperimentConfig::check() const {
    run.check();
    if (seeds.empty()) throw ConfigError(0, "seeds: at least one seed is required");
    if (output_dir.empty()) throw ConfigError(0, "output.dir: must not be empty");
    if (data.train_count < 1 || data.test_count < 1 || data.characteristic_count < 1)
        throw ConfigError(0, "data: all split counts must be >= 1");
    if (data.image_size < 32) throw ConfigError(0, "data.image_size: must be >= 32");
    if (run.train.patch > data.image_size)
        throw ConfigError(0, "train.patch: exceeds data.image_size");
    if (protocols.empty()) throw ConfigError(0, "institutions: at least one is required");
    for (const ProtocolParams& p : protocols) {
        try {
            p.check();
        } catch (const Error& e) {
            throw ConfigError(0, "institution." + std::to_string(p.id) + ": " + e.what());
        }
    }
    for (size_t i = 0; i < protocols.size(); ++i)
        for (size_t j = i + 1; j < protocols.size(); ++j)
            if (protocols[i].gain == protocols[j].gain &&
                protocols[i].sigma == protocols[j].sigma)
                throw ConfigError(0, "institutions " + std::to_string(protocols[i].id) + " and " +
                                         std::to_string(protocols[j].id) +
                                         " share identical gain and sigma; acquisition "
                                         "parameters must differ between institutions");
    const bool ring = run.method == Method::Icp2pFl || run.method == Method::SeqAblation;
    if (ring && protocols.size() < 2)
        throw ConfigError(0, "method " + std::string(method_name(run.method)) +
                                 " needs at least 2 institutions");
    if (run.method == Method::ClSi) {
        bool found = false;
        for (const ProtocolParams& p : protocols) found = found || p.id == run.si_institution;
        if (!found)
            throw ConfigError(0, "si.institution: id " + std::to_string(run.si_institution) +
                                     " is not a configured institution");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    struct Entry {
        std::string key, val;
        int line;
    };
    std::vector<Entry> entries;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::string s = trim(raw);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos) bad(line_no, "expected `key = value`, got \"" + s + "\"");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) bad(line_no, "missing key before '='");
        if (!seen.insert(key).second) bad(line_no, "duplicate key \"" + key + "\"");
        entries.push_back({key, val, line_no});
    }
    ExperimentConfig cfg;
    // `institutions` resets the acquisition table, so apply institution.*
    // overrides after everything else regardless of file order.
    for (const Entry& e : entries)
        if (e.key.rfind("institution.", 0) != 0) set_key(cfg, e.key, e.val, e.line);
    for (const Entry& e : entries)
        if (e.key.rfind("institution.", 0) == 0) set_key(cfg, e.key, e.val, e.line);
    cfg.check();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot open \"" + path + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    set_key(cfg, trim(key), trim(value), 0);
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "method = " << method_name(cfg.run.method) << "\n";
    os << "transport = " << transport_name(cfg.transport) << "\n";
    os << "seeds = ";
    for (size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? ", " : "") << cfg.seeds[i];
    os << "\n";
    os << "output.dir = " << cfg.output_dir << "\n";
    os << "institutions = " << cfg.protocols.size() << "\n";
    auto kv = [&os](const char* key, double v) {
        os << key << " = ";
        fmt_f64(os, v);
        os << "\n";
    };
    kv("train.lr", cfg.run.train.lr);
    os << "train.batch = " << cfg.run.train.batch << "\n";
    kv("train.eps", cfg.run.train.eps);
    os << "train.transmissions = " << cfg.run.train.transmissions << "\n";
    os << "train.site_rounds = " << cfg.run.train.site_rounds << "\n";
    kv("train.threshold", cfg.run.train.threshold);
    os << "train.patch = " << cfg.run.train.patch << "\n";
    os << "train.stride = " << cfg.run.train.stride << "\n";
    os << "train.decay_round = " << cfg.run.lr_decay_round << "\n";
    kv("train.decay_factor", cfg.run.lr_decay_factor);
    os << "train.fine_tune_incoming = " << (cfg.run.fine_tune_incoming ? "true" : "false") << "\n";
    os << "model.blocks = " << cfg.run.arch.blocks << "\n";
    os << "model.channels = " << cfg.run.arch.channels << "\n";
    os << "model.residual = " << (cfg.run.arch.global_residual ? "true" : "false") << "\n";
    os << "odm.switch = " << (cfg.run.odm_switch ? "true" : "false") << "\n";
    os << "odm.use_pam = " << (cfg.run.use_pam ? "true" : "false") << "\n";
    kv("eval.range", cfg.run.dynamic_range);
    kv("eval.psnr_cap", cfg.run.psnr_cap);
    os << "si.institution = " << cfg.run.si_institution << "\n";
    os << "data.train_count = " << cfg.data.train_count << "\n";
    os << "data.test_count = " << cfg.data.test_count << "\n";
    os << "data.characteristic_count = " << cfg.data.characteristic_count << "\n";
    os << "data.image_size = " << cfg.data.image_size << "\n";
    for (const ProtocolParams& p : cfg.protocols) {
        std::string base = "institution." + std::to_string(p.id) + ".";
        kv((base + "gain").c_str(), p.gain);
        kv((base + "sigma").c_str(), p.sigma);
        kv((base + "window_lo").c_str(), p.window_lo);
        kv((base + "window_hi").c_str(), p.window_hi);
        os << base << "family = " << p.family << "\n";
    }
    return os.str();
}

} // namespace icp2p
