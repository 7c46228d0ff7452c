#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "choquard/harness.hpp"
#include "choquard/solver.hpp"
#include "choquard/version.hpp"

namespace choquard {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CHQF field container: "CHQF" magic, u32 version = 1, u32 dim, u32 points,
// f64 box, then points^dim f64 samples in row-major order; every scalar
// little-endian regardless of host.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double x) {
    std::uint64_t v = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

inline double get_f64(const std::string& in, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return std::bit_cast<double>(v);
}

}

inline constexpr std::uint32_t chqf_version = 1;

inline std::string encode_field(const Field& u) {
    u.validate();
    for (double x : u.values)
        if (!std::isfinite(x))
            throw InvalidInputError("refusing to encode a field with non-finite samples");
    std::string out;
    out.reserve(16 + 8 * u.values.size());
    out.append("CHQF");
    detail::put_u32(out, chqf_version);
    detail::put_u32(out, static_cast<std::uint32_t>(u.grid.dim));
    detail::put_u32(out, static_cast<std::uint32_t>(u.grid.points));
    detail::put_f64(out, u.grid.box);
    for (double x : u.values) detail::put_f64(out, x);
    return out;
}

inline Field decode_field(const std::string& raw, const std::string& origin = "<memory>") {
    if (raw.size() < 24 || raw.compare(0, 4, "CHQF") != 0)
        throw FileFormatError(origin + ": not a CHQF field file (bad magic)");
    std::uint32_t version = detail::get_u32(raw, 4);
    if (version != chqf_version)
        throw FileFormatError(origin + ": unsupported CHQF version " + std::to_string(version));
    GridSpec g;
    g.dim = static_cast<int>(detail::get_u32(raw, 8));
    g.points = static_cast<int>(detail::get_u32(raw, 12));
    g.box = detail::get_f64(raw, 16);
    try {
        g.validate();
    } catch (const InvalidInputError& e) {
        throw FileFormatError(origin + ": invalid grid header: " + e.what());
    }
    const std::size_t n = g.n();
    if (raw.size() != 24 + 8 * n)
        throw FileFormatError(origin + ": truncated or oversized payload (expected " +
                              std::to_string(24 + 8 * n) + " bytes, got " +
                              std::to_string(raw.size()) + ")");
    Field u(g);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = detail::get_f64(raw, 24 + 8 * i);
        if (!std::isfinite(u[i]))
            throw FileFormatError(origin + ": non-finite sample at index " + std::to_string(i));
    }
    return u;
}

inline void save_field(const std::string& path, const Field& u) {
    std::string blob = encode_field(u);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInputError("cannot open for writing: " + path);
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw InvalidInputError("short write: " + path);
}

inline Field load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileFormatError("cannot open field file: " + path);
    std::string raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_field(raw, path);
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    GridSpec grid;
    ProblemParams params;
    SolverConfig solver;
    std::string output_dir;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
inline T get_required(const json& obj, const std::string& where, const char* key) {
    if (!obj.contains(key)) throw ConfigError(where + " is missing required key \"" + key + "\"");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + " has the wrong type: " + e.what());
    }
}

template <typename T>
inline void get_optional(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + " has the wrong type: " + e.what());
    }
}

inline json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
}

inline GridSpec grid_from_json(const json& jg, const std::string& where) {
    if (!jg.is_object()) throw ConfigError(where + " must be an object");
    reject_unknown_keys(jg, where, {"dim", "points", "box"});
    GridSpec g;
    g.dim = get_required<int>(jg, where, "dim");
    g.points = get_required<int>(jg, where, "points");
    g.box = get_required<double>(jg, where, "box");
    try {
        g.validate();
    } catch (const InvalidInputError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return g;
}

inline ProblemParams params_from_json(const json& jp, const std::string& where) {
    if (!jp.is_object()) throw ConfigError(where + " must be an object");
    reject_unknown_keys(jp, where, {"alpha", "p"});
    ProblemParams p;
    p.alpha = get_required<double>(jp, where, "alpha");
    p.p = get_required<double>(jp, where, "p");
    return p;
}

inline SolverConfig solver_from_json(const json& js, const std::string& where) {
    if (!js.is_object()) throw ConfigError(where + " must be an object");
    reject_unknown_keys(js, where,
                        {"tau0", "backtrack", "grow", "tol", "max_iter", "recenter_every",
                         "precondition", "symmetrize", "seed"});
    SolverConfig c;
    get_optional(js, where, "tau0", c.tau0);
    get_optional(js, where, "backtrack", c.backtrack);
    get_optional(js, where, "grow", c.grow);
    get_optional(js, where, "tol", c.tol);
    get_optional(js, where, "max_iter", c.max_iter);
    get_optional(js, where, "recenter_every", c.recenter_every);
    get_optional(js, where, "precondition", c.precondition);
    get_optional(js, where, "symmetrize", c.symmetrize);
    get_optional(js, where, "seed", c.seed);
    try {
        c.validate();
    } catch (const InvalidInputError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

}

inline RunConfig parse_run_config_json(const json& doc, const std::string& origin) {
    if (!doc.is_object()) throw ConfigError(origin + ": config root must be an object");
    detail::reject_unknown_keys(doc, origin, {"grid", "params", "solver", "output"});
    if (!doc.contains("grid")) throw ConfigError(origin + ": missing \"grid\" section");
    if (!doc.contains("params")) throw ConfigError(origin + ": missing \"params\" section");
    RunConfig rc;
    rc.grid = detail::grid_from_json(doc.at("grid"), origin + ".grid");
    rc.params = detail::params_from_json(doc.at("params"), origin + ".params");
    if (doc.contains("solver")) rc.solver = detail::solver_from_json(doc.at("solver"), origin + ".solver");
    if (doc.contains("output")) {
        const json& jo = doc.at("output");
        if (!jo.is_object()) throw ConfigError(origin + ".output must be an object");
        detail::reject_unknown_keys(jo, origin + ".output", {"dir"});
        detail::get_optional(jo, origin + ".output", "dir", rc.output_dir);
    }
    try {
        rc.params.validate(rc.grid.dim);
    } catch (const InvalidInputError& e) {
        throw ConfigError(origin + ".params: " + e.what());
    }
    return rc;
}

inline RunConfig parse_run_config(const std::string& path) {
    return parse_run_config_json(detail::load_json_file(path), path);
}

struct SweepPlanFile {
    SweepPlan plan;
    std::string output_dir;
};

inline SweepPlanFile parse_sweep_plan(const std::string& path) {
    json doc = detail::load_json_file(path);
    if (!doc.is_object()) throw ConfigError(path + ": plan root must be an object");
    detail::reject_unknown_keys(doc, path,
                                {"grids", "alphas", "ps", "solver", "repeats", "seed", "output"});
    SweepPlanFile out;
    for (const char* key : {"grids", "alphas", "ps"})
        if (!doc.contains(key) || !doc.at(key).is_array())
            throw ConfigError(path + ": \"" + key + "\" must be present and an array");
    int idx = 0;
    for (const json& jg : doc.at("grids"))
        out.plan.grids.push_back(
            detail::grid_from_json(jg, path + ".grids[" + std::to_string(idx++) + "]"));
    try {
        out.plan.alphas = doc.at("alphas").get<std::vector<double>>();
        out.plan.ps = doc.at("ps").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": alphas/ps must be arrays of numbers: " + e.what());
    }
    if (doc.contains("solver"))
        out.plan.config = detail::solver_from_json(doc.at("solver"), path + ".solver");
    detail::get_optional(doc, path, "repeats", out.plan.repeats);
    detail::get_optional(doc, path, "seed", out.plan.seed);
    if (doc.contains("output")) {
        const json& jo = doc.at("output");
        if (!jo.is_object()) throw ConfigError(path + ".output must be an object");
        detail::reject_unknown_keys(jo, path + ".output", {"dir"});
        detail::get_optional(jo, path + ".output", "dir", out.output_dir);
    }
    try {
        out.plan.validate();
    } catch (const InvalidInputError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports, hashing, manifests
// ---------------------------------------------------------------------------

inline json grid_to_json(const GridSpec& g) {
    return json{{"dim", g.dim}, {"points", g.points}, {"box", g.box}};
}

inline json params_to_json(const ProblemParams& p, int dim) {
    return json{{"alpha", p.alpha},
                {"p", p.p},
                {"p_lower_nonexist", p.p_lower_nonexist(dim)},
                {"p_lower_exist", p.p_lower_exist(dim)},
                {"p_upper", dim >= 2 ? json(p.p_upper(dim)) : json()}};
}

inline json solver_to_json(const SolverConfig& c) {
    return json{{"tau0", c.tau0},
                {"backtrack", c.backtrack},
                {"grow", c.grow},
                {"tol", c.tol},
                {"max_iter", c.max_iter},
                {"recenter_every", c.recenter_every},
                {"precondition", c.precondition},
                {"symmetrize", c.symmetrize},
                {"seed", c.seed}};
}

inline json report_to_json(const SolutionReport& r) {
    return json{{"mp_estimate", r.mp_estimate},
                {"residual", r.residual},
                {"nehari", r.nehari},
                {"pohozaev", r.pohozaev},
                {"iters", r.iters},
                {"classification", to_string(r.classification)},
                {"lambda", r.lambda},
                {"dterm_negative_seen", r.dterm_negative_seen},
                {"linf_history", r.linf_history},
                {"participation_ratio_history", r.participation_ratio_history},
                {"energy_history", r.energy_history}};
}

inline json sweep_rows_to_json(const std::vector<SweepRow>& rows) {
    json arr = json::array();
    for (const SweepRow& r : rows) {
        json row{{"N", r.N},           {"alpha", r.alpha},
                 {"p", r.p},           {"L", r.L},
                 {"M", r.M},           {"repeat", r.repeat},
                 {"mp", r.mp},         {"residual", r.residual},
                 {"nehari", r.nehari}, {"pohozaev", r.pohozaev},
                 {"classification", r.classification},
                 {"seconds", r.seconds}};
        if (!r.error.empty()) row["error"] = r.error;
        arr.push_back(std::move(row));
    }
    return arr;
}

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Hash of the canonical (key-sorted, no whitespace) serialization; stable
// across platforms because nlohmann objects iterate in sorted key order.
inline std::string config_hash(const json& doc) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(doc.dump())));
    return buf;
}

inline std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Every artifact directory gets exactly one manifest carrying the tool
// version, the full effective configuration (echoed, not referenced), its
// hash, and the artifact paths, so a run is reconstructible from the
// manifest alone.
inline json manifest_json(const std::string& command, const json& effective_config,
                          const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs) {
    return json{{"tool_version", version_string},
                {"command", command},
                {"config", effective_config},
                {"config_hash", config_hash(effective_config)},
                {"inputs", inputs},
                {"outputs", outputs},
                {"created_utc", utc_timestamp()}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw InvalidInputError("cannot open for writing: " + path);
    os << text;
    if (!os) throw InvalidInputError("short write: " + path);
}

}
