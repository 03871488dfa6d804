#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pspin/disorder.hpp"
#include "pspin/errors.hpp"
#include "pspin/montecarlo.hpp"
#include "pspin/nim.hpp"
#include "pspin/parisi.hpp"
#include "pspin/rng.hpp"
#include "pspin/spike_bulk.hpp"
#include "pspin/stats.hpp"
#include "pspin/tap.hpp"

namespace pspin {

inline constexpr const char* artifact_version = "0.1.0";

// ---------------------------------------------------------------------------
// Experiment configuration: one canonical key-value schema with a JSON mirror.
// ---------------------------------------------------------------------------

struct EstimatorSettings {
    enum class Kind { Plain, Stratified };
    Kind kind = Kind::Plain;
    std::uint64_t samples = 0;     // plain-MC sample budget; 0 disables F-hat
    std::uint64_t n_per_slice = 200;
    int slices = 200;
    double epsilon0 = 0.1;         // spike threshold exponent
    int gse_restarts = 6;
};

struct ExperimentConfig {
    MixtureSpec model;             // layers + beta
    std::vector<int> sizes;        // N ladder
    int replicas = 5;
    EstimatorSettings estimator;
    std::vector<double> alphas;    // dichotomy sweep; empty = derived from p
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;    // force sequential execution
    std::string out_dir = "pspin-out";
    int tap_grid = 120;
    int k_max = 8;
    bool per_beta = false;         // report bulk values divided by beta

    void validate() const {
        model.validate();
        if (sizes.empty()) throw config_error("config needs at least one size N");
        for (int n : sizes)
            if (n < model.max_order()) throw config_error("every N must be >= the largest order");
        if (replicas < 1) throw config_error("replicas must be >= 1");
        if (threads < 1) throw config_error("threads must be >= 1");
        if (!(estimator.epsilon0 > 0.0)) throw config_error("epsilon0 must be > 0");
        if (estimator.slices < 1) throw config_error("slices must be >= 1");
        if (estimator.gse_restarts < 1) throw config_error("gse_restarts must be >= 1");
        if (tap_grid < 8) throw config_error("tap_grid must be >= 8");
        if (k_max < 0) throw config_error("k_max must be >= 0");
    }
};

namespace detail {

inline std::string layer_to_string(const LayerSpec& l) {
    std::ostringstream os;
    os << l.p << ":" << nlohmann::json(l.gamma).dump() << ":";
    if (l.tail.is_heavy())
        os << "heavy(" << nlohmann::json(l.tail.alpha).dump() << ")";
    else
        os << (l.tail.dist == TailLaw::Dist::Gaussian ? "gaussian" : "rademacher");
    return os.str();
}

inline LayerSpec layer_from_string(const std::string& s) {
    const std::size_t c1 = s.find(':');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : s.find(':', c1 + 1);
    if (c2 == std::string::npos)
        throw config_error("layer must look like p:gamma:tail, got: " + s);
    LayerSpec l;
    try {
        l.p = std::stoi(s.substr(0, c1));
        l.gamma = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
        throw config_error("bad layer numbers in: " + s);
    }
    std::string tail = s.substr(c2 + 1);
    if (tail == "gaussian") {
        l.tail = TailLaw::gaussian();
    } else if (tail == "rademacher") {
        l.tail = TailLaw::rademacher();
    } else if (tail.rfind("heavy(", 0) == 0 && tail.back() == ')') {
        try {
            l.tail = TailLaw::heavy(std::stod(tail.substr(6, tail.size() - 7)));
        } catch (const config_error&) {
            throw;
        } catch (const std::exception&) {
            throw config_error("bad tail index in: " + s);
        }
    } else {
        throw config_error("unknown tail law (want gaussian|rademacher|heavy(a)): " + tail);
    }
    return l;
}

} // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j; // plain json: keys serialize sorted, canonically
    j["model"]["beta"] = c.model.beta;
    j["model"]["layers"] = nlohmann::json::array();
    for (const auto& l : c.model.layers) {
        nlohmann::json lj;
        lj["p"] = l.p;
        lj["gamma"] = l.gamma;
        lj["tail"] = detail::tail_to_json(l.tail);
        j["model"]["layers"].push_back(lj);
    }
    j["sizes"] = c.sizes;
    j["replicas"] = c.replicas;
    j["estimator"]["kind"] =
        c.estimator.kind == EstimatorSettings::Kind::Plain ? "plain" : "stratified";
    j["estimator"]["samples"] = c.estimator.samples;
    j["estimator"]["n_per_slice"] = c.estimator.n_per_slice;
    j["estimator"]["slices"] = c.estimator.slices;
    j["estimator"]["epsilon0"] = c.estimator.epsilon0;
    j["estimator"]["gse_restarts"] = c.estimator.gse_restarts;
    j["alphas"] = c.alphas;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["deterministic"] = c.deterministic;
    j["out"] = c.out_dir;
    j["tap_grid"] = c.tap_grid;
    j["k_max"] = c.k_max;
    j["per_beta"] = c.per_beta;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.contains("beta")) c.model.beta = m.at("beta").get<double>();
            if (m.contains("layers")) {
                c.model.layers.clear();
                for (const auto& lj : m.at("layers")) {
                    if (lj.is_string()) {
                        c.model.layers.push_back(detail::layer_from_string(lj.get<std::string>()));
                    } else {
                        LayerSpec l;
                        l.p = lj.at("p").get<int>();
                        l.gamma = lj.at("gamma").get<double>();
                        l.tail = detail::tail_from_json(lj.at("tail"));
                        c.model.layers.push_back(l);
                    }
                }
            }
        }
        if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<int>>();
        if (j.contains("replicas")) c.replicas = j.at("replicas").get<int>();
        if (j.contains("estimator")) {
            const auto& e = j.at("estimator");
            if (e.contains("kind")) {
                const std::string k = e.at("kind").get<std::string>();
                if (k == "plain")
                    c.estimator.kind = EstimatorSettings::Kind::Plain;
                else if (k == "stratified")
                    c.estimator.kind = EstimatorSettings::Kind::Stratified;
                else
                    throw config_error("estimator.kind must be plain or stratified, got: " + k);
            }
            if (e.contains("samples")) c.estimator.samples = e.at("samples").get<std::uint64_t>();
            if (e.contains("n_per_slice"))
                c.estimator.n_per_slice = e.at("n_per_slice").get<std::uint64_t>();
            if (e.contains("slices")) c.estimator.slices = e.at("slices").get<int>();
            if (e.contains("epsilon0")) c.estimator.epsilon0 = e.at("epsilon0").get<double>();
            if (e.contains("gse_restarts"))
                c.estimator.gse_restarts = e.at("gse_restarts").get<int>();
        }
        if (j.contains("alphas")) c.alphas = j.at("alphas").get<std::vector<double>>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) c.threads = j.at("threads").get<int>();
        if (j.contains("deterministic")) c.deterministic = j.at("deterministic").get<bool>();
        if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
        if (j.contains("tap_grid")) c.tap_grid = j.at("tap_grid").get<int>();
        if (j.contains("k_max")) c.k_max = j.at("k_max").get<int>();
        if (j.contains("per_beta")) c.per_beta = j.at("per_beta").get<bool>();
    } catch (const config_error&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad config value: ") + e.what());
    }
    return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// One scalar of the key-value config grammar: quoted string, boolean, or
/// number (serialized into the JSON mirror's corresponding type).
inline nlohmann::json parse_config_scalar(const std::string& tok) {
    if (tok.empty()) throw config_error("empty value in config");
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"')
            throw config_error("unterminated string in config: " + tok);
        return tok.substr(1, tok.size() - 2);
    }
    if (tok == "true") return true;
    if (tok == "false") return false;
    try {
        if (tok.find_first_of(".eE") == std::string::npos) {
            if (tok.front() == '-') return std::stoll(tok);
            return static_cast<std::uint64_t>(std::stoull(tok));
        }
        return std::stod(tok);
    } catch (const std::exception&) {
        throw config_error("cannot parse config value: " + tok);
    }
}

/// Split the inside of a [...] list on top-level commas.
inline std::vector<std::string> split_list(const std::string& body) {
    std::vector<std::string> parts;
    std::string cur;
    bool in_str = false;
    for (char ch : body) {
        if (ch == '"') in_str = !in_str;
        if (ch == ',' && !in_str) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    const std::string last = trim(cur);
    if (!last.empty()) parts.push_back(last);
    return parts;
}

} // namespace detail

/// Parse the key-value config text: `key = value` lines, `#` comments,
/// dotted keys for nesting, `[a, b]` lists, quoted strings. The grammar is a
/// strict subset of TOML covering exactly the schema of config_to_json.
inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::object();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside strings
        std::string code;
        bool in_str = false;
        for (char ch : line) {
            if (ch == '"') in_str = !in_str;
            if (ch == '#' && !in_str) break;
            code += ch;
        }
        code = detail::trim(code);
        if (code.empty()) continue;
        const std::size_t eq = code.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + " is not key = value");
        const std::string key = detail::trim(code.substr(0, eq));
        const std::string val = detail::trim(code.substr(eq + 1));
        if (key.empty()) throw config_error("empty key on config line " + std::to_string(lineno));
        static const std::set<std::string> known = {
            "model.beta",      "model.layers",          "sizes",
            "replicas",        "estimator.kind",        "estimator.samples",
            "estimator.n_per_slice", "estimator.slices", "estimator.epsilon0",
            "estimator.gse_restarts", "alphas",          "seed",
            "threads",         "deterministic",         "out",
            "tap_grid",        "k_max",                 "per_beta"};
        if (!known.count(key))
            throw config_error("unknown config key '" + key + "' on line " +
                               std::to_string(lineno));

        nlohmann::json parsed;
        if (!val.empty() && val.front() == '[') {
            if (val.back() != ']')
                throw config_error("unterminated list on config line " + std::to_string(lineno));
            parsed = nlohmann::json::array();
            for (const auto& tok : detail::split_list(val.substr(1, val.size() - 2)))
                parsed.push_back(detail::parse_config_scalar(tok));
        } else {
            parsed = detail::parse_config_scalar(val);
        }

        // dotted keys nest
        nlohmann::json* node = &j;
        std::size_t start = 0;
        for (std::size_t dot = key.find('.'); dot != std::string::npos;
             start = dot + 1, dot = key.find('.', start))
            node = &(*node)[key.substr(start, dot - start)];
        (*node)[key.substr(start)] = parsed;
    }
    return config_from_json(j);
}

/// Load a config file; a leading '{' selects the JSON mirror, anything else
/// the key-value text format.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        if (ch == '{') {
            try {
                return config_from_json(nlohmann::json::parse(text));
            } catch (const nlohmann::json::exception& e) {
                throw config_error(std::string("bad JSON config: ") + e.what());
            }
        }
        break;
    }
    return parse_config_text(text);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Hash of the canonical (sorted-key) serialization of the config.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::uint64_t h = fnv1a64(config_to_json(c).dump());
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Run manifest and output writers.
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string config_hash;
    std::string version = artifact_version;
    std::string started;  // ISO-8601 UTC; manifest only, never in data files
    std::string finished;
    std::vector<std::uint64_t> replica_seeds;
    std::vector<std::string> outputs; // file names inside the output directory
};

namespace detail {

inline std::string iso_utc_now() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw config_error("cannot open output file: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw config_error("short write on output file: " + path);
}

inline std::string ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

/// Deterministic number formatting shared by CSV and JSONL: the shortest
/// round-trip decimal form. NaN renders empty in CSV.
inline std::string fmt_num(double x) {
    if (std::isnan(x)) return "";
    return nlohmann::json(x).dump();
}

/// One worker pool run over [0, n); sequential when threads <= 1. The first
/// worker exception is rethrown after all workers finish.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mu;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Replica seed chain: deterministic in (base, cell, replica), well spread.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t replica) {
    std::uint64_t s = base ^ (0x9E3779B97F4A7C15ull * (cell + 1));
    std::uint64_t h = splitmix64(s);
    h ^= 0xBF58476D1CE4E5B9ull * (replica + 1);
    return splitmix64(h);
}

} // namespace detail

inline RunManifest make_manifest(const ExperimentConfig& cfg) {
    RunManifest m;
    m.config_hash = config_hash(cfg);
    m.started = detail::iso_utc_now();
    return m;
}

inline void write_manifest(const std::string& dir, RunManifest& m) {
    m.finished = detail::iso_utc_now();
    nlohmann::ordered_json j;
    j["config_hash"] = m.config_hash;
    j["version"] = m.version;
    j["started"] = m.started;
    j["finished"] = m.finished;
    j["replica_seeds"] = m.replica_seeds;
    j["outputs"] = m.outputs;
    detail::write_file(dir + "/manifest.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Plot data emission: long-format CSV plus a minimal self-contained SVG.
// ---------------------------------------------------------------------------

struct PlotTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

inline std::string to_csv(const PlotTable& t) {
    std::ostringstream os;
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        os << (c ? "," : "") << t.columns[c];
    os << "\n";
    for (const auto& row : t.rows) {
        if (row.size() != t.columns.size())
            throw config_error("plot table row width does not match the header");
        for (std::size_t c = 0; c < row.size(); ++c)
            os << (c ? "," : "") << detail::fmt_num(row[c]);
        os << "\n";
    }
    return os.str();
}

/// Minimal SVG line plot: axes, series polylines from a fixed palette, and a
/// legend. No external assets.
inline std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel,
                                 const std::vector<PlotSeries>& series) {
    const int W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmin <= xmax)) { xmin = 0.0; xmax = 1.0; }
    if (!(ymin <= ymax)) { ymin = 0.0; ymax = 1.0; }
    if (xmax == xmin) { xmax += 1.0; xmin -= 1.0; }
    if (ymax == ymin) { ymax += 1.0; ymin -= 1.0; }
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
       << title << "</text>\n"
       << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\""
       << H - B << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n"
       << "<text x=\"16\" y=\"" << (T + H - B) / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double x = xmin + k * (xmax - xmin) / 4, y = ymin + k * (ymax - ymin) / 4;
        os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << detail::fmt_num(x)
           << "</text>\n"
           << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 3
           << "\" text-anchor=\"end\" font-size=\"10\">" << detail::fmt_num(y) << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[s].points) os << px(x) << "," << py(y) << " ";
        os << "\"/>\n"
           << "<text x=\"" << W - R - 6 << "\" y=\"" << T + 14 * (s + 1)
           << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">"
           << series[s].label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Write a long-format CSV and its companion SVG into the output directory,
/// recording both in the manifest.
inline void emit_plotdata(const std::string& dir, const std::string& stem, const PlotTable& table,
                          const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<PlotSeries>& series,
                          RunManifest& man) {
    detail::write_file(dir + "/" + stem + ".csv", to_csv(table));
    man.outputs.push_back(stem + ".csv");
    detail::write_file(dir + "/" + stem + ".svg", svg_line_plot(title, xlabel, ylabel, series));
    man.outputs.push_back(stem + ".svg");
}

// ---------------------------------------------------------------------------
// Harness runs.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json json_num(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

inline std::string regime_note(Regime r, int p) {
    switch (r) {
        case Regime::Subcritical:
            return "subcritical; compare to g_" + std::to_string(p) + "(Lambda)";
        case Regime::FiniteMoment:
            return "finite 2p-th moment; compare to Parisi";
        case Regime::CriticalHeavy:
        case Regime::CriticalLight:
            return "critical; compare to TAP formula";
    }
    return "?";
}

/// Everything measured and predicted for one disorder replica.
struct ReplicaResult {
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double gse = std::numeric_limits<double>::quiet_NaN();
    double fhat = std::numeric_limits<double>::quiet_NaN();
    double fhat_stderr = std::numeric_limits<double>::quiet_NaN();
    double pred_g = std::numeric_limits<double>::quiet_NaN();
    double pred_f = std::numeric_limits<double>::quiet_NaN();
    double pred_tap = std::numeric_limits<double>::quiet_NaN();
    double tap_qstar = std::numeric_limits<double>::quiet_NaN();
    std::string gse_method;
};

/// Run one replica of a (single heavy or light layer) model at size N:
/// generate disorder, measure Lambda and the ground state, optionally run the
/// requested free-energy estimator, and evaluate the per-replica predictions.
inline ReplicaResult run_replica(const ExperimentConfig& cfg, const MixtureSpec& spec, int N,
                                 std::uint64_t seed, double pred_parisi_known,
                                 const MixtureFunction& bulk_xi) {
    (void)pred_parisi_known;
    const std::vector<TailScales> scales = scales_for(spec, N);
    const std::vector<CouplingTensor> tensors = generate(spec, N, seed);
    const double beta = spec.beta;
    ReplicaResult r;

    std::vector<ExtremeStat> lambdas(spec.layers.size());
    bool any_heavy = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].tail.is_heavy()) {
            lambdas[i] = lambda_stat(tensors[i], scales[i]);
            any_heavy = true;
        }

    const bool pure_p2 = spec.layers.size() == 1 && spec.layers[0].p == 2;
    auto [spikes, bulks] = split_mixture(tensors, scales, cfg.estimator.epsilon0);
    (void)bulks;

    if (any_heavy) {
        // single-layer harness models: report the first heavy layer's Lambda
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
            if (spec.layers[i].tail.is_heavy()) {
                r.lambda = lambdas[i].lambda;
                const int p = spec.layers[i].p;
                const double w = scales[i].nim_weight();
                r.pred_g = g(p, std::abs(spec.layers[i].gamma) * w * r.lambda);
                r.pred_f = nim_value(p, beta * std::abs(spec.layers[i].gamma) * w * r.lambda);
                break;
            }
    }

    if (pure_p2) {
        r.gse = gse_eigen_p2(tensors[0], spec, scales[0]).value;
        r.gse_method = "eigen";
    } else {
        AscentConfig ac;
        ac.seed = seed;
        bool any_spike = false;
        for (const auto& s : spikes) any_spike |= !s.entries.empty();
        if (any_spike)
            ac.informed_starts.push_back(spike_start(spikes, spec, scales, N, 0.9));
        r.gse = gse_ascent(tensors, spec, scales, cfg.estimator.gse_restarts, ac).value;
        r.gse_method = "ascent";
    }

    if (cfg.estimator.samples > 0) {
        FreeEnergyEstimate fe;
        if (cfg.estimator.kind == EstimatorSettings::Kind::Stratified && any_heavy) {
            std::size_t hl = 0;
            for (std::size_t i = 0; i < spec.layers.size(); ++i)
                if (spec.layers[i].tail.is_heavy()) hl = i;
            int d = spikes[hl].p;
            if (!spikes[hl].entries.empty()) {
                std::size_t dom = 0;
                for (std::size_t e = 1; e < spikes[hl].entries.size(); ++e)
                    if (std::abs(spikes[hl].entries[e].weight) >
                        std::abs(spikes[hl].entries[dom].weight))
                        dom = e;
                d = static_cast<int>(
                    tuple_multiplicities(spikes[hl].entries[dom].tuple).size());
            }
            const std::vector<double> edges = stratified_grid(N, d, cfg.estimator.slices);
            fe = free_energy_stratified(tensors, spec, scales, beta, spikes[hl], edges,
                                        cfg.estimator.n_per_slice, seed);
        } else {
            fe = free_energy_plain(tensors, spec, scales, beta, cfg.estimator.samples, seed);
        }
        r.fhat = fe.value;
        r.fhat_stderr = fe.stderr_;
    }

    if (any_heavy) {
        ParisiOptions po;
        po.k_max = cfg.k_max;
        auto [qstar, obj] =
            tap_optimize(bulk_xi, spec, lambdas, scales, beta, po, cfg.tap_grid);
        r.pred_tap = obj.total;
        r.tap_qstar = qstar;
    }
    return r;
}

} // namespace detail

/// Universality dichotomy study: sweep alpha below / at / above 2p for the
/// first layer of the model over the N ladder, measuring (Lambda, GSE,
/// optional F-hat) per replica against the NIM, Parisi and TAP predictions.
/// Writes dichotomy.jsonl, dichotomy.csv, dichotomy_summary.json, a plot, and
/// the manifest into the output directory.
inline RunManifest run_dichotomy(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = detail::ensure_out_dir(cfg.out_dir);
    RunManifest man = make_manifest(cfg);

    const LayerSpec base_layer = cfg.model.layers.front();
    const int p = base_layer.p;
    std::vector<double> alphas = cfg.alphas;
    if (alphas.empty()) alphas = {0.75 * p, 2.0 * p, 3.0 * p};

    // Gaussian-universality prediction: the full nominal mixture, computed
    // once (it does not depend on alpha or N).
    std::vector<std::pair<int, double>> nominal;
    for (const auto& l : cfg.model.layers) nominal.emplace_back(l.p, l.gamma);
    ParisiOptions po;
    po.k_max = cfg.k_max;
    const double pred_parisi =
        parisi_solve(MixtureFunction::from_layers(nominal), cfg.model.beta, po).value;

    struct Cell {
        double alpha;
        int N;
        Regime regime;
        MixtureSpec spec;
        MixtureFunction bulk_xi;
    };
    std::vector<Cell> cells;
    for (double a : alphas)
        for (int N : cfg.sizes) {
            MixtureSpec spec = cfg.model;
            spec.layers[0].tail = TailLaw::heavy(a);
            const std::vector<TailScales> scales = scales_for(spec, N);
            cells.push_back(Cell{a, N, scales[0].regime, spec, bulk_mixture(spec, scales)});
        }

    const std::size_t R = static_cast<std::size_t>(cfg.replicas);
    std::vector<detail::ReplicaResult> results(cells.size() * R);
    std::vector<std::uint64_t> seeds(cells.size() * R);
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (std::size_t r = 0; r < R; ++r)
            seeds[c * R + r] = detail::derive_seed(cfg.seed, c, r);
    man.replica_seeds = seeds;

    const int threads = cfg.deterministic ? 1 : cfg.threads;
    detail::parallel_for(results.size(), threads, [&](std::size_t i) {
        const Cell& cell = cells[i / R];
        results[i] = detail::run_replica(cfg, cell.spec, cell.N, seeds[i], pred_parisi,
                                         cell.bulk_xi);
    });

    // JSONL: one record per (alpha, N, replica), fixed key order, no times.
    std::ostringstream jsonl;
    PlotTable table;
    table.columns = {"alpha", "p", "N", "replica", "lambda", "gse",
                     "fhat", "fhat_stderr", "pred_g", "pred_f", "pred_parisi", "pred_tap"};
    for (std::size_t i = 0; i < results.size(); ++i) {
        const Cell& cell = cells[i / R];
        const detail::ReplicaResult& r = results[i];
        nlohmann::ordered_json rec;
        rec["alpha"] = cell.alpha;
        rec["p"] = p;
        rec["N"] = cell.N;
        rec["replica"] = static_cast<std::uint64_t>(i % R);
        rec["regime"] = regime_name(cell.regime);
        rec["lambda"] = detail::json_num(r.lambda);
        rec["gse"] = detail::json_num(r.gse);
        rec["gse_method"] = r.gse_method;
        rec["fhat"] = detail::json_num(r.fhat);
        rec["fhat_stderr"] = detail::json_num(r.fhat_stderr);
        rec["pred_g"] = detail::json_num(r.pred_g);
        rec["pred_f"] = detail::json_num(r.pred_f);
        rec["pred_parisi"] = detail::json_num(pred_parisi);
        rec["pred_tap"] = detail::json_num(r.pred_tap);
        rec["tap_qstar"] = detail::json_num(r.tap_qstar);
        jsonl << rec.dump() << "\n";
        table.rows.push_back({cell.alpha, static_cast<double>(p), static_cast<double>(cell.N),
                              static_cast<double>(i % R), r.lambda, r.gse, r.fhat,
                              r.fhat_stderr, r.pred_g, r.pred_f, pred_parisi, r.pred_tap});
    }
    detail::write_file(dir + "/dichotomy.jsonl", jsonl.str());
    man.outputs.push_back("dichotomy.jsonl");

    // Summary: one entry per (alpha, N) cell with the regime note and the
    // mean deviations from each prediction.
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    std::vector<PlotSeries> series;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        std::vector<double> gse, pg, pt;
        double dev_g = 0.0, dev_parisi = 0.0, dev_tap = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
            const detail::ReplicaResult& res = results[c * R + r];
            gse.push_back(res.gse);
            if (std::isfinite(res.pred_g)) pg.push_back(res.pred_g);
            if (std::isfinite(res.pred_tap)) pt.push_back(res.pred_tap);
            dev_g += std::isfinite(res.pred_g) ? std::abs(res.gse - res.pred_g) : 0.0;
            dev_parisi += std::abs(res.gse - pred_parisi);
            dev_tap += std::isfinite(res.pred_tap) ? std::abs(res.gse - res.pred_tap) : 0.0;
        }
        nlohmann::ordered_json s;
        s["alpha"] = cell.alpha;
        s["N"] = cell.N;
        s["regime"] = regime_name(cell.regime);
        s["note"] = detail::regime_note(cell.regime, p);
        s["mean_gse"] = mean(gse);
        s["mean_abs_dev_vs_g"] = pg.empty() ? nlohmann::ordered_json(nullptr)
                                            : nlohmann::ordered_json(dev_g / R);
        s["mean_abs_dev_vs_parisi"] = dev_parisi / R;
        s["mean_abs_dev_vs_tap"] = pt.empty() ? nlohmann::ordered_json(nullptr)
                                              : nlohmann::ordered_json(dev_tap / R);
        if (gse.size() >= 2 && pg.size() == gse.size()) {
            bool varies = false;
            for (double v : pg) varies |= v != pg.front();
            if (varies) s["corr_gse_vs_g"] = pearson_corr(gse, pg);
        }
        summary.push_back(s);
    }
    for (double a : alphas) {
        PlotSeries ps;
        ps.label = "alpha=" + detail::fmt_num(a);
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (cells[c].alpha == a) {
                double m = 0.0;
                for (std::size_t r = 0; r < R; ++r) m += results[c * R + r].gse;
                ps.points.emplace_back(cells[c].N, m / R);
            }
        series.push_back(std::move(ps));
    }
    detail::write_file(dir + "/dichotomy_summary.json", summary.dump(2) + "\n");
    man.outputs.push_back("dichotomy_summary.json");
    emit_plotdata(dir, "dichotomy", table, "ground state energy vs N", "N", "GSE", series, man);
    write_manifest(dir, man);
    man.outputs.push_back("manifest.json");
    return man;
}

/// Extreme-statistic convergence study: KS distance between replicated
/// Lambda samples and the Frechet law per N. Writes frechet_samples.csv,
/// frechet.csv, a plot, and the manifest.
inline RunManifest run_frechet(const ExperimentConfig& cfg) {
    cfg.validate();
    std::size_t hl = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < cfg.model.layers.size(); ++i)
        if (cfg.model.layers[i].tail.is_heavy()) hl = i;
    if (hl == static_cast<std::size_t>(-1))
        throw config_error("frechet study needs a heavy-tailed layer");
    const LayerSpec layer = cfg.model.layers[hl];
    const double alpha = layer.tail.alpha;

    const std::string dir = detail::ensure_out_dir(cfg.out_dir);
    RunManifest man = make_manifest(cfg);
    const std::size_t R = static_cast<std::size_t>(cfg.replicas);

    PlotTable samples;
    samples.columns = {"N", "replica", "lambda"};
    PlotTable ks_table;
    ks_table.columns = {"N", "ks"};
    PlotSeries ks_series;
    ks_series.label = "alpha=" + detail::fmt_num(alpha);

    const int threads = cfg.deterministic ? 1 : cfg.threads;
    for (std::size_t ni = 0; ni < cfg.sizes.size(); ++ni) {
        const int N = cfg.sizes[ni];
        const TailScales scales = quantile_scale(layer.tail, N, layer.p);
        std::vector<double> lambdas(R);
        std::vector<std::uint64_t> seeds(R);
        for (std::size_t r = 0; r < R; ++r) seeds[r] = detail::derive_seed(cfg.seed, ni, r);
        man.replica_seeds.insert(man.replica_seeds.end(), seeds.begin(), seeds.end());
        detail::parallel_for(R, threads, [&](std::size_t r) {
            const CouplingTensor J = generate_couplings(layer.tail, N, layer.p, seeds[r]);
            lambdas[r] = lambda_stat(J, scales).lambda;
        });
        for (std::size_t r = 0; r < R; ++r)
            samples.rows.push_back({static_cast<double>(N), static_cast<double>(r), lambdas[r]});
        const double ks = ks_statistic(lambdas, [&](double u) { return frechet_cdf(u, alpha); });
        ks_table.rows.push_back({static_cast<double>(N), ks});
        ks_series.points.emplace_back(N, ks);
    }
    detail::write_file(dir + "/frechet_samples.csv", to_csv(samples));
    man.outputs.push_back("frechet_samples.csv");
    emit_plotdata(dir, "frechet", ks_table, "KS distance to the Frechet law", "N", "KS",
                  {ks_series}, man);
    write_manifest(dir, man);
    man.outputs.push_back("manifest.json");
    return man;
}

/// Per-replica measurement run at a single size (the first entry of sizes):
/// Lambda, F-hat with the configured estimator, GSE, and the NIM predictions.
/// Writes simulate.jsonl and the manifest.
inline RunManifest run_simulate(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = detail::ensure_out_dir(cfg.out_dir);
    RunManifest man = make_manifest(cfg);
    const int N = cfg.sizes.front();
    const std::size_t R = static_cast<std::size_t>(cfg.replicas);

    ExperimentConfig run_cfg = cfg;
    if (run_cfg.estimator.samples == 0) run_cfg.estimator.samples = 10000;

    const std::vector<TailScales> scales = scales_for(cfg.model, N);
    const MixtureFunction bulk_xi = bulk_mixture(cfg.model, scales);
    std::vector<detail::ReplicaResult> results(R);
    std::vector<std::uint64_t> seeds(R);
    for (std::size_t r = 0; r < R; ++r) seeds[r] = detail::derive_seed(cfg.seed, 0, r);
    man.replica_seeds = seeds;
    const int threads = cfg.deterministic ? 1 : cfg.threads;
    detail::parallel_for(R, threads, [&](std::size_t r) {
        results[r] = detail::run_replica(run_cfg, cfg.model, N, seeds[r], 0.0, bulk_xi);
    });

    std::ostringstream jsonl;
    for (std::size_t r = 0; r < R; ++r) {
        const detail::ReplicaResult& res = results[r];
        nlohmann::ordered_json rec;
        rec["replica"] = static_cast<std::uint64_t>(r);
        rec["N"] = N;
        rec["lambda"] = detail::json_num(res.lambda);
        rec["fhat"] = detail::json_num(res.fhat);
        rec["fhat_stderr"] = detail::json_num(res.fhat_stderr);
        rec["gse"] = detail::json_num(res.gse);
        rec["gse_method"] = res.gse_method;
        rec["pred_f"] = detail::json_num(res.pred_f);
        rec["pred_g"] = detail::json_num(res.pred_g);
        jsonl << rec.dump() << "\n";
    }
    detail::write_file(dir + "/simulate.jsonl", jsonl.str());
    man.outputs.push_back("simulate.jsonl");
    write_manifest(dir, man);
    man.outputs.push_back("manifest.json");
    return man;
}

/// Spike/bulk decomposition diagnostics per replica: threshold, spike counts
/// and flags, and bulk moment comparisons. Writes split_report.jsonl and the
/// manifest.
inline RunManifest run_split_report(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string dir = detail::ensure_out_dir(cfg.out_dir);
    RunManifest man = make_manifest(cfg);
    const int N = cfg.sizes.front();
    const std::size_t R = static_cast<std::size_t>(cfg.replicas);
    const std::vector<TailScales> scales = scales_for(cfg.model, N);

    std::vector<std::uint64_t> seeds(R);
    for (std::size_t r = 0; r < R; ++r) seeds[r] = detail::derive_seed(cfg.seed, 0, r);
    man.replica_seeds = seeds;

    std::vector<nlohmann::ordered_json> records(R);
    const int threads = cfg.deterministic ? 1 : cfg.threads;
    detail::parallel_for(R, threads, [&](std::size_t r) {
        const std::vector<CouplingTensor> tensors = generate(cfg.model, N, seeds[r]);
        auto [spikes, bulks] = split_mixture(tensors, scales, cfg.estimator.epsilon0);
        const BulkDiagnostics bd = bulk_moment_report(bulks, scales);
        nlohmann::ordered_json rec;
        rec["replica"] = static_cast<std::uint64_t>(r);
        rec["N"] = N;
        rec["epsilon0"] = cfg.estimator.epsilon0;
        rec["layers"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < spikes.size(); ++i) {
            const SpikeReport rep = spike_diagnostics(spikes[i], N);
            nlohmann::ordered_json lj;
            lj["p"] = spikes[i].p;
            lj["threshold"] = detail::json_num(spikes[i].threshold);
            lj["spike_count"] = static_cast<std::uint64_t>(rep.count);
            lj["support_size"] = static_cast<std::uint64_t>(rep.support_size);
            lj["scale_n_2eps"] = rep.scale;
            lj["count_within_scale"] = rep.count_within_scale;
            lj["has_repeats"] = rep.has_repeats;
            lj["has_intersections"] = rep.has_intersections;
            // spin indices are reported 1-based
            nlohmann::ordered_json sup = nlohmann::ordered_json::array();
            for (std::size_t k = 0; k < spikes[i].support.size() && k < 64; ++k)
                sup.push_back(spikes[i].support[k] + 1);
            lj["support"] = sup;
            lj["support_truncated"] = spikes[i].support.size() > 64;
            lj["bulk_max_abs"] = detail::json_num(bd.layers[i].max_abs);
            lj["bulk_moment_2p"] = detail::json_num(bd.layers[i].moment_2p);
            lj["bulk_moment_2"] = detail::json_num(bd.layers[i].moment_2);
            lj["bulk_max_over_sqrt_n"] = detail::json_num(bd.layers[i].max_over_sqrt_n);
            lj["c_inv_sq"] = detail::json_num(bd.layers[i].c_inv_sq);
            rec["layers"].push_back(lj);
        }
        records[r] = std::move(rec);
    });

    std::ostringstream jsonl;
    for (const auto& rec : records) jsonl << rec.dump() << "\n";
    detail::write_file(dir + "/split_report.jsonl", jsonl.str());
    man.outputs.push_back("split_report.jsonl");
    write_manifest(dir, man);
    man.outputs.push_back("manifest.json");
    return man;
}

} // namespace pspin
