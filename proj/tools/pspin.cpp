// Command-line front end: curve calculators (nim-curve, parisi-solve,
// tap-curve) and seeded experiment harnesses (simulate, split-report,
// frechet, dichotomy). Exit codes: 0 success, 2 configuration error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <pspin/pspin.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using pspin::config_error;

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot read back output file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

template <typename T>
void set_if(const CLI::Option* opt, T& dst, const T& src) {
    if (opt != nullptr && opt->count() > 0) dst = src;
}

/// Shared --seed/--threads/--deterministic/--out flags; each subcommand
/// reaches them through fallthrough.
struct GlobalFlags {
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;
    std::string out = "pspin-out";
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
    CLI::Option* det_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    void apply(pspin::ExperimentConfig& cfg) const {
        set_if(seed_opt, cfg.seed, seed);
        set_if(threads_opt, cfg.threads, threads);
        set_if(det_opt, cfg.deterministic, deterministic);
        set_if(out_opt, cfg.out_dir, out);
    }
};

/// Single-layer model flags shared by the harness subcommands; --layer
/// strings take precedence and allow mixtures.
struct ModelFlags {
    int p = 2;
    double alpha = 1.5;
    double gamma = 1.0;
    double beta = 1.0;
    std::string tail = "heavy";
    std::vector<std::string> layers;
    CLI::Option* p_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* gamma_opt = nullptr;
    CLI::Option* beta_opt = nullptr;
    CLI::Option* tail_opt = nullptr;
    CLI::Option* layer_opt = nullptr;

    void add(CLI::App* sub, bool with_beta = true) {
        p_opt = sub->add_option("--p", p, "interaction order of the single-layer model");
        alpha_opt = sub->add_option("--alpha", alpha, "tail index of the heavy-tailed law");
        gamma_opt = sub->add_option("--gamma", gamma, "layer coupling strength");
        if (with_beta) beta_opt = sub->add_option("--beta", beta, "inverse temperature");
        tail_opt = sub->add_option("--tail", tail, "tail law: heavy, gaussian or rademacher")
                       ->check(CLI::IsMember({"heavy", "gaussian", "rademacher"}));
        layer_opt = sub->add_option("--layer", layers,
                                    "mixture layer p:gamma:tail (repeatable; overrides "
                                    "--p/--alpha/--gamma/--tail)");
    }

    pspin::TailLaw tail_law() const {
        if (tail == "gaussian") return pspin::TailLaw::gaussian();
        if (tail == "rademacher") return pspin::TailLaw::rademacher();
        return pspin::TailLaw::heavy(alpha);
    }

    bool any_layer_flag() const {
        return (p_opt && p_opt->count()) || (alpha_opt && alpha_opt->count()) ||
               (gamma_opt && gamma_opt->count()) || (tail_opt && tail_opt->count());
    }

    void apply(pspin::ExperimentConfig& cfg) const {
        if (layer_opt && layer_opt->count() > 0) {
            cfg.model.layers.clear();
            for (const auto& s : layers)
                cfg.model.layers.push_back(pspin::detail::layer_from_string(s));
        } else if (cfg.model.layers.empty() || any_layer_flag()) {
            pspin::LayerSpec l;
            l.p = p;
            l.gamma = gamma;
            l.tail = tail_law();
            cfg.model.layers = {l};
        }
        if (beta_opt) set_if(beta_opt, cfg.model.beta, beta);
    }
};

pspin::ExperimentConfig base_config(const std::string& config_path,
                                    const GlobalFlags& globals) {
    pspin::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = pspin::load_config(config_path);
    globals.apply(cfg);
    return cfg;
}

void print_outputs(const pspin::ExperimentConfig& cfg, const pspin::RunManifest& man) {
    for (const auto& f : man.outputs) std::cout << "wrote " << cfg.out_dir << "/" << f << "\n";
}

/// "p:coeff,p:coeff" -> mixture function with those t^p coefficients.
pspin::MixtureFunction xi_from_string(const std::string& s) {
    std::vector<double> coeffs(1, 0.0);
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const std::size_t colon = tok.find(':');
        if (colon == std::string::npos)
            throw config_error("mixture term must look like p:coeff, got: " + tok);
        int p = 0;
        double c = 0.0;
        try {
            p = std::stoi(tok.substr(0, colon));
            c = std::stod(tok.substr(colon + 1));
        } catch (const std::exception&) {
            throw config_error("bad mixture term: " + tok);
        }
        if (p < 1 || p > 64) throw config_error("mixture degree must be in [1, 64]");
        if (coeffs.size() < static_cast<std::size_t>(p) + 1)
            coeffs.resize(static_cast<std::size_t>(p) + 1, 0.0);
        coeffs[static_cast<std::size_t>(p)] += c;
    }
    return pspin::MixtureFunction(coeffs);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spherical mixed p-spin models with heavy-tailed disorder"};
    app.require_subcommand(1);

    GlobalFlags globals;
    globals.seed_opt =
        app.add_option("--seed", globals.seed, "base seed for all randomness")
            ->capture_default_str();
    globals.threads_opt =
        app.add_option("--threads", globals.threads, "worker threads for replica runs")
            ->capture_default_str();
    globals.det_opt = app.add_flag("--deterministic", globals.deterministic,
                                   "force sequential, reproducible execution");
    globals.out_opt =
        app.add_option("--out", globals.out, "output directory")->capture_default_str();

    // ---- nim-curve ---------------------------------------------------------
    auto* nim = app.add_subcommand(
        "nim-curve", "monomial free energy f_p and ground-state curve g_p over h");
    nim->fallthrough();
    int nim_p = 2;
    double h_min = 0.01, h_max = 100.0;
    int nim_points = 50;
    bool nim_linear = false;
    nim->add_option("--p", nim_p, "interaction order")->capture_default_str();
    nim->add_option("--h-min", h_min, "smallest field value")->capture_default_str();
    nim->add_option("--h-max", h_max, "largest field value")->capture_default_str();
    nim->add_option("--points", nim_points, "number of curve points")->capture_default_str();
    nim->add_flag("--linear", nim_linear, "linear instead of logarithmic spacing");
    nim->callback([&] {
        if (nim_points < 1) throw config_error("--points must be >= 1");
        if (!(h_min >= 0.0) || !(h_max >= h_min))
            throw config_error("need 0 <= h-min <= h-max");
        const bool log_spacing = !nim_linear && h_min > 0.0;
        std::ostringstream csv;
        csv << "h,f,qstar,g\n";
        for (int i = 0; i < nim_points; ++i) {
            const double t = nim_points == 1 ? 0.0 : static_cast<double>(i) / (nim_points - 1);
            const double h =
                log_spacing ? h_min * std::pow(h_max / h_min, t) : h_min + t * (h_max - h_min);
            const pspin::MonomialValue v = pspin::f_closed(nim_p, h);
            csv << pspin::detail::fmt_num(h) << "," << pspin::detail::fmt_num(v.value) << ","
                << pspin::detail::fmt_num(v.qstar) << ","
                << pspin::detail::fmt_num(pspin::g(nim_p, h)) << "\n";
        }
        std::cout << csv.str();
        if (globals.out_opt->count() > 0) {
            pspin::detail::ensure_out_dir(globals.out);
            pspin::detail::write_file(globals.out + "/nim_curve.csv", csv.str());
        }
    });

    // ---- parisi-solve ------------------------------------------------------
    auto* ps = app.add_subcommand("parisi-solve",
                                  "minimize the spherical variational functional for a mixture");
    ps->fallthrough();
    std::string ps_xi = "2:1";
    double ps_beta = 1.0;
    int ps_k = 8;
    bool ps_per_beta = false;
    ps->add_option("--xi", ps_xi, "mixture as p:coeff terms, e.g. 2:1,4:0.5")
        ->capture_default_str();
    ps->add_option("--beta", ps_beta, "inverse temperature")->capture_default_str();
    ps->add_option("--k", ps_k, "largest number of replica symmetry breaking steps")
        ->capture_default_str();
    ps->add_flag("--per-beta", ps_per_beta, "report the value divided by beta");
    ps->callback([&] {
        const pspin::MixtureFunction xi = xi_from_string(ps_xi);
        pspin::ParisiOptions po;
        po.k_max = ps_k;
        const pspin::ParisiResult res = pspin::parisi_solve(xi, ps_beta, po);
        double value = res.value;
        if (ps_per_beta) {
            if (!(ps_beta > 0.0)) throw config_error("--per-beta needs beta > 0");
            value /= ps_beta;
        }
        nlohmann::ordered_json j;
        j["value"] = value;
        j["normalization"] = ps_per_beta ? "per-beta" : "standard";
        j["converged"] = res.converged;
        j["levels"] = static_cast<std::uint64_t>(res.x.levels());
        j["breaks"] = res.x.breaks;
        j["values"] = res.x.values;
        j["per_k"] = res.per_k;
        std::cout << j.dump(2) << "\n";
        if (globals.out_opt->count() > 0) {
            pspin::detail::ensure_out_dir(globals.out);
            pspin::detail::write_file(globals.out + "/parisi_solve.json", j.dump(2) + "\n");
        }
    });

    // ---- tap-curve ---------------------------------------------------------
    auto* tc = app.add_subcommand(
        "tap-curve", "critical variational objective over the overlap q, with its maximizer");
    tc->fallthrough();
    ModelFlags tc_model;
    tc_model.add(tc);
    int tc_N = 200;
    int tc_points = 120;
    std::vector<double> tc_lambdas;
    bool tc_per_beta = false;
    tc->add_option("--N", tc_N, "system size used for the normalization scales")
        ->capture_default_str();
    tc->add_option("--points", tc_points, "overlap grid size")->capture_default_str();
    tc->add_option("--lambda", tc_lambdas,
                   "extreme statistics for the heavy layers in order (measured from a "
                   "seeded draw when omitted)")
        ->delimiter(',');
    tc->add_flag("--per-beta", tc_per_beta, "report values divided by beta");
    tc->callback([&] {
        pspin::ExperimentConfig cfg;
        globals.apply(cfg);
        tc_model.apply(cfg);
        cfg.sizes = {tc_N};
        cfg.validate();
        const pspin::MixtureSpec& spec = cfg.model;
        const std::vector<pspin::TailScales> scales = pspin::scales_for(spec, tc_N);

        std::vector<pspin::ExtremeStat> lambdas(spec.layers.size());
        std::size_t heavy_count = 0;
        for (const auto& l : spec.layers) heavy_count += l.tail.is_heavy() ? 1 : 0;
        if (!tc_lambdas.empty()) {
            if (tc_lambdas.size() != heavy_count)
                throw config_error("--lambda needs one value per heavy layer");
            std::size_t k = 0;
            for (std::size_t i = 0; i < spec.layers.size(); ++i)
                if (spec.layers[i].tail.is_heavy()) {
                    lambdas[i].lambda = tc_lambdas[k++];
                    lambdas[i].alpha = spec.layers[i].tail.alpha;
                    if (!(lambdas[i].lambda >= 0.0))
                        throw config_error("--lambda values must be >= 0");
                }
        } else {
            const auto tensors = pspin::generate(spec, tc_N, cfg.seed);
            for (std::size_t i = 0; i < spec.layers.size(); ++i)
                if (spec.layers[i].tail.is_heavy())
                    lambdas[i] = pspin::lambda_stat(tensors[i], scales[i]);
        }

        const pspin::MixtureFunction xi = pspin::bulk_mixture(spec, scales);
        pspin::ParisiOptions po;
        po.k_max = cfg.k_max;
        const double beta = spec.beta;
        const double scale = tc_per_beta ? 1.0 / beta : 1.0;
        if (tc_per_beta && !(beta > 0.0)) throw config_error("--per-beta needs beta > 0");

        std::ostringstream csv;
        csv << "q,entropy,bulk,spike,total\n";
        for (double q : pspin::detail::tap_grid(tc_points)) {
            const pspin::TapObjective o =
                pspin::tap_value(xi, spec, lambdas, scales, beta, q, po);
            csv << pspin::detail::fmt_num(q) << "," << pspin::detail::fmt_num(o.entropy * scale)
                << "," << pspin::detail::fmt_num(o.bulk * scale) << ","
                << pspin::detail::fmt_num(o.spike * scale) << ","
                << pspin::detail::fmt_num(o.total * scale) << "\n";
        }
        auto [qstar, best] = pspin::tap_optimize(xi, spec, lambdas, scales, beta, po, tc_points);

        nlohmann::ordered_json j;
        j["qstar"] = qstar;
        j["value"] = best.total * scale;
        j["entropy"] = best.entropy * scale;
        j["bulk"] = best.bulk * scale;
        j["spike"] = best.spike * scale;
        j["normalization"] = tc_per_beta ? "per-beta" : "standard";
        nlohmann::ordered_json lj = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
            if (spec.layers[i].tail.is_heavy()) lj.push_back(lambdas[i].lambda);
        j["lambda"] = lj;
        nlohmann::ordered_json rj = nlohmann::ordered_json::array();
        for (const auto& s : scales) rj.push_back(pspin::regime_name(s.regime));
        j["regimes"] = rj;

        pspin::detail::ensure_out_dir(cfg.out_dir);
        pspin::detail::write_file(cfg.out_dir + "/tap_curve.csv", csv.str());
        pspin::detail::write_file(cfg.out_dir + "/tap_curve.json", j.dump(2) + "\n");
        std::cout << j.dump(2) << "\n";
        std::cout << "wrote " << cfg.out_dir << "/tap_curve.csv\n";
        std::cout << "wrote " << cfg.out_dir << "/tap_curve.json\n";
    });

    // ---- simulate ----------------------------------------------------------
    auto* sim = app.add_subcommand(
        "simulate", "finite-N replicas: extreme statistic, free energy and ground state");
    sim->fallthrough();
    ModelFlags sim_model;
    sim_model.add(sim);
    std::string sim_config;
    int sim_N = 100;
    int sim_replicas = 5;
    std::uint64_t sim_samples = 10000;
    std::string sim_estimator = "plain";
    std::uint64_t sim_nps = 200;
    int sim_slices = 200;
    double sim_eps0 = 0.1;
    sim->add_option("--config", sim_config, "config file (key=value text or JSON)");
    auto* sim_n_opt = sim->add_option("--N", sim_N, "system size")->capture_default_str();
    auto* sim_r_opt =
        sim->add_option("--replicas", sim_replicas, "disorder replicas")->capture_default_str();
    auto* sim_s_opt =
        sim->add_option("--samples", sim_samples, "Monte Carlo samples")->capture_default_str();
    auto* sim_e_opt = sim->add_option("--estimator", sim_estimator, "plain or stratified")
                          ->check(CLI::IsMember({"plain", "stratified"}));
    auto* sim_nps_opt = sim->add_option("--n-per-slice", sim_nps,
                                        "stratified samples per overlap slice");
    auto* sim_sl_opt = sim->add_option("--slices", sim_slices, "stratified overlap slices");
    auto* sim_eps_opt = sim->add_option("--epsilon0", sim_eps0, "spike threshold exponent");
    sim->callback([&] {
        pspin::ExperimentConfig cfg = base_config(sim_config, globals);
        sim_model.apply(cfg);
        if (sim_n_opt->count() || cfg.sizes.empty()) cfg.sizes = {sim_N};
        set_if(sim_r_opt, cfg.replicas, sim_replicas);
        set_if(sim_s_opt, cfg.estimator.samples, sim_samples);
        if (sim_e_opt->count())
            cfg.estimator.kind = sim_estimator == "stratified"
                                     ? pspin::EstimatorSettings::Kind::Stratified
                                     : pspin::EstimatorSettings::Kind::Plain;
        set_if(sim_nps_opt, cfg.estimator.n_per_slice, sim_nps);
        set_if(sim_sl_opt, cfg.estimator.slices, sim_slices);
        set_if(sim_eps_opt, cfg.estimator.epsilon0, sim_eps0);
        const pspin::RunManifest man = pspin::run_simulate(cfg);
        std::cout << read_text(cfg.out_dir + "/simulate.jsonl");
        print_outputs(cfg, man);
    });

    // ---- split-report ------------------------------------------------------
    auto* sr = app.add_subcommand("split-report",
                                  "spike/bulk decomposition diagnostics per replica");
    sr->fallthrough();
    ModelFlags sr_model;
    sr_model.add(sr, /*with_beta=*/false);
    std::string sr_config;
    int sr_N = 200;
    int sr_replicas = 5;
    double sr_eps0 = 0.1;
    sr->add_option("--config", sr_config, "config file (key=value text or JSON)");
    auto* sr_n_opt = sr->add_option("--N", sr_N, "system size")->capture_default_str();
    auto* sr_r_opt =
        sr->add_option("--replicas", sr_replicas, "disorder replicas")->capture_default_str();
    auto* sr_eps_opt = sr->add_option("--epsilon0", sr_eps0, "spike threshold exponent")
                           ->capture_default_str();
    sr->callback([&] {
        pspin::ExperimentConfig cfg = base_config(sr_config, globals);
        sr_model.apply(cfg);
        if (sr_n_opt->count() || cfg.sizes.empty()) cfg.sizes = {sr_N};
        set_if(sr_r_opt, cfg.replicas, sr_replicas);
        set_if(sr_eps_opt, cfg.estimator.epsilon0, sr_eps0);
        const pspin::RunManifest man = pspin::run_split_report(cfg);
        std::cout << read_text(cfg.out_dir + "/split_report.jsonl");
        print_outputs(cfg, man);
    });

    // ---- frechet -----------------------------------------------------------
    auto* fr = app.add_subcommand(
        "frechet", "convergence of the extreme statistic to its limiting law");
    fr->fallthrough();
    ModelFlags fr_model;
    fr_model.add(fr, /*with_beta=*/false);
    std::string fr_config;
    std::vector<int> fr_sizes = {50, 100, 200};
    int fr_replicas = 200;
    fr->add_option("--config", fr_config, "config file (key=value text or JSON)");
    auto* fr_sz_opt = fr->add_option("--sizes", fr_sizes, "system sizes, comma separated")
                          ->delimiter(',')
                          ->capture_default_str();
    auto* fr_r_opt = fr->add_option("--replicas", fr_replicas, "samples of the statistic per size")
                         ->capture_default_str();
    fr->callback([&] {
        pspin::ExperimentConfig cfg = base_config(fr_config, globals);
        fr_model.apply(cfg);
        if (fr_sz_opt->count() || cfg.sizes.empty()) cfg.sizes = fr_sizes;
        set_if(fr_r_opt, cfg.replicas, fr_replicas);
        const pspin::RunManifest man = pspin::run_frechet(cfg);
        std::cout << read_text(cfg.out_dir + "/frechet.csv");
        print_outputs(cfg, man);
    });

    // ---- dichotomy ---------------------------------------------------------
    auto* di = app.add_subcommand(
        "dichotomy", "sweep the tail index across the universality threshold");
    di->fallthrough();
    ModelFlags di_model;
    di_model.add(di);
    std::string di_config;
    std::vector<double> di_alphas;
    std::vector<int> di_sizes = {32, 64};
    int di_replicas = 3;
    std::uint64_t di_samples = 0;
    std::string di_estimator = "plain";
    int di_tap_grid = 120;
    di->add_option("--config", di_config, "config file (key=value text or JSON)");
    auto* di_a_opt = di->add_option("--alphas", di_alphas,
                                    "tail indices to sweep (default: below, at and above 2p)")
                         ->delimiter(',');
    auto* di_sz_opt = di->add_option("--sizes", di_sizes, "system sizes, comma separated")
                          ->delimiter(',')
                          ->capture_default_str();
    auto* di_r_opt =
        di->add_option("--replicas", di_replicas, "disorder replicas per cell")
            ->capture_default_str();
    auto* di_s_opt = di->add_option("--samples", di_samples,
                                    "Monte Carlo samples for the free energy (0 = skip)")
                         ->capture_default_str();
    auto* di_e_opt = di->add_option("--estimator", di_estimator, "plain or stratified")
                         ->check(CLI::IsMember({"plain", "stratified"}));
    auto* di_tg_opt = di->add_option("--tap-grid", di_tap_grid,
                                     "overlap grid size for the critical prediction")
                          ->capture_default_str();
    di->callback([&] {
        pspin::ExperimentConfig cfg = base_config(di_config, globals);
        di_model.apply(cfg);
        if (di_sz_opt->count() || cfg.sizes.empty()) cfg.sizes = di_sizes;
        set_if(di_a_opt, cfg.alphas, di_alphas);
        set_if(di_r_opt, cfg.replicas, di_replicas);
        set_if(di_s_opt, cfg.estimator.samples, di_samples);
        if (di_e_opt->count())
            cfg.estimator.kind = di_estimator == "stratified"
                                     ? pspin::EstimatorSettings::Kind::Stratified
                                     : pspin::EstimatorSettings::Kind::Plain;
        set_if(di_tg_opt, cfg.tap_grid, di_tap_grid);
        const pspin::RunManifest man = pspin::run_dichotomy(cfg);
        std::cout << read_text(cfg.out_dir + "/dichotomy_summary.json");
        print_outputs(cfg, man);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad usage is a configuration error
    } catch (const pspin::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const pspin::numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
