#include <CLI11.hpp>

#include <iostream>

#include "runner.hpp"

using namespace mrfsel;
using namespace mrfsel::cli;

namespace {

struct PenaltyOptions {
    std::optional<double> lambda1, lambda2, alpha;
    bool relative = false;

    void add(CLI::App* app) {
        app->add_option("--lambda1", lambda1, "l1 weight on the 1/n loss scale (default sqrt(log p / n))");
        auto* l2 = app->add_option("--lambda2", lambda2, "l2 weight on the 1/n loss scale (default 0)");
        app->add_option("--alpha", alpha, "lambda1 / (lambda1 + lambda2)")->excludes(l2);
        app->add_flag("--lambda2-relative", relative, "multiply --lambda2 by sqrt(log p / n)");
    }

    PenaltySpec resolve(int p, int n) const {
        const double base = default_lambda1(p, n);
        const double l1 = lambda1.value_or(base);
        if (alpha) return PenaltySpec::from_alpha(l1, *alpha);
        const double l2 = lambda2.value_or(0.0);
        return {l1, relative ? l2 * base : l2};
    }
};

SampleMatrix load_samples(const std::string& path, const std::string& kind, int k) {
    std::istringstream in(read_file(path));
    std::optional<SampleKind> sk;
    if (kind == "real") sk = SampleKind::real;
    if (kind == "ising") sk = SampleKind::ising;
    if (kind == "potts") sk = SampleKind::potts;
    return read_samples(in, sk, k);
}

Graph load_graph(const std::string& path) {
    std::istringstream in(read_file(path));
    return read_graph(in);
}

template <class T>
void override_if(const CLI::App* app, const char* flag, T& target, const T& value) {
    if (app->count(flag)) target = value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graphical model structure recovery by penalized neighborhood regression"};
    app.require_subcommand(1);

    // ---- run
    auto* run = app.add_subcommand("run", "Run a full experiment sweep from a config file");
    std::string config_path;
    RunOptions run_opts;
    std::uint64_t run_seed = 0;
    std::string run_out;
    std::size_t run_workers = 0;
    run->add_option("config", config_path, "experiment config (INI)")->required();
    run->add_option("--seed", run_seed, "override the config master seed");
    run->add_option("--out", run_out, "artifact directory (overrides [output] directory)");
    run->add_option("--workers", run_workers, "parallel jobs (overrides the config)")->check(CLI::PositiveNumber);

    // ---- gen-graph
    auto* gen = app.add_subcommand("gen-graph", "Generate a graph file");
    std::string gen_config, gen_out;
    std::uint64_t gen_seed = 0;
    GraphSpec gs;
    gen->add_option("--config", gen_config, "take the [graph] section and seed from a config");
    gen->add_option("--family", gs.family, "star | densified_star | community | bounded_degree")
        ->check(CLI::IsMember({"star", "densified_star", "community", "bounded_degree"}));
    gen->add_option("--a", gs.a, "star: clique size");
    gen->add_option("--b", gs.b, "star: leaves per center");
    gen->add_option("--target-rho", gs.target_rho, "densified_star: target edge density");
    gen->add_option("--groups", gs.groups, "community: number of groups");
    gen->add_option("--group-size", gs.group_size, "community: vertices per group");
    gen->add_option("--beta-in", gs.beta_in, "community: within-group edge probability");
    gen->add_option("--beta-out", gs.beta_out, "community: cross-group edge probability");
    gen->add_option("--p", gs.p, "bounded_degree: vertex count");
    gen->add_option("--d-max", gs.d_max, "bounded_degree: maximum degree");
    gen->add_option("--m", gs.m, "bounded_degree: edge count");
    gen->add_flag("--connected", gs.require_connected, "reject disconnected draws");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--out", gen_out, "graph file to write")->required();

    // ---- sample
    auto* sample = app.add_subcommand("sample", "Build a model on a graph and draw samples");
    std::string smp_config, smp_graph, smp_model, smp_model_out, smp_out, smp_sampler = "gibbs", smp_law = "constant";
    std::uint64_t smp_seed = 0;
    int smp_n = 0, smp_trial = 0;
    ModelSpec ms;
    double smp_coupling = 0.25, smp_low = 0.1, smp_high = 0.3;
    ChainConfig chain;
    sample->add_option("--config", smp_config, "take [model], [sampling] and the seed from a config");
    sample->add_option("--graph", smp_graph, "graph file")->required()->check(CLI::ExistingFile);
    sample->add_option("--model", smp_model, "model file (instead of building one)")->check(CLI::ExistingFile);
    sample->add_option("--kind", ms.kind, "gmrf | ising | potts")->check(CLI::IsMember({"gmrf", "ising", "potts"}));
    sample->add_option("--coupling", smp_coupling, "coupling value (gmrf off-diagonal, constant or rademacher law)");
    sample->add_option("--law", smp_law, "constant | uniform | rademacher")
        ->check(CLI::IsMember({"constant", "uniform", "rademacher"}));
    sample->add_option("--low", smp_low, "uniform law lower bound");
    sample->add_option("--high", smp_high, "uniform law upper bound");
    sample->add_option("--k", ms.k, "potts states");
    sample->add_option("--sampler", smp_sampler, "gibbs | swendsen_wang (discrete models)")
        ->check(CLI::IsMember({"gibbs", "swendsen_wang"}));
    sample->add_option("--burn-in", chain.burn_in, "burn-in sweeps");
    sample->add_option("--thin", chain.thin, "sweeps between retained samples");
    sample->add_flag("--independent-chains", chain.independent_chains, "one chain per retained sample");
    sample->add_option("--n", smp_n, "sample count")->required()->check(CLI::PositiveNumber);
    sample->add_option("--trial", smp_trial, "trial index")->check(CLI::NonNegativeNumber);
    sample->add_option("--seed", smp_seed, "master seed");
    sample->add_option("--out", smp_out, "sample CSV to write")->required();
    sample->add_option("--model-out", smp_model_out, "also write the model file");

    // ---- fit-neighborhoods
    auto* fit = app.add_subcommand("fit-neighborhoods", "Estimate every neighborhood from a sample file");
    std::string fit_samples, fit_kind = "auto", fit_mode = "fixed", fit_graph, fit_out;
    int fit_k = 0, fit_folds = 10, fit_grid = 50, fit_trial = 0, fit_grid_index = 0;
    std::uint64_t fit_seed = 0;
    std::size_t fit_workers = 1;
    PenaltyOptions fit_pen;
    fit->add_option("--samples", fit_samples, "sample CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--kind", fit_kind, "auto | real | ising | potts")->check(CLI::IsMember({"auto", "real", "ising", "potts"}));
    fit->add_option("--k", fit_k, "potts states (default: inferred)");
    fit_pen.add(fit);
    fit->add_option("--mode", fit_mode, "fixed | cv | degree")->check(CLI::IsMember({"fixed", "cv", "degree"}));
    fit->add_option("--graph", fit_graph, "true graph (degree mode)")->check(CLI::ExistingFile);
    fit->add_option("--folds", fit_folds, "cv folds")->check(CLI::Range(2, 1000000));
    fit->add_option("--grid-size", fit_grid, "cv path length")->check(CLI::Range(2, 1000000));
    fit->add_option("--seed", fit_seed, "master seed (cv fold assignment)");
    fit->add_option("--trial", fit_trial, "trial index used for the cv stream");
    fit->add_option("--grid-index", fit_grid_index, "penalty grid index used for the cv stream");
    fit->add_option("--workers", fit_workers, "parallel jobs")->check(CLI::PositiveNumber);
    fit->add_option("--out", fit_out, "neighborhood file to write")->required();

    // ---- vote
    auto* vote = app.add_subcommand("vote", "Pairwise-union vote matrices L, S and Sbar from a sample file");
    std::string vote_samples, vote_out, vote_graph, vote_method = "N2_Sbar", vote_threshold = "degree", vote_estimates;
    std::uint64_t vote_seed = 0;
    std::size_t vote_workers = 1;
    int vote_top = 0;
    PenaltyOptions vote_pen;
    vote->add_option("--samples", vote_samples, "Gaussian sample CSV")->required()->check(CLI::ExistingFile);
    vote_pen.add(vote);
    vote->add_option("--workers", vote_workers, "parallel jobs")->check(CLI::PositiveNumber);
    vote->add_option("--seed", vote_seed, "accepted for uniformity; voting is deterministic");
    vote->add_option("--out", vote_out, "directory for L.csv, S.csv and Sbar.csv")->required();
    vote->add_option("--estimates", vote_estimates, "also write neighborhoods thresholded from one matrix");
    vote->add_option("--method", vote_method, "N2_L | N2_S | N2_Sbar")->check(CLI::IsMember({"N2_L", "N2_S", "N2_Sbar"}));
    vote->add_option("--threshold", vote_threshold, "degree | jump | top")->check(CLI::IsMember({"degree", "jump", "top"}));
    vote->add_option("--top", vote_top, "neighbors per row for --threshold top");
    vote->add_option("--graph", vote_graph, "true graph (degree threshold, jump search bound)")->check(CLI::ExistingFile);

    // ---- score
    auto* sc = app.add_subcommand("score", "Score neighborhood estimates against a true graph");
    std::string sc_graph, sc_estimates, sc_rule = "both", sc_out;
    std::uint64_t sc_seed = 0;
    sc->add_option("--graph", sc_graph, "true graph")->required()->check(CLI::ExistingFile);
    sc->add_option("--estimates", sc_estimates, "neighborhood file")->required()->check(CLI::ExistingFile);
    sc->add_option("--rule", sc_rule, "AND | OR | both")->check(CLI::IsMember({"AND", "OR", "both"}));
    sc->add_option("--seed", sc_seed, "accepted for uniformity; scoring is deterministic");
    sc->add_option("--out", sc_out, "score CSV to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            if (run->count("--seed")) run_opts.seed = run_seed;
            if (run->count("--out")) run_opts.out = fs::path(run_out);
            if (run->count("--workers")) run_opts.workers = run_workers;
            return run_config(config_path, run_opts);
        }

        if (*gen) {
            GraphSpec spec;
            std::uint64_t seed = 0;
            if (!gen_config.empty()) {
                const auto cfg = load_config(gen_config);
                spec = cfg.sweep.graph;
                seed = cfg.sweep.seed;
            } else if (!gen->count("--family")) {
                throw std::invalid_argument("gen-graph needs --config or --family");
            }
            override_if(gen, "--family", spec.family, gs.family);
            override_if(gen, "--a", spec.a, gs.a);
            override_if(gen, "--b", spec.b, gs.b);
            override_if(gen, "--target-rho", spec.target_rho, gs.target_rho);
            override_if(gen, "--groups", spec.groups, gs.groups);
            override_if(gen, "--group-size", spec.group_size, gs.group_size);
            override_if(gen, "--beta-in", spec.beta_in, gs.beta_in);
            override_if(gen, "--beta-out", spec.beta_out, gs.beta_out);
            override_if(gen, "--p", spec.p, gs.p);
            override_if(gen, "--d-max", spec.d_max, gs.d_max);
            override_if(gen, "--m", spec.m, gs.m);
            override_if(gen, "--connected", spec.require_connected, gs.require_connected);
            override_if(gen, "--seed", seed, gen_seed);
            const Graph g = build_graph(spec, seed);
            write_file(gen_out, to_text([&](std::ostream& o) { write_graph(o, g); }));
            return kOk;
        }

        if (*sample) {
            ModelSpec spec;
            SamplingSpec sampling;
            sampling.sampler = SamplerKind::gibbs;
            std::uint64_t seed = 0;
            if (!smp_config.empty()) {
                const auto cfg = load_config(smp_config);
                spec = cfg.sweep.model;
                sampling = cfg.sweep.sampling;
                seed = cfg.sweep.seed;
            }
            override_if(sample, "--kind", spec.kind, ms.kind);
            override_if(sample, "--k", spec.k, ms.k);
            if (sample->count("--coupling")) {
                spec.gmrf_coupling = smp_coupling;
                if (smp_law == "rademacher") spec.law = CouplingLaw::rademacher(smp_coupling);
                if (smp_law == "constant") spec.law = CouplingLaw::constant(smp_coupling);
            }
            if (sample->count("--law") && smp_law == "uniform") spec.law = CouplingLaw::uniform(smp_low, smp_high);
            if (sample->count("--sampler"))
                sampling.sampler = smp_sampler == "gibbs" ? SamplerKind::gibbs : SamplerKind::swendsen_wang;
            override_if(sample, "--burn-in", sampling.chain.burn_in, chain.burn_in);
            override_if(sample, "--thin", sampling.chain.thin, chain.thin);
            override_if(sample, "--independent-chains", sampling.chain.independent_chains, chain.independent_chains);
            override_if(sample, "--seed", seed, smp_seed);
            sampling.chain.validate();

            const Graph g = load_graph(smp_graph);
            Model model;
            if (!smp_model.empty()) {
                std::istringstream in(read_file(smp_model));
                model = read_model(in);
            } else {
                if (smp_config.empty() && !sample->count("--kind")) throw std::invalid_argument("sample needs --model, --config or --kind");
                model = build_model(g, spec, seed);
            }
            const auto s = draw_samples(model, sampling, smp_n, smp_trial, seed);
            if (s.p() != g.p()) throw std::invalid_argument("model and graph disagree on p");
            write_file(smp_out, to_text([&](std::ostream& o) { write_samples(o, s); }));
            if (!smp_model_out.empty()) write_file(smp_model_out, to_text([&](std::ostream& o) { write_model(o, model); }));
            return kOk;
        }

        if (*fit) {
            const auto s = load_samples(fit_samples, fit_kind, fit_k);
            const PenaltySpec pen = fit_pen.resolve(s.p(), s.n());
            NodeSelection ns;
            std::vector<int> degrees;
            if (fit_mode == "cv") {
                ns = NodeSelection::cross_validated(fit_folds, derive_seed(fit_seed, "cv:" + sample_label(s.n(), fit_trial), fit_grid_index));
                ns.grid_size = fit_grid;
            } else if (fit_mode == "degree") {
                if (fit_graph.empty()) throw std::invalid_argument("degree mode needs --graph");
                ns.mode = NodeSelection::Mode::degree;
                degrees = degree_vector(load_graph(fit_graph));
            }
            const auto est = estimate_all_neighborhoods(s, pen, ns, degrees, fit_workers);
            write_file(fit_out, to_text([&](std::ostream& o) { write_neighborhoods(o, est); }));
            return kOk;
        }

        if (*vote) {
            const auto s = load_samples(vote_samples, "real", 0);
            const PenaltySpec pen = vote_pen.resolve(s.p(), s.n());
            const VoteMatrix L = vote_matrix(s, pen, vote_workers);
            const VoteMatrix S = symmetrize(L);
            const VoteMatrix Sbar = normalize_symmetrize(L);
            const fs::path dir(vote_out);
            write_file(dir / "L.csv", to_text([&](std::ostream& o) { write_vote_matrix(o, L); }));
            write_file(dir / "S.csv", to_text([&](std::ostream& o) { write_vote_matrix(o, S); }));
            write_file(dir / "Sbar.csv", to_text([&](std::ostream& o) { write_vote_matrix(o, Sbar); }));
            if (!vote_estimates.empty()) {
                std::optional<Graph> truth;
                if (!vote_graph.empty()) truth = load_graph(vote_graph);
                if (vote_threshold == "degree" && !truth) throw std::invalid_argument("degree threshold needs --graph");
                if (vote_threshold == "top" && vote_top < 1) throw std::invalid_argument("top threshold needs --top >= 1");
                std::vector<Threshold> th;
                for (int i = 0; i < s.p(); ++i) {
                    if (vote_threshold == "degree") th.push_back(Threshold::degree(truth->degree(i)));
                    if (vote_threshold == "top") th.push_back(Threshold::top(vote_top));
                    if (vote_threshold == "jump") th.push_back(Threshold::jump(truth ? truth->max_degree() : 0));
                }
                const VoteMatrix& v = vote_method == "N2_L" ? L : vote_method == "N2_S" ? S : Sbar;
                const auto est = estimates_from_votes(v, th);
                write_file(vote_estimates, to_text([&](std::ostream& o) { write_neighborhoods(o, est); }));
            }
            return kOk;
        }

        if (*sc) {
            const Graph truth = load_graph(sc_graph);
            std::istringstream in(read_file(sc_estimates));
            const auto est = read_neighborhoods(in);
            if (static_cast<int>(est.size()) != truth.p()) throw std::invalid_argument("estimates and graph disagree on p");
            std::ostringstream out;
            out << "rule,type1,type2,total,precision,recall,tp,fp,fn,tn\n";
            for (EdgeRule rule : {EdgeRule::AND, EdgeRule::OR}) {
                if (sc_rule != "both" && sc_rule != to_string(rule)) continue;
                const auto r = score(truth, reconstruct_edges(est, rule));
                out << to_string(rule) << ',' << format_double(r.type1) << ',' << format_double(r.type2) << ','
                    << format_double(r.total) << ',' << format_double(r.precision) << ',' << format_double(r.recall)
                    << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << '\n';
            }
            write_file(sc_out, out.str());
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}
