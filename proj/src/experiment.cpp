#include "smcvi/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "smcvi/error.hpp"

namespace smcvi {

using nlohmann::json;

namespace {

// Stream tags under data_seed.
constexpr std::uint64_t kModelTag = 11;
constexpr std::uint64_t kSimTag = 12;
constexpr std::uint64_t kThetaTag = 13;
constexpr std::uint64_t kProposalTag = 14;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.contains(k)) {
            throw std::invalid_argument("unknown config key \"" + k + "\" in " + where);
        }
    }
}

std::string model_name(ModelKind k) {
    switch (k) {
        case ModelKind::LGSSM:
            return "lgssm";
        case ModelKind::StochVol:
            return "stochvol";
        case ModelKind::DMM:
            return "dmm";
    }
    return "?";
}

json to_json(const ExperimentConfig& c) {
    json model = {{"kind", model_name(c.model.kind)}};
    switch (c.model.kind) {
        case ModelKind::LGSSM:
            model["dx"] = c.model.dx;
            model["dy"] = c.model.dy;
            model["alpha"] = c.model.alpha;
            model["c_mode"] = c.model.c_mode == CMode::Sparse ? "sparse" : "dense";
            model["train_beta"] = c.model.train_beta;
            break;
        case ModelKind::StochVol:
            model["d"] = c.model.dx;
            model["b_mode"] = c.model.b_mode == BMode::Diagonal ? "diagonal" : "triangular";
            model["learn_theta"] = c.model.learn_theta;
            model["theta_noise"] = c.model.theta_noise;
            break;
        case ModelKind::DMM:
            model["dx"] = c.model.dx;
            model["dy"] = c.model.dy;
            model["dh"] = c.model.dh;
            model["learn_theta"] = c.model.learn_theta;
            break;
    }
    json schedule = json::array();
    for (const Stage& s : c.schedule) {
        schedule.push_back({s.learning_rate, s.iterations});
    }
    json out = {{"model", model},
                {"T", c.steps},
                {"objective", to_string(c.objective)},
                {"N", c.particles},
                {"schedule", schedule},
                {"seed", c.seed},
                {"data_seed", c.data_seed},
                {"eval_samples", c.eval_samples},
                {"probe_every", c.probe_every},
                {"probe_samples", c.probe_samples},
                {"out_dir", c.out_dir}};
    out["clip"] = c.clip ? json(*c.clip) : json(nullptr);
    return out;
}

}  // namespace

Problem lgssm_problem(const Lgssm& m, Dataset data, bool train_beta) {
    Problem p;
    add_lgssm_proposal_params(p.params, data.steps(), m.state_dim(), train_beta);
    p.make_model = [m](const BoundParams&) { return std::make_unique<LgssmModel>(m); };
    p.make_proposal = [m](const BoundParams& bp) {
        return std::make_unique<LgssmProposal>(m, bp);
    };
    p.data = std::move(data);
    return p;
}

Problem stochvol_problem(const StochVolTruth& truth, BMode mode, Dataset data, bool learn_theta,
                         double noise, std::uint64_t seed) {
    Problem p;
    add_stochvol_params(p.params, truth, mode, learn_theta, learn_theta ? noise : 0.0,
                        RngStream(seed).child(kThetaTag));
    add_stochvol_proposal_params(p.params, data.steps(), truth.mu.cols());
    p.make_model = [mode](const BoundParams& bp) {
        return std::make_unique<StochVolModel>(bp, mode);
    };
    p.make_proposal = [mode](const BoundParams& bp) {
        return std::make_unique<StochVolProposal>(bp, mode);
    };
    p.data = std::move(data);
    return p;
}

Problem dmm_problem(const DmmDims& dims, Dataset data, bool learn_theta, std::uint64_t model_seed,
                    std::uint64_t proposal_seed) {
    Problem p;
    add_dmm_params(p.params, dims, RngStream(model_seed).child(kModelTag), learn_theta);
    add_dmm_proposal_params(p.params, dims, RngStream(proposal_seed).child(kProposalTag));
    p.make_model = [dims](const BoundParams& bp) { return std::make_unique<DmmModel>(bp, dims); };
    p.make_proposal = [dims](const BoundParams& bp) {
        return std::make_unique<DmmProposal>(bp, dims);
    };
    p.data = std::move(data);
    return p;
}

ExperimentConfig parse_config(const std::string& text) {
    const json j = json::parse(text);
    reject_unknown(j,
                   {"model", "T", "objective", "N", "schedule", "clip", "seed", "data_seed",
                    "eval_samples", "probe_every", "probe_samples", "out_dir"},
                   "config");
    ExperimentConfig c;
    if (j.contains("model")) {
        const json& m = j.at("model");
        require(m.is_object() && m.contains("kind"), "model needs a \"kind\"");
        const std::string kind = m.at("kind").get<std::string>();
        if (kind == "lgssm") {
            reject_unknown(m, {"kind", "dx", "dy", "alpha", "c_mode", "train_beta"}, "model");
            c.model.kind = ModelKind::LGSSM;
            c.model.dx = m.value("dx", c.model.dx);
            c.model.dy = m.value("dy", c.model.dy);
            c.model.alpha = m.value("alpha", c.model.alpha);
            const std::string cm = m.value("c_mode", std::string("sparse"));
            require(cm == "sparse" || cm == "dense", "c_mode must be sparse or dense");
            c.model.c_mode = cm == "sparse" ? CMode::Sparse : CMode::Dense;
            c.model.train_beta = m.value("train_beta", c.model.train_beta);
        } else if (kind == "stochvol") {
            reject_unknown(m, {"kind", "d", "b_mode", "learn_theta", "theta_noise"}, "model");
            c.model.kind = ModelKind::StochVol;
            c.model.dx = m.value("d", std::size_t{5});
            c.model.dy = c.model.dx;
            const std::string bm = m.value("b_mode", std::string("diagonal"));
            require(bm == "diagonal" || bm == "triangular",
                    "b_mode must be diagonal or triangular");
            c.model.b_mode = bm == "diagonal" ? BMode::Diagonal : BMode::Triangular;
            c.model.learn_theta = m.value("learn_theta", true);
            c.model.theta_noise = m.value("theta_noise", c.model.theta_noise);
        } else if (kind == "dmm") {
            reject_unknown(m, {"kind", "dx", "dy", "dh", "learn_theta"}, "model");
            c.model.kind = ModelKind::DMM;
            c.model.dx = m.value("dx", std::size_t{8});
            c.model.dy = m.value("dy", std::size_t{20});
            c.model.dh = m.value("dh", std::size_t{32});
            c.model.learn_theta = m.value("learn_theta", false);
        } else {
            throw std::invalid_argument("unknown model kind " + kind +
                                        " (expected lgssm, stochvol or dmm)");
        }
    }
    c.steps = j.value("T", c.steps);
    if (j.contains("objective")) {
        c.objective = parse_objective(j.at("objective").get<std::string>());
    }
    c.particles = j.value("N", c.particles);
    if (j.contains("schedule")) {
        c.schedule.clear();
        for (const auto& s : j.at("schedule")) {
            require(s.is_array() && s.size() == 2,
                    "schedule entries are [learning_rate, iterations]");
            c.schedule.push_back({s[0].get<double>(), s[1].get<std::size_t>()});
        }
    }
    if (j.contains("clip")) {
        if (!j.at("clip").is_null()) {
            c.clip = j.at("clip").get<double>();
        }
    } else if (c.model.kind == ModelKind::StochVol) {
        c.clip = 100.0;
    }
    c.seed = j.value("seed", c.seed);
    c.data_seed = j.value("data_seed", c.data_seed);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.probe_every = j.value("probe_every", c.probe_every);
    c.probe_samples = j.value("probe_samples", c.probe_samples);
    c.out_dir = j.value("out_dir", c.out_dir);
    require(c.steps >= 1, "T must be at least 1");
    require(c.particles >= 1, "N must be at least 1");
    require(!c.schedule.empty(), "schedule must not be empty");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot read config " + path.string());
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(); }

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical_json(cfg)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Lgssm config_lgssm(const ExperimentConfig& cfg) {
    require(cfg.model.kind == ModelKind::LGSSM, "config is not an LGSSM");
    return lgssm_make(cfg.model.dx, cfg.model.dy, cfg.model.alpha, cfg.model.c_mode,
                      RngStream(cfg.data_seed).child(kModelTag));
}

StochVolTruth config_stochvol(const ExperimentConfig& cfg) {
    require(cfg.model.kind == ModelKind::StochVol, "config is not a stochastic volatility model");
    return default_stochvol(cfg.model.dx, cfg.model.b_mode,
                            RngStream(cfg.data_seed).child(kModelTag));
}

Dataset generate_dataset(const ExperimentConfig& cfg) {
    StreamRandomness rng(RngStream(cfg.data_seed).child(kSimTag));
    Dataset data;
    std::vector<std::pair<std::string, std::string>> meta{
        {"model", model_name(cfg.model.kind)},
        {"T", std::to_string(cfg.steps)},
        {"data_seed", std::to_string(cfg.data_seed)}};
    switch (cfg.model.kind) {
        case ModelKind::LGSSM: {
            const Lgssm m = config_lgssm(cfg);
            data = simulate(LgssmModel(m), cfg.steps, rng).data;
            meta.push_back({"dx", std::to_string(cfg.model.dx)});
            meta.push_back({"dy", std::to_string(cfg.model.dy)});
            std::ostringstream alpha;
            alpha.precision(17);
            alpha << cfg.model.alpha;
            meta.push_back({"alpha", alpha.str()});
            meta.push_back({"c_mode", cfg.model.c_mode == CMode::Sparse ? "sparse" : "dense"});
            if (cfg.model.c_mode == CMode::Dense) {
                json c = json::array();
                for (std::size_t i = 0; i < m.c.rows(); ++i) {
                    const auto r = m.c.row_span(i);
                    c.push_back(std::vector<double>(r.begin(), r.end()));
                }
                meta.push_back({"C", c.dump()});
            }
            break;
        }
        case ModelKind::StochVol: {
            const StochVolTruth truth = config_stochvol(cfg);
            ParameterSet ps;
            add_stochvol_params(ps, truth, cfg.model.b_mode, false, 0.0, RngStream(0));
            const BoundParams bp(ps, nullptr);
            data = simulate(StochVolModel(bp, cfg.model.b_mode), cfg.steps, rng).data;
            meta.push_back({"d", std::to_string(cfg.model.dx)});
            meta.push_back(
                {"b_mode", cfg.model.b_mode == BMode::Diagonal ? "diagonal" : "triangular"});
            break;
        }
        case ModelKind::DMM: {
            const DmmDims dims{cfg.model.dx, cfg.model.dy, cfg.model.dh};
            ParameterSet ps;
            add_dmm_params(ps, dims, RngStream(cfg.data_seed).child(kModelTag), false);
            const BoundParams bp(ps, nullptr);
            data = simulate(DmmModel(bp, dims), cfg.steps, rng).data;
            meta.push_back({"dx", std::to_string(dims.dx)});
            meta.push_back({"dy", std::to_string(dims.dy)});
            meta.push_back({"dh", std::to_string(dims.dh)});
            break;
        }
    }
    data.metadata = std::move(meta);
    return data;
}

Problem build_problem(const ExperimentConfig& cfg, Dataset data) {
    require(data.steps() == cfg.steps, "dataset length does not match T");
    switch (cfg.model.kind) {
        case ModelKind::LGSSM:
            return lgssm_problem(config_lgssm(cfg), std::move(data), cfg.model.train_beta);
        case ModelKind::StochVol:
            return stochvol_problem(config_stochvol(cfg), cfg.model.b_mode, std::move(data),
                                    cfg.model.learn_theta, cfg.model.theta_noise, cfg.seed);
        case ModelKind::DMM:
            return dmm_problem(DmmDims{cfg.model.dx, cfg.model.dy, cfg.model.dh},
                               std::move(data), cfg.model.learn_theta, cfg.data_seed, cfg.seed);
    }
    throw std::logic_error("unknown model kind");
}

Objective config_objective(const ExperimentConfig& cfg) {
    return Objective{cfg.objective, cfg.particles};
}

std::optional<double> exact_loglik(const ExperimentConfig& cfg, const Dataset& data) {
    if (cfg.model.kind != ModelKind::LGSSM) {
        return std::nullopt;
    }
    return kalman_loglik(config_lgssm(cfg), data);
}

}  // namespace smcvi
