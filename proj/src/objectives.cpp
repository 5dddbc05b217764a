#include "smcvi/objectives.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <thread>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

// Stream tags under the run seed: training iterations, variance probes and
// bound estimates never share randomness.
constexpr std::uint64_t kTrainTag = 1;
constexpr std::uint64_t kProbeTag = 2;
constexpr std::uint64_t kBoundTag = 3;

StreamRandomness stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return StreamRandomness(RngStream(seed).child(tag).child(index));
}

FilterConfig config_for(const Objective& obj, ImplicitGradientStats* stats) {
    FilterConfig cfg;
    cfg.particles = obj.particles;
    cfg.grad = obj.kind == ObjectiveKind::VMPF_UG ? GradMode::Unbiased : GradMode::Biased;
    cfg.resample = obj.kind != ObjectiveKind::IWVI;
    cfg.stats = stats;
    return cfg;
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::IWVI:
            return "IWVI";
        case ObjectiveKind::VSMC:
            return "VSMC";
        case ObjectiveKind::TMC:
            return "TMC";
        case ObjectiveKind::VMPF_BG:
            return "VMPF-BG";
        case ObjectiveKind::VMPF_UG:
            return "VMPF-UG";
    }
    return "?";
}

ObjectiveKind parse_objective(const std::string& name) {
    for (ObjectiveKind k : {ObjectiveKind::IWVI, ObjectiveKind::VSMC, ObjectiveKind::TMC,
                            ObjectiveKind::VMPF_BG, ObjectiveKind::VMPF_UG}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    if (name == "DPF") {
        throw std::invalid_argument("DPF is not supported (out of scope)");
    }
    throw std::invalid_argument("unknown objective " + name +
                                " (expected IWVI, VSMC, TMC, VMPF-BG or VMPF-UG)");
}

ParticleRun objective_run(const Objective& obj, const StateSpaceModel& model,
                          const Proposal& proposal, const Dataset& data, Randomness& rng,
                          ImplicitGradientStats* stats) {
    const FilterConfig cfg = config_for(obj, stats);
    switch (obj.kind) {
        case ObjectiveKind::IWVI:
        case ObjectiveKind::VSMC:
            return run_smc(model, proposal, data, cfg, rng);
        case ObjectiveKind::TMC:
            return run_tmc(model, proposal, data, cfg, rng);
        case ObjectiveKind::VMPF_BG:
        case ObjectiveKind::VMPF_UG:
            return run_mpf(model, proposal, data, cfg, rng);
    }
    throw std::logic_error("unknown objective kind");
}

TapeVar objective_value(const Objective& obj, const StateSpaceModel& model,
                        const Proposal& proposal, const Dataset& data, Randomness& rng,
                        ImplicitGradientStats* stats) {
    return objective_run(obj, model, proposal, data, rng, stats).log_evidence();
}

double objective_sample(const Objective& obj, const Problem& problem, Randomness& rng) {
    const BoundParams bp(problem.params, nullptr);
    const auto model = problem.make_model(bp);
    const auto proposal = problem.make_proposal(bp);
    return objective_value(obj, *model, *proposal, problem.data, rng).item();
}

GradientSample objective_gradient(const Objective& obj, const Problem& problem,
                                  Randomness& rng) {
    Tape tape;
    const BoundParams bp(problem.params, &tape);
    const auto model = problem.make_model(bp);
    const auto proposal = problem.make_proposal(bp);
    ImplicitGradientStats stats;
    const TapeVar value = objective_value(obj, *model, *proposal, problem.data, rng, &stats);
    GradientSample out;
    out.value = value.item();
    out.tail_failures = stats.tail_failures;
    if (value.is_constant()) {
        for (std::size_t i = 0; i < problem.params.size(); ++i) {
            const Tensor& v = problem.params.entry(i).value;
            out.grads.emplace_back(v.rows(), v.cols());
        }
        return out;
    }
    std::vector<TapeVar> wrt;
    for (std::size_t i = 0; i < bp.size(); ++i) {
        wrt.push_back(bp.var(i));
    }
    out.grads = tape.grad(value, wrt);
    return out;
}

GradientSample gradient_biased(const Objective& obj, const Problem& problem, Randomness& rng) {
    require(obj.kind != ObjectiveKind::VMPF_UG, "VMPF-UG has no biased gradient");
    return objective_gradient(obj, problem, rng);
}

GradientSample gradient_unbiased(const Objective& obj, const Problem& problem, Randomness& rng) {
    require(obj.kind == ObjectiveKind::VMPF_UG, "unbiased gradients are defined for VMPF-UG");
    return objective_gradient(obj, problem, rng);
}

double global_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const Tensor& g : grads) {
        for (double v : g.values()) {
            s += v * v;
        }
    }
    return std::sqrt(s);
}

Adam::Adam(const ParameterSet& params, AdamOptions options) : options_(options) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& v = params.entry(i).value;
        m_.emplace_back(v.rows(), v.cols());
        v_.emplace_back(v.rows(), v.cols());
    }
}

void Adam::step(ParameterSet& params, std::vector<Tensor> grads, double learning_rate) {
    require(grads.size() == params.size() && m_.size() == params.size(),
            "gradient list does not match the parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = params.entry(i);
        if (!e.trainable) {
            continue;
        }
        require(grads[i].same_shape(e.value), "gradient shape mismatch for " + e.name);
        if (!grads[i].all_finite()) {
            throw NonFiniteGradient(e.name);
        }
    }
    if (options_.clip) {
        const double norm = global_norm(grads);
        if (norm > *options_.clip) {
            for (Tensor& g : grads) {
                g *= *options_.clip / norm;
            }
        }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& e = params.entry(i);
        if (!e.trainable) {
            continue;
        }
        for (std::size_t k = 0; k < e.value.size(); ++k) {
            const double g = grads[i][k];
            m_[i][k] = options_.beta1 * m_[i][k] + (1.0 - options_.beta1) * g;
            v_[i][k] = options_.beta2 * v_[i][k] + (1.0 - options_.beta2) * g * g;
            // Ascent: the objectives are lower bounds to maximize.
            e.value[k] += learning_rate * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + options_.eps);
        }
    }
}

TrainResult train(const Objective& obj, Problem& problem, const TrainOptions& options) {
    require(!options.schedule.empty(), "training schedule is empty");
    Adam adam(problem.params, AdamOptions{0.9, 0.999, 1e-8, options.clip});
    TrainResult result;
    std::size_t iter = 0;
    for (const Stage& stage : options.schedule) {
        for (std::size_t k = 0; k < stage.iterations; ++k, ++iter) {
            const auto start = std::chrono::steady_clock::now();
            StreamRandomness rng = stream(options.seed, kTrainTag, iter);
            GradientSample g;
            try {
                g = objective_gradient(obj, problem, rng);
            } catch (const DegeneracyError& e) {
                result.failure = TrainFailure{iter, e.what()};
                return result;
            }
            result.tail_failures += g.tail_failures;
            TrainRecord rec;
            rec.iter = iter;
            rec.objective = g.value;
            rec.grad_norm = global_norm(g.grads);
            if (!std::isfinite(g.value)) {
                result.failure = TrainFailure{iter, "non-finite objective"};
                return result;
            }
            if (rec.grad_norm > options.max_grad_norm) {
                result.failure = TrainFailure{
                    iter, "gradient norm " + std::to_string(rec.grad_norm) + " exceeds limit"};
                return result;
            }
            if (options.probe_every > 0 && iter % options.probe_every == 0) {
                rec.grad_var = grad_variance_probe(obj, problem, options.probe_samples,
                                                   splitmix64(options.seed ^ (iter + 1)), 1);
            }
            try {
                adam.step(problem.params, std::move(g.grads), stage.learning_rate);
            } catch (const NonFiniteGradient& e) {
                result.failure = TrainFailure{iter, e.what()};
                return result;
            }
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
            result.records.push_back(rec);
        }
    }
    return result;
}

void write_train_csv(const std::vector<TrainRecord>& records, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    f << "iter,objective,grad_norm,grad_var,wall_ms\n" << std::setprecision(17);
    for (const auto& r : records) {
        f << r.iter << ',' << r.objective << ',' << r.grad_norm << ',';
        if (!std::isnan(r.grad_var)) {
            f << r.grad_var;
        }
        f << ',' << std::setprecision(6) << r.wall_ms << std::setprecision(17) << '\n';
    }
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

BoundEstimate bound_estimate(const Objective& obj, const Problem& problem, std::size_t n,
                             std::uint64_t seed, std::size_t threads) {
    require(n >= 2, "bound estimate needs at least two samples");
    BoundEstimate out;
    out.samples.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        StreamRandomness rng = stream(seed, kBoundTag, i);
        out.samples[i] = objective_sample(obj, problem, rng);
    });
    double s = 0.0;
    for (double v : out.samples) {
        s += v;
    }
    out.mean = s / static_cast<double>(n);
    double ss = 0.0;
    for (double v : out.samples) {
        ss += (v - out.mean) * (v - out.mean);
    }
    out.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    return out;
}

double grad_variance_probe(const Objective& obj, const Problem& problem, std::size_t n,
                           std::uint64_t seed, std::size_t threads) {
    require(n >= 2, "variance probe needs at least two samples");
    std::vector<std::vector<Tensor>> grads(n);
    parallel_for(n, threads, [&](std::size_t i) {
        StreamRandomness rng = stream(seed, kProbeTag, i);
        grads[i] = objective_gradient(obj, problem, rng).grads;
    });
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < problem.params.size(); ++p) {
        if (!problem.params.entry(p).trainable) {
            continue;
        }
        for (std::size_t k = 0; k < problem.params.entry(p).value.size(); ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                s += grads[i][p][k];
            }
            const double mean = s / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ss += (grads[i][p][k] - mean) * (grads[i][p][k] - mean);
            }
            total += ss / static_cast<double>(n - 1);
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace smcvi
