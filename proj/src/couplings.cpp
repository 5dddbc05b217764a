#include "smcvi/couplings.hpp"

#include <cmath>
#include <limits>

#include "smcvi/error.hpp"
#include "smcvi/filters.hpp"

namespace smcvi {

CouplingPair::CouplingPair(OmegaSampler omega, NuSampler nu, std::string description)
    : omega_(std::move(omega)), nu_(std::move(nu)), description_(std::move(description)) {}

DrawResult CouplingPair::draw(Randomness& rng) const { return nu_(omega_(rng), rng, 0); }

namespace {

std::any no_omega(Randomness&) { return {}; }

TapeVar last_row(const TapeVar& atom) { return slice_rows(atom, atom.rows() - 1, 1); }

std::vector<double> atom_probabilities(const std::vector<Atom>& atoms) {
    Tensor lw(atoms.size(), 1);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        lw(i, 0) = atoms[i].log_weight.item();
    }
    return normalized_weights(lw);
}

TapeVar stack(const std::vector<TapeVar>& scalars) { return concat_rows(scalars); }

CouplingPair extend_impl(const CouplingPair& p, Extension ext, bool drop_old) {
    auto omega = [p](Randomness& rng) -> std::any {
        return std::make_shared<const DrawResult>(p.draw(rng));
    };
    auto nu = [ext, drop_old](const std::any& w, Randomness& rng,
                              std::uint64_t particle) -> DrawResult {
        const auto prev = std::any_cast<std::shared_ptr<const DrawResult>>(w);
        const std::vector<double> probs = atom_probabilities(prev->atoms);
        const std::size_t j =
            rng.categorical(probs, DrawKey{ext.step, particle, Purpose::Ancestor});
        const TapeVar& old = prev->atoms[j].value;
        const TapeVar x_new = ext.propose(old, rng, particle);
        const TapeVar log_q = ext.log_proposal(old, x_new);
        if (!(log_q.item() > -std::numeric_limits<double>::infinity())) {
            throw ContractViolation("proposal has zero density at its own sample");
        }
        DrawResult out;
        out.log_r = prev->log_r + (ext.log_ratio(old, x_new) - log_q);
        if (std::isinf(out.log_r.item()) && out.log_r.item() > 0) {
            throw ContractViolation("target ratio is infinite: support condition violated");
        }
        std::vector<TapeVar> rows{old, x_new};
        out.atoms.push_back({drop_old ? x_new : concat_rows(rows), constant(0.0)});
        out.trace = ExtensionTrace{prev, j, x_new, drop_old};
        return out;
    };
    return CouplingPair(std::move(omega), std::move(nu),
                        std::string(drop_old ? "change_target" : "extend_target") + "(" +
                            p.description() + ", t=" + std::to_string(ext.step) + ")");
}

}  // namespace

CouplingPair basic_pair(std::function<TapeVar(const TapeVar&)> log_gamma, PointProposal r,
                        std::string name) {
    auto nu = [log_gamma, r](const std::any&, Randomness& rng,
                             std::uint64_t particle) -> DrawResult {
        const TapeVar x = r.sample(rng, particle);
        const TapeVar log_q = r.log_density(x);
        if (!(log_q.item() > -std::numeric_limits<double>::infinity())) {
            throw ContractViolation("proposal has zero density at its own sample");
        }
        DrawResult out;
        out.log_r = log_gamma(x) - log_q;
        out.atoms.push_back({x, constant(0.0)});
        return out;
    };
    return CouplingPair(no_omega, std::move(nu), std::move(name));
}

CouplingPair replicate(const CouplingPair& p, std::size_t n) {
    require(n >= 1, "replicate needs n >= 1");
    auto nu = [p, n](const std::any& w, Randomness& rng, std::uint64_t) -> DrawResult {
        std::vector<DrawResult> parts;
        std::vector<TapeVar> log_rs;
        for (std::size_t i = 0; i < n; ++i) {
            parts.push_back(p.draw_nu(w, rng, i));
            log_rs.push_back(parts.back().log_r);
        }
        const TapeVar total = logsumexp(stack(log_rs));
        DrawResult out;
        out.log_r = total - std::log(static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const TapeVar share = parts[i].log_r - total;
            for (const Atom& a : parts[i].atoms) {
                out.atoms.push_back({a.value, a.log_weight + share});
            }
        }
        out.trace = std::move(parts);
        return out;
    };
    return CouplingPair([p](Randomness& rng) { return p.draw_omega(rng); }, std::move(nu),
                        "replicate(" + p.description() + ", " + std::to_string(n) + ")");
}

CouplingPair extend_target(const CouplingPair& p, Extension ext) {
    return extend_impl(p, std::move(ext), false);
}

CouplingPair change_target(const CouplingPair& p, Extension ext) {
    return extend_impl(p, std::move(ext), true);
}

CouplingPair marginalize(const CouplingPair& p, AuxSelector selector, std::string aux_name) {
    auto nu = [p, selector](const std::any& w, Randomness& rng,
                            std::uint64_t particle) -> DrawResult {
        const DrawResult drawn = p.draw_nu(w, rng, particle);
        const std::vector<Alternative> alts = selector(drawn);
        require(!alts.empty(), "auxiliary variable has no support");
        std::vector<TapeVar> joint;
        for (const auto& a : alts) {
            joint.push_back(a.log_weight + a.result.log_r);
        }
        DrawResult out;
        out.log_r = logsumexp(stack(joint));
        for (std::size_t k = 0; k < alts.size(); ++k) {
            const TapeVar share = joint[k] - out.log_r;
            for (const Atom& atom : alts[k].result.atoms) {
                const TapeVar lw = atom.log_weight + share;
                bool merged = false;
                for (Atom& existing : out.atoms) {
                    if (existing.value.value() == atom.value.value()) {
                        std::vector<TapeVar> both{existing.log_weight, lw};
                        existing.log_weight = logsumexp(concat_rows(both));
                        merged = true;
                        break;
                    }
                }
                if (!merged) {
                    out.atoms.push_back({atom.value, lw});
                }
            }
        }
        out.trace = drawn.trace;
        return out;
    };
    return CouplingPair([p](Randomness& rng) { return p.draw_omega(rng); }, std::move(nu),
                        "marginalize(" + p.description() + ", " + aux_name + ")");
}

AuxSelector ancestor_selector(const Extension& ext) {
    return [ext](const DrawResult& drawn) {
        const auto* trace = std::any_cast<ExtensionTrace>(&drawn.trace);
        require(trace != nullptr, "ancestor_selector needs an extension draw");
        const DrawResult& prev = *trace->previous;
        const TapeVar& x_new = trace->x_new;
        std::vector<TapeVar> log_q;
        std::vector<TapeVar> proposal_terms;
        for (const Atom& a : prev.atoms) {
            log_q.push_back(ext.log_proposal(a.value, x_new));
            proposal_terms.push_back(a.log_weight + log_q.back());
        }
        const TapeVar norm = logsumexp(stack(proposal_terms));
        std::vector<Alternative> alts;
        for (std::size_t j = 0; j < prev.atoms.size(); ++j) {
            const TapeVar& old = prev.atoms[j].value;
            DrawResult r;
            r.log_r = prev.log_r + (ext.log_ratio(old, x_new) - log_q[j]);
            std::vector<TapeVar> rows{old, x_new};
            r.atoms.push_back({trace->drop_old ? x_new : concat_rows(rows), constant(0.0)});
            alts.push_back({proposal_terms[j] - norm, std::move(r)});
        }
        return alts;
    };
}

namespace {

CouplingPair first_pair(const StateSpaceModel& model, const Proposal& proposal,
                        const Dataset& data) {
    const Tensor y0 = data.y[0];
    PointProposal r{
        [&proposal, y0](Randomness& rng, std::uint64_t particle) {
            const std::vector<std::size_t> first{0};
            return proposal.conditionals(0, nullptr, y0)
                ->sample(first, rng, 0, Purpose::Proposal, particle);
        },
        [&proposal, y0](const TapeVar& x) {
            return proposal.conditionals(0, nullptr, y0)->log_density(x);
        }};
    auto log_gamma = [&model, y0](const TapeVar& x) {
        return model.initial()->log_density(x) + model.log_observation(x, y0);
    };
    return basic_pair(log_gamma, r, "basic(t=0)");
}

Extension step_extension(const StateSpaceModel& model, const Proposal& proposal,
                         const Dataset& data, std::size_t t) {
    const Tensor y = data.y[t];
    Extension ext;
    ext.step = t;
    ext.propose = [&proposal, y, t](const TapeVar& atom, Randomness& rng,
                                    std::uint64_t particle) {
        const TapeVar prev = last_row(atom);
        const std::vector<std::size_t> first{0};
        return proposal.conditionals(t, &prev, y)
            ->sample(first, rng, t, Purpose::Proposal, particle);
    };
    ext.log_proposal = [&proposal, y, t](const TapeVar& atom, const TapeVar& x_new) {
        const TapeVar prev = last_row(atom);
        return proposal.conditionals(t, &prev, y)->log_density(x_new);
    };
    ext.log_ratio = [&model, y](const TapeVar& atom, const TapeVar& x_new) {
        return model.transition(last_row(atom))->log_density(x_new) +
               model.log_observation(x_new, y);
    };
    return ext;
}

}  // namespace

CouplingPair derive_smc(const StateSpaceModel& model, const Proposal& proposal,
                        const Dataset& data, std::size_t n) {
    require(data.steps() >= 1, "need at least one observation");
    CouplingPair p = replicate(first_pair(model, proposal, data), n);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        p = replicate(extend_target(p, step_extension(model, proposal, data, t)), n);
    }
    return p;
}

CouplingPair derive_mpf(const StateSpaceModel& model, const Proposal& proposal,
                        const Dataset& data, std::size_t n) {
    require(data.steps() >= 1, "need at least one observation");
    CouplingPair p = replicate(first_pair(model, proposal, data), n);
    for (std::size_t t = 1; t < data.steps(); ++t) {
        const Extension ext = step_extension(model, proposal, data, t);
        p = replicate(marginalize(change_target(p, ext), ancestor_selector(ext), "ancestor"), n);
    }
    return p;
}

}  // namespace smcvi
