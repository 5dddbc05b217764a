#pragma once

#include <any>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smcvi/autodiff.hpp"
#include "smcvi/rng.hpp"
#include "smcvi/ssm.hpp"

namespace smcvi {

/// One atom of a coupling a(x | omega): a value (a 1 x d point or a t x d
/// trajectory) and its normalized log weight.
struct Atom {
    TapeVar value;
    TapeVar log_weight;
};

/// omega's visible parts: log R(omega), the coupling as weighted atoms, and an
/// opaque trace of how the draw was produced.
struct DrawResult {
    TapeVar log_r;
    std::vector<Atom> atoms;
    std::any trace;
};

/// An executable estimator-coupling pair. Sampling is split into a shared
/// part omega and a per-replicate part nu given omega, so replicate() can
/// share omega between its copies. `particle` numbers the replicate copy and
/// keys its random draws.
class CouplingPair {
  public:
    using OmegaSampler = std::function<std::any(Randomness&)>;
    using NuSampler =
        std::function<DrawResult(const std::any& omega, Randomness&, std::uint64_t particle)>;

    CouplingPair(OmegaSampler omega, NuSampler nu, std::string description);

    DrawResult draw(Randomness& rng) const;
    std::any draw_omega(Randomness& rng) const { return omega_(rng); }
    DrawResult draw_nu(const std::any& omega, Randomness& rng, std::uint64_t particle) const {
        return nu_(omega, rng, particle);
    }
    const std::string& description() const { return description_; }

  private:
    OmegaSampler omega_;
    NuSampler nu_;
    std::string description_;
};

/// A proposal over the initial space: draw for replicate `particle`, and log density.
struct PointProposal {
    std::function<TapeVar(Randomness&, std::uint64_t particle)> sample;
    std::function<TapeVar(const TapeVar& x)> log_density;
};

/// Draw x ~ r, log R = log gamma(x) - log r(x), coupling = delta at x.
CouplingPair basic_pair(std::function<TapeVar(const TapeVar&)> log_gamma, PointProposal r,
                        std::string name = "basic");

/// n copies of the nu-part sharing one omega; log R = logsumexp(log R_i) - log n
/// and the coupling is the union of atoms reweighted by R_i.
CouplingPair replicate(const CouplingPair& p, std::size_t n);

/// Extension of the target from gamma(x) to gamma'(x, x') with proposal r(x' | x).
/// log_ratio returns log gamma'(x, x') - log gamma(x).
struct Extension {
    std::uint64_t step = 0;
    std::function<TapeVar(const TapeVar& atom, Randomness&, std::uint64_t particle)> propose;
    std::function<TapeVar(const TapeVar& atom, const TapeVar& x_new)> log_proposal;
    std::function<TapeVar(const TapeVar& atom, const TapeVar& x_new)> log_ratio;
};

/// What extend_target / change_target record in DrawResult::trace.
struct ExtensionTrace {
    std::shared_ptr<const DrawResult> previous;
    std::size_t selected = 0;
    TapeVar x_new;
    bool drop_old = false;
};

/// Select an atom x from p's coupling (key (step, particle, Ancestor)), draw
/// x' ~ r(. | x), log R = log R_0 + log_ratio - log r. The coupling is the atom
/// (x, x') stacked row-wise.
CouplingPair extend_target(const CouplingPair& p, Extension ext);

/// As extend_target, but the coupling keeps only x'.
CouplingPair change_target(const CouplingPair& p, Extension ext);

/// One value of the marginalized auxiliary variable: its conditional log
/// probability given the rest of omega, and the draw it would have produced.
struct Alternative {
    TapeVar log_weight;
    DrawResult result;
};
using AuxSelector = std::function<std::vector<Alternative>(const DrawResult&)>;

/// log R = logsumexp_k(log w_k + log R_k); the coupling is the R-weighted
/// mixture of the alternatives' couplings (equal atoms merged).
CouplingPair marginalize(const CouplingPair& p, AuxSelector selector, std::string aux_name);

/// Selector for the atom chosen inside an extend/change_target draw: its
/// conditional distribution given x' is proportional to abar_j r(x' | x_j).
AuxSelector ancestor_selector(const Extension& ext);

/// SMC and MPF (biased sampling path) built from the combinators for a given
/// model and proposal.
CouplingPair derive_smc(const StateSpaceModel& model, const Proposal& proposal,
                        const Dataset& data, std::size_t n);
CouplingPair derive_mpf(const StateSpaceModel& model, const Proposal& proposal,
                        const Dataset& data, std::size_t n);

}  // namespace smcvi
