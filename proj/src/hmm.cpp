#include "smcvi/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smcvi/error.hpp"

namespace smcvi {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
    double total = 0.0;
    for (double v : p) {
        require(v >= 0.0, std::string(what) + " has a negative probability");
        total += v;
    }
    require(std::abs(total - 1.0) < 1e-12, std::string(what) + " does not sum to one");
}

double log_or_neg_inf(double p) {
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

double log_sum_exp(std::span<const double> v) {
    const double top = *std::max_element(v.begin(), v.end());
    if (std::isinf(top) && top < 0) {
        return top;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - top);
    }
    return top + std::log(s);
}

Tensor log_table(std::span<const std::vector<double>> rows) {
    Tensor out(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            out(i, k) = log_or_neg_inf(rows[i][k]);
        }
    }
    return out;
}

Tensor log_row(std::span<const double> p) {
    Tensor out(1, p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        out[k] = log_or_neg_inf(p[k]);
    }
    return out;
}

}  // namespace

void DiscreteHmm::validate() const {
    require(!initial.empty(), "HMM needs at least one state");
    check_distribution(initial, "initial distribution");
    require(transition.size() == states() && emission.size() == states(),
            "HMM tables must have one row per state");
    for (const auto& row : transition) {
        require(row.size() == states(), "transition rows must have K entries");
        check_distribution(row, "transition row");
    }
    for (const auto& row : emission) {
        require(row.size() == symbols(), "emission rows must have M entries");
        check_distribution(row, "emission row");
    }
}

std::vector<double> hmm_forward_joint(const DiscreteHmm& h, std::span<const std::size_t> symbols) {
    h.validate();
    const std::size_t k = h.states();
    std::vector<double> alpha(k), next(k), terms(k);
    for (std::size_t t = 0; t < symbols.size(); ++t) {
        require(symbols[t] < h.symbols(), "observation symbol out of range");
        for (std::size_t s = 0; s < k; ++s) {
            double prior;
            if (t == 0) {
                prior = log_or_neg_inf(h.initial[s]);
            } else {
                for (std::size_t r = 0; r < k; ++r) {
                    terms[r] = alpha[r] + log_or_neg_inf(h.transition[r][s]);
                }
                prior = log_sum_exp(terms);
            }
            next[s] = prior + log_or_neg_inf(h.emission[s][symbols[t]]);
        }
        alpha.swap(next);
    }
    return alpha;
}

double hmm_forward(const DiscreteHmm& h, std::span<const std::size_t> symbols) {
    return log_sum_exp(hmm_forward_joint(h, symbols));
}

Dataset hmm_dataset(std::span<const std::size_t> symbols) {
    Dataset d;
    for (std::size_t s : symbols) {
        d.y.push_back(Tensor::scalar(static_cast<double>(s)));
    }
    return d;
}

HmmModel::HmmModel(DiscreteHmm h) : h_(std::move(h)) {
    h_.validate();
    log_trans_ = log_table(h_.transition);
}

std::unique_ptr<ConditionalBatch> HmmModel::initial() const {
    return std::make_unique<CategoricalBatch>(constant(log_row(h_.initial)));
}

std::unique_ptr<ConditionalBatch> HmmModel::transition(const TapeVar& prev) const {
    const Tensor& x = prev.value();
    require(x.cols() == 1, "discrete states are single columns");
    Tensor lp(x.rows(), h_.states());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto s = static_cast<std::size_t>(x(i, 0));
        require(s < h_.states(), "discrete state out of range");
        std::copy(log_trans_.row_span(s).begin(), log_trans_.row_span(s).end(),
                  lp.row_span(i).begin());
    }
    return std::make_unique<CategoricalBatch>(constant(std::move(lp)));
}

TapeVar HmmModel::log_observation(const TapeVar& x, const Tensor& y) const {
    const auto symbol = static_cast<std::size_t>(y.item());
    require(symbol < h_.symbols(), "observation symbol out of range");
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        const auto s = static_cast<std::size_t>(xv(i, 0));
        require(s < h_.states(), "discrete state out of range");
        out(i, 0) = log_or_neg_inf(h_.emission[s][symbol]);
    }
    return constant(std::move(out));
}

Tensor HmmModel::sample_observation(const Tensor& x, Randomness& rng, std::uint64_t step) const {
    const auto s = static_cast<std::size_t>(x.item());
    return Tensor::scalar(static_cast<double>(
        rng.categorical(h_.emission[s], DrawKey{step, 0, Purpose::Observation})));
}

HmmProposal::HmmProposal(DiscreteProposalTables tables) : tables_(std::move(tables)) {
    check_distribution(tables_.first, "proposal r_1");
    check_distribution(tables_.independent, "independent proposal");
    for (const auto& row : tables_.transition) {
        check_distribution(row, "proposal transition row");
    }
}

std::unique_ptr<ConditionalBatch> HmmProposal::conditionals(std::size_t, const TapeVar* prev,
                                                            const Tensor&) const {
    if (prev == nullptr) {
        return std::make_unique<CategoricalBatch>(constant(log_row(tables_.first)));
    }
    const Tensor& x = prev->value();
    const Tensor table = log_table(tables_.transition);
    Tensor lp(x.rows(), table.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto s = static_cast<std::size_t>(x(i, 0));
        require(s < table.rows(), "discrete state out of range");
        std::copy(table.row_span(s).begin(), table.row_span(s).end(), lp.row_span(i).begin());
    }
    return std::make_unique<CategoricalBatch>(constant(std::move(lp)));
}

std::unique_ptr<ConditionalBatch> HmmProposal::independent(std::size_t, const Tensor&) const {
    return std::make_unique<CategoricalBatch>(constant(log_row(tables_.independent)));
}

DiscreteHmm reference_hmm() {
    return DiscreteHmm{{0.5, 0.5}, {{0.9, 0.1}, {0.1, 0.9}}, {{0.8, 0.2}, {0.3, 0.7}}};
}

DiscreteProposalTables reference_hmm_proposal() {
    return DiscreteProposalTables{{0.3, 0.7}, {{0.6, 0.4}, {0.2, 0.8}}, {0.4, 0.6}};
}

}  // namespace smcvi
