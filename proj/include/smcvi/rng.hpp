#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace smcvi {

/// Philox4x32-10 block function: counter and key in, four 32-bit words out.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based random stream. Identical (seed, stream id) pairs replay the
/// same sequence; child() derives an independent stream id deterministically.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    RngStream child(std::uint64_t tag) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> block_{};
    int block_left_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

enum class Purpose : std::uint64_t {
    Ancestor = 1,
    Proposal = 2,
    Permutation = 3,
    Latent = 4,
    Observation = 5,
};

/// Names one draw site: (time step, particle, purpose, index).
struct DrawKey {
    std::uint64_t step = 0;
    std::uint64_t particle = 0;
    Purpose purpose = Purpose::Proposal;
    std::uint64_t index = 0;
};

/// Source of the random choices consumed by samplers and filters. Sampling
/// implementations draw from per-key streams; the enumeration implementation
/// branches over every categorical outcome instead.
class Randomness {
  public:
    virtual ~Randomness() = default;

    virtual std::size_t categorical(std::span<const double> weights, const DrawKey& key) = 0;
    virtual void normals(const DrawKey& key, std::span<double> out) = 0;
    /// out[i] = categorical(weights, key with particle = i). Sampling
    /// implementations share one cumulative table across the draws.
    virtual void categorical_many(std::span<const double> weights, DrawKey key,
                                  std::span<std::size_t> out);
    /// Called by rejection samplers when a proposal is discarded.
    virtual void reject() {}
};

/// Randomness backed by one RngStream per DrawKey, so a draw depends only on its
/// key and not on the order in which draws happen.
class StreamRandomness final : public Randomness {
  public:
    explicit StreamRandomness(RngStream root) : root_(root) {}
    StreamRandomness(std::uint64_t seed, std::uint64_t run) : root_(RngStream(seed).child(run)) {}

    std::size_t categorical(std::span<const double> weights, const DrawKey& key) override;
    void normals(const DrawKey& key, std::span<double> out) override;
    void categorical_many(std::span<const double> weights, DrawKey key,
                          std::span<std::size_t> out) override;

    RngStream stream_for(const DrawKey& key) const;

  private:
    RngStream root_;
};

/// Thrown through an enumerated program when a rejection sampler discards a path.
struct PathRejected {};

/// Randomness that replays a prefix of categorical choices and extends it with
/// first options; used to walk every path of a finite-support program.
class ReplayRandomness final : public Randomness {
  public:
    std::size_t categorical(std::span<const double> weights, const DrawKey& key) override;
    void normals(const DrawKey& key, std::span<double> out) override;
    void reject() override { throw PathRejected{}; }

    void begin_path();
    /// Moves to the next unexplored path; false once every path has been visited.
    bool advance();
    double path_probability() const noexcept { return probability_; }

  private:
    struct Choice {
        std::vector<std::size_t> options;
        std::vector<double> probabilities;
        std::size_t position = 0;
    };
    std::vector<Choice> stack_;
    std::size_t depth_ = 0;
    double probability_ = 1.0;
};

class EnumerationLimitExceeded : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxEnumeratedPaths = 1'000'000;

template <class Result>
struct WeightedOutcome {
    double probability;
    Result result;
};

template <class Result>
struct Enumeration {
    std::vector<WeightedOutcome<Result>> outcomes;
    /// Probability mass of paths discarded by rejection samplers.
    double rejected_mass = 0.0;

    /// Expectation of f(result) conditional on acceptance.
    template <class F>
    double expectation(F&& f) const {
        double total = 0.0;
        for (const auto& o : outcomes) {
            total += o.probability * f(o.result);
        }
        return total / (1.0 - rejected_mass);
    }
};

/// Runs `program(Randomness&)` once for every path of categorical choices.
/// Programs must not draw continuous values. Fails loudly beyond `max_paths`.
template <class Program>
auto enumerate_paths(Program&& program, std::size_t max_paths = kMaxEnumeratedPaths) {
    using Result = decltype(program(std::declval<Randomness&>()));
    Enumeration<Result> out;
    ReplayRandomness replay;
    std::size_t paths = 0;
    do {
        if (++paths > max_paths) {
            throw EnumerationLimitExceeded("enumeration exceeded " + std::to_string(max_paths) +
                                           " paths");
        }
        replay.begin_path();
        try {
            Result r = program(static_cast<Randomness&>(replay));
            out.outcomes.push_back({replay.path_probability(), std::move(r)});
        } catch (const PathRejected&) {
            out.rejected_mass += replay.path_probability();
        }
    } while (replay.advance());
    return out;
}

}  // namespace smcvi
