#include "smcvi/rng.hpp"

#include <cmath>
#include <numbers>

#include "smcvi/distributions.hpp"
#include "smcvi/error.hpp"

namespace smcvi {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

RngStream RngStream::child(std::uint64_t tag) const {
    return RngStream(seed_, splitmix64(stream_ ^ splitmix64(tag)));
}

std::uint64_t RngStream::next_u64() {
    if (block_left_ == 0) {
        const auto words = philox4x32(
            {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
             static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
            {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
        ++counter_;
        block_[0] = (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
        block_[1] = (static_cast<std::uint64_t>(words[3]) << 32) | words[2];
        block_left_ = 2;
    }
    return block_[2 - block_left_--];
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

RngStream StreamRandomness::stream_for(const DrawKey& key) const {
    return root_.child(key.step)
        .child(key.particle)
        .child(static_cast<std::uint64_t>(key.purpose))
        .child(key.index);
}

std::size_t StreamRandomness::categorical(std::span<const double> weights, const DrawKey& key) {
    RngStream s = stream_for(key);
    return categorical_sample(weights, s.uniform());
}

void Randomness::categorical_many(std::span<const double> weights, DrawKey key,
                                  std::span<std::size_t> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        key.particle = i;
        out[i] = categorical(weights, key);
    }
}

void StreamRandomness::categorical_many(std::span<const double> weights, DrawKey key,
                                        std::span<std::size_t> out) {
    const CategoricalTable table(weights);
    for (std::size_t i = 0; i < out.size(); ++i) {
        key.particle = i;
        out[i] = table(stream_for(key).uniform());
    }
}

void StreamRandomness::normals(const DrawKey& key, std::span<double> out) {
    RngStream s = stream_for(key);
    for (double& v : out) {
        v = s.normal();
    }
}

std::size_t ReplayRandomness::categorical(std::span<const double> weights, const DrawKey&) {
    double total = 0.0;
    for (double w : weights) {
        require(w >= 0.0, "negative categorical weight");
        total += w;
    }
    if (!(total > 0.0)) {
        throw DegeneracyError("categorical weights are all zero", 0);
    }
    if (depth_ == stack_.size()) {
        Choice c;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] > 0.0) {
                c.options.push_back(i);
                c.probabilities.push_back(weights[i] / total);
            }
        }
        stack_.push_back(std::move(c));
    }
    const Choice& c = stack_[depth_++];
    probability_ *= c.probabilities[c.position];
    return c.options[c.position];
}

void ReplayRandomness::normals(const DrawKey&, std::span<double>) {
    throw ContractViolation("continuous draw requested while enumerating discrete paths");
}

void ReplayRandomness::begin_path() {
    depth_ = 0;
    probability_ = 1.0;
}

bool ReplayRandomness::advance() {
    stack_.resize(depth_);
    while (!stack_.empty() && stack_.back().position + 1 == stack_.back().options.size()) {
        stack_.pop_back();
    }
    if (stack_.empty()) {
        return false;
    }
    ++stack_.back().position;
    return true;
}

}  // namespace smcvi
