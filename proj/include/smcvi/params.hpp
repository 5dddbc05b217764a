#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smcvi/autodiff.hpp"

namespace smcvi {

/// Named parameter tensors. Non-trainable entries are bound as constants.
class ParameterSet {
  public:
    struct Entry {
        std::string name;
        Tensor value;
        bool trainable = true;
    };

    void add(std::string name, Tensor value, bool trainable = true);
    std::optional<std::size_t> find(const std::string& name) const;
    bool contains(const std::string& name) const { return find(name).has_value(); }

    const Tensor& operator[](const std::string& name) const;
    Tensor& at(const std::string& name);
    void set_trainable(const std::string& name, bool trainable);

    std::size_t size() const noexcept { return entries_.size(); }
    const Entry& entry(std::size_t i) const { return entries_[i]; }
    Entry& entry(std::size_t i) { return entries_[i]; }
    std::size_t trainable_count() const;
    std::size_t trainable_scalars() const;

  private:
    std::vector<Entry> entries_;
};

/// A ParameterSet attached to one tape: trainable entries become tape
/// variables, the rest constants. With no tape everything is constant.
class BoundParams {
  public:
    BoundParams(const ParameterSet& params, Tape* tape);

    const TapeVar& operator[](const std::string& name) const;
    bool contains(const std::string& name) const { return params_->contains(name); }
    const TapeVar& var(std::size_t i) const { return vars_[i]; }
    std::size_t size() const noexcept { return vars_.size(); }
    const ParameterSet& params() const { return *params_; }

  private:
    const ParameterSet* params_;
    std::vector<TapeVar> vars_;
};

/// JSON object {name: {"shape": [r, c], "values": [...], "trainable": b}}.
void save_params(const ParameterSet& params, const std::filesystem::path& path);
/// Overwrites the values of every parameter present in the file. Unknown
/// names or shape mismatches are errors; parameters missing from the file
/// keep their values.
void load_params(ParameterSet& params, const std::filesystem::path& path);

}  // namespace smcvi
