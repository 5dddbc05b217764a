#include "smcvi/params.hpp"

#include <fstream>

#include "json.hpp"
#include "smcvi/error.hpp"

namespace smcvi {

void ParameterSet::add(std::string name, Tensor value, bool trainable) {
    require(!contains(name), "duplicate parameter " + name);
    entries_.push_back({std::move(name), std::move(value), trainable});
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

const Tensor& ParameterSet::operator[](const std::string& name) const {
    const auto i = find(name);
    require(i.has_value(), "unknown parameter " + name);
    return entries_[*i].value;
}

Tensor& ParameterSet::at(const std::string& name) {
    const auto i = find(name);
    require(i.has_value(), "unknown parameter " + name);
    return entries_[*i].value;
}

void ParameterSet::set_trainable(const std::string& name, bool trainable) {
    const auto i = find(name);
    require(i.has_value(), "unknown parameter " + name);
    entries_[*i].trainable = trainable;
}

std::size_t ParameterSet::trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        n += e.trainable;
    }
    return n;
}

std::size_t ParameterSet::trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable) {
            n += e.value.size();
        }
    }
    return n;
}

BoundParams::BoundParams(const ParameterSet& params, Tape* tape) : params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = params.entry(i);
        vars_.push_back(tape != nullptr && e.trainable ? tape->variable(e.value)
                                                       : constant(e.value));
    }
}

const TapeVar& BoundParams::operator[](const std::string& name) const {
    const auto i = params_->find(name);
    require(i.has_value(), "unknown parameter " + name);
    return vars_[*i];
}

void save_params(const ParameterSet& params, const std::filesystem::path& path) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = params.entry(i);
        out[e.name] = {{"shape", {e.value.rows(), e.value.cols()}},
                       {"values", std::vector<double>(e.value.values().begin(),
                                                      e.value.values().end())},
                       {"trainable", e.trainable}};
    }
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    f << out.dump(1) << "\n";
}

void load_params(ParameterSet& params, const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot read " + path.string());
    }
    const nlohmann::json in = nlohmann::json::parse(f);
    for (const auto& [name, v] : in.items()) {
        const auto i = params.find(name);
        require(i.has_value(), "parameter file has unknown parameter " + name);
        Tensor& t = params.entry(*i).value;
        const auto shape = v.at("shape").get<std::vector<std::size_t>>();
        require(shape.size() == 2 && shape[0] == t.rows() && shape[1] == t.cols(),
                "shape mismatch for parameter " + name);
        const auto values = v.at("values").get<std::vector<double>>();
        require(values.size() == t.size(), "value count mismatch for parameter " + name);
        std::copy(values.begin(), values.end(), t.values().begin());
    }
}

}  // namespace smcvi
