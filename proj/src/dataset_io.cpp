#include "smcvi/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace smcvi {

std::filesystem::path metadata_path(const std::filesystem::path& csv) {
    return std::filesystem::path(csv.string() + ".meta.json");
}

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& csv) {
    std::ofstream out(csv);
    if (!out) {
        throw std::runtime_error("cannot write " + csv.string());
    }
    out << "t";
    for (std::size_t k = 0; k < data.obs_dim(); ++k) {
        out << ",y" << (k + 1);
    }
    out << "\n";
    for (std::size_t t = 0; t < data.steps(); ++t) {
        out << (t + 1);
        for (double v : data.y[t].values()) {
            out << "," << format_double(v);
        }
        out << "\n";
    }
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : data.metadata) {
        meta[k] = v;
    }
    std::ofstream m(metadata_path(csv));
    if (!m) {
        throw std::runtime_error("cannot write " + metadata_path(csv).string());
    }
    m << meta.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) {
        throw std::runtime_error("cannot read " + csv.string());
    }
    Dataset data;
    std::string line;
    if (!std::getline(in, line) || line.rfind("t", 0) != 0) {
        throw std::runtime_error(csv.string() + ": missing header");
    }
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        if (row.size() != columns) {
            throw std::runtime_error(csv.string() + ": ragged row " + line);
        }
        data.y.push_back(Tensor::row(std::span<const double>(row)));
    }
    const auto meta_file = metadata_path(csv);
    if (std::filesystem::exists(meta_file)) {
        std::ifstream m(meta_file);
        const auto meta = nlohmann::ordered_json::parse(m);
        for (const auto& [k, v] : meta.items()) {
            data.metadata.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
        }
    }
    return data;
}

}  // namespace smcvi
