#pragma once

#include <filesystem>

#include "smcvi/ssm.hpp"

namespace smcvi {

/// Writes `t,y1,...,y{dy}` CSV at `csv` and the metadata as a JSON object at
/// `csv` + ".meta.json".
void write_dataset(const Dataset& data, const std::filesystem::path& csv);
Dataset read_dataset(const std::filesystem::path& csv);

std::filesystem::path metadata_path(const std::filesystem::path& csv);

}  // namespace smcvi
