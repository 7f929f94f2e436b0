#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "homoscale/flow.hpp"
#include "homoscale/homography.hpp"

namespace homoscale {

/// {"h": [9 row-major numbers]} in the h33=1 view when that view exists,
/// otherwise unit-Frobenius entries plus "normalization": "frobenius".
nlohmann::json homography_to_json(const Homography& h);
Homography homography_from_json(const nlohmann::json& j);

/// Binary flow file: magic "HFLO", u32le width and height, then row-major
/// interleaved (u, v) as f32le.
void write_flow(const std::filesystem::path& path, const HomographyFlow& f);
HomographyFlow read_flow(const std::filesystem::path& path);

/// Writes content to path via a temp file and an atomic rename.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace homoscale
