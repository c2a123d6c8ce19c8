#pragma once

#include "cobt/pose.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace cobt {

nlohmann::json pose_to_json(const Pose7& p);
/// Accepts a 7-element array [x,y,z,qw,qx,qy,qz].
Pose7 pose_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path, const std::string& module);
/// Writes to `path.tmp` then renames over `path`.
void write_json_file_atomic(const std::string& path, const nlohmann::json& j);

}  // namespace cobt
