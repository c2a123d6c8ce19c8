#include "cobt/json_io.hpp"

#include "cobt/error.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace cobt {

nlohmann::json pose_to_json(const Pose7& p) {
  const auto a = p.to_array();
  return nlohmann::json(std::vector<double>(a.begin(), a.end()));
}

Pose7 pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7) {
    throw ValidationError("demo-model", "pose must be a 7-element array");
  }
  std::array<double, 7> a{};
  for (std::size_t i = 0; i < 7; ++i) a[i] = j[i].get<double>();
  return Pose7::from_array(a);
}

nlohmann::json read_json_file(const std::string& path, const std::string& module) {
  std::ifstream in(path);
  if (!in) throw ValidationError(module, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(module, "malformed JSON in " + path + ": " + e.what());
  }
}

void write_json_file_atomic(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("io", "cannot write " + tmp);
    out << j.dump(1) << '\n';
    if (!out) throw ValidationError("io", "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace cobt
