#pragma once

#include "cobt/pose.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cobt {

struct DemoSample {
  double t = 0.0;
  Pose7 ee;
  double gripper = 0.0;  // 0 = fully open, 1 = fully closed
  ObjectPoses objects;
};

/// One recorded demonstration. Immutable after validation.
struct Demonstration {
  std::vector<DemoSample> samples;
  double sample_rate_hz = 100.0;
  std::map<std::string, std::string> meta;

  std::size_t size() const { return samples.size(); }
  bool has_object(const ObjectId& id) const;
  std::vector<ObjectId> object_ids() const;
};

inline constexpr std::size_t kMinDemoSamples = 10;
inline constexpr double kGripperClosedThreshold = 0.5;
inline constexpr const char* kDemoFormat = "cobt-demo/1";

/// Checks every Demonstration invariant; throws ValidationError with the first
/// violation ("non-monotonic time", "inconsistent object set", ...).
void validate(const Demonstration& demo);

/// Reads the JSON-Lines recording (header line + one sample per line).
/// Errors carry the offending line number.
Demonstration load_demonstration(std::istream& in);
Demonstration load_demonstration_file(const std::string& path);

/// One sample record {"t","ee","g","objects"}.
nlohmann::json to_json(const DemoSample& s);
DemoSample demo_sample_from_json(const nlohmann::json& j);

void write_demonstration(std::ostream& out, const Demonstration& demo);
void write_demonstration_file(const std::string& path, const Demonstration& demo);

}  // namespace cobt
