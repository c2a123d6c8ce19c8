#include "cobt/demo.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace cobt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("demo-model", msg); }

}  // namespace

bool Demonstration::has_object(const ObjectId& id) const {
  return !samples.empty() && samples.front().objects.count(id) > 0;
}

std::vector<ObjectId> Demonstration::object_ids() const {
  std::vector<ObjectId> ids;
  if (samples.empty()) return ids;
  for (const auto& [id, pose] : samples.front().objects) ids.push_back(id);
  return ids;
}

void validate(const Demonstration& demo) {
  if (demo.samples.size() < kMinDemoSamples) {
    fail("demonstration too short: " + std::to_string(demo.samples.size()) + " samples (need >= " +
         std::to_string(kMinDemoSamples) + ")");
  }
  if (!(demo.sample_rate_hz > 0.0) || !std::isfinite(demo.sample_rate_hz)) {
    fail("invalid sample rate");
  }
  const auto& first = demo.samples.front();
  const double nominal = 1.0 / demo.sample_rate_hz;
  for (std::size_t i = 0; i < demo.samples.size(); ++i) {
    const auto& s = demo.samples[i];
    if (!std::isfinite(s.t)) fail("non-finite time at sample " + std::to_string(i));
    if (!(s.gripper >= 0.0 && s.gripper <= 1.0)) {
      fail("gripper out of [0,1] at sample " + std::to_string(i));
    }
    if (s.objects.size() != first.objects.size()) {
      fail("inconsistent object set at sample " + std::to_string(i));
    }
    for (const auto& [id, pose] : first.objects) {
      if (!s.objects.count(id)) fail("inconsistent object set at sample " + std::to_string(i));
    }
    if (i > 0) {
      const double dt = s.t - demo.samples[i - 1].t;
      if (!(dt > 0.0)) fail("non-monotonic time at sample " + std::to_string(i));
      if (std::abs(dt - nominal) > 0.2 * nominal) {
        fail("sample spacing outside +-20% of 1/rate at sample " + std::to_string(i));
      }
    }
  }
}

Demonstration load_demonstration(std::istream& in) {
  Demonstration demo;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail("malformed record at line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (!rec.is_object() || rec.value("format", "") != kDemoFormat) {
          fail("missing or unsupported header at line " + std::to_string(line_no));
        }
        demo.sample_rate_hz = rec.at("rate_hz").get<double>();
        if (rec.contains("meta")) {
          for (const auto& [k, v] : rec["meta"].items()) {
            demo.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
          }
        }
        have_header = true;
        continue;
      }
      demo.samples.push_back(demo_sample_from_json(rec));
    } catch (const ValidationError& e) {
      if (std::string(e.what()).find("line") != std::string::npos) throw;
      fail("malformed record at line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      fail("malformed record at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) fail("empty demonstration file");
  validate(demo);
  return demo;
}

Demonstration load_demonstration_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open demonstration file " + path);
  return load_demonstration(in);
}

json to_json(const DemoSample& s) {
  json objs = json::object();
  for (const auto& [id, p] : s.objects) objs[id] = pose_to_json(p);
  return {{"t", s.t}, {"ee", pose_to_json(s.ee)}, {"g", s.gripper}, {"objects", objs}};
}

DemoSample demo_sample_from_json(const json& j) {
  DemoSample s;
  s.t = j.at("t").get<double>();
  s.ee = pose_from_json(j.at("ee"));
  s.gripper = j.at("g").get<double>();
  for (const auto& [id, p] : j.at("objects").items()) s.objects[id] = pose_from_json(p);
  return s;
}

void write_demonstration(std::ostream& out, const Demonstration& demo) {
  json header = {{"format", kDemoFormat}, {"rate_hz", demo.sample_rate_hz}, {"meta", demo.meta}};
  out << header.dump() << '\n';
  for (const auto& s : demo.samples) out << to_json(s).dump() << '\n';
}

void write_demonstration_file(const std::string& path, const Demonstration& demo) {
  std::ofstream out(path);
  if (!out) fail("cannot write demonstration file " + path);
  write_demonstration(out, demo);
}

}  // namespace cobt
