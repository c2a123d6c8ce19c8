#include "cobt/demo.hpp"
#include "cobt/error.hpp"
#include "cobt/json_io.hpp"
#include "cobt/pose.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace cobt {
namespace {

TEST(Pose, DistanceExamples) {
  EXPECT_DOUBLE_EQ(pose_distance(Pose7(0, 0, 0), Pose7(0.03, 0.04, 0)), 0.05);
  EXPECT_DOUBLE_EQ(pose_distance(Pose7(0.2, 0.1, 0.3), Pose7(0.2, 0.1, 0.3)), 0.0);
  EXPECT_DOUBLE_EQ(pose_distance(Pose7(1, 0, 0), Pose7(0, 0, 0)), 1.0);
}

TEST(Pose, DistanceIgnoresOrientationAndIsSymmetric) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Pose7 a(u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng));
    const Pose7 b(u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng));
    const double d = pose_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_DOUBLE_EQ(d, pose_distance(b, a));
    EXPECT_DOUBLE_EQ(d, (a.position - b.position).norm());
    EXPECT_EQ(pose_distance(a, Pose7(a.position, b.orientation)), 0.0);
  }
}

TEST(Pose, QuaternionNormalizationIsIdempotentAndCanonical) {
  const Eigen::Quaterniond q(-2.0, 0.4, -1.0, 0.2);
  const Eigen::Quaterniond n = quat_normalize(q);
  EXPECT_NEAR(n.norm(), 1.0, 1e-15);
  EXPECT_TRUE(quat_normalize(n).coeffs().isApprox(n.coeffs(), 1e-15));
  const Pose7 p(Eigen::Vector3d::Zero(), q);
  EXPECT_GE(p.orientation.w(), 0.0);
  EXPECT_THROW(quat_normalize(Eigen::Quaterniond(0, 0, 0, 0)), ValidationError);
}

TEST(Pose, ComposeInverseRoundTrip) {
  const Pose7 a(Eigen::Vector3d(0.3, -0.2, 0.1),
                Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized())));
  const Pose7 b(Eigen::Vector3d(-0.1, 0.5, 0.2),
                Eigen::Quaterniond(Eigen::AngleAxisd(-1.2, Eigen::Vector3d::UnitZ())));
  const Pose7 r = a.inverse().compose(a.compose(b));
  EXPECT_LT((r.position - b.position).norm(), 1e-12);
  EXPECT_LT(angular_distance(r.orientation, b.orientation), 1e-9);
}

TEST(Pose, LogExpRoundTrip) {
  const Eigen::Vector3d w(0.3, -0.8, 1.1);
  EXPECT_LT((quat_log(quat_exp(w)) - w).norm(), 1e-12);
  EXPECT_NEAR(angular_distance(Eigen::Quaterniond::Identity(), quat_exp(w)), w.norm(), 1e-12);
}

TEST(Pose, JsonIsScalarFirst) {
  const Pose7 p(1, 2, 3, 0, 1, 0, 0);
  const auto j = pose_to_json(p);
  ASSERT_EQ(j.size(), 7u);
  EXPECT_EQ(j[4].get<double>(), 1.0);
  EXPECT_THROW(pose_from_json(nlohmann::json::array({1, 2, 3})), ValidationError);
}

std::string serialize(const Demonstration& d) {
  std::ostringstream out;
  write_demonstration(out, d);
  return out.str();
}

TEST(Demo, FileRoundTripIsByteStable) {
  const Demonstration& d = test::fixture_demo("drawer");
  const std::string once = serialize(d);
  std::istringstream in(once);
  const Demonstration back = load_demonstration(in);
  EXPECT_EQ(serialize(back), once);
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(back.samples[17].ee, d.samples[17].ee);
  EXPECT_EQ(back.sample_rate_hz, d.sample_rate_hz);
}

TEST(Demo, HeaderIsRequired) {
  std::istringstream in(R"({"t":0,"ee":[0,0,0,1,0,0,0],"g":0,"objects":{}})" "\n");
  EXPECT_THROW(load_demonstration(in), ValidationError);
  std::istringstream empty("");
  EXPECT_THROW(load_demonstration(empty), ValidationError);
}

TEST(Demo, MalformedLineReportsLineNumber) {
  std::string text = serialize(test::fixture_demo("pnp"));
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  text.insert(third + 1, "{not json\n");
  std::istringstream in(text);
  try {
    load_demonstration(in);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    EXPECT_EQ(e.module(), "demo-model");
  }
}

Demonstration straight(std::size_t n) {
  Demonstration d;
  for (std::size_t i = 0; i < n; ++i) {
    d.samples.push_back({0.01 * static_cast<double>(i), Pose7(0.001 * static_cast<double>(i), 0, 0.2),
                         0.0, {{"cube", Pose7(0.5, 0, 0)}}});
  }
  return d;
}

TEST(Demo, ValidationRejectsBrokenRecordings) {
  EXPECT_NO_THROW(validate(straight(20)));
  EXPECT_THROW(validate(straight(5)), ValidationError);

  Demonstration time = straight(20);
  time.samples[8].t = time.samples[7].t;
  EXPECT_THROW(validate(time), ValidationError);

  Demonstration objects = straight(20);
  objects.samples[9].objects.emplace("tray", Pose7());
  EXPECT_THROW(validate(objects), ValidationError);

  Demonstration grip = straight(20);
  grip.samples[3].gripper = 1.5;
  EXPECT_THROW(validate(grip), ValidationError);

  Demonstration spacing = straight(20);
  for (std::size_t i = 10; i < 20; ++i) spacing.samples[i].t += 0.005;
  EXPECT_THROW(validate(spacing), ValidationError);
}

TEST(Demo, ObjectIdsComeFromTheFirstSample) {
  const Demonstration& d = test::fixture_demo("drawer");
  EXPECT_TRUE(d.has_object("handle"));
  EXPECT_TRUE(d.has_object("drawer_set"));
  EXPECT_FALSE(d.has_object("cube"));
}

}  // namespace
}  // namespace cobt
