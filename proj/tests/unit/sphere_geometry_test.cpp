#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "omniocc/sphere_geometry.hpp"

namespace omniocc {
namespace {

constexpr double kPi = std::numbers::pi;
const FrameDims kDims{512, 256};

TEST(FrameDims, RequiresTwoToOneAspect) {
  EXPECT_NO_THROW((FrameDims{64, 32}.validate()));
  EXPECT_THROW((FrameDims{64, 64}.validate()), std::invalid_argument);
  EXPECT_THROW((FrameDims{0, 0}.validate()), std::invalid_argument);
}

TEST(SphericalFrame, RejectsBadAspect) {
  EXPECT_THROW(SphericalFrame(RgbImage(10, 10)), std::invalid_argument);
  const SphericalFrame f(RgbImage(20, 10), 7);
  EXPECT_EQ(f.timestamp_index(), 7);
  EXPECT_EQ(f.dims(), (FrameDims{20, 10}));
}

TEST(CameraPose, RejectsNonUnitQuaternion) {
  EXPECT_THROW(CameraPose(0, Eigen::Vector3d::Zero(), Eigen::Quaterniond(1.0, 0.1, 0.0, 0.0)),
               std::invalid_argument);
  EXPECT_NO_THROW(CameraPose(0, Eigen::Vector3d::Zero(), Eigen::Quaterniond::Identity()));
}

TEST(CameraPose, WorldAndCameraTransformsAreInverse) {
  const Eigen::Quaterniond q(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
  const CameraPose pose(3, {1, 2, 3}, q);
  const Eigen::Vector3d d = Eigen::Vector3d(0.3, -0.4, 0.5).normalized();
  EXPECT_NEAR((pose.to_camera(pose.to_world(d)) - d).norm(), 0.0, 1e-15);
  EXPECT_NEAR((pose.to_world(d) - q * d).norm(), 0.0, 1e-15);
}

TEST(PixelToDirection, CenterPixelLiesOnEquator) {
  const Eigen::Vector3d d = pixel_to_direction({kDims.width / 2.0, kDims.height / 2.0}, kDims);
  EXPECT_NEAR(d.norm(), 1.0, 1e-15);
  EXPECT_NEAR(direction_to_angles(d).theta, kPi / 2.0, 1e-12);
  EXPECT_NEAR(d.z(), 0.0, 1e-15);
}

TEST(PixelToDirection, AzimuthWrapsAtSeam) {
  const Eigen::Vector3d a = pixel_to_direction({0.0, kDims.height / 2.0}, kDims);
  const Eigen::Vector3d b = pixel_to_direction({static_cast<double>(kDims.width), kDims.height / 2.0}, kDims);
  EXPECT_NEAR((a - b).norm(), 0.0, 1e-12);
}

TEST(PixelToDirection, OutOfBoundsIsDomainError) {
  EXPECT_THROW(pixel_to_direction({-0.1, 10.0}, kDims), std::domain_error);
  EXPECT_THROW(pixel_to_direction({10.0, kDims.height + 0.1}, kDims), std::domain_error);
  EXPECT_THROW(pixel_to_direction({std::nan(""), 10.0}, kDims), std::domain_error);
}

TEST(DirectionToPixel, NorthPoleMapsToRowZeroColumnZero) {
  const Eigen::Vector2d p = direction_to_pixel(Eigen::Vector3d::UnitZ(), kDims);
  EXPECT_DOUBLE_EQ(p.y(), 0.0);
  EXPECT_DOUBLE_EQ(p.x(), 0.0);
}

TEST(DirectionToPixel, EquatorAtPiMapsToCenterColumn) {
  const Eigen::Vector2d p = direction_to_pixel({-1.0, 0.0, 0.0}, kDims);
  EXPECT_NEAR(p.x(), kDims.width / 2.0, 1e-9);
  EXPECT_NEAR(p.y(), kDims.height / 2.0, 1e-9);
}

TEST(DirectionToPixel, ZeroVectorIsDomainError) {
  EXPECT_THROW(direction_to_pixel(Eigen::Vector3d::Zero(), kDims), std::domain_error);
}

TEST(DirectionToPixel, RoundTripsRandomPixels) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(0.0, kDims.width);
  // Pole rows are excluded: azimuth is undefined there.
  std::uniform_real_distribution<double> uy(1.0, kDims.height - 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector2d p(ux(rng), uy(rng));
    const Eigen::Vector2d q = direction_to_pixel(pixel_to_direction(p, kDims), kDims);
    double dx = std::abs(q.x() - p.x());
    dx = std::min(dx, kDims.width - dx);
    worst = std::max({worst, dx, std::abs(q.y() - p.y())});
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(DirectionToPixel, RoundTripsDirectionsWithinNanoradian) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d d = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    const Eigen::Vector3d back = pixel_to_direction(direction_to_pixel(d, kDims), kDims);
    EXPECT_LT(angle_between(d, back), 1e-9);
  }
}

TEST(ParallaxAngle, ZeroAtDivergencePoint) {
  const AngularPoint div{1.2, 2.5};
  EXPECT_NEAR(parallax_angle(angles_to_pixel(div, kDims), div, kDims), 0.0, 1e-12);
}

TEST(ParallaxAngle, PiAtAntipode) {
  const AngularPoint div{kPi / 2.0, 0.5};
  const AngularPoint anti{kPi / 2.0, 0.5 + kPi};
  EXPECT_NEAR(parallax_angle(angles_to_pixel(anti, kDims), div, kDims), kPi, 1e-12);
}

TEST(ParallaxAngle, RightAngleForOrthogonalDirection) {
  const AngularPoint div{kPi / 2.0, 0.0};
  const Eigen::Vector2d p = angles_to_pixel({kPi / 2.0, kPi / 2.0}, kDims);
  const double oracle = std::acos(pixel_to_direction(p, kDims).dot(angles_to_direction(div)));
  EXPECT_NEAR(parallax_angle(p, div, kDims), kPi / 2.0, 1e-9);
  EXPECT_NEAR(oracle, kPi / 2.0, 1e-9);
}

TEST(ParallaxAngle, MatchesAcosOracleAndIsSymmetric) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(0.0, kDims.width);
  std::uniform_real_distribution<double> uy(0.0, kDims.height);
  int checked = 0;
  while (checked < 2000) {
    const Eigen::Vector2d p(ux(rng), uy(rng));
    const Eigen::Vector2d q(ux(rng), uy(rng));
    const Eigen::Vector3d a = pixel_to_direction(p, kDims);
    const Eigen::Vector3d b = pixel_to_direction(q, kDims);
    const double oracle = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
    // acos loses precision near 0 and pi; the oracle is only trusted away from there.
    if (oracle < 0.01 || oracle > kPi - 0.01) continue;
    const AngularPoint qa = pixel_to_angles(q, kDims);
    const AngularPoint pa = pixel_to_angles(p, kDims);
    EXPECT_NEAR(parallax_angle(p, qa, kDims), oracle, 1e-9);
    EXPECT_NEAR(parallax_angle(p, qa, kDims), parallax_angle(q, pa, kDims), 1e-12);
    ++checked;
  }
}

TEST(WrapColumn, MapsIntoRange) {
  EXPECT_DOUBLE_EQ(wrap_column(-1.0, 10.0), 9.0);
  EXPECT_DOUBLE_EQ(wrap_column(10.0, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(wrap_column(23.5, 10.0), 3.5);
  EXPECT_LT(wrap_column(-1e-17, 10.0), 10.0);
}

TEST(PoleRows, AreFlagged) {
  EXPECT_TRUE(is_pole_row(0, kDims));
  EXPECT_TRUE(is_pole_row(kDims.height - 1, kDims));
  EXPECT_FALSE(is_pole_row(1, kDims));
}

}  // namespace
}  // namespace omniocc
