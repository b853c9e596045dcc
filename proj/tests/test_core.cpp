#include <random>

#include "doctest.h"
#include "nvloc/constants.hpp"
#include "nvloc/errors.hpp"
#include "nvloc/frames.hpp"
#include "oracles.hpp"

using namespace nvloc;

TEST_CASE("rotate between identical frames is the identity") {
  FrameRegistry reg;
  const Vector3 v(1, 2, 3, "nv_090");
  const Vector3 w = reg.rotate(v, "nv_090", "nv_090");
  CHECK((w.components() - v.components()).norm() == doctest::Approx(0.0));
  CHECK(w.frame() == "nv_090");
}

TEST_CASE("lab z seen from the target NV has z component 1/sqrt(3)") {
  FrameRegistry reg;
  const Vector3 z = reg.rotate(Vector3(0, 0, 1, kLabFrame), kLabFrame, kTargetFrame);
  CHECK(z[2] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(z.norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::acos(z[2]) * 180 / oracle::pi == doctest::Approx(54.7356).epsilon(1e-6));
}

TEST_CASE("target frame matches the crystal axes") {
  const Eigen::Matrix3d R = FrameRegistry().at(kTargetFrame).rotation_to_lab;
  CHECK((R - oracle::target_rotation()).norm() < 1e-14);
}

TEST_CASE("the four NV axes are distinct <111> directions") {
  FrameRegistry reg;
  const std::vector<std::string> nv{"nv_000", "nv_090", "nv_180", "nv_270"};
  for (std::size_t i = 0; i < nv.size(); ++i) {
    for (std::size_t j = i + 1; j < nv.size(); ++j) {
      const double d = reg.at(nv[i]).z_axis_in_lab().dot(reg.at(nv[j]).z_axis_in_lab());
      CHECK(std::abs(d) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    }
  }
  // nv_090 sits at lab azimuth 90 deg
  const Eigen::Vector3d a = reg.at("nv_090").z_axis_in_lab();
  CHECK(std::atan2(a[1], a[0]) == doctest::Approx(oracle::pi / 2));
}

TEST_CASE("round trips and norms over random vectors") {
  FrameRegistry reg;
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n;
  for (const auto& from : reg.names()) {
    for (const auto& to : reg.names()) {
      for (int k = 0; k < 20; ++k) {
        const Vector3 v(n(gen), n(gen), n(gen), from);
        const Vector3 w = reg.rotate(v, from, to);
        CHECK(w.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
        const Vector3 back = reg.rotate(w, to, from);
        CHECK((back.components() - v.components()).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("mixed-frame arithmetic and unknown frames are rejected") {
  const Vector3 a(1, 0, 0, kLabFrame), b(0, 1, 0, kTargetFrame);
  CHECK_THROWS_AS((void)(a + b), InputError);
  CHECK_THROWS_AS((void)a.dot(b), InputError);
  FrameRegistry reg;
  CHECK_THROWS_AS((void)reg.at("nv_045"), InputError);
  CHECK_THROWS_AS((void)reg.rotate(a, "nv_000", kLabFrame), InputError);
}

TEST_CASE("registry rejects improper rotations") {
  FrameRegistry reg;
  Frame bad{"mirror", Eigen::Matrix3d::Identity()};
  bad.rotation_to_lab(2, 2) = -1.0;
  CHECK_THROWS_AS(reg.add(bad), DomainError);
  Frame skew{"skew", Eigen::Matrix3d::Identity()};
  skew.rotation_to_lab(0, 1) = 1e-6;
  CHECK_THROWS_AS(reg.add(skew), DomainError);
}

TEST_CASE("registry json round trip") {
  FrameRegistry reg;
  reg.add_nv("nv_aux", 1.234);
  const FrameRegistry back = FrameRegistry::from_json(reg.to_json());
  CHECK(back.names() == reg.names());
  for (const auto& n : reg.names()) {
    CHECK((back.at(n).rotation_to_lab - reg.at(n).rotation_to_lab).norm() < 1e-12);
  }
  const auto j = nlohmann::json::parse(R"([{"name":"lab","rotation_to_lab":[[1,0,0],[0,1,0],[0,0,1]]},{"name":"nv_a","azimuth_deg":90}])");
  const FrameRegistry r2 = FrameRegistry::from_json(j);
  CHECK(r2.contains("nv_a"));
  CHECK((r2.at("nv_a").rotation_to_lab - FrameRegistry().at("nv_090").rotation_to_lab).norm() < 1e-12);
}

TEST_CASE("constants") {
  PhysicalConstants c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.dipolar_constant() == doctest::Approx(oracle::dipolar_k()).epsilon(1e-14));
  CHECK_THROWS_AS(PhysicalConstants::with_gamma_n(10.5e6), DomainError);
  CHECK_THROWS_AS(PhysicalConstants::with_gamma_n(10.9e6), DomainError);
  CHECK(PhysicalConstants::with_gamma_n(10.7e6).gamma_n == 10.7e6);
  c.D = 2.88e9;
  CHECK_THROWS_AS(c.validate(), DomainError);
  const PhysicalConstants back = constants_from_json(constants_to_json(PhysicalConstants::with_gamma_n(10.65e6)));
  CHECK(back.gamma_n == 10.65e6);
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_two_pi(-0.1) == doctest::Approx(2 * oracle::pi - 0.1));
  CHECK(wrap_two_pi(2 * oracle::pi) == doctest::Approx(0.0));
  CHECK(wrap_pi(1.5 * oracle::pi) == doctest::Approx(-0.5 * oracle::pi));
  CHECK(wrap_two_pi(7.0) < 2 * oracle::pi);
}
