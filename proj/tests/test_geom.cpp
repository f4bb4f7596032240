#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rhm/core/rng.hpp"
#include "rhm/geom/geom.hpp"

using namespace rhm;
using namespace rhm::geom;

namespace {

Eigen::Matrix3d random_rotation(core::Rng& rng, double max_angle = M_PI) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return matrix_from_axis_angle(axis * rng.uniform(0.0, max_angle));
}

RigidTransform random_pose(core::Rng& rng, double max_angle = M_PI,
                           double t_scale = 1.0) {
  RigidTransform pose;
  pose.rotation = random_rotation(rng, max_angle);
  pose.translation =
      Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * t_scale;
  return pose;
}

LandmarkSet apply_pose(const LandmarkSet& l, const RigidTransform& pose) {
  LandmarkSet out;
  out.points = (l.points * pose.rotation.transpose()).rowwise() +
               pose.translation.transpose();
  return out;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("canonical face: normalized, symmetric, valid rigid set") {
  const CanonicalFace face = build_canonical_face();
  CHECK(face.landmarks.points.colwise().mean().norm() < 1e-12);
  CHECK(face.landmarks.points.rowwise().norm().mean() == doctest::Approx(1.0).epsilon(1e-12));

  // Mirror pairs share y,z and negate x; the midline is exactly x = 0.
  const auto& p = face.landmarks.points;
  const int pairs[][2] = {{0, 16}, {1, 15}, {2, 14}, {3, 13},  {4, 12},  {5, 11},
                          {6, 10}, {7, 9},  {17, 26}, {18, 25}, {19, 24}, {20, 23},
                          {21, 22}, {31, 35}, {32, 34}, {36, 45}, {37, 44}, {38, 43},
                          {39, 42}, {40, 47}, {41, 46}, {48, 54}, {49, 53}, {50, 52},
                          {55, 59}, {56, 58}, {60, 64}, {61, 63}, {65, 67}};
  for (const auto& pr : pairs) {
    CHECK(p(pr[0], 0) == doctest::Approx(-p(pr[1], 0)).epsilon(1e-12));
    CHECK(p(pr[0], 1) == doctest::Approx(p(pr[1], 1)).epsilon(1e-12));
    CHECK(p(pr[0], 2) == doctest::Approx(p(pr[1], 2)).epsilon(1e-12));
  }
  for (int mid : {8, 27, 28, 29, 30, 33, 51, 57, 62, 66}) {
    CHECK(std::abs(p(mid, 0)) < 1e-12);
  }

  const auto idx = default_rigid_indices();
  CHECK(idx.size() == 27);
  CHECK(face.rigid_indices == idx);
  std::vector<int> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
  for (int i : idx) {
    CHECK(i >= 0);
    CHECK(i < 68);
  }
  CHECK(std::find(idx.begin(), idx.end(), 8) == idx.end());
}

TEST_CASE("axis-angle round-trip incl. 0 and pi") {
  auto check_roundtrip = [](const Eigen::Vector3d& r) {
    const Eigen::Matrix3d m = matrix_from_axis_angle(r);
    const Eigen::Matrix3d back = matrix_from_axis_angle(axis_angle_from_matrix(m));
    CHECK(geodesic_angle(m, back) < 1e-9);
  };
  check_roundtrip(Eigen::Vector3d::Zero());
  check_roundtrip(Eigen::Vector3d(1e-9, 0, 0));
  check_roundtrip(Eigen::Vector3d(0, 1e-12, 1e-12));
  check_roundtrip(Eigen::Vector3d(M_PI, 0, 0));
  check_roundtrip(Eigen::Vector3d(0, M_PI, 0));
  check_roundtrip(Eigen::Vector3d(0, 0, -M_PI));
  const Eigen::Vector3d diag = Eigen::Vector3d(1, 1, 1).normalized();
  check_roundtrip(diag * M_PI);
  check_roundtrip(Eigen::Vector3d(0.3, -0.8, 0.52).normalized() * M_PI);
  check_roundtrip(Eigen::Vector3d(0.3, -0.8, 0.52).normalized() * (M_PI - 1e-8));
  check_roundtrip(Eigen::Vector3d(0.3, -0.8, 0.52).normalized() * (M_PI - 1e-4));
  core::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    check_roundtrip(axis * rng.uniform(0.0, M_PI));
  }
  // Canonical form: angle in [0, pi], so a 1.5*pi turn comes back as 0.5*pi
  // about the opposite axis.
  const Eigen::Vector3d big(0, 0, 1.5 * M_PI);
  const Eigen::Vector3d r = axis_angle_from_matrix(matrix_from_axis_angle(big));
  CHECK(r.norm() == doctest::Approx(0.5 * M_PI).epsilon(1e-12));
  CHECK(r[2] == doctest::Approx(-0.5 * M_PI).epsilon(1e-12));
}

TEST_CASE("pose encode/decode round-trip") {
  core::Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform pose = random_pose(rng);
    const RigidTransform back = decode_pose(encode_pose(pose));
    CHECK(geodesic_angle(pose.rotation, back.rotation) < 1e-9);
    CHECK((pose.translation - back.translation).norm() < 1e-12);
  }
}

TEST_CASE("fit_rigid: exact recovery") {
  const CanonicalFace face = build_canonical_face();

  SUBCASE("source == target -> identity") {
    const RigidTransform f =
        fit_rigid(face.landmarks, face.landmarks, face.rigid_indices);
    CHECK(geodesic_angle(f.rotation, Eigen::Matrix3d::Identity()) < 1e-12);
    CHECK(f.translation.norm() < 1e-12);
  }

  SUBCASE("90 deg about z plus shift, recovered < 1e-9") {
    RigidTransform truth;
    truth.rotation = matrix_from_axis_angle({0, 0, M_PI / 2});
    truth.translation = {1, 0, 0};
    // fit maps source -> target, so build the source the fit must undo:
    // target = R*source + T  =>  source = R^-1 (target - T).
    LandmarkSet src;
    src.points = (face.landmarks.points.rowwise() - truth.translation.transpose()) *
                 truth.rotation;
    const RigidTransform f = fit_rigid(src, face.landmarks, face.rigid_indices);
    CHECK(geodesic_angle(f.rotation, truth.rotation) < 1e-9);
    CHECK((f.translation - truth.translation).norm() < 1e-9);
    // residual of the fit itself
    const LandmarkSet aligned = apply_pose(src, f);
    CHECK((aligned.points - face.landmarks.points).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("100 random transforms, rotation < 1e-6 rad, translation < 1e-9") {
    core::Rng rng(21);
    for (int i = 0; i < 100; ++i) {
      const RigidTransform truth = random_pose(rng, M_PI - 0.05, 2.0);
      LandmarkSet src;
      src.points =
          (face.landmarks.points.rowwise() - truth.translation.transpose()) *
          truth.rotation;
      const RigidTransform f = fit_rigid(src, face.landmarks, face.rigid_indices);
      CHECK(geodesic_angle(f.rotation, truth.rotation) < 1e-6);
      CHECK((f.translation - truth.translation).norm() < 1e-9);
    }
  }

  SUBCASE("noise sigma=0.01 -> rotation within 0.05 rad, 100 seeds") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
      core::Rng rng(1000 + seed);
      const RigidTransform truth = random_pose(rng, M_PI - 0.05, 1.0);
      LandmarkSet src;
      src.points =
          (face.landmarks.points.rowwise() - truth.translation.transpose()) *
          truth.rotation;
      for (int i = 0; i < kNumLandmarks; ++i) {
        for (int c = 0; c < 3; ++c) src.points(i, c) += rng.normal(0.0, 0.01);
      }
      const RigidTransform f = fit_rigid(src, face.landmarks, face.rigid_indices);
      CHECK(geodesic_angle(f.rotation, truth.rotation) < 0.05);
    }
  }
}

TEST_CASE("fit_rigid: degenerate configurations throw") {
  const CanonicalFace face = build_canonical_face();
  LandmarkSet flat;

  SUBCASE("coincident points") {
    flat.points.setOnes();
    CHECK_THROWS_AS(fit_rigid(flat, face.landmarks, face.rigid_indices),
                    std::invalid_argument);
  }
  SUBCASE("collinear points") {
    for (int i = 0; i < kNumLandmarks; ++i) {
      flat.points.row(i) << static_cast<double>(i), 2.0 * i, -1.0 * i;
    }
    CHECK_THROWS_AS(fit_rigid(flat, face.landmarks, face.rigid_indices),
                    std::invalid_argument);
  }
  SUBCASE("fewer than 3 indices") {
    CHECK_THROWS_AS(fit_rigid(face.landmarks, face.landmarks, {0, 1}),
                    std::invalid_argument);
  }
  SUBCASE("index out of range") {
    CHECK_THROWS_AS(fit_rigid(face.landmarks, face.landmarks, {0, 1, 68}),
                    std::invalid_argument);
  }
}

TEST_CASE("disentangle") {
  const CanonicalFace face = build_canonical_face();

  SUBCASE("canonical repeated -> identity poses, aligned == canonical") {
    const std::vector<LandmarkSet> frames(5, face.landmarks);
    const Disentangled d = disentangle(frames, face);
    CHECK(d.motion.poses.size() == 5);
    CHECK(d.aligned.size() == 5);
    for (size_t t = 0; t < 5; ++t) {
      CHECK(geodesic_angle(d.motion.poses[t].rotation,
                           Eigen::Matrix3d::Identity()) < 1e-9);
      CHECK(d.motion.poses[t].translation.norm() < 1e-9);
      CHECK((d.aligned[t].points - face.landmarks.points).cwiseAbs().maxCoeff() <
            1e-9);
    }
  }

  SUBCASE("fixed expression under 10 random motions -> aligned identical < 1e-6") {
    // Deform only points outside the rigid index set (mouth and chin tip).
    LandmarkSet expr = face.landmarks;
    expr.points(8, 1) -= 0.20;
    for (int i = 48; i < 68; ++i) {
      expr.points(i, 1) -= 0.12;
      expr.points(i, 2) += 0.03;
    }
    core::Rng rng(31);
    std::vector<LandmarkSet> frames;
    for (int t = 0; t < 10; ++t) {
      const RigidTransform pose = random_pose(rng, M_PI - 0.05, 1.5);
      LandmarkSet moved;
      moved.points = (expr.points.rowwise() - pose.translation.transpose()) *
                     pose.rotation;
      frames.push_back(moved);
    }
    const Disentangled d = disentangle(frames, face);
    for (size_t t = 0; t < frames.size(); ++t) {
      CHECK((d.aligned[t].points - expr.points).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  SUBCASE("jaw-only deformation -> poses stay identity") {
    std::vector<LandmarkSet> frames;
    for (int t = 0; t < 4; ++t) {
      LandmarkSet f = face.landmarks;
      const double open = 0.05 * t;
      f.points(8, 1) -= open;  // chin tip and lips are off the rigid set
      for (int i = 48; i < 68; ++i) f.points(i, 1) -= open * 0.6;
      frames.push_back(f);
    }
    const Disentangled d = disentangle(frames, face);
    for (const auto& pose : d.motion.poses) {
      CHECK(geodesic_angle(pose.rotation, Eigen::Matrix3d::Identity()) < 1e-6);
      CHECK(pose.translation.norm() < 1e-6);
    }
  }

  SUBCASE("empty input throws") {
    CHECK_THROWS_AS(disentangle({}, face), std::invalid_argument);
  }

  SUBCASE("degenerate frame error names the frame") {
    LandmarkSet bad;
    bad.points.setZero();
    std::vector<LandmarkSet> frames{face.landmarks, bad};
    try {
      disentangle(frames, face);
      CHECK(false);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    }
  }
}

TEST_CASE("repose_vertices") {
  const CanonicalFace face = build_canonical_face();
  const Eigen::MatrixX3d v = face.landmarks.points;
  core::Rng rng(41);

  SUBCASE("same pose -> identity") {
    const RigidTransform a = random_pose(rng);
    const Eigen::MatrixX3d out = repose_vertices(v, a, a);
    CHECK((out - v).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("src identity, dst (R,0) -> R^-1 V") {
    RigidTransform dst;
    dst.rotation = random_rotation(rng);
    const Eigen::MatrixX3d out = repose_vertices(v, RigidTransform{}, dst);
    const Eigen::MatrixX3d expect = v * dst.rotation;  // (R^-1 v^T)^T = v R
    CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("composition a->b->c equals a->c") {
    const RigidTransform a = random_pose(rng), b = random_pose(rng),
                         c = random_pose(rng);
    const Eigen::MatrixX3d two_hop = repose_vertices(repose_vertices(v, a, b), b, c);
    const Eigen::MatrixX3d direct = repose_vertices(v, a, c);
    CHECK((two_hop - direct).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("refit after repose recovers the destination pose") {
    for (int trial = 0; trial < 10; ++trial) {
      const RigidTransform a = random_pose(rng, M_PI - 0.05);
      const RigidTransform b = random_pose(rng, M_PI - 0.05);
      // Frame whose disentangled pose is a: canonical = R_a * frame + T_a.
      LandmarkSet frame_a;
      frame_a.points =
          (face.landmarks.points.rowwise() - a.translation.transpose()) *
          a.rotation;
      LandmarkSet frame_b;
      frame_b.points = repose_vertices(frame_a.points, a, b);
      const RigidTransform fit =
          fit_rigid(frame_b, face.landmarks, face.rigid_indices);
      CHECK(geodesic_angle(fit.rotation, b.rotation) < 1e-6);
      CHECK((fit.translation - b.translation).norm() < 1e-6);
    }
  }

  SUBCASE("non-finite input throws") {
    Eigen::MatrixX3d bad = v;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(repose_vertices(bad, RigidTransform{}, RigidTransform{}),
                    std::invalid_argument);
  }
}

TEST_CASE("select_reference_frame") {
  SUBCASE("all identity -> index 0 by tie-break") {
    MotionSequence m;
    m.poses.assign(4, RigidTransform{});
    CHECK(select_reference_frame(m) == 0);
  }

  SUBCASE("0.3 / 0.1 / 0.2 rad -> index 1") {
    MotionSequence m;
    for (double a : {0.3, 0.1, 0.2}) {
      RigidTransform p;
      p.rotation = matrix_from_axis_angle({0, a, 0});
      m.poses.push_back(p);
    }
    CHECK(select_reference_frame(m) == 1);
  }

  SUBCASE("random sequence matches brute-force scan") {
    core::Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
      MotionSequence m;
      const int n = 1 + rng.uniform_int(40);
      for (int t = 0; t < n; ++t) m.poses.push_back(random_pose(rng));
      int best = 0;
      double best_a = std::numeric_limits<double>::infinity();
      for (int t = 0; t < n; ++t) {
        const double a =
            geodesic_angle(m.poses[static_cast<size_t>(t)].rotation,
                           Eigen::Matrix3d::Identity());
        if (a < best_a) {
          best_a = a;
          best = t;
        }
      }
      CHECK(select_reference_frame(m) == best);
    }
  }

  SUBCASE("empty throws") {
    CHECK_THROWS_AS(select_reference_frame(MotionSequence{}),
                    std::invalid_argument);
  }
}

TEST_CASE("match_motion") {
  core::Rng rng(61);

  SUBCASE("query present -> that index, cost 0") {
    std::vector<RigidTransform> refs;
    for (int i = 0; i < 8; ++i) refs.push_back(random_pose(rng));
    for (size_t i = 0; i < refs.size(); ++i) {
      const MatchResult r = match_motion(refs[i], refs);
      CHECK(r.index == static_cast<int>(i));
      CHECK(r.cost < 1e-18);
    }
  }

  SUBCASE("constructed cost 0.01") {
    std::vector<RigidTransform> refs(2);
    refs[1].rotation = matrix_from_axis_angle({0, 0, 0.5});
    RigidTransform query;
    query.translation = {0.1, 0, 0};
    const MatchResult r = match_motion(query, refs);
    CHECK(r.index == 0);
    CHECK(r.cost == doctest::Approx(0.01).epsilon(1e-12));
  }

  SUBCASE("32 random references match brute force; pairwise symmetric") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<RigidTransform> refs;
      for (int i = 0; i < 32; ++i) refs.push_back(random_pose(rng));
      const RigidTransform q = random_pose(rng);
      const auto hq = encode_pose(q);
      int best = 0;
      double best_c = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 32; ++i) {
        const double c =
            (hq - encode_pose(refs[static_cast<size_t>(i)])).squaredNorm();
        if (c < best_c) {
          best_c = c;
          best = i;
        }
      }
      const MatchResult r = match_motion(q, refs);
      CHECK(r.index == best);
      CHECK(r.cost == doctest::Approx(best_c).epsilon(1e-12));
      // pairwise symmetry of the cost
      const MatchResult ab = match_motion(q, {refs[0]});
      const MatchResult ba = match_motion(refs[0], {q});
      CHECK(ab.cost == doctest::Approx(ba.cost).epsilon(1e-12));
    }
  }

  SUBCASE("cost zero iff encodings equal") {
    const RigidTransform a = random_pose(rng);
    RigidTransform b = a;
    b.translation[0] += 1e-6;
    const MatchResult r = match_motion(a, {b});
    CHECK(r.cost > 0.0);
    CHECK(match_motion(a, {a}).cost == 0.0);
  }

  SUBCASE("empty references throw") {
    CHECK_THROWS_AS(match_motion(RigidTransform{}, {}), std::invalid_argument);
  }
}

TEST_CASE("perturb_match") {
  std::vector<RigidTransform> refs(8);

  SUBCASE("temperature 0 -> always the optimal index") {
    core::Rng rng(71);
    for (int i = 0; i < 1000; ++i) {
      CHECK(perturb_match(3, 0.5, refs, 0.0, rng) == 3);
    }
  }

  SUBCASE("temperature 1, K=8 -> optimal in ~1/8 of 10000 draws") {
    core::Rng rng(72);
    int hits = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      if (perturb_match(3, 0.5, refs, 1.0, rng) == 3) ++hits;
    }
    const double expect = n / 8.0;
    const double sigma = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
    CHECK(std::abs(hits - expect) < 3.0 * sigma);
  }

  SUBCASE("K=1 -> index 0 regardless of temperature") {
    core::Rng rng(73);
    std::vector<RigidTransform> one(1);
    for (double t : {0.0, 0.5, 1.0, 7.0}) {
      CHECK(perturb_match(0, 0.0, one, t, rng) == 0);
    }
  }

  SUBCASE("results stay in range") {
    core::Rng rng(74);
    for (int i = 0; i < 1000; ++i) {
      const int k = perturb_match(2, 0.1, refs, 0.7, rng);
      CHECK(k >= 0);
      CHECK(k < 8);
    }
  }

  SUBCASE("negative temperature throws") {
    core::Rng rng(75);
    CHECK_THROWS_AS(perturb_match(0, 0.0, refs, -0.1, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("landmark JSON round-trip and errors") {
  const CanonicalFace face = build_canonical_face();
  core::Rng rng(81);
  std::vector<LandmarkSet> frames;
  for (int t = 0; t < 3; ++t) {
    frames.push_back(apply_pose(face.landmarks, random_pose(rng)));
  }
  const std::string path = temp_path("rhm_lmk_test.json");
  save_landmarks(path, 30.0, frames);
  const LandmarkFile back = load_landmarks(path);
  CHECK(back.fps == 30.0);
  REQUIRE(back.frames.size() == 3);
  for (size_t t = 0; t < 3; ++t) {
    CHECK((back.frames[t].points - frames[t].points).cwiseAbs().maxCoeff() <
          1e-12);
  }
  std::filesystem::remove(path);

  const std::string bad = temp_path("rhm_lmk_bad.json");
  {
    std::ofstream out(bad);
    out << "{\"fps\": 25.0, \"frames\": [[[1,2,3]]]}";
  }
  CHECK_THROWS_AS(load_landmarks(bad), std::runtime_error);
  {
    std::ofstream out(bad);
    out << "{\"frames\": []}";
  }
  CHECK_THROWS_AS(load_landmarks(bad), std::runtime_error);
  {
    std::ofstream out(bad);
    out << "not json";
  }
  CHECK_THROWS_AS(load_landmarks(bad), std::runtime_error);
  std::filesystem::remove(bad);
  CHECK_THROWS_AS(load_landmarks(temp_path("rhm_lmk_missing.json")),
                  std::runtime_error);
}

TEST_CASE("motion CSV round-trip and errors") {
  core::Rng rng(91);
  MotionSequence motion;
  motion.fps = 25.0;
  for (int t = 0; t < 16; ++t) {
    motion.poses.push_back(random_pose(rng, M_PI - 0.05));
  }
  const std::string path = temp_path("rhm_motion_test.csv");
  save_motion_csv(path, motion);

  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "rx,ry,rz,tx,ty,tz");
  }

  const MotionSequence back = load_motion_csv(path);
  REQUIRE(back.poses.size() == motion.poses.size());
  for (size_t t = 0; t < motion.poses.size(); ++t) {
    CHECK(geodesic_angle(back.poses[t].rotation, motion.poses[t].rotation) <
          1e-9);
    CHECK((back.poses[t].translation - motion.poses[t].translation).norm() <
          1e-12);
  }
  std::filesystem::remove(path);

  const std::string bad = temp_path("rhm_motion_bad.csv");
  {
    std::ofstream out(bad);
    out << "rx,ry,rz\n0,0,0\n";
  }
  CHECK_THROWS_AS(load_motion_csv(bad), std::runtime_error);
  {
    std::ofstream out(bad);
    out << "rx,ry,rz,tx,ty,tz\n0,0,0,1\n";
  }
  CHECK_THROWS_AS(load_motion_csv(bad), std::runtime_error);
  {
    std::ofstream out(bad);
    out << "rx,ry,rz,tx,ty,tz\n0,0,oops,0,0,0\n";
  }
  CHECK_THROWS_AS(load_motion_csv(bad), std::runtime_error);
  std::filesystem::remove(bad);
}

TEST_CASE("shipped canonical landmark file matches the builder") {
  const std::string path = "data/canonical_landmarks.json";
  if (!std::filesystem::exists(path)) {
    // Running from a directory other than the repo root; skip.
    return;
  }
  const LandmarkFile file = load_landmarks(path);
  REQUIRE(file.frames.size() == 1);
  const CanonicalFace face = build_canonical_face();
  CHECK((file.frames[0].points - face.landmarks.points).cwiseAbs().maxCoeff() <
        1e-12);
}
