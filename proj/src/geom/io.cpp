#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rhm/geom/geom.hpp"

namespace rhm::geom {

using nlohmann::json;

void save_landmarks(const std::string& path, double fps,
                    const std::vector<LandmarkSet>& frames) {
  json j;
  j["fps"] = fps;
  json jframes = json::array();
  for (const auto& f : frames) {
    json jf = json::array();
    for (int i = 0; i < kNumLandmarks; ++i) {
      jf.push_back({f.points(i, 0), f.points(i, 1), f.points(i, 2)});
    }
    jframes.push_back(std::move(jf));
  }
  j["frames"] = std::move(jframes);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_landmarks: cannot open " + path);
  out << j.dump();
  if (!out) throw std::runtime_error("save_landmarks: write failed for " + path);
}

LandmarkFile load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_landmarks: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_landmarks: " + path + ": " + e.what());
  }
  if (!j.contains("fps") || !j.contains("frames")) {
    throw std::runtime_error("load_landmarks: " + path +
                             ": missing \"fps\" or \"frames\"");
  }
  LandmarkFile out;
  out.fps = j["fps"].get<double>();
  for (const auto& jf : j["frames"]) {
    if (jf.size() != kNumLandmarks) {
      throw std::runtime_error(
          "load_landmarks: " + path + ": frame " +
          std::to_string(out.frames.size()) + " has " +
          std::to_string(jf.size()) + " points, expected 68");
    }
    LandmarkSet f;
    for (int i = 0; i < kNumLandmarks; ++i) {
      const auto& pt = jf[static_cast<size_t>(i)];
      if (pt.size() != 3) {
        throw std::runtime_error("load_landmarks: " + path + ": point " +
                                 std::to_string(i) + " is not [x,y,z]");
      }
      for (int c = 0; c < 3; ++c) {
        f.points(i, c) = pt[static_cast<size_t>(c)].get<double>();
      }
    }
    out.frames.push_back(f);
  }
  return out;
}

void save_motion_csv(const std::string& path, const MotionSequence& motion) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_motion_csv: cannot open " + path);
  out << "rx,ry,rz,tx,ty,tz\n";
  char buf[64];
  for (const auto& pose : motion.poses) {
    const auto h = encode_pose(pose);
    for (int i = 0; i < 6; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", h[i]);
      out << buf << (i == 5 ? '\n' : ',');
    }
  }
  if (!out) throw std::runtime_error("save_motion_csv: write failed for " + path);
}

MotionSequence load_motion_csv(const std::string& path, double fps) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_motion_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_motion_csv: " + path + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "rx,ry,rz,tx,ty,tz") {
    throw std::runtime_error("load_motion_csv: " + path +
                             ": bad header \"" + line + "\"");
  }
  MotionSequence motion;
  motion.fps = fps;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    Eigen::Matrix<double, 6, 1> h;
    std::string cell;
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("load_motion_csv: " + path + ": row " +
                                 std::to_string(row) + " has fewer than 6 values");
      }
      try {
        h[i] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error("load_motion_csv: " + path + ": row " +
                                 std::to_string(row) + ": bad number \"" + cell +
                                 "\"");
      }
    }
    motion.poses.push_back(decode_pose(h));
    ++row;
  }
  return motion;
}

}  // namespace rhm::geom
