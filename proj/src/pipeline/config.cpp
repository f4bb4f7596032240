#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pipeline_util.hpp"
#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

using nlohmann::json;

void validate_config(const PipelineConfig& c) {
  if (c.k < 1) throw std::invalid_argument("config: k must be at least 1");
  if (c.tau < c.k) throw std::invalid_argument("config: tau must be at least k");
  if (c.fps <= 0) throw std::invalid_argument("config: fps must be positive");
  if (c.sample_rate <= 0) throw std::invalid_argument("config: sample_rate must be positive");
  if (c.image_size <= 0 || c.image_size % 16 != 0)
    throw std::invalid_argument("config: image_size must be a positive multiple of 16");
  if (c.frames <= 0) throw std::invalid_argument("config: frames must be positive");
  if (c.generator_steps <= 0 || c.motion_epochs <= 0 || c.expression_epochs <= 0)
    throw std::invalid_argument("config: step/epoch counts must be positive");
  if (c.match_temperature < 0)
    throw std::invalid_argument("config: match_temperature must be non-negative");
  const double spf = static_cast<double>(c.sample_rate) / c.fps;
  if (spf != static_cast<double>(static_cast<int>(spf)))
    throw std::invalid_argument("config: sample_rate must be a whole number of samples per frame");
}

namespace {

const char* flavor_name(synth::GanFlavor f) {
  return f == synth::GanFlavor::Hinge ? "hinge" : "lsgan";
}

synth::GanFlavor flavor_from(const std::string& s) {
  if (s == "lsgan") return synth::GanFlavor::LeastSquares;
  if (s == "hinge") return synth::GanFlavor::Hinge;
  throw std::invalid_argument("config: unknown gan flavor \"" + s + "\"");
}

json to_json_obj(const PipelineConfig& c) {
  return json{{"tau", c.tau},
              {"k", c.k},
              {"fps", c.fps},
              {"sample_rate", c.sample_rate},
              {"image_size", c.image_size},
              {"frames", c.frames},
              {"seed", c.seed},
              {"lambda_fm", c.lambdas.fm},
              {"lambda_pct", c.lambdas.pct},
              {"lambda_wrp", c.lambdas.wrp},
              {"gan", flavor_name(c.lambdas.flavor)},
              {"generator_steps", c.generator_steps},
              {"motion_epochs", c.motion_epochs},
              {"expression_epochs", c.expression_epochs},
              {"match_temperature", c.match_temperature},
              {"matting", c.matting}};
}

}  // namespace

std::string config_to_json(const PipelineConfig& c) { return to_json_obj(c).dump(2); }

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

  PipelineConfig c;
  const json defaults = to_json_obj(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\"");
    (void)value;
  }
  try {
    c.tau = j.value("tau", c.tau);
    c.k = j.value("k", c.k);
    c.fps = j.value("fps", c.fps);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.image_size = j.value("image_size", c.image_size);
    c.frames = j.value("frames", c.frames);
    c.seed = j.value("seed", c.seed);
    c.lambdas.fm = j.value("lambda_fm", c.lambdas.fm);
    c.lambdas.pct = j.value("lambda_pct", c.lambdas.pct);
    c.lambdas.wrp = j.value("lambda_wrp", c.lambdas.wrp);
    if (j.contains("gan")) c.lambdas.flavor = flavor_from(j["gan"].get<std::string>());
    c.generator_steps = j.value("generator_steps", c.generator_steps);
    c.motion_epochs = j.value("motion_epochs", c.motion_epochs);
    c.expression_epochs = j.value("expression_epochs", c.expression_epochs);
    c.match_temperature = j.value("match_temperature", c.match_temperature);
    c.matting = j.value("matting", c.matting);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str());
}

std::string config_hash(const PipelineConfig& c) {
  const std::string text = to_json_obj(c).dump();  // canonical: sorted keys, no spaces
  return detail::hex16(detail::fnv1a(text.data(), text.size()));
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = detail::fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  return detail::hex16(h);
}

render::Camera scene_camera(int image_size) {
  const double s = image_size / 64.0;
  render::Camera cam;
  cam.sx *= s;
  cam.sy *= s;
  cam.cx *= s;
  cam.cy *= s;
  cam.width = image_size;
  cam.height = image_size;
  return cam;
}

}  // namespace rhm::pipeline
