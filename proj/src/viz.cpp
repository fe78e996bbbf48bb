#include "darqn/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "darqn/util.hpp"

namespace darqn {

ReceptiveField receptive_field(const std::vector<ConvLayer>& conv) {
  ReceptiveField rf;
  int extent = 1;
  for (auto it = conv.rbegin(); it != conv.rend(); ++it) extent = (extent - 1) * it->stride + it->k;
  rf.extent = extent;
  rf.jump = 1;
  for (const auto& c : conv) rf.jump *= c.stride;
  return rf;
}

AttentionFrame render_attention(const Tensor& frame, const Tensor& weights, const Geometry& geo,
                                int action, const Tensor& q) {
  if (frame.rank() != 2) throw std::invalid_argument("render_attention: frame must be [H,W]");
  if (weights.size() != geo.locations)
    throw std::invalid_argument("render_attention: expected " + std::to_string(geo.locations) +
                                " weights, got " + std::to_string(weights.size()));
  const int h = frame.dim(0), w = frame.dim(1);
  if (h != geo.input_h || w != geo.input_w)
    throw std::invalid_argument("render_attention: frame does not match conv geometry");

  const ReceptiveField rf = receptive_field(geo.conv);
  AttentionFrame af;
  af.base = frame;
  af.weights = weights;
  af.action = action;
  af.q = q;
  // Splat weights over receptive fields (overlaps sum), divide by the
  // coverage count so uniform attention maps to a flat field, then scale to
  // unit mass.
  Tensor raw({h, w});
  Tensor coverage({h, w});
  for (int gy = 0; gy < geo.grid_side; ++gy) {
    const int y0 = gy * rf.jump;
    const int y1 = std::min(h, y0 + rf.extent);
    for (int gx = 0; gx < geo.grid_side; ++gx) {
      const double wv = weights[static_cast<int64_t>(gy) * geo.grid_side + gx];
      const int x0 = gx * rf.jump;
      const int x1 = std::min(w, x0 + rf.extent);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          raw[static_cast<int64_t>(y) * w + x] += wv;
          coverage[static_cast<int64_t>(y) * w + x] += 1.0;
        }
    }
  }
  af.heat = Tensor({h, w});
  double mass = 0.0;
  for (int64_t i = 0; i < af.heat.size(); ++i) {
    af.heat[i] = coverage[i] > 0.0 ? raw[i] / coverage[i] : 0.0;
    mass += af.heat[i];
  }
  if (mass > 0.0)
    for (int64_t i = 0; i < af.heat.size(); ++i) af.heat[i] /= mass;
  return af;
}

namespace {
unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

void write_ppm(const std::string& path, const Tensor& r, const Tensor& g, const Tensor& b) {
  if (r.rank() != 2 || !r.same_shape(g) || !r.same_shape(b))
    throw std::invalid_argument("write_ppm: channels must be equal [H,W]");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open '" + path + "'");
  const int h = r.dim(0), w = r.dim(1);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::string bytes(static_cast<size_t>(h) * static_cast<size_t>(w) * 3, '\0');
  for (int64_t i = 0; i < r.size(); ++i) {
    bytes[static_cast<size_t>(3 * i)] = static_cast<char>(to_byte(r[i]));
    bytes[static_cast<size_t>(3 * i + 1)] = static_cast<char>(to_byte(g[i]));
    bytes[static_cast<size_t>(3 * i + 2)] = static_cast<char>(to_byte(b[i]));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed for '" + path + "'");
}

void write_overlay_ppm(const std::string& path, const AttentionFrame& af, double dim) {
  const int h = af.base.dim(0), w = af.base.dim(1);
  double peak = 0.0;
  for (int64_t i = 0; i < af.heat.size(); ++i) peak = std::max(peak, af.heat[i]);
  Tensor r({h, w}), g({h, w}), b({h, w});
  for (int64_t i = 0; i < af.base.size(); ++i) {
    const double hn = peak > 0.0 ? af.heat[i] / peak : 0.0;
    const double lum = af.base[i] * (dim + (1.0 - dim) * hn);
    r[i] = std::min(1.0, lum + 0.35 * hn);
    g[i] = lum;
    b[i] = lum;
  }
  write_ppm(path, r, g, b);
}

int capture_trajectory(NetworkPolicy& policy, Env& env, int steps, const std::string& out_dir,
                       const Geometry& geo) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/index.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("capture_trajectory: cannot open index.csv in '" + out_dir + "'");
  csv << "step,action,reward,max_q,att_index\n";

  Tensor frame;
  bool episode_start = true;
  int written = 0;
  for (int step = 0; step < steps; ++step) {
    if (episode_start) frame = env.reset();
    const int action = policy.act(frame, episode_start);
    episode_start = false;
    const StepResult result = env.step(action);

    Tensor weights = policy.last_weights();
    if (weights.empty()) weights = Tensor({geo.locations});  // no attention: flat zero heat
    const AttentionFrame af = render_attention(frame, weights, geo, action, policy.last_q());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.ppm", step);
    write_overlay_ppm(out_dir + "/" + std::string(name), af);
    written += 1;

    csv << step << ',' << action << ',' << format_double(result.reward) << ','
        << format_double(policy.last_max_q()) << ',';
    if (policy.last_sampled() >= 0) csv << policy.last_sampled();
    csv << '\n';

    frame = result.frame;
    if (result.terminal) episode_start = true;
  }
  csv.flush();
  if (!csv) throw std::runtime_error("capture_trajectory: write failed in '" + out_dir + "'");
  return written;
}

}  // namespace darqn
