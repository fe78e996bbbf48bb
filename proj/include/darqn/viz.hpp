#pragma once

#include <string>

#include "darqn/env.hpp"
#include "darqn/eval.hpp"
#include "darqn/model.hpp"
#include "darqn/tensor.hpp"

namespace darqn {

struct AttentionFrame {
  Tensor base;     // source frame [H,W]
  Tensor weights;  // attention weights [L]
  Tensor heat;     // receptive-field projection at frame resolution, sums to ~1
  int action = -1;
  Tensor q;
};

// Input-coordinate footprint of one attention cell: cells sit `jump` pixels
// apart and each covers an `extent`-pixel square (clipped at the border).
struct ReceptiveField {
  int jump = 1;
  int extent = 1;
};

ReceptiveField receptive_field(const std::vector<ConvLayer>& conv);

// Splats each location's weight uniformly over that cell's receptive field;
// overlaps sum, and the map is normalized to unit mass. Pure function of its
// arguments.
AttentionFrame render_attention(const Tensor& frame, const Tensor& weights, const Geometry& geo,
                                int action = -1, const Tensor& q = Tensor());

// Binary PPM (P6, maxval 255) from three [H,W] channels in [0,1].
void write_ppm(const std::string& path, const Tensor& r, const Tensor& g, const Tensor& b);

// Frame with the heat map composited on: non-attended pixels are dimmed by
// `dim`, and the heat adds a red tint.
void write_overlay_ppm(const std::string& path, const AttentionFrame& af, double dim = 0.4);

// Rolls the policy out for `steps` steps (resetting the env between
// episodes), writing one overlay PPM per step plus an index.csv with the
// header step,action,reward,max_q,att_index. att_index is blank except on
// hard-attention sampled steps. Returns the number of frames written.
int capture_trajectory(NetworkPolicy& policy, Env& env, int steps, const std::string& out_dir,
                       const Geometry& geo);

}  // namespace darqn
