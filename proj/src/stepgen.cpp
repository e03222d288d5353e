#include "step/stepgen.hpp"

#include <cmath>

namespace step {

void GenConfig::validate() const {
  check_value(frames >= 3, "generator needs at least 3 frames");
  check_value(latent_dim >= 1, "latent dimension must be positive");
  check_value(temporal_kernel >= 1 && temporal_kernel % 2 == 1,
              "temporal kernel must be odd");
  check_value(lambda_motion >= 0 && lambda_anchor >= 0 && beta_kl >= 0,
              "loss weights must be non-negative");
  check_value(frame_rate_hz > 0, "frame rate must be positive");
}

std::vector<int> anchor_frames(int frames) {
  check_value(frames >= 1, "anchor_frames needs at least one frame");
  // First, middle (ceiling), last; deduplicated for tiny sequences.
  std::vector<int> a{0, (frames - 1) / 2, frames - 1};
  std::vector<int> out;
  for (int f : a) {
    if (out.empty() || out.back() != f) out.push_back(f);
  }
  return out;
}

namespace {

void check_pair(const Tensor& real, const Tensor& synth) {
  check_shape(real.rank() == 4 && real.dim(1) == 3,
              "loss inputs must be [N,3,T,V], got " + real.shape_str());
  check_shape(real.same_shape(synth), "loss inputs differ in shape: " +
                                          real.shape_str() + " vs " +
                                          synth.shape_str());
}

}  // namespace

double reconstruction_loss(const Tensor& real, const Tensor& synth) {
  check_pair(real, synth);
  double s = 0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    double d = double(real[i]) - double(synth[i]);
    s += d * d;
  }
  return s;
}

double derivative_match_loss(const Tensor& real, const Tensor& synth) {
  check_pair(real, synth);
  int n = real.dim(0), t_count = real.dim(2), v_count = real.dim(3);
  check_shape(t_count >= 3, "derivative loss needs at least 3 frames");
  double s = 0;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) {
      for (int v = 0; v < v_count; ++v) {
        // velocities
        for (int t = 0; t + 1 < t_count; ++t) {
          double vr = real.at4(b, c, t + 1, v) - real.at4(b, c, t, v);
          double vs = synth.at4(b, c, t + 1, v) - synth.at4(b, c, t, v);
          s += (vr - vs) * (vr - vs);
        }
        // accelerations
        for (int t = 0; t + 2 < t_count; ++t) {
          double ar = real.at4(b, c, t + 2, v) - 2 * real.at4(b, c, t + 1, v) +
                      real.at4(b, c, t, v);
          double as = synth.at4(b, c, t + 2, v) - 2 * synth.at4(b, c, t + 1, v) +
                      synth.at4(b, c, t, v);
          s += (ar - as) * (ar - as);
        }
      }
    }
  }
  return s;
}

double anchor_offset_loss(const Tensor& real, const Tensor& synth) {
  check_pair(real, synth);
  int n = real.dim(0), t_count = real.dim(2), v_count = real.dim(3);
  std::vector<int> anchors = anchor_frames(t_count);
  double s = 0;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) {
      for (int v = 0; v < v_count; ++v) {
        for (int t = 0; t < t_count; ++t) {
          for (int w : anchors) {
            // Residual of the anchor-relative displacement.
            double dr = real.at4(b, c, t, v) - real.at4(b, c, w, v);
            double ds = synth.at4(b, c, t, v) - synth.at4(b, c, w, v);
            s += (dr - ds) * (dr - ds);
          }
        }
      }
    }
  }
  return s;
}

StepGen::StepGen(const GenConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  RngStream init(init_seed, "init");
  ParamFactory pf{store_, &trainable_, &init, &persistent_};
  build_with(pf);
}

StepGen::StepGen(const GenConfig& cfg, Bindings params)
    : cfg_(cfg), store_(std::move(params)) {
  cfg_.validate();
  ParamFactory pf{store_, &trainable_, nullptr, &persistent_};
  build_with(pf);
}

Expr StepGen::encoder_trunk(Graph& g, ParamFactory& pf, Expr enc_x, Expr adj) {
  BlockConfig blk;
  blk.temporal_kernel = cfg_.temporal_kernel;
  blk.in_channels = 3 + kNumEmotions;
  blk.out_channels = 64;
  Expr h = st_graph_block(g, pf, "enc/blk1", enc_x, adj, blk);
  blk.in_channels = 64;
  blk.out_channels = 32;
  h = st_graph_block(g, pf, "enc/blk2", h, adj, blk);
  blk.in_channels = 32;
  blk.out_channels = 32;
  h = st_graph_block(g, pf, "enc/blk3", h, adj, blk);
  return mean_pool(g, h, {2, 3});  // [N,32,1,1]
}

Expr StepGen::decoder_net(Graph& g, ParamFactory& pf, Expr z_and_label,
                          Expr adj) {
  // [N, latent+4] -> [N, latent+4, 1, 1] -> widen -> unroll over (T, V).
  Expr h = reshape(g, z_and_label, {-1, cfg_.latent_dim + kNumEmotions, 1, 1});
  Expr w = pf.weight(g, "dec/fc/w", {cfg_.latent_dim + kNumEmotions, 32, 1, 1},
                     cfg_.latent_dim + kNumEmotions);
  h = convt2d(g, h, w, 0, 0);
  h = batchnorm_layer(g, pf, "dec/fc", h, 32);
  h = relu(g, h);
  h = repeat_to(g, h, {-1, 32, cfg_.frames, joints::kCount});

  BlockConfig blk;
  blk.temporal_kernel = cfg_.temporal_kernel;
  blk.transposed = true;
  blk.in_channels = 32;
  blk.out_channels = 32;
  h = st_graph_block(g, pf, "dec/blk1", h, adj, blk);
  blk.in_channels = 32;
  blk.out_channels = 64;
  h = st_graph_block(g, pf, "dec/blk2", h, adj, blk);
  blk.in_channels = 64;
  blk.out_channels = 3;
  blk.with_batchnorm = false;  // output layer emits raw coordinates
  blk.with_relu = false;
  blk.with_bias = true;
  h = st_graph_block(g, pf, "dec/blk3", h, adj, blk);
  return h;
}

void StepGen::build_with(ParamFactory& pf) {
  // Training graph: creates every parameter; the inference graphs below
  // reuse them by name and must not mint anything new.
  {
    Graph& g = train_graph_;
    Expr adj = adjacency_const(g);
    Expr pooled = encoder_trunk(g, pf, g.var("enc_x"), adj);
    Expr mu_w = pf.weight(g, "enc/mu/w", {cfg_.latent_dim, 32, 1, 1}, 32);
    Expr mu_b = pf.affine(g, "enc/mu/b", {cfg_.latent_dim}, 0);
    Expr mu = reshape(g, add_bias(g, conv2d(g, pooled, mu_w, 0, 0), mu_b),
                      {-1, cfg_.latent_dim});
    Expr lv_w = pf.weight(g, "enc/logvar/w", {cfg_.latent_dim, 32, 1, 1}, 32);
    Expr lv_b = pf.affine(g, "enc/logvar/b", {cfg_.latent_dim}, 0);
    Expr logvar = reshape(g, add_bias(g, conv2d(g, pooled, lv_w, 0, 0), lv_b),
                          {-1, cfg_.latent_dim});

    // Reparametrization: z = mu + exp(logvar / 2) * noise.
    Expr z = add(g, mu, mul(g, expn(g, scale(g, logvar, 0.5)), g.var("noise")));
    Expr synth = decoder_net(g, pf, concat(g, {z, g.var("onehot")}, 1), adj);

    Expr real = g.var("real");
    Expr err = sub(g, synth, real);
    Expr recon = sum_sq(g, err);

    Expr vel_err = time_diff(g, err);  // d/dt distributes over the residual
    Expr acc_err = time_diff(g, vel_err);
    Expr motion = add(g, sum_sq(g, vel_err), sum_sq(g, acc_err));

    std::vector<int> anchors = anchor_frames(cfg_.frames);
    Expr anchor = g.constant(Tensor::scalar(0));
    for (int a : anchors) {
      Expr pinned = repeat_to(g, time_slice(g, err, a),
                              {-1, 3, cfg_.frames, joints::kCount});
      Expr term = sum_sq(g, sub(g, err, pinned));
      anchor = add(g, anchor, term);
    }

    // KL(q(z|x) || N(0, I)) = 0.5 * sum(mu^2 + e^lv - lv - 1).
    Expr kl_inner = add_scalar(
        g, sub(g, add(g, mul(g, mu, mu), expn(g, logvar)), logvar), -1.0);
    Expr kl = scale(g, reduce_sum(g, kl_inner), 0.5);

    Expr raw = add(g, recon, add(g, scale(g, motion, cfg_.lambda_motion),
                                 scale(g, anchor, cfg_.lambda_anchor)));
    nodes_.objective = add(g, raw, scale(g, kl, cfg_.beta_kl));
    nodes_.raw = raw;
    nodes_.recon = recon;
    nodes_.motion = motion;
    nodes_.anchor = anchor;
    nodes_.kl = kl;
    nodes_.mu = mu;
    nodes_.logvar = logvar;
    nodes_.z = z;
    nodes_.synth = synth;
  }

  // Encoder-only graph for posterior queries.
  {
    Graph& g = enc_graph_;
    Expr adj = adjacency_const(g);
    Expr pooled = encoder_trunk(g, pf, g.var("enc_x"), adj);
    enc_mu_ = reshape(g,
                      add_bias(g, conv2d(g, pooled, g.var("enc/mu/w"), 0, 0),
                               g.var("enc/mu/b")),
                      {-1, cfg_.latent_dim});
    enc_logvar_ =
        reshape(g,
                add_bias(g, conv2d(g, pooled, g.var("enc/logvar/w"), 0, 0),
                         g.var("enc/logvar/b")),
                {-1, cfg_.latent_dim});
    // Single root for one forward pass over both heads.
    enc_both_ = concat(g, {enc_mu_, enc_logvar_}, 1);
  }

  // Decoder-only graph for sampling.
  {
    Graph& g = dec_graph_;
    Expr adj = adjacency_const(g);
    dec_out_ = decoder_net(
        g, pf, concat(g, {g.var("z"), g.var("onehot")}, 1), adj);
  }
}

Tensor StepGen::positions_batch(const std::vector<GaitSequence>& data,
                                const std::vector<int>& rows) const {
  return batch_positions(data, rows, cfg_.frames);
}

Tensor StepGen::onehot(const std::vector<int>& labels) {
  Tensor out({static_cast<int>(labels.size()), kNumEmotions});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_value(labels[i] >= 0 && labels[i] < kNumEmotions,
                "label index out of range");
    out.at2(static_cast<int>(i), labels[i]) = 1;
  }
  return out;
}

Tensor StepGen::encoder_input(const Tensor& positions,
                              const std::vector<int>& labels) const {
  check_shape(positions.rank() == 4 && positions.dim(1) == 3,
              "encoder_input expects [N,3,T,V]");
  int n = positions.dim(0), t_count = positions.dim(2), v_count = positions.dim(3);
  check_value(static_cast<int>(labels.size()) == n,
              "one label per batch row required");
  Tensor out({n, 3 + kNumEmotions, t_count, v_count});
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < t_count; ++t)
        for (int v = 0; v < v_count; ++v)
          out.at4(b, c, t, v) = positions.at4(b, c, t, v);
    int lab = labels[static_cast<std::size_t>(b)];
    check_value(lab >= 0 && lab < kNumEmotions, "label index out of range");
    for (int t = 0; t < t_count; ++t)
      for (int v = 0; v < v_count; ++v)
        out.at4(b, 3 + lab, t, v) = 1;  // constant plane marks the class
  }
  return out;
}

std::pair<Tensor, Tensor> StepGen::encode(const std::vector<GaitSequence>& data,
                                          const std::vector<int>& rows) {
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (int row : rows) {
    const GaitSequence& gait = data[static_cast<std::size_t>(row)];
    check_value(gait.label.has_value(), "encode needs labeled gaits");
    labels.push_back(static_cast<int>(*gait.label));
  }
  Tensor pos = positions_batch(data, rows);
  store_["enc_x"] = encoder_input(pos, labels);
  enc_graph_.set_training(false);
  enc_graph_.forward(enc_both_, store_);
  std::pair<Tensor, Tensor> out{enc_graph_.value(enc_mu_),
                                enc_graph_.value(enc_logvar_)};
  store_.erase("enc_x");
  return out;
}

Tensor StepGen::decode(const Tensor& z, const std::vector<int>& labels) {
  check_shape(z.rank() == 2 && z.dim(1) == cfg_.latent_dim,
              "decode expects [N," + std::to_string(cfg_.latent_dim) + "]");
  check_value(static_cast<int>(labels.size()) == z.dim(0),
              "one label per latent required");
  store_["z"] = z;
  store_["onehot"] = onehot(labels);
  dec_graph_.set_training(false);
  Tensor out = dec_graph_.forward(dec_out_, store_);
  store_.erase("z");
  store_.erase("onehot");
  return out;
}

std::vector<GaitSequence> StepGen::generate(Emotion label, int count,
                                            std::uint64_t seed,
                                            std::uint64_t first_index) {
  check_value(count >= 0, "negative sample count");
  std::vector<GaitSequence> out;
  out.reserve(static_cast<std::size_t>(count));
  const int chunk = 64;
  for (int start = 0; start < count; start += chunk) {
    int n = std::min(chunk, count - start);
    Tensor z({n, cfg_.latent_dim});
    for (int i = 0; i < n; ++i) {
      // Per-sample streams: batching cannot change the draws.
      RngStream noise(seed, "noise",
                      first_index + static_cast<std::uint64_t>(start + i));
      for (int d = 0; d < cfg_.latent_dim; ++d) {
        z.at2(i, d) = static_cast<real>(noise.gaussian());
      }
    }
    Tensor pos = decode(z, std::vector<int>(static_cast<std::size_t>(n),
                                            static_cast<int>(label)));
    for (int i = 0; i < n; ++i) {
      GaitSequence g = GaitSequence::zeros(cfg_.frames);
      g.frame_rate_hz = cfg_.frame_rate_hz;
      g.label = label;
      for (int c = 0; c < 3; ++c)
        for (int t = 0; t < cfg_.frames; ++t)
          for (int v = 0; v < joints::kCount; ++v)
            g.set(c, t, v, pos.at4(i, c, t, v));
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace step
