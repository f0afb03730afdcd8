#include "phnn/model.hpp"

#include <cmath>

#include "phnn/error.hpp"
#include "phnn/rng.hpp"

namespace phnn {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::hnn:
      return "hnn";
    case FusionMode::phnn_pairwise:
      return "phnn_pairwise";
    case FusionMode::phnn_cumulative:
      return "phnn_cumulative";
  }
  return "?";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "hnn") return FusionMode::hnn;
  if (s == "phnn_pairwise") return FusionMode::phnn_pairwise;
  if (s == "phnn_cumulative") return FusionMode::phnn_cumulative;
  throw ConfigError("unknown fusion_mode '" + s +
                    "' (expected hnn | phnn_pairwise | phnn_cumulative)");
}

void ModelConfig::validate() const {
  if (num_stages < 3 || num_stages > 5) {
    throw ConfigError("ModelConfig: num_stages must be in 3..5, got " +
                      std::to_string(num_stages));
  }
  if (convs_per_stage.size() != static_cast<size_t>(num_stages) ||
      base_channels.size() != static_cast<size_t>(num_stages)) {
    throw ConfigError(
        "ModelConfig: convs_per_stage and base_channels must both have num_stages entries");
  }
  for (int c : convs_per_stage) {
    if (c < 1) throw ConfigError("ModelConfig: convs_per_stage entries must be >= 1");
  }
  if (width_num < 1 || width_den < 1) {
    throw ConfigError("ModelConfig: width_multiplier must be a positive rational");
  }
  for (int i = 0; i < num_stages; ++i) {
    if (stage_channels(i) < 1) {
      throw ConfigError("ModelConfig: scaled channel count for stage " + std::to_string(i + 1) +
                        " is below 1 (base " + std::to_string(base_channels[static_cast<size_t>(i)]) +
                        " * " + std::to_string(width_num) + "/" + std::to_string(width_den) + ")");
    }
  }
  if (in_channels < 1) throw ConfigError("ModelConfig: in_channels must be >= 1");
  if (kernel_size != 3) throw ConfigError("ModelConfig: kernel_size is fixed at 3");
}

int ModelConfig::stage_channels(int stage_index) const {
  const long long base = base_channels[static_cast<size_t>(stage_index)];
  return static_cast<int>(base * width_num / width_den);
}

Parameter& Model::add_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back({name, std::move(t)});
  return params_.back();
}

Parameter& Model::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("Model: no parameter named '" + name + "'");
  return params_[it->second];
}

namespace {

Tensor he_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor t{std::move(shape)};
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data_mut()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int k = cfg_.kernel_size;

  for (int m = 1; m <= cfg_.num_stages; ++m) {
    const int cout = cfg_.stage_channels(m - 1);
    const std::string stage = "stage" + std::to_string(m);
    int cin = m == 1 ? cfg_.in_channels : cfg_.stage_channels(m - 2);
    for (int j = 1; j <= cfg_.convs_per_stage[static_cast<size_t>(m - 1)]; ++j) {
      const std::string conv = stage + ".conv" + std::to_string(j);
      add_param(conv + ".w", he_uniform({cout, cin, k, k}, cin * k * k, rng));
      add_param(conv + ".b", Tensor({cout}, 0.0));
      cin = cout;
    }
    add_param(stage + ".bn.gamma", Tensor({cout}, 1.0));
    add_param(stage + ".bn.beta", Tensor({cout}, 0.0));
    add_param(stage + ".collapse.w", he_uniform({1, cout, 1, 1}, cout, rng));
    add_param(stage + ".collapse.b", Tensor({1}, 0.0));
  }
  if (cfg_.fusion_mode == FusionMode::hnn) {
    add_param("fuse.h", Tensor({cfg_.num_stages}, 1.0 / cfg_.num_stages));
    add_param("fuse.b", Tensor({1}, 0.0));
  }
  bn_.resize(static_cast<size_t>(cfg_.num_stages));
}

long long Model::param_count() const {
  long long n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

bool Model::bn_initialized() const {
  for (const auto& s : bn_) {
    if (s.batches_seen == 0) return false;
  }
  return true;
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

ForwardResult Model::forward(const Tensor& batch, Phase phase) {
  if (batch.rank() != 4 || batch.dim(1) != cfg_.in_channels) {
    throw ShapeError("forward: batch must be [B," + std::to_string(cfg_.in_channels) +
                     ",H,W], got " + shape_str(batch.shape()));
  }
  const int h = batch.dim(2), w = batch.dim(3);
  const int mult = cfg_.pad_multiple();
  if (h % mult != 0 || w % mult != 0) {
    throw ShapeError("forward: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by " + std::to_string(mult) + "; pad the input first");
  }

  ForwardResult result;
  std::vector<Tensor> activations;  // upsampled collapse output per stage
  Tensor x = batch;
  for (int m = 1; m <= cfg_.num_stages; ++m) {
    const std::string stage = "stage" + std::to_string(m);
    for (int j = 1; j <= cfg_.convs_per_stage[static_cast<size_t>(m - 1)]; ++j) {
      const std::string conv = stage + ".conv" + std::to_string(j);
      x = relu(
          conv2d(x, param(conv + ".w").tensor, param(conv + ".b").tensor, 1, cfg_.kernel_size / 2));
    }
    x = batchnorm2d(x, param(stage + ".bn.gamma").tensor, param(stage + ".bn.beta").tensor,
                    bn_[static_cast<size_t>(m - 1)], phase);
    Tensor collapsed =
        conv2d(x, param(stage + ".collapse.w").tensor, param(stage + ".collapse.b").tensor, 1, 0);
    activations.push_back(upsample_bilinear(collapsed, h, w));
    if (m < cfg_.num_stages) x = maxpool2d(x, 2, 2);
  }

  switch (cfg_.fusion_mode) {
    case FusionMode::hnn: {
      for (int m = 1; m <= cfg_.num_stages; ++m) {
        const Tensor& a = activations[static_cast<size_t>(m - 1)];
        result.side_outputs.push_back({m, a, a, sigmoid(a)});
      }
      const Tensor& h_w = param("fuse.h").tensor;
      // Learned weighted sum of the per-stage activations plus a bias,
      // recorded as a single node so the fusion weights get gradients.
      Tensor fused_act = [&] {
        auto node = std::make_shared<Node>();
        node->op = "fuse";
        node->inputs.push_back(h_w.impl());
        for (const Tensor& a : activations) node->inputs.push_back(a.impl());
        node->inputs.push_back(param("fuse.b").tensor.impl());
        const int M = cfg_.num_stages;
        node->backward = [M](TensorImpl& out) {
          auto& hw = *out.producer->inputs[0];
          auto& fb = *out.producer->inputs[static_cast<size_t>(M) + 1];
          for (int m = 0; m < M; ++m) {
            auto& a = *out.producer->inputs[static_cast<size_t>(m) + 1];
            if (hw.requires_grad) {
              hw.ensure_grad();
              double s = 0.0;
              for (size_t i = 0; i < out.data.size(); ++i) s += out.grad[i] * a.data[i];
              hw.grad[static_cast<size_t>(m)] += s;
            }
            if (a.requires_grad) {
              a.ensure_grad();
              const double hm = hw.data[static_cast<size_t>(m)];
              for (size_t i = 0; i < out.data.size(); ++i) a.grad[i] += hm * out.grad[i];
            }
          }
          if (fb.requires_grad) {
            fb.ensure_grad();
            double s = 0.0;
            for (size_t i = 0; i < out.data.size(); ++i) s += out.grad[i];
            fb.grad[0] += s;
          }
        };
        Tensor out = Tensor::op_output(activations[0].shape(), node, true);
        double* y = out.data_mut().data();
        const double bias = param("fuse.b").tensor.data()[0];
        for (long long i = 0; i < out.numel(); ++i) y[i] = bias;
        for (int m = 0; m < cfg_.num_stages; ++m) {
          const double hm = h_w.data()[static_cast<size_t>(m)];
          const double* a = activations[static_cast<size_t>(m)].data().data();
          for (long long i = 0; i < out.numel(); ++i) y[i] += hm * a[i];
        }
        return out;
      }();
      result.fused = SideOutput{0, fused_act, fused_act, sigmoid(fused_act)};
      break;
    }
    case FusionMode::phnn_pairwise: {
      for (int m = 1; m <= cfg_.num_stages; ++m) {
        const Tensor& a = activations[static_cast<size_t>(m - 1)];
        Tensor pre = m == 1 ? a : add(a, activations[static_cast<size_t>(m - 2)]);
        result.side_outputs.push_back({m, a, pre, sigmoid(pre)});
      }
      break;
    }
    case FusionMode::phnn_cumulative: {
      Tensor running;
      for (int m = 1; m <= cfg_.num_stages; ++m) {
        const Tensor& a = activations[static_cast<size_t>(m - 1)];
        running = m == 1 ? a : add(a, running);
        result.side_outputs.push_back({m, a, running, sigmoid(running)});
      }
      break;
    }
  }
  return result;
}

}  // namespace phnn
