#include "useg/gradcheck.hpp"

#include "useg/layers.hpp"
#include "useg/loss.hpp"
#include "useg/seeding.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

namespace useg {
namespace {

using T = Tensor<double>;
using Args = std::vector<T>;

// A scalar function of several tensors and its analytic gradient with respect to each.
struct Case {
  Args args;
  std::function<double(const Args&)> value;
  std::function<Args(const Args&)> gradient;
};

double inner(const T& a, const T& b) { return a.values().dot(b.values()); }

struct Checker {
  double step;
  double max_error = 0.0;
  std::int64_t entries = 0;

  void run(const Case& c) {
    const Args analytic = c.gradient(c.args);
    Args probe = c.args;
    for (std::size_t k = 0; k < probe.size(); ++k) {
      Eigen::VectorXd numeric(probe[k].size());
      for (Index i = 0; i < probe[k].size(); ++i) {
        const double saved = probe[k][i];
        probe[k][i] = saved + step;
        const double plus = c.value(probe);
        probe[k][i] = saved - step;
        const double minus = c.value(probe);
        probe[k][i] = saved;
        numeric[i] = (plus - minus) / (2 * step);
      }
      const double scale = std::max(analytic[k].values().cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
      for (Index i = 0; i < probe[k].size(); ++i) {
        max_error = std::max(max_error, relative_error(analytic[k][i], numeric[i], scale));
        ++entries;
      }
    }
  }
};

// Entries bounded away from zero so the central difference never straddles a ReLU kink.
T away_from_zero(Shape dims, std::mt19937_64& rng) {
  T t = T::random_uniform(std::move(dims), rng, 0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < t.size(); ++i) {
    if (sign(rng)) t[i] = -t[i];
  }
  return t;
}

// Distinct values spaced far apart relative to the step, so pooling windows have no near-ties.
T tie_free(Shape dims, std::mt19937_64& rng) {
  T t(std::move(dims));
  std::vector<Index> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (Index i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(order[static_cast<std::size_t>(i)]);
  return t;
}

Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

using CaseFactory = std::function<Case(std::mt19937_64&, bool fault)>;

Case conv_case(std::mt19937_64& rng, bool fault) {
  const Index n = uniform_index(rng, 1, 2), cin = uniform_index(rng, 1, 3), cout = uniform_index(rng, 1, 4);
  const Index k = uniform_index(rng, 1, 3), stride = uniform_index(rng, 1, 2), pad = uniform_index(rng, 0, k / 2 + 1);
  const Index h = uniform_index(rng, k, 8), w = uniform_index(rng, k, 8);
  Args args{T::random_normal({n, cin, h, w}, rng), T::random_normal({cout, cin, k, k}, rng),
            T::random_normal({cout}, rng)};
  const T readout = T::random_normal(conv2d(args[0], args[1], args[2], stride, pad).dims(), rng);
  return {std::move(args),
          [=](const Args& a) { return inner(conv2d(a[0], a[1], a[2], stride, pad), readout); },
          [=](const Args& a) {
            auto g = conv2d_backward(a[0], a[1], readout, stride, pad);
            if (fault) g.grad_input.values() *= 1.01;
            return Args{g.grad_input, g.grad_params.at("kernel"), g.grad_params.at("bias")};
          }};
}

Case upconv_case(std::mt19937_64& rng, bool) {
  const Index n = uniform_index(rng, 1, 2), cin = uniform_index(rng, 1, 4), cout = uniform_index(rng, 1, 3);
  const Index k = uniform_index(rng, 1, 3), stride = uniform_index(rng, 1, 2);
  const Index h = uniform_index(rng, 1, 4), w = uniform_index(rng, 1, 4);
  Args args{T::random_normal({n, cin, h, w}, rng), T::random_normal({cin, cout, k, k}, rng),
            T::random_normal({cout}, rng)};
  const T readout = T::random_normal(upconv2d(args[0], args[1], args[2], stride).dims(), rng);
  return {std::move(args),
          [=](const Args& a) { return inner(upconv2d(a[0], a[1], a[2], stride), readout); },
          [=](const Args& a) {
            auto g = upconv2d_backward(a[0], a[1], readout, stride);
            return Args{g.grad_input, g.grad_params.at("kernel"), g.grad_params.at("bias")};
          }};
}

Case maxpool_case(std::mt19937_64& rng, bool) {
  const Index window = uniform_index(rng, 1, 2);
  const Index n = uniform_index(rng, 1, 2), c = uniform_index(rng, 1, 4);
  const Index h = window * uniform_index(rng, 1, 4), w = window * uniform_index(rng, 1, 4);
  Args args{tie_free({n, c, h, w}, rng)};
  const T readout = T::random_normal(maxpool2d(args[0], window).output.dims(), rng);
  return {std::move(args),
          [=](const Args& a) { return inner(maxpool2d(a[0], window).output, readout); },
          [=](const Args& a) {
            const auto pooled = maxpool2d(a[0], window);
            return Args{maxpool2d_backward(a[0].dims(), pooled.argmax, readout)};
          }};
}

Case batchnorm_case(std::mt19937_64& rng, Mode mode) {
  const Index n = uniform_index(rng, 1, 2), c = uniform_index(rng, 1, 4);
  const Index h = uniform_index(rng, 2, 8), w = uniform_index(rng, 2, 8);
  Args args{T::random_normal({n, c, h, w}, rng), T::random_uniform({c}, rng, 0.5, 1.5), T::random_normal({c}, rng)};
  BatchNormState<double> state(c);
  state.running_mean = T::random_normal({c}, rng);
  state.running_var = T::random_uniform({c}, rng, 0.5, 2.0);
  state.num_batches = 1;
  const T readout = T::random_normal(args[0].dims(), rng);
  return {std::move(args),
          [=](const Args& a) {
            auto s = state;
            return inner(batchnorm2d(a[0], a[1], a[2], s, mode, 0.1, 1e-5, static_cast<BatchNormCache<double>*>(nullptr), false), readout);
          },
          [=](const Args& a) {
            auto s = state;
            BatchNormCache<double> cache;
            batchnorm2d(a[0], a[1], a[2], s, mode, 0.1, 1e-5, &cache, false);
            auto g = batchnorm2d_backward(cache, readout);
            return Args{g.grad_input, g.grad_params.at("gamma"), g.grad_params.at("beta")};
          }};
}

Case relu_case(std::mt19937_64& rng, bool) {
  Args args{away_from_zero({uniform_index(rng, 1, 2), uniform_index(rng, 1, 4), uniform_index(rng, 1, 8),
                            uniform_index(rng, 1, 8)},
                           rng)};
  const T readout = T::random_normal(args[0].dims(), rng);
  return {std::move(args), [=](const Args& a) { return inner(relu(a[0]), readout); },
          [=](const Args& a) { return Args{relu_backward(a[0], readout)}; }};
}

Case concat_case(std::mt19937_64& rng, bool) {
  const Index n = uniform_index(rng, 1, 2), h = uniform_index(rng, 1, 8), w = uniform_index(rng, 1, 8);
  const Index ca = uniform_index(rng, 1, 4), cb = uniform_index(rng, 1, 4);
  Args args{T::random_normal({n, ca, h, w}, rng), T::random_normal({n, cb, h, w}, rng)};
  const T readout = T::random_normal({n, ca + cb, h, w}, rng);
  return {std::move(args), [=](const Args& a) { return inner(concat_channels(a[0], a[1]), readout); },
          [=](const Args&) {
            auto [ga, gb] = split_channels(readout, ca);
            return Args{ga, gb};
          }};
}

Case loss_case(std::mt19937_64& rng, LossKind kind, double gamma) {
  const Index n = uniform_index(rng, 1, 2), c = uniform_index(rng, 2, 6);
  const Index h = uniform_index(rng, 1, 6), w = uniform_index(rng, 1, 6);
  LossConfig config{kind, gamma, {}, false};
  if (config.weighted()) {
    const T weights = T::random_uniform({c}, rng, 0.5, 10.0);
    config.class_weights.assign(weights.data(), weights.data() + c);
  }
  PixelTargets targets(n, h, w);
  std::bernoulli_distribution keep(0.85);
  for (std::size_t i = 0; i < targets.labels.size(); ++i) {
    targets.labels[i] = static_cast<std::int32_t>(uniform_index(rng, 0, c - 1));
    targets.valid[i] = keep(rng) ? 1 : 0;
  }
  targets.valid[0] = 1;
  Args args{T::random_normal({n, c, h, w}, rng, 2.0)};
  return {std::move(args), [=](const Args& a) { return compute_loss(a[0], targets, config).loss; },
          [=](const Args& a) { return Args{compute_loss(a[0], targets, config).grad_logits}; }};
}

}  // namespace

double relative_error(double analytic, double numeric, double tensor_scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * tensor_scale, 1e-10});
  return std::abs(analytic - numeric) / denom;
}

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& op : ops) worst = std::max(worst, op.max_rel_error);
  return worst;
}

std::string GradcheckReport::to_text() const {
  std::ostringstream out;
  char line[160];
  for (const auto& op : ops) {
    std::snprintf(line, sizeof line, "%-22s instances=%-3d entries=%-7lld max_rel_error=%.3e\n", op.op.c_str(),
                  op.instances, static_cast<long long>(op.entries), op.max_rel_error);
    out << line;
  }
  return out.str();
}

GradcheckReport run_gradient_suite(const GradcheckOptions& options) {
  if (options.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
  if (!(options.step > 0)) throw std::invalid_argument("gradcheck: step must be positive");
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::pair<std::string, CaseFactory>> suite{
      {"conv2d", conv_case},
      {"upconv2d", upconv_case},
      {"maxpool2d", maxpool_case},
      {"batchnorm2d[train]", [](auto& rng, bool) { return batchnorm_case(rng, Mode::train); }},
      {"batchnorm2d[eval]", [](auto& rng, bool) { return batchnorm_case(rng, Mode::eval); }},
      {"relu", relu_case},
      {"concat_channels", concat_case},
      {"loss:sce", [](auto& rng, bool) { return loss_case(rng, LossKind::sce, 0.0); }},
      {"loss:w_sce", [](auto& rng, bool) { return loss_case(rng, LossKind::weighted_sce, 0.0); }},
  };
  for (double gamma : {0.5, 1.0, 2.0}) {
    for (LossKind kind : {LossKind::focal, LossKind::weighted_focal}) {
      LossConfig label_config{kind, gamma, {}, false};
      suite.emplace_back("loss:" + label_config.label(),
                         [=](auto& rng, bool) { return loss_case(rng, kind, gamma); });
    }
  }

  GradcheckReport report;
  for (std::size_t op = 0; op < suite.size(); ++op) {
    auto rng = make_rng({options.seed, 0x67726164ULL, op});
    Checker checker{options.step};
    for (int i = 0; i < options.instances; ++i) {
      checker.run(suite[op].second(rng, options.inject_fault));
    }
    report.ops.push_back({suite[op].first, options.instances, checker.entries, checker.max_error});
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace useg
