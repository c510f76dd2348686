#include "gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "encoder.hpp"
#include "error.hpp"
#include "losses.hpp"
#include "mining.hpp"

namespace wvad {
namespace {

using CaseFn = std::function<GradCheckReport(std::mt19937_64&, const GradCheckOptions&)>;

struct Case {
  std::string name;
  CaseFn run;
};

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Evenly spaced distinct values in random order, so ranking ops sit far from
// their selection boundaries.
Tensor spread(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor::vector(v);
}

// Contracts an arbitrary output against fixed random weights.
Var weighted_sum(Var y, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  Tensor w = uniform(y.value().shape(), rng);
  return ops::sum(ops::mul(y, y.tape()->constant(w)));
}

Case unary_case(std::string name, std::function<Var(Var)> op, double lo, double hi) {
  return {std::move(name), [op, lo, hi](std::mt19937_64& rng, const GradCheckOptions& o) {
            return grad_check([&](Tape&, std::span<const Var> p) { return weighted_sum(op(p[0]), 11); },
                              {uniform({3, 4}, rng, lo, hi)}, {"x"}, o);
          }};
}

Case binary_case(std::string name, std::function<Var(Var, Var)> op, Shape a, Shape b) {
  return {std::move(name), [op, a, b](std::mt19937_64& rng, const GradCheckOptions& o) {
            return grad_check([&](Tape&, std::span<const Var> p) { return weighted_sum(op(p[0], p[1]), 12); },
                              {uniform(a, rng), uniform(b, rng)}, {"a", "b"}, o);
          }};
}

// x -> x^2 whose backward claims 3x instead of 2x.
Var faulty_square(Var a) {
  Tensor y = a.value();
  for (double& v : y.data()) v *= v;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 3.0 * t.value(ia)[i];
  });
}

EncoderConfig micro_config() {
  EncoderConfig c;
  c.snippets = 8;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.depth = 2;
  c.conv_width = 3;
  return c;
}

struct MicroBatch {
  ModelParams layout;
  std::vector<Tensor> features;
  std::vector<int> labels;
  LossConfig loss;
  MiningConfig mining;
};

MicroBatch make_micro(std::mt19937_64& rng) {
  MicroBatch m;
  m.layout = init_params(micro_config(), rng());
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (auto& e : m.layout.entries)
    if (e.name.ends_with(".bias") || e.name.ends_with(".gain"))
      for (double& v : e.value.data()) v += jitter(rng);
  for (int label : {1, 0}) {
    Tensor f = uniform({8, 4}, rng);
    if (label == 1)
      for (std::size_t t = 2; t < 6; ++t) f.at(t, 0) += 2.0;
    m.features.push_back(std::move(f));
    m.labels.push_back(label);
  }
  m.loss.alpha = 0.5;
  m.loss.beta = 0.5;
  m.loss.tau = 0.5;
  m.mining.region_length = 4;
  m.mining.region_min_count = 2;
  m.mining.k_hard_normal = 2;
  m.mining.k_easy = 2;
  return m;
}

std::vector<VideoOutput> run_micro(const Forward& fwd, const MicroBatch& m) {
  std::vector<VideoOutput> outs;
  for (std::size_t v = 0; v < m.features.size(); ++v) {
    EncodedVideo enc = fwd.encode(m.features[v]);
    outs.push_back({fwd.snippet_scores(enc), fwd.video_score(enc), enc.snippet_features, m.labels[v]});
  }
  return outs;
}

// Mining is detached from the graph, so it is computed once at the base point
// and held fixed while parameters are perturbed.
MinedSets mine_micro(const MicroBatch& m) {
  Tape tape;
  Forward fwd(tape, m.layout, false);
  std::vector<std::vector<double>> scores;
  for (const auto& o : run_micro(fwd, m)) scores.push_back(o.snippet_scores.value().values());
  MinedSets mined = mine_batch(scores, m.labels, m.mining);
  // Guarantee both contrastive halves are active even for an untrained model.
  if (mined.hard_abnormal.empty()) mined.hard_abnormal = {{0, 0}, {0, 7}};
  if (mined.easy_abnormal.empty()) mined.easy_abnormal = {{0, 3}};
  return mined;
}

GradCheckReport check_model(std::mt19937_64& rng, const GradCheckOptions& o,
                            std::function<Var(Tape&, const Forward&, const MicroBatch&, const MinedSets&)> objective) {
  MicroBatch m = make_micro(rng);
  MinedSets mined = mine_micro(m);
  std::vector<Tensor> values;
  std::vector<std::string> names;
  for (const auto& e : m.layout.entries) {
    values.push_back(e.value);
    names.push_back(e.name);
  }
  return grad_check(
      [&](Tape& tape, std::span<const Var> leaves) {
        Forward fwd(tape, m.layout, leaves);
        return objective(tape, fwd, m, mined);
      },
      std::move(values), std::move(names), o);
}

std::vector<Case> build_cases(bool inject_faulty_op) {
  std::vector<Case> cases;
  cases.push_back(binary_case("matmul", ops::matmul, {3, 4}, {4, 5}));
  cases.push_back(binary_case("matmul_nt", ops::matmul_nt, {3, 4}, {5, 4}));
  cases.push_back(unary_case("transpose", ops::transpose, -1, 1));
  cases.push_back(binary_case("add", ops::add, {3, 4}, {3, 4}));
  cases.push_back(binary_case("sub", ops::sub, {3, 4}, {3, 4}));
  cases.push_back(binary_case("mul", ops::mul, {3, 4}, {3, 4}));
  cases.push_back(binary_case("add_row", ops::add_row, {3, 4}, {4}));
  cases.push_back(binary_case("add_col", ops::add_col, {3, 4}, {3}));
  cases.push_back(unary_case("scale", [](Var a) { return ops::scale(a, -1.7); }, -1, 1));
  cases.push_back(unary_case("sigmoid", ops::sigmoid, -3, 3));
  cases.push_back(unary_case("exp", ops::exp, -2, 2));
  cases.push_back(unary_case("log", ops::log, 0.2, 3));
  cases.push_back(unary_case("gelu", ops::gelu, -3, 3));
  cases.push_back(unary_case("relu", ops::relu, 0.1, 1.0));
  cases.push_back(unary_case("relu_negative", ops::relu, -1.0, -0.1));
  cases.push_back(unary_case("clamp", [](Var a) { return ops::clamp(a, -0.5, 0.5); }, -0.45, 0.45));
  cases.push_back(unary_case("softmax_rows", ops::softmax_rows, -2, 2));
  cases.push_back(unary_case("l2_normalize_rows", [](Var a) { return ops::l2_normalize_rows(a); }, -1, 1));
  cases.push_back(unary_case("row_sum", ops::row_sum, -1, 1));
  cases.push_back(unary_case("mean", ops::mean, -1, 1));
  cases.push_back(unary_case("sum", ops::sum, -1, 1));
  cases.push_back(unary_case("slice_rows", [](Var a) { return ops::slice_rows(a, 1, 2); }, -1, 1));
  cases.push_back(unary_case("slice_cols", [](Var a) { return ops::slice_cols(a, 1, 2); }, -1, 1));
  cases.push_back(unary_case("reshape", [](Var a) { return ops::reshape(a, {12}); }, -1, 1));
  cases.push_back(unary_case("gather_rows", [](Var a) {
    const std::size_t rows[] = {2, 0, 2};
    return ops::gather_rows(a, rows);
  }, -1, 1));
  cases.push_back(binary_case("concat_rows", [](Var a, Var b) { const Var p[] = {a, b}; return ops::concat_rows(p); }, {2, 4}, {3, 4}));
  cases.push_back(binary_case("concat_cols", [](Var a, Var b) { const Var p[] = {a, b}; return ops::concat_cols(p); }, {3, 2}, {3, 4}));
  cases.push_back({"layer_norm", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check(
                         [](Tape&, std::span<const Var> p) { return weighted_sum(ops::layer_norm(p[0], p[1], p[2]), 13); },
                         {uniform({3, 5}, rng, -2, 2), uniform({5}, rng, 0.5, 1.5), uniform({5}, rng)},
                         {"x", "gain", "bias"}, o);
                   }});
  cases.push_back({"dws_conv1d", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check(
                         [](Tape&, std::span<const Var> p) { return weighted_sum(ops::dws_conv1d(p[0], p[1], p[2]), 14); },
                         {uniform({6, 3}, rng), uniform({3, 3}, rng), uniform({3, 4}, rng)},
                         {"x", "depth_kernel", "point_kernel"}, o);
                   }});
  cases.push_back({"multi_head_self_attention", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     std::vector<Tensor> v{uniform({5, 4}, rng)};
                     std::vector<std::string> names{"tokens"};
                     for (const char* which : {"query", "key", "value"}) {
                       v.push_back(uniform({4, 3}, rng));
                       v.push_back(uniform({4, 4}, rng));
                       v.push_back(uniform({4}, rng));
                       names.push_back(std::string(which) + ".depth");
                       names.push_back(std::string(which) + ".point");
                       names.push_back(std::string(which) + ".bias");
                     }
                     return grad_check(
                         [](Tape&, std::span<const Var> p) {
                           AttentionParams ap{{p[1], p[2], p[3]}, {p[4], p[5], p[6]}, {p[7], p[8], p[9]}};
                           return weighted_sum(multi_head_self_attention(p[0], ap, 2), 15);
                         },
                         std::move(v), std::move(names), o);
                   }});
  cases.push_back({"topk_mean", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check([](Tape&, std::span<const Var> p) { return ops::topk_mean(p[0], 3); },
                                       {spread(8, rng, 0.05, 0.95)}, {"scores"}, o);
                   }});
  cases.push_back({"loss_video", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check(
                         [](Tape&, std::span<const Var> p) {
                           const int labels[] = {1, 0, 1};
                           return loss_video(p, labels);
                         },
                         {uniform({1}, rng, 0.1, 0.9), uniform({1}, rng, 0.1, 0.9), uniform({1}, rng, 0.1, 0.9)},
                         {"v0", "v1", "v2"}, o);
                   }});
  cases.push_back({"loss_snippet_topk", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check(
                         [](Tape&, std::span<const Var> p) {
                           return loss_snippet_topk(p.subspan(0, 2), p.subspan(2, 2), 3, PairingRule::AllPairs);
                         },
                         {spread(8, rng, 0.05, 0.95), spread(8, rng, 0.03, 0.93), spread(8, rng, 0.02, 0.9),
                          spread(8, rng, 0.01, 0.8)},
                         {"abn0", "abn1", "nrm0", "nrm1"}, o);
                   }});
  cases.push_back({"loss_regularisation", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check([](Tape&, std::span<const Var> p) { return loss_regularisation(p[0], 0.7, 0.3); },
                                       {uniform({8}, rng, 0.0, 1.0)}, {"scores"}, o);
                   }});
  cases.push_back({"loss_contrastive", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return grad_check(
                         [](Tape& tape, std::span<const Var> p) {
                           MinedSets mined;
                           mined.hard_abnormal = {{0, 0}, {0, 4}};
                           mined.easy_abnormal = {{0, 2}, {0, 3}};
                           mined.hard_normal = {{1, 1}, {1, 5}};
                           mined.easy_normal = {{1, 0}, {1, 2}};
                           return loss_contrastive(tape, mined, p, 0.5);
                         },
                         {uniform({6, 4}, rng), uniform({6, 4}, rng)}, {"features_abnormal", "features_normal"}, o);
                   }});
  cases.push_back({"video_score", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return check_model(rng, o, [](Tape&, const Forward& fwd, const MicroBatch& m, const MinedSets&) {
                       return fwd.video_score(fwd.encode(m.features[0]));
                     });
                   }});
  cases.push_back({"full_objective", [](std::mt19937_64& rng, const GradCheckOptions& o) {
                     return check_model(rng, o, [](Tape& tape, const Forward& fwd, const MicroBatch& m, const MinedSets& mined) {
                       return loss_total(tape, run_micro(fwd, m), mined, m.loss).total;
                     });
                   }});
  if (inject_faulty_op) cases.push_back(unary_case("faulty_square", faulty_square, -1, 1));
  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names(bool inject_faulty_op) {
  std::vector<std::string> names;
  for (const auto& c : build_cases(inject_faulty_op)) names.push_back(c.name);
  return names;
}

SuiteReport run_gradcheck_suite(const SuiteOptions& options) {
  SuiteReport report;
  const auto cases = build_cases(options.inject_faulty_op);
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
      std::mt19937_64 rng(seed * 1000003ull + std::hash<std::string>{}(c.name) % 1000003ull);
      SuiteEntry e;
      e.name = c.name;
      e.seed = seed;
      try {
        GradCheckReport r = c.run(rng, options.check);
        e.max_error = r.max_error;
        e.passed = r.passed;
        if (!r.failure.empty()) {
          e.detail = r.failure;
        } else {
          for (const auto& p : r.params)
            if (p.max_error == r.max_error) {
              e.detail = p.name + "[" + std::to_string(p.worst_index) + "]";
              break;
            }
        }
      } catch (const Error& err) {
        e.passed = false;
        e.detail = err.what();
      }
      report.passed = report.passed && e.passed;
      if (options.on_entry) options.on_entry(e);
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

std::string format_suite_entry(const SuiteEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s seed=%-3llu max_rel_err=%.3e %s  %s", e.name.c_str(),
                static_cast<unsigned long long>(e.seed), e.max_error, e.passed ? "PASS" : "FAIL", e.detail.c_str());
  return buf;
}

}  // namespace wvad
