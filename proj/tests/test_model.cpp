#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "batchens/error.hpp"
#include "batchens/model.hpp"
#include "batchens/rng.hpp"
#include "batchens/training.hpp"
#include "oracles.hpp"

using namespace batchens;

namespace {

bool bits_equal(const Matrix2D& a, const Matrix2D& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Matrix2D random_matrix(std::size_t r, std::size_t c, SeededRng& rng,
                       double lo = -2.0, double hi = 2.0) {
  Matrix2D m(r, c);
  for (double& v : m.values()) v = rng.next_uniform(lo, hi);
  return m;
}

ModelSpec small_be_spec(std::size_t members) {
  ModelSpec spec;
  spec.in_dim = 5;
  spec.hidden = {4, 3};
  spec.classes = 2;
  spec.members = members;
  return spec;
}

}  // namespace

TEST_CASE("build_model validates its spec") {
  SeededRng rng(1);
  ModelSpec spec = small_be_spec(2);
  spec.in_dim = 0;
  CHECK_THROWS_AS(build_model(spec, rng), ArgumentError);
  spec = small_be_spec(2);
  spec.classes = 1;
  CHECK_THROWS_AS(build_model(spec, rng), ArgumentError);
  spec = small_be_spec(2);
  spec.heads = 0;
  CHECK_THROWS_AS(build_model(spec, rng), ArgumentError);
  spec = small_be_spec(2);
  spec.hidden = {4, 0};
  CHECK_THROWS_AS(build_model(spec, rng), ArgumentError);
  spec = small_be_spec(2);
  spec.dropout_rate = 1.0;
  CHECK_THROWS_AS(build_model(spec, rng), ArgumentError);
}

TEST_CASE("model structure queries") {
  SeededRng rng(2);
  Model be = build_model(small_be_spec(3), rng);
  CHECK(be.in_dim() == 5);
  CHECK(be.members() == 3);
  CHECK(be.has_ensemble_layers());
  CHECK_FALSE(be.has_dropout_layers());
  CHECK(be.trunk.size() == 2);
  CHECK(be.heads.size() == 1);
  // 5·4 + 3(5+8) = 59; 4·3 + 3(4+6) = 42; head 3·2+2 = 8
  CHECK(be.trunk_param_count() == 59 + 42);
  CHECK(be.head_param_count() == 8);
  CHECK(be.param_count() == 109);

  SeededRng rng2(2);
  ModelSpec drop = small_be_spec(0);
  drop.dropout_rate = 0.1;
  Model dense = build_model(drop, rng2);
  CHECK(dense.members() == 1);
  CHECK_FALSE(dense.has_ensemble_layers());
  CHECK(dense.has_dropout_layers());
  CHECK(dense.trunk.size() == 4);  // two hidden layers, each followed by dropout
}

TEST_CASE("dense and ensemble trunks share weight draws under one seed") {
  SeededRng rng_a(77), rng_b(77);
  ModelSpec be_spec = small_be_spec(4);
  be_spec.fast_init = FastInit::kUnit;
  Model be = build_model(be_spec, rng_a);
  Model dense = build_model(small_be_spec(0), rng_b);

  for (std::size_t i = 0; i < be.trunk.size(); ++i) {
    const auto& bl = std::get<BatchEnsembleLayer>(be.trunk[i]);
    const auto& dl = std::get<DenseLayer>(dense.trunk[i]);
    CHECK(bits_equal(bl.slow, dl.weight));
    for (double v : bl.fast_r.values()) CHECK(v == 1.0);
  }
  CHECK(bits_equal(be.heads[0].weight, dense.heads[0].weight));
}

TEST_CASE("validate_model rejects bad structures") {
  Model m;
  CHECK_THROWS_AS(validate_model(m), ArgumentError);  // no head

  m.heads.emplace_back(3, 2, Activation::kIdentity);
  m.trunk.emplace_back(DropoutLayer(0.5));
  CHECK_THROWS_AS(validate_model(m), ArgumentError);  // leading dropout

  m.trunk.clear();
  m.trunk.emplace_back(DenseLayer(5, 4));
  m.trunk.emplace_back(DenseLayer(3, 3));  // 4 → 3 mismatch
  CHECK_THROWS_AS(validate_model(m), ShapeError);

  m.trunk.clear();
  m.trunk.emplace_back(BatchEnsembleLayer(5, 4, 2));
  m.trunk.emplace_back(BatchEnsembleLayer(4, 3, 3));  // ensemble sizes differ
  CHECK_THROWS_AS(validate_model(m), ArgumentError);

  m.trunk.clear();
  m.trunk.emplace_back(DenseLayer(5, 4));  // head expects 3, trunk gives 4
  CHECK_THROWS_AS(validate_model(m), ShapeError);
}

TEST_CASE("model_forward validates the mode") {
  SeededRng rng(3);
  Model be = build_model(small_be_spec(2), rng);
  Matrix2D x = random_matrix(4, 5, rng);
  ForwardMode mode;  // missing assignment
  CHECK_THROWS_AS(model_forward(be, x, mode), ArgumentError);

  std::vector<std::size_t> assign(4, 0);
  mode.assign = &assign;
  mode.head = 1;
  CHECK_THROWS_AS(model_forward(be, x, mode), IndexError);

  ModelSpec drop_spec = small_be_spec(0);
  drop_spec.dropout_rate = 0.2;
  Model drop = build_model(drop_spec, rng);
  ForwardMode sampling;
  sampling.sample_dropout = true;  // missing rng
  CHECK_THROWS_AS(model_forward(drop, x, sampling), ArgumentError);
}

TEST_CASE("end-to-end gradients match finite differences through the full model") {
  SeededRng rng(5);
  Model model = build_model(small_be_spec(2), rng);
  // Fresh models have zero biases, so an input row that dies entirely in one
  // relu layer parks the next layer's pre-activation exactly on the kink,
  // where central differences see half the one-sided slope. Randomizing the
  // biases keeps the check about the backward pass, not kink luck.
  for (const ParamRef& p : trainable_params(model)) {
    if (p.kind == ParamKind::kBias || p.kind == ParamKind::kHeadBias) {
      for (double& v : p.tensor->values()) v = rng.next_uniform(-0.5, 0.5);
    }
  }
  Matrix2D x = random_matrix(6, 5, rng);
  std::vector<std::size_t> labels{0, 1, 1, 0, 1, 0};
  std::vector<std::size_t> assign{0, 0, 0, 1, 1, 1};

  ForwardMode mode;
  mode.assign = &assign;

  auto loss = [&]() {
    return softmax_xent(model_forward(model, x, mode).logits, labels).loss;
  };

  ModelForwardResult fwd = model_forward(model, x, mode);
  for (const LayerCache& lc : fwd.cache.trunk) {
    if (const auto* bc = std::get_if<BeForwardCache>(&lc)) {
      for (double a : bc->a.values()) REQUIRE(std::fabs(a) > 1e-4);
    }
  }
  XentResult xent = softmax_xent(fwd.logits, labels);
  ModelGradients grads = model_backward(model, xent.grad, fwd.cache);

  std::vector<ParamRef> params = trainable_params(model);
  std::vector<GradRef> gtens = gradient_tensors(model, grads);
  REQUIRE(params.size() == gtens.size());
  REQUIRE(params.size() == 10);  // 2 ensemble layers × 4 tensors + head × 2
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(params[i].kind == gtens[i].kind);
    REQUIRE(params[i].tensor->same_shape(*gtens[i].tensor));
    Matrix2D fd = oracle::central_diff(*params[i].tensor, loss);
    CHECK(oracle::grad_err_ratio(*gtens[i].tensor, fd) <= 1.0);
  }
}

TEST_CASE("backward reaches only the head the forward pass used") {
  SeededRng rng(7);
  ModelSpec spec = small_be_spec(2);
  spec.heads = 3;
  Model model = build_model(spec, rng);
  Matrix2D x = random_matrix(4, 5, rng);
  std::vector<std::size_t> assign{0, 1, 0, 1};

  ForwardMode mode;
  mode.assign = &assign;
  mode.head = 1;
  ModelForwardResult fwd = model_forward(model, x, mode);
  Matrix2D g = random_matrix(4, 2, rng);
  ModelGradients grads = model_backward(model, g, fwd.cache);

  REQUIRE(grads.heads.size() == 3);
  CHECK(grads.head_id == 1);
  for (std::size_t h : {std::size_t{0}, std::size_t{2}}) {
    for (double v : grads.heads[h].weight.values()) CHECK(v == 0.0);
    for (double v : grads.heads[h].bias.values()) CHECK(v == 0.0);
  }
  double active = 0.0;
  for (double v : grads.heads[1].weight.values()) active += std::fabs(v);
  CHECK(active > 0.0);
}

TEST_CASE("dropout layers are identity outside sampling mode") {
  SeededRng rng(9);
  ModelSpec spec = small_be_spec(0);
  spec.dropout_rate = 0.5;
  Model model = build_model(spec, rng);
  Matrix2D x = random_matrix(4, 5, rng);

  ForwardMode mode;
  Matrix2D a = model_forward(model, x, mode).logits;
  Matrix2D b = model_forward(model, x, mode).logits;
  CHECK(bits_equal(a, b));

  SeededRng drng(11);
  ForwardMode sampling;
  sampling.sample_dropout = true;
  sampling.dropout_rng = &drng;
  Matrix2D c = model_forward(model, x, sampling).logits;
  CHECK_FALSE(bits_equal(a, c));
}

TEST_CASE("model_backward rejects a mismatched cache") {
  SeededRng rng(13);
  Model model = build_model(small_be_spec(2), rng);
  Matrix2D x = random_matrix(4, 5, rng);
  std::vector<std::size_t> assign(4, 0);
  ForwardMode mode;
  mode.assign = &assign;
  ModelForwardResult fwd = model_forward(model, x, mode);

  Model other = build_model(small_be_spec(2), rng);
  other.trunk.pop_back();
  Matrix2D g(4, 2);
  CHECK_THROWS_AS(model_backward(other, g, fwd.cache), StateError);
}
