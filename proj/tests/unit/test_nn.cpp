#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>

#include "fixtures.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/nn/adamw.hpp"
#include "lungcadex/nn/checkpoint.hpp"
#include "lungcadex/nn/ops.hpp"
#include "lungcadex/nn/parameters.hpp"
#include "lungcadex/rng.hpp"

using namespace lungcadex;
using namespace lungcadex::nn;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, scale));
  return t;
}

/// Compares backward() of sum(op(x) * w) against central differences in x.
void check_gradient(const std::function<Var(const Var&)>& op, Tensor input, std::uint64_t seed = 1) {
  Rng rng(seed);
  Var x = Var::parameter(input);
  const Var y = op(x);
  const Tensor weights = random_tensor(rng, y.shape());
  const Var w = Var::constant(weights);
  auto objective = [&](const Tensor& at) {
    const Var out = op(Var::constant(at));
    double s = 0.0;
    for (std::size_t i = 0; i < out.value().size(); ++i) s += double(out.value()[i]) * weights[i];
    return s;
  };
  sum(mul(y, w)).backward();
  const float h = 1e-2f;
  for (std::size_t i = 0; i < input.size(); ++i) {
    Tensor up = input, down = input;
    up[i] += h;
    down[i] -= h;
    const double numeric = (objective(up) - objective(down)) / (2.0 * h);
    const double analytic = x.grad()[i];
    CHECK(std::abs(numeric - analytic) <= 2e-2 * std::max(1.0, std::abs(numeric)));
  }
}

}  // namespace

TEST_CASE("matrix op gradients") {
  Rng rng(4);
  const Tensor b = random_tensor(rng, {3, 4});
  check_gradient([&](const Var& x) { return matmul(x, Var::constant(b)); }, random_tensor(rng, {2, 3}));
  check_gradient([&](const Var& x) { return matmul_nt(x, Var::constant(b)); }, random_tensor(rng, {5, 4}));
  const Tensor left = random_tensor(rng, {2, 3});
  check_gradient([&](const Var& x) { return matmul(Var::constant(left), x); }, random_tensor(rng, {3, 2}));
  check_gradient([](const Var& x) { return transpose(x); }, random_tensor(rng, {2, 5}));
  const Tensor rows = random_tensor(rng, {4, 3});
  check_gradient([](const Var& x) { return add_bias(x, Var::constant(Tensor({3}, 0.5f))); }, rows);
  check_gradient([&](const Var& bias) { return add_bias(Var::constant(rows), bias); }, random_tensor(rng, {3}));
}

TEST_CASE("elementwise op gradients") {
  Rng rng(5);
  check_gradient([](const Var& x) { return gelu(x); }, random_tensor(rng, {3, 4}));
  check_gradient([](const Var& x) { return sigmoid(x); }, random_tensor(rng, {3, 4}));
  check_gradient([](const Var& x) { return scale(x, -1.5f); }, random_tensor(rng, {2, 2}));
  check_gradient([](const Var& x) { return mul(x, x); }, random_tensor(rng, {2, 3}));
  check_gradient([](const Var& x) { return add(x, x); }, random_tensor(rng, {2, 3}));
}

TEST_CASE("row-wise op gradients") {
  Rng rng(6);
  check_gradient([](const Var& x) { return softmax_rows(x); }, random_tensor(rng, {3, 5}));
  check_gradient([](const Var& x) { return l2_normalize_rows(x); }, random_tensor(rng, {3, 4}));
  const Var gain = Var::constant(random_tensor(rng, {6}));
  const Var bias = Var::constant(random_tensor(rng, {6}));
  check_gradient([&](const Var& x) { return layer_norm(x, gain, bias); }, random_tensor(rng, {2, 6}));
}

TEST_CASE("shape op gradients") {
  Rng rng(7);
  check_gradient([](const Var& x) { return concat_rows({x, scale(x, 2.0f)}); }, random_tensor(rng, {2, 3}));
  check_gradient([](const Var& x) { return concat_cols({x, x}); }, random_tensor(rng, {2, 3}));
  check_gradient([](const Var& x) { return slice_rows(x, 1, 2); }, random_tensor(rng, {4, 3}));
  check_gradient([](const Var& x) { return slice_cols(x, 1, 2); }, random_tensor(rng, {3, 4}));
  check_gradient([](const Var& x) { return reshape(x, {3, 2}); }, random_tensor(rng, {2, 3}));
  const std::vector<int> ids{2, 0, 2};
  check_gradient([&](const Var& table) { return embedding(table, ids); }, random_tensor(rng, {4, 3}));
}

TEST_CASE("feature map op gradients") {
  Rng rng(8);
  const Var weight = Var::constant(random_tensor(rng, {3, 2 * 9}, 0.3));
  const Var bias = Var::constant(random_tensor(rng, {3}));
  check_gradient([&](const Var& x) { return conv2d(x, weight, bias, 3, 2, 1); }, random_tensor(rng, {2, 6, 6}));
  Tensor distinct({2, 5, 5});
  for (std::size_t i = 0; i < distinct.size(); ++i) distinct[i] = 0.1f * float((i * 17) % distinct.size());
  check_gradient([](const Var& x) { return max_pool2d(x, 3, 2, 1); }, distinct);
  check_gradient([](const Var& x) { return global_avg_pool(x); }, random_tensor(rng, {3, 4, 4}));
  check_gradient([](const Var& x) { return upsample_bilinear(x, 7, 5); }, random_tensor(rng, {2, 3, 3}));
}

TEST_CASE("conv2d weight gradient") {
  Rng rng(9);
  const Tensor input = random_tensor(rng, {2, 5, 5});
  const Var bias = Var::constant(Tensor({3}, 0.1f));
  check_gradient([&](const Var& w) { return conv2d(Var::constant(input), w, bias, 3, 1, 1); },
                 random_tensor(rng, {3, 18}, 0.3));
}

TEST_CASE("ops reject mismatched shapes") {
  const Var a = Var::constant(Tensor({2, 3}));
  const Var b = Var::constant(Tensor({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), ContractError);
  CHECK_THROWS_AS(add(a, Var::constant(Tensor({3, 2}))), ContractError);
  CHECK_THROWS_AS(reshape(a, {4, 2}), ContractError);
  CHECK_THROWS_AS(slice_rows(a, 1, 2), ContractError);
  CHECK_THROWS_AS(Var::parameter(Tensor({2, 3})).backward(), ContractError);
}

TEST_CASE("constants receive no gradient") {
  Var x = Var::parameter(Tensor({1, 2}, 1.0f));
  const Var c = Var::constant(Tensor({1, 2}, 3.0f));
  sum(mul(x, c)).backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(c.grad().size() == 0);
}

TEST_CASE("parameter store checksums and trainable flags") {
  Rng rng(1);
  ParameterStore store;
  store.create_normal("a.w", {2, 2}, 2, rng);
  store.create_filled("b.w", {3}, 0.5f);
  const auto before = store.checksum("a.");
  CHECK(store.parameter_count() == 7);
  CHECK(store.parameter_count("b.") == 3);
  store.set_trainable("a.", false);
  CHECK_FALSE(store.entries()[0].trainable);
  CHECK(store.entries()[1].trainable);
  ParameterStore copy = store;
  copy.entries()[0].var.mutable_value()[0] += 1.0f;
  CHECK(store.checksum("a.") == before);
  CHECK(copy.checksum("a.") != before);
  CHECK(store.find("b.w") == 1);
  CHECK(store.find("zzz") == -1);
}

TEST_CASE("AdamW skips frozen parameters and decays trainable ones") {
  ParameterStore store;
  store.create_filled("frozen", {2}, 1.0f, false);
  store.create_filled("live", {2}, 1.0f);
  AdamW opt(store, AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 3; ++step) {
    Var loss = sum(add(store.at(0), store.at(1)));
    loss.backward();
    opt.step(store);
  }
  CHECK(store.at(0).value()[0] == 1.0f);
  CHECK(store.at(1).value()[0] == doctest::Approx(0.7).epsilon(1e-4));
  CHECK(opt.steps() == 3);
  CHECK(store.at(1).grad().size() == 0);

  ParameterStore decay;
  decay.create_filled("w", {1}, 2.0f);
  AdamW wd(decay, AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.5});
  Var zero = scale(sum(decay.at(0)), 0.0f);
  zero.backward();
  wd.step(decay);
  CHECK(decay.at(0).value()[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("checkpoints round trip and reject mismatches") {
  Rng rng(3);
  ParameterStore store;
  store.create_normal("x", {3, 2}, 2, rng);
  store.create_normal("y", {4}, 4, rng);
  const auto dir = testing::scratch_dir("checkpoint");
  write_checkpoint(dir / "c.ckpt", {{"kind", "test"}}, store);
  const Checkpoint ck = read_checkpoint(dir / "c.ckpt");
  CHECK(ck.header.at("kind") == "test");
  ParameterStore target;
  target.create_filled("x", {3, 2}, 0.0f);
  target.create_filled("y", {4}, 0.0f);
  load_parameters(ck, target);
  CHECK(target.checksum() == store.checksum());
  ParameterStore wrong;
  wrong.create_filled("x", {2, 3}, 0.0f);
  wrong.create_filled("y", {4}, 0.0f);
  CHECK_THROWS_AS(load_parameters(ck, wrong), ConfigError);
  CHECK_THROWS_AS(read_checkpoint(dir / "none.ckpt"), MissingFileError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), SchemaError);
}

TEST_CASE("seed mixing gives distinct reproducible streams") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("external weights import under allowed prefixes only") {
  const cade::SegModel source(cade::SegModelConfig::toy(), 1);
  cade::SegModel target(cade::SegModelConfig::toy(), 2);
  ParameterStore encoder_only;
  for (const auto& e : source.parameters().entries()) {
    if (e.name.rfind(cade::kImageEncoderPrefix, 0) == 0) encoder_only.create(e.name, e.var.value());
  }
  const auto dir = testing::scratch_dir("import_weights");
  write_checkpoint(dir / "encoder.ckpt", {{"kind", "weights"}}, encoder_only);
  const std::vector<std::string> frozen{cade::kImageEncoderPrefix, cade::kMaskDecoderPrefix};
  const std::size_t copied = import_parameters(dir / "encoder.ckpt", target.parameters(), frozen);
  CHECK(copied == encoder_only.entries().size());
  CHECK(target.parameters().checksum(cade::kImageEncoderPrefix) ==
        source.parameters().checksum(cade::kImageEncoderPrefix));
  CHECK(target.parameters().checksum(cade::kMaskDecoderPrefix) !=
        source.parameters().checksum(cade::kMaskDecoderPrefix));
  CHECK_THROWS_AS(import_parameters(dir / "encoder.ckpt", target.parameters(), {cade::kMaskDecoderPrefix}),
                  ConfigError);
  ParameterStore wrong_shape;
  wrong_shape.create(encoder_only.entries().front().name, Tensor(Shape{1, 1}));
  write_checkpoint(dir / "wrong.ckpt", {}, wrong_shape);
  CHECK_THROWS_AS(import_parameters(dir / "wrong.ckpt", target.parameters(), frozen), ConfigError);
}
