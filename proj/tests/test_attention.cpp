#include <doctest.h>

#include <random>

#include "moodval/attention.hpp"
#include "moodval/error.hpp"
#include "moodval/models.hpp"
#include "support.hpp"

using namespace moodval;
using testing::random_tensor;

namespace {

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void check_bounded_and_shaped(AttentionModule& m, const Tensor& x) {
  const Tensor y = m.forward(x);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    REQUIRE(std::abs(y.values()[i]) <= std::abs(x.values()[i]));
  }
  for (double g : m.last_gate().values()) {
    REQUIRE(g > 0.0);
    REQUIRE(g < 1.0);
  }
}

std::vector<Tensor> params_of(const nn::Module& m) { return m.parameters(); }

template <class... Parts>
std::vector<Tensor> join(std::vector<Tensor> head, Parts... rest) {
  (head.insert(head.end(), rest.begin(), rest.end()), ...);
  return head;
}

}  // namespace

TEST_CASE("attention modules preserve shape and never amplify") {
  std::mt19937_64 gen(51);
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + gen() % 3, c = 1 + gen() % 9, t = 1 + gen() % 5;
    const std::size_t h = 1 + gen() % 9, w = 1 + gen() % 9;
    const std::size_t kernel = 1 + 2 * (gen() % 4);
    SpatialAttention spatial(kernel, rng);
    ChannelAttention channel(c, 1 + gen() % 16, rng);
    TemporalAttention temporal(t, 1 + gen() % 4, rng);
    const auto frame = random_tensor(gen, {b, c, h, w}, false, -3, 3);
    const auto clip = random_tensor(gen, {b, c, t, h, w}, false, -3, 3);
    check_bounded_and_shaped(spatial, frame);
    check_bounded_and_shaped(spatial, clip);
    check_bounded_and_shaped(channel, frame);
    check_bounded_and_shaped(channel, clip);
    check_bounded_and_shaped(temporal, clip);
  }
}

TEST_CASE("fixed shapes from the module contracts") {
  std::mt19937_64 gen(52);
  Rng rng(52);
  SpatialAttention spatial(7, rng);
  CHECK(spatial.forward(random_tensor(gen, {1, 8, 16, 16})).shape() == Shape{1, 8, 16, 16});
  CHECK(spatial.forward(random_tensor(gen, {1, 8, 5, 16, 16})).shape() == Shape{1, 8, 5, 16, 16});

  ChannelAttention channel(8, 16, rng);
  const auto flat = Tensor::filled({2, 8, 4, 4}, 0.7);
  CHECK(channel.forward(flat).shape() == flat.shape());

  TemporalAttention single(1, 16, rng);
  const auto y = single.forward(random_tensor(gen, {2, 3, 1, 4, 4}));
  CHECK(y.shape() == Shape{2, 3, 1, 4, 4});
  CHECK(single.last_gate().numel() == 2);
}

TEST_CASE("spatial attention shares its filter over time") {
  std::mt19937_64 gen(53);
  Rng rng(53);
  SpatialAttention spatial(3, rng);
  const auto clip = random_tensor(gen, {2, 4, 3, 5, 5});
  const auto y = spatial.forward(clip);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto frame = ops::reshape(ops::slice(clip, 2, t, t + 1), {2, 4, 5, 5});
    const auto yt = ops::reshape(ops::slice(y, 2, t, t + 1), {2, 4, 5, 5});
    const auto expected = spatial.forward(frame);
    for (std::size_t i = 0; i < yt.numel(); ++i) {
      CHECK(yt.values()[i] == doctest::Approx(expected.values()[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("saturated gates are the identity") {
  std::mt19937_64 gen(54);
  Rng rng(54);
  const auto x = random_tensor(gen, {2, 6, 4, 5, 5}, false, -2, 2);
  SpatialAttention s(5, rng);
  ChannelAttention c(6, 2, rng);
  TemporalAttention t(4, 2, rng);
  for (AttentionModule* m : std::initializer_list<AttentionModule*>{&s, &c, &t}) {
    m->saturate();
    CHECK(values_of(m->forward(x)) == values_of(x));
  }
}

TEST_CASE("composition applies modules in order") {
  std::mt19937_64 gen(55);
  Rng rng(55);
  auto s = std::make_shared<SpatialAttention>(3, rng);
  auto c = std::make_shared<ChannelAttention>(4, 2, rng);
  auto t = std::make_shared<TemporalAttention>(3, 1, rng);
  const auto x = random_tensor(gen, {2, 4, 3, 6, 6});

  AttentionSequence sc;
  sc.append(s);
  sc.append(c);
  CHECK(values_of(sc.forward(x)) == values_of(c->forward(s->forward(x))));

  AttentionSequence only;
  only.append(c);
  CHECK(values_of(only.forward(x)) == values_of(c->forward(x)));

  AttentionSequence sct;
  sct.append(s);
  sct.append(c);
  sct.append(t);
  CHECK(values_of(sct.forward(x)) == values_of(t->forward(sc.forward(x))));

  auto st = make_attention({AttentionKind::spatial, AttentionKind::temporal}, 3, 1, 4, 3, rng);
  CHECK(st->forward(x).shape() == x.shape());
  CHECK(sc.applications() == 2);
}

TEST_CASE("temporal attention needs a time axis") {
  std::mt19937_64 gen(56);
  Rng rng(56);
  TemporalAttention t(3, 1, rng);
  CHECK_THROWS_AS(t.forward(random_tensor(gen, {1, 2, 4, 4})), ConfigError);
  CHECK_THROWS_AS(make_attention({AttentionKind::spatial, AttentionKind::temporal}, 3, 1, 4, 0, rng),
                  ConfigError);
}

TEST_CASE("attention config validation") {
  AttentionConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.kinds = {AttentionKind::spatial, AttentionKind::spatial};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.kinds = {AttentionKind::spatial, AttentionKind::channel};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.label() == "spatial-channel");
  cfg.spatial_kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.spatial_kernel = 7;
  cfg.reduction = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(attention_kind_from_string("global"), ConfigError);
  CHECK_THROWS_AS(placement_from_string("inside"), ConfigError);
}

TEST_CASE("attention gradients match central differences") {
  std::mt19937_64 gen(57);
  Rng rng(57);
  constexpr double tol = 1e-4;

  SUBCASE("spatial, rank 4 and 5") {
    SpatialAttention m(3, rng);
    for (Shape shape : {Shape{2, 3, 5, 5}, Shape{2, 3, 4, 5, 5}}) {
      auto x = random_tensor(gen, shape, true);
      auto loss = [&] { return testing::probe_loss(m.forward(x)); };
      CHECK(testing::check_gradients(loss, join({x}, params_of(m))).worst_relative < tol);
    }
  }
  SUBCASE("channel") {
    ChannelAttention m(6, 2, rng);
    auto x = random_tensor(gen, {2, 6, 3, 4, 4}, true);
    auto loss = [&] { return testing::probe_loss(m.forward(x)); };
    CHECK(testing::check_gradients(loss, join({x}, params_of(m))).worst_relative < tol);
  }
  SUBCASE("temporal") {
    TemporalAttention m(5, 2, rng);
    auto x = random_tensor(gen, {2, 3, 5, 4, 4}, true);
    auto loss = [&] { return testing::probe_loss(m.forward(x)); };
    CHECK(testing::check_gradients(loss, join({x}, params_of(m))).worst_relative < tol);
  }
  SUBCASE("composed") {
    auto seq = make_attention({AttentionKind::spatial, AttentionKind::channel, AttentionKind::temporal},
                              3, 2, 4, 3, rng);
    auto x = random_tensor(gen, {2, 4, 3, 6, 6}, true);
    auto loss = [&] { return testing::probe_loss(seq->forward(x)); };
    CHECK(testing::check_gradients(loss, join({x}, params_of(*seq))).worst_relative < tol);
  }
}

TEST_CASE("placement on encoders") {
  std::mt19937_64 gen(58);
  const auto clip = random_tensor(gen, {2, 3, 4, 16, 16});
  AttentionConfig cfg;
  cfg.kinds = {AttentionKind::spatial, AttentionKind::channel};
  cfg.spatial_kernel = 3;
  cfg.reduction = 4;

  auto make_encoder = [] {
    Rng rng(7);
    return std::make_shared<ClipEncoder>(3, 4, std::vector<std::size_t>{4, 4, 8}, rng);
  };

  SUBCASE("outside applies once per forward") {
    cfg.placement = Placement::outside_backbone;
    Rng rng(1);
    auto placed = place(make_encoder(), cfg, rng);
    const auto hooks = placed->attention_hooks();
    REQUIRE(hooks.size() == 1);
    placed->forward(clip);
    CHECK(hooks[0]->applications() == 1);
    placed->forward(clip);
    CHECK(hooks[0]->applications() == 2);
  }
  SUBCASE("within applies once per residual block") {
    cfg.placement = Placement::within_block;
    Rng rng(1);
    auto placed = place(make_encoder(), cfg, rng);
    const auto hooks = placed->attention_hooks();
    REQUIRE(hooks.size() == placed->block_count());
    CHECK(hooks.size() == 3);
    placed->forward(clip);
    std::size_t total = 0;
    for (const auto& h : hooks) {
      CHECK(h->applications() == 1);
      total += h->applications();
    }
    CHECK(total == placed->block_count());
  }
  SUBCASE("saturated gates reproduce the plain backbone") {
    for (auto placement : {Placement::within_block, Placement::outside_backbone}) {
      cfg.placement = placement;
      auto plain = make_encoder();
      Rng rng(2);
      auto placed = place(make_encoder(), cfg, rng);
      plain->set_training(false);
      placed->set_training(false);
      for (auto& h : placed->attention_hooks()) h->saturate();
      CHECK(values_of(placed->forward(clip)) == values_of(plain->forward(clip)));
    }
  }
  SUBCASE("within needs block hooks") {
    struct Bare : Backbone {
      Tensor forward(const Tensor& x) override { return x; }
      std::size_t output_dim() const override { return 1; }
      Geometry input_geometry() const override { return {3, 4}; }
    };
    cfg.placement = Placement::within_block;
    Rng rng(3);
    CHECK_THROWS_AS(place(std::make_shared<Bare>(), cfg, rng), ConfigError);
    cfg.placement = Placement::outside_backbone;
    CHECK_NOTHROW(place(std::make_shared<Bare>(), cfg, rng));
  }
  SUBCASE("gradients through both placements") {
    for (auto placement : {Placement::within_block, Placement::outside_backbone}) {
      cfg.placement = placement;
      Rng rng(4);
      Rng enc_rng(5);
      auto placed = place(std::make_shared<ClipEncoder>(2, 3, std::vector<std::size_t>{4, 4}, enc_rng),
                          cfg, rng);
      auto x = random_tensor(gen, {2, 2, 3, 6, 6}, true);
      std::vector<Tensor> attn_params;
      for (auto& h : placed->attention_hooks()) {
        for (auto& p : h->parameters()) attn_params.push_back(p);
      }
      auto loss = [&] { return testing::probe_loss(placed->forward(x)); };
      const auto r = testing::check_gradients(loss, join({x}, attn_params), 1e-5, 1e-4, 40);
      CHECK(r.worst_relative < 1e-4);
    }
  }
}
