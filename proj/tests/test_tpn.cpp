#include <gtest/gtest.h>

#include <cmath>

#include "pf/error.hpp"
#include "pf/tpn.hpp"
#include "test_util.hpp"

using namespace pf;

namespace {

TpnConfig tiny_config() {
  TpnConfig c;
  c.embed_dim = 4;
  c.enc_hidden = 3;
  c.cond_dim = 3;
  c.dec_hidden = 3;
  c.attn_dim = 2;
  c.disc_hidden = {4};
  return c;
}

Vocabulary tiny_vocab() { return Vocabulary({"<pad>", "blue", "red", "sky"}); }

TpnModel formula_model() {
  TpnModel m(tiny_config(), tiny_vocab());
  test::fill_formula(m.params(), 0.5, 1.3, 0.37);
  return m;
}

TextInput oracle_text() { return {{{1, 2, 3}, {3, 1, 0}}, Tensor({2, 3}, {1, 1, 1, 1, 1, 0})}; }

std::vector<Tensor> oracle_eps() {
  std::vector<Tensor> eps;
  for (int t = 0; t < 3; ++t) {
    Tensor e({2, 3});
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 3; ++d) e.at(b, d) = 0.4 * std::cos(0.9 * t + 0.5 * b + 0.3 * d);
    eps.push_back(e);
  }
  return eps;
}

TpnModel random_model(std::uint64_t seed, int hidden = 8) {
  TpnConfig c;
  c.embed_dim = 6;
  c.enc_hidden = c.cond_dim = c.dec_hidden = c.attn_dim = hidden;
  c.disc_hidden = {hidden};
  Vocabulary v({"<pad>", "autumn", "breeze", "calm", "dawn", "ember"});
  TpnModel m(c, v);
  m.initialize(random_embeddings(v, seed, 6).matrix, 0.3, seed);
  return m;
}

void expect_all_near(const Tensor& t, const std::vector<double>& want, double tol) {
  ASSERT_EQ(t.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

}  // namespace

// Values from tests/oracles/nn_forward.py (torch GRUCell, softmax, linear).
TEST(Tpn, ForwardMatchesReference) {
  const TpnModel m = formula_model();
  ag::NoGradGuard ng;
  const TextInput text = oracle_text();
  const TpnForward f = m.generate(text, oracle_eps());
  expect_all_near(f.out.palette.value(),
                  {0.574516317770177, 0.479501623172,    0.309271399288771, 0.598123033026995, 0.492997710889705,
                   0.306536288255739, 0.609000451695607, 0.498111569190586, 0.302479106778998, 0.614238689034399,
                   0.500042023804991, 0.299227396960927, 0.616836676971528, 0.500741470367258, 0.297001579640843,
                   0.575043254171966, 0.480022785553901, 0.309701296139537, 0.59885819691451,  0.493674827881148,
                   0.307010312249709, 0.609819597515138, 0.498842753727109, 0.30294338199088,  0.615094156933168,
                   0.500792238180101, 0.299674627891236, 0.617708596802929, 0.501498246861803, 0.297435226482796},
                  1e-12);
  expect_all_near(f.out.attention[0].value(),
                  {0.3355586431908089, 0.3327652421642042, 0.331676114644987, 0.5014986505306912,
                   0.49850134946930885, 0.0},
                  1e-12);
  expect_all_near(f.out.attention[4].value(),
                  {0.33548470178425344, 0.33278630233031165, 0.3317289958854349, 0.5014502111367641,
                   0.4985497888632359, 0.0},
                  1e-12);
  expect_all_near(f.cond.c_bar.value(),
                  {0.35174437198151215, 0.0977253623972361, -0.15703929383799597, 0.37161204098581413,
                   0.1001834291672283, -0.1707804121511415},
                  1e-12);
  expect_all_near(m.discriminate(f.cond.c_bar, f.out.palette).value(), {0.5860175215434623, 0.5857127203576713},
                  1e-12);
  EXPECT_NEAR(kl_gaussian(f.ca, text.mask).item(), 0.15920550082932886, 1e-12);
}

TEST(Tpn, DecodeStepMatchesDecodePalette) {
  const TpnModel m = formula_model();
  ag::NoGradGuard ng;
  const TextInput text = oracle_text();
  const TpnForward f = m.generate(text, oracle_eps());
  DecoderState st{ag::constant(Tensor({2, 3})), ag::constant(Tensor({2, 3})), 0};
  for (int i = 0; i < kPaletteSteps; ++i) {
    const Attention a = m.decode_step(st, f.cond);
    for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(a.weights.value()[j], f.out.attention[i].value()[j]);
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(st.last_color.value().at(b, c), f.out.palette.value().at(b, 3 * i + c));
  }
  EXPECT_THROW(m.decode_step(st, f.cond), InvalidInput);
}

TEST(Tpn, AttentionRowsNormalizedAndPaddingZero) {
  const TpnModel m = random_model(3);
  ag::NoGradGuard ng;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int B = 3, T = 1 + static_cast<int>(rng() % 6);
    TextInput text;
    text.mask = Tensor({B, T});
    for (int b = 0; b < B; ++b) {
      const int len = 1 + static_cast<int>(rng() % T);
      std::vector<int> ids(T, 0);
      for (int t = 0; t < len; ++t) {
        ids[t] = 1 + static_cast<int>(rng() % 5);
        text.mask.at(b, t) = 1;
      }
      text.ids.push_back(ids);
    }
    const TpnForward f = m.generate(text, sample_noise(T, B, 8, rng()));
    ASSERT_EQ(f.out.attention.size(), 5u);
    ASSERT_EQ(f.out.palette.shape(), (Shape{B, 15}));
    for (const auto& a : f.out.attention)
      for (int b = 0; b < B; ++b) {
        double sum = 0;
        for (int t = 0; t < T; ++t) {
          if (text.mask.at(b, t) == 0) EXPECT_EQ(a.value().at(b, t), 0.0);
          sum += a.value().at(b, t);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    for (double v : f.out.palette.value().values()) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(Tpn, PaddingDoesNotChangeResult) {
  const TpnModel m = random_model(4);
  ag::NoGradGuard ng;
  const TextInput alone{{{2, 4}}, Tensor({1, 2}, 1.0)};
  const TextInput padded{{{2, 4, 0, 0}, {1, 3, 5, 2}}, Tensor({2, 4}, {1, 1, 0, 0, 1, 1, 1, 1})};
  const Tensor a = m.generate(alone, zero_noise(2, 1, 8)).out.palette.value();
  const Tensor b = m.generate(padded, zero_noise(4, 2, 8)).out.palette.value();
  for (int j = 0; j < 15; ++j) EXPECT_NEAR(a[j], b.at(0, j), 1e-14);
}

TEST(Tpn, EmitsFiveColorsForAnyLength) {
  const TpnModel m = random_model(5);
  for (const char* text : {"autumn", "autumn breeze", "calm dawn ember autumn breeze calm dawn ember autumn"}) {
    const PaletteSamples s = sample_palettes(m, text, 2, 1);
    ASSERT_EQ(s.samples.size(), 2u);
    for (const auto& sp : s.samples) {
      EXPECT_EQ(sp.attention.size(), 5u);
      EXPECT_EQ(sp.attention[0].size(), s.tokens.size());
    }
  }
}

TEST(Tpn, ZeroNoiseGivesIdenticalPalettes) {
  const TpnModel m = random_model(6);
  const PaletteSamples s = sample_palettes(m, "calm dawn", 10, 42, true);
  for (const auto& sp : s.samples) EXPECT_EQ(sp.palette, s.samples[0].palette);
}

TEST(Tpn, SamplingIsSeeded) {
  const TpnModel m = random_model(7);
  const PaletteSamples a = sample_palettes(m, "autumn breeze", 3, 7);
  const PaletteSamples b = sample_palettes(m, "autumn breeze", 3, 7);
  const PaletteSamples c = sample_palettes(m, "autumn breeze", 3, 8);
  ASSERT_EQ(a.samples.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a.samples[i].palette, b.samples[i].palette);
    EXPECT_EQ(a.samples[i].attention, b.samples[i].attention);
  }
  EXPECT_FALSE(a.samples[0].palette == c.samples[0].palette);
  EXPECT_FALSE(a.samples[0].palette == a.samples[1].palette);
}

TEST(Tpn, UnknownTokensFlagged) {
  const TpnModel m = random_model(8);
  const PaletteSamples some = sample_palettes(m, "autumn zebra", 1, 0);
  EXPECT_EQ(some.unknown_tokens, std::vector<std::string>{"zebra"});
  EXPECT_FALSE(some.all_unknown);
  const PaletteSamples none = sample_palettes(m, "zebra quokka", 1, 0);
  EXPECT_TRUE(none.all_unknown);
  EXPECT_EQ(none.samples.size(), 1u);
  EXPECT_THROW(sample_palettes(m, "  ,. ", 1, 0), InvalidInput);
  EXPECT_THROW(sample_palettes(m, "autumn", 0, 0), InvalidInput);
}

TEST(Tpn, CheckpointRoundTrip) {
  const TpnModel m = random_model(9);
  Checkpoint ck;
  ck.sections["tpn"] = m.to_section();
  const Checkpoint back = Checkpoint::from_bytes(ck.to_bytes());
  const TpnModel r = TpnModel::from_section(back.section("tpn"));
  EXPECT_EQ(r.vocab().tokens(), m.vocab().tokens());
  EXPECT_EQ(r.config_hash(), m.config_hash());
  const auto a = sample_palettes(m, "ember dawn", 4, 3), b = sample_palettes(r, "ember dawn", 4, 3);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a.samples[i].palette, b.samples[i].palette);

  CheckpointSection tampered = m.to_section();
  tampered.meta["config_hash"] = "0000000000000000";
  EXPECT_THROW(TpnModel::from_section(tampered), InvalidInput);
}

TEST(Tpn, InitializeChecksEmbeddingShape) {
  TpnModel m(tiny_config(), tiny_vocab());
  EXPECT_THROW(m.initialize(Tensor({4, 5}), 0.05, 1), ShapeError);
  EXPECT_THROW(TpnModel(TpnConfig{.embed_dim = 0}, tiny_vocab()), InvalidInput);
}

TEST(Tpn, ParameterGroupsArePartitioned) {
  const TpnModel m = formula_model();
  const std::size_t total = m.params().params().size();
  EXPECT_EQ(m.generator_params().size() + m.discriminator_params().size() + 1, total);  // + frozen embedding
  for (const auto& p : m.params().params())
    if (p.name.starts_with("disc.")) EXPECT_TRUE(p.kind == nn::ParamKind::Weight || p.kind == nn::ParamKind::Bias);
}

// End-to-end gradient through encoder, CA, attention and decoder.
TEST(Tpn, GeneratorGradientMatchesFiniteDifferences) {
  TpnModel m = formula_model();
  const TextInput text = oracle_text();
  const auto eps = oracle_eps();
  const Tensor target({2, 15}, 0.1);
  auto loss = [&] {
    const TpnForward f = m.generate(text, eps);
    return ag::add(huber_loss(f.out.palette, ag::constant(target)), kl_gaussian(f.ca, text.mask));
  };
  for (const std::string name : {"ca.fc.weight", "attention.w_c.weight", "encoder.gru.w_hh"}) {
    m.params().zero_grad();
    ag::Var w = m.params().at(name).var;
    loss().backward();
    const Tensor analytic = w.grad();
    double diff2 = 0, a2 = 0;
    for (std::size_t i = 0; i < w.value().size(); ++i) {
      const double keep = w.value()[i];
      double up, down;
      {
        ag::NoGradGuard ng;
        w.mutable_value()[i] = keep + 1e-6;
        up = loss().item();
        w.mutable_value()[i] = keep - 1e-6;
        down = loss().item();
        w.mutable_value()[i] = keep;
      }
      const double numeric = (up - down) / 2e-6;
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
    }
    EXPECT_LT(std::sqrt(diff2 / a2), 1e-6) << name;
  }
}
