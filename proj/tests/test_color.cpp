#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "pf/color.hpp"
#include "pf/error.hpp"
#include "sharma_pairs.hpp"

using namespace pf;

namespace {

struct RgbCase {
  Rgb8 rgb;
  LabColor lab;
};

// tests/oracles/color_reference.py
const RgbCase kRgbCases[] = {
    {{0, 0, 0}, {0.0, 0.0, 0.0}},
    {{255, 255, 255}, {100.0, -1.6666666158293708e-05, 6.666666463317483e-06}},
    {{255, 0, 0}, {53.240794141307205, 80.09245959641115, 67.20319651585298}},
    {{0, 255, 0}, {87.73472235279792, -86.1827164205346, 83.17932050269783}},
    {{0, 0, 255}, {32.297010932850725, 79.18751984512224, -107.8601617541481}},
    {{119, 119, 119}, {50.034440993686104, -9.48770639830343e-06, 3.795082559321372e-06}},
    {{12, 200, 77}, {70.81546481820388, -66.54287734413377, 48.871456422530414}},
    {{250, 128, 3}, {66.34753043921543, 40.903085903166215, 72.79096278123592}},
    {{1, 2, 3}, {0.5098286713241187, -0.12244735324951073, -0.47059578878119734}},
    {{90, 40, 160}, {29.98319428402702, 47.78979799480923, -56.214353943235494}},
};

struct DeCase {
  LabColor a, b;
  double expected;
};

const DeCase kRandomPairs[] = {
    {{23.230006602881627, 65.62114398235255, 5.593869930914067}, {90.56029292915433, -66.4874906936775, 47.15117142980526}, 104.33868051026805},
    {{90.52842836852739, -28.871858213564323, 62.95604388561128}, {66.57838754026727, -51.41257122993564, 56.87109426080147}, 19.53899315058061},
    {{77.73847238857799, -1.279314853518116, 17.183074116486182}, {62.88530517496142, 2.534851804401427, -7.966838246171463}, 23.840512822404925},
    {{78.28718997495206, -36.22834652402058, -33.599906878367605}, {61.010758337877924, 33.36940833724975, -47.48997191142621}, 40.8398508549969},
    {{43.43857887971608, -66.28456339002682, -62.878058696245944}, {95.86652161951795, 71.27002817895095, 88.43207336202107}, 77.51851911700375},
    {{58.477220536998786, -11.253714076630075, -73.470257216417}, {56.78886324001618, -40.90937187688306, -21.0908867863738}, 22.765254101223935},
    {{86.97495793705065, 72.72519598889482, -99.49531306398612}, {91.20653988671374, 57.88244482089172, 11.209706807903785}, 33.7979225759824},
    {{44.71704284643284, -69.61602825419689, 14.196753671343785}, {61.604017580634554, -38.76968640565019, 4.895367536313927}, 18.94953164359076},
    {{18.93379961119892, -76.95273387762632, 69.65845592256582}, {98.82397831444766, 91.73366500221564, -25.40886439604239}, 123.8815068281572},
    {{3.813638413489595, 92.51616408330574, 64.83161770093875}, {37.53566142461818, -63.86514027296839, -38.13109412283988}, 74.3404650817897},
    {{38.71896320003606, 76.26090664741886, 11.596190758196514}, {75.99830787762089, -24.32807298394792, 85.10492250348292}, 77.8092150156467},
    {{97.69371347643506, -90.7418381387584, 39.859743161029314}, {67.85912113125096, 16.31992508253923, 15.25241205017953}, 55.58079211859997},
};

}  // namespace

TEST(Color, Ciede2000SharmaPairs) {
  for (const auto& p : test::kSharmaPairs) {
    EXPECT_NEAR(ciede2000(p.a, p.b), p.expected, 1e-4);
    EXPECT_NEAR(ciede2000(p.b, p.a), p.expected, 1e-4);
  }
}

TEST(Color, Ciede2000MatchesReferenceOnRandomPairs) {
  for (const auto& c : kRandomPairs) EXPECT_NEAR(ciede2000(c.a, c.b), c.expected, 1e-9);
}

TEST(Color, Ciede2000IdentityAndSymmetry) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> L(0, 100), ab(-110, 110);
  for (int i = 0; i < 500; ++i) {
    const LabColor a{L(rng), ab(rng), ab(rng)}, b{L(rng), ab(rng), ab(rng)};
    EXPECT_EQ(ciede2000(a, a), 0.0);
    EXPECT_GT(ciede2000(a, b), 0.0);
    EXPECT_NEAR(ciede2000(a, b), ciede2000(b, a), 1e-10);
  }
  // Achromatic pair: the distance reduces to the lightness term.
  EXPECT_NEAR(ciede2000({50, 0, 0}, {60, 0, 0}), 10.0 / (1.0 + 0.015 * 25.0 / std::sqrt(45.0)), 1e-12);
}

TEST(Color, RgbToLabMatchesReference) {
  for (const auto& c : kRgbCases) {
    const LabColor got = rgb_to_lab(c.rgb);
    EXPECT_NEAR(got.L, c.lab.L, 1e-9);
    EXPECT_NEAR(got.a, c.lab.a, 1e-9);
    EXPECT_NEAR(got.b, c.lab.b, 1e-9);
  }
}

TEST(Color, RoundTripOnByteLattice) {
  for (int r = 0; r < 256; r += 5)
    for (int g = 0; g < 256; g += 5)
      for (int b = 0; b < 256; b += 5) {
        const Rgb8 in{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
        ASSERT_EQ(lab_to_rgb(rgb_to_lab(in)), in);
      }
}

TEST(Color, OutOfGamutIsClipped) {
  const LabColor vivid{50, 120, -120};
  EXPECT_FALSE(in_srgb_gamut(vivid));
  const Rgb8 out = lab_to_rgb(vivid);
  EXPECT_EQ(out.g, 0);
  EXPECT_EQ(out.b, 255);
  EXPECT_TRUE(in_srgb_gamut(rgb_to_lab({10, 200, 30}), 1e-9));
  EXPECT_EQ(lab_to_rgb({100, 0, 0}), (Rgb8{255, 255, 255}));
  EXPECT_EQ(lab_to_rgb({0, 0, 0}), (Rgb8{0, 0, 0}));
}

TEST(Color, Hex) {
  EXPECT_EQ(to_hex({255, 0, 16}), "#FF0010");
  EXPECT_EQ(to_hex({0, 0, 0}), "#000000");
}

TEST(Color, ValidateRejectsBadLab) {
  EXPECT_THROW(validate({-0.1, 0, 0}), InvalidInput);
  EXPECT_THROW(validate({100.5, 0, 0}), InvalidInput);
  EXPECT_THROW(validate({50, NAN, 0}), InvalidInput);
  EXPECT_THROW(validate({50, 0, INFINITY}), InvalidInput);
  EXPECT_NO_THROW(validate({0, -200, 200}));
}

TEST(Color, PaletteConstruction) {
  EXPECT_THROW(Palette::from_colors({{50, 0, 0}, {50, 0, 0}, {50, 0, 0}, {50, 0, 0}}), InvalidInput);
  EXPECT_THROW(Palette::from_colors({{50, 0, 0}, {50, 0, 0}, {50, 0, 0}, {50, 0, 0}, {101, 0, 0}}), InvalidInput);
  EXPECT_THROW(Palette::from_flat(std::vector<double>(14, 0.0)), InvalidInput);
  const Palette p = Palette::from_colors({{10, 20, 30}, {40, -50, 60}, {70, 80, -90}, {0, 0, 0}, {100, 1, 2}});
  const auto flat = p.flat();
  EXPECT_EQ(Palette::from_flat(flat), p);
  const auto norm = p.normalized();
  EXPECT_DOUBLE_EQ(norm[0], -0.8);
  EXPECT_DOUBLE_EQ(norm[1], 20.0 / 110.0);
  const Palette back = Palette::from_normalized(norm);
  for (std::size_t i = 0; i < Palette::kSize; ++i) {
    EXPECT_NEAR(back[i].L, p[i].L, 1e-12);
    EXPECT_NEAR(back[i].a, p[i].a, 1e-12);
    EXPECT_NEAR(back[i].b, p[i].b, 1e-12);
  }
  // Normalized lightness outside [-1, 1] is clamped rather than rejected.
  std::vector<double> wild(15, 0.0);
  wild[0] = 1.5;
  wild[3] = -1.5;
  const Palette clamped = Palette::from_normalized(wild);
  EXPECT_EQ(clamped[0].L, 100.0);
  EXPECT_EQ(clamped[1].L, 0.0);
}

TEST(Color, PaletteJson) {
  const Palette p = Palette::from_colors({{53.24, 80.09, 67.2}, {0, 0, 0}, {100, 0, 0}, {50, 10, 10}, {30, -20, 5}});
  const nlohmann::json j = palette_to_json(p);
  EXPECT_EQ(j.at("colors").size(), 5u);
  EXPECT_EQ(j.at("hex")[1], "#000000");
  EXPECT_EQ(j.at("hex")[2], "#FFFFFF");
  EXPECT_EQ(palette_from_json(j), p);
  EXPECT_EQ(palette_from_json(j.at("colors")), p);
  EXPECT_FALSE(palette_to_json(p, false).contains("hex"));
  EXPECT_THROW(palette_from_json(nlohmann::json::object()), InvalidInput);
  EXPECT_THROW(palette_from_json(nlohmann::json::parse(R"([[1,2,3]])")), InvalidInput);
  EXPECT_THROW(palette_from_json(nlohmann::json::parse(R"([[1,2],[1,2,3],[1,2,3],[1,2,3],[1,2,3]])")), InvalidInput);
  EXPECT_THROW(palette_from_json(nlohmann::json::parse(R"([["1",2,3],[1,2,3],[1,2,3],[1,2,3],[1,2,3]])")), InvalidInput);
  EXPECT_THROW(palette_from_json(nlohmann::json("red")), InvalidInput);
}

TEST(Color, AbBinTableMatchesFixture) {
  std::ifstream in(std::string(PF_FIXTURE_DIR) + "/ab_bins.json");
  ASSERT_TRUE(in) << "missing fixture";
  const AbBinTable fixture = AbBinTable::from_json(nlohmann::json::parse(in));
  const AbBinTable built = AbBinTable::build();
  EXPECT_EQ(built.size(), 225u);
  EXPECT_EQ(built, fixture);
  EXPECT_EQ(AbBinTable::from_json(built.to_json()), built);
  EXPECT_GE(built.index_of(0, 0), 0);
  EXPECT_EQ(built.index_of(5, 0), -1);
  EXPECT_EQ(built.index_of(120, 0), -1);
  EXPECT_EQ(built.index_of(110, 110), -1);
}

TEST(Color, AbBinTableRejectsBadJson) {
  EXPECT_THROW(AbBinTable::from_json(nlohmann::json::parse(R"({"spacing":5,"centers":[]})")), InvalidInput);
  EXPECT_THROW(AbBinTable::from_json(nlohmann::json::parse(R"({"spacing":10,"count":2,"centers":[[0,0]]})")),
               InvalidInput);
  EXPECT_THROW(AbBinTable::from_json(nlohmann::json::parse(R"({"spacing":10,"centers":[[0,0],[0,0]]})")),
               InvalidInput);
  EXPECT_THROW(AbBinTable::from_json(nlohmann::json::parse(R"({"spacing":10,"centers":[[3,0]]})")), InvalidInput);
}

TEST(Color, QuantizeIsNearestCenter) {
  const AbBinTable table = AbBinTable::build();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ab(-130, 130);
  for (int i = 0; i < 2000; ++i) {
    const LabColor c{50, ab(rng), ab(rng)};
    const int got = quantize_ab(c, table);
    ASSERT_GE(got, 0);
    double best = INFINITY;
    for (const auto& ctr : table.centers()) best = std::min(best, std::hypot(c.a - ctr[0], c.b - ctr[1]));
    const auto& gc = table.centers()[static_cast<std::size_t>(got)];
    EXPECT_NEAR(std::hypot(c.a - gc[0], c.b - gc[1]), best, 1e-12);
  }
  EXPECT_EQ(quantize_ab({50, 1, -2}, table), table.index_of(0, 0));
  EXPECT_EQ(quantize_ab({50, 14.9, 25.1}, table), table.index_of(10, 30));
}
