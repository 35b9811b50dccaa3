// Count model: deterministic init, forward contracts, head-swap and border
// behavior, checkpoint round-trips, and the idealized constant-density model.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "gsplab/gradcheck.hpp"
#include "gsplab/model.hpp"
#include "gsplab/rng.hpp"

using namespace gsplab;

namespace {

ModelConfig small_config(HeadKind head = HeadKind::Gsp, std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.blocks.push_back({4, 3, 1, 1, true});
    cfg.blocks.push_back({6, 3, 1, 1, true});
    cfg.head = head;
    cfg.seed = seed;
    return cfg;
}

Tensor random_image(int c, int h, int w, std::mt19937_64& rng) {
    Tensor t = Tensor::zeros({c, h, w});
    for (double& v : t.values()) v = uniform01(rng);
    return t;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("gsplab-model-" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// Receptive-field extent (in input columns) of one feature column, and the
// input-column interval feature column ox reads: [jump*ox - offset, ... + size).
struct Field {
    long size = 1, jump = 1, offset = 0;
};

Field receptive_field(const ModelConfig& cfg) {
    Field f;
    for (const auto& b : cfg.blocks) {
        f.size += static_cast<long>(b.kernel - 1) * f.jump;
        f.offset += static_cast<long>(b.padding) * f.jump;
        f.jump *= b.stride;
        if (b.pool_after) {
            f.size += f.jump;
            f.jump *= 2;
        }
    }
    return f;
}

} // namespace

TEST_CASE("build_model is deterministic in the seed", "[model]") {
    const CountModel a = build_model(small_config(HeadKind::Gsp, 7));
    const CountModel b = build_model(small_config(HeadKind::Gsp, 7));
    const CountModel c = build_model(small_config(HeadKind::Gsp, 8));
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].shape() == pb[i].shape());
        for (std::size_t j = 0; j < pa[i].size(); ++j) {
            REQUIRE(pa[i].values()[j] == pb[i].values()[j]);
            if (pa[i].values()[j] != pc[i].values()[j]) any_diff = true;
        }
    }
    REQUIRE(any_diff); // a different seed actually changes the draw
}

TEST_CASE("model config validation", "[model]") {
    ModelConfig empty;
    REQUIRE_THROWS_AS(empty.validate(), ConfigError);
    REQUIRE_THROWS_AS(build_model(empty), ConfigError);

    ModelConfig bad = small_config();
    bad.blocks[0].out_channels = 0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);

    ModelConfig chan = small_config();
    chan.in_channels = 0;
    REQUIRE_THROWS_AS(chan.validate(), ConfigError);
}

TEST_CASE("default stack geometry and parameter count", "[model]") {
    const ModelConfig cfg = default_model_config();
    REQUIRE(cfg.feature_dim() == 64);
    REQUIRE(cfg.downsampling() == 16);
    REQUIRE(cfg.min_input() == 16);

    const CountModel m = build_model(cfg);
    // kernels: 16*1*9 + 32*16*9 + 64*32*9 + 64*64*9, biases: 16+32+64+64,
    // head: 64 + 1.
    const std::size_t expect = (144 + 16) + (4608 + 32) + (18432 + 64) + (36864 + 64) + 64 + 1;
    REQUIRE(expect == 60289);
    REQUIRE(m.parameter_count() == expect);
}

TEST_CASE("forward with zero head weight returns exactly the bias", "[model]") {
    CountModel m = build_model(small_config());
    for (double& v : m.head_weight.values()) v = 0.0;
    m.head_bias = Tensor::scalar(5.0);
    std::mt19937_64 rng(42);
    const Tensor img = random_image(1, 16, 16, rng);
    REQUIRE(forward(m, img).count.value() == 5.0);
}

TEST_CASE("forward rejects undersized or mismatched inputs", "[model]") {
    const CountModel m = build_model(default_model_config());
    std::mt19937_64 rng(43);
    REQUIRE_THROWS_WITH(forward(m, random_image(1, 8, 8, rng)),
                        Catch::Matchers::ContainsSubstring("16"));
    REQUIRE_THROWS_AS(forward(m, random_image(3, 32, 32, rng)), DimensionError);
    REQUIRE_THROWS_AS(forward(m, Tensor::zeros({1, 32})), DimensionError);
}

TEST_CASE("forward accepts non-square inputs above the minimum", "[model]") {
    const CountModel m = build_model(default_model_config());
    std::mt19937_64 rng(44);
    const ForwardResult fr = forward(m, random_image(1, 16, 21, rng));
    REQUIRE(fr.features.shape() == std::vector<int>{64, 1, 1});
    REQUIRE(std::isfinite(fr.count.value()));

    const CountModel s = build_model(small_config());
    const ForwardResult fs = forward(s, random_image(1, 8, 11, rng));
    REQUIRE(fs.features.shape() == std::vector<int>{6, 2, 2});
}

TEST_CASE("swapping GSP for GAP with area-scaled weights is an identity", "[model]") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        CountModel m = build_model(small_config(HeadKind::Gsp, 100 + trial));
        const int side = 8 + 4 * (trial % 3);
        const Tensor img = random_image(1, side, side, rng);
        const ForwardResult fr = forward(m, img);
        const double area = static_cast<double>(fr.features.shape()[1]) * fr.features.shape()[2];

        CountModel g = m;
        g.config.head = HeadKind::Gap;
        g.head_weight = Tensor::zeros({m.config.feature_dim()});
        for (std::size_t i = 0; i < g.head_weight.size(); ++i)
            g.head_weight.values()[i] = m.head_weight.values()[i] * area;
        const double gap_count = forward(g, img).count.value();
        const double gsp_count = fr.count.value();
        REQUIRE(std::fabs(gap_count - gsp_count) /
                    std::max({1.0, std::fabs(gap_count), std::fabs(gsp_count)}) <
                1e-10);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly and reproduce forward passes", "[model][io]") {
    TempDir tmp;
    const std::filesystem::path file = tmp.path / "model.ckpt";
    const CountModel m = build_model(small_config(HeadKind::Gap, 99));
    save_model(m, file);
    const CountModel back = load_model(file);

    REQUIRE(back.config.head == HeadKind::Gap);
    REQUIRE(back.config.blocks.size() == m.config.blocks.size());
    const auto pa = m.parameters(), pb = back.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].shape() == pb[i].shape());
        for (std::size_t j = 0; j < pa[i].size(); ++j)
            REQUIRE(pa[i].values()[j] == pb[i].values()[j]);
    }

    std::mt19937_64 rng(77);
    const Tensor img = random_image(1, 12, 12, rng);
    REQUIRE(forward(m, img).count.value() == forward(back, img).count.value());

    // Saving the reloaded model reproduces the file byte for byte.
    const std::filesystem::path file2 = tmp.path / "model2.ckpt";
    save_model(back, file2);
    std::ifstream f1(file), f2(file2);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
}

TEST_CASE("truncated or corrupted checkpoints raise FormatError", "[model][io]") {
    TempDir tmp;
    const std::filesystem::path file = tmp.path / "model.ckpt";
    save_model(build_model(small_config()), file);

    std::ifstream in(file);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    const std::filesystem::path cut = tmp.path / "cut.ckpt";
    std::ofstream(cut) << text.substr(0, text.size() * 2 / 3);
    REQUIRE_THROWS_AS(load_model(cut), FormatError);

    const std::filesystem::path garbled = tmp.path / "garbled.ckpt";
    std::string wrong = text;
    wrong.replace(wrong.find("gsplab-checkpoint-v1"), std::string("gsplab-checkpoint-v1").size(),
                  "something-else-entirely");
    std::ofstream(garbled) << wrong;
    REQUIRE_THROWS_AS(load_model(garbled), FormatError);

    REQUIRE_THROWS_AS(load_model(tmp.path / "missing.ckpt"), Error);
}

TEST_CASE("gradients of the full model match finite differences", "[model][gradcheck]") {
    const ModelConfig cfg = small_config(HeadKind::Gsp, 3);
    const CountModel m = build_model(cfg);
    std::mt19937_64 rng(31337);
    auto f = [&](const Tensor& t) { return loss(forward(m, t).count, 2.5, LossKind::L1); };
    auto make = [&]() { return random_image(1, 8, 8, rng); };
    REQUIRE(gradient_check_kink_free(f, make, 1e-5, 32, &rng) < 1e-5);
}

TEST_CASE("idealized block model predictions scale as m^2 for sums, stay flat for averages",
          "[model][idealized]") {
    const IdealizedBlockModel ideal = build_idealized(8, 5.0, HeadKind::Gsp);
    REQUIRE(ideal.density() == 5.0 / 64.0);

    const ScalingCheckResult r3 = idealized_scaling_check(ideal, 3);
    REQUIRE(r3.gsp_prediction == 45.0); // 3^2 * 5, exact in dyadic arithmetic
    REQUIRE(r3.gap_prediction == 5.0);

    const ScalingCheckResult r1 = idealized_scaling_check(ideal, 1);
    REQUIRE(r1.gsp_prediction == 5.0);
    REQUIRE(r1.gap_prediction == 5.0);

    const ScalingCheckResult r2 = idealized_scaling_check(build_idealized(4, 2.5, HeadKind::Gap), 2);
    REQUIRE(r2.gsp_prediction == 10.0);
    REQUIRE(r2.gap_prediction == 2.5);

    const ScalingCheckResult rz = idealized_scaling_check(build_idealized(8, 0.0, HeadKind::Gsp), 4);
    REQUIRE(rz.gsp_prediction == 0.0);
    REQUIRE(rz.gap_prediction == 0.0);

    REQUIRE_THROWS_AS(build_idealized(0, 1.0, HeadKind::Gsp), ContractError);
    REQUIRE_THROWS_AS(build_idealized(8, -1.0, HeadKind::Gsp), ContractError);
    REQUIRE_THROWS_AS(idealized_scaling_check(ideal, 0), ContractError);
}

TEST_CASE("to_count_model realizes the idealized predictions through the full pipeline",
          "[model][idealized]") {
    const CountModel gsp_m = to_count_model(build_idealized(8, 5.0, HeadKind::Gsp));
    for (int m = 1; m <= 3; ++m) {
        const Tensor ones = Tensor::full({1, 8 * m, 8 * m}, 1.0);
        REQUIRE(forward(gsp_m, ones).count.value() == 5.0 * m * m);
    }
    const CountModel gap_m = to_count_model(build_idealized(8, 5.0, HeadKind::Gap));
    for (int m = 1; m <= 3; ++m) {
        const Tensor ones = Tensor::full({1, 8 * m, 8 * m}, 1.0);
        REQUIRE(forward(gap_m, ones).count.value() == 5.0);
    }
}

TEST_CASE("side-by-side concatenation changes counts only through the seam band",
          "[model][border]") {
    // With a sum head, features of the concatenated image match the pieces
    // exactly wherever the receptive field avoids the seam; the count
    // difference is bounded by the head-weighted feature mass in the seam
    // bands. B = zeros doubles the width the way zero padding would.
    const ModelConfig cfg = small_config(HeadKind::Gsp, 21);
    const CountModel m = build_model(cfg);
    const Field field = receptive_field(cfg);
    REQUIRE(field.jump == 4);
    REQUIRE(field.size == 10);

    const int C = 1, H = 16, Wa = 32, Wb = 32;
    std::mt19937_64 rng(404);
    Tensor a = random_image(C, H, Wa, rng);
    Tensor b = random_image(C, H, Wb, rng);

    SECTION("random right half") {}
    SECTION("all-zero right half") { b = Tensor::zeros({C, H, Wb}); }

    Tensor ab = Tensor::zeros({C, H, Wa + Wb});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < Wa; ++x)
            ab.values()[static_cast<std::size_t>(y) * (Wa + Wb) + x] =
                a.values()[static_cast<std::size_t>(y) * Wa + x];
        for (int x = 0; x < Wb; ++x)
            ab.values()[static_cast<std::size_t>(y) * (Wa + Wb) + Wa + x] =
                b.values()[static_cast<std::size_t>(y) * Wb + x];
    }

    const Tensor fa = forward(m, a).features;
    const Tensor fb = forward(m, b).features;
    const Tensor fab = forward(m, ab).features;
    const int cf = fab.shape()[0], fh = fab.shape()[1];
    const int wa_cols = fa.shape()[2], wab_cols = fab.shape()[2];

    // Feature column ox reads input columns [jump*ox - offset, ... + size).
    auto col_begin = [&](int ox) { return field.jump * ox - field.offset; };
    auto col_end = [&](int ox) { return col_begin(ox) + field.size; }; // exclusive

    int checked = 0;
    for (int ox = 0; ox < wab_cols; ++ox) {
        if (col_end(ox) <= Wa) { // entirely inside A: must equal A's column
            for (int c = 0; c < cf; ++c)
                for (int y = 0; y < fh; ++y)
                    REQUIRE(fab.at({c, y, ox}) == fa.at({c, y, ox}));
            ++checked;
        } else if (col_begin(ox) >= Wa) { // entirely inside B
            for (int c = 0; c < cf; ++c)
                for (int y = 0; y < fh; ++y)
                    REQUIRE(fab.at({c, y, ox}) == fb.at({c, y, ox - wa_cols}));
            ++checked;
        }
    }
    REQUIRE(checked >= wab_cols - 4); // the seam band stays narrow

    // Count additivity up to the seam-band mass.
    const double count_a = forward(m, a).count.value();
    const double count_b = forward(m, b).count.value();
    const double count_ab = forward(m, ab).count.value();
    const double bias = m.head_bias.value();

    auto band_mass = [&](const Tensor& f, int lo_col, int hi_col) {
        // sum_c |w_c| * sum over band columns (features are >= 0 after relu)
        double s = 0.0;
        const int cols = f.shape()[2];
        for (int c = 0; c < cf; ++c)
            for (int y = 0; y < fh; ++y)
                for (int ox = std::max(0, lo_col); ox < std::min(cols, hi_col); ++ox)
                    s += std::fabs(m.head_weight.values()[static_cast<std::size_t>(c)]) *
                         f.at({c, y, ox});
        return s;
    };
    // Differing columns: in AB those whose field crosses the seam; in A those
    // reading past its right edge (zero pad vs. B's pixels); in B those
    // reading before its left edge.
    int ab_lo = wab_cols, ab_hi = 0, a_lo = wa_cols, a_hi = 0, b_lo = fb.shape()[2], b_hi = 0;
    for (int ox = 0; ox < wab_cols; ++ox)
        if (col_begin(ox) < Wa && col_end(ox) > Wa) { ab_lo = std::min(ab_lo, ox); ab_hi = ox + 1; }
    for (int ox = 0; ox < wa_cols; ++ox)
        if (col_end(ox) > Wa) { a_lo = std::min(a_lo, ox); a_hi = ox + 1; }
    for (int ox = 0; ox < fb.shape()[2]; ++ox)
        if (col_begin(ox) < 0) { b_lo = std::min(b_lo, ox); b_hi = ox + 1; }
    const double bound = band_mass(fab, ab_lo, ab_hi) + band_mass(fa, a_lo, a_hi) +
                         band_mass(fb, b_lo, b_hi) + 1e-9;
    REQUIRE(std::fabs(count_ab - count_a - count_b + bias) <= bound);
}
