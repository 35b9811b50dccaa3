// Dataset round-trips through the directory format, loader validation, and
// split statistics.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "gsplab/dataset.hpp"

using namespace gsplab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gsplab-ds-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

GenConfig small_gen(std::uint64_t seed = 42) {
    GenConfig cfg;
    cfg.scene.width = 48;
    cfg.scene.height = 48;
    cfg.scene.n_min = 2;
    cfg.scene.n_max = 5;
    cfg.scene.r_min = 2.0;
    cfg.scene.r_max = 3.0;
    cfg.scene.min_separation = 7.0;
    cfg.n_train = 4;
    cfg.n_val = 2;
    cfg.n_test = 3;
    cfg.seed = seed;
    return cfg;
}

void append_line(const fs::path& file, const std::string& line) {
    std::ofstream os(file, std::ios::app);
    os << line << '\n';
}

} // namespace

TEST_CASE("generate/write/load round-trips images and annotations exactly", "[dataset]") {
    const Dataset gen = generate_dataset(small_gen());
    REQUIRE(gen.entries.size() == 9);
    REQUIRE(gen.split_indices(Split::Train).size() == 4);
    REQUIRE(gen.split_indices(Split::Val).size() == 2);
    REQUIRE(gen.split_indices(Split::Test).size() == 3);

    TempDir tmp;
    write_dataset(gen, tmp.path);
    const Dataset back = load_dataset(tmp.path);
    REQUIRE(back.entries.size() == gen.entries.size());

    for (std::size_t i = 0; i < gen.entries.size(); ++i) {
        const DatasetEntry& a = gen.entries[i];
        const DatasetEntry& b = back.entries[i];
        REQUIRE(a.id == b.id);
        REQUIRE(a.split == b.split);
        REQUIRE(a.width == b.width);
        REQUIRE(a.height == b.height);
        REQUIRE(a.dots.size() == b.dots.size());
        for (std::size_t d = 0; d < a.dots.size(); ++d) {
            REQUIRE(a.dots[d].x == b.dots[d].x); // decimal round-trip is lossless
            REQUIRE(a.dots[d].y == b.dots[d].y);
        }
        REQUIRE(a.boxes.has_value() == b.boxes.has_value());
        if (a.boxes) {
            REQUIRE(a.boxes->size() == b.boxes->size());
            for (std::size_t d = 0; d < a.boxes->size(); ++d) {
                REQUIRE((*a.boxes)[d].x0 == (*b.boxes)[d].x0);
                REQUIRE((*a.boxes)[d].w == (*b.boxes)[d].w);
            }
        }
        // Pixels are written at 8-bit depth; generation already snapped to
        // that grid, so the raster reads back value-identical.
        const AnnotatedImage ia = a.load(), ib = b.load();
        REQUIRE(ia.pixels.shape() == ib.pixels.shape());
        for (std::size_t p = 0; p < ia.pixels.size(); ++p)
            REQUIRE(ia.pixels.values()[p] == ib.pixels.values()[p]);
        REQUIRE(a.count(CountRule::Dots) == b.count(CountRule::Dots));
        REQUIRE(a.count(CountRule::ShrunkBoxes) == b.count(CountRule::ShrunkBoxes));
    }
}

TEST_CASE("write_dataset refuses a non-empty directory unless forced", "[dataset]") {
    const Dataset gen = generate_dataset(small_gen());
    TempDir tmp;
    append_line(tmp.path / "leftover.txt", "junk");
    REQUIRE_THROWS_AS(write_dataset(gen, tmp.path), IoError);
    write_dataset(gen, tmp.path, true);
    REQUIRE(fs::exists(tmp.path / "manifest.csv"));
}

TEST_CASE("loader failures carry the offending file", "[dataset]") {
    const Dataset gen = generate_dataset(small_gen());
    TempDir tmp;
    write_dataset(gen, tmp.path);

    SECTION("missing image raster") {
        fs::remove(tmp.path / "images" / "img0003.pgm");
        REQUIRE_THROWS_WITH(load_dataset(tmp.path), Catch::Matchers::ContainsSubstring("img0003"));
    }
    SECTION("missing annotation file") {
        fs::remove(tmp.path / "annotations" / "img0001.csv");
        REQUIRE_THROWS_WITH(load_dataset(tmp.path), Catch::Matchers::ContainsSubstring("img0001"));
    }
    SECTION("dot on the exclusive image boundary") {
        append_line(tmp.path / "annotations" / "img0002.csv", "48,10");
        REQUIRE_THROWS_AS(load_dataset(tmp.path), LoadError);
    }
    SECTION("dot beyond the image") {
        append_line(tmp.path / "annotations" / "img0002.csv", "12,-0.5");
        REQUIRE_THROWS_AS(load_dataset(tmp.path), LoadError);
    }
    SECTION("malformed annotation line reports file and line number") {
        append_line(tmp.path / "annotations" / "img0000.csv", "not,numbers");
        try {
            load_dataset(tmp.path);
            FAIL("expected LoadError");
        } catch (const LoadError& e) {
            const std::string msg = e.what();
            REQUIRE(msg.find("img0000.csv") != std::string::npos);
        }
    }
    SECTION("malformed manifest split") {
        append_line(tmp.path / "manifest.csv", "imgXXXX,nonsense");
        REQUIRE_THROWS_AS(load_dataset(tmp.path), Error);
    }
    SECTION("box outside the image") {
        append_line(tmp.path / "boxes" / "img0002.csv", "40,40,20,20");
        REQUIRE_THROWS_AS(load_dataset(tmp.path), LoadError);
    }
    SECTION("missing manifest") {
        fs::remove(tmp.path / "manifest.csv");
        REQUIRE_THROWS_AS(load_dataset(tmp.path), LoadError);
    }
}

TEST_CASE("a dataset without box files loads with empty box annotations", "[dataset]") {
    const Dataset gen = generate_dataset(small_gen());
    TempDir tmp;
    write_dataset(gen, tmp.path);
    fs::remove_all(tmp.path / "boxes");
    const Dataset back = load_dataset(tmp.path);
    for (const DatasetEntry& e : back.entries) {
        REQUIRE_FALSE(e.boxes.has_value());
        REQUIRE_THROWS_AS(e.count(CountRule::ShrunkBoxes), AnnotationError);
        REQUIRE(e.count(CountRule::Dots) >= 0);
    }
}

TEST_CASE("dataset generation is a pure function of the config", "[dataset]") {
    const Dataset a = generate_dataset(small_gen(7));
    const Dataset b = generate_dataset(small_gen(7));
    const Dataset c = generate_dataset(small_gen(8));
    REQUIRE(a.entries.size() == b.entries.size());
    bool all_equal_c = a.entries.size() == c.entries.size();
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const Tensor& pa = *a.entries[i].memory_pixels;
        const Tensor& pb = *b.entries[i].memory_pixels;
        for (std::size_t p = 0; p < pa.size(); ++p) REQUIRE(pa.values()[p] == pb.values()[p]);
        if (all_equal_c) {
            const Tensor& pc = *c.entries[i].memory_pixels;
            for (std::size_t p = 0; p < pa.size() && all_equal_c; ++p)
                all_equal_c = pa.values()[p] == pc.values()[p];
        }
    }
    REQUIRE_FALSE(all_equal_c);
}

TEST_CASE("size_cycle produces mixed resolutions deterministically", "[dataset]") {
    GenConfig cfg = small_gen();
    cfg.size_cycle = {48, 64, 96};
    const Dataset ds = generate_dataset(cfg);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        const int expect = cfg.size_cycle[i % 3];
        REQUIRE(ds.entries[i].width == expect);
        REQUIRE(ds.entries[i].height == expect);
        REQUIRE(ds.entries[i].memory_pixels->shape() ==
                std::vector<int>{1, expect, expect});
    }

    GenConfig bad = small_gen();
    bad.size_cycle = {48, 0};
    REQUIRE_THROWS_AS(generate_dataset(bad), ConfigError);
    GenConfig tiny = small_gen();
    tiny.size_cycle = {48, 5}; // too small for the object radius
    REQUIRE_THROWS_AS(generate_dataset(tiny), ConfigError);
}

TEST_CASE("dataset_stats aggregates counts and resolution ranges per split", "[dataset]") {
    Dataset ds;
    for (int i = 0; i < 10; ++i) {
        DatasetEntry e;
        e.id = format_image_id(i);
        e.split = Split::Train;
        e.width = 40 + i; // areas strictly increasing
        e.height = 40 + i;
        for (int d = 0; d < 5; ++d) e.dots.push_back({1.0 + d, 2.0});
        ds.entries.push_back(e);
    }
    const DatasetStats st = dataset_stats(ds);
    REQUIRE(st.train.n_images == 10);
    REQUIRE(st.train.total_count == 50);
    REQUIRE(st.train.count_min == 5);
    REQUIRE(st.train.count_max == 5);
    REQUIRE(st.train.res_min_w == 40);
    REQUIRE(st.train.res_max_w == 49);
    REQUIRE(st.val.n_images == 0);
    REQUIRE(st.test.n_images == 0);
    REQUIRE(st.overall.n_images == 10);
    REQUIRE(st.overall.total_count == 50);

    const DatasetStats empty = dataset_stats(Dataset{});
    REQUIRE(empty.overall.n_images == 0);
    REQUIRE(empty.overall.total_count == 0);
}

TEST_CASE("dataset_stats tracks min/max by pixel area against a scan oracle", "[dataset]") {
    std::mt19937_64 rng(17);
    Dataset ds;
    for (int i = 0; i < 20; ++i) {
        DatasetEntry e;
        e.id = format_image_id(i);
        e.split = i % 2 ? Split::Test : Split::Train;
        e.width = static_cast<int>(uniform_int(rng, 20, 90));
        e.height = static_cast<int>(uniform_int(rng, 20, 90));
        const int n = static_cast<int>(uniform_int(rng, 0, 7));
        for (int d = 0; d < n; ++d) e.dots.push_back({0.5, 0.5});
        ds.entries.push_back(e);
    }
    const DatasetStats st = dataset_stats(ds);

    long min_area = std::numeric_limits<long>::max(), max_area = -1;
    long total = 0;
    int cmin = std::numeric_limits<int>::max(), cmax = -1;
    std::pair<int, int> min_res{0, 0}, max_res{0, 0};
    for (const auto& e : ds.entries) {
        const long area = static_cast<long>(e.width) * e.height;
        if (area < min_area) { min_area = area; min_res = {e.width, e.height}; }
        if (area > max_area) { max_area = area; max_res = {e.width, e.height}; }
        const int c = static_cast<int>(e.dots.size());
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
        total += c;
    }
    REQUIRE(st.overall.total_count == total);
    REQUIRE(st.overall.count_min == cmin);
    REQUIRE(st.overall.count_max == cmax);
    REQUIRE(static_cast<long>(st.overall.res_min_w) * st.overall.res_min_h == min_area);
    REQUIRE(static_cast<long>(st.overall.res_max_w) * st.overall.res_max_h == max_area);
}
