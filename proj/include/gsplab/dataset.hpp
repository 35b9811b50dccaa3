#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gsplab/error.hpp"
#include "gsplab/pnm.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/synth.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

enum class Split { Train, Val, Test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw LoadError("unknown split '" + s + "' (expected train, val or test)");
}

// One dataset record. Annotations are loaded eagerly (they are tiny and get
// validated up front); pixels stay on disk until load() unless the dataset
// was built in memory.
struct DatasetEntry {
    std::string id;
    Split split = Split::Train;
    int width = 0, height = 0;
    std::vector<Dot> dots;
    std::optional<std::vector<Box>> boxes;
    std::filesystem::path image_path;              // empty for in-memory entries
    std::shared_ptr<const Tensor> memory_pixels;   // set for in-memory entries

    int count(CountRule rule) const {
        return count_in_rect(width, height, dots, boxes, {0, 0, width, height}, rule);
    }

    AnnotatedImage load() const {
        AnnotatedImage img;
        if (memory_pixels) {
            img.pixels = *memory_pixels;
        } else {
            img.pixels = read_pgm(image_path);
            if (img.pixels.shape()[1] != height || img.pixels.shape()[2] != width)
                throw LoadError("raster size changed on disk for id '" + id + "'");
        }
        img.dots = dots;
        img.boxes = boxes;
        img.id = id;
        return img;
    }
};

struct Dataset {
    std::filesystem::path root; // empty for in-memory datasets
    std::vector<DatasetEntry> entries;

    std::vector<std::size_t> split_indices(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].split == s) idx.push_back(i);
        return idx;
    }
};

// ---------------------------------------------------------------------------
// Generation: each image derives its own rng stream from (seed, index), so
// the dataset is a pure function of the config.
// ---------------------------------------------------------------------------

struct GenConfig {
    SceneSpec scene;
    int n_train = 0, n_val = 0, n_test = 0;
    std::uint64_t seed = 1;
    // Optional square-size cycle overriding scene width/height per image
    // (image i gets size_cycle[i % size]), for mixed-resolution sets.
    std::vector<int> size_cycle;

    void validate() const {
        if (n_train < 0 || n_val < 0 || n_test < 0)
            throw ConfigError("split sizes must be >= 0");
        for (int s : size_cycle)
            if (s < 1) throw ConfigError("size cycle entries must be positive");
        scene.validate();
        for (int s : size_cycle) {
            SceneSpec sized = scene;
            sized.width = sized.height = s;
            sized.validate();
        }
    }
};

inline std::string format_image_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "img%04d", index);
    return buf;
}

inline Dataset generate_dataset(const GenConfig& cfg) {
    cfg.validate();
    Dataset ds;
    const int total = cfg.n_train + cfg.n_val + cfg.n_test;
    for (int i = 0; i < total; ++i) {
        SceneSpec spec = cfg.scene;
        if (!cfg.size_cycle.empty()) {
            const int s = cfg.size_cycle[static_cast<std::size_t>(i) % cfg.size_cycle.size()];
            spec.width = spec.height = s;
        }
        AnnotatedImage img = generate_image(spec, derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        DatasetEntry e;
        e.id = format_image_id(i);
        e.split = i < cfg.n_train ? Split::Train : (i < cfg.n_train + cfg.n_val ? Split::Val : Split::Test);
        e.width = spec.width;
        e.height = spec.height;
        e.dots = std::move(img.dots);
        e.boxes = std::move(img.boxes);
        e.memory_pixels = std::make_shared<const Tensor>(img.pixels);
        ds.entries.push_back(std::move(e));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Directory format:
//   manifest.csv           one "id,split" line per image
//   images/<id>.pgm        grayscale raster
//   annotations/<id>.csv   one "x,y" line per dot (may be empty)
//   boxes/<id>.csv         one "x0,y0,w,h" line per instance (optional)
// ---------------------------------------------------------------------------

inline void write_dataset(const Dataset& ds, const std::filesystem::path& root, bool force = false) {
    namespace fs = std::filesystem;
    if (fs::exists(root) && !fs::is_empty(root) && !force)
        throw IoError("output directory not empty (use force to overwrite): " + root.string());
    fs::create_directories(root / "images");
    fs::create_directories(root / "annotations");
    bool any_boxes = false;
    for (const auto& e : ds.entries)
        if (e.boxes) any_boxes = true;
    if (any_boxes) fs::create_directories(root / "boxes");

    std::ofstream manifest(root / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest: " + (root / "manifest.csv").string());
    for (const auto& e : ds.entries) {
        manifest << e.id << ',' << split_name(e.split) << '\n';
        const AnnotatedImage img = e.load();
        if (img.channels() != 1)
            throw FormatError("grayscale interchange supports 1 channel, image '" + e.id + "' has " +
                              std::to_string(img.channels()));
        write_pgm(root / "images" / (e.id + ".pgm"), img.pixels);
        std::ofstream dots(root / "annotations" / (e.id + ".csv"));
        if (!dots) throw IoError("cannot write annotations for id '" + e.id + "'");
        for (const auto& d : img.dots)
            dots << format_double(d.x) << ',' << format_double(d.y) << '\n';
        if (img.boxes) {
            std::ofstream boxes(root / "boxes" / (e.id + ".csv"));
            if (!boxes) throw IoError("cannot write boxes for id '" + e.id + "'");
            for (const auto& b : *img.boxes)
                boxes << format_double(b.x0) << ',' << format_double(b.y0) << ','
                      << format_double(b.w) << ',' << format_double(b.h) << '\n';
        }
    }
    if (!manifest) throw IoError("manifest write failed");
}

namespace detail {

inline std::vector<double> parse_csv_doubles(const std::string& line, std::size_t want,
                                             const std::string& file, int lineno) {
    std::vector<double> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        const std::string field = line.substr(start, comma == std::string::npos ? comma : comma - start);
        try {
            out.push_back(parse_double(field, file));
        } catch (const Error&) {
            throw LoadError(file + " line " + std::to_string(lineno) + ": bad number '" + field + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.size() != want)
        throw LoadError(file + " line " + std::to_string(lineno) + ": expected " + std::to_string(want) +
                        " fields, got " + std::to_string(out.size()));
    return out;
}

} // namespace detail

inline Dataset load_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = root / "manifest.csv";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw LoadError("cannot open manifest: " + manifest_path.string());

    Dataset ds;
    ds.root = root;
    std::string line;
    int lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos || comma == 0 || line.find(',', comma + 1) != std::string::npos)
            throw LoadError(manifest_path.string() + " line " + std::to_string(lineno) +
                            ": expected 'id,split', got '" + line + "'");
        DatasetEntry e;
        e.id = line.substr(0, comma);
        e.split = parse_split(line.substr(comma + 1));
        e.image_path = root / "images" / (e.id + ".pgm");
        if (!fs::exists(e.image_path))
            throw LoadError(manifest_path.string() + " line " + std::to_string(lineno) + ": image for id '" +
                            e.id + "' not found: " + e.image_path.string());
        const PnmHeader h = read_pnm_header(e.image_path);
        if (h.channels != 1)
            throw LoadError("image for id '" + e.id + "' is not grayscale: " + e.image_path.string());
        e.width = h.width;
        e.height = h.height;

        const fs::path dots_path = root / "annotations" / (e.id + ".csv");
        std::ifstream dots_file(dots_path);
        if (!dots_file)
            throw LoadError("annotations for id '" + e.id + "' not found: " + dots_path.string());
        std::string dl;
        int dln = 0;
        while (std::getline(dots_file, dl)) {
            ++dln;
            if (dl.empty()) continue;
            const auto v = detail::parse_csv_doubles(dl, 2, dots_path.string(), dln);
            if (v[0] < 0.0 || v[0] >= e.width || v[1] < 0.0 || v[1] >= e.height)
                throw LoadError(dots_path.string() + " line " + std::to_string(dln) + ": dot (" +
                                format_double(v[0]) + "," + format_double(v[1]) + ") outside [0," +
                                std::to_string(e.width) + ")x[0," + std::to_string(e.height) + ")");
            e.dots.push_back({v[0], v[1]});
        }

        const fs::path boxes_path = root / "boxes" / (e.id + ".csv");
        if (fs::exists(boxes_path)) {
            std::ifstream boxes_file(boxes_path);
            if (!boxes_file) throw LoadError("cannot open boxes for id '" + e.id + "'");
            std::vector<Box> boxes;
            std::string bl;
            int bln = 0;
            while (std::getline(boxes_file, bl)) {
                ++bln;
                if (bl.empty()) continue;
                const auto v = detail::parse_csv_doubles(bl, 4, boxes_path.string(), bln);
                if (v[2] <= 0.0 || v[3] <= 0.0 || v[0] < 0.0 || v[1] < 0.0 ||
                    v[0] + v[2] > e.width || v[1] + v[3] > e.height)
                    throw LoadError(boxes_path.string() + " line " + std::to_string(bln) +
                                    ": box outside image bounds or with nonpositive size");
                boxes.push_back({v[0], v[1], v[2], v[3]});
            }
            if (boxes.size() != e.dots.size())
                throw LoadError(boxes_path.string() + ": " + std::to_string(boxes.size()) + " boxes vs " +
                                std::to_string(e.dots.size()) + " dots for id '" + e.id + "'");
            e.boxes = std::move(boxes);
        }
        ds.entries.push_back(std::move(e));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Per-split statistics: image count, total object count, per-image count
// range, and resolution range (by pixel area, ties broken by width then
// height).
// ---------------------------------------------------------------------------

struct SplitStats {
    int n_images = 0;
    long total_count = 0;
    int count_min = 0, count_max = 0;
    int res_min_w = 0, res_min_h = 0;
    int res_max_w = 0, res_max_h = 0;

    void add(const DatasetEntry& e) {
        const int c = static_cast<int>(e.dots.size());
        if (n_images == 0) {
            count_min = count_max = c;
            res_min_w = res_max_w = e.width;
            res_min_h = res_max_h = e.height;
        } else {
            count_min = std::min(count_min, c);
            count_max = std::max(count_max, c);
            const long a = static_cast<long>(e.width) * e.height;
            const long lo = static_cast<long>(res_min_w) * res_min_h;
            const long hi = static_cast<long>(res_max_w) * res_max_h;
            if (a < lo || (a == lo && (e.width < res_min_w || (e.width == res_min_w && e.height < res_min_h)))) {
                res_min_w = e.width;
                res_min_h = e.height;
            }
            if (a > hi || (a == hi && (e.width > res_max_w || (e.width == res_max_w && e.height > res_max_h)))) {
                res_max_w = e.width;
                res_max_h = e.height;
            }
        }
        ++n_images;
        total_count += c;
    }
};

struct DatasetStats {
    SplitStats train, val, test, overall;
};

inline DatasetStats dataset_stats(const Dataset& ds) {
    DatasetStats st;
    for (const auto& e : ds.entries) {
        st.overall.add(e);
        switch (e.split) {
            case Split::Train: st.train.add(e); break;
            case Split::Val: st.val.add(e); break;
            case Split::Test: st.test.add(e); break;
        }
    }
    return st;
}

} // namespace gsplab
