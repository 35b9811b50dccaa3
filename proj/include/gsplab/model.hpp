#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gsplab/error.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

enum class HeadKind { Gsp, Gap };

inline std::string head_name(HeadKind h) { return h == HeadKind::Gsp ? "gsp" : "gap"; }

inline HeadKind parse_head(const std::string& s) {
    if (s == "gsp") return HeadKind::Gsp;
    if (s == "gap") return HeadKind::Gap;
    throw ConfigError("unknown head '" + s + "' (expected gsp or gap)");
}

struct ConvBlockSpec {
    int out_channels = 16;
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    bool pool_after = true; // fixed 2x2 max pool, stride 2
};

struct ModelConfig {
    std::vector<ConvBlockSpec> blocks;
    HeadKind head = HeadKind::Gsp;
    int in_channels = 1;
    std::uint64_t seed = 1;

    int feature_dim() const {
        if (blocks.empty()) throw ConfigError("model must have at least one conv block");
        return blocks.back().out_channels;
    }

    int downsampling() const {
        int d = 1;
        for (const auto& b : blocks) {
            d *= b.stride;
            if (b.pool_after) d *= 2;
        }
        return d;
    }

    // Smallest square input the stack accepts (every conv window fits and the
    // final feature map is at least 1x1).
    int min_input() const {
        for (int s = 1; s <= 4096; ++s) {
            int h = s;
            bool ok = true;
            for (const auto& b : blocks) {
                if (b.kernel > h + 2 * b.padding) { ok = false; break; }
                h = (h + 2 * b.padding - b.kernel) / b.stride + 1;
                if (b.pool_after) {
                    if (h < 2) { ok = false; break; }
                    h = (h - 2) / 2 + 1;
                }
                if (h < 1) { ok = false; break; }
            }
            if (ok) return s;
        }
        throw ConfigError("model stack accepts no input up to 4096");
    }

    void validate() const {
        if (blocks.empty()) throw ConfigError("model must have at least one conv block");
        if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1 || b.padding < 0)
                throw ConfigError("invalid conv block " + std::to_string(i));
        }
        min_input(); // throws if the stack is degenerate
    }
};

// The default stack: four 3x3 blocks, 16/32/64/64 channels, 2x2 pool after
// each, feature dim 64, total downsampling 16x, minimum input 16x16.
inline ModelConfig default_model_config() {
    ModelConfig cfg;
    for (int ch : {16, 32, 64, 64}) cfg.blocks.push_back({ch, 3, 1, 1, true});
    return cfg;
}

struct CountModel {
    ModelConfig config;
    std::vector<Tensor> kernels;     // per block [C_out,C_in,k,k]
    std::vector<Tensor> conv_biases; // per block [C_out]
    Tensor head_weight;              // [feature_dim]
    Tensor head_bias;                // scalar

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> p;
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            p.push_back(kernels[i]);
            p.push_back(conv_biases[i]);
        }
        p.push_back(head_weight);
        p.push_back(head_bias);
        return p;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : parameters()) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& t : parameters()) t.zero_grad();
    }
};

// He-style init for conv kernels, small positive head weights so early
// predictions sit near zero counts. Deterministic given config.seed.
// Conv biases start at a small positive constant rather than zero: a zero
// bias makes every feature cell over an inactive region sit exactly on the
// relu kink, which kills finite-difference verification and invites dead
// units.
inline CountModel build_model(const ModelConfig& config) {
    config.validate();
    CountModel m;
    m.config = config;
    std::mt19937_64 rng(derive_seed(config.seed, 0xC0DE));
    int cin = config.in_channels;
    for (const auto& b : config.blocks) {
        const double std = std::sqrt(2.0 / (static_cast<double>(cin) * b.kernel * b.kernel));
        Tensor k = Tensor::zeros({b.out_channels, cin, b.kernel, b.kernel});
        for (auto& v : k.values()) v = normal(rng, 0.0, std);
        m.kernels.push_back(k);
        m.conv_biases.push_back(Tensor::full({b.out_channels}, 0.02));
        cin = b.out_channels;
    }
    m.head_weight = Tensor::zeros({config.feature_dim()});
    for (auto& v : m.head_weight.values()) v = std::fabs(normal(rng, 0.0, 0.01));
    m.head_bias = Tensor::scalar(0.0);
    return m;
}

struct ForwardResult {
    Tensor count;    // scalar
    Tensor features; // final conv feature map [C_f,H',W']
};

inline ForwardResult forward(const CountModel& m, const Tensor& image) {
    if (image.rank() != 3)
        throw DimensionError("model input must be rank 3, got " + detail::shape_string(image.shape()));
    if (image.shape()[0] != m.config.in_channels)
        throw DimensionError("model expects " + std::to_string(m.config.in_channels) +
                             " channels, got " + std::to_string(image.shape()[0]));
    const int min_in = m.config.min_input();
    if (image.shape()[1] < min_in || image.shape()[2] < min_in)
        throw DimensionError("input " + std::to_string(image.shape()[1]) + "x" +
                             std::to_string(image.shape()[2]) + " below model minimum " +
                             std::to_string(min_in) + "x" + std::to_string(min_in));
    Tensor x = image;
    for (std::size_t i = 0; i < m.kernels.size(); ++i) {
        const auto& b = m.config.blocks[i];
        x = conv2d(x, m.kernels[i], m.conv_biases[i], b.stride, b.padding);
        x = relu(x);
        if (b.pool_after) x = maxpool2d(x, 2, 2);
    }
    Tensor pooled = m.config.head == HeadKind::Gsp ? gsp(x) : gap(x);
    Tensor count = linear(pooled, m.head_weight, m.head_bias);
    return {count, x};
}

// ---------------------------------------------------------------------------
// Checkpoints: key=value config header, then named tensor sections in the
// standard tensor text format. Round-trips bit-exactly.
// ---------------------------------------------------------------------------

inline void save_model(const CountModel& m, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os << "format=gsplab-checkpoint-v1\n";
    os << "head=" << head_name(m.config.head) << '\n';
    os << "in_channels=" << m.config.in_channels << '\n';
    os << "seed=" << m.config.seed << '\n';
    os << "blocks=" << m.config.blocks.size() << '\n';
    for (std::size_t i = 0; i < m.config.blocks.size(); ++i) {
        const auto& b = m.config.blocks[i];
        os << "block" << i << '=' << b.out_channels << ',' << b.kernel << ',' << b.stride << ','
           << b.padding << ',' << (b.pool_after ? 1 : 0) << '\n';
    }
    for (std::size_t i = 0; i < m.kernels.size(); ++i) {
        os << "tensor conv" << i << ".kernel\n";
        save_tensor(os, m.kernels[i]);
        os << "tensor conv" << i << ".bias\n";
        save_tensor(os, m.conv_biases[i]);
    }
    os << "tensor head.weight\n";
    save_tensor(os, m.head_weight);
    os << "tensor head.bias\n";
    save_tensor(os, m.head_bias);
    if (!os) throw IoError("write failed: " + path.string());
}

namespace detail {

inline ConvBlockSpec parse_block_spec(const std::string& s, const std::string& field) {
    ConvBlockSpec b;
    int pool = 1;
    char comma = 0;
    std::istringstream is(s);
    if (!(is >> b.out_channels >> comma >> b.kernel >> comma >> b.stride >> comma >> b.padding >> comma >> pool))
        throw FormatError("bad block spec in field " + field + ": '" + s + "'");
    b.pool_after = pool != 0;
    return b;
}

} // namespace detail

inline CountModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw LoadError("cannot open checkpoint: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("tensor ", 0) == 0) break;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("bad header line in checkpoint: '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto require = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint missing field '" + key + "'");
        return it->second;
    };
    if (require("format") != "gsplab-checkpoint-v1")
        throw FormatError("unsupported checkpoint format '" + kv["format"] + "'");

    ModelConfig cfg;
    cfg.head = parse_head(require("head"));
    cfg.in_channels = std::stoi(require("in_channels"));
    cfg.seed = std::stoull(require("seed"));
    const int nblocks = std::stoi(require("blocks"));
    for (int i = 0; i < nblocks; ++i)
        cfg.blocks.push_back(detail::parse_block_spec(require("block" + std::to_string(i)),
                                                      "block" + std::to_string(i)));
    cfg.validate();

    CountModel m;
    m.config = cfg;
    auto read_named = [&](const std::string& name, const std::vector<int>& want) {
        // `line` already holds the "tensor <name>" line from the header scan
        // or the previous iteration.
        if (line != "tensor " + name)
            throw FormatError("checkpoint expected section 'tensor " + name + "', got '" + line + "'");
        Tensor t = load_tensor(is, name);
        if (t.shape() != want)
            throw FormatError("checkpoint field " + name + " has shape " + detail::shape_string(t.shape()) +
                              ", expected " + detail::shape_string(want));
        if (!std::getline(is, line)) line.clear();
        return t;
    };
    int cin = cfg.in_channels;
    for (int i = 0; i < nblocks; ++i) {
        const auto& b = cfg.blocks[i];
        m.kernels.push_back(read_named("conv" + std::to_string(i) + ".kernel",
                                       {b.out_channels, cin, b.kernel, b.kernel}));
        m.conv_biases.push_back(read_named("conv" + std::to_string(i) + ".bias", {b.out_channels}));
        cin = b.out_channels;
    }
    m.head_weight = read_named("head.weight", {cfg.feature_dim()});
    m.head_bias = read_named("head.bias", {});
    return m;
}

// ---------------------------------------------------------------------------
// Idealized block model: an analytic feature extractor that emits a constant
// density of per_block_count / block_size^2, so a block_size x block_size
// region carries exactly per_block_count of feature mass. Used to demonstrate
// how the two heads scale with input size, no training involved.
// ---------------------------------------------------------------------------

struct IdealizedBlockModel {
    int block_size = 8;       // side of the reference region
    double per_block_count = 1.0;
    HeadKind head = HeadKind::Gsp;

    double density() const {
        return per_block_count / (static_cast<double>(block_size) * block_size);
    }
};

inline IdealizedBlockModel build_idealized(int block_size, double per_block_count, HeadKind head) {
    if (block_size < 1) throw ContractError("idealized block size must be >= 1");
    if (per_block_count < 0.0) throw ContractError("idealized per-block count must be >= 0");
    return {block_size, per_block_count, head};
}

struct ScalingCheckResult {
    double gsp_prediction;
    double gap_prediction;
};

// Evaluates both heads on a uniform input of side m * block_size. The sum
// head sees m^2 copies of the reference region and reports m^2 times the
// per-block count; the averaging head reports the per-block count no matter
// how large the input grows.
inline ScalingCheckResult idealized_scaling_check(const IdealizedBlockModel& model, int m) {
    if (m < 1) throw ContractError("scaling check requires m >= 1");
    const int side = m * model.block_size;
    Tensor density_map = Tensor::full({1, side, side}, model.density());
    Tensor one = Tensor::from({1}, {1.0});
    Tensor zero = Tensor::scalar(0.0);
    const double sum_pred = linear(gsp(density_map), one, zero).value();
    // A GAP head calibrated on single blocks needs weight block_size^2 to map
    // the averaged density back to a count.
    Tensor gap_weight = Tensor::from({1}, {static_cast<double>(model.block_size) * model.block_size});
    const double avg_pred = linear(gap(density_map), gap_weight, zero).value();
    return {sum_pred, avg_pred};
}

// Equivalent one-block CountModel (1x1 conv scaling a uniform all-ones input
// to the idealized density), so full pipelines can run on the analytic model.
inline CountModel to_count_model(const IdealizedBlockModel& ideal) {
    ModelConfig cfg;
    cfg.blocks.push_back({1, 1, 1, 0, false});
    cfg.head = ideal.head;
    cfg.in_channels = 1;
    CountModel m;
    m.config = cfg;
    m.kernels.push_back(Tensor::from({1, 1, 1, 1}, {ideal.density()}));
    m.conv_biases.push_back(Tensor::zeros({1}));
    const double w = ideal.head == HeadKind::Gsp
                         ? 1.0
                         : static_cast<double>(ideal.block_size) * ideal.block_size;
    m.head_weight = Tensor::from({1}, {w});
    m.head_bias = Tensor::scalar(0.0);
    return m;
}

} // namespace gsplab
