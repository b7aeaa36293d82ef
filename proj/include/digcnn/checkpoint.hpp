#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "digcnn/corpus.hpp"
#include "digcnn/model.hpp"

namespace digcnn {

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "parameters are float or double");
    return std::is_same_v<T, float> ? DType::Float32 : DType::Float64;
}

inline const char* to_string(DType d) { return d == DType::Float32 ? "float32" : "float64"; }

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;  // exact for both dtypes

    bool operator==(const StoredTensor&) const = default;
};

/// A trained model: configuration, vocabulary and named parameter tensors.
struct Checkpoint {
    static constexpr char magic[4] = {'D', 'I', 'G', 'C'};
    static constexpr std::uint32_t format_version = 1;

    ModelConfig config;
    Vocabulary vocab;
    DType dtype = DType::Float64;
    std::vector<StoredTensor> tensors;

    template <typename T>
    static Checkpoint from_params(const ModelConfig& config, const Vocabulary& vocab, const ModelParams<T>& params) {
        Checkpoint c;
        c.config = config;
        c.vocab = vocab;
        c.dtype = dtype_of<T>();
        for (const auto& [name, var] : params.named_parameters()) {
            StoredTensor t{name, var.shape(), {}};
            t.values.assign(var.value().data().begin(), var.value().data().end());
            c.tensors.push_back(std::move(t));
        }
        return c;
    }

    /// Rebuilds parameters, checking every name and shape against the config.
    template <typename T>
    ModelParams<T> params() const {
        ModelParams<T> p(config, vocab.num_words(), vocab.num_pos());
        auto expected = p.named_parameters();
        if (expected.size() != tensors.size()) {
            throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                                  "checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                                      std::to_string(expected.size()));
        }
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            auto& [name, var] = expected[i];
            if (tensors[i].name != name || tensors[i].shape != var.shape()) {
                throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                                      "checkpoint tensor '" + tensors[i].name + "' " + shape_string(tensors[i].shape) +
                                          " does not match model tensor '" + name + "' " + shape_string(var.shape()));
            }
            auto dst = var.mutable_value().data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(tensors[i].values[j]);
        }
        return p;
    }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"word_emb_dim", c.word_emb_dim},       {"pos_emb_dim", c.pos_emb_dim},
            {"hidden_channels", c.hidden_channels}, {"conv_radius", c.conv_radius},
            {"layers_per_block", c.layers_per_block}, {"num_blocks", c.num_blocks},
            {"num_labels", c.num_labels},           {"input_dropout", c.input_dropout},
            {"block_dropout", c.block_dropout}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.word_emb_dim = j.at("word_emb_dim").get<std::size_t>();
    c.pos_emb_dim = j.at("pos_emb_dim").get<std::size_t>();
    c.hidden_channels = j.at("hidden_channels").get<std::size_t>();
    c.conv_radius = j.at("conv_radius").get<std::size_t>();
    c.layers_per_block = j.at("layers_per_block").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.num_labels = j.at("num_labels").get<std::size_t>();
    c.input_dropout = j.at("input_dropout").get<double>();
    c.block_dropout = j.at("block_dropout").get<double>();
    return c;
}

namespace detail {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const char*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename U>
    void le(U v) {
        static_assert(std::is_unsigned_v<U>);
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    const std::string& str() const noexcept { return out_; }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    const char* take(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n) {
            throw CheckpointError(CheckpointError::Kind::Truncated,
                                  std::string("checkpoint truncated while reading ") + what);
        }
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <typename U>
    U le(const char* what) {
        const char* p = take(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json blob = {{"config", config_to_json(ckpt.config)},
                           {"vocab", {{"words", ckpt.vocab.words()},
                                      {"pos", ckpt.vocab.pos_tags()},
                                      {"labels", ckpt.vocab.labels()}}}};
    const std::string text = blob.dump();

    detail::ByteWriter w;
    w.bytes(Checkpoint::magic, 4);
    w.le<std::uint32_t>(Checkpoint::format_version);
    w.le<std::uint64_t>(text.size());
    w.bytes(text.data(), text.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const StoredTensor& t : ckpt.tensors) {
        w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.le<std::uint8_t>(static_cast<std::uint8_t>(ckpt.dtype));
        w.le<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
        for (std::size_t d : t.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : t.values) {
            if (ckpt.dtype == DType::Float32) {
                w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
            }
        }
    }
    return w.str();
}

inline Checkpoint deserialize_checkpoint(std::string data) {
    using Kind = CheckpointError::Kind;
    if (data.size() < 4 || std::memcmp(data.data(), Checkpoint::magic, 4) != 0) {
        throw CheckpointError(Kind::NotACheckpoint, "not a checkpoint (bad magic bytes)");
    }
    detail::ByteReader r(std::move(data));
    r.take(4, "magic");
    const auto version = r.le<std::uint32_t>("version");
    if (version != Checkpoint::format_version) {
        throw CheckpointError(Kind::UnsupportedVersion, "unsupported version " + std::to_string(version) +
                                                            " (this build reads version " +
                                                            std::to_string(Checkpoint::format_version) + ")");
    }
    const auto blob_len = r.le<std::uint64_t>("config length");
    const char* blob = r.take(blob_len, "config blob");

    Checkpoint ckpt;
    try {
        const auto j = nlohmann::json::parse(blob, blob + blob_len);
        ckpt.config = config_from_json(j.at("config"));
        const auto& v = j.at("vocab");
        ckpt.vocab = Vocabulary::from_lists(v.at("words").get<std::vector<std::string>>(),
                                            v.at("pos").get<std::vector<std::string>>(),
                                            v.at("labels").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::NotACheckpoint, std::string("checkpoint config blob is malformed: ") + e.what());
    } catch (const DataError& e) {
        throw CheckpointError(Kind::NotACheckpoint, std::string("checkpoint vocabulary is malformed: ") + e.what());
    }

    const auto count = r.le<std::uint32_t>("parameter count");
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredTensor t;
        const auto name_len = r.le<std::uint16_t>("parameter name length");
        t.name.assign(r.take(name_len, "parameter name"), name_len);
        const auto code = r.le<std::uint8_t>("dtype");
        if (code > 1) throw CheckpointError(Kind::NotACheckpoint, "unknown dtype code " + std::to_string(code));
        const auto dtype = static_cast<DType>(code);
        if (i == 0) ckpt.dtype = dtype;
        if (dtype != ckpt.dtype) throw CheckpointError(Kind::NotACheckpoint, "mixed parameter dtypes");
        const auto rank = r.le<std::uint8_t>("rank");
        std::size_t n = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            t.shape.push_back(r.le<std::uint32_t>("dimension"));
            n *= t.shape.back();
        }
        t.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            t.values[k] = dtype == DType::Float32
                              ? static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>("parameter values")))
                              : std::bit_cast<double>(r.le<std::uint64_t>("parameter values"));
        }
        ckpt.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw CheckpointError(Kind::NotACheckpoint, "trailing bytes after the last parameter");
    // Validate shapes against the configuration now rather than at first use.
    (void)ckpt.params<double>();
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot open '" + path + "' for writing");
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(std::move(data));
}

}  // namespace digcnn
