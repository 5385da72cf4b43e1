#include "ctrsgen/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctrsgen {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'G', 'E', 'N'};

json caps_to_json(const LengthCaps& caps) {
    return json{{"query_tokens", caps.query_tokens},
                {"sentence_tokens", caps.sentence_tokens},
                {"mega_sentences", caps.mega_sentences},
                {"doc_sentences", caps.doc_sentences},
                {"target_tokens", caps.target_tokens}};
}

LengthCaps caps_from_json(const json& j) {
    LengthCaps caps;
    caps.query_tokens = j.at("query_tokens").get<int>();
    caps.sentence_tokens = j.at("sentence_tokens").get<int>();
    caps.mega_sentences = j.at("mega_sentences").get<int>();
    caps.doc_sentences = j.at("doc_sentences").get<int>();
    caps.target_tokens = j.at("target_tokens").get<int>();
    return caps;
}

json model_to_json(const ModelConfig& cfg) {
    return json{{"hidden", cfg.hidden},
                {"embedding_dim", cfg.embedding_dim},
                {"vocab_size", cfg.vocab_size},
                {"init_range", cfg.init_range},
                {"lambda_contrast", cfg.lambda_contrast},
                {"share_query_encoder", cfg.share_query_encoder},
                {"untie_irrelevant_encoders", cfg.untie_irrelevant_encoders}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig cfg;
    cfg.hidden = j.at("hidden").get<int>();
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.init_range = j.at("init_range").get<float>();
    cfg.lambda_contrast = j.at("lambda_contrast").get<float>();
    cfg.share_query_encoder = j.at("share_query_encoder").get<bool>();
    cfg.untie_irrelevant_encoders = j.at("untie_irrelevant_encoders").get<bool>();
    return cfg;
}

json train_to_json(const TrainConfig& cfg) {
    return json{{"lr", cfg.lr},
                {"batch_size", cfg.batch_size},
                {"clip_norm", cfg.clip_norm},
                {"epochs", cfg.epochs},
                {"patience", cfg.patience},
                {"seed", cfg.seed},
                {"adam_beta1", cfg.adam_beta1},
                {"adam_beta2", cfg.adam_beta2},
                {"adam_eps", cfg.adam_eps}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig cfg;
    cfg.lr = j.at("lr").get<float>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.clip_norm = j.at("clip_norm").get<float>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.patience = j.at("patience").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.adam_beta1 = j.at("adam_beta1").get<float>();
    cfg.adam_beta2 = j.at("adam_beta2").get<float>();
    cfg.adam_eps = j.at("adam_eps").get<float>();
    return cfg;
}

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
        throw std::runtime_error("checkpoint: write failed");
    }
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
        throw std::runtime_error(std::string("checkpoint: file truncated while reading ") + what);
    }
}

}  // namespace

void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
    json meta;
    meta["model"] = model_to_json(ckpt.model_config);
    meta["train"] = train_to_json(ckpt.train_config);
    meta["caps"] = caps_to_json(ckpt.caps);
    meta["vocab"] = ckpt.vocab.id_to_token;
    meta["vocab_max_size"] = ckpt.vocab.max_size;
    json manifest = json::array();
    std::vector<TensorT<float>*> tensors;
    ckpt.params.for_each_param([&](const std::string& name, TensorT<float>& t) {
        manifest.push_back(json{{"name", name}, {"shape", t.shape()}});
        tensors.push_back(&t);
    });
    meta["tensors"] = std::move(manifest);
    meta["optimizer"] = json{{"included", ckpt.has_optimizer}, {"step", ckpt.adam.step}};
    meta["epoch"] = ckpt.epoch;
    meta["global_step"] = ckpt.global_step;
    meta["rng_state"] = ckpt.rng_state;
    if (std::isfinite(ckpt.best_valid_loss)) {
        meta["best_valid_loss"] = ckpt.best_valid_loss;
    } else {
        meta["best_valid_loss"] = nullptr;
    }
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint file: " + path);
    }
    write_bytes(out, kMagic, sizeof(kMagic));
    const std::uint32_t version = kCheckpointVersion;
    write_bytes(out, &version, sizeof(version));
    const std::uint64_t meta_len = meta_str.size();
    write_bytes(out, &meta_len, sizeof(meta_len));
    write_bytes(out, meta_str.data(), meta_str.size());
    for (auto* t : tensors) {
        write_bytes(out, t->value().data(), t->size() * sizeof(float));
    }
    if (ckpt.has_optimizer) {
        for (const auto& m : ckpt.adam.m) {
            write_bytes(out, m.data(), m.size() * sizeof(float));
        }
        for (const auto& v : ckpt.adam.v) {
            write_bytes(out, v.data(), v.size() * sizeof(float));
        }
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint file: " + path);
    }
    char magic[4];
    read_bytes(in, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic bytes in " + path);
    }
    std::uint32_t version = 0;
    read_bytes(in, &version, sizeof(version), "version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    std::uint64_t meta_len = 0;
    read_bytes(in, &meta_len, sizeof(meta_len), "metadata length");
    std::string meta_str(meta_len, '\0');
    read_bytes(in, meta_str.data(), meta_str.size(), "metadata");
    json meta;
    try {
        meta = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: invalid metadata JSON: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.model_config = model_from_json(meta.at("model"));
        ckpt.train_config = train_from_json(meta.at("train"));
        ckpt.caps = caps_from_json(meta.at("caps"));
        std::vector<std::string> tokens = meta.at("vocab").get<std::vector<std::string>>();
        if (tokens.size() < 4) {
            throw std::runtime_error("checkpoint: vocabulary shorter than the special tokens");
        }
        ckpt.vocab = Vocabulary::from_tokens({tokens.begin() + 4, tokens.end()},
                                             meta.at("vocab_max_size").get<int>());
        ckpt.has_optimizer = meta.at("optimizer").at("included").get<bool>();
        ckpt.adam.step = meta.at("optimizer").at("step").get<std::int64_t>();
        ckpt.epoch = meta.at("epoch").get<int>();
        ckpt.global_step = meta.at("global_step").get<std::int64_t>();
        ckpt.rng_state = meta.at("rng_state").get<std::string>();
        if (meta.at("best_valid_loss").is_null()) {
            ckpt.best_valid_loss = std::numeric_limits<double>::infinity();
        } else {
            ckpt.best_valid_loss = meta.at("best_valid_loss").get<double>();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: metadata field error: ") + e.what());
    }
    if (ckpt.model_config.vocab_size != ckpt.vocab.size()) {
        throw std::runtime_error("checkpoint: config vocab_size " +
                                 std::to_string(ckpt.model_config.vocab_size) +
                                 " does not match stored vocabulary of " +
                                 std::to_string(ckpt.vocab.size()));
    }

    Rng init_rng(0);
    ckpt.params.init(ckpt.model_config, init_rng);
    std::vector<TensorT<float>*> tensors;
    std::vector<std::string> names;
    ckpt.params.for_each_param([&](const std::string& name, TensorT<float>& t) {
        tensors.push_back(&t);
        names.push_back(name);
    });
    const json& manifest = meta.at("tensors");
    if (manifest.size() != tensors.size()) {
        throw std::runtime_error("checkpoint: manifest lists " + std::to_string(manifest.size()) +
                                 " tensors, model has " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::string name = manifest[i].at("name").get<std::string>();
        const std::vector<int> shape = manifest[i].at("shape").get<std::vector<int>>();
        if (name != names[i] || shape != tensors[i]->shape()) {
            throw std::runtime_error("checkpoint: manifest entry " + std::to_string(i) + " (" +
                                     name + ") does not match model tensor " + names[i]);
        }
        read_bytes(in, tensors[i]->mutable_value().data(), tensors[i]->size() * sizeof(float),
                   names[i].c_str());
    }
    if (ckpt.has_optimizer) {
        ckpt.adam.m.clear();
        ckpt.adam.v.clear();
        for (auto* t : tensors) {
            std::vector<float> m(t->size());
            read_bytes(in, m.data(), m.size() * sizeof(float), "optimizer first moment");
            ckpt.adam.m.push_back(std::move(m));
        }
        for (auto* t : tensors) {
            std::vector<float> v(t->size());
            read_bytes(in, v.data(), v.size() * sizeof(float), "optimizer second moment");
            ckpt.adam.v.push_back(std::move(v));
        }
    }
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0) {
        throw std::runtime_error("checkpoint: trailing data after expected content in " + path);
    }
    return ckpt;
}

}  // namespace ctrsgen
