#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sharnn/errors.hpp"

namespace sharnn {

// Architecture of the byte-level recurrent model. The embedding width always
// equals the hidden width because the input and output embeddings share one
// matrix.
struct ModelConfig {
    int64_t vocab_size = 256;
    int64_t n_layers = 4;
    int64_t hidden = 1024;
    int64_t boom_hidden = 4096;              // must be a multiple of hidden
    std::vector<int64_t> attn_layers = {2};  // which blocks carry the attention head
    int64_t mem_window = 5000;               // attention memory kept across segments
    double dropout_e = 0.0;                  // embedding rows
    double dropout_i = 0.1;                  // block input sequence
    double dropout_h = 0.1;                  // between recurrent layers
    double dropout_o = 0.1;                  // pre-softmax output

    // Default head placement: one head on the second-to-last layer.
    static std::vector<int64_t> default_attn_layers(int64_t n_layers) {
        if (n_layers >= 2) return {n_layers - 2};
        return {};
    }

    int64_t boom_chunks() const { return boom_hidden / hidden; }
    bool has_attention(int64_t layer) const {
        for (int64_t a : attn_layers)
            if (a == layer) return true;
        return false;
    }

    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct LambConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.0;
    double min_trust = 0.25;

    void validate() const;

    bool operator==(const LambConfig&) const = default;
};

struct TrainingConfig {
    int64_t epochs = 25;
    int64_t half_lr_from_epoch = 23;  // 0-based epoch from which lr is halved
    int64_t batch_size = 8;
    int64_t bptt = 1024;
    uint64_t seed = 1;
    int64_t eval_every = 0;   // segments between validation probes, 0 = per epoch
    int64_t eval_batch = 1;   // batch used by validation probes
    int64_t eval_bptt = 256;
    int64_t max_steps = 0;    // optimizer-step budget, 0 = unlimited
    double grad_clip = 0.0;   // global L2 clip, 0 = off (the default)
    std::string precision = "float32";  // float32 | float64
    LambConfig lamb;

    void validate() const;

    bool operator==(const TrainingConfig&) const = default;
};

struct Config {
    ModelConfig model;
    TrainingConfig train;

    void validate() const {
        model.validate();
        train.validate();
    }

    bool operator==(const Config&) const = default;
};

// Flat key=value config files: one pair per line, '#' starts a comment,
// blank lines ignored. Unknown or duplicate keys are rejected with their line
// number. parse_config(render_config(c)) == c for every valid c.
Config parse_config(const std::string& text);
std::string render_config(const Config& cfg);
Config load_config_file(const std::string& path);

}  // namespace sharnn
