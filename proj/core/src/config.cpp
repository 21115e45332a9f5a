#include "sharnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sharnn {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_layers(const std::vector<int64_t>& layers) {
    std::string s;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(layers[i]);
    }
    return s;
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

int64_t parse_i64(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const long long r = std::stoll(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters in integer '" + v + "'");
        return r;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size() || (!v.empty() && v[0] == '-'))
            fail(line, "expected a non-negative integer, got '" + v + "'");
        return r;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected a non-negative integer, got '" + v + "'");
    }
}

double parse_f64(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return r;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

std::vector<int64_t> parse_layer_list(const std::string& v, int line) {
    std::vector<int64_t> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_i64(trim(item), line));
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    auto bad = [](const std::string& what) { throw ConfigError("model config: " + what); };
    if (vocab_size < 2 || vocab_size > 65536) bad("vocab_size out of range");
    if (n_layers < 1) bad("n_layers must be >= 1");
    if (hidden < 1) bad("hidden must be >= 1");
    if (boom_hidden < 1 || boom_hidden % hidden != 0)
        bad("boom_hidden must be a positive multiple of hidden");
    if (mem_window < 0) bad("mem_window must be >= 0");
    std::set<int64_t> seen;
    for (int64_t a : attn_layers) {
        if (a < 0 || a >= n_layers) bad("attn_layers entry " + std::to_string(a) + " outside [0, n_layers)");
        if (!seen.insert(a).second) bad("attn_layers entry " + std::to_string(a) + " repeated");
    }
    for (double d : {dropout_e, dropout_i, dropout_h, dropout_o}) {
        if (d < 0.0 || d >= 1.0) bad("dropout rates must lie in [0, 1)");
    }
}

void LambConfig::validate() const {
    auto bad = [](const std::string& what) { throw ConfigError("lamb config: " + what); };
    if (!(lr > 0.0)) bad("lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) bad("beta1 must lie in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) bad("beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) bad("eps must be > 0");
    if (weight_decay < 0.0) bad("weight_decay must be >= 0");
    if (min_trust < 0.0) bad("min_trust must be >= 0");
}

void TrainingConfig::validate() const {
    auto bad = [](const std::string& what) { throw ConfigError("train config: " + what); };
    if (epochs < 0) bad("epochs must be >= 0");
    if (half_lr_from_epoch < 0) bad("half_lr_from_epoch must be >= 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (bptt < 1) bad("bptt must be >= 1");
    if (eval_every < 0) bad("eval_every must be >= 0");
    if (eval_batch < 1) bad("eval_batch must be >= 1");
    if (eval_bptt < 1) bad("eval_bptt must be >= 1");
    if (max_steps < 0) bad("max_steps must be >= 0");
    if (grad_clip < 0.0) bad("grad_clip must be >= 0");
    if (precision != "float32" && precision != "float64")
        bad("precision must be float32 or float64");
    lamb.validate();
}

Config parse_config(const std::string& text) {
    Config cfg;
    bool attn_given = false;

    using Setter = std::function<void(Config&, const std::string&, int)>;
    static const std::map<std::string, Setter> setters = {
        {"model.vocab_size", [](Config& c, const std::string& v, int l) { c.model.vocab_size = parse_i64(v, l); }},
        {"model.n_layers", [](Config& c, const std::string& v, int l) { c.model.n_layers = parse_i64(v, l); }},
        {"model.hidden", [](Config& c, const std::string& v, int l) { c.model.hidden = parse_i64(v, l); }},
        {"model.boom_hidden", [](Config& c, const std::string& v, int l) { c.model.boom_hidden = parse_i64(v, l); }},
        {"model.attn_layers", [](Config& c, const std::string& v, int l) { c.model.attn_layers = parse_layer_list(v, l); }},
        {"model.mem_window", [](Config& c, const std::string& v, int l) { c.model.mem_window = parse_i64(v, l); }},
        {"model.dropout_e", [](Config& c, const std::string& v, int l) { c.model.dropout_e = parse_f64(v, l); }},
        {"model.dropout_i", [](Config& c, const std::string& v, int l) { c.model.dropout_i = parse_f64(v, l); }},
        {"model.dropout_h", [](Config& c, const std::string& v, int l) { c.model.dropout_h = parse_f64(v, l); }},
        {"model.dropout_o", [](Config& c, const std::string& v, int l) { c.model.dropout_o = parse_f64(v, l); }},
        {"train.epochs", [](Config& c, const std::string& v, int l) { c.train.epochs = parse_i64(v, l); }},
        {"train.half_lr_from_epoch", [](Config& c, const std::string& v, int l) { c.train.half_lr_from_epoch = parse_i64(v, l); }},
        {"train.batch_size", [](Config& c, const std::string& v, int l) { c.train.batch_size = parse_i64(v, l); }},
        {"train.bptt", [](Config& c, const std::string& v, int l) { c.train.bptt = parse_i64(v, l); }},
        {"train.seed", [](Config& c, const std::string& v, int l) { c.train.seed = parse_u64(v, l); }},
        {"train.eval_every", [](Config& c, const std::string& v, int l) { c.train.eval_every = parse_i64(v, l); }},
        {"train.eval_batch", [](Config& c, const std::string& v, int l) { c.train.eval_batch = parse_i64(v, l); }},
        {"train.eval_bptt", [](Config& c, const std::string& v, int l) { c.train.eval_bptt = parse_i64(v, l); }},
        {"train.max_steps", [](Config& c, const std::string& v, int l) { c.train.max_steps = parse_i64(v, l); }},
        {"train.grad_clip", [](Config& c, const std::string& v, int l) { c.train.grad_clip = parse_f64(v, l); }},
        {"train.precision", [](Config& c, const std::string& v, int) { c.train.precision = v; }},
        {"lamb.lr", [](Config& c, const std::string& v, int l) { c.train.lamb.lr = parse_f64(v, l); }},
        {"lamb.beta1", [](Config& c, const std::string& v, int l) { c.train.lamb.beta1 = parse_f64(v, l); }},
        {"lamb.beta2", [](Config& c, const std::string& v, int l) { c.train.lamb.beta2 = parse_f64(v, l); }},
        {"lamb.eps", [](Config& c, const std::string& v, int l) { c.train.lamb.eps = parse_f64(v, l); }},
        {"lamb.weight_decay", [](Config& c, const std::string& v, int l) { c.train.lamb.weight_decay = parse_f64(v, l); }},
        {"lamb.min_trust", [](Config& c, const std::string& v, int l) { c.train.lamb.min_trust = parse_f64(v, l); }},
    };

    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string stripped = trim(raw);
        if (stripped.empty()) continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) fail(line, "expected key=value, got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) fail(line, "empty key");
        const auto it = setters.find(key);
        if (it == setters.end()) fail(line, "unknown key '" + key + "'");
        if (!seen.insert(key).second) fail(line, "duplicate key '" + key + "'");
        it->second(cfg, value, line);
        if (key == "model.attn_layers") attn_given = true;
    }
    if (!attn_given) {
        cfg.model.attn_layers = ModelConfig::default_attn_layers(cfg.model.n_layers);
    }
    cfg.validate();
    return cfg;
}

std::string render_config(const Config& cfg) {
    std::ostringstream out;
    out << "model.vocab_size=" << cfg.model.vocab_size << "\n";
    out << "model.n_layers=" << cfg.model.n_layers << "\n";
    out << "model.hidden=" << cfg.model.hidden << "\n";
    out << "model.boom_hidden=" << cfg.model.boom_hidden << "\n";
    out << "model.attn_layers=" << fmt_layers(cfg.model.attn_layers) << "\n";
    out << "model.mem_window=" << cfg.model.mem_window << "\n";
    out << "model.dropout_e=" << fmt_double(cfg.model.dropout_e) << "\n";
    out << "model.dropout_i=" << fmt_double(cfg.model.dropout_i) << "\n";
    out << "model.dropout_h=" << fmt_double(cfg.model.dropout_h) << "\n";
    out << "model.dropout_o=" << fmt_double(cfg.model.dropout_o) << "\n";
    out << "train.epochs=" << cfg.train.epochs << "\n";
    out << "train.half_lr_from_epoch=" << cfg.train.half_lr_from_epoch << "\n";
    out << "train.batch_size=" << cfg.train.batch_size << "\n";
    out << "train.bptt=" << cfg.train.bptt << "\n";
    out << "train.seed=" << cfg.train.seed << "\n";
    out << "train.eval_every=" << cfg.train.eval_every << "\n";
    out << "train.eval_batch=" << cfg.train.eval_batch << "\n";
    out << "train.eval_bptt=" << cfg.train.eval_bptt << "\n";
    out << "train.max_steps=" << cfg.train.max_steps << "\n";
    out << "train.grad_clip=" << fmt_double(cfg.train.grad_clip) << "\n";
    out << "train.precision=" << cfg.train.precision << "\n";
    out << "lamb.lr=" << fmt_double(cfg.train.lamb.lr) << "\n";
    out << "lamb.beta1=" << fmt_double(cfg.train.lamb.beta1) << "\n";
    out << "lamb.beta2=" << fmt_double(cfg.train.lamb.beta2) << "\n";
    out << "lamb.eps=" << fmt_double(cfg.train.lamb.eps) << "\n";
    out << "lamb.weight_decay=" << fmt_double(cfg.train.lamb.weight_decay) << "\n";
    out << "lamb.min_trust=" << fmt_double(cfg.train.lamb.min_trust) << "\n";
    return out.str();
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace sharnn
