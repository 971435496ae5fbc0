#include "mixbridge/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mixbridge {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream in(v);
    in.imbue(std::locale::classic());
    T out;
    in >> out;
    if (!in || !in.eof()) throw std::invalid_argument("config: bad value for " + key + ": " + v);
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad bool for " + key + ": " + v);
}

std::vector<std::size_t> parse_dims(const std::string& v, const std::string& key) {
    std::vector<std::size_t> out;
    if (trim(v).empty()) return out;
    std::istringstream in(v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const std::string t = trim(tok);
        out.push_back(parse_num<std::size_t>(t, key));
        if (out.back() == 0) throw std::invalid_argument("config: zero dim in " + key);
    }
    return out;
}

std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s;
}

std::string num_to_string(double v) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << v;
    return out.str();
}

// section.key -> accessor table; also defines the canonical snapshot order
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"run.seed",
         {[](Config& c, const std::string& v) { c.seed = parse_num<std::uint64_t>(v, "run.seed"); },
          [](const Config& c) { return std::to_string(c.seed); }}},
        {"data.kind",
         {[](Config& c, const std::string& v) {
              benign_kind_from_string(v);  // validates
              c.kind = v;
          },
          [](const Config& c) { return c.kind; }}},
        {"data.side",
         {[](Config& c, const std::string& v) { c.side = parse_num<int>(v, "data.side"); },
          [](const Config& c) { return std::to_string(c.side); }}},
        {"data.train_count",
         {[](Config& c, const std::string& v) { c.train_count = parse_num<int>(v, "data.train_count"); },
          [](const Config& c) { return std::to_string(c.train_count); }}},
        {"data.eval_count",
         {[](Config& c, const std::string& v) { c.eval_count = parse_num<int>(v, "data.eval_count"); },
          [](const Config& c) { return std::to_string(c.eval_count); }}},
        {"data.n_attacks",
         {[](Config& c, const std::string& v) { c.n_attacks = parse_num<int>(v, "data.n_attacks"); },
          [](const Config& c) { return std::to_string(c.n_attacks); }}},
        {"data.trigger_size",
         {[](Config& c, const std::string& v) { c.trigger_size = parse_num<int>(v, "data.trigger_size"); },
          [](const Config& c) { return std::to_string(c.trigger_size); }}},
        {"data.trigger_value",
         {[](Config& c, const std::string& v) { c.trigger_value = parse_num<double>(v, "data.trigger_value"); },
          [](const Config& c) { return num_to_string(c.trigger_value); }}},
        {"data.bank_size",
         {[](Config& c, const std::string& v) { c.bank_size = parse_num<int>(v, "data.bank_size"); },
          [](const Config& c) { return std::to_string(c.bank_size); }}},
        {"data.mixture_mode",
         {[](Config& c, const std::string& v) {
              if (v != "equal" && v != "poison")
                  throw std::invalid_argument("config: data.mixture_mode must be equal|poison");
              c.mixture_mode = v;
          },
          [](const Config& c) { return c.mixture_mode; }}},
        {"data.poison_rate",
         {[](Config& c, const std::string& v) { c.poison_rate = parse_num<double>(v, "data.poison_rate"); },
          [](const Config& c) { return num_to_string(c.poison_rate); }}},
        {"schedule.n_steps",
         {[](Config& c, const std::string& v) { c.n_steps = parse_num<int>(v, "schedule.n_steps"); },
          [](const Config& c) { return std::to_string(c.n_steps); }}},
        {"schedule.beta_min",
         {[](Config& c, const std::string& v) { c.beta_min = parse_num<double>(v, "schedule.beta_min"); },
          [](const Config& c) { return num_to_string(c.beta_min); }}},
        {"schedule.beta_max",
         {[](Config& c, const std::string& v) { c.beta_max = parse_num<double>(v, "schedule.beta_max"); },
          [](const Config& c) { return num_to_string(c.beta_max); }}},
        {"model.hidden",
         {[](Config& c, const std::string& v) { c.hidden = parse_dims(v, "model.hidden"); },
          [](const Config& c) { return dims_to_string(c.hidden); }}},
        {"model.time_dim",
         {[](Config& c, const std::string& v) { c.time_dim = parse_num<int>(v, "model.time_dim"); },
          [](const Config& c) { return std::to_string(c.time_dim); }}},
        {"model.feature_hidden",
         {[](Config& c, const std::string& v) { c.feature_hidden = parse_dims(v, "model.feature_hidden"); },
          [](const Config& c) { return dims_to_string(c.feature_hidden); }}},
        {"model.feature_dim",
         {[](Config& c, const std::string& v) { c.feature_dim = parse_num<std::size_t>(v, "model.feature_dim"); },
          [](const Config& c) { return std::to_string(c.feature_dim); }}},
        {"train.batch",
         {[](Config& c, const std::string& v) { c.batch = parse_num<int>(v, "train.batch"); },
          [](const Config& c) { return std::to_string(c.batch); }}},
        {"train.iters_single",
         {[](Config& c, const std::string& v) { c.iters_single = parse_num<int>(v, "train.iters_single"); },
          [](const Config& c) { return std::to_string(c.iters_single); }}},
        {"train.iters_divide",
         {[](Config& c, const std::string& v) { c.iters_divide = parse_num<int>(v, "train.iters_divide"); },
          [](const Config& c) { return std::to_string(c.iters_divide); }}},
        {"train.iters_router",
         {[](Config& c, const std::string& v) { c.iters_router = parse_num<int>(v, "train.iters_router"); },
          [](const Config& c) { return std::to_string(c.iters_router); }}},
        {"train.iters_merge",
         {[](Config& c, const std::string& v) { c.iters_merge = parse_num<int>(v, "train.iters_merge"); },
          [](const Config& c) { return std::to_string(c.iters_merge); }}},
        {"train.lr",
         {[](Config& c, const std::string& v) { c.lr = parse_num<double>(v, "train.lr"); },
          [](const Config& c) { return num_to_string(c.lr); }}},
        {"train.lr_merge",
         {[](Config& c, const std::string& v) { c.lr_merge = parse_num<double>(v, "train.lr_merge"); },
          [](const Config& c) { return num_to_string(c.lr_merge); }}},
        {"train.weight_decay",
         {[](Config& c, const std::string& v) { c.weight_decay = parse_num<double>(v, "train.weight_decay"); },
          [](const Config& c) { return num_to_string(c.weight_decay); }}},
        {"train.lambda_wrs",
         {[](Config& c, const std::string& v) { c.lambda_wrs = parse_num<double>(v, "train.lambda_wrs"); },
          [](const Config& c) { return num_to_string(c.lambda_wrs); }}},
        {"sample.coarse_steps",
         {[](Config& c, const std::string& v) { c.coarse_steps = parse_num<int>(v, "sample.coarse_steps"); },
          [](const Config& c) { return std::to_string(c.coarse_steps); }}},
        {"sample.deterministic",
         {[](Config& c, const std::string& v) { c.deterministic = parse_bool(v, "sample.deterministic"); },
          [](const Config& c) { return c.deterministic ? std::string("true") : std::string("false"); }}},
        {"sample.count",
         {[](Config& c, const std::string& v) { c.sample_count = parse_num<int>(v, "sample.count"); },
          [](const Config& c) { return std::to_string(c.sample_count); }}},
        {"eval.asr_threshold",
         {[](Config& c, const std::string& v) { c.asr_threshold = parse_num<double>(v, "eval.asr_threshold"); },
          [](const Config& c) { return num_to_string(c.asr_threshold); }}},
        {"defense.lambda_def",
         {[](Config& c, const std::string& v) { c.defense_lambda = parse_num<double>(v, "defense.lambda_def"); },
          [](const Config& c) { return num_to_string(c.defense_lambda); }}},
        {"defense.steps",
         {[](Config& c, const std::string& v) { c.defense_steps = parse_num<int>(v, "defense.steps"); },
          [](const Config& c) { return std::to_string(c.defense_steps); }}},
        {"defense.lr",
         {[](Config& c, const std::string& v) { c.defense_lr = parse_num<double>(v, "defense.lr"); },
          [](const Config& c) { return num_to_string(c.defense_lr); }}},
        {"defense.init_noise",
         {[](Config& c, const std::string& v) { c.defense_init_noise = parse_num<double>(v, "defense.init_noise"); },
          [](const Config& c) { return num_to_string(c.defense_init_noise); }}},
    };
    return table;
}

const Field* find_field(const std::string& full_key) {
    for (const auto& [name, field] : fields())
        if (name == full_key) return &field;
    return nullptr;
}

}  // namespace

void Config::validate() const {
    train_config().validate();
    if (side < 8) throw std::invalid_argument("config: data.side must be >= 8");
    if (train_count < 1 || eval_count < 1)
        throw std::invalid_argument("config: dataset counts must be >= 1");
    if (n_attacks < 0 || n_attacks > 4)
        throw std::invalid_argument("config: data.n_attacks must be in 0..4 (disjoint corners)");
    if (trigger_size < 1 || trigger_size > side)
        throw std::invalid_argument("config: data.trigger_size must fit the image");
    if (bank_size < 1) throw std::invalid_argument("config: data.bank_size must be >= 1");
    if (mixture_mode == "poison" && (poison_rate < 0.0 || poison_rate > 1.0))
        throw std::invalid_argument("config: data.poison_rate must be in [0,1]");
    if (coarse_steps < 0) throw std::invalid_argument("config: sample.coarse_steps must be >= 0");
    if (sample_count < 1) throw std::invalid_argument("config: sample.count must be >= 1");
    if (!(defense_lambda > 0.0) || !(defense_lr > 0.0) || defense_steps < 0 ||
        defense_init_noise < 0.0)
        throw std::invalid_argument("config: bad defense settings");
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.n_steps = n_steps;
    t.beta_min = beta_min;
    t.beta_max = beta_max;
    t.batch = batch;
    t.iters_single = iters_single;
    t.iters_divide = iters_divide;
    t.iters_router = iters_router;
    t.iters_merge = iters_merge;
    t.lr = lr;
    t.lr_merge = lr_merge;
    t.weight_decay = weight_decay;
    t.lambda_wrs = lambda_wrs;
    t.hidden = hidden;
    t.time_dim = time_dim;
    t.feature_hidden = feature_hidden;
    t.feature_dim = feature_dim;
    t.seed = seed;
    t.mixture = mixture();
    return t;
}

MixtureSpec Config::mixture() const {
    if (mixture_mode == "poison") return MixtureSpec::poison_rate(poison_rate, n_attacks);
    return MixtureSpec::equal(n_attacks);
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& [name, _] : fields())
                if (name.rfind(section + ".", 0) == 0) known = true;
            if (!known)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": key outside any [section]");
        const std::string full = section + "." + key;
        const Field* f = find_field(full);
        if (!f)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key " + full);
        f->set(cfg, value);
    }
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(Config& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw std::invalid_argument("override: unknown key " + key);
    f->set(cfg, value);
}

std::string resolved_text(const Config& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& [name, field] : fields()) {
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << name.substr(dot + 1) << " = " << field.get(cfg) << "\n";
    }
    return out.str();
}

std::string config_hash_hex(const Config& cfg) {
    const std::string text = resolved_text(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace mixbridge
