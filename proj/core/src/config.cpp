#include "acla/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace acla {

int task_scale(Task t) {
    switch (t) {
        case Task::Sr2: return 2;
        case Task::Sr3: return 3;
        case Task::Sr4: return 4;
        default: return 1;
    }
}

std::string to_string(Task t) {
    switch (t) {
        case Task::Sr2: return "sr2";
        case Task::Sr3: return "sr3";
        case Task::Sr4: return "sr4";
        case Task::Denoise: return "denoise";
        case Task::Demosaic: return "demosaic";
        case Task::CarPrecompressed: return "car-precompressed";
    }
    return "?";
}

std::string to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::None: return "none";
        case AttentionVariant::Nl: return "nl";
        case AttentionVariant::Clnl: return "clnl";
        case AttentionVariant::Cla: return "cla";
        case AttentionVariant::Acla: return "acla";
    }
    return "?";
}

namespace {

std::string trim(std::string s) {
    const auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
}

double parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key, key + ": expected a number, got '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    const double d = parse_number(key, v);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw ConfigError(key, key + ": expected an integer, got '" + v + "'");
    return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError(key, key + ": expected on/off, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_int(key, item));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_number(key, item));
    }
    return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no),
                              "config line " + std::to_string(line_no) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "run.task") {
            if (value == "sr2") cfg.task = Task::Sr2;
            else if (value == "sr3") cfg.task = Task::Sr3;
            else if (value == "sr4") cfg.task = Task::Sr4;
            else if (value == "denoise") cfg.task = Task::Denoise;
            else if (value == "demosaic") cfg.task = Task::Demosaic;
            else if (value == "car-precompressed") cfg.task = Task::CarPrecompressed;
            else throw ConfigError(key, "run.task: unknown task '" + value + "'");
        } else if (key == "run.seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_number(key, value));
        } else if (key == "backbone.blocks") {
            cfg.blocks = parse_int(key, value);
        } else if (key == "backbone.channels") {
            cfg.channels = parse_int(key, value);
        } else if (key == "attention.variant") {
            if (value == "none") cfg.variant = AttentionVariant::None;
            else if (value == "nl") cfg.variant = AttentionVariant::Nl;
            else if (value == "clnl") cfg.variant = AttentionVariant::Clnl;
            else if (value == "cla") cfg.variant = AttentionVariant::Cla;
            else if (value == "acla") cfg.variant = AttentionVariant::Acla;
            else throw ConfigError(key, "attention.variant: unknown variant '" + value + "'");
        } else if (key == "attention.k") {
            cfg.key_count = parse_int(key, value);
        } else if (key == "attention.positions") {
            if (value == "search") {
                cfg.search_positions = true;
                cfg.positions.clear();
            } else if (value == "none" || value.empty()) {
                cfg.search_positions = false;
                cfg.positions.clear();
            } else {
                cfg.search_positions = false;
                cfg.positions = parse_int_list(key, value);
            }
        } else if (key == "search.lambda") {
            if (value == "cv") cfg.lambda_cv = true;
            else {
                cfg.lambda_cv = false;
                cfg.lambda = parse_number(key, value);
            }
        } else if (key == "search.lambda_candidates") {
            cfg.lambda_candidates = parse_double_list(key, value);
        } else if (key == "search.stage1_epochs") {
            cfg.stage1_epochs = parse_int(key, value);
        } else if (key == "search.stage2_epochs") {
            cfg.stage2_epochs = parse_int(key, value);
        } else if (key == "search.tau_start") {
            cfg.tau_start = parse_number(key, value);
        } else if (key == "search.tau_end") {
            cfg.tau_end = parse_number(key, value);
        } else if (key == "search.arch_noise") {
            cfg.arch_noise = parse_bool(key, value);
        } else if (key == "cost.formula") {
            if (value == "literal") cfg.cost_formula = CostFormula::Literal;
            else if (value == "corrected") cfg.cost_formula = CostFormula::Corrected;
            else throw ConfigError(key, "cost.formula: expected literal|corrected");
        } else if (key == "train.epochs") {
            cfg.train_epochs = parse_int(key, value);
        } else if (key == "train.batch") {
            cfg.batch = parse_int(key, value);
        } else if (key == "train.patch") {
            cfg.patch = parse_int(key, value);
        } else if (key == "train.patches_per_image") {
            cfg.patches_per_image = parse_int(key, value);
        } else if (key == "train.lr") {
            cfg.lr = parse_number(key, value);
        } else if (key == "denoise.sigma") {
            cfg.sigma255 = parse_number(key, value);
        } else if (key == "data.train_dir") {
            cfg.train_dir = value;
        } else if (key == "data.val_dir") {
            cfg.val_dir = value;
        } else if (key == "data.degraded_train_dir") {
            cfg.degraded_train_dir = value;
        } else if (key == "data.degraded_val_dir") {
            cfg.degraded_val_dir = value;
        } else {
            throw ConfigError(key, "unknown config key '" + key + "'");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "run.task = " << to_string(cfg.task) << "\n";
    out << "run.seed = " << cfg.seed << "\n";
    out << "backbone.blocks = " << cfg.blocks << "\n";
    out << "backbone.channels = " << cfg.channels << "\n";
    out << "attention.variant = " << to_string(cfg.variant) << "\n";
    out << "attention.k = " << cfg.key_count << "\n";
    out << "attention.positions = ";
    if (cfg.search_positions) {
        out << "search";
    } else if (cfg.positions.empty()) {
        out << "none";
    } else {
        for (std::size_t i = 0; i < cfg.positions.size(); ++i)
            out << (i ? "," : "") << cfg.positions[i];
    }
    out << "\n";
    out << "search.lambda = ";
    if (cfg.lambda_cv) out << "cv";
    else out << cfg.lambda;
    out << "\n";
    out << "search.lambda_candidates = ";
    for (std::size_t i = 0; i < cfg.lambda_candidates.size(); ++i)
        out << (i ? "," : "") << cfg.lambda_candidates[i];
    out << "\n";
    out << "search.stage1_epochs = " << cfg.stage1_epochs << "\n";
    out << "search.stage2_epochs = " << cfg.stage2_epochs << "\n";
    out << "search.tau_start = " << cfg.tau_start << "\n";
    out << "search.tau_end = " << cfg.tau_end << "\n";
    out << "search.arch_noise = " << (cfg.arch_noise ? "on" : "off") << "\n";
    out << "cost.formula = "
        << (cfg.cost_formula == CostFormula::Literal ? "literal" : "corrected") << "\n";
    out << "train.epochs = " << cfg.train_epochs << "\n";
    out << "train.batch = " << cfg.batch << "\n";
    out << "train.patch = " << cfg.patch << "\n";
    out << "train.patches_per_image = " << cfg.patches_per_image << "\n";
    out << "train.lr = " << cfg.lr << "\n";
    out << "denoise.sigma = " << cfg.sigma255 << "\n";
    if (!cfg.train_dir.empty()) out << "data.train_dir = " << cfg.train_dir << "\n";
    if (!cfg.val_dir.empty()) out << "data.val_dir = " << cfg.val_dir << "\n";
    if (!cfg.degraded_train_dir.empty())
        out << "data.degraded_train_dir = " << cfg.degraded_train_dir << "\n";
    if (!cfg.degraded_val_dir.empty())
        out << "data.degraded_val_dir = " << cfg.degraded_val_dir << "\n";
    return out.str();
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.blocks < 1) throw ConfigError("backbone.blocks", "backbone.blocks must be >= 1");
    if (cfg.channels < 1)
        throw ConfigError("backbone.channels", "backbone.channels must be >= 1");
    if (cfg.key_count < 1) throw ConfigError("attention.k", "attention.k must be >= 1");
    if (!std::is_sorted(cfg.positions.begin(), cfg.positions.end()) ||
        std::adjacent_find(cfg.positions.begin(), cfg.positions.end()) != cfg.positions.end())
        throw ConfigError("attention.positions",
                          "attention.positions must be strictly increasing");
    for (int p : cfg.positions)
        if (p < 1 || p > cfg.blocks)
            throw ConfigError("attention.positions",
                              "attention.positions entries must lie in 1..backbone.blocks");
    if (cfg.search_positions && cfg.variant != AttentionVariant::Acla)
        throw ConfigError("attention.positions",
                          "position search is only defined for the acla variant");
    if (cfg.variant == AttentionVariant::Acla && cfg.search_positions && !cfg.positions.empty())
        throw ConfigError("attention.positions",
                          "set either explicit positions or 'search', not both");
    if (cfg.stage1_epochs < 0 || cfg.stage2_epochs < 1)
        throw ConfigError("search.stage2_epochs", "search stages must be non-negative / >= 1");
    if (!(cfg.tau_start > 0.0) || !(cfg.tau_end > 0.0))
        throw ConfigError("search.tau_start", "temperatures must be positive");
    if (cfg.train_epochs < 0) throw ConfigError("train.epochs", "train.epochs must be >= 0");
    if (cfg.batch < 1) throw ConfigError("train.batch", "train.batch must be >= 1");
    if (cfg.patch < 1) throw ConfigError("train.patch", "train.patch must be >= 1");
    if (cfg.patches_per_image < 1)
        throw ConfigError("train.patches_per_image", "train.patches_per_image must be >= 1");
    if (cfg.sigma255 < 0.0) throw ConfigError("denoise.sigma", "denoise.sigma must be >= 0");
    if (cfg.lambda_cv && cfg.lambda_candidates.empty())
        throw ConfigError("search.lambda_candidates",
                          "cross-validation needs a non-empty candidate set");
    if (cfg.task == Task::CarPrecompressed && cfg.degraded_train_dir.empty())
        throw ConfigError("data.degraded_train_dir",
                          "car-precompressed needs pre-degraded input directories");
}

}  // namespace acla
