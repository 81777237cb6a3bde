#include "fnr/config.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <vector>

#include "fnr/errors.hpp"

namespace fnr {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string where(int line_no) {
    return line_no > 0 ? " (line " + std::to_string(line_no) + ")" : "";
}

double parse_real(const std::string& key, const std::string& value, int line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument("trailing junk");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number '" + value + "' for key '" + key + "'" + where(line_no));
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value, int line_no) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument("trailing junk");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer '" + value + "' for key '" + key + "'" + where(line_no));
    }
}

template <std::size_t N>
std::array<int, N> parse_int_list(const std::string& key, const std::string& value, int line_no) {
    std::array<int, N> out{};
    std::stringstream ss(value);
    std::string item;
    std::size_t count = 0;
    while (std::getline(ss, item, ',')) {
        if (count >= N) {
            throw ConfigError("key '" + key + "' expects exactly " + std::to_string(N) + " values" +
                              where(line_no));
        }
        out[count++] = static_cast<int>(parse_int(key, trim(item), line_no));
    }
    if (count != N) {
        throw ConfigError("key '" + key + "' expects exactly " + std::to_string(N) + " values, got " +
                          std::to_string(count) + where(line_no));
    }
    return out;
}

} // namespace

std::int64_t default_iterations(const std::string& profile_name, Stage stage) {
    if (profile_name == "full") {
        return stage == Stage::Coarse ? 200000 : 150000;
    }
    return stage == Stage::Coarse ? 5000 : 4000;
}

Config default_config(const std::string& profile_name) {
    Config config;
    config.profile_name = profile_name;
    if (profile_name == "desk") {
        config.profile = ArchProfile::desk();
    } else if (profile_name == "full") {
        config.profile = ArchProfile::full();
    } else {
        throw ConfigError("unknown profile '" + profile_name + "' (expected desk or full)");
    }
    return config;
}

void apply_config_value(Config& config, const std::string& key, const std::string& value, int line_no) {
    auto& profile = config.profile;
    auto& train = config.train;
    if (key == "profile") {
        Config fresh = default_config(value);
        config.profile_name = fresh.profile_name;
        config.profile = fresh.profile;
    } else if (key == "stage") {
        if (value == "coarse") {
            train.stage = Stage::Coarse;
        } else if (value == "refine") {
            train.stage = Stage::Refine;
        } else {
            throw ConfigError("invalid stage '" + value + "'" + where(line_no));
        }
    } else if (key == "lr") {
        train.lr = parse_real(key, value, line_no);
        if (!(train.lr > 0)) {
            throw ConfigError("lr must be positive" + where(line_no));
        }
    } else if (key == "iterations") {
        train.iterations = parse_int(key, value, line_no);
        if (train.iterations < 0) {
            throw ConfigError("iterations must be >= 0" + where(line_no));
        }
    } else if (key == "batch_size") {
        train.batch_size = static_cast<int>(parse_int(key, value, line_no));
        if (train.batch_size < 1) {
            throw ConfigError("batch_size must be >= 1" + where(line_no));
        }
    } else if (key == "lambda_dcp") {
        train.lambda_dcp = parse_real(key, value, line_no);
    } else if (key == "seed") {
        train.seed = static_cast<std::uint64_t>(parse_int(key, value, line_no));
    } else if (key == "checkpoint_every") {
        train.checkpoint_every = parse_int(key, value, line_no);
    } else if (key == "image_size") {
        profile.image_size = static_cast<int>(parse_int(key, value, line_no));
        if (profile.image_size < 64 || profile.image_size % 64 != 0) {
            throw ConfigError("image_size must be a positive multiple of 64" + where(line_no));
        }
    } else if (key == "widths") {
        const auto w = parse_int_list<6>(key, value, line_no);
        profile.cp_widths = w;
        profile.face_widths = w;
    } else if (key == "er_widths") {
        profile.er_widths = parse_int_list<3>(key, value, line_no);
    } else if (key == "er_fpn_channels") {
        profile.er_fpn_channels = static_cast<int>(parse_int(key, value, line_no));
    } else if (key == "disc_widths") {
        profile.disc_widths = parse_int_list<4>(key, value, line_no);
    } else if (key == "disc_attention_level") {
        profile.disc_attention_level = static_cast<int>(parse_int(key, value, line_no));
    } else if (key == "attention_max_hw") {
        profile.attention_max_hw = static_cast<int>(parse_int(key, value, line_no));
    } else if (key == "merge") {
        if (value == "sum") {
            profile.merge = MergeMode::Sum;
        } else if (value == "concat") {
            profile.merge = MergeMode::Concat;
        } else {
            throw ConfigError("invalid merge mode '" + value + "'" + where(line_no));
        }
    } else if (key == "norm") {
        if (value == "instance") {
            profile.norm = NormKind::Instance;
        } else if (value == "none") {
            profile.norm = NormKind::None;
        } else {
            throw ConfigError("invalid norm '" + value + "'" + where(line_no));
        }
    } else if (key == "adv_loss") {
        if (value == "hinge") {
            profile.adv_loss = AdvLossKind::Hinge;
        } else if (value == "nonsat") {
            profile.adv_loss = AdvLossKind::NonSaturating;
        } else {
            throw ConfigError("invalid adv_loss '" + value + "'" + where(line_no));
        }
    } else if (key == "leaky_slope") {
        profile.leaky_slope = static_cast<float>(parse_real(key, value, line_no));
    } else {
        throw ConfigError("unknown config key '" + key + "'" + where(line_no));
    }
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    struct Entry {
        std::string key;
        std::string value;
        int line_no;
    };
    std::vector<Entry> entries;
    std::string line;
    int line_no = 0;
    std::vector<std::string> unknown;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected 'key = value' at line " + std::to_string(line_no) + " of '" +
                              path + "'");
        }
        entries.push_back({trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)), line_no});
    }

    Config config;
    // The profile key resets the architecture defaults, so it applies first.
    for (const auto& e : entries) {
        if (e.key == "profile") {
            config = default_config(e.value);
        }
    }
    static const char* known[] = {"profile",          "stage",
                                  "lr",               "iterations",
                                  "batch_size",       "lambda_dcp",
                                  "seed",             "checkpoint_every",
                                  "image_size",       "widths",
                                  "er_widths",        "er_fpn_channels",
                                  "disc_widths",      "disc_attention_level",
                                  "attention_max_hw", "merge",
                                  "norm",             "adv_loss",
                                  "leaky_slope"};
    for (const auto& e : entries) {
        bool is_known = false;
        for (const char* k : known) {
            is_known = is_known || e.key == k;
        }
        if (!is_known) {
            unknown.push_back("'" + e.key + "' (line " + std::to_string(e.line_no) + ")");
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config key";
        if (unknown.size() > 1) {
            msg += "s";
        }
        msg += ": ";
        for (std::size_t i = 0; i < unknown.size(); ++i) {
            if (i) {
                msg += ", ";
            }
            msg += unknown[i];
        }
        throw ConfigError(msg);
    }
    for (const auto& e : entries) {
        if (e.key != "profile") {
            apply_config_value(config, e.key, e.value, e.line_no);
        }
    }
    return config;
}

std::string config_to_string(const Config& config) {
    std::ostringstream os;
    os << "profile = " << config.profile_name << "\n";
    os << "stage = " << (config.train.stage == Stage::Coarse ? "coarse" : "refine") << "\n";
    os << "lr = " << config.train.lr << "\n";
    os << "iterations = " << config.train.iterations << "\n";
    os << "batch_size = " << config.train.batch_size << "\n";
    os << "lambda_dcp = " << config.train.lambda_dcp << "\n";
    os << "seed = " << config.train.seed << "\n";
    os << "checkpoint_every = " << config.train.checkpoint_every << "\n";
    os << "image_size = " << config.profile.image_size << "\n";
    auto list = [&os](const char* key, const int* values, std::size_t n) {
        os << key << " = ";
        for (std::size_t i = 0; i < n; ++i) {
            if (i) {
                os << ",";
            }
            os << values[i];
        }
        os << "\n";
    };
    list("widths", config.profile.cp_widths.data(), 6);
    list("er_widths", config.profile.er_widths.data(), 3);
    os << "er_fpn_channels = " << config.profile.er_fpn_channels << "\n";
    list("disc_widths", config.profile.disc_widths.data(), 4);
    os << "disc_attention_level = " << config.profile.disc_attention_level << "\n";
    os << "attention_max_hw = " << config.profile.attention_max_hw << "\n";
    os << "merge = " << (config.profile.merge == MergeMode::Sum ? "sum" : "concat") << "\n";
    os << "norm = " << (config.profile.norm == NormKind::Instance ? "instance" : "none") << "\n";
    os << "adv_loss = " << (config.profile.adv_loss == AdvLossKind::Hinge ? "hinge" : "nonsat") << "\n";
    os << "leaky_slope = " << config.profile.leaky_slope << "\n";
    return os.str();
}

} // namespace fnr
