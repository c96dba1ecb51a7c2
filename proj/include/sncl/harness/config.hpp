#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "sncl/diffcore/optim.hpp"
#include "sncl/errors.hpp"
#include "sncl/subnet/wsn.hpp"

namespace sncl::harness {

using sncl::to_string;

enum class Scenario { til, vil, fscil };

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::til: return "til";
        case Scenario::vil: return "vil";
        case Scenario::fscil: return "fscil";
    }
    return "?";
}

/// Synthetic data shape. TIL uses sessions x classes_per_session Gaussian
/// classes; FSCIL uses base_classes then `sessions` incremental sessions of
/// ways x shots; VIL uses `sessions` videos of frames x height x width.
struct DatasetSpec {
    int sessions = 5;
    int classes_per_session = 2;
    std::size_t dim = 2;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double separation = 4.0;  // distance from each class mean to the midpoint between means, in sigmas
    int base_classes = 6;
    int ways = 2;
    std::size_t shots = 5;
    std::size_t frames = 16;
    std::size_t height = 32;
    std::size_t width = 32;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::til;
    std::uint64_t seed = 0;
    subnet::TrainingMode mode = subnet::TrainingMode::wsn;
    double capacity = 0.5;
    std::string fso = "none";
    diffcore::OptimizerKind optimizer = diffcore::OptimizerKind::adam;
    double lr = 0.01;
    int epochs = 20;
    std::size_t batch_size = 32;
    std::size_t hidden = 64;
    int incremental_epochs = 6;
    double incremental_lr = 0.02;
    std::size_t exemplars_per_class = 1;
    double warmup_fraction = 0.2;
    double alpha = 0.7;
    int eval_every = 25;
    DatasetSpec data;
    std::string output_dir = "out";
};

/// Scenario defaults before any key of a config file is applied.
inline ExperimentConfig defaults_for(Scenario s) {
    ExperimentConfig c;
    c.scenario = s;
    switch (s) {
        case Scenario::til:
            break;
        case Scenario::vil:
            c.capacity = 0.3;
            c.lr = 5e-3;
            c.epochs = 300;
            c.batch_size = 1;
            c.data.sessions = 3;
            break;
        case Scenario::fscil:
            c.capacity = 0.7;
            c.lr = 0.01;
            c.epochs = 30;
            c.hidden = 128;
            c.data.sessions = 3;
            c.data.dim = 16;
            c.data.train_per_class = 100;
            c.data.test_per_class = 50;
            c.data.separation = 3.0;
            break;
    }
    return c;
}

inline Scenario parse_scenario(const std::string& s) {
    if (s == "til") return Scenario::til;
    if (s == "vil") return Scenario::vil;
    if (s == "fscil") return Scenario::fscil;
    throw ValidationError("scenario", "expected til, vil or fscil, got '" + s + "'");
}

inline std::set<std::string> fso_choices(Scenario s) {
    if (s == Scenario::vil) return {"none", "nerv2", "nerv3"};
    return {"none", "hidden"};
}

/// Throws ValidationError naming the first offending field.
inline void validate(const ExperimentConfig& c) {
    auto need = [](bool ok, const char* field, const std::string& what) {
        if (!ok) throw ValidationError(field, what);
    };
    if (c.scenario == Scenario::fscil)
        need(c.capacity > 0.0 && c.capacity < 1.0, "train.capacity", "soft masks need 0 < c < 1");
    else
        need(c.capacity > 0.0 && c.capacity <= 1.0, "train.capacity", "must lie in (0, 1]");
    need(c.lr > 0.0, "train.lr", "must be positive");
    need(c.epochs >= 1, "train.epochs", "must be at least 1");
    need(c.batch_size >= 1, "train.batch_size", "must be at least 1");
    need(c.hidden >= 1, "model.hidden", "must be at least 1");
    need(fso_choices(c.scenario).count(c.fso) == 1, "model.fso", "'" + c.fso + "' is not a placement for this scenario");
    need(c.mode == subnet::TrainingMode::wsn || c.scenario != Scenario::fscil, "train.mode",
         "fscil always trains soft subnetworks");
    need(c.incremental_epochs >= 0, "train.incremental_epochs", "must not be negative");
    need(c.incremental_lr > 0.0, "train.incremental_lr", "must be positive");
    need(c.warmup_fraction >= 0.0 && c.warmup_fraction < 1.0, "train.warmup_fraction", "must lie in [0, 1)");
    need(c.alpha >= 0.0 && c.alpha <= 1.0, "train.alpha", "must lie in [0, 1]");
    need(c.eval_every >= 1, "train.eval_every", "must be at least 1");
    const auto& d = c.data;
    need(d.sessions >= 1, "data.sessions", "must be at least 1");
    switch (c.scenario) {
        case Scenario::til:
            need(d.classes_per_session >= 2, "data.classes_per_session", "must be at least 2");
            break;
        case Scenario::fscil:
            need(d.base_classes >= 2, "data.base_classes", "must be at least 2");
            need(d.ways >= 1, "data.ways", "must be at least 1");
            need(d.shots >= 1, "data.shots", "must be at least 1");
            break;
        case Scenario::vil:
            need(d.frames >= 1, "data.frames", "must be at least 1");
            need(d.height >= 8 && d.height % 8 == 0, "data.height", "must be a positive multiple of 8");
            need(d.width >= 8 && d.width % 8 == 0, "data.width", "must be a positive multiple of 8");
            break;
    }
    if (c.scenario != Scenario::vil) {
        need(d.dim >= 1, "data.dim", "must be at least 1");
        need(d.train_per_class >= 1, "data.train_per_class", "must be at least 1");
        need(d.test_per_class >= 1, "data.test_per_class", "must be at least 1");
        need(d.separation > 0.0, "data.separation", "must be positive");
    }
    need(!c.output_dir.empty(), "output.dir", "must not be empty");
}

namespace detail {

inline std::string clean_value(std::string v) {
    const auto hash = v.find(" #");
    if (v.find('"') == std::string::npos && hash != std::string::npos) v.erase(hash);
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.pop_back();
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.erase(v.begin());
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        v = v.substr(1, v.size() - 2);
    return v;
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ValidationError(field, "expected a number, got '" + text + "'");
    return value;
}

}  // namespace detail

/// Builds a config from a key/value tree (TOML-style sections or JSON objects).
/// Unknown keys are rejected so typos cannot pass silently.
inline ExperimentConfig config_from_tree(const boost::property_tree::ptree& tree) {
    const auto scen = tree.get_optional<std::string>("scenario");
    if (!scen) throw ValidationError("scenario", "missing");
    ExperimentConfig c = defaults_for(parse_scenario(detail::clean_value(*scen)));

    using Setter = std::function<void(const std::string& field, const std::string& value)>;
    auto str = [](std::string& dst) -> Setter { return [&dst](const std::string&, const std::string& v) { dst = v; }; };
    auto num = [](auto& dst) -> Setter {
        return [&dst](const std::string& f, const std::string& v) {
            dst = detail::parse_number<std::remove_reference_t<decltype(dst)>>(f, v);
        };
    };
    const std::map<std::string, Setter> setters = {
        {"scenario", [](const std::string&, const std::string&) {}},
        {"seed", num(c.seed)},
        {"train.mode",
         [&c](const std::string& f, const std::string& v) {
             if (v == "wsn") c.mode = subnet::TrainingMode::wsn;
             else if (v == "finetune") c.mode = subnet::TrainingMode::finetune;
             else throw ValidationError(f, "expected wsn or finetune, got '" + v + "'");
         }},
        {"train.capacity", num(c.capacity)},
        {"train.optimizer",
         [&c](const std::string& f, const std::string& v) {
             try {
                 c.optimizer = diffcore::parse_optimizer(v);
             } catch (const Error& e) {
                 throw ValidationError(f, e.what());
             }
         }},
        {"train.lr", num(c.lr)},
        {"train.epochs", num(c.epochs)},
        {"train.batch_size", num(c.batch_size)},
        {"train.incremental_epochs", num(c.incremental_epochs)},
        {"train.incremental_lr", num(c.incremental_lr)},
        {"train.exemplars_per_class", num(c.exemplars_per_class)},
        {"train.warmup_fraction", num(c.warmup_fraction)},
        {"train.alpha", num(c.alpha)},
        {"train.eval_every", num(c.eval_every)},
        {"model.hidden", num(c.hidden)},
        {"model.fso", str(c.fso)},
        {"data.sessions", num(c.data.sessions)},
        {"data.classes_per_session", num(c.data.classes_per_session)},
        {"data.dim", num(c.data.dim)},
        {"data.train_per_class", num(c.data.train_per_class)},
        {"data.test_per_class", num(c.data.test_per_class)},
        {"data.separation", num(c.data.separation)},
        {"data.base_classes", num(c.data.base_classes)},
        {"data.ways", num(c.data.ways)},
        {"data.shots", num(c.data.shots)},
        {"data.frames", num(c.data.frames)},
        {"data.height", num(c.data.height)},
        {"data.width", num(c.data.width)},
        {"output.dir", str(c.output_dir)},
    };

    std::function<void(const boost::property_tree::ptree&, const std::string&)> walk =
        [&](const boost::property_tree::ptree& node, const std::string& prefix) {
            for (const auto& [key, child] : node) {
                const std::string field = prefix.empty() ? key : prefix + "." + key;
                if (!child.empty()) {
                    walk(child, field);
                    continue;
                }
                auto it = setters.find(field);
                if (it == setters.end()) throw ValidationError(field, "unknown key");
                it->second(field, detail::clean_value(child.data()));
            }
        };
    walk(tree, "");
    validate(c);
    return c;
}

/// Reads a config file: .json as JSON, anything else as TOML-style key/value sections.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("--config", "cannot open '" + path + "'");
    boost::property_tree::ptree tree;
    try {
        if (std::filesystem::path(path).extension() == ".json")
            boost::property_tree::read_json(in, tree);
        else
            boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::file_parser_error& e) {
        throw ValidationError("--config", e.what());
    }
    return config_from_tree(tree);
}

inline ExperimentConfig parse_config_text(const std::string& text, bool json = false) {
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    try {
        if (json)
            boost::property_tree::read_json(in, tree);
        else
            boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::file_parser_error& e) {
        throw ValidationError("config", e.what());
    }
    return config_from_tree(tree);
}

/// Canonical JSON of everything that determines the run's results (the output
/// directory is excluded).
inline nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& d = c.data;
    return {
        {"scenario", to_string(c.scenario)},
        {"seed", c.seed},
        {"train",
         {{"mode", c.mode == subnet::TrainingMode::wsn ? "wsn" : "finetune"},
          {"capacity", c.capacity},
          {"optimizer", c.optimizer == diffcore::OptimizerKind::adam ? "adam" : "sgd"},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"incremental_epochs", c.incremental_epochs},
          {"incremental_lr", c.incremental_lr},
          {"exemplars_per_class", c.exemplars_per_class},
          {"warmup_fraction", c.warmup_fraction},
          {"alpha", c.alpha},
          {"eval_every", c.eval_every}}},
        {"model", {{"hidden", c.hidden}, {"fso", c.fso}}},
        {"data",
         {{"sessions", d.sessions},
          {"classes_per_session", d.classes_per_session},
          {"dim", d.dim},
          {"train_per_class", d.train_per_class},
          {"test_per_class", d.test_per_class},
          {"separation", d.separation},
          {"base_classes", d.base_classes},
          {"ways", d.ways},
          {"shots", d.shots},
          {"frames", d.frames},
          {"height", d.height},
          {"width", d.width}}},
    };
}

/// Inverse of to_json (the output directory is left at its default).
inline ExperimentConfig from_json(const nlohmann::json& j) {
    boost::property_tree::ptree tree;
    std::function<void(const nlohmann::json&, const std::string&)> flatten = [&](const nlohmann::json& node,
                                                                                const std::string& prefix) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_object())
                flatten(*it, key);
            else
                tree.put(boost::property_tree::ptree::path_type(key, '.'),
                         it->is_string() ? it->get<std::string>() : it->dump());
        }
    };
    flatten(j, "");
    return config_from_tree(tree);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(to_json(c).dump()); }

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

}  // namespace sncl::harness
