#include "fedlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fedlab::exp {

using nlohmann::json;

namespace {

std::string with_line(const std::string& field, const std::string& message, std::size_t line) {
    std::string out = field.empty() ? message : field + ": " + message;
    if (line > 0) out = "line " + std::to_string(line) + ": " + out;
    return out;
}

std::string join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

// Typed field access that reports the dotted path of any bad value.
class Reader {
public:
    explicit Reader(const std::string& source) : source_(source) {}

    [[noreturn]] void fail(const std::string& path, const std::string& message) const {
        throw ConfigError(path, message, locate_field(source_, path));
    }

    const json* find(const json& obj, const std::string& key) const {
        const auto it = obj.find(key);
        return it == obj.end() || it->is_null() ? nullptr : &*it;
    }

    const json& object(const json& obj, const std::string& parent, const std::string& key) const {
        static const json empty = json::object();
        const json* v = find(obj, key);
        if (!v) return empty;
        if (!v->is_object()) fail(join(parent, key), "expected an object");
        return *v;
    }

    void only_keys(const json& obj, const std::string& parent, std::initializer_list<const char*> allowed) const {
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [k, _] : obj.items()) {
            if (!ok.contains(k)) fail(join(parent, k), "unknown field");
        }
    }

    std::size_t count(const json& obj, const std::string& parent, const std::string& key, std::size_t def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) fail(join(parent, key), "expected a non-negative integer");
        return v->get<std::size_t>();
    }

    std::uint64_t u64(const json& obj, const std::string& parent, const std::string& key, std::uint64_t def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) fail(join(parent, key), "expected a non-negative integer");
        return v->get<std::uint64_t>();
    }

    int integer(const json& obj, const std::string& parent, const std::string& key, int def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_number_integer()) fail(join(parent, key), "expected an integer");
        return v->get<int>();
    }

    double number(const json& obj, const std::string& parent, const std::string& key, double def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_number()) fail(join(parent, key), "expected a number");
        return v->get<double>();
    }

    bool boolean(const json& obj, const std::string& parent, const std::string& key, bool def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_boolean()) fail(join(parent, key), "expected true or false");
        return v->get<bool>();
    }

    std::string string(const json& obj, const std::string& parent, const std::string& key, std::string def) const {
        const json* v = find(obj, key);
        if (!v) return def;
        if (!v->is_string()) fail(join(parent, key), "expected a string");
        return v->get<std::string>();
    }

private:
    const std::string& source_;
};

}  // namespace

ConfigError::ConfigError(std::string field, std::string message, std::size_t line)
    : InvalidInput(with_line(field, message, line)), field_(std::move(field)), line_(line) {}

std::size_t locate_field(const std::string& source, const std::string& dotted_path) {
    if (source.empty() || dotted_path.empty()) return 0;
    std::size_t pos = 0;
    std::size_t found = std::string::npos;
    std::stringstream parts(dotted_path);
    std::string part;
    while (std::getline(parts, part, '.')) {
        const std::size_t at = source.find("\"" + part + "\"", pos);
        if (at == std::string::npos) break;
        found = at;
        pos = at + part.size() + 2;
    }
    if (found == std::string::npos) return 0;
    return static_cast<std::size_t>(std::count(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(found), '\n')) + 1;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::filesystem::filesystem_error("cannot open config", path, std::make_error_code(std::errc::no_such_file_or_directory));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto byte = std::min<std::size_t>(e.byte, text.size());
        const auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte > 0 ? byte - 1 : 0), '\n')) + 1;
        throw ConfigError(origin, std::string("invalid JSON: ") + e.what(), line);
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    return ExperimentConfig::from_json(parse_json_text(text, path.filename().string()), text);
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::string& source) {
    Reader rd(source);
    if (!j.is_object()) rd.fail("", "config must be a JSON object");
    rd.only_keys(j, "", {"schema_version", "seed", "dataset", "model", "federation", "attack", "defense", "metrics"});

    ExperimentConfig c;
    c.schema_version = rd.integer(j, "", "schema_version", kSchemaVersion);
    if (c.schema_version != kSchemaVersion) {
        rd.fail("schema_version", "unsupported version " + std::to_string(c.schema_version) + " (expected " +
                                      std::to_string(kSchemaVersion) + ")");
    }
    c.seed = rd.u64(j, "", "seed", 0);

    const json& ds = rd.object(j, "", "dataset");
    rd.only_keys(ds, "dataset", {"kind", "classes", "image", "spread", "train_per_class", "test_per_class",
                                 "holdout_per_class", "train_images", "train_labels", "test_images", "test_labels"});
    c.dataset.kind = rd.string(ds, "dataset", "kind", c.dataset.kind);
    c.dataset.classes = rd.count(ds, "dataset", "classes", c.dataset.classes);
    if (const json* img = rd.find(ds, "image")) {
        if (!img->is_array() || img->size() != 3 || !std::all_of(img->begin(), img->end(), [](const json& v) { return v.is_number_integer() && v.get<long long>() > 0; })) {
            rd.fail("dataset.image", "expected [channels, height, width]");
        }
        c.dataset.image = {(*img)[0].get<std::size_t>(), (*img)[1].get<std::size_t>(), (*img)[2].get<std::size_t>()};
    }
    c.dataset.spread = rd.number(ds, "dataset", "spread", c.dataset.spread);
    c.dataset.train_per_class = rd.count(ds, "dataset", "train_per_class", c.dataset.train_per_class);
    c.dataset.test_per_class = rd.count(ds, "dataset", "test_per_class", c.dataset.test_per_class);
    c.dataset.holdout_per_class = rd.count(ds, "dataset", "holdout_per_class", c.dataset.holdout_per_class);
    c.dataset.train_images = rd.string(ds, "dataset", "train_images", "");
    c.dataset.train_labels = rd.string(ds, "dataset", "train_labels", "");
    c.dataset.test_images = rd.string(ds, "dataset", "test_images", "");
    c.dataset.test_labels = rd.string(ds, "dataset", "test_labels", "");

    const json& md = rd.object(j, "", "model");
    rd.only_keys(md, "model", {"kind", "hidden", "channels1", "channels2"});
    c.model.kind = rd.string(md, "model", "kind", c.model.kind);
    c.model.hidden = rd.count(md, "model", "hidden", c.model.hidden);
    c.model.channels1 = rd.count(md, "model", "channels1", c.model.channels1);
    c.model.channels2 = rd.count(md, "model", "channels2", c.model.channels2);

    const json& fd = rd.object(j, "", "federation");
    rd.only_keys(fd, "federation", {"clients", "sampled", "sample_fraction", "mcr", "rounds", "alpha", "update_scale", "jobs", "training"});
    auto& f = c.federation;
    f.clients = rd.count(fd, "federation", "clients", 30);
    if (rd.find(fd, "sampled") && rd.find(fd, "sample_fraction")) {
        rd.fail("federation.sample_fraction", "give either sampled or sample_fraction, not both");
    }
    if (rd.find(fd, "sampled")) {
        f.sampled = rd.count(fd, "federation", "sampled", 1);
    } else {
        const double frac = rd.number(fd, "federation", "sample_fraction", 0.5);
        if (!(frac > 0.0 && frac <= 1.0)) rd.fail("federation.sample_fraction", "must be in (0, 1]");
        f.sampled = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(f.clients) + 0.5)));
    }
    f.mcr = rd.number(fd, "federation", "mcr", 0.0);
    f.rounds = rd.count(fd, "federation", "rounds", 40);
    f.update_scale = rd.number(fd, "federation", "update_scale", 1.0);
    f.jobs = rd.count(fd, "federation", "jobs", 1);
    f.seed = c.seed;
    if (const json* a = rd.find(fd, "alpha")) {
        if (a->is_string() && a->get<std::string>() == "iid") {
            c.alpha = data::kIid;
        } else if (a->is_number()) {
            c.alpha = a->get<double>();
        } else {
            rd.fail("federation.alpha", "expected a positive number or \"iid\"");
        }
    }
    const json& tr = rd.object(fd, "federation", "training");
    rd.only_keys(tr, "federation.training", {"lr", "batch_size", "epochs"});
    f.training.learning_rate = rd.number(tr, "federation.training", "lr", f.training.learning_rate);
    f.training.batch_size = rd.count(tr, "federation.training", "batch_size", f.training.batch_size);
    f.training.epochs = rd.count(tr, "federation.training", "epochs", f.training.epochs);

    const json& at = rd.object(j, "", "attack");
    rd.only_keys(at, "attack", {"victim", "target", "dpr", "coords", "patch_size"});
    c.attack.victim = rd.integer(at, "attack", "victim", c.attack.victim);
    c.attack.target = rd.integer(at, "attack", "target", c.attack.target);
    c.attack.dpr = rd.number(at, "attack", "dpr", c.attack.dpr);
    c.attack.patch_size = rd.count(at, "attack", "patch_size", c.attack.patch_size);
    if (const json* coords = rd.find(at, "coords")) {
        if (!coords->is_array()) rd.fail("attack.coords", "expected a list of [index, delta] pairs");
        for (const auto& e : *coords) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || e[0].get<long long>() < 0 || !e[1].is_number()) {
                rd.fail("attack.coords", "expected a list of [index, delta] pairs");
            }
            c.attack.trigger.push_back({e[0].get<std::size_t>(), e[1].get<Real>()});
        }
    }

    const json& df = rd.object(j, "", "defense");
    rd.only_keys(df, "defense", {"name", "p", "r", "tau_b", "ban_enabled", "K", "query_budget", "clean_seed_size",
                                 "distill_batch", "generator_steps", "clone_steps", "clone_lr", "generator_lr",
                                 "latent_dim", "generator_hidden", "krum_f", "krum_m"});
    auto& d = c.defense;
    d.name = rd.string(df, "defense", "name", d.name);
    d.ledger.penalty = rd.number(df, "defense", "p", d.ledger.penalty);
    d.ledger.reward = rd.number(df, "defense", "r", d.ledger.reward);
    d.ledger.ban_threshold = rd.number(df, "defense", "tau_b", d.ledger.ban_threshold);
    d.ledger.ban_enabled = rd.boolean(df, "defense", "ban_enabled", d.ledger.ban_enabled);
    d.period = rd.count(df, "defense", "K", d.period);
    d.query_budget = rd.count(df, "defense", "query_budget", d.query_budget);
    d.clean_seed_size = rd.count(df, "defense", "clean_seed_size", d.clean_seed_size);
    d.distill_batch = rd.count(df, "defense", "distill_batch", d.distill_batch);
    d.generator_steps = rd.count(df, "defense", "generator_steps", d.generator_steps);
    d.clone_steps = rd.count(df, "defense", "clone_steps", d.clone_steps);
    d.clone_lr = rd.number(df, "defense", "clone_lr", d.clone_lr);
    d.generator_lr = rd.number(df, "defense", "generator_lr", d.generator_lr);
    d.latent_dim = rd.count(df, "defense", "latent_dim", d.latent_dim);
    d.generator_hidden = rd.count(df, "defense", "generator_hidden", d.generator_hidden);
    if (rd.find(df, "krum_f")) d.krum_f = rd.count(df, "defense", "krum_f", 0);
    if (rd.find(df, "krum_m")) d.krum_m = rd.count(df, "defense", "krum_m", 0);

    const json& mt = rd.object(j, "", "metrics");
    rd.only_keys(mt, "metrics", {"lambda", "tau"});
    c.lambda = rd.number(mt, "metrics", "lambda", c.lambda);
    c.tau = rd.number(mt, "metrics", "tau", c.tau);

    c.validate(source);
    return c;
}

void ExperimentConfig::validate(const std::string& source) const {
    auto fail = [&](const std::string& field, const std::string& msg) {
        throw ConfigError(field, msg, locate_field(source, field));
    };
    const auto& ds = dataset;
    if (ds.kind != "blobs" && ds.kind != "idx") fail("dataset.kind", "expected \"blobs\" or \"idx\"");
    if (ds.classes < 2) fail("dataset.classes", "need at least 2 classes");
    if (ds.image.numel() == 0) fail("dataset.image", "dimensions must be positive");
    if (ds.kind == "blobs") {
        if (!(ds.spread >= 0.0)) fail("dataset.spread", "must be non-negative");
        if (ds.train_per_class == 0) fail("dataset.train_per_class", "must be positive");
        if (ds.test_per_class == 0) fail("dataset.test_per_class", "must be positive");
    } else {
        for (const auto& [name, value] : {std::pair{"train_images", &ds.train_images}, {"train_labels", &ds.train_labels},
                                          {"test_images", &ds.test_images}, {"test_labels", &ds.test_labels}}) {
            if (value->empty()) fail(std::string("dataset.") + name, "required for idx datasets");
        }
    }

    if (model.kind != "cnn" && model.kind != "mlp") fail("model.kind", "expected \"cnn\" or \"mlp\"");
    if (model.kind == "cnn" && (ds.image.height % 4 != 0 || ds.image.width % 4 != 0)) {
        fail("dataset.image", "cnn needs height and width divisible by 4");
    }
    if (model.hidden == 0) fail("model.hidden", "must be positive");
    if (model.channels1 == 0 || model.channels2 == 0) fail("model.channels1", "must be positive");

    const auto& f = federation;
    if (f.clients == 0) fail("federation.clients", "must be positive");
    if (f.sampled == 0) fail("federation.sampled", "must be positive");
    if (f.sampled > f.clients) fail("federation.sampled", "must not exceed federation.clients");
    if (!(f.mcr >= 0.0 && f.mcr < 1.0)) fail("federation.mcr", "must be in [0, 1), got " + nlohmann::json(f.mcr).dump());
    if (!(f.update_scale > 0.0) || !std::isfinite(f.update_scale)) fail("federation.update_scale", "must be positive");
    if (!(alpha > 0.0)) fail("federation.alpha", "must be positive or \"iid\"");
    if (!(f.training.learning_rate >= 0.0) || !std::isfinite(f.training.learning_rate)) fail("federation.training.lr", "must be non-negative");
    if (f.training.batch_size == 0) fail("federation.training.batch_size", "must be positive");
    if (f.training.epochs == 0) fail("federation.training.epochs", "must be positive");

    const auto cls = static_cast<int>(ds.classes);
    if (attack.victim < 0 || attack.victim >= cls) fail("attack.victim", "class index out of range");
    if (attack.target < 0 || attack.target >= cls) fail("attack.target", "class index out of range");
    if (attack.victim == attack.target) fail("attack.target", "must differ from attack.victim");
    if (!(attack.dpr >= 0.0 && attack.dpr <= 1.0)) fail("attack.dpr", "must be in [0, 1]");
    for (const auto& t : attack.trigger) {
        if (t.index >= ds.dim()) fail("attack.coords", "trigger index " + std::to_string(t.index) + " out of range");
    }

    static const std::set<std::string> defenses{"fedavg", "median", "multikrum", "droplet", "drop"};
    if (!defenses.contains(defense.name)) fail("defense.name", "expected one of fedavg, median, multikrum, droplet, drop");
    if (!(defense.ledger.penalty > 0.0)) fail("defense.p", "must be positive");
    if (!(defense.ledger.reward > 0.0)) fail("defense.r", "must be positive");
    if (!(defense.ledger.ban_threshold > 0.0)) fail("defense.tau_b", "must be positive");
    if (defense.period == 0) fail("defense.K", "must be positive");
    if (defense.distill_batch == 0) fail("defense.distill_batch", "must be positive");
    if (defense.latent_dim == 0) fail("defense.latent_dim", "must be positive");
    if (defense.generator_hidden == 0) fail("defense.generator_hidden", "must be positive");
    if (defense.generator_steps == 0 && defense.clone_steps == 0) fail("defense.clone_steps", "generator_steps and clone_steps cannot both be 0");
    if (defense.name == "drop") {
        if (defense.clean_seed_size == 0) fail("defense.clean_seed_size", "must be positive for drop");
        if (ds.kind == "blobs" && defense.clean_seed_size > ds.holdout_per_class * ds.classes) {
            fail("defense.clean_seed_size", "exceeds the holdout pool (dataset.holdout_per_class * classes)");
        }
        if (ds.kind == "blobs" && defense.clean_seed_size > ds.train_per_class * ds.classes / f.clients) {
            fail("defense.clean_seed_size", "must not exceed one client's dataset size");
        }
    }
    if (defense.name == "multikrum") {
        const std::size_t kf = defense.krum_f.value_or(static_cast<std::size_t>(std::floor(f.mcr * double(f.sampled) + 0.5)));
        if (f.sampled < kf + 3) fail("defense.krum_f", "multikrum needs sampled >= f + 3");
        if (defense.krum_m && (*defense.krum_m == 0 || *defense.krum_m > f.sampled)) fail("defense.krum_m", "must be in [1, sampled]");
    }
    if (!(lambda >= 0.0)) fail("metrics.lambda", "must be non-negative");
    if (!(tau >= 0.0)) fail("metrics.tau", "must be non-negative");
}

json ExperimentConfig::to_json() const {
    json trigger = json::array();
    for (const auto& t : attack.trigger) trigger.push_back({t.index, t.delta});
    json df = {{"name", defense.name},
               {"p", defense.ledger.penalty},
               {"r", defense.ledger.reward},
               {"tau_b", defense.ledger.ban_threshold},
               {"ban_enabled", defense.ledger.ban_enabled},
               {"K", defense.period},
               {"query_budget", defense.query_budget},
               {"clean_seed_size", defense.clean_seed_size},
               {"distill_batch", defense.distill_batch},
               {"generator_steps", defense.generator_steps},
               {"clone_steps", defense.clone_steps},
               {"clone_lr", defense.clone_lr},
               {"generator_lr", defense.generator_lr},
               {"latent_dim", defense.latent_dim},
               {"generator_hidden", defense.generator_hidden}};
    if (defense.krum_f) df["krum_f"] = *defense.krum_f;
    if (defense.krum_m) df["krum_m"] = *defense.krum_m;

    json ds = {{"kind", dataset.kind},
               {"classes", dataset.classes},
               {"image", {dataset.image.channels, dataset.image.height, dataset.image.width}},
               {"spread", dataset.spread},
               {"train_per_class", dataset.train_per_class},
               {"test_per_class", dataset.test_per_class},
               {"holdout_per_class", dataset.holdout_per_class}};
    if (dataset.kind == "idx") {
        ds["train_images"] = dataset.train_images;
        ds["train_labels"] = dataset.train_labels;
        ds["test_images"] = dataset.test_images;
        ds["test_labels"] = dataset.test_labels;
    }
    json at = {{"victim", attack.victim}, {"target", attack.target}, {"dpr", attack.dpr}, {"patch_size", attack.patch_size}};
    if (!attack.trigger.empty()) at["coords"] = trigger;

    return {{"schema_version", schema_version},
            {"seed", seed},
            {"dataset", ds},
            {"model", {{"kind", model.kind}, {"hidden", model.hidden}, {"channels1", model.channels1}, {"channels2", model.channels2}}},
            {"federation",
             {{"clients", federation.clients},
              {"sampled", federation.sampled},
              {"mcr", federation.mcr},
              {"rounds", federation.rounds},
              {"alpha", std::isinf(alpha) ? json("iid") : json(alpha)},
              {"update_scale", federation.update_scale},
              {"jobs", federation.jobs},
              {"training",
               {{"lr", federation.training.learning_rate},
                {"batch_size", federation.training.batch_size},
                {"epochs", federation.training.epochs}}}}},
            {"attack", at},
            {"defense", df},
            {"metrics", {{"lambda", lambda}, {"tau", tau}}}};
}

data::PoisonSpec ExperimentConfig::poison_spec() const {
    data::PoisonSpec spec;
    spec.victim = attack.victim;
    spec.target = attack.target;
    spec.dpr = attack.dpr;
    spec.trigger = attack.trigger.empty()
                       ? data::corner_patch_trigger(dataset.image.channels, dataset.image.height, dataset.image.width,
                                                    attack.patch_size, Real(1))
                       : attack.trigger;
    return spec;
}

json comparable_part(const ExperimentConfig& cfg) {
    json j = cfg.to_json();
    j.erase("defense");
    // Worker count does not change results.
    j["federation"].erase("jobs");
    return j;
}

}  // namespace fedlab::exp
