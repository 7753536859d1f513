#include "feel/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "feel/error.hpp"

namespace feel::harness {

using nlohmann::json;

namespace {

/// Reads one JSON object, remembering which keys were consumed so the rest
/// can be rejected.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(field(key), std::string("wrong type: ") + e.what());
        }
    }

    template <typename T>
    void read(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(field(key), std::string("wrong type: ") + e.what());
        }
    }

    [[nodiscard]] const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
        }
    }

    [[nodiscard]] std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ConfigError(field, message);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

ExperimentConfig default_config() {
    ExperimentConfig c;
    const double distances[] = {0.3, 0.43, 0.57, 0.7};
    const std::uint64_t sizes[] = {100, 200, 300, 400};
    for (int m = 0; m < 4; ++m) {
        DeviceConfig d;
        d.dataset_size = sizes[m];
        d.distance_km = distances[m];
        d.transmit_power_dbm = 24.0;
        c.devices.push_back(d);
    }
    c.task.type = "quadratic";
    c.task.dim = 10;
    c.task.heterogeneity = 0.1;
    c.task.seed = 2024;
    c.task.init_scale = 3.0;
    c.schedule = {1.5, 30.0};
    c.run.max_rounds = 50'000;
    c.run.seeds.clear();
    for (std::uint64_t s = 0; s < 20; ++s) c.run.seeds.push_back(s);
    return c;
}

json to_json(const ExperimentConfig& c) {
    json devices = json::array();
    for (const auto& d : c.devices) {
        json jd = {{"dataset_size", d.dataset_size}, {"transmit_power_dbm", d.transmit_power_dbm}};
        if (d.distance_km) jd["distance_km"] = *d.distance_km;
        if (d.channel_variance) jd["channel_variance"] = *d.channel_variance;
        devices.push_back(std::move(jd));
    }
    return json{
        {"devices", devices},
        {"channel",
         {{"bandwidth_hz", c.channel.bandwidth_hz},
          {"noise_density_dbm_per_hz", c.channel.noise_density_dbm_per_hz},
          {"bits_per_param", c.channel.bits_per_param},
          {"num_params", c.channel.num_params},
          {"gain_threshold", c.channel.gain_threshold},
          {"broadcast_time_s", c.channel.broadcast_time_s}}},
        {"task",
         {{"type", c.task.type},
          {"dim", c.task.dim},
          {"heterogeneity", c.task.heterogeneity},
          {"label_skew", c.task.label_skew},
          {"l2_reg", c.task.l2_reg},
          {"batch_size", c.task.batch_size},
          {"seed", c.task.seed},
          {"init_scale", c.task.init_scale}}},
        {"schedule", {{"chi", c.schedule.chi}, {"nu", c.schedule.nu}}},
        {"run",
         {{"epsilon", c.run.epsilon},
          {"max_rounds", c.run.max_rounds},
          {"policies", c.run.policies},
          {"seeds", c.run.seeds},
          {"output_dir", c.run.output_dir},
          {"ica_beta", c.run.ica_beta},
          {"checkpoints_s", c.run.checkpoints_s}}},
    };
}

ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    ObjectReader root(j, "");

    if (const json* devices = root.child("devices")) {
        require(devices->is_array(), "devices", "expected an array");
        for (std::size_t m = 0; m < devices->size(); ++m) {
            DeviceConfig d;
            ObjectReader r((*devices)[m], "devices[" + std::to_string(m) + "]");
            r.read("dataset_size", d.dataset_size);
            r.read("distance_km", d.distance_km);
            r.read("channel_variance", d.channel_variance);
            r.read("transmit_power_dbm", d.transmit_power_dbm);
            r.finish();
            c.devices.push_back(d);
        }
    }
    if (const json* ch = root.child("channel")) {
        ObjectReader r(*ch, "channel");
        r.read("bandwidth_hz", c.channel.bandwidth_hz);
        r.read("noise_density_dbm_per_hz", c.channel.noise_density_dbm_per_hz);
        r.read("bits_per_param", c.channel.bits_per_param);
        r.read("num_params", c.channel.num_params);
        r.read("gain_threshold", c.channel.gain_threshold);
        r.read("broadcast_time_s", c.channel.broadcast_time_s);
        r.finish();
    }
    if (const json* t = root.child("task")) {
        ObjectReader r(*t, "task");
        r.read("type", c.task.type);
        r.read("dim", c.task.dim);
        r.read("heterogeneity", c.task.heterogeneity);
        r.read("label_skew", c.task.label_skew);
        r.read("l2_reg", c.task.l2_reg);
        r.read("batch_size", c.task.batch_size);
        r.read("seed", c.task.seed);
        r.read("init_scale", c.task.init_scale);
        r.finish();
    }
    if (const json* s = root.child("schedule")) {
        ObjectReader r(*s, "schedule");
        r.read("chi", c.schedule.chi);
        r.read("nu", c.schedule.nu);
        r.finish();
    }
    if (const json* run = root.child("run")) {
        ObjectReader r(*run, "run");
        r.read("epsilon", c.run.epsilon);
        r.read("max_rounds", c.run.max_rounds);
        r.read("policies", c.run.policies);
        r.read("seeds", c.run.seeds);
        r.read("output_dir", c.run.output_dir);
        r.read("ica_beta", c.run.ica_beta);
        r.read("checkpoints_s", c.run.checkpoints_s);
        r.finish();
    }
    root.finish();
    validate(c);
    return c;
}

void validate(const ExperimentConfig& c) {
    require(!c.devices.empty(), "devices", "at least one device is required");
    for (std::size_t m = 0; m < c.devices.size(); ++m) {
        const auto& d = c.devices[m];
        const std::string p = "devices[" + std::to_string(m) + "]";
        require(d.dataset_size >= 1, p + ".dataset_size", "must be >= 1");
        require(d.distance_km.has_value() != d.channel_variance.has_value(), p,
                "exactly one of distance_km and channel_variance must be set");
        if (d.distance_km) require(positive(*d.distance_km), p + ".distance_km", "must be > 0");
        if (d.channel_variance) {
            require(positive(*d.channel_variance), p + ".channel_variance", "must be > 0");
        }
        require(std::isfinite(d.transmit_power_dbm), p + ".transmit_power_dbm", "must be finite");
    }

    require(positive(c.channel.bandwidth_hz), "channel.bandwidth_hz", "must be > 0");
    require(std::isfinite(c.channel.noise_density_dbm_per_hz), "channel.noise_density_dbm_per_hz",
            "must be finite");
    require(c.channel.bits_per_param >= 1, "channel.bits_per_param", "must be >= 1");
    require(c.channel.num_params >= 1, "channel.num_params", "must be >= 1");
    require(std::isfinite(c.channel.gain_threshold) && c.channel.gain_threshold >= 0.0,
            "channel.gain_threshold", "must be >= 0");
    require(std::isfinite(c.channel.broadcast_time_s) && c.channel.broadcast_time_s >= 0.0,
            "channel.broadcast_time_s", "must be >= 0");

    require(c.task.type == "quadratic" || c.task.type == "logistic", "task.type",
            "must be \"quadratic\" or \"logistic\"");
    require(c.task.dim >= 1, "task.dim", "must be >= 1");
    require(std::isfinite(c.task.init_scale) && c.task.init_scale >= 0.0, "task.init_scale",
            "must be >= 0");
    require(std::isfinite(c.task.heterogeneity) && c.task.heterogeneity >= 0.0, "task.heterogeneity",
            "must be >= 0");
    require(c.task.label_skew >= 0.0 && c.task.label_skew <= 1.0, "task.label_skew",
            "must be in [0, 1]");
    require(positive(c.task.l2_reg), "task.l2_reg", "must be > 0");
    for (std::size_t m = 0; m < c.devices.size(); ++m) {
        require(c.task.batch_size <= c.devices[m].dataset_size, "task.batch_size",
                "exceeds dataset_size of devices[" + std::to_string(m) + "]");
    }

    require(positive(c.schedule.chi), "schedule.chi", "must be > 0");
    require(std::isfinite(c.schedule.nu) && c.schedule.nu > 0.0, "schedule.nu",
            "must be > 0 (eta at round 0 is chi / nu)");

    require(positive(c.run.epsilon), "run.epsilon", "must be > 0");
    require(c.run.max_rounds >= 1, "run.max_rounds", "must be >= 1");
    require(!c.run.policies.empty(), "run.policies", "at least one policy is required");
    for (std::size_t i = 0; i < c.run.policies.size(); ++i) {
        try {
            (void)scheduler::parse_policy(c.run.policies[i]);
        } catch (const InvalidArgument& e) {
            throw ConfigError("run.policies[" + std::to_string(i) + "]", e.what());
        }
    }
    require(!c.run.seeds.empty(), "run.seeds", "at least one seed is required");
    require(std::isfinite(c.run.ica_beta) && c.run.ica_beta >= 0.0, "run.ica_beta", "must be >= 0");
    for (double t : c.run.checkpoints_s) {
        require(std::isfinite(t) && t >= 0.0, "run.checkpoints_s", "times must be >= 0");
    }
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("parse error: ") + e.what());
    }
    return from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

std::vector<channel::DeviceProfile> build_devices(const ExperimentConfig& c) {
    std::vector<channel::DeviceProfile> out;
    for (std::size_t m = 0; m < c.devices.size(); ++m) {
        const auto& d = c.devices[m];
        channel::DeviceProfile p;
        p.dataset_size = d.dataset_size;
        p.distance_km = d.distance_km;
        p.channel_variance =
            d.distance_km ? channel::path_loss_variance(*d.distance_km) : *d.channel_variance;
        p.transmit_power_w = channel::dbm_to_watts(d.transmit_power_dbm);
        p.stream_key = m;
        out.push_back(p);
    }
    return out;
}

channel::CommParams build_comm(const ExperimentConfig& c) {
    channel::CommParams comm;
    comm.bandwidth_hz = c.channel.bandwidth_hz;
    comm.bits_per_param = c.channel.bits_per_param;
    comm.num_params = c.channel.num_params;
    comm.noise_power_w = channel::noise_power_w(c.channel.noise_density_dbm_per_hz, c.channel.bandwidth_hz);
    comm.gain_threshold = c.channel.gain_threshold;
    comm.broadcast_time_s = c.channel.broadcast_time_s;
    return comm;
}

std::shared_ptr<const learning::LearningTask> build_task(const ExperimentConfig& c) {
    std::vector<std::size_t> sizes;
    for (const auto& d : c.devices) sizes.push_back(static_cast<std::size_t>(d.dataset_size));
    Rng rng = make_stream(c.task.seed, Stream::task);
    if (c.task.type == "quadratic") {
        return learning::make_quadratic_task(c.task.dim, sizes, c.task.heterogeneity, rng);
    }
    return learning::make_logistic_task(c.task.dim, sizes, c.task.label_skew, c.task.l2_reg, rng);
}

learning::Vector initial_model(const ExperimentConfig& c, std::size_t dim) {
    learning::Vector w = learning::Vector::Zero(static_cast<Eigen::Index>(dim));
    if (c.task.init_scale == 0.0) return w;
    // Separate key from the task data so changing init_scale leaves the data alone.
    Rng rng = make_stream(c.task.seed, Stream::task, 1);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = c.task.init_scale * standard_normal(rng);
    return w;
}

std::shared_ptr<const simulator::SimulationSetup> build_setup(const ExperimentConfig& c) {
    validate(c);
    auto setup = std::make_shared<simulator::SimulationSetup>();
    setup->devices = build_devices(c);
    setup->comm = build_comm(c);
    setup->task = build_task(c);
    setup->initial_model = initial_model(c, setup->task->dimension());
    setup->schedule = {c.schedule.chi, c.schedule.nu};
    setup->epsilon = c.run.epsilon;
    setup->max_rounds = c.run.max_rounds;
    setup->batch_size = c.task.batch_size;
    setup->ica_beta = c.run.ica_beta;
    try {
        setup->validate();
    } catch (const AssumptionViolation& e) {
        throw ConfigError("schedule.chi", e.what());
    }
    return setup;
}

std::vector<scheduler::Policy> parse_policy_list(const std::string& csv) {
    std::vector<scheduler::Policy> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(scheduler::parse_policy(item));
        } catch (const InvalidArgument& e) {
            throw ConfigError("--policies", e.what());
        }
    }
    if (out.empty()) throw ConfigError("--policies", "no policy given");
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    try {
        if (auto pos = text.find(".."); pos != std::string::npos) {
            const std::uint64_t lo = std::stoull(text.substr(0, pos));
            const std::uint64_t hi = std::stoull(text.substr(pos + 2));
            if (hi < lo) throw ConfigError("--seeds", "empty range " + text);
            for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) out.push_back(std::stoull(item));
            }
        }
    } catch (const std::logic_error&) {
        throw ConfigError("--seeds", "cannot parse '" + text + "'");
    }
    if (out.empty()) throw ConfigError("--seeds", "no seed given");
    return out;
}

}  // namespace feel::harness
