#include "easbo_cli/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace easbo::cli {

namespace pt = boost::property_tree;

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::string s = text;
    for (char& c : s)
        if (c == ',') c = ' ';
    std::istringstream in(s);
    std::vector<std::uint64_t> seeds;
    std::string tok;
    while (in >> tok) {
        try {
            const auto dash = tok.find('-');
            if (dash != std::string::npos && dash > 0) {
                const auto lo = std::stoull(tok.substr(0, dash));
                const auto hi = std::stoull(tok.substr(dash + 1));
                if (hi < lo) throw ConfigError("seed range '" + tok + "' is descending");
                for (auto v = lo; v <= hi; ++v) seeds.push_back(v);
            } else {
                std::size_t used = 0;
                seeds.push_back(std::stoull(tok, &used));
                if (used != tok.size()) throw ConfigError("bad seed '" + tok + "'");
            }
        } catch (const std::logic_error&) {
            throw ConfigError("bad seed list entry '" + tok + "'");
        }
    }
    return seeds;
}

namespace {

// Flattened "section.key" -> value view with usage tracking.
class Entries {
public:
    explicit Entries(const pt::ptree& tree) {
        for (const auto& [section, body] : tree) {
            if (body.empty()) throw ConfigError("key '" + section + "' must be inside a [section]");
            for (const auto& [key, value] : body) values_[section + "." + key] = value.get_value<std::string>();
        }
    }

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    double number(const std::string& key, double fallback) {
        auto v = raw(key);
        if (!v) return fallback;
        try {
            // Accepts a plain number or a ratio "a/b".
            const auto slash = v->find('/');
            auto parse = [&](const std::string& s) {
                std::size_t used = 0;
                const double d = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(key);
                return d;
            };
            if (slash == std::string::npos) return parse(*v);
            return parse(v->substr(0, slash)) / parse(v->substr(slash + 1));
        } catch (const std::logic_error&) {
            throw ConfigError(key + ": expected a number, got '" + *v + "'");
        }
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            const long long d = std::stoll(*v, &used);
            if (used != v->size() || d < 0) throw std::invalid_argument(key);
            return static_cast<std::size_t>(d);
        } catch (const std::logic_error&) {
            throw ConfigError(key + ": expected a non-negative integer, got '" + *v + "'");
        }
    }

    Vec3 vec3(const std::string& key, const Vec3& fallback) {
        auto v = raw(key);
        if (!v) return fallback;
        std::istringstream in(*v);
        Vec3 out;
        std::string extra;
        if (!(in >> out.x() >> out.y() >> out.z()) || (in >> extra)) {
            throw ConfigError(key + ": expected three numbers, got '" + *v + "'");
        }
        return out;
    }

    template <typename Enum>
    Enum choice(const std::string& key, Enum fallback, const std::map<std::string, Enum>& options) {
        auto v = raw(key);
        if (!v) return fallback;
        auto it = options.find(*v);
        if (it == options.end()) {
            std::string allowed;
            for (const auto& [name, _] : options) allowed += (allowed.empty() ? "" : ", ") + name;
            throw ConfigError(key + ": '" + *v + "' is not one of " + allowed);
        }
        return it->second;
    }

    void reject_unknown() const {
        for (const auto& [key, _] : values_) {
            if (!used_.count(key)) throw ConfigError("unknown configuration key '" + key + "'");
        }
    }

    /// Canonical "key=value" listing of the given sections (all when empty).
    std::string canonical(const std::set<std::string>& sections = {}) const {
        std::string out;
        for (const auto& [key, value] : values_) {
            if (!sections.empty() && !sections.count(key.substr(0, key.find('.')))) continue;
            out += key + "=" + value + "\n";
        }
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    Entries in(tree);
    ExperimentConfig c;

    auto& g = c.geometry;
    g.source = in.choice("geometry.kind", g.source,
                         {{"ellipsoid", GeometrySource::ellipsoid},
                          {"icosphere", GeometrySource::icosphere},
                          {"file", GeometrySource::file}});
    g.radii = in.vec3("geometry.radii", g.radii);
    g.frequency = static_cast<int>(in.count("geometry.frequency", static_cast<std::size_t>(g.frequency)));
    g.fiber_rule = in.choice("geometry.fiber_rule", g.fiber_rule,
                             {{"azimuthal", FiberRule::azimuthal}, {"fixed", FiberRule::fixed_direction}});
    g.fiber_direction = in.vec3("geometry.fiber_direction", g.fiber_direction);
    if (auto v = in.raw("geometry.mesh")) g.mesh = resolve(base_dir, *v);
    if (auto v = in.raw("geometry.fibers")) g.fibers = resolve(base_dir, *v);
    if (auto v = in.raw("geometry.low_mesh")) g.low_mesh = resolve(base_dir, *v);
    if (auto v = in.raw("geometry.low_fibers")) g.low_fibers = resolve(base_dir, *v);
    g.low_coarsen_factor = in.number("geometry.low_coarsen_factor", g.low_coarsen_factor);

    c.v_long = in.number("eikonal.v_long", c.v_long);
    c.v_trans = in.number("eikonal.v_trans", c.v_trans);
    c.eikonal.tolerance = in.number("eikonal.tolerance", c.eikonal.tolerance);
    c.eikonal.max_updates_per_node = in.count("eikonal.max_updates_per_node", c.eikonal.max_updates_per_node);
    c.eikonal.source_ball_edges = in.number("eikonal.source_ball_edges", c.eikonal.source_ball_edges);

    c.conductivity.sigma_long = in.number("ecg.sigma_long", c.conductivity.sigma_long);
    c.conductivity.sigma_trans = in.number("ecg.sigma_trans", c.conductivity.sigma_trans);
    c.action_potential.v_rest = in.number("ecg.v_rest", c.action_potential.v_rest);
    c.action_potential.v_plateau = in.number("ecg.v_plateau", c.action_potential.v_plateau);
    c.action_potential.width = in.number("ecg.upstroke_width", c.action_potential.width);
    c.dt = in.number("ecg.dt", c.dt);
    c.duration_factor = in.number("ecg.duration_factor", c.duration_factor);
    c.electrode_scale = in.number("ecg.electrode_scale", c.electrode_scale);

    c.smoothness = in.number("kernel.nu", c.smoothness);
    c.n_eig = in.count("kernel.n_eig", c.n_eig);

    auto& bo = c.bo;
    bo.n_initial = in.count("bo.n_initial", bo.n_initial);
    bo.n_high = in.count("bo.n_high", bo.n_high);
    bo.n_low = in.count("bo.n_low", bo.n_low);
    bo.max_acquisitions = in.count("bo.max_acquisitions", bo.max_acquisitions);
    bo.beta = in.number("bo.beta", bo.beta);
    bo.lf_cost_ratio = in.number("bo.lf_cost_ratio", bo.lf_cost_ratio);
    bo.fit_restarts = static_cast<int>(in.count("bo.fit_restarts", static_cast<std::size_t>(bo.fit_restarts)));
    bo.repeat_stop = in.choice("bo.repeat_stop", bo.repeat_stop,
                               {{"when_truth_unknown", RepeatStop::when_truth_unknown},
                                {"always", RepeatStop::always},
                                {"never", RepeatStop::never}});
    bo.smoothness = c.smoothness;
    c.convergence = in.choice("bo.convergence", c.convergence,
                              {{"geodesic", ConvergenceMode::geodesic},
                               {"exact", ConvergenceMode::exact},
                               {"none", ConvergenceMode::none}});
    c.tolerance_fraction = in.number("bo.tolerance_fraction", c.tolerance_fraction);

    if (auto v = in.raw("truth.node")) c.truth_node = in.count("truth.node", 0);
    if (in.raw("truth.point")) c.truth_point = in.vec3("truth.point", Vec3::Zero());

    c.output_dir = resolve(base_dir, in.raw("output.dir").value_or("out"));
    c.benchmark_seeds = parse_seed_list(in.raw("benchmark.seeds").value_or("0-19"));
    c.loss_map_seeds = parse_seed_list(in.raw("loss_map.seeds").value_or("0-4"));

    in.reject_unknown();

    // Validation
    if (g.source == GeometrySource::file && g.mesh.empty()) throw ConfigError("geometry.kind = file needs geometry.mesh");
    if (g.source != GeometrySource::file && (g.frequency < 1)) throw ConfigError("geometry.frequency must be >= 1");
    if (g.source != GeometrySource::file && !(g.radii.minCoeff() > 0)) throw ConfigError("geometry.radii must be positive");
    if (!(g.low_coarsen_factor >= 1.0)) throw ConfigError("geometry.low_coarsen_factor must be >= 1");
    for (const auto* p : {&g.mesh}) {
        if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("mesh file not found: " + p->string());
    }
    for (const auto* p : {&g.fibers, &g.low_mesh, &g.low_fibers}) {
        if (*p && !std::filesystem::exists(**p)) throw ConfigError("file not found: " + (*p)->string());
    }
    if (!(c.v_trans > 0) || !(c.v_long >= c.v_trans)) throw ConfigError("eikonal speeds need v_long >= v_trans > 0");
    if (!(c.eikonal.tolerance > 0)) throw ConfigError("eikonal.tolerance must be positive");
    if (!(c.eikonal.source_ball_edges >= 0)) throw ConfigError("eikonal.source_ball_edges must be >= 0");
    if (!(c.conductivity.sigma_long > 0) || !(c.conductivity.sigma_trans > 0)) {
        throw ConfigError("conductivities must be positive");
    }
    if (!(c.action_potential.width > 0)) throw ConfigError("ecg.upstroke_width must be positive");
    if (!(c.dt > 0)) throw ConfigError("ecg.dt must be positive");
    if (!(c.duration_factor >= 1.0)) throw ConfigError("ecg.duration_factor must be >= 1");
    if (!(c.electrode_scale > 0)) throw ConfigError("ecg.electrode_scale must be positive");
    if (!(c.smoothness > 0)) throw ConfigError("kernel.nu must be positive");
    if (c.n_eig < 1) throw ConfigError("kernel.n_eig must be >= 1");
    if (!(c.tolerance_fraction >= 0)) throw ConfigError("bo.tolerance_fraction must be >= 0");
    if (c.truth_node && c.truth_point) throw ConfigError("give either truth.node or truth.point, not both");
    try {
        bo.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("bo: ") + e.what());
    }
    if (c.benchmark_seeds.empty()) throw ConfigError("benchmark.seeds is empty");

    c.hash = fnv1a_hex(in.canonical());
    c.preprocess_hash = fnv1a_hex(in.canonical({"geometry", "eikonal", "ecg", "kernel"}));
    c.truth_hash = fnv1a_hex(in.canonical({"geometry", "eikonal", "ecg", "kernel", "truth"}));
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    auto c = parse_config(ss.str(), base);
    c.path = path;
    return c;
}

}  // namespace easbo::cli
