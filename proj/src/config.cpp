#include "wbrake/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/sha.h>

#include "wbrake/error.hpp"

namespace wbrake {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) throw ConfigError("");
        }
        out = it->get<T>();
    } catch (const std::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

RunConfig parse_config(const json& doc) {
    RunConfig c;
    reject_unknown(doc, "config", {"grid", "potential", "kernel", "solver", "experiment", "seed"});
    if (doc.contains("seed")) {
        const json& seed = doc["seed"];
        require(seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<std::int64_t>() >= 0),
                "seed: expected a non-negative integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }

    if (doc.contains("grid")) {
        const json& g = doc["grid"];
        reject_unknown(g, "grid", {"x_min", "x_max", "n_cells", "rho"});
        read(g, "grid", "x_min", c.grid.x_min);
        read(g, "grid", "x_max", c.grid.x_max);
        read(g, "grid", "n_cells", c.grid.n_cells);
        read(g, "grid", "rho", c.grid.rho);
    }
    require(c.grid.x_max > 0.0 && c.grid.x_min == -c.grid.x_max, "grid: need x_min = -x_max < 0");
    require(c.grid.n_cells >= 4, "grid: n_cells must be >= 4");
    require(c.grid.rho > 0.0, "grid: rho must be positive");
    require(c.grid.rho * (c.grid.x_max - c.grid.x_min) > 1.0, "grid: rho * width must exceed 1");

    double alpha_alias = std::nan("");
    if (doc.contains("potential")) {
        const json& p = doc["potential"];
        reject_unknown(p, "potential", {"a_plus", "a_minus", "r_tilde", "w_scale", "alpha"});
        read(p, "potential", "a_plus", c.potential.a_plus);
        read(p, "potential", "r_tilde", c.potential.r_tilde);
        read(p, "potential", "w_scale", c.potential.w_scale);
        if (p.contains("a_minus")) {
            double a_minus = 0.0;
            read(p, "potential", "a_minus", a_minus);
            require(a_minus == -c.potential.a_plus, "potential: asymmetric wells (a_minus != -a_plus) are not supported");
        }
        if (p.contains("alpha")) read(p, "potential", "alpha", alpha_alias);
    }
    require(c.potential.r_tilde > 0.0, "potential: r_tilde must be positive");
    require(c.potential.a_plus > c.potential.r_tilde, "potential: plateaus overlap (need a_plus > r_tilde)");
    require(c.potential.w_scale > 0.0, "potential: w_scale must be positive");

    if (doc.contains("kernel")) {
        const json& k = doc["kernel"];
        reject_unknown(k, "kernel", {"alpha", "cache"});
        read(k, "kernel", "alpha", c.kernel.alpha);
        read(k, "kernel", "cache", c.kernel.cache);
        if (!std::isnan(alpha_alias) && k.contains("alpha")) {
            require(alpha_alias == c.kernel.alpha, "potential.alpha and kernel.alpha disagree");
        }
    }
    if (!std::isnan(alpha_alias)) c.kernel.alpha = alpha_alias;
    require(c.kernel.alpha > 0.0 && c.kernel.alpha < 1.0, "kernel: alpha must lie in (0, 1)");

    if (doc.contains("solver")) {
        const json& s = doc["solver"];
        reject_unknown(s, "solver", {"q_prime", "outer_max_iter", "inner_max_iter", "tol_energy", "tol_fixed_point",
                                     "n_t", "n_competitors", "central_start", "extrapolate"});
        read(s, "solver", "q_prime", c.solver.q_prime);
        read(s, "solver", "outer_max_iter", c.solver.outer_max_iter);
        read(s, "solver", "inner_max_iter", c.solver.inner_max_iter);
        read(s, "solver", "tol_energy", c.solver.tol_energy);
        read(s, "solver", "tol_fixed_point", c.solver.tol_fixed_point);
        read(s, "solver", "n_t", c.solver.n_t);
        read(s, "solver", "n_competitors", c.solver.n_competitors);
        read(s, "solver", "central_start", c.solver.central_start);
        read(s, "solver", "extrapolate", c.solver.extrapolate);
    }
    require(c.solver.outer_max_iter >= 1 && c.solver.inner_max_iter >= 1, "solver: iteration limits must be >= 1");
    require(c.solver.tol_energy > 0.0 && c.solver.tol_fixed_point > 0.0, "solver: tolerances must be positive");
    require(c.solver.n_t >= 2, "solver: n_t must be >= 2");
    require(c.solver.n_competitors >= 0, "solver: n_competitors must be >= 0");
    require(c.solver.q_prime >= 0.0, "solver: q_prime must be >= 0");

    if (doc.contains("experiment")) {
        const json& e = doc["experiment"];
        reject_unknown(e, "experiment", {"T", "T_list", "q", "output_dir", "window", "direct_L", "direct_n_t",
                                         "direct_penalty", "delta_samples", "svg"});
        read(e, "experiment", "T", c.experiment.T);
        if (e.contains("T_list")) {
            require(e["T_list"].is_array(), "experiment.T_list: expected an array");
            c.experiment.T_list.clear();
            for (const auto& v : e["T_list"]) {
                require(v.is_number(), "experiment.T_list: expected numbers");
                c.experiment.T_list.push_back(v.get<double>());
            }
        }
        read(e, "experiment", "q", c.experiment.q);
        read(e, "experiment", "output_dir", c.experiment.output_dir);
        read(e, "experiment", "window", c.experiment.window);
        read(e, "experiment", "direct_L", c.experiment.direct_L);
        read(e, "experiment", "direct_n_t", c.experiment.direct_n_t);
        read(e, "experiment", "direct_penalty", c.experiment.direct_penalty);
        read(e, "experiment", "delta_samples", c.experiment.delta_samples);
        read(e, "experiment", "svg", c.experiment.svg);
    }
    const double r_rho = 0.5 / c.grid.rho;
    const double q0 = c.potential.a_plus - c.potential.r_tilde + r_rho;
    require(c.experiment.q > 0.0 && c.experiment.q < q0, "experiment: q must lie in (0, q0)");
    require(c.solver.q_prime < c.experiment.q, "solver: q_prime must be below q");
    require(!c.experiment.T_list.empty(), "experiment: T_list is empty");
    for (std::size_t i = 1; i < c.experiment.T_list.size(); ++i) {
        require(c.experiment.T_list[i] > c.experiment.T_list[i - 1], "experiment: T_list must increase");
    }
    require(c.experiment.window > 0.0, "experiment: window must be positive");
    require(c.experiment.direct_L >= 2.0, "experiment: direct_L must be >= 2");
    require(c.experiment.direct_n_t >= 2, "experiment: direct_n_t must be >= 2");
    require(c.experiment.direct_penalty > 0.0, "experiment: direct_penalty must be positive");
    require(c.experiment.delta_samples >= 1, "experiment: delta_samples must be >= 1");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    return json{
        {"grid", {{"x_min", c.grid.x_min}, {"x_max", c.grid.x_max}, {"n_cells", c.grid.n_cells}, {"rho", c.grid.rho}}},
        {"potential", {{"a_plus", c.potential.a_plus}, {"r_tilde", c.potential.r_tilde}, {"w_scale", c.potential.w_scale}}},
        {"kernel", {{"alpha", c.kernel.alpha}, {"cache", c.kernel.cache}}},
        {"solver",
         {{"q_prime", c.solver.q_prime},
          {"outer_max_iter", c.solver.outer_max_iter},
          {"inner_max_iter", c.solver.inner_max_iter},
          {"tol_energy", c.solver.tol_energy},
          {"tol_fixed_point", c.solver.tol_fixed_point},
          {"n_t", c.solver.n_t},
          {"n_competitors", c.solver.n_competitors},
          {"central_start", c.solver.central_start},
          {"extrapolate", c.solver.extrapolate}}},
        {"experiment",
         {{"T", c.experiment.T},
          {"T_list", c.experiment.T_list},
          {"q", c.experiment.q},
          {"output_dir", c.experiment.output_dir},
          {"window", c.experiment.window},
          {"direct_L", c.experiment.direct_L},
          {"direct_n_t", c.experiment.direct_n_t},
          {"direct_penalty", c.experiment.direct_penalty},
          {"delta_samples", c.experiment.delta_samples},
          {"svg", c.experiment.svg}}},
        {"seed", c.seed},
    };
}

std::string sha1_hex(const std::string& bytes) {
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

std::string content_hash(const json& doc) {
    const std::string body = doc.dump();
    std::string blob = "blob " + std::to_string(body.size());
    blob.push_back('\0');
    return sha1_hex(blob + body);
}

}  // namespace wbrake
