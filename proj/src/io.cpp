#include "spinsq/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spinsq {

namespace fs = std::filesystem;

std::string format_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << text;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trajectory_csv(const Trajectory& traj) {
    std::string s = "t,xi2,xi2_db,phi_opt,jx,jy,jz,photon\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const auto& r = traj.records[i];
        const auto& m = traj.moments[i];
        s += format_short(traj.times[i]) + ',' + format_short(r.xi2) + ',' + format_short(r.xi2_db) + ',' +
             format_short(r.phi_opt) + ',' + format_short(m.jx) + ',' + format_short(m.jy) + ',' +
             format_short(m.jz) + ',' + format_short(m.photon) + '\n';
    }
    return s;
}

std::string sweep_csv(const SweepResult& sweep) {
    std::string s = "zeta,min_xi2,min_xi2_db,t_min\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        s += format_short(sweep.zeta_grid[i]) + ',' + format_short(sweep.min_xi2[i]) + ',' +
             format_short(xi2_to_db(sweep.min_xi2[i])) + ',' + format_short(sweep.t_min[i]) + '\n';
    }
    return s;
}

std::string control_csv(const ControlSignal& control) {
    std::string s = "t,zeta\n";
    for (std::size_t j = 0; j < control.values.size(); ++j) {
        s += format_exact(control.t0 + static_cast<double>(j) * control.dt_ctrl) + ',' +
             format_exact(control.values[j]) + '\n';
    }
    return s;
}

std::string training_log_csv(const TrainingLog& log) {
    std::string s = "episode,total_reward,S,S_full,min_xi2_db,sigma,critic_loss,failed\n";
    for (const auto& e : log.episodes) {
        s += std::to_string(e.episode) + ',' + format_short(e.total_reward) + ',' + format_short(e.S) + ',' +
             format_short(e.S_full) + ',' + format_short(xi2_to_db(e.min_xi2)) + ',' + format_short(e.sigma) + ',' +
             format_short(e.critic_loss) + ',' + (e.failed ? "1" : "0") + '\n';
    }
    return s;
}

std::string stitch_csv(const CombinedResult& result) {
    std::string s = "zeta_c,S,S_full,t_min\n";
    for (std::size_t i = 0; i < result.zeta_grid.size(); ++i) {
        s += format_short(result.zeta_grid[i]) + ',' + format_short(result.S_by_zeta[i]) + ',' +
             format_short(result.S_full_by_zeta[i]) + ',' + format_short(result.t_min_by_zeta[i]) + '\n';
    }
    return s;
}

std::string fidelity_csv(const FidelitySeries& series) {
    std::string s = "t,fidelity,fidelity_bare\n";
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        s += format_short(series.times[i]) + ',' + format_short(series.fidelity[i]) + ',' +
             format_short(series.fidelity_bare[i]) + '\n';
    }
    return s;
}

ControlSignal parse_control_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "t,zeta") {
        throw std::invalid_argument("control CSV: expected header 't,zeta'");
    }
    std::vector<double> t, z;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("control CSV line " + std::to_string(lineno) + ": expected two columns");
        }
        try {
            std::size_t used = 0;
            t.push_back(std::stod(line.substr(0, comma)));
            const std::string rest = line.substr(comma + 1);
            z.push_back(std::stod(rest, &used));
            if (used != rest.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::invalid_argument("control CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    if (t.empty()) throw std::invalid_argument("control CSV: no rows");
    ControlSignal c;
    c.t0 = t.front();
    c.dt_ctrl = t.size() > 1 ? t[1] - t[0] : 1.0;
    for (std::size_t j = 1; j < t.size(); ++j) {
        const double expect = c.t0 + static_cast<double>(j) * c.dt_ctrl;
        if (std::abs(t[j] - expect) > 1e-9 * std::max(1.0, std::abs(expect))) {
            throw std::invalid_argument("control CSV: rows are not on a uniform grid");
        }
    }
    c.values = std::move(z);
    c.validate();
    return c;
}

}  // namespace spinsq
