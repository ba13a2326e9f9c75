#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/SparseExtra>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "problems.hpp"
#include "sampling.hpp"
#include "smoothness.hpp"
#include "solver.hpp"

namespace blockfb::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void atomic_write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

/// Full-precision decimal rendering (round-trips through strtod).
inline std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return ss.str();
}

inline std::vector<std::vector<double>> parse_csv(const std::string& text, const std::string& origin) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw validation_error(origin + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw validation_error(origin + ":" + std::to_string(lineno) + ": ragged CSV row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw validation_error(origin + ": no data");
    return rows;
}

inline Eigen::MatrixXd read_dense_csv(const fs::path& path) {
    auto rows = parse_csv(read_file(path), path.string());
    Eigen::MatrixXd M(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) M(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    return M;
}

/// Matrix Market coordinate file (.mtx) or dense CSV otherwise.
inline SparseCol read_matrix(const fs::path& path) {
    if (!fs::exists(path)) throw validation_error("matrix file not found: " + path.string());
    if (path.extension() == ".mtx") {
        SparseCol A;
        if (!Eigen::loadMarket(A, path.string())) throw validation_error("cannot parse Matrix Market file " + path.string());
        A.makeCompressed();
        return A;
    }
    SparseCol A = read_dense_csv(path).sparseView();
    A.makeCompressed();
    return A;
}

inline Eigen::MatrixXd read_dense_matrix(const fs::path& path) {
    if (path.extension() == ".mtx") return Eigen::MatrixXd(read_matrix(path));
    return read_dense_csv(path);
}

/// Single-column (or single-row) CSV.
inline Eigen::VectorXd read_vector(const fs::path& path) {
    if (!fs::exists(path)) throw validation_error("vector file not found: " + path.string());
    Eigen::MatrixXd M = read_dense_csv(path);
    if (M.cols() == 1) return M.col(0);
    if (M.rows() == 1) return M.row(0).transpose();
    throw validation_error(path.string() + ": expected a single column of values");
}

inline void write_vector(const fs::path& path, const Eigen::VectorXd& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += fmt(v[i]) + "\n";
    atomic_write(path, s);
}

inline void write_matrix_market(const fs::path& path, const SparseCol& A) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp.mtx";
    if (!Eigen::saveMarket(A, tmp.string())) throw runtime_error("cannot write " + tmp.string());
    fs::rename(tmp, path);
}

inline std::string telemetry_csv(const RunReport& rep, const std::vector<std::pair<std::string, std::vector<double>>>& extra = {}) {
    std::ostringstream ss;
    ss << "iter,epoch,F,residual_norm,rejections,wall_ms";
    for (const auto& [name, col] : extra) ss << "," << name;
    ss << "\n";
    for (std::size_t r = 0; r < rep.rows.size(); ++r) {
        const auto& row = rep.rows[r];
        ss << row.iter << "," << fmt(row.epoch) << "," << fmt(row.F) << "," << fmt(row.residual_norm) << ","
           << row.rejections << "," << fmt(row.wall_ms);
        for (const auto& [name, col] : extra) ss << "," << (r < col.size() ? fmt(col[r]) : "");
        ss << "\n";
    }
    return ss.str();
}

inline SamplingScheme scheme_from_json(const json& j, std::size_t m) {
    if (!j.is_object() || !j.contains("kind")) throw validation_error("sampling: object with a 'kind' field required");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "tau_nice") {
        if (!j.contains("tau") || !j.at("tau").is_number_integer()) throw validation_error("sampling: tau_nice needs an integer 'tau'");
        auto tau = j.at("tau").get<long long>();
        if (tau < 1 || std::size_t(tau) > m) throw validation_error("sampling: tau must lie in [1, " + std::to_string(m) + "]");
        return SamplingScheme::tau_nice(m, std::size_t(tau));
    }
    if (kind == "fully_parallel") return SamplingScheme::fully_parallel(m);
    if (kind == "serial") {
        if (!j.contains("probs")) return SamplingScheme::uniform_serial(m);
        auto probs = j.at("probs").get<std::vector<double>>();
        if (probs.size() != m) throw validation_error("sampling: serial probs must have one entry per block");
        return SamplingScheme::serial(std::move(probs));
    }
    if (kind == "explicit_atoms") {
        std::vector<Atom> atoms;
        for (const auto& a : j.at("atoms")) atoms.push_back({a.at("support").get<std::vector<std::size_t>>(), a.at("prob").get<double>()});
        return SamplingScheme::explicit_atoms(m, std::move(atoms));
    }
    throw validation_error("sampling: unknown kind '" + kind + "'");
}

inline json scheme_to_json(const SamplingScheme& s) {
    switch (s.kind()) {
        case SamplingKind::TauNice: return {{"kind", "tau_nice"}, {"tau", s.tau()}};
        case SamplingKind::FullyParallel: return {{"kind", "fully_parallel"}};
        case SamplingKind::SerialNonuniform: return {{"kind", "serial"}, {"probs", s.marginals()}};
        case SamplingKind::ExplicitAtoms: {
            json atoms = json::array();
            for (const auto& a : s.atoms()) atoms.push_back({{"support", a.support}, {"prob", a.prob}});
            return {{"kind", "explicit_atoms"}, {"atoms", atoms}};
        }
    }
    return {};
}

inline json structure_to_json(const SeparabilityStructure& st) {
    return {{"index_sets", st.index_sets}, {"block_lipschitz", st.block_lipschitz}};
}

inline SeparabilityStructure structure_from_json(const json& j) {
    SeparabilityStructure st;
    try {
        st.index_sets = j.at("index_sets").get<std::vector<std::vector<std::size_t>>>();
        st.block_lipschitz = j.at("block_lipschitz").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw validation_error(std::string("structure: ") + e.what());
    }
    st.m = st.block_lipschitz.size();
    st.validate();
    return st;
}

inline json certificate_to_json(const SmoothnessCertificate& c) {
    json j{{"condition", to_string(c.condition)}, {"provenance", c.provenance}, {"structure_hash", hex64(c.structure_hash)}};
    if (c.betas) {
        j["beta2"] = c.betas->beta2;
        double lo = *std::min_element(c.betas->beta1.begin(), c.betas->beta1.end());
        double hi = *std::max_element(c.betas->beta1.begin(), c.betas->beta1.end());
        j["beta1_min"] = lo;
        j["beta1_max"] = hi;
    }
    return j;
}

}  // namespace blockfb::io
