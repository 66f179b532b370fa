#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "regime_riccati/esre.hpp"
#include "regime_riccati/lq_control.hpp"
#include "regime_riccati/market.hpp"
#include "regime_riccati/mean_variance.hpp"
#include "regime_riccati/simulator.hpp"
#include "regime_riccati/toml_lite.hpp"

namespace regime_riccati {

inline constexpr const char* kCsvVersionLine = "# regime-riccati v1";

/// Shortest representation that round-trips binary64 exactly.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace io_detail {

using toml::Table;
using toml::Value;

inline const Value& need(const Table& t, const std::string& key, const std::string& where) {
    auto it = t.find(key);
    if (it == t.end()) throw ParseError(where + ": missing key '" + key + "'");
    return it->second;
}

inline bool nested(const Value& v) {
    return v.is_array() && !v.array.empty() && v.array.front().is_array();
}

inline std::vector<double> flat_numbers(const Value& v, const std::string& where) {
    std::vector<double> out;
    out.reserve(v.as_array(where).size());
    for (const auto& e : v.array) out.push_back(e.as_number(where));
    return out;
}

/// Scalar coefficient: a plain number broadcasts to every node, an array of
/// numbers supplies one value per grid node.
inline std::vector<double> scalar_series(const Value& v, int n_nodes,
                                         const std::string& where) {
    if (v.is_number()) return std::vector<double>(n_nodes, v.num);
    const auto vals = flat_numbers(v, where);
    if (static_cast<int>(vals.size()) != n_nodes)
        throw ParseError(where + ": per-node series needs " + std::to_string(n_nodes) +
                         " values, got " + std::to_string(vals.size()));
    return vals;
}

inline VectorXd to_vector(const std::vector<double>& vals) {
    VectorXd v(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
    return v;
}

inline MatrixXd to_matrix(const std::vector<double>& vals, int rows, int cols,
                          const std::string& where) {
    if (static_cast<int>(vals.size()) != rows * cols)
        throw ParseError(where + ": expected " + std::to_string(rows * cols) +
                         " row-major entries, got " + std::to_string(vals.size()));
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = vals[r * cols + c];
    return m;
}

/// Vector coefficient: flat array broadcasts, array of arrays is per node.
inline std::vector<VectorXd> vector_series(const Value& v, int n_nodes,
                                           const std::string& where) {
    if (nested(v)) {
        if (static_cast<int>(v.array.size()) != n_nodes)
            throw ParseError(where + ": per-node series needs " + std::to_string(n_nodes) +
                             " rows");
        std::vector<VectorXd> out;
        out.reserve(n_nodes);
        for (const auto& row : v.array) out.push_back(to_vector(flat_numbers(row, where)));
        return out;
    }
    return std::vector<VectorXd>(n_nodes, to_vector(flat_numbers(v, where)));
}

/// Matrix coefficient (row-major): flat array broadcasts, array of flat
/// arrays is per node.
inline std::vector<MatrixXd> matrix_series(const Value& v, int n_nodes, int rows, int cols,
                                           const std::string& where) {
    if (nested(v)) {
        if (static_cast<int>(v.array.size()) != n_nodes)
            throw ParseError(where + ": per-node series needs " + std::to_string(n_nodes) +
                             " rows");
        std::vector<MatrixXd> out;
        out.reserve(n_nodes);
        for (const auto& row : v.array)
            out.push_back(to_matrix(flat_numbers(row, where), rows, cols, where));
        return out;
    }
    return std::vector<MatrixXd>(n_nodes, to_matrix(flat_numbers(v, where), rows, cols, where));
}

} // namespace io_detail

/// Build a problem from its TOML description. A positive n_steps_override
/// replaces the [grid] step count before the coefficient tables are built.
inline ProblemSpec load_problem(const std::string& text, int n_steps_override = 0) {
    using io_detail::need;
    const toml::Document doc = toml::parse(text);

    const toml::Table& gen_t = doc.table("generator");
    const int ell = static_cast<int>(need(gen_t, "ell", "[generator]").as_integer("ell"));
    if (ell < 1) throw ParseError("[generator]: ell must be >= 1");
    const auto& rows = need(gen_t, "rows", "[generator]").as_array("rows");
    if (static_cast<int>(rows.size()) != ell)
        throw ParseError("[generator]: rows must have ell entries");
    MatrixXd q(ell, ell);
    for (int i = 0; i < ell; ++i) {
        const auto vals = io_detail::flat_numbers(rows[i], "[generator].rows");
        if (static_cast<int>(vals.size()) != ell)
            throw ParseError("[generator]: row " + std::to_string(i) + " must have ell entries");
        for (int j = 0; j < ell; ++j) q(i, j) = vals[j];
    }

    const toml::Table& grid_t = doc.table("grid");
    const double T = need(grid_t, "T", "[grid]").as_number("T");
    int n_steps = static_cast<int>(need(grid_t, "n_steps", "[grid]").as_integer("n_steps"));
    if (n_steps_override > 0) n_steps = n_steps_override;
    if (!(T > 0.0) || n_steps < 2) throw ParseError("[grid]: need T > 0 and n_steps >= 2");
    const TimeGrid grid(T, n_steps);
    const int n_nodes = grid.n_nodes();

    const toml::Table& reg_t = doc.table("regularity");
    const double delta = need(reg_t, "delta", "[regularity]").as_number("delta");

    const auto& regimes = doc.array_of("regime");
    if (static_cast<int>(regimes.size()) != ell)
        throw ParseError("need exactly ell [[regime]] blocks");
    std::vector<const toml::Table*> by_index(ell, nullptr);
    for (const auto& block : regimes) {
        const int idx = static_cast<int>(need(block, "index", "[[regime]]").as_integer("index"));
        if (idx < 0 || idx >= ell) throw ParseError("[[regime]]: index out of range");
        if (by_index[idx]) throw ParseError("[[regime]]: duplicate index " + std::to_string(idx));
        by_index[idx] = &block;
    }

    const bool is_mv = by_index[0]->count("mu") > 0;

    ProblemSpec spec;
    spec.generator = Generator{ell, q};
    spec.grid = grid;

    if (is_mv) {
        MvMarket mv;
        mv.delta = delta;
        mv.r.assign(n_nodes, std::vector<double>(ell));
        mv.mu.assign(n_nodes, std::vector<VectorXd>(ell));
        mv.sigma.assign(n_nodes, std::vector<MatrixXd>(ell));
        for (int i = 0; i < ell; ++i) {
            const toml::Table& b = *by_index[i];
            const std::string where = "[[regime]] " + std::to_string(i);
            const auto r = io_detail::scalar_series(need(b, "r", where), n_nodes, where + ".r");
            const auto mu = io_detail::vector_series(need(b, "mu", where), n_nodes, where + ".mu");
            if (i == 0) mv.m = static_cast<int>(mu[0].size());
            const auto& sig_v = need(b, "sigma", where);
            if (i == 0) {
                const std::size_t total = io_detail::nested(sig_v)
                                              ? sig_v.array.front().array.size()
                                              : sig_v.array.size();
                if (mv.m == 0 || total % mv.m != 0)
                    throw ParseError(where + ".sigma: length not divisible by m");
                mv.n = static_cast<int>(total) / mv.m;
            }
            const auto sigma =
                io_detail::matrix_series(sig_v, n_nodes, mv.m, mv.n, where + ".sigma");
            for (int k = 0; k < n_nodes; ++k) {
                mv.r[k][i] = r[k];
                mv.mu[k][i] = mu[k];
                mv.sigma[k][i] = sigma[k];
            }
        }
        if (reg_t.count("flag") &&
            need(reg_t, "flag", "[regularity]").as_string("flag") != "singular")
            throw ParseError("[regularity]: market problems are always 'singular'");
        spec.mv = std::move(mv);
    } else {
        LqCoefficients lq;
        lq.delta = delta;
        const std::string flag = need(reg_t, "flag", "[regularity]").as_string("flag");
        if (flag == "standard")
            lq.flag = Regularity::Standard;
        else if (flag == "singular")
            lq.flag = Regularity::Singular;
        else
            throw ParseError("[regularity]: flag must be 'standard' or 'singular'");
        lq.A.assign(n_nodes, std::vector<double>(ell));
        lq.B.assign(n_nodes, std::vector<VectorXd>(ell));
        lq.C.assign(n_nodes, std::vector<VectorXd>(ell));
        lq.D.assign(n_nodes, std::vector<MatrixXd>(ell));
        lq.Qcost.assign(n_nodes, std::vector<double>(ell));
        lq.R.assign(n_nodes, std::vector<MatrixXd>(ell));
        lq.G.assign(ell, 0.0);
        for (int i = 0; i < ell; ++i) {
            const toml::Table& b = *by_index[i];
            const std::string where = "[[regime]] " + std::to_string(i);
            const auto A = io_detail::scalar_series(need(b, "A", where), n_nodes, where + ".A");
            const auto B = io_detail::vector_series(need(b, "B", where), n_nodes, where + ".B");
            const auto C = io_detail::vector_series(need(b, "C", where), n_nodes, where + ".C");
            if (i == 0) {
                lq.m = static_cast<int>(B[0].size());
                lq.n = static_cast<int>(C[0].size());
            }
            const auto D = io_detail::matrix_series(need(b, "D", where), n_nodes, lq.n, lq.m,
                                                    where + ".D");
            const auto Qc = io_detail::scalar_series(need(b, "Q", where), n_nodes, where + ".Q");
            const auto R = io_detail::matrix_series(need(b, "R", where), n_nodes, lq.m, lq.m,
                                                    where + ".R");
            lq.G[i] = need(b, "G", where).as_number("G");
            for (int k = 0; k < n_nodes; ++k) {
                lq.A[k][i] = A[k];
                lq.B[k][i] = B[k];
                lq.C[k][i] = C[k];
                lq.D[k][i] = D[k];
                lq.Qcost[k][i] = Qc[k];
                lq.R[k][i] = R[k];
            }
        }
        spec.lq = std::move(lq);
    }

    const int m = is_mv ? spec.mv->m : spec.lq->m;
    const toml::Table& cone_t = doc.table("cone");
    const std::string kind = need(cone_t, "kind", "[cone]").as_string("kind");
    if (kind == "full") {
        spec.cone = Cone::full(m);
    } else if (kind == "orthant") {
        spec.cone = Cone::orthant(m);
    } else if (kind == "rays") {
        const auto& rays_v = need(cone_t, "rays", "[cone]").as_array("rays");
        std::vector<VectorXd> dirs;
        for (const auto& rv : rays_v)
            dirs.push_back(io_detail::to_vector(io_detail::flat_numbers(rv, "[cone].rays")));
        spec.cone = Cone::rays(std::move(dirs));
    } else {
        throw ParseError("[cone]: kind must be 'full', 'orthant' or 'rays'");
    }

    const toml::Table& init_t = doc.table("initial");
    spec.x = need(init_t, "x", "[initial]").as_number("x");
    spec.i0 = static_cast<int>(need(init_t, "i0", "[initial]").as_integer("i0"));
    return spec;
}

inline ProblemSpec load_problem_file(const std::string& path, int n_steps_override = 0) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return load_problem(buf.str(), n_steps_override);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV writers. All numeric fields use 17 significant digits so a read-back
// reproduces the in-memory doubles bit-exactly.

inline void write_esre_csv(std::ostream& os, const EsreSolution& sol) {
    os << kCsvVersionLine << "\n";
    os << "t,regime,P1,P2\n";
    for (int k = 0; k < sol.grid.n_nodes(); ++k)
        for (int i = 0; i < sol.ell; ++i)
            os << format_g17(sol.grid.node(k)) << ',' << i << ','
               << format_g17(sol.P1[k][i]) << ',' << format_g17(sol.P2[k][i]) << "\n";
}

inline void write_scalar_table_csv(std::ostream& os, const TimeGrid& grid,
                                   const ScalarTable& table, const std::string& column) {
    os << kCsvVersionLine << "\n";
    os << "t,regime," << column << "\n";
    for (int k = 0; k < grid.n_nodes(); ++k)
        for (std::size_t i = 0; i < table[k].size(); ++i)
            os << format_g17(grid.node(k)) << ',' << i << ',' << format_g17(table[k][i])
               << "\n";
}

inline void write_policy_csv(std::ostream& os, const FeedbackPolicy& policy) {
    const EsreSolution& sol = policy.solution();
    os << kCsvVersionLine << "\n";
    os << "t,regime";
    for (int j = 1; j <= sol.m; ++j) os << ",v1_" << j;
    for (int j = 1; j <= sol.m; ++j) os << ",v2_" << j;
    os << "\n";
    for (int k = 0; k < sol.grid.n_nodes(); ++k)
        for (int i = 0; i < sol.ell; ++i) {
            os << format_g17(sol.grid.node(k)) << ',' << i;
            for (int j = 0; j < sol.m; ++j) os << ',' << format_g17(sol.vhat1[k][i](j));
            for (int j = 0; j < sol.m; ++j) os << ',' << format_g17(sol.vhat2[k][i](j));
            os << "\n";
        }
}

inline void write_policy_csv(std::ostream& os, const AffinePolicy& policy) {
    os << kCsvVersionLine << "\n";
    os << "t,regime";
    for (int j = 1; j <= policy.m; ++j) os << ",slope_" << j;
    for (int j = 1; j <= policy.m; ++j) os << ",intercept_" << j;
    os << "\n";
    for (int k = 0; k < policy.grid.n_nodes(); ++k)
        for (int i = 0; i < policy.ell; ++i) {
            os << format_g17(policy.grid.node(k)) << ',' << i;
            for (int j = 0; j < policy.m; ++j) os << ',' << format_g17(policy.slope[k][i](j));
            for (int j = 0; j < policy.m; ++j)
                os << ',' << format_g17(policy.intercept[k][i](j));
            os << "\n";
        }
}

/// 41 samples from the vertex outward; the span is a plotting convenience
/// scaled by the frontier curvature and the initial endowment.
inline void write_frontier_csv(std::ostream& os, const FrontierResult& fr) {
    os << kCsvVersionLine << "\n";
    os << "z,variance,std_dev,lambda_star\n";
    const double ref = std::max(fr.x * fr.x, 1e-8);
    const double span = 4.0 * std::sqrt(fr.v0 + ref / fr.a);
    for (int s = 0; s <= 40; ++s) {
        const double z = fr.z0 + span * s / 40.0;
        const double var = fr.variance_at(z);
        os << format_g17(z) << ',' << format_g17(var) << ',' << format_g17(std::sqrt(var))
           << ',' << format_g17(fr.lambda_for(z)) << "\n";
    }
}

inline void write_paths_csv(std::ostream& os, const std::vector<PathRecord>& records) {
    os << kCsvVersionLine << "\n";
    const int m = records.empty() || records.front().u.empty()
                      ? 0
                      : static_cast<int>(records.front().u.front().size());
    os << "path_id,t,regime,X";
    for (int j = 1; j <= m; ++j) os << ",u_" << j;
    os << "\n";
    for (const auto& rec : records)
        for (std::size_t k = 0; k < rec.t.size(); ++k) {
            os << rec.path_id << ',' << format_g17(rec.t[k]) << ',' << rec.regime[k] << ','
               << format_g17(rec.X[k]);
            for (int j = 0; j < m; ++j) os << ',' << format_g17(rec.u[k][j]);
            os << "\n";
        }
}

/// Reads a CSV produced by the writers above: skips '#' comment lines, keeps
/// the header, parses every other field as a double.
inline std::vector<std::vector<double>> read_csv_numeric(std::istream& is,
                                                         std::vector<std::string>* header) {
    std::vector<std::vector<double>> rows;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (!have_header) {
            have_header = true;
            if (header) *header = fields;
            continue;
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(std::strtod(f.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace regime_riccati
