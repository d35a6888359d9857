#include "nmqsd/csv.hpp"

#include "nmqsd/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace nmqsd {

namespace {

void put(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
    out += ',';
}

double parse_double(const std::string& s, std::size_t line, std::size_t col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ShapeError("csv line " + std::to_string(line) + ", column " + std::to_string(col + 1) +
                         ": not a number: '" + s + "'");
    }
}

} // namespace

std::string format_csv(const ObservableSeries& series) {
    std::string out(kObservableCsvHeader);
    out += '\n';
    for (const auto& p : series.points) {
        const Operator3& m = p.rho.matrix();
        put(out, p.t);
        for (int k = 0; k < 3; ++k) {
            put(out, p.J[k]);
            put(out, p.J_se[k]);
        }
        put(out, p.purity);
        put(out, p.purity_se);
        put(out, m(0, 0).real());
        put(out, m(1, 1).real());
        put(out, m(2, 2).real());
        for (auto [r, c] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
            put(out, m(r, c).real());
            put(out, m(r, c).imag());
        }
        out += std::to_string(p.n_traj);
        out += '\n';
    }
    return out;
}

void export_csv(const ObservableSeries& series, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << format_csv(series);
    if (!f) throw Error("failed writing " + path.string());
}

ObservableSeries parse_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kObservableCsvHeader) {
        throw ShapeError("csv: header does not match the observable schema");
    }
    ObservableSeries series;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 19) {
            throw ShapeError("csv line " + std::to_string(line_no) + ": expected 19 columns, got " +
                             std::to_string(cells.size()));
        }
        std::array<double, 18> v;
        for (std::size_t i = 0; i < 18; ++i) v[i] = parse_double(cells[i], line_no, i);

        ObservablePoint p;
        p.t = v[0];
        p.J = {v[1], v[3], v[5]};
        p.J_se = {v[2], v[4], v[6]};
        p.purity = v[7];
        p.purity_se = v[8];
        const Complex r01(v[12], v[13]), r02(v[14], v[15]), r12(v[16], v[17]);
        Operator3 m;
        m << v[9], r01, r02,
             std::conj(r01), v[10], r12,
             std::conj(r02), std::conj(r12), v[11];
        p.rho = DensityMatrix(m);
        try {
            std::size_t used = 0;
            p.n_traj = std::stoll(cells[18], &used);
            if (used != cells[18].size()) throw std::invalid_argument(cells[18]);
        } catch (const std::exception&) {
            throw ShapeError("csv line " + std::to_string(line_no) + ": n_traj is not an integer");
        }
        series.points.push_back(p);
    }
    return series;
}

ObservableSeries read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

} // namespace nmqsd
