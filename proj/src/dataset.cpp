#include "gci/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gci/error.hpp"

namespace gci {

Dataset::Dataset(std::vector<std::string> names, Eigen::MatrixXd values)
    : names_(std::move(names)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.cols()) != names_.size())
        throw ContractError("dataset: column count does not match names");
    if (values_.rows() < 1) throw ContractError("dataset: need at least one row");
    for (std::size_t j = 0; j < names_.size(); ++j) {
        if (!index_.emplace(names_[j], j).second)
            throw ContractError("dataset: duplicate column '" + names_[j] + "'");
    }
    if (!values_.allFinite()) throw ContractError("dataset: non-finite entry");
}

std::size_t Dataset::index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("dataset: unknown column '" + name + "'");
    return it->second;
}

std::span<const double> Dataset::column(const std::string& name) const {
    const auto j = static_cast<Eigen::Index>(index(name));
    return {values_.col(j).data(), rows()};
}

Eigen::VectorXd Dataset::column_vector(const std::string& name) const {
    return values_.col(static_cast<Eigen::Index>(index(name)));
}

Eigen::MatrixXd Dataset::columns(const std::vector<std::string>& names) const {
    Eigen::MatrixXd out(values_.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = values_.col(static_cast<Eigen::Index>(index(names[j])));
    return out;
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= this->rows()) throw ContractError("dataset: row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = values_.row(static_cast<Eigen::Index>(rows[i]));
    }
    return Dataset(names_, std::move(out));
}

namespace {

void write_double(std::ostream& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    out.write(buf, res.ptr - buf);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_csv(std::ostream& out, const Dataset& d) {
    for (std::size_t j = 0; j < d.cols(); ++j) {
        if (j) out << ',';
        out << d.names()[j];
    }
    out << '\n';
    const auto& m = d.values();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            write_double(out, m(i, j));
        }
        out << '\n';
    }
}

Dataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ContractError("csv: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto names = split_line(line);
    std::vector<double> flat;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != names.size())
            throw ContractError("csv: row " + std::to_string(rows + 1) + " has " + std::to_string(cells.size()) +
                                " fields, expected " + std::to_string(names.size()));
        for (const auto& c : cells) {
            double v = 0.0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw ContractError("csv: bad number '" + c + "' in row " + std::to_string(rows + 1));
            flat.push_back(v);
        }
        ++rows;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < names.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = flat[i * names.size() + j];
    return Dataset(names, std::move(m));
}

void write_csv_file(const std::string& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(out, d);
    if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_csv(in);
}

}  // namespace gci
