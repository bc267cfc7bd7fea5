#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gci {

/// Immutable, column-named sample matrix (rows are samples). Entries are
/// finite, names unique, at least one row.
class Dataset {
public:
    Dataset(std::vector<std::string> names, Eigen::MatrixXd values);

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const Eigen::MatrixXd& values() const noexcept { return values_; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index(const std::string& name) const;
    std::span<const double> column(const std::string& name) const;
    Eigen::VectorXd column_vector(const std::string& name) const;

    /// Matrix of the named columns, in the given order (may be empty).
    Eigen::MatrixXd columns(const std::vector<std::string>& names) const;

    Dataset select_rows(const std::vector<std::size_t>& rows) const;

    bool operator==(const Dataset& other) const {
        return names_ == other.names_ && values_ == other.values_;
    }

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
    std::map<std::string, std::size_t> index_;
};

/// CSV: header row of names, comma separated, '.' decimal, LF endings.
/// Values are written with 17 significant digits so reading back is exact.
void write_csv(std::ostream& out, const Dataset& d);
Dataset read_csv(std::istream& in);

void write_csv_file(const std::string& path, const Dataset& d);
Dataset read_csv_file(const std::string& path);

}  // namespace gci
