#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"

namespace flowbm {

/// Column-per-state bit matrix: rows are units, columns are examples.
using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// A binary state vector; every entry is exactly 0 or 1.
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(std::size_t n) : bits_(n, 0) {}
    StateVector(std::initializer_list<int> bits) {
        bits_.reserve(bits.size());
        for (int b : bits) push(b);
    }
    explicit StateVector(const std::vector<std::uint8_t>& bits) {
        bits_.reserve(bits.size());
        for (auto b : bits) push(b);
    }
    template <class Derived>
    static StateVector from_column(const Eigen::MatrixBase<Derived>& col) {
        StateVector s;
        s.bits_.reserve(static_cast<std::size_t>(col.size()));
        for (Eigen::Index i = 0; i < col.size(); ++i) s.push(static_cast<int>(col(i)));
        return s;
    }

    [[nodiscard]] std::size_t size() const { return bits_.size(); }
    [[nodiscard]] std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
    void flip(std::size_t i) { bits_[i] ^= 1; }
    [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }

    [[nodiscard]] Eigen::VectorXd as_real() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(bits_.size()));
        for (std::size_t i = 0; i < bits_.size(); ++i) v(static_cast<Eigen::Index>(i)) = bits_[i];
        return v;
    }
    [[nodiscard]] Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> as_column() const {
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1> c(static_cast<Eigen::Index>(bits_.size()));
        for (std::size_t i = 0; i < bits_.size(); ++i) c(static_cast<Eigen::Index>(i)) = bits_[i];
        return c;
    }

    friend bool operator==(const StateVector&, const StateVector&) = default;

private:
    void push(int b) {
        require(b == 0 || b == 1, "state vector entries must be 0 or 1, got " + std::to_string(b));
        bits_.push_back(static_cast<std::uint8_t>(b));
    }
    std::vector<std::uint8_t> bits_;
};

inline BitMatrix to_bit_matrix(const std::vector<StateVector>& states) {
    require(!states.empty(), "empty state list");
    const auto n = static_cast<Eigen::Index>(states.front().size());
    BitMatrix m(n, static_cast<Eigen::Index>(states.size()));
    for (std::size_t k = 0; k < states.size(); ++k) {
        require(static_cast<Eigen::Index>(states[k].size()) == n, "state list has mixed lengths");
        m.col(static_cast<Eigen::Index>(k)) = states[k].as_column();
    }
    return m;
}

/// Columns [begin, end) of a bit matrix as reals.
inline Eigen::MatrixXd to_real(const BitMatrix& bits, Eigen::Index begin, Eigen::Index end) {
    return bits.middleCols(begin, end - begin).cast<double>();
}
inline Eigen::MatrixXd to_real(const BitMatrix& bits) { return bits.cast<double>(); }

}  // namespace flowbm
