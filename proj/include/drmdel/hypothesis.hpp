#ifndef DRMDEL_HYPOTHESIS_HPP
#define DRMDEL_HYPOTHESIS_HPP

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

#include "drmdel/model.hpp"

namespace drmdel {

struct parse_error : data_error {
    parse_error(const std::string& msg, std::size_t position)
        : data_error(msg + " (at position " + std::to_string(position) + ")"),
          pos(position) {}
    std::size_t pos;
};

namespace detail {

inline void check_block_index(long i, int m, std::size_t pos) {
    if (i < 1 || i > m)
        throw parse_error("population index b" + std::to_string(i) +
                              " out of range 1.." + std::to_string(m),
                          pos);
}

// d rows expressing beta_i = beta_j.
inline void append_equal_rows(Matrix& A, Vector& b, int& row, int i, int j, int d) {
    for (int t = 0; t < d; ++t) {
        A(row, (i - 1) * d + t) = 1.0;
        A(row, (j - 1) * d + t) = -1.0;
        b[row] = 0.0;
        ++row;
    }
}

}  // namespace detail

// Hypothesis grammar:
//   equal:all                  beta = 0 (full equality of all populations)
//   equal:i,j[;k,l...]         beta_i = beta_j, stacked
//   zero:i                     beta_i = 0
//   fix:i=v1,...,vd            beta_i pinned to a vector
//   lincomb:<expr>=c           scalar block coefficients, e.g. 2*b1-b2=0,
//                              broadcast over the d components
inline ConstraintSpec parse_hypothesis(const std::string& spec, int m, int d) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw parse_error("expected `kind:...`", 0);
    const std::string kind = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    const int md = m * d;

    if (kind == "equal") {
        if (rest == "all") {
            return ConstraintSpec(Matrix::Identity(md, md), Vector::Zero(md));
        }
        // pairs i,j separated by ';'
        std::vector<std::pair<int, int>> pairs;
        std::size_t pos = colon + 1;
        std::istringstream in(rest);
        std::string piece;
        while (std::getline(in, piece, ';')) {
            const auto comma = piece.find(',');
            if (comma == std::string::npos)
                throw parse_error("expected `i,j` pair", pos);
            long i, j;
            try {
                i = std::stol(piece.substr(0, comma));
                j = std::stol(piece.substr(comma + 1));
            } catch (const std::exception&) {
                throw parse_error("expected integer indices", pos);
            }
            detail::check_block_index(i, m, pos);
            detail::check_block_index(j, m, pos);
            if (i == j) throw parse_error("indices in a pair must differ", pos);
            pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
            pos += piece.size() + 1;
        }
        if (pairs.empty()) throw parse_error("no pairs given", colon + 1);
        Matrix A = Matrix::Zero(static_cast<int>(pairs.size()) * d, md);
        Vector b = Vector::Zero(A.rows());
        int row = 0;
        for (auto [i, j] : pairs) detail::append_equal_rows(A, b, row, i, j, d);
        return ConstraintSpec(std::move(A), std::move(b));
    }

    if (kind == "zero" || kind == "fix") {
        std::string index_part = rest;
        Vector value = Vector::Zero(d);
        if (kind == "fix") {
            const auto eq = rest.find('=');
            if (eq == std::string::npos)
                throw parse_error("expected `fix:i=v1,...,vd`", colon + 1);
            index_part = rest.substr(0, eq);
            std::istringstream vin(rest.substr(eq + 1));
            std::string num;
            int t = 0;
            while (std::getline(vin, num, ',')) {
                if (t >= d) throw parse_error("too many components", colon + eq + 2);
                try {
                    value[t++] = std::stod(num);
                } catch (const std::exception&) {
                    throw parse_error("bad numeric component `" + num + "`",
                                      colon + eq + 2);
                }
            }
            if (t != d)
                throw parse_error("expected " + std::to_string(d) + " components",
                                  colon + eq + 2);
        }
        long i;
        try {
            i = std::stol(index_part);
        } catch (const std::exception&) {
            throw parse_error("expected a population index", colon + 1);
        }
        detail::check_block_index(i, m, colon + 1);
        Matrix A = Matrix::Zero(d, md);
        A.block(0, (static_cast<int>(i) - 1) * d, d, d) = Matrix::Identity(d, d);
        return ConstraintSpec(std::move(A), std::move(value));
    }

    if (kind == "lincomb") {
        // <coef>*b<i> terms with +/- signs, then = c (scalar, broadcast)
        const auto eq = rest.rfind('=');
        if (eq == std::string::npos)
            throw parse_error("expected `= c` right-hand side", colon + 1);
        double rhs;
        try {
            rhs = std::stod(rest.substr(eq + 1));
        } catch (const std::exception&) {
            throw parse_error("bad right-hand side", colon + eq + 2);
        }
        std::vector<double> coef(static_cast<std::size_t>(m), 0.0);
        std::size_t p = 0;
        const std::string expr = rest.substr(0, eq);
        bool any = false;
        while (p < expr.size()) {
            double sign = 1.0;
            while (p < expr.size() && (expr[p] == '+' || expr[p] == '-')) {
                if (expr[p] == '-') sign = -sign;
                ++p;
            }
            if (p >= expr.size()) throw parse_error("dangling sign", colon + 1 + p);
            double c = 1.0;
            if (std::isdigit(static_cast<unsigned char>(expr[p])) || expr[p] == '.') {
                std::size_t used = 0;
                c = std::stod(expr.substr(p), &used);
                p += used;
                if (p < expr.size() && expr[p] == '*') ++p;
            }
            if (p >= expr.size() || expr[p] != 'b')
                throw parse_error("expected b<i> term", colon + 1 + p);
            ++p;
            std::size_t used = 0;
            long i;
            try {
                i = std::stol(expr.substr(p), &used);
            } catch (const std::exception&) {
                throw parse_error("expected population index after b", colon + 1 + p);
            }
            p += used;
            detail::check_block_index(i, m, colon + 1 + p);
            coef[static_cast<std::size_t>(i - 1)] += sign * c;
            any = true;
        }
        if (!any) throw parse_error("empty linear combination", colon + 1);
        Matrix A = Matrix::Zero(d, md);
        for (int k = 0; k < m; ++k)
            A.block(0, k * d, d, d) = coef[k] * Matrix::Identity(d, d);
        return ConstraintSpec(std::move(A), Vector::Constant(d, rhs));
    }

    throw parse_error("unknown hypothesis kind `" + kind + "`", 0);
}

// Inverse of parse_hypothesis for the structured forms; general (A, b) pairs
// that did not come from the grammar are rendered as stacked fix/lincomb rows
// only when they match, otherwise an opaque tag.
inline std::string format_hypothesis(const ConstraintSpec& c, int m, int d) {
    const int md = m * d;
    // equal:all
    if (c.q() == md && c.A == Matrix::Identity(md, md) &&
        c.b.lpNorm<Eigen::Infinity>() == 0.0)
        return "equal:all";
    // zero:i / fix:i
    if (c.q() == d) {
        for (int i = 0; i < m; ++i) {
            Matrix expect = Matrix::Zero(d, md);
            expect.block(0, i * d, d, d) = Matrix::Identity(d, d);
            if (c.A == expect) {
                if (c.b.lpNorm<Eigen::Infinity>() == 0.0)
                    return "zero:" + std::to_string(i + 1);
                std::ostringstream os;
                os << "fix:" << (i + 1) << "=";
                for (int t = 0; t < d; ++t) os << (t ? "," : "") << c.b[t];
                return os.str();
            }
        }
    }
    // equal pairs
    if (c.q() % d == 0 && c.b.lpNorm<Eigen::Infinity>() == 0.0) {
        std::vector<std::pair<int, int>> pairs;
        bool all_pairs = true;
        for (int r = 0; r < c.q() / d && all_pairs; ++r) {
            int i = -1, j = -1;
            bool shape_ok = true;
            for (int k = 0; k < m && shape_ok; ++k) {
                const Matrix blk = c.A.block(r * d, k * d, d, d);
                if (blk == Matrix::Identity(d, d))
                    (i < 0 ? i : j) = k;  // first +I then -I expected
                else if (blk == -Matrix::Identity(d, d))
                    j = k;
                else if (blk.cwiseAbs().maxCoeff() != 0.0)
                    shape_ok = false;
            }
            if (shape_ok && i >= 0 && j >= 0)
                pairs.emplace_back(i + 1, j + 1);
            else
                all_pairs = false;
        }
        if (all_pairs && !pairs.empty()) {
            std::ostringstream os;
            os << "equal:";
            for (std::size_t r = 0; r < pairs.size(); ++r)
                os << (r ? ";" : "") << pairs[r].first << "," << pairs[r].second;
            return os.str();
        }
    }
    // lincomb with scalar block coefficients and constant rhs
    if (c.q() == d && c.b.isConstant(c.b[0])) {
        std::vector<double> coef(static_cast<std::size_t>(m), 0.0);
        bool ok = true;
        for (int k = 0; k < m && ok; ++k) {
            const Matrix blk = c.A.block(0, k * d, d, d);
            const double s = blk(0, 0);
            if (blk != s * Matrix::Identity(d, d)) ok = false;
            coef[static_cast<std::size_t>(k)] = s;
        }
        if (ok) {
            std::ostringstream os;
            os << "lincomb:";
            bool first = true;
            for (int k = 0; k < m; ++k) {
                if (coef[k] == 0.0) continue;
                if (coef[k] >= 0.0 && !first) os << "+";
                if (coef[k] == -1.0)
                    os << "-";
                else if (coef[k] != 1.0)
                    os << coef[k] << "*";
                os << "b" << (k + 1);
                first = false;
            }
            os << "=" << c.b[0];
            return os.str();
        }
    }
    return "custom:q=" + std::to_string(c.q());
}

}  // namespace drmdel

#endif  // DRMDEL_HYPOTHESIS_HPP
