#ifndef CBMA_BASIS_HPP
#define CBMA_BASIS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "cbma/dataset.hpp"
#include "cbma/errors.hpp"

namespace cbma {

// Center/scale of the training covariate, frozen so that test-time expansion
// reuses the training statistics.
struct FrozenStats {
    double center = 0.0;
    double scale = 1.0;
};

struct BasisSpec {
    enum class Kind { RawColumns, Polynomial, HermiteWeighted };

    Kind kind = Kind::RawColumns;
    std::vector<Eigen::Index> columns; // raw-columns selection
    int degree = 1;                    // polynomial: max degree in covariate 0
    std::vector<int> poly_degrees;     // polynomial: explicit powers (overrides 1..degree)
    int order = 1;                     // hermite-weighted: number of columns k
    bool include_intercept = true;

    static BasisSpec raw(std::vector<Eigen::Index> cols, bool intercept = true) {
        BasisSpec b;
        b.kind = Kind::RawColumns;
        b.columns = std::move(cols);
        b.include_intercept = intercept;
        return b;
    }
    static BasisSpec polynomial(int degree, bool intercept = true) {
        BasisSpec b;
        b.kind = Kind::Polynomial;
        b.degree = degree;
        b.include_intercept = intercept;
        return b;
    }
    static BasisSpec powers(std::vector<int> degrees, bool intercept = true) {
        BasisSpec b;
        b.kind = Kind::Polynomial;
        b.poly_degrees = std::move(degrees);
        b.include_intercept = intercept;
        return b;
    }
    static BasisSpec hermite(int order) {
        BasisSpec b;
        b.kind = Kind::HermiteWeighted;
        b.order = order;
        b.include_intercept = false;
        return b;
    }

    Eigen::Index width() const {
        Eigen::Index p = include_intercept ? 1 : 0;
        switch (kind) {
            case Kind::RawColumns: return p + static_cast<Eigen::Index>(columns.size());
            case Kind::Polynomial:
                return p + (poly_degrees.empty() ? degree
                                                 : static_cast<Eigen::Index>(poly_degrees.size()));
            case Kind::HermiteWeighted: return p + order;
        }
        return p;
    }
};

struct Design {
    Eigen::MatrixXd matrix;   // n x p
    FrozenStats stats;        // meaningful for hermite-weighted
};

inline FrozenStats training_stats(const Eigen::VectorXd& x) {
    FrozenStats s;
    s.center = x.mean();
    const double n = static_cast<double>(x.size());
    s.scale = n > 1 ? std::sqrt((x.array() - s.center).square().sum() / (n - 1.0)) : 0.0;
    return s;
}

// Expands raw covariates into a design matrix. Deterministic; for the
// hermite-weighted basis, supply frozen_stats at test time so the training
// center/scale are reused.
inline Design expand_basis(const Dataset& data, const BasisSpec& basis,
                           std::optional<FrozenStats> frozen_stats = std::nullopt) {
    data.validate();
    const Eigen::Index n = data.n();
    const Eigen::Index p = basis.width();
    Design out;
    out.matrix.resize(n, p);
    Eigen::Index j0 = 0;
    if (basis.include_intercept) {
        out.matrix.col(0).setOnes();
        j0 = 1;
    }
    switch (basis.kind) {
        case BasisSpec::Kind::RawColumns: {
            for (size_t c = 0; c < basis.columns.size(); ++c) {
                const Eigen::Index col = basis.columns[c];
                if (col < 0 || col >= data.d())
                    throw data_error("expand_basis: column index out of range");
                out.matrix.col(j0 + static_cast<Eigen::Index>(c)) = data.x.col(col);
            }
            break;
        }
        case BasisSpec::Kind::Polynomial: {
            if (data.d() < 1) throw data_error("expand_basis: polynomial needs a covariate");
            std::vector<int> degrees = basis.poly_degrees;
            if (degrees.empty())
                for (int d = 1; d <= basis.degree; ++d) degrees.push_back(d);
            for (size_t c = 0; c < degrees.size(); ++c)
                out.matrix.col(j0 + static_cast<Eigen::Index>(c)) =
                    data.x.col(0).array().pow(degrees[c]);
            break;
        }
        case BasisSpec::Kind::HermiteWeighted: {
            if (data.d() != 1)
                throw data_error("expand_basis: hermite-weighted needs exactly one covariate");
            const FrozenStats st = frozen_stats ? *frozen_stats : training_stats(data.x.col(0));
            if (!(st.scale > 0.0))
                throw degenerate_basis_error("expand_basis: constant covariate, s_X = 0");
            out.stats = st;
            const Eigen::ArrayXd centered = data.x.col(0).array() - st.center;
            const Eigen::ArrayXd weight = (-centered.square() / (2.0 * st.scale * st.scale)).exp();
            Eigen::ArrayXd power = Eigen::ArrayXd::Ones(n);
            for (int j = 1; j <= basis.order; ++j) {
                out.matrix.col(j0 + j - 1) = power * weight;
                power *= centered;
            }
            break;
        }
    }
    if (!out.matrix.allFinite()) throw numeric_error("expand_basis: non-finite design entries");
    return out;
}

} // namespace cbma

#endif
