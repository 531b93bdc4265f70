#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "easbo/errors.hpp"
#include "easbo/fem.hpp"

namespace easbo {

namespace {

constexpr std::size_t kDenseLimit = 1200;

void normalize_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
        Eigen::Index imax = 0;
        vecs.col(j).cwiseAbs().maxCoeff(&imax);
        if (vecs(imax, j) < 0) vecs.col(j) = -vecs.col(j);
    }
}

// M-orthonormalizes the columns of Y in place (Cholesky QR, applied twice).
void m_orthonormalize(Eigen::MatrixXd& Y, const SparseSymMatrix& M) {
    for (int pass = 0; pass < 2; ++pass) {
        const Eigen::MatrixXd B = Y.transpose() * (M * Y);
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (B + B.transpose()));
        if (llt.info() != Eigen::Success) throw ComputeError("eigensolver lost subspace rank");
        Y = llt.matrixU().solve<Eigen::OnTheRight>(Y);
    }
}

struct RitzResult {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

// Rayleigh-Ritz on span(Y) for A x = lambda M x; returns ascending pairs.
RitzResult rayleigh_ritz(const Eigen::MatrixXd& Y, const SparseSymMatrix& A, const SparseSymMatrix& M) {
    Eigen::MatrixXd a = Y.transpose() * (A * Y);
    Eigen::MatrixXd b = Y.transpose() * (M * Y);
    a = 0.5 * (a + a.transpose()).eval();
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b);
    if (es.info() != Eigen::Success) throw ComputeError("Rayleigh-Ritz projection failed");
    return {es.eigenvalues(), Y * es.eigenvectors()};
}

Eigen::VectorXd residuals_of(const SparseSymMatrix& A, const SparseSymMatrix& M,
                             const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors, Eigen::Index k) {
    Eigen::VectorXd r(k);
    const Eigen::MatrixXd AV = A * vectors.leftCols(k);
    const Eigen::MatrixXd MV = M * vectors.leftCols(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        r[i] = (AV.col(i) - values[i] * MV.col(i)).norm() / MV.col(i).norm();
    }
    return r;
}

EigenBasis dense_solve(const SparseSymMatrix& A, const SparseSymMatrix& M, std::size_t k) {
    const Eigen::MatrixXd a = Eigen::MatrixXd(A);
    const Eigen::MatrixXd b = Eigen::MatrixXd(M);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b);
    if (es.info() != Eigen::Success) throw ComputeError("dense generalized eigensolve failed");
    EigenBasis basis;
    basis.eigenvalues = es.eigenvalues().head(static_cast<Eigen::Index>(k));
    basis.eigenvectors = es.eigenvectors().leftCols(static_cast<Eigen::Index>(k));
    return basis;
}

// Shift-invert Lanczos in the M-inner product on (A + cM)^{-1} M with full
// reorthogonalization, followed by Rayleigh-Ritz and, if needed, subspace
// iteration until the residual target is met.
EigenBasis lanczos_solve(const SparseSymMatrix& A, const SparseSymMatrix& M, std::size_t k,
                         const EigenOptions& options) {
    const auto n = A.rows();
    const double shift = 1e-3 * A.diagonal().sum() / M.diagonal().sum();
    const SparseSymMatrix K = A + shift * M;
    Eigen::SimplicialLDLT<SparseSymMatrix> ldlt(K);
    if (ldlt.info() != Eigen::Success) throw ComputeError("factorization of shifted stiffness failed");

    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::Index block = std::min<Eigen::Index>(n, kk + std::max<Eigen::Index>(20, kk / 2));
    const Eigen::Index steps = std::min<Eigen::Index>(n, 2 * block + 40);

    Eigen::MatrixXd V(n, steps);
    Eigen::MatrixXd MV(n, steps);
    Eigen::VectorXd alpha(steps), beta(steps);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    auto m_norm = [&](const Eigen::VectorXd& x) { return std::sqrt(x.dot(M * x)); };
    v /= m_norm(v);

    Eigen::Index m = 0;
    unsigned restart_seed = 1;
    for (; m < steps; ++m) {
        V.col(m) = v;
        MV.col(m) = M * v;
        Eigen::VectorXd w = ldlt.solve(MV.col(m));
        alpha[m] = w.dot(MV.col(m));
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd coeff = MV.leftCols(m + 1).transpose() * w;
            w -= V.leftCols(m + 1) * coeff;
        }
        double b = m_norm(w);
        if (m + 1 < steps && b < 1e-10 * std::abs(alpha[m])) {
            // Invariant subspace found; continue from a fresh orthogonal direction.
            for (Eigen::Index i = 0; i < n; ++i) w[i] = std::cos(0.37 * static_cast<double>(i * ++restart_seed));
            for (int pass = 0; pass < 2; ++pass) {
                const Eigen::VectorXd coeff = MV.leftCols(m + 1).transpose() * w;
                w -= V.leftCols(m + 1) * coeff;
            }
            b = 0.0;
            v = w / m_norm(w);
        } else {
            v = w / b;
        }
        beta[m] = b;
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tes(T);
    // Largest theta <-> smallest lambda.
    Eigen::MatrixXd Y = V.leftCols(m) * tes.eigenvectors().rightCols(block).rowwise().reverse();

    RitzResult rr;
    Eigen::VectorXd res;
    for (int it = 0;; ++it) {
        m_orthonormalize(Y, M);
        rr = rayleigh_ritz(Y, A, M);
        res = residuals_of(A, M, rr.values, rr.vectors, kk);
        if (res.maxCoeff() <= options.residual_tolerance) break;
        if (it >= options.max_refinements) {
            throw ComputeError("eigensolver did not converge: max residual " + std::to_string(res.maxCoeff()) +
                               " > " + std::to_string(options.residual_tolerance));
        }
        Y = ldlt.solve(M * rr.vectors);
    }
    EigenBasis basis;
    basis.eigenvalues = rr.values.head(kk);
    basis.eigenvectors = rr.vectors.leftCols(kk);
    return basis;
}

}  // namespace

std::size_t default_eigen_count(std::size_t num_nodes) {
    return std::max<std::size_t>(1, std::min<std::size_t>(256, num_nodes / 4));
}

EigenBasis EigenBasis::truncated(std::size_t k) const {
    if (k > count()) throw PreconditionError("cannot truncate eigenbasis beyond its size");
    EigenBasis out;
    out.eigenvalues = eigenvalues.head(static_cast<Eigen::Index>(k));
    out.eigenvectors = eigenvectors.leftCols(static_cast<Eigen::Index>(k));
    out.manifold_dimension = manifold_dimension;
    return out;
}

EigenBasis compute_eigenbasis(const SparseSymMatrix& stiffness, const SparseSymMatrix& mass,
                              std::size_t n_eig, const EigenOptions& options) {
    const auto n = static_cast<std::size_t>(stiffness.rows());
    if (stiffness.rows() != stiffness.cols() || mass.rows() != stiffness.rows() || mass.cols() != stiffness.cols()) {
        throw PreconditionError("stiffness and mass matrices must be square and of equal size");
    }
    if (n_eig < 1 || n_eig > n) throw PreconditionError("n_eig must lie in [1, n]");

    EigenMethod method = options.method;
    if (method == EigenMethod::automatic) {
        method = (n <= kDenseLimit || 2 * n_eig + 100 >= n) ? EigenMethod::dense : EigenMethod::lanczos;
    }
    EigenBasis basis = method == EigenMethod::dense ? dense_solve(stiffness, mass, n_eig)
                                                    : lanczos_solve(stiffness, mass, n_eig, options);
    normalize_signs(basis.eigenvectors);

    const Eigen::VectorXd res = eigen_residuals(stiffness, mass, basis);
    if (res.size() > 0 && res.maxCoeff() > options.residual_tolerance) {
        throw ComputeError("eigensolver residual " + std::to_string(res.maxCoeff()) + " exceeds tolerance " +
                           std::to_string(options.residual_tolerance));
    }
    return basis;
}

Eigen::VectorXd eigen_residuals(const SparseSymMatrix& stiffness, const SparseSymMatrix& mass,
                                const EigenBasis& basis) {
    return residuals_of(stiffness, mass, basis.eigenvalues, basis.eigenvectors,
                        static_cast<Eigen::Index>(basis.count()));
}

void save_eigenbasis(const EigenBasis& basis, const std::filesystem::path& path, const std::string& comment) {
    if (comment.find('\n') != std::string::npos) throw PreconditionError("eigenbasis comment must be a single line");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    if (!comment.empty()) out << "# " << comment << '\n';
    char buf[32];
    out << basis.num_nodes() << ' ' << basis.count() << ' ' << basis.manifold_dimension << '\n';
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", basis.eigenvalues[i]);
        out << (i ? " " : "") << buf;
    }
    out << '\n';
    for (Eigen::Index r = 0; r < basis.eigenvectors.rows(); ++r) {
        for (Eigen::Index c = 0; c < basis.eigenvectors.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", basis.eigenvectors(r, c));
            out << (c ? " " : "") << buf;
        }
        out << '\n';
    }
}

EigenBasis load_eigenbasis(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    while (in >> std::ws && in.peek() == '#') {
        std::string skip;
        std::getline(in, skip);
    }
    long long n = 0, k = 0;
    int dim = 2;
    if (!(in >> n >> k >> dim) || n <= 0 || k <= 0 || k > n) {
        throw ParseError(path.string() + ": bad eigenbasis header");
    }
    EigenBasis basis;
    basis.manifold_dimension = dim;
    basis.eigenvalues.resize(k);
    basis.eigenvectors.resize(n, k);
    for (long long i = 0; i < k; ++i)
        if (!(in >> basis.eigenvalues[i])) throw ParseError(path.string() + ": truncated eigenvalues");
    for (long long r = 0; r < n; ++r)
        for (long long c = 0; c < k; ++c)
            if (!(in >> basis.eigenvectors(r, c))) throw ParseError(path.string() + ": truncated eigenvectors");
    return basis;
}

}  // namespace easbo
