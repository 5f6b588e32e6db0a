#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gisd/types.hpp"

namespace gisd {

/// Finite group stored as its multiplication and inverse tables. Elements are
/// the integer indices 0..order-1.
class FiniteGroup {
public:
    FiniteGroup(std::vector<int> mul_table, std::vector<int> inv_table, int identity,
                bool cyclic);

    int order() const { return order_; }
    int identity() const { return identity_; }
    int mul(int g, int h) const { return mul_[static_cast<std::size_t>(g * order_ + h)]; }
    int inv(int g) const { return inv_[static_cast<std::size_t>(g)]; }
    bool is_cyclic() const { return cyclic_; }

    bool operator==(const FiniteGroup& other) const {
        return order_ == other.order_ && mul_ == other.mul_;
    }

private:
    int order_;
    std::vector<int> mul_;
    std::vector<int> inv_;
    int identity_;
    bool cyclic_;
};

FiniteGroup make_cyclic_group(int n);

/// Real irreducible representation of C_N. Frequency 0 is the trivial
/// representation, frequency N/2 (N even) the sign representation, and every
/// other frequency a 2x2 rotation block realizing a conjugate pair of complex
/// characters.
struct Irrep {
    int frequency = 0;
    int dim = 1;
    std::vector<Eigen::MatrixXd> matrices;  // one per group element

    const Eigen::MatrixXd& operator()(int g) const {
        return matrices[static_cast<std::size_t>(g)];
    }
    /// Number of complex irreducible characters this real block accounts for.
    int complex_count() const { return dim == 2 ? 2 : 1; }
};

Irrep cyclic_irrep(const FiniteGroup& group, int frequency);
std::vector<Irrep> cyclic_irreps(const FiniteGroup& group);

/// Normalized-counting-measure average (1/|G|) sum_g f(g).
Eigen::VectorXd haar_average(const FiniteGroup& group,
                             const std::function<Eigen::VectorXd(int)>& f);

struct FourierCoefficients {
    std::vector<Eigen::MatrixXd> blocks;  // one d_j x d_j matrix per irrep
};

/// f_hat(rho_j) = (1/|G|) sum_g f(g) sqrt(d_j) rho_j(g).
/// Throws std::invalid_argument when `irreps` is not a complete list for G.
FourierCoefficients fourier_analyze(const FiniteGroup& group, const std::vector<Irrep>& irreps,
                                    std::span<const double> f);

/// Inverse of fourier_analyze, returned as the values f(0..|G|-1).
///
/// For a real rotation block the four matrix entries only span the two
/// functions cos and sin, so its trace term is weighted by
/// sqrt(d_j) / complex_count instead of sqrt(d_j); with that weight the
/// round trip is exact.
std::vector<double> fourier_synthesize(const FiniteGroup& group,
                                       const std::vector<Irrep>& irreps,
                                       const FourierCoefficients& coeffs);

/// (1/|G|) sum_g rho(g) (x) sigma(g).
Eigen::MatrixXd schur_cross_average(const FiniteGroup& group, const Irrep& rho,
                                    const Irrep& sigma);

/// Block-diagonal direct sum of irreps with multiplicities.
class DirectSumRep {
public:
    struct Block {
        Irrep irrep;
        int multiplicity = 1;
    };

    DirectSumRep(FiniteGroup group, std::vector<Block> blocks);

    /// Parses "f:m,f:m,..." (frequency:multiplicity) over a cyclic group.
    static DirectSumRep from_spec(const FiniteGroup& group, const std::string& spec);

    const FiniteGroup& group() const { return group_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    int total_dim() const { return total_dim_; }
    std::string spec() const;

    /// Offsets of every expanded (irrep copy) block; size = sum of multiplicities.
    struct Slot {
        int block = 0;   // index into blocks()
        int offset = 0;  // first coordinate
        int dim = 1;
    };
    const std::vector<Slot>& slots() const { return slots_; }

    Vec apply(int g, std::span<const double> v) const;
    /// rho(g)^T v, i.e. the action of g^{-1}.
    Vec apply_transpose(int g, std::span<const double> v) const;
    Eigen::MatrixXd matrix(int g) const;

private:
    FiniteGroup group_;
    std::vector<Block> blocks_;
    std::vector<Slot> slots_;
    int total_dim_ = 0;
};

}  // namespace gisd
