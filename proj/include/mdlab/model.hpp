#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mdlab/masking.hpp"
#include "mdlab/rng.hpp"

namespace mdlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// One-hot token embedding for parity sequences: one row per (value, position)
// pair, value in {-1, 0, +1}, giving d = 3 n'. Rows are zero-based.
struct EmbeddingSpec {
    int n_prime = 0;

    int d() const noexcept { return 3 * n_prime; }
    // Value block first, then position: n' (b + 1) + (j - 1).
    int index_of(int value, int position) const;
};

// d x n' matrix whose column j is the one-hot embedding of x_tilde[j].
Matrix embed_sequence(const CorruptedSequence& x_tilde, const EmbeddingSpec& spec);
// Sum of the embedding columns (the aggregated input z).
Vector aggregate(const CorruptedSequence& x_tilde, const EmbeddingSpec& spec);

// Two-layer ReLU network f(z) = v^T relu(W z).
struct MlpParams {
    Matrix W;  // D x d
    Vector v;  // D

    int hidden() const noexcept { return static_cast<int>(W.rows()); }
    int input_dim() const noexcept { return static_cast<int>(W.cols()); }

    static MlpParams zeros(int hidden, int input_dim);
    // W ~ N(0, 1/d), v ~ N(0, 1/D).
    static MlpParams init(int hidden, int input_dim, Rng& rng);

    template <class F>
    void for_each_block(F&& f) {
        f(W);
        f(v);
    }
    template <class F>
    void for_each_block(F&& f) const {
        f(W);
        f(v);
    }
};
using MlpGrad = MlpParams;

struct MlpForward {
    Vector pre;
    Vector hidden;
    double output = 0.0;
};

MlpForward mlp_forward(const MlpParams& params, const Vector& z);
// Gradient of upstream * f(z).
MlpGrad mlp_backward(const MlpParams& params, const Vector& z, const MlpForward& fwd, double upstream);

// Column-batched variants: Z is d x N, outputs are 1 x N.
struct MlpBatchForward {
    Matrix pre;
    Matrix hidden;
    RowVector output;
};

MlpBatchForward mlp_forward_batch(const MlpParams& params, const Matrix& Z);
// Gradient of sum_i upstream_i * f(z_i).
MlpGrad mlp_backward_batch(const MlpParams& params, const Matrix& Z, const MlpBatchForward& fwd,
                           const RowVector& upstream);

// One-layer transformer readout(relu(W X softmax(X^T A X))), softmax per
// column. The readout is v^T (scalar per position) unless V is present, in
// which case it is V (vocab logits per position).
struct TransformerParams {
    Matrix W;  // D x d
    Vector v;  // D
    Matrix A;  // d x d
    std::optional<Matrix> V;  // vocab x D

    int hidden() const noexcept { return static_cast<int>(W.rows()); }
    int input_dim() const noexcept { return static_cast<int>(W.cols()); }
    int output_dim() const noexcept { return V ? static_cast<int>(V->rows()) : 1; }

    static TransformerParams zeros(int hidden, int input_dim, std::optional<int> vocab = std::nullopt);
    // W ~ N(0, 1/d), v and V ~ N(0, 1/D), A = attention_scale * N(0, 1/d) (zero by default).
    static TransformerParams init(int hidden, int input_dim, Rng& rng, std::optional<int> vocab = std::nullopt,
                                  double attention_scale = 0.0);

    template <class F>
    void for_each_block(F&& f) {
        f(W);
        f(v);
        f(A);
        if (V) {
            f(*V);
        }
    }
    template <class F>
    void for_each_block(F&& f) const {
        f(W);
        f(v);
        f(A);
        if (V) {
            f(*V);
        }
    }
};
using TransformerGrad = TransformerParams;

struct TransformerCache {
    Matrix wx;      // D x n, W X
    Matrix scores;  // n x n, X^T A X
    Matrix attn;    // n x n, column softmax of scores
    Matrix pre;     // D x n
    Matrix hidden;  // D x n
    Matrix out;     // out_dim x n
};

// Input whose columns are 0/1 indicator vectors with a fixed number of
// active rows each (one-hot or sums of one-hots). Equivalent to a dense X
// but processed by index.
struct IndicatorColumns {
    int dim = 0;
    int per_column = 0;
    std::vector<int> rows;  // column-major, per_column entries per column

    int columns() const noexcept { return per_column == 0 ? 0 : static_cast<int>(rows.size()) / per_column; }
    std::span<const int> active(int column) const {
        return std::span<const int>(rows).subspan(static_cast<std::size_t>(column * per_column),
                                                  static_cast<std::size_t>(per_column));
    }
    Matrix to_dense() const;
};

TransformerCache transformer_forward(const TransformerParams& params, const Matrix& X);
TransformerCache transformer_forward(const TransformerParams& params, const IndicatorColumns& X);

// upstream is out_dim x n: gradient of sum(upstream .* out).
TransformerGrad transformer_backward(const TransformerParams& params, const Matrix& X, const TransformerCache& cache,
                                     const Matrix& upstream);
TransformerGrad transformer_backward(const TransformerParams& params, const IndicatorColumns& X,
                                     const TransformerCache& cache, const Matrix& upstream);

// A parity predictor: the reduced MLP replicates its scalar across positions.
using ParityModel = std::variant<MlpParams, TransformerParams>;

// Model output at every position of x_tilde.
std::vector<double> position_outputs(const ParityModel& model, const CorruptedSequence& x_tilde);
// Output at a single (1-based) position.
double position_output(const ParityModel& model, const CorruptedSequence& x_tilde, int position);

// Elementwise ops on gradient containers.
template <class P>
void scale_in_place(P& p, double c) {
    p.for_each_block([c](auto& b) { b *= c; });
}

template <class P>
P zeros_like(const P& p) {
    P out = p;
    out.for_each_block([](auto& b) { b.setZero(); });
    return out;
}

template <class P>
void add_in_place(P& into, const P& from) {
    std::vector<const double*> src;
    std::vector<Eigen::Index> sizes;
    from.for_each_block([&](const auto& b) {
        src.push_back(b.data());
        sizes.push_back(b.size());
    });
    std::size_t i = 0;
    into.for_each_block([&](auto& b) {
        Eigen::Map<const Vector> s(src[i], sizes[i]);
        b.reshaped() += s;
        ++i;
    });
}

bool all_finite(const ParityModel& model);

// Checkpoints: JSON, or binary "MDLB" + u32 header length + JSON header
// {arch, n_prime, d, D, vocab?} followed by W, v, A, V as row-major
// little-endian float64.
void save_checkpoint_json(const std::filesystem::path& path, const ParityModel& model, int n_prime);
ParityModel load_checkpoint_json(const std::filesystem::path& path);
void save_checkpoint_binary(const std::filesystem::path& path, const ParityModel& model, int n_prime);
ParityModel load_checkpoint_binary(const std::filesystem::path& path);

}  // namespace mdlab
