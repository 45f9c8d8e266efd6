#include "mdlab/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace mdlab {

namespace {

void require(bool ok, const char* what) {
    if (!ok) {
        throw std::invalid_argument(what);
    }
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    // Row-major fill so the draw order does not depend on Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = stddev * rng.normal();
        }
    }
    return m;
}

void softmax_columns(const Matrix& scores, Matrix& attn) {
    attn.resize(scores.rows(), scores.cols());
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
        const double mx = scores.col(j).maxCoeff();
        attn.col(j) = (scores.col(j).array() - mx).exp();
        attn.col(j) /= attn.col(j).sum();
    }
}

// Shared tail: from W X and the attention scores to the readout.
void forward_tail(const TransformerParams& p, TransformerCache& c) {
    softmax_columns(c.scores, c.attn);
    c.pre.noalias() = c.wx * c.attn;
    c.hidden = c.pre.cwiseMax(0.0);
    if (p.V) {
        c.out.noalias() = *p.V * c.hidden;
    } else {
        c.out.noalias() = p.v.transpose() * c.hidden;
    }
}

// Backward through the tail; fills readout grads and returns d(WX), d(scores).
void backward_tail(const TransformerParams& p, const TransformerCache& c, const Matrix& upstream,
                   TransformerGrad& g, Matrix& d_wx, Matrix& d_scores) {
    if (upstream.rows() != c.out.rows() || upstream.cols() != c.out.cols()) {
        throw std::invalid_argument("upstream gradient shape differs from transformer output");
    }
    Matrix d_hidden;
    if (p.V) {
        g.V = upstream * c.hidden.transpose();
        d_hidden.noalias() = p.V->transpose() * upstream;
    } else {
        g.v = c.hidden * upstream.transpose();
        d_hidden.noalias() = p.v * upstream;
    }
    const Matrix d_pre = d_hidden.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
    d_wx.noalias() = d_pre * c.attn.transpose();
    const Matrix d_attn = c.wx.transpose() * d_pre;
    d_scores.resize(c.attn.rows(), c.attn.cols());
    for (Eigen::Index j = 0; j < c.attn.cols(); ++j) {
        const double dot = c.attn.col(j).dot(d_attn.col(j));
        d_scores.col(j) = c.attn.col(j).cwiseProduct((d_attn.col(j).array() - dot).matrix());
    }
}

void check_input(const TransformerParams& p, Eigen::Index rows) {
    if (rows != p.W.cols() || p.A.rows() != p.W.cols() || p.A.cols() != p.W.cols()) {
        throw std::invalid_argument(fmt::format("transformer expects input dim {}, got {}", p.W.cols(), rows));
    }
    if ((!p.V && p.v.size() != p.W.rows()) || (p.V && p.V->cols() != p.W.rows())) {
        throw std::invalid_argument("transformer readout width differs from hidden width");
    }
}

}  // namespace

int EmbeddingSpec::index_of(int value, int position) const {
    if (value < -1 || value > 1) {
        throw std::invalid_argument(fmt::format("token value must be -1, 0 or 1, got {}", value));
    }
    if (position < 1 || position > n_prime) {
        throw std::out_of_range(fmt::format("position {} outside [1, {}]", position, n_prime));
    }
    return n_prime * (value + 1) + (position - 1);
}

Matrix embed_sequence(const CorruptedSequence& x_tilde, const EmbeddingSpec& spec) {
    require(static_cast<int>(x_tilde.size()) == spec.n_prime, "sequence length differs from embedding n'");
    Matrix X = Matrix::Zero(spec.d(), spec.n_prime);
    for (int j = 1; j <= spec.n_prime; ++j) {
        X(spec.index_of(x_tilde.values[static_cast<std::size_t>(j - 1)], j), j - 1) = 1.0;
    }
    return X;
}

Vector aggregate(const CorruptedSequence& x_tilde, const EmbeddingSpec& spec) {
    require(static_cast<int>(x_tilde.size()) == spec.n_prime, "sequence length differs from embedding n'");
    Vector z = Vector::Zero(spec.d());
    for (int j = 1; j <= spec.n_prime; ++j) {
        z(spec.index_of(x_tilde.values[static_cast<std::size_t>(j - 1)], j)) += 1.0;
    }
    return z;
}

MlpParams MlpParams::zeros(int hidden, int input_dim) {
    require(hidden >= 1 && input_dim >= 1, "MLP dimensions must be positive");
    return MlpParams{Matrix::Zero(hidden, input_dim), Vector::Zero(hidden)};
}

MlpParams MlpParams::init(int hidden, int input_dim, Rng& rng) {
    require(hidden >= 1 && input_dim >= 1, "MLP dimensions must be positive");
    MlpParams p;
    p.W = gaussian(hidden, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
    p.v = gaussian(hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    return p;
}

MlpForward mlp_forward(const MlpParams& params, const Vector& z) {
    if (z.size() != params.W.cols() || params.v.size() != params.W.rows()) {
        throw std::invalid_argument(fmt::format("MLP expects input dim {}, got {}", params.W.cols(), z.size()));
    }
    MlpForward f;
    f.pre.noalias() = params.W * z;
    f.hidden = f.pre.cwiseMax(0.0);
    f.output = params.v.dot(f.hidden);
    return f;
}

MlpGrad mlp_backward(const MlpParams& params, const Vector& z, const MlpForward& fwd, double upstream) {
    MlpGrad g;
    g.v = upstream * fwd.hidden;
    const Vector d_pre = (upstream * params.v).cwiseProduct((fwd.pre.array() > 0.0).cast<double>().matrix());
    g.W.noalias() = d_pre * z.transpose();
    return g;
}

MlpBatchForward mlp_forward_batch(const MlpParams& params, const Matrix& Z) {
    if (Z.rows() != params.W.cols() || params.v.size() != params.W.rows()) {
        throw std::invalid_argument(fmt::format("MLP expects input dim {}, got {}", params.W.cols(), Z.rows()));
    }
    MlpBatchForward f;
    f.pre.noalias() = params.W * Z;
    f.hidden = f.pre.cwiseMax(0.0);
    f.output.noalias() = params.v.transpose() * f.hidden;
    return f;
}

MlpGrad mlp_backward_batch(const MlpParams& params, const Matrix& Z, const MlpBatchForward& fwd,
                           const RowVector& upstream) {
    require(upstream.size() == Z.cols(), "upstream gradient length differs from batch size");
    MlpGrad g;
    g.v.noalias() = fwd.hidden * upstream.transpose();
    Matrix d_pre = params.v * upstream;
    d_pre.array() *= (fwd.pre.array() > 0.0).cast<double>();
    g.W.noalias() = d_pre * Z.transpose();
    return g;
}

TransformerParams TransformerParams::zeros(int hidden, int input_dim, std::optional<int> vocab) {
    require(hidden >= 1 && input_dim >= 1, "transformer dimensions must be positive");
    TransformerParams p;
    p.W = Matrix::Zero(hidden, input_dim);
    p.v = Vector::Zero(hidden);
    p.A = Matrix::Zero(input_dim, input_dim);
    if (vocab) {
        p.V = Matrix::Zero(*vocab, hidden);
    }
    return p;
}

TransformerParams TransformerParams::init(int hidden, int input_dim, Rng& rng, std::optional<int> vocab,
                                          double attention_scale) {
    require(hidden >= 1 && input_dim >= 1, "transformer dimensions must be positive");
    TransformerParams p;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double v_std = 1.0 / std::sqrt(static_cast<double>(hidden));
    p.W = gaussian(hidden, input_dim, w_std, rng);
    p.v = gaussian(hidden, 1, v_std, rng);
    p.A = attention_scale == 0.0 ? Matrix::Zero(input_dim, input_dim)
                                 : gaussian(input_dim, input_dim, attention_scale * w_std, rng);
    if (vocab) {
        p.V = gaussian(*vocab, hidden, v_std, rng);
    }
    return p;
}

Matrix IndicatorColumns::to_dense() const {
    Matrix X = Matrix::Zero(dim, columns());
    for (int j = 0; j < columns(); ++j) {
        for (int r : active(j)) {
            X(r, j) += 1.0;
        }
    }
    return X;
}

TransformerCache transformer_forward(const TransformerParams& params, const Matrix& X) {
    check_input(params, X.rows());
    TransformerCache c;
    c.wx.noalias() = params.W * X;
    c.scores.noalias() = X.transpose() * (params.A * X);
    forward_tail(params, c);
    return c;
}

TransformerCache transformer_forward(const TransformerParams& params, const IndicatorColumns& X) {
    check_input(params, X.dim);
    const int n = X.columns();
    TransformerCache c;
    c.wx = Matrix::Zero(params.W.rows(), n);
    c.scores = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int r : X.active(i)) {
            c.wx.col(i) += params.W.col(r);
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int r : X.active(i)) {
                for (int q : X.active(j)) {
                    s += params.A(r, q);
                }
            }
            c.scores(i, j) = s;
        }
    }
    forward_tail(params, c);
    return c;
}

TransformerGrad transformer_backward(const TransformerParams& params, const Matrix& X, const TransformerCache& cache,
                                     const Matrix& upstream) {
    check_input(params, X.rows());
    TransformerGrad g = zeros_like(params);
    Matrix d_wx, d_scores;
    backward_tail(params, cache, upstream, g, d_wx, d_scores);
    g.W.noalias() = d_wx * X.transpose();
    g.A.noalias() = X * d_scores * X.transpose();
    return g;
}

TransformerGrad transformer_backward(const TransformerParams& params, const IndicatorColumns& X,
                                     const TransformerCache& cache, const Matrix& upstream) {
    check_input(params, X.dim);
    TransformerGrad g = zeros_like(params);
    Matrix d_wx, d_scores;
    backward_tail(params, cache, upstream, g, d_wx, d_scores);
    const int n = X.columns();
    for (int i = 0; i < n; ++i) {
        for (int r : X.active(i)) {
            g.W.col(r) += d_wx.col(i);
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double d = d_scores(i, j);
            for (int r : X.active(i)) {
                for (int q : X.active(j)) {
                    g.A(r, q) += d;
                }
            }
        }
    }
    return g;
}

std::vector<double> position_outputs(const ParityModel& model, const CorruptedSequence& x_tilde) {
    const EmbeddingSpec spec{static_cast<int>(x_tilde.size())};
    if (const auto* mlp = std::get_if<MlpParams>(&model)) {
        const double f = mlp_forward(*mlp, aggregate(x_tilde, spec)).output;
        return std::vector<double>(x_tilde.size(), f);
    }
    const auto& tf = std::get<TransformerParams>(model);
    require(!tf.V, "parity outputs need a scalar-readout transformer");
    const auto cache = transformer_forward(tf, embed_sequence(x_tilde, spec));
    return {cache.out.data(), cache.out.data() + cache.out.size()};
}

double position_output(const ParityModel& model, const CorruptedSequence& x_tilde, int position) {
    if (const auto* mlp = std::get_if<MlpParams>(&model)) {
        return mlp_forward(*mlp, aggregate(x_tilde, EmbeddingSpec{static_cast<int>(x_tilde.size())})).output;
    }
    return position_outputs(model, x_tilde).at(static_cast<std::size_t>(position - 1));
}

bool all_finite(const ParityModel& model) {
    bool ok = true;
    std::visit([&](const auto& p) { p.for_each_block([&](const auto& b) { ok = ok && b.allFinite(); }); }, model);
    return ok;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "binary checkpoints assume a little-endian host");

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = m(r, c);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(j.size()) != rows) {
        throw std::invalid_argument("checkpoint matrix has the wrong number of rows");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw std::invalid_argument("checkpoint matrix has the wrong number of columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

nlohmann::json checkpoint_header(const ParityModel& model, int n_prime) {
    nlohmann::json h;
    h["n_prime"] = n_prime;
    std::visit(
        [&](const auto& p) {
            h["d"] = p.input_dim();
            h["D"] = p.hidden();
        },
        model);
    if (const auto* tf = std::get_if<TransformerParams>(&model)) {
        h["arch"] = "transformer";
        if (tf->V) {
            h["vocab"] = tf->V->rows();
        }
    } else {
        h["arch"] = "mlp";
    }
    return h;
}

ParityModel empty_from_header(const nlohmann::json& h) {
    const int d = h.at("d").get<int>();
    const int D = h.at("D").get<int>();
    const auto arch = h.at("arch").get<std::string>();
    if (arch == "mlp") {
        return MlpParams::zeros(D, d);
    }
    if (arch == "transformer") {
        std::optional<int> vocab;
        if (h.contains("vocab")) {
            vocab = h.at("vocab").get<int>();
        }
        return TransformerParams::zeros(D, d, vocab);
    }
    throw std::invalid_argument(fmt::format("unknown checkpoint arch '{}'", arch));
}

}  // namespace

void save_checkpoint_json(const std::filesystem::path& path, const ParityModel& model, int n_prime) {
    auto j = checkpoint_header(model, n_prime);
    std::visit(
        [&](const auto& p) {
            j["W"] = matrix_to_json(p.W);
            j["v"] = std::vector<double>(p.v.data(), p.v.data() + p.v.size());
        },
        model);
    if (const auto* tf = std::get_if<TransformerParams>(&model)) {
        j["A"] = matrix_to_json(tf->A);
        if (tf->V) {
            j["V"] = matrix_to_json(*tf->V);
        }
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
    }
    out << j.dump() << '\n';
}

ParityModel load_checkpoint_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot read checkpoint {}", path.string()));
    }
    const auto j = nlohmann::json::parse(in);
    auto model = empty_from_header(j);
    std::visit(
        [&](auto& p) {
            p.W = matrix_from_json(j.at("W"), p.W.rows(), p.W.cols());
            const auto v = j.at("v").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != p.v.size()) {
                throw std::invalid_argument("checkpoint readout has the wrong length");
            }
            p.v = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        },
        model);
    if (auto* tf = std::get_if<TransformerParams>(&model)) {
        tf->A = matrix_from_json(j.at("A"), tf->A.rows(), tf->A.cols());
        if (tf->V) {
            tf->V = matrix_from_json(j.at("V"), tf->V->rows(), tf->V->cols());
        }
    }
    return model;
}

void save_checkpoint_binary(const std::filesystem::path& path, const ParityModel& model, int n_prime) {
    const std::string header = checkpoint_header(model, n_prime).dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
    }
    out.write("MDLB", 4);
    const auto len = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::visit(
        [&](const auto& p) {
            p.for_each_block([&](const auto& b) {
                const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = b;
                out.write(reinterpret_cast<const char*>(rm.data()),
                          static_cast<std::streamsize>(rm.size() * sizeof(double)));
            });
        },
        model);
}

ParityModel load_checkpoint_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot read checkpoint {}", path.string()));
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MDLB", 4) != 0) {
        throw std::invalid_argument("not a binary checkpoint (bad magic)");
    }
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), len);
    auto model = empty_from_header(nlohmann::json::parse(header));
    std::visit(
        [&](auto& p) {
            p.for_each_block([&](auto& b) {
                Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(b.rows(), b.cols());
                in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
                b = rm;
            });
        },
        model);
    if (!in) {
        throw std::invalid_argument("binary checkpoint is truncated");
    }
    return model;
}

}  // namespace mdlab
