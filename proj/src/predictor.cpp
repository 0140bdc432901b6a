#include "diffsumm/predictor.hpp"

#include "diffsumm/errors.hpp"
#include "diffsumm/rng.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace diffsumm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void PredictorConfig::validate() const {
    if (d_model < 2 || n_layers < 1 || n_heads < 1 || d_ff < 1 || d_feature < 1)
        throw ConfigError("predictor dimensions must be positive (d_model >= 2)");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (!std::isfinite(position_scale) || position_scale < 0) throw ConfigError("position_scale must be finite and >= 0");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for sinusoidal embeddings");
    if (t_embed_dim != d_model) throw ConfigError("t_embed_dim must equal d_model");
}

std::size_t PredictorParams::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

std::size_t PredictorParams::tensor_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const MatrixXd&) { ++n; });
    return n;
}

PredictorParams PredictorParams::zeros_like() const {
    PredictorParams out = *this;
    out.for_each([](const std::string&, MatrixXd& m) { m.setZero(); });
    return out;
}

namespace {

Linear make_linear(int in, int out) { return {MatrixXd::Zero(in, out), MatrixXd::Zero(1, out)}; }

LayerNormParams make_norm(int d) { return {MatrixXd::Ones(1, d), MatrixXd::Zero(1, d)}; }

AttentionParams make_attention(int d) {
    return {make_linear(d, d), make_linear(d, d), make_linear(d, d), make_linear(d, d)};
}

bool is_weight(const std::string& name) { return name.ends_with(".weight"); }

} // namespace

PredictorParams init_predictor(const PredictorConfig& cfg) {
    cfg.validate();
    const int d = cfg.d_model;
    PredictorParams p;
    p.config = cfg;
    p.score_embed = make_linear(1, d);
    p.feature_key = make_linear(cfg.d_feature, d);
    p.feature_value = make_linear(cfg.d_feature, d);
    p.blocks.resize(cfg.n_layers);
    for (auto& b : p.blocks) {
        if (cfg.self_attention) {
            b.self_attn = make_attention(d);
            b.self_norm = make_norm(d);
        }
        b.cross_attn = make_attention(d);
        b.norm1 = make_norm(d);
        b.ff1 = make_linear(d, cfg.d_ff);
        b.ff2 = make_linear(cfg.d_ff, d);
        b.norm2 = make_norm(d);
    }
    p.head = make_linear(d, 1);

    Rng rng(cfg.seed);
    p.for_each([&](const std::string& name, MatrixXd& m) {
        if (!is_weight(name) || name.starts_with("head.")) return;
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
    });
    return p;
}

namespace {

void sinusoid_into(double pos, int dim, double* out) {
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        out[k] = std::sin(pos * freq);
        out[half + k] = std::cos(pos * freq);
    }
}

MatrixXd position_table(Eigen::Index n, int dim) {
    // Row-major scratch so each row is contiguous for sinusoid_into.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pe(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) sinusoid_into(static_cast<double>(i), dim, pe.row(i).data());
    return pe;
}

MatrixXd linear_fwd(const Linear& lin, const MatrixXd& x) {
    MatrixXd y = x * lin.weight;
    y.rowwise() += lin.bias.row(0);
    return y;
}

// Accumulates parameter gradients; returns dL/dx.
MatrixXd linear_bwd(const Linear& lin, const MatrixXd& x, const MatrixXd& dy, Linear& grad, bool need_dx = true) {
    grad.weight.noalias() += x.transpose() * dy;
    grad.bias += dy.colwise().sum();
    if (!need_dx) return {};
    return dy * lin.weight.transpose();
}

constexpr double kNormEps = 1e-5;

struct NormCache {
    MatrixXd xhat;
    VectorXd inv_std;
};

MatrixXd norm_fwd(const LayerNormParams& ln, const MatrixXd& x, NormCache& c) {
    const VectorXd mean = x.rowwise().mean();
    c.xhat = x.colwise() - mean;
    const VectorXd var = c.xhat.array().square().rowwise().mean();
    c.inv_std = (var.array() + kNormEps).rsqrt();
    c.xhat = c.inv_std.asDiagonal() * c.xhat;
    MatrixXd y = c.xhat.array().rowwise() * ln.gain.row(0).array();
    y.rowwise() += ln.bias.row(0);
    return y;
}

MatrixXd norm_bwd(const LayerNormParams& ln, const NormCache& c, const MatrixXd& dy, LayerNormParams& grad) {
    grad.gain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    grad.bias += dy.colwise().sum();
    const MatrixXd dxhat = (dy.array().rowwise() * ln.gain.row(0).array()).matrix();
    const VectorXd mean_d = dxhat.rowwise().mean();
    const VectorXd mean_dx = (dxhat.array() * c.xhat.array()).rowwise().mean();
    MatrixXd dx = dxhat.colwise() - mean_d;
    dx.array() -= c.xhat.array().colwise() * mean_dx.array();
    return c.inv_std.asDiagonal() * dx;
}

struct AttnCache {
    MatrixXd xq, xk, xv;
    MatrixXd q, k, v, concat;
    std::vector<MatrixXd> probs;
};

MatrixXd attn_fwd(const AttentionParams& at, int n_heads, const MatrixXd& xq, const MatrixXd& xk,
                  const MatrixXd& xv, AttnCache& c) {
    c.xq = xq;
    c.xk = xk;
    c.xv = xv;
    c.q = linear_fwd(at.query, xq);
    c.k = linear_fwd(at.key, xk);
    c.v = linear_fwd(at.value, xv);
    const Eigen::Index d = c.q.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    c.concat.resize(c.q.rows(), d);
    c.probs.resize(n_heads);
    for (int h = 0; h < n_heads; ++h) {
        MatrixXd s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
        const VectorXd row_max = s.rowwise().maxCoeff();
        s = (s.colwise() - row_max).array().exp();
        const VectorXd row_sum = s.rowwise().sum();
        s = row_sum.cwiseInverse().asDiagonal() * s;
        c.concat.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
        c.probs[h] = std::move(s);
    }
    return linear_fwd(at.out, c.concat);
}

struct AttnGrads {
    MatrixXd dxq, dxk, dxv;
};

AttnGrads attn_bwd(const AttentionParams& at, int n_heads, const AttnCache& c, const MatrixXd& dy,
                   AttentionParams& grad) {
    const MatrixXd dconcat = linear_bwd(at.out, c.concat, dy, grad.out);
    const Eigen::Index d = c.q.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    MatrixXd dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (int h = 0; h < n_heads; ++h) {
        const auto& p = c.probs[h];
        const auto doh = dconcat.middleCols(h * dh, dh);
        const MatrixXd dp = doh * c.v.middleCols(h * dh, dh).transpose();
        dv.middleCols(h * dh, dh).noalias() = p.transpose() * doh;
        const VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
        const MatrixXd ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
        dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    return {linear_bwd(at.query, c.xq, dq, grad.query), linear_bwd(at.key, c.xk, dk, grad.key),
            linear_bwd(at.value, c.xv, dv, grad.value)};
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

MatrixXd gelu(const MatrixXd& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

MatrixXd gelu_grad(const MatrixXd& x) {
    return x.unaryExpr([](double v) {
        const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    });
}

struct BlockCache {
    AttnCache self_attn;
    NormCache self_norm;
    AttnCache cross_attn;
    NormCache norm1;
    MatrixXd h1, pre_act, act;
    NormCache norm2;
};

struct ForwardCache {
    MatrixXd scores; // n x 1
    MatrixXd final_hidden;
    std::vector<BlockCache> blocks;
};

void check_inputs(const PredictorParams& p, std::span<const double> x, const FrameFeatures& f, int t) {
    if (x.empty()) throw ShapeError("predict_noise: empty score sequence");
    if (static_cast<Eigen::Index>(x.size()) != f.rows())
        throw ShapeError("predict_noise: " + std::to_string(x.size()) + " scores vs " + std::to_string(f.rows()) +
                         " feature rows");
    if (f.cols() != p.config.d_feature)
        throw ShapeError("predict_noise: feature width " + std::to_string(f.cols()) + ", expected " +
                         std::to_string(p.config.d_feature));
    if (t < 1) throw StepError("predict_noise: step must be >= 1");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("predict_noise: non-finite score input");
    if (!f.allFinite()) throw NumericError("predict_noise: non-finite feature input");
}

VectorXd forward(const PredictorParams& p, std::span<const double> x, const FrameFeatures& f, int t,
                 ForwardCache& c) {
    check_inputs(p, x, f, t);
    const auto n = static_cast<Eigen::Index>(x.size());
    const int d = p.config.d_model;
    const int heads = p.config.n_heads;

    c.scores = Eigen::Map<const VectorXd>(x.data(), n);
    const MatrixXd pe =
        p.config.positional_embedding ? MatrixXd(p.config.position_scale * position_table(n, d)) : MatrixXd::Zero(n, d);
    const std::vector<double> temb = timestep_embedding(t, d);

    MatrixXd h = linear_fwd(p.score_embed, c.scores) + pe;
    h.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(temb.data(), d);
    const MatrixXd mem_k = linear_fwd(p.feature_key, f) + pe;
    const MatrixXd mem_v = linear_fwd(p.feature_value, f) + pe;

    c.blocks.resize(p.blocks.size());
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        const auto& b = p.blocks[l];
        auto& bc = c.blocks[l];
        if (p.config.self_attention) {
            const MatrixXd a = attn_fwd(b.self_attn, heads, h, h, h, bc.self_attn);
            h = norm_fwd(b.self_norm, h + a, bc.self_norm);
        }
        const MatrixXd a = attn_fwd(b.cross_attn, heads, h, mem_k, mem_v, bc.cross_attn);
        bc.h1 = norm_fwd(b.norm1, h + a, bc.norm1);
        bc.pre_act = linear_fwd(b.ff1, bc.h1);
        bc.act = gelu(bc.pre_act);
        h = norm_fwd(b.norm2, bc.h1 + linear_fwd(b.ff2, bc.act), bc.norm2);
    }
    c.final_hidden = h;
    return linear_fwd(p.head, h).col(0);
}

void backward(const PredictorParams& p, const FrameFeatures& f, const ForwardCache& c, const VectorXd& dout,
              PredictorParams& g) {
    const int heads = p.config.n_heads;
    MatrixXd dh = linear_bwd(p.head, c.final_hidden, dout, g.head);
    MatrixXd dmem_k = MatrixXd::Zero(f.rows(), p.config.d_model);
    MatrixXd dmem_v = MatrixXd::Zero(f.rows(), p.config.d_model);

    for (std::size_t l = p.blocks.size(); l-- > 0;) {
        const auto& b = p.blocks[l];
        const auto& bc = c.blocks[l];
        auto& gb = g.blocks[l];
        const MatrixXd dsum2 = norm_bwd(b.norm2, bc.norm2, dh, gb.norm2);
        const MatrixXd dact = linear_bwd(b.ff2, bc.act, dsum2, gb.ff2);
        const MatrixXd dpre = (dact.array() * gelu_grad(bc.pre_act).array()).matrix();
        const MatrixXd dh1 = dsum2 + linear_bwd(b.ff1, bc.h1, dpre, gb.ff1);
        const MatrixXd dsum1 = norm_bwd(b.norm1, bc.norm1, dh1, gb.norm1);
        AttnGrads ag = attn_bwd(b.cross_attn, heads, bc.cross_attn, dsum1, gb.cross_attn);
        dh = dsum1 + ag.dxq;
        dmem_k += ag.dxk;
        dmem_v += ag.dxv;
        if (p.config.self_attention) {
            const MatrixXd dsum0 = norm_bwd(b.self_norm, bc.self_norm, dh, gb.self_norm);
            AttnGrads sg = attn_bwd(b.self_attn, heads, bc.self_attn, dsum0, gb.self_attn);
            dh = dsum0 + sg.dxq + sg.dxk + sg.dxv;
        }
    }
    linear_bwd(p.score_embed, c.scores, dh, g.score_embed, false);
    linear_bwd(p.feature_key, f, dmem_k, g.feature_key, false);
    linear_bwd(p.feature_value, f, dmem_v, g.feature_value, false);
}

} // namespace

std::vector<double> timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding dimension must be even");
    if (t < 1) throw StepError("timestep embedding needs t >= 1");
    std::vector<double> out(dim);
    sinusoid_into(static_cast<double>(t), dim, out.data());
    return out;
}

std::vector<double> predict_noise(const PredictorParams& params, const NoisyScores& x_t, const FrameFeatures& f,
                                  int t) {
    ForwardCache cache;
    const VectorXd out = forward(params, x_t.values, f, t, cache);
    return {out.data(), out.data() + out.size()};
}

double mse_loss(std::span<const double> eps, std::span<const double> eps_hat) {
    if (eps.size() != eps_hat.size())
        throw ShapeError("mse_loss: length " + std::to_string(eps.size()) + " vs " + std::to_string(eps_hat.size()));
    if (eps.empty()) throw ShapeError("mse_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double r = eps[i] - eps_hat[i];
        sum += r * r;
    }
    return sum / static_cast<double>(eps.size());
}

LossAndGradients loss_and_gradients(const PredictorParams& params, const NoisyScores& x_t, const FrameFeatures& f,
                                    int t, std::span<const double> eps) {
    if (eps.size() != x_t.values.size()) throw ShapeError("loss_and_gradients: eps length mismatch");
    ForwardCache cache;
    const VectorXd out = forward(params, x_t.values, f, t, cache);
    const std::vector<double> eps_hat(out.data(), out.data() + out.size());

    LossAndGradients result{mse_loss(eps, eps_hat), params.zeros_like()};
    const double n = static_cast<double>(eps.size());
    VectorXd dout(out.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) dout[i] = 2.0 * (out[i] - eps[i]) / n;
    backward(params, f, cache, dout, result.grads);

    result.grads.for_each([](const std::string& name, const MatrixXd& m) {
        if (!m.allFinite()) throw NumericError("non-finite gradient in tensor " + name);
    });
    return result;
}

OptimizerState make_optimizer(const PredictorParams& params, double base_lr, double weight_decay) {
    OptimizerState opt;
    opt.first_moment = params.zeros_like();
    opt.second_moment = params.zeros_like();
    opt.base_lr = base_lr;
    opt.weight_decay = weight_decay;
    return opt;
}

void adam_step(PredictorParams& params, const PredictorParams& grads, OptimizerState& opt, double lr) {
    std::vector<MatrixXd*> p, m, v;
    std::vector<const MatrixXd*> g;
    params.for_each([&](const std::string&, MatrixXd& x) { p.push_back(&x); });
    grads.for_each([&](const std::string&, const MatrixXd& x) { g.push_back(&x); });
    opt.first_moment.for_each([&](const std::string&, MatrixXd& x) { m.push_back(&x); });
    opt.second_moment.for_each([&](const std::string&, MatrixXd& x) { v.push_back(&x); });
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw ShapeError("adam_step: tensor count mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols() || m[i]->rows() != p[i]->rows() ||
            m[i]->cols() != p[i]->cols())
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i));
    }

    ++opt.step;
    for (std::size_t i = 0; i < p.size(); ++i) adam_update(*p[i], *g[i], *m[i], *v[i], opt, opt.step, lr);
}

void adam_update(Eigen::Ref<MatrixXd> param, const MatrixXd& grad, MatrixXd& first_moment, MatrixXd& second_moment,
                 const OptimizerState& hyper, std::uint64_t step, double lr) {
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    auto pa = param.array();
    const auto ga = grad.array();
    auto ma = first_moment.array();
    auto va = second_moment.array();
    ma = hyper.beta1 * ma + (1.0 - hyper.beta1) * ga;
    va = hyper.beta2 * va + (1.0 - hyper.beta2) * ga.square();
    pa -= lr * ((ma / bc1) / ((va / bc2).sqrt() + hyper.epsilon)) + lr * hyper.weight_decay * pa;
}

// --- checkpoint --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

    // Row-major payload regardless of Eigen storage order.
    void matrix(const MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
    std::uint8_t u8() {
        const int c = in_.get();
        if (c == std::char_traits<char>::eof()) throw IoError("checkpoint " + path_ + ": unexpected end of file");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        if (n > (1u << 24)) throw IoError("checkpoint " + path_ + ": corrupt length field");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IoError("checkpoint " + path_ + ": unexpected end of file");
        return s;
    }
    void matrix(MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
    const std::string& path() const { return path_; }

private:
    std::istream& in_;
    std::string path_;
};

PredictorConfig parse_config_block(const std::string& text, const std::string& path) {
    PredictorConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("checkpoint " + path + ": malformed config line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "d_model") cfg.d_model = std::stoi(value);
            else if (key == "n_layers") cfg.n_layers = std::stoi(value);
            else if (key == "n_heads") cfg.n_heads = std::stoi(value);
            else if (key == "d_ff") cfg.d_ff = std::stoi(value);
            else if (key == "d_feature") cfg.d_feature = std::stoi(value);
            else if (key == "t_embed_dim") cfg.t_embed_dim = std::stoi(value);
            else if (key == "self_attention") cfg.self_attention = value == "1";
            else if (key == "positional_embedding") cfg.positional_embedding = value == "1";
            else if (key == "position_scale") cfg.position_scale = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else throw IoError("checkpoint " + path + ": unknown config key '" + key + "'");
        } catch (const std::logic_error&) {
            throw IoError("checkpoint " + path + ": bad value for '" + key + "'");
        }
    }
    return cfg;
}

void require_config_match(const PredictorConfig& stored, const PredictorConfig& expected) {
    auto field = [](const char* name, auto a, auto b) {
        if (a != b)
            throw ConfigError(std::string("checkpoint config mismatch: ") + name + " is " + std::to_string(a) +
                              ", expected " + std::to_string(b));
    };
    field("d_model", stored.d_model, expected.d_model);
    field("n_layers", stored.n_layers, expected.n_layers);
    field("n_heads", stored.n_heads, expected.n_heads);
    field("d_ff", stored.d_ff, expected.d_ff);
    field("d_feature", stored.d_feature, expected.d_feature);
    field("t_embed_dim", stored.t_embed_dim, expected.t_embed_dim);
    field("self_attention", int(stored.self_attention), int(expected.self_attention));
    field("positional_embedding", int(stored.positional_embedding), int(expected.positional_embedding));
    field("position_scale", stored.position_scale, expected.position_scale);
}

} // namespace

std::string config_block(const PredictorConfig& cfg) {
    std::ostringstream out;
    out << "d_model=" << cfg.d_model << '\n'
        << "n_layers=" << cfg.n_layers << '\n'
        << "n_heads=" << cfg.n_heads << '\n'
        << "d_ff=" << cfg.d_ff << '\n'
        << "d_feature=" << cfg.d_feature << '\n'
        << "t_embed_dim=" << cfg.t_embed_dim << '\n'
        << "self_attention=" << (cfg.self_attention ? 1 : 0) << '\n'
        << "positional_embedding=" << (cfg.positional_embedding ? 1 : 0) << '\n'
        << "position_scale=" << fmt::format("{}", cfg.position_scale) << '\n'
        << "seed=" << cfg.seed << '\n';
    return out.str();
}

// Layout (little-endian):
//   magic[8] | u32 version | u32 config_len | config text
//   u32 tensor_count | per tensor: u32 name_len, name, u32 rows, u32 cols, f64[rows*cols] row-major
//   u8 has_optimizer | [u64 step, f64 base_lr, f64 weight_decay, f64 m[...] per tensor, f64 v[...] per tensor]
void save_checkpoint(const PredictorParams& params, const OptimizerState* opt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    Writer w(out);
    w.bytes({kMagic, sizeof kMagic});
    w.u32(kCheckpointVersion);
    const std::string cfg = config_block(params.config);
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.bytes(cfg);
    w.u32(static_cast<std::uint32_t>(params.tensor_count()));
    params.for_each([&](const std::string& name, const MatrixXd& m) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        w.matrix(m);
    });
    w.u8(opt ? 1 : 0);
    if (opt) {
        w.u64(opt->step);
        w.f64(opt->base_lr);
        w.f64(opt->weight_decay);
        opt->first_moment.for_each([&](const std::string&, const MatrixXd& m) { w.matrix(m); });
        opt->second_moment.for_each([&](const std::string&, const MatrixXd& m) { w.matrix(m); });
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    Reader r(in, path.string());
    const std::string magic = r.bytes(sizeof kMagic);
    if (magic != std::string_view(kMagic, sizeof kMagic)) throw IoError("not a checkpoint file: " + path.string());
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint " + path.string() + ": unsupported format version " + std::to_string(version));

    Checkpoint ck;
    ck.config = parse_config_block(r.bytes(r.u32()), r.path());
    try {
        ck.config.validate();
    } catch (const ConfigError& e) {
        throw IoError("checkpoint " + path.string() + ": invalid stored config: " + e.what());
    }
    ck.params = init_predictor(ck.config).zeros_like();

    const std::uint32_t count = r.u32();
    if (count != ck.params.tensor_count())
        throw ShapeError("checkpoint " + path.string() + ": " + std::to_string(count) + " tensors, config implies " +
                         std::to_string(ck.params.tensor_count()));
    ck.params.for_each([&](const std::string& name, MatrixXd& m) {
        const std::string stored = r.bytes(r.u32());
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        if (stored != name) throw ShapeError("checkpoint tensor '" + stored + "' where '" + name + "' expected");
        if (rows != m.rows() || cols != m.cols())
            throw ShapeError("checkpoint tensor " + name + " has shape " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", config implies " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
        r.matrix(m);
        if (!m.allFinite()) throw NumericError("checkpoint tensor " + name + " holds non-finite values");
    });

    if (r.u8() == 1) {
        OptimizerState opt = make_optimizer(ck.params);
        opt.step = r.u64();
        opt.base_lr = r.f64();
        opt.weight_decay = r.f64();
        opt.first_moment.for_each([&](const std::string&, MatrixXd& m) { r.matrix(m); });
        opt.second_moment.for_each([&](const std::string&, MatrixXd& m) { r.matrix(m); });
        ck.optimizer = std::move(opt);
    }
    if (!r.at_end()) throw IoError("checkpoint " + path.string() + ": trailing bytes");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const PredictorConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    require_config_match(ck.config, expected);
    return ck;
}

} // namespace diffsumm
