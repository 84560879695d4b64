#include "acpg/net.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace acpg::net {

std::size_t PolicyNet::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : backbone) n += layer.w.data.size() + layer.b.size();
    n += head.data.size();
    return n;
}

PolicyNet make_net(int in_dim, const std::vector<int>& hidden, int k,
                   std::mt19937_64& rng) {
    // k = 1 is the scalar-output case used for value functions.
    if (in_dim <= 0 || k < 1 || hidden.empty())
        throw NetError("make_net: bad architecture");
    PolicyNet net;
    int prev = in_dim;
    for (int width : hidden) {
        DenseLayer layer;
        layer.w = Mat(width, prev);
        layer.b = Vec(width, 0.0);
        double limit = std::sqrt(6.0 / prev);
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& x : layer.w.data) x = u(rng);
        net.backbone.push_back(std::move(layer));
        prev = width;
    }
    net.head = Mat(k, prev);
    double limit = std::sqrt(6.0 / prev);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& x : net.head.data) x = u(rng);
    return net;
}

void freeze_etf_head(PolicyNet& net, const etf::EtfMatrix& m) {
    if (m.d != net.d())
        throw NetError("freeze_etf_head: ETF dimension " + std::to_string(m.d) +
                       " does not match activation dimension " +
                       std::to_string(net.d()));
    if (m.k != net.k())
        throw NetError("freeze_etf_head: ETF action count mismatch");
    for (int a = 0; a < m.k; ++a)
        for (int i = 0; i < m.d; ++i) net.head(a, i) = m.vectors(i, a);
    net.frozen = true;
    net.etf = EtfProvenance{m.seed, m.k, m.d, m.energy};
}

namespace {

// Applies the optional norm cap; returns the scale factor used (1 if inactive).
double apply_cap(const PolicyNet& net, Vec& h) {
    if (net.activation_cap <= 0.0) return 1.0;
    double sq = squared_norm(h);
    if (sq <= net.activation_cap) return 1.0;
    double s = std::sqrt(net.activation_cap / sq);
    scale(h, s);
    return s;
}

void forward_one(const PolicyNet& net, const Vec& state,
                 std::vector<Vec>& post, Vec& h_raw, Vec& h, Vec& logits,
                 Vec& probs) {
    if (static_cast<int>(state.size()) != net.in_dim())
        throw NetError("forward: state dimension " +
                       std::to_string(state.size()) + " does not match input width " +
                       std::to_string(net.in_dim()));
    post.clear();
    Vec cur = state;
    for (const auto& layer : net.backbone) {
        Vec z = matvec(layer.w, cur);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = std::max(z[i] + layer.b[i], 0.0);
        post.push_back(z);
        cur = post.back();
    }
    h_raw = cur;
    h = cur;
    apply_cap(net, h);
    logits = matvec(net.head, h);
    probs = softmax(logits);
}

}  // namespace

ForwardResult forward(const PolicyNet& net, const Vec& state) {
    ForwardResult r;
    std::vector<Vec> post;
    Vec h_raw;
    forward_one(net, state, post, h_raw, r.h, r.logits, r.probs);
    return r;
}

ForwardCache forward_batch(const PolicyNet& net, const std::vector<Vec>& states) {
    ForwardCache cache;
    cache.net_version = net.version;
    cache.inputs = states;
    cache.post.resize(states.size());
    cache.h_raw.resize(states.size());
    cache.h.resize(states.size());
    cache.logits.resize(states.size());
    cache.probs.resize(states.size());
    for (std::size_t i = 0; i < states.size(); ++i)
        forward_one(net, states[i], cache.post[i], cache.h_raw[i], cache.h[i],
                    cache.logits[i], cache.probs[i]);
    return cache;
}

GradientTape zero_tape(const PolicyNet& net) {
    GradientTape tape;
    for (const auto& layer : net.backbone) {
        LayerGrad g;
        g.w = Mat(layer.w.rows, layer.w.cols);
        g.b = Vec(layer.b.size(), 0.0);
        tape.backbone.push_back(std::move(g));
    }
    tape.head = Mat(net.head.rows, net.head.cols);
    return tape;
}

GradientTape backward(const PolicyNet& net, const ForwardCache& cache,
                      const std::vector<Vec>& dlogits) {
    if (cache.net_version != net.version) throw StaleCacheError();
    if (dlogits.size() != cache.inputs.size())
        throw NetError("backward: dlogits batch size mismatch");

    GradientTape tape = zero_tape(net);
    int layers = static_cast<int>(net.backbone.size());

    for (std::size_t s = 0; s < dlogits.size(); ++s) {
        const Vec& dz = dlogits[s];
        const Vec& h = cache.h[s];

        if (!net.frozen)
            for (int a = 0; a < net.head.rows; ++a)
                for (int i = 0; i < net.head.cols; ++i)
                    tape.head(a, i) += dz[a] * h[i];

        Vec dh = tmatvec(net.head, dz);

        // Back through the norm cap: h = s * h_raw with s = sqrt(cap)/||h_raw||
        // projects the gradient onto the tangent of the sphere.
        if (net.activation_cap > 0.0) {
            const Vec& raw = cache.h_raw[s];
            double sq = squared_norm(raw);
            if (sq > net.activation_cap) {
                double sc = std::sqrt(net.activation_cap / sq);
                double inv = 1.0 / std::sqrt(sq);
                double along = 0.0;
                for (std::size_t i = 0; i < raw.size(); ++i)
                    along += dh[i] * raw[i] * inv;
                for (std::size_t i = 0; i < raw.size(); ++i)
                    dh[i] = sc * (dh[i] - along * raw[i] * inv);
            }
        }

        Vec dpost = std::move(dh);
        for (int l = layers - 1; l >= 0; --l) {
            const Vec& post = cache.post[s][l];
            Vec dpre(post.size());
            for (std::size_t i = 0; i < post.size(); ++i)
                dpre[i] = post[i] > 0.0 ? dpost[i] : 0.0;

            const Vec& input = l == 0 ? cache.inputs[s] : cache.post[s][l - 1];
            auto& g = tape.backbone[l];
            for (int i = 0; i < g.w.rows; ++i) {
                if (dpre[i] == 0.0) continue;
                for (int j = 0; j < g.w.cols; ++j) g.w(i, j) += dpre[i] * input[j];
            }
            for (std::size_t i = 0; i < dpre.size(); ++i) g.b[i] += dpre[i];

            if (l > 0) dpost = tmatvec(net.backbone[l].w, dpre);
        }
    }
    return tape;
}

bool tape_finite(const GradientTape& tape) {
    for (const auto& g : tape.backbone)
        if (!all_finite(g.w.data) || !all_finite(g.b)) return false;
    return all_finite(tape.head.data);
}

double tape_grad_norm(const GradientTape& tape) {
    double sq = 0.0;
    for (const auto& g : tape.backbone) {
        sq += squared_norm(g.w.data);
        sq += squared_norm(g.b);
    }
    sq += squared_norm(tape.head.data);
    return std::sqrt(sq);
}

void clip_tape_norm(GradientTape& tape, double max_norm) {
    if (max_norm <= 0.0) return;
    double n = tape_grad_norm(tape);
    if (n <= max_norm) return;
    double s = max_norm / n;
    for (auto& g : tape.backbone) {
        scale(g.w.data, s);
        scale(g.b, s);
    }
    scale(tape.head.data, s);
}

void sgd_step(PolicyNet& net, const GradientTape& tape, double lr) {
    if (!tape_finite(tape)) throw NonFiniteGradientError("sgd_step");
    for (std::size_t l = 0; l < net.backbone.size(); ++l) {
        axpy(-lr, tape.backbone[l].w.data, net.backbone[l].w.data);
        axpy(-lr, tape.backbone[l].b, net.backbone[l].b);
    }
    if (!net.frozen) axpy(-lr, tape.head.data, net.head.data);
    ++net.version;
}

AdamState make_adam_state(const PolicyNet& net) {
    AdamState st;
    for (const auto& layer : net.backbone) {
        LayerGrad z;
        z.w = Mat(layer.w.rows, layer.w.cols);
        z.b = Vec(layer.b.size(), 0.0);
        st.m_backbone.push_back(z);
        st.v_backbone.push_back(std::move(z));
    }
    st.m_head = Mat(net.head.rows, net.head.cols);
    st.v_head = Mat(net.head.rows, net.head.cols);
    return st;
}

namespace {

void adam_update(Vec& param, const Vec& grad, Vec& m, Vec& v, double lr,
                 double b1, double b2, double eps, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

void adam_step(PolicyNet& net, const GradientTape& tape, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (!tape_finite(tape)) throw NonFiniteGradientError("adam_step");
    ++state.t;
    double bc1 = 1.0 - std::pow(beta1, state.t);
    double bc2 = 1.0 - std::pow(beta2, state.t);
    for (std::size_t l = 0; l < net.backbone.size(); ++l) {
        adam_update(net.backbone[l].w.data, tape.backbone[l].w.data,
                    state.m_backbone[l].w.data, state.v_backbone[l].w.data, lr,
                    beta1, beta2, eps, bc1, bc2);
        adam_update(net.backbone[l].b, tape.backbone[l].b, state.m_backbone[l].b,
                    state.v_backbone[l].b, lr, beta1, beta2, eps, bc1, bc2);
    }
    if (!net.frozen)
        adam_update(net.head.data, tape.head.data, state.m_head.data,
                    state.v_head.data, lr, beta1, beta2, eps, bc1, bc2);
    ++net.version;
}

std::string to_json(const PolicyNet& net) {
    nlohmann::json j;
    j["schema"] = 1;
    j["frozen"] = net.frozen;
    j["activation_cap"] = net.activation_cap;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.backbone) {
        layers.push_back({{"rows", layer.w.rows},
                          {"cols", layer.w.cols},
                          {"w", layer.w.data},
                          {"b", layer.b}});
    }
    j["backbone"] = layers;
    j["head"] = {{"rows", net.head.rows},
                 {"cols", net.head.cols},
                 {"w", net.head.data}};
    if (net.etf)
        j["etf"] = {{"seed", net.etf->seed},
                    {"k", net.etf->k},
                    {"d", net.etf->d},
                    {"energy", net.etf->energy}};
    else
        j["etf"] = nullptr;
    return j.dump();
}

PolicyNet from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("schema").get<int>() != 1)
        throw NetError("checkpoint: unsupported schema version");
    PolicyNet net;
    net.frozen = j.at("frozen").get<bool>();
    net.activation_cap = j.at("activation_cap").get<double>();
    for (const auto& item : j.at("backbone")) {
        DenseLayer layer;
        layer.w = Mat(item.at("rows").get<int>(), item.at("cols").get<int>());
        layer.w.data = item.at("w").get<Vec>();
        layer.b = item.at("b").get<Vec>();
        if (layer.w.data.size() !=
            static_cast<std::size_t>(layer.w.rows) * layer.w.cols)
            throw NetError("checkpoint: layer shape mismatch");
        net.backbone.push_back(std::move(layer));
    }
    const auto& head = j.at("head");
    net.head = Mat(head.at("rows").get<int>(), head.at("cols").get<int>());
    net.head.data = head.at("w").get<Vec>();
    if (!j.at("etf").is_null()) {
        const auto& e = j.at("etf");
        net.etf = EtfProvenance{e.at("seed").get<std::uint64_t>(),
                                e.at("k").get<int>(), e.at("d").get<int>(),
                                e.at("energy").get<double>()};
    }
    return net;
}

void save_json(const PolicyNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NetError("cannot open " + path + " for writing");
    out << to_json(net) << "\n";
}

PolicyNet load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NetError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string head_bytes(const PolicyNet& net) {
    std::string bytes(net.head.data.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), net.head.data.data(), bytes.size());
    return bytes;
}

}  // namespace acpg::net
