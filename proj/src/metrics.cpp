#include "acpg/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace acpg::metrics {

int ActivationSet::dim() const {
    for (const auto& cls : per_class)
        if (!cls.empty()) return static_cast<int>(cls.front().size());
    return 0;
}

int ActivationSet::total() const {
    int n = 0;
    for (const auto& cls : per_class) n += static_cast<int>(cls.size());
    return n;
}

void ActivationSet::add(int k, Vec h) {
    if (k < 0 || k >= num_classes())
        throw MetricError("ActivationSet::add: class index out of range");
    if (!per_class[k].empty() && per_class[k].front().size() != h.size())
        throw MetricError("ActivationSet::add: dimension mismatch");
    per_class[k].push_back(std::move(h));
}

Vec global_mean(const ActivationSet& a) {
    int n = a.total();
    if (n == 0) throw MetricError("global_mean: empty activation set");
    Vec mean(a.dim(), 0.0);
    for (const auto& cls : a.per_class)
        for (const auto& h : cls) axpy(1.0, h, mean);
    scale(mean, 1.0 / n);
    return mean;
}

std::vector<Vec> class_means(const ActivationSet& a) {
    std::vector<Vec> means;
    means.reserve(a.per_class.size());
    for (std::size_t k = 0; k < a.per_class.size(); ++k) {
        const auto& cls = a.per_class[k];
        if (cls.empty())
            throw MetricError("class_means: class " + std::to_string(k) +
                              " is empty");
        Vec m(a.dim(), 0.0);
        for (const auto& h : cls) axpy(1.0, h, m);
        scale(m, 1.0 / static_cast<double>(cls.size()));
        means.push_back(std::move(m));
    }
    return means;
}

std::vector<Vec> centered_class_means(const ActivationSet& a) {
    Vec g = global_mean(a);
    auto means = class_means(a);
    for (auto& m : means)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] -= g[i];
    return means;
}

double equinorm(const std::vector<Vec>& vectors) {
    if (vectors.size() < 2) throw MetricError("equinorm: need K >= 2 vectors");
    Vec norms;
    norms.reserve(vectors.size());
    for (const auto& v : vectors) norms.push_back(norm(v));
    double avg = 0.0;
    for (double n : norms) avg += n;
    avg /= static_cast<double>(norms.size());
    if (avg <= 0.0) throw MetricError("equinorm: mean norm is zero");
    double var = 0.0;
    for (double n : norms) var += (n - avg) * (n - avg);
    var /= static_cast<double>(norms.size());  // population variance
    return std::sqrt(var) / avg;
}

namespace {

std::vector<double> pairwise_cosines(const std::vector<Vec>& vectors) {
    std::vector<double> cos;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        for (std::size_t j = i + 1; j < vectors.size(); ++j)
            cos.push_back(cosine(vectors[i], vectors[j]));
    return cos;
}

}  // namespace

double equiangularity_std(const std::vector<Vec>& vectors) {
    std::size_t k = vectors.size();
    if (k < 2) throw MetricError("equiangularity_std: need K >= 2 vectors");
    if (k == 2) {
        cosine(vectors[0], vectors[1]);  // still reject zero-norm input
        return 0.0;
    }
    auto cos = pairwise_cosines(vectors);
    double mean = 0.0;
    for (double c : cos) mean += c;
    mean /= static_cast<double>(cos.size());
    double var = 0.0;
    for (double c : cos) var += (c - mean) * (c - mean);
    var /= static_cast<double>(cos.size());
    return std::sqrt(var);
}

double maxangle_metric(const std::vector<Vec>& vectors) {
    std::size_t k = vectors.size();
    if (k < 2) throw MetricError("maxangle_metric: need K >= 2 vectors");
    auto cos = pairwise_cosines(vectors);
    double target = 1.0 / (static_cast<double>(k) - 1.0);
    double sum = 0.0;
    for (double c : cos) sum += std::abs(c + target);
    return sum / static_cast<double>(cos.size());
}

double within_class_variability(const ActivationSet& a) {
    int d = a.dim();
    int k = a.num_classes();
    int n = a.total();
    auto means = class_means(a);
    Vec g = global_mean(a);

    Eigen::MatrixXd sigma_w = Eigen::MatrixXd::Zero(d, d);
    for (int c = 0; c < k; ++c) {
        const auto& cls = a.per_class[c];
        for (const auto& h : cls) {
            Eigen::VectorXd diff(d);
            for (int i = 0; i < d; ++i) diff(i) = h[i] - means[c][i];
            sigma_w.noalias() += diff * diff.transpose();
        }
    }
    sigma_w /= static_cast<double>(n);

    Eigen::MatrixXd sigma_b = Eigen::MatrixXd::Zero(d, d);
    for (int c = 0; c < k; ++c) {
        Eigen::VectorXd diff(d);
        for (int i = 0; i < d; ++i) diff(i) = means[c][i] - g[i];
        sigma_b.noalias() += diff * diff.transpose();
    }
    sigma_b /= static_cast<double>(k);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        sigma_b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() > 0 ? sv(0) : 0.0;
    if (smax <= 0.0)
        throw MetricError(
            "within_class_variability: between-class covariance is degenerate "
            "(all class means coincide)");
    double cutoff = 1e-8 * smax;
    Eigen::VectorXd inv = sv;
    for (Eigen::Index i = 0; i < inv.size(); ++i)
        inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    Eigen::MatrixXd pinv =
        svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    return (sigma_w * pinv).trace() / static_cast<double>(k);
}

double self_duality(const ActivationSet& a, const std::vector<Vec>& w) {
    auto centered = centered_class_means(a);
    if (centered.size() != w.size())
        throw MetricError("self_duality: class count mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        sum += cosine(centered[k], w[k]);
    return sum / static_cast<double>(w.size());
}

CollapseReport collapse_report(const ActivationSet& a, const std::vector<Vec>& w,
                               int epoch, bool sampled) {
    CollapseReport r;
    r.epoch = epoch;
    r.sampled = sampled;
    try {
        auto centered = centered_class_means(a);
        r.equinorm_h = equinorm(centered);
        r.equinorm_w = equinorm(w);
        r.equiang_std_h = equiangularity_std(centered);
        r.equiang_std_w = equiangularity_std(w);
        r.maxangle_h = maxangle_metric(centered);
        r.maxangle_w = maxangle_metric(w);
        r.within_var = within_class_variability(a);
        r.self_duality = self_duality(a, w);
    } catch (const MetricError&) {
        r = CollapseReport{};
        r.epoch = epoch;
        r.sampled = sampled;
        r.valid = false;
        double nan = std::nan("");
        r.equinorm_h = r.equinorm_w = nan;
        r.equiang_std_h = r.equiang_std_w = nan;
        r.maxangle_h = r.maxangle_w = r.within_var = r.self_duality = nan;
    }
    return r;
}

}  // namespace acpg::metrics
