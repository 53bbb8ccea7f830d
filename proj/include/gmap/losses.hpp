#pragma once

// Attribute-translation loss terms evaluated on caller-supplied batches. Expectations are batch
// means. Each differentiable term has a companion returning its gradient with respect to the
// first argument.

#include "gmap/sampling.hpp"

#include <Eigen/Geometry>

#include <limits>
#include <numbers>
#include <random>

namespace gmap {

inline constexpr int kExpressions = 20;
inline constexpr int kGenders = 2;
inline constexpr int kLabelSize = kExpressions + kGenders + 1;
inline constexpr double kMinAge = 16.0;
inline constexpr double kMaxAge = 70.0;

/// 20 expression one-hot, 2 gender one-hot, age scaled to [-1, 1].
struct DomainLabel {
    int expression = 0;
    int gender = 0;
    double age = 0.0;

    std::array<double, kLabelSize> packed() const {
        std::array<double, kLabelSize> p{};
        p[static_cast<std::size_t>(expression)] = 1.0;
        p[static_cast<std::size_t>(kExpressions + gender)] = 1.0;
        p[kLabelSize - 1] = age;
        return p;
    }
};

inline DomainLabel encode_label(int expression, int gender, double age_years) {
    if (expression < 0 || expression >= kExpressions)
        throw InvalidArgument("expression id " + std::to_string(expression) + " outside [0, 20)");
    if (gender < 0 || gender >= kGenders) throw InvalidArgument("gender id " + std::to_string(gender) + " outside [0, 2)");
    if (!(age_years >= kMinAge && age_years <= kMaxAge))
        throw InvalidArgument("age " + std::to_string(age_years) + " outside [16, 70]");
    return {expression, gender, 2.0 * (age_years - kMinAge) / (kMaxAge - kMinAge) - 1.0};
}

struct LossWeights {
    double lambda_cls_c = 0.02;
    double lambda_cls_m = 0.05;
    double lambda_cyc = 2.0;
    double lambda_rec = 0.1;
    double lambda_sym = 0.5;
    double lambda_gp = 0.2;
    double alpha = 0.01;

    void validate() const {
        const std::array<std::pair<const char*, double>, 7> all{{{"lambda_cls_c", lambda_cls_c},
                                                                 {"lambda_cls_m", lambda_cls_m},
                                                                 {"lambda_cyc", lambda_cyc},
                                                                 {"lambda_rec", lambda_rec},
                                                                 {"lambda_sym", lambda_sym},
                                                                 {"lambda_gp", lambda_gp},
                                                                 {"alpha", alpha}}};
        for (const auto& [name, v] : all)
            if (!std::isfinite(v) || v < 0.0) throw InvalidArgument(std::string("weight '") + name + "' must be finite and >= 0");
    }
};

/// Wasserstein critic terms with gradient penalty.
struct AdversarialTerms {
    double real_mean = 0.0;
    double fake_mean = 0.0;
    /// real_mean - fake_mean.
    double gap = 0.0;
    /// mean((|grad| - alpha)^2).
    double gp = 0.0;
    /// gap - lambda_gp * gp.
    double l_adv = 0.0;
    /// Contribution to the critic objective, -l_adv.
    double d_loss_part = 0.0;
    /// Contribution to the generator objective, +l_adv.
    double g_loss_part = 0.0;
};

inline AdversarialTerms adversarial_terms(std::span<const double> d_real, std::span<const double> d_fake,
                                          std::span<const double> grad_norms, double alpha, double lambda_gp) {
    if (d_real.empty() || d_real.size() != d_fake.size() || d_real.size() != grad_norms.size())
        throw InvalidArgument("adversarial_terms: batches must be non-empty and of equal size");
    const auto b = static_cast<double>(d_real.size());
    AdversarialTerms t;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        t.real_mean += d_real[i];
        t.fake_mean += d_fake[i];
        t.gp += (grad_norms[i] - alpha) * (grad_norms[i] - alpha);
    }
    t.real_mean /= b;
    t.fake_mean /= b;
    t.gp /= b;
    t.gap = t.real_mean - t.fake_mean;
    t.l_adv = t.gap - lambda_gp * t.gp;
    t.d_loss_part = -t.l_adv;
    t.g_loss_part = t.l_adv;
    return t;
}

/// d l_adv / d d_real, d l_adv / d d_fake and d l_adv / d grad_norms.
struct AdversarialGradient {
    std::vector<double> d_real;
    std::vector<double> d_fake;
    std::vector<double> grad_norms;
};

inline AdversarialGradient adversarial_gradient(std::span<const double> d_real, std::span<const double> d_fake,
                                                std::span<const double> grad_norms, double alpha, double lambda_gp) {
    adversarial_terms(d_real, d_fake, grad_norms, alpha, lambda_gp);
    const auto b = static_cast<double>(d_real.size());
    AdversarialGradient g;
    g.d_real.assign(d_real.size(), 1.0 / b);
    g.d_fake.assign(d_fake.size(), -1.0 / b);
    for (double n : grad_norms) g.grad_norms.push_back(-lambda_gp * 2.0 * (n - alpha) / b);
    return g;
}

/// Batch-mean classification terms; total = expression + gender + age.
struct ClassificationTerms {
    double expression = 0.0;
    double gender = 0.0;
    double age = 0.0;
    double total = 0.0;
};

namespace detail {

// -log softmax(s)[target] over s[begin, end), computed stably.
inline double softmax_xent(std::span<const double> s, int begin, int end, int target, double* grad_out) {
    int top = begin;
    for (int k = begin; k < end; ++k)
        if (s[static_cast<std::size_t>(k)] > s[static_cast<std::size_t>(top)]) top = k;
    const double m = s[static_cast<std::size_t>(top)];
    // Sum of exp(s - m) without the leading 1, so confident logits keep their tiny loss.
    double rest = 0.0;
    for (int k = begin; k < end; ++k)
        if (k != top) rest += std::exp(s[static_cast<std::size_t>(k)] - m);
    if (grad_out) {
        for (int k = begin; k < end; ++k)
            grad_out[k] = std::exp(s[static_cast<std::size_t>(k)] - m) / (1.0 + rest) - (k == begin + target ? 1.0 : 0.0);
    }
    return (m - s[static_cast<std::size_t>(begin + target)]) + std::log1p(rest);
}

inline void check_scores(std::span<const double> scores, std::size_t batch) {
    if (batch == 0 || scores.size() != batch * kLabelSize)
        throw InvalidArgument("classification_loss: scores must be batch x 23 (got " + std::to_string(scores.size()) +
                              " values for batch " + std::to_string(batch) + ")");
}

}  // namespace detail

/// Which discriminator pass the scores come from. The formula is the same; real pairs with
/// the source label and fake with the target label.
enum class ClsMode { real, fake };

/// Softmax cross-entropy on the expression and gender segments plus squared error on age.
/// `scores` is batch x 23 row-major.
inline ClassificationTerms classification_loss(std::span<const double> scores, std::span<const DomainLabel> target,
                                               ClsMode = ClsMode::real) {
    detail::check_scores(scores, target.size());
    ClassificationTerms t;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto row = scores.subspan(i * kLabelSize, kLabelSize);
        t.expression += detail::softmax_xent(row, 0, kExpressions, target[i].expression, nullptr);
        t.gender += detail::softmax_xent(row, kExpressions, kExpressions + kGenders, target[i].gender, nullptr);
        const double d = row[kLabelSize - 1] - target[i].age;
        t.age += d * d;
    }
    const auto b = static_cast<double>(target.size());
    t.expression /= b;
    t.gender /= b;
    t.age /= b;
    t.total = t.expression + t.gender + t.age;
    return t;
}

/// Gradient of ClassificationTerms::total with respect to the scores.
inline std::vector<double> classification_gradient(std::span<const double> scores, std::span<const DomainLabel> target) {
    detail::check_scores(scores, target.size());
    const auto b = static_cast<double>(target.size());
    std::vector<double> g(scores.size(), 0.0);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto row = scores.subspan(i * kLabelSize, kLabelSize);
        double* out = g.data() + i * kLabelSize;
        detail::softmax_xent(row, 0, kExpressions, target[i].expression, out);
        detail::softmax_xent(row, kExpressions, kExpressions + kGenders, target[i].gender, out);
        out[kLabelSize - 1] = 2.0 * (row[kLabelSize - 1] - target[i].age);
        for (int k = 0; k < kLabelSize; ++k) out[k] /= b;
    }
    return g;
}

/// Mean absolute difference over all elements.
inline double l1_loss(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw InvalidArgument("L1 loss: inputs must be non-empty and equal in size (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s / static_cast<double>(a.size());
}

/// d l1_loss / d a; zero where the difference is zero.
inline std::vector<double> l1_gradient(std::span<const double> a, std::span<const double> b) {
    l1_loss(a, b);
    std::vector<double> g(a.size());
    const auto n = static_cast<double>(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        g[k] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
    }
    return g;
}

inline double cycle_loss(std::span<const double> x, std::span<const double> x_cycled) { return l1_loss(x, x_cycled); }
inline std::vector<double> cycle_gradient(std::span<const double> x, std::span<const double> x_cycled) {
    return l1_gradient(x, x_cycled);
}
inline double reconstruction_loss(std::span<const double> x, std::span<const double> x_same) { return l1_loss(x, x_same); }
inline std::vector<double> reconstruction_gradient(std::span<const double> x, std::span<const double> x_same) {
    return l1_gradient(x, x_same);
}

struct SymmetryTerms {
    double value = 0.0;
    std::size_t included = 0;
    std::size_t excluded = 0;
    /// Every sample was flagged asymmetric; value is 0 by rule.
    bool all_excluded = false;
};

namespace detail {

// Per-map L1 between y and flip(y) summed over channels, averaged over valid pixels.
inline double map_symmetry(const GeometricMap& y, std::vector<double>* grad, double scale) {
    std::size_t valid = 0;
    for (auto m : y.mask) valid += m ? 1 : 0;
    if (valid == 0) return 0.0;
    double s = 0.0;
    const double inv = 1.0 / static_cast<double>(valid);
    for (int r = 0; r < y.height; ++r) {
        for (int x = 0; x < y.width; ++x) {
            if (!y.valid(x, r)) continue;
            const int mx = y.width - 1 - x;
            for (int c = 0; c < 3; ++c) {
                const double sign = c == 0 ? -1.0 : 1.0;
                const double d = y.at(x, r, c) - sign * y.at(mx, r, c);
                s += std::abs(d);
                if (grad) {
                    const double g = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) * inv * scale;
                    (*grad)[y.pixel(x, r) * 3 + static_cast<std::size_t>(c)] += g;
                    (*grad)[y.pixel(mx, r) * 3 + static_cast<std::size_t>(c)] -= sign * g;
                }
            }
        }
    }
    return s * inv;
}

}  // namespace detail

/// Mean over non-flagged maps of the valid-pixel L1 distance between y and flip_map(y).
inline SymmetryTerms symmetry_loss(std::span<const GeometricMap> y, std::span<const std::uint8_t> asymmetric) {
    if (y.size() != asymmetric.size())
        throw InvalidArgument("symmetry_loss: " + std::to_string(asymmetric.size()) + " flags for " +
                              std::to_string(y.size()) + " maps");
    SymmetryTerms t;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (asymmetric[i]) {
            ++t.excluded;
            continue;
        }
        ++t.included;
        t.value += detail::map_symmetry(y[i], nullptr, 1.0);
    }
    if (t.included) t.value /= static_cast<double>(t.included);
    t.all_excluded = t.included == 0;
    return t;
}

/// Gradient of symmetry_loss with respect to each map's data (flagged maps get zeros).
inline std::vector<std::vector<double>> symmetry_gradient(std::span<const GeometricMap> y,
                                                          std::span<const std::uint8_t> asymmetric) {
    const auto t = symmetry_loss(y, asymmetric);
    std::vector<std::vector<double>> g;
    for (std::size_t i = 0; i < y.size(); ++i) {
        g.emplace_back(y[i].data.size(), 0.0);
        if (!asymmetric[i]) detail::map_symmetry(y[i], &g.back(), 1.0 / static_cast<double>(t.included));
    }
    return g;
}

struct LossParts {
    /// l_adv from adversarial_terms.
    double adv = 0.0;
    ClassificationTerms cls_real;
    ClassificationTerms cls_fake;
    double cyc = 0.0;
    double rec = 0.0;
    double sym = 0.0;
};

struct TotalLosses {
    double l_d = 0.0;
    double l_g = 0.0;
};

/// Critic and generator objectives. The classification weight splits: lambda_cls_c on the
/// expression and gender terms, lambda_cls_m on age.
inline TotalLosses total_losses(const LossParts& p, const LossWeights& w = {}) {
    w.validate();
    const std::array<std::pair<const char*, double>, 12> named{{{"adv", p.adv},
                                                               {"cls_real.expression", p.cls_real.expression},
                                                               {"cls_real.gender", p.cls_real.gender},
                                                               {"cls_real.age", p.cls_real.age},
                                                               {"cls_fake.expression", p.cls_fake.expression},
                                                               {"cls_fake.gender", p.cls_fake.gender},
                                                               {"cls_fake.age", p.cls_fake.age},
                                                               {"cyc", p.cyc},
                                                               {"rec", p.rec},
                                                               {"sym", p.sym},
                                                               {"cls_real.total", p.cls_real.total},
                                                               {"cls_fake.total", p.cls_fake.total}}};
    for (const auto& [name, v] : named)
        if (!std::isfinite(v)) throw InvalidArgument(std::string("loss part '") + name + "' is not finite");
    auto cls = [&w](const ClassificationTerms& c) {
        return w.lambda_cls_c * (c.expression + c.gender) + w.lambda_cls_m * c.age;
    };
    TotalLosses t;
    t.l_d = -p.adv + cls(p.cls_real);
    t.l_g = p.adv + cls(p.cls_fake) + w.lambda_cyc * p.cyc + w.lambda_rec * p.rec + w.lambda_sym * p.sym;
    return t;
}

struct Augmentation {
    double scale = 1.0;
    /// Rotation about x, y, z in degrees.
    std::array<double, 3> euler_deg{0.0, 0.0, 0.0};

    /// scale * Rz * Ry * Rx.
    Mat3 matrix() const {
        constexpr double deg = std::numbers::pi / 180.0;
        const Mat3 r = (Eigen::AngleAxisd(euler_deg[2] * deg, Vec3::UnitZ()) *
                        Eigen::AngleAxisd(euler_deg[1] * deg, Vec3::UnitY()) *
                        Eigen::AngleAxisd(euler_deg[0] * deg, Vec3::UnitX()))
                           .toRotationMatrix();
        return scale * r;
    }
};

inline constexpr double kAugmentScaleLo = 0.9;
inline constexpr double kAugmentScaleHi = 1.1;
inline constexpr double kAugmentAngleDeg = 10.0;

inline Augmentation sample_augmentation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale(kAugmentScaleLo, kAugmentScaleHi);
    std::uniform_real_distribution<double> angle(-kAugmentAngleDeg, kAugmentAngleDeg);
    Augmentation a;
    a.scale = scale(rng);
    for (double& e : a.euler_deg) e = angle(rng);
    return a;
}

inline Augmentation sample_augmentation(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_augmentation(rng);
}

}  // namespace gmap
