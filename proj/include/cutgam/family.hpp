#pragma once

#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cutgam {

enum class FamilyKind { Gaussian, Binomial, Poisson };

/// Exponential family paired with its canonical link: gaussian-identity,
/// binomial-logit (0/1 responses) or poisson-log.
class Family {
public:
    constexpr explicit Family(FamilyKind kind = FamilyKind::Gaussian) : kind_(kind) {}

    static Family from_name(std::string_view name);

    [[nodiscard]] FamilyKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::string name() const;
    [[nodiscard]] bool has_free_scale() const noexcept { return kind_ == FamilyKind::Gaussian; }

    [[nodiscard]] double link(double mu) const;
    [[nodiscard]] double inverse_link(double eta) const;
    /// d mu / d eta
    [[nodiscard]] double mu_eta(double eta) const;
    [[nodiscard]] double variance(double mu) const;

    /// Starting mean used before the first IRLS step.
    [[nodiscard]] double initial_mean(double y) const;

    /// Throws Error(FamilyMismatch) when a response value is outside the support.
    void validate_response(std::span<const double> y) const;

    [[nodiscard]] double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const;

    /// Exact log-likelihood; the gaussian case plugs in the variance MLE RSS/n.
    [[nodiscard]] double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const;

    friend bool operator==(const Family&, const Family&) = default;

private:
    FamilyKind kind_;
};

}  // namespace cutgam
