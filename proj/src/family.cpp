#include "cutgam/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cutgam/error.hpp"

namespace cutgam {

namespace {

constexpr double kEtaBound = 700.0;
constexpr double kProbEps = 1e-15;

double y_log_y_over(double y, double mu) { return y > 0.0 ? y * std::log(y / mu) : 0.0; }

}  // namespace

Family Family::from_name(std::string_view name) {
    if (name == "gaussian") return Family(FamilyKind::Gaussian);
    if (name == "binomial") return Family(FamilyKind::Binomial);
    if (name == "poisson") return Family(FamilyKind::Poisson);
    throw Error(ErrorCode::InvalidArgument, "unknown family '" + std::string(name) + "'");
}

std::string Family::name() const {
    switch (kind_) {
        case FamilyKind::Gaussian: return "gaussian";
        case FamilyKind::Binomial: return "binomial";
        case FamilyKind::Poisson: return "poisson";
    }
    return "unknown";
}

double Family::link(double mu) const {
    switch (kind_) {
        case FamilyKind::Gaussian: return mu;
        case FamilyKind::Binomial: return std::log(mu / (1.0 - mu));
        case FamilyKind::Poisson: return std::log(mu);
    }
    return mu;
}

double Family::inverse_link(double eta) const {
    switch (kind_) {
        case FamilyKind::Gaussian: return eta;
        case FamilyKind::Binomial: {
            const double p = 1.0 / (1.0 + std::exp(-std::clamp(eta, -kEtaBound, kEtaBound)));
            return std::clamp(p, kProbEps, 1.0 - kProbEps);
        }
        case FamilyKind::Poisson:
            return std::max(std::exp(std::min(eta, kEtaBound)), 1e-300);
    }
    return eta;
}

double Family::mu_eta(double eta) const {
    switch (kind_) {
        case FamilyKind::Gaussian: return 1.0;
        case FamilyKind::Binomial: {
            const double p = inverse_link(eta);
            return std::max(p * (1.0 - p), 1e-300);
        }
        case FamilyKind::Poisson: return inverse_link(eta);
    }
    return 1.0;
}

double Family::variance(double mu) const {
    switch (kind_) {
        case FamilyKind::Gaussian: return 1.0;
        case FamilyKind::Binomial: return std::max(mu * (1.0 - mu), 1e-300);
        case FamilyKind::Poisson: return std::max(mu, 1e-300);
    }
    return 1.0;
}

double Family::initial_mean(double y) const {
    switch (kind_) {
        case FamilyKind::Gaussian: return y;
        case FamilyKind::Binomial: return (y + 0.5) / 2.0;
        case FamilyKind::Poisson: return y + 0.1;
    }
    return y;
}

void Family::validate_response(std::span<const double> y) const {
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = y[i];
        bool ok = std::isfinite(v);
        if (ok && kind_ == FamilyKind::Binomial) ok = (v == 0.0 || v == 1.0);
        if (ok && kind_ == FamilyKind::Poisson) ok = (v >= 0.0 && v == std::floor(v));
        if (!ok) {
            std::ostringstream msg;
            msg << "response value " << v << " at row " << i << " is outside the "
                << name() << " support";
            throw Error(ErrorCode::FamilyMismatch, msg.str());
        }
    }
}

double Family::deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double yi = y[i];
        const double mi = mu[i];
        switch (kind_) {
            case FamilyKind::Gaussian: dev += (yi - mi) * (yi - mi); break;
            case FamilyKind::Binomial:
                dev += 2.0 * (y_log_y_over(yi, mi) + y_log_y_over(1.0 - yi, 1.0 - mi));
                break;
            case FamilyKind::Poisson: dev += 2.0 * (y_log_y_over(yi, mi) - (yi - mi)); break;
        }
    }
    return dev;
}

double Family::log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const {
    const double n = static_cast<double>(y.size());
    switch (kind_) {
        case FamilyKind::Gaussian: {
            const double sigma2 = (y - mu).squaredNorm() / n;
            return -0.5 * n * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0);
        }
        case FamilyKind::Binomial: {
            double ll = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i)
                ll += y[i] > 0.5 ? std::log(mu[i]) : std::log1p(-mu[i]);
            return ll;
        }
        case FamilyKind::Poisson: {
            double ll = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double yi = y[i];
                ll += (yi > 0.0 ? yi * std::log(mu[i]) : 0.0) - mu[i] - std::lgamma(yi + 1.0);
            }
            return ll;
        }
    }
    return 0.0;
}

}  // namespace cutgam
