#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "feel/random.hpp"

namespace feel::learning {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Global empirical risk L(w) = (1/n) sum over all samples of f(w, sample),
/// split across devices. Immutable after construction; every method is const
/// and safe to call concurrently.
class LearningTask {
public:
    virtual ~LearningTask() = default;

    [[nodiscard]] virtual std::size_t dimension() const = 0;
    [[nodiscard]] virtual std::size_t num_devices() const = 0;
    [[nodiscard]] virtual std::size_t dataset_size(std::size_t device) const = 0;

    [[nodiscard]] virtual double loss(const Vector& w) const = 0;
    [[nodiscard]] virtual Vector gradient(const Vector& w) const = 0;

    /// Mean sample-loss gradient over `samples` (indices into the device's data).
    [[nodiscard]] virtual Vector batch_gradient(std::size_t device, const Vector& w,
                                                std::span<const std::size_t> samples) const = 0;
    /// Mean sample-loss gradient over the device's whole dataset.
    [[nodiscard]] virtual Vector local_gradient(std::size_t device, const Vector& w) const = 0;

    [[nodiscard]] std::size_t total_size() const;
    [[nodiscard]] double weight(std::size_t device) const;  // n_m / n

    [[nodiscard]] const Vector& optimum() const { return optimum_; }
    [[nodiscard]] double optimum_loss() const { return optimum_loss_; }
    [[nodiscard]] double smoothness() const { return smoothness_; }
    [[nodiscard]] double strong_convexity() const { return strong_convexity_; }

    [[nodiscard]] double gap(const Vector& w) const { return loss(w) - optimum_loss_; }

protected:
    Vector optimum_;
    double optimum_loss_ = 0.0;
    double smoothness_ = 0.0;
    double strong_convexity_ = 0.0;
};

/// Device m holds centres c_j and a shared curvature A_m; its samples have
/// loss 1/2 (w - c_j)^T A_m (w - c_j).
struct QuadraticDevice {
    Matrix curvature;
    std::vector<Vector> centers;
};

class QuadraticTask final : public LearningTask {
public:
    explicit QuadraticTask(std::vector<QuadraticDevice> devices);

    [[nodiscard]] std::size_t dimension() const override { return dim_; }
    [[nodiscard]] std::size_t num_devices() const override { return devices_.size(); }
    [[nodiscard]] std::size_t dataset_size(std::size_t device) const override;

    [[nodiscard]] double loss(const Vector& w) const override;
    [[nodiscard]] Vector gradient(const Vector& w) const override;
    [[nodiscard]] Vector batch_gradient(std::size_t device, const Vector& w,
                                        std::span<const std::size_t> samples) const override;
    [[nodiscard]] Vector local_gradient(std::size_t device, const Vector& w) const override;

    [[nodiscard]] const Matrix& hessian() const { return hessian_; }

private:
    std::size_t dim_ = 0;
    std::vector<QuadraticDevice> devices_;
    std::vector<Vector> mean_center_;
    std::vector<double> spread_;  // (1/n_m) sum_j 1/2 (c_j - cbar)^T A (c_j - cbar)
    Matrix hessian_;
};

/// One labelled example, y in {-1, +1}.
struct LabeledSample {
    Vector x;
    double y = 1.0;
};

/// L2-regularised logistic regression:
/// f(w; x, y) = log(1 + exp(-y w^T x)) + l2/2 ||w||^2.
class LogisticTask final : public LearningTask {
public:
    LogisticTask(std::vector<std::vector<LabeledSample>> devices, double l2_reg);

    [[nodiscard]] std::size_t dimension() const override { return dim_; }
    [[nodiscard]] std::size_t num_devices() const override { return devices_.size(); }
    [[nodiscard]] std::size_t dataset_size(std::size_t device) const override;

    [[nodiscard]] double loss(const Vector& w) const override;
    [[nodiscard]] Vector gradient(const Vector& w) const override;
    [[nodiscard]] Vector batch_gradient(std::size_t device, const Vector& w,
                                        std::span<const std::size_t> samples) const override;
    [[nodiscard]] Vector local_gradient(std::size_t device, const Vector& w) const override;

    [[nodiscard]] double l2_reg() const { return l2_reg_; }
    [[nodiscard]] const std::vector<LabeledSample>& samples(std::size_t device) const;

private:
    [[nodiscard]] double sample_loss(const Vector& w, const LabeledSample& s) const;
    void accumulate_gradient(const Vector& w, const LabeledSample& s, Vector& out) const;

    std::size_t dim_ = 0;
    double l2_reg_ = 0.0;
    std::vector<std::vector<LabeledSample>> devices_;
};

/// Random quadratic instance. `heterogeneity` scales how far apart the device
/// optima sit and how much device curvatures differ; 0 gives identical devices.
std::shared_ptr<const QuadraticTask> make_quadratic_task(std::size_t dim,
                                                        std::span<const std::size_t> sizes,
                                                        double heterogeneity, Rng& rng);

/// Gaussian class-conditional features with device-skewed label balance.
/// label_skew in [0, 1]: 0 gives every device a 50/50 split.
std::shared_ptr<const LogisticTask> make_logistic_task(std::size_t dim,
                                                      std::span<const std::size_t> sizes,
                                                      double label_skew, double l2_reg, Rng& rng);

/// Per-device SGD estimate over a batch drawn uniformly without replacement.
/// batch_size == n_m returns the exact local gradient and consumes no randomness.
Vector local_gradient(const LearningTask& task, std::size_t device, const Vector& w,
                      std::size_t batch_size, Rng& rng);

/// (n_m / (n p_m)) g_m. Throws SchedulingError unless p_m > 0.
Vector scaled_upload(const Vector& gradient, std::size_t n_m, std::size_t n, double p_m);

/// eta(t) = chi / (t + nu).
struct StepSchedule {
    double chi = 1.0;
    double nu = 1.0;

    [[nodiscard]] double eta(std::size_t t) const;
    void validate() const;
    /// Throws AssumptionViolation unless 2 mu chi > 1.
    void require_contraction(double strong_convexity) const;
};

/// w - eta(t) * g.
Vector apply_update(const Vector& w, std::size_t t, const StepSchedule& schedule,
                    const Vector& scaled_gradient);

}  // namespace feel::learning
