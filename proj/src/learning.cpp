#include "feel/learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "feel/error.hpp"

namespace feel::learning {

namespace {

constexpr double kOptimumGradTol = 1.0e-10;
constexpr std::size_t kMaxDescentIters = 1'000'000;

void check_device(std::size_t device, std::size_t count) {
    if (device >= count) {
        throw InvalidArgument("device index " + std::to_string(device) + " out of range (" +
                              std::to_string(count) + " devices)");
    }
}

Vector gaussian_vector(std::size_t dim, Rng& rng) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = standard_normal(rng);
    return v;
}

Matrix random_rotation(std::size_t dim, Rng& rng) {
    Matrix g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) = gaussian_vector(dim, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ();
}

// Numerically stable log(1 + exp(z)).
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

std::size_t LearningTask::total_size() const {
    std::size_t n = 0;
    for (std::size_t m = 0; m < num_devices(); ++m) n += dataset_size(m);
    return n;
}

double LearningTask::weight(std::size_t device) const {
    return static_cast<double>(dataset_size(device)) / static_cast<double>(total_size());
}

// ---------------------------------------------------------------------------
// QuadraticTask

QuadraticTask::QuadraticTask(std::vector<QuadraticDevice> devices) : devices_(std::move(devices)) {
    if (devices_.empty()) throw ConstructionError("quadratic task needs at least one device");
    dim_ = static_cast<std::size_t>(devices_.front().curvature.rows());
    if (dim_ == 0) throw ConstructionError("quadratic task needs dim >= 1");

    std::size_t n = 0;
    for (const auto& d : devices_) {
        if (d.curvature.rows() != static_cast<Eigen::Index>(dim_) ||
            d.curvature.cols() != static_cast<Eigen::Index>(dim_)) {
            throw ConstructionError("curvature matrices must be dim x dim");
        }
        if (d.centers.empty()) throw ConstructionError("every device needs at least one sample");
        for (const auto& c : d.centers) {
            if (c.size() != static_cast<Eigen::Index>(dim_)) {
                throw ConstructionError("sample centre has wrong dimension");
            }
        }
        n += d.centers.size();
    }

    const Eigen::Index dim = static_cast<Eigen::Index>(dim_);
    hessian_ = Matrix::Zero(dim, dim);
    Vector rhs = Vector::Zero(dim);
    for (const auto& d : devices_) {
        Vector mean = Vector::Zero(dim);
        for (const auto& c : d.centers) mean += c;
        mean /= static_cast<double>(d.centers.size());
        double spread = 0.0;
        for (const auto& c : d.centers) {
            const Vector r = c - mean;
            spread += 0.5 * r.dot(d.curvature * r);
        }
        spread /= static_cast<double>(d.centers.size());

        const double w = static_cast<double>(d.centers.size()) / static_cast<double>(n);
        hessian_ += w * d.curvature;
        rhs += w * (d.curvature * mean);
        mean_center_.push_back(std::move(mean));
        spread_.push_back(spread);
    }
    hessian_ = 0.5 * (hessian_ + hessian_.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian_);
    if (eig.info() != Eigen::Success) throw ConstructionError("eigendecomposition failed");
    strong_convexity_ = eig.eigenvalues().minCoeff();
    smoothness_ = eig.eigenvalues().maxCoeff();
    if (!(strong_convexity_ > 1.0e-12 * std::max(1.0, smoothness_))) {
        throw ConstructionError("average Hessian is singular; task is not strongly convex");
    }
    optimum_ = eig.eigenvectors() *
               (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * rhs));
    optimum_loss_ = loss(optimum_);
}

std::size_t QuadraticTask::dataset_size(std::size_t device) const {
    check_device(device, devices_.size());
    return devices_[device].centers.size();
}

double QuadraticTask::loss(const Vector& w) const {
    const double n = static_cast<double>(total_size());
    double total = 0.0;
    for (std::size_t m = 0; m < devices_.size(); ++m) {
        const Vector r = w - mean_center_[m];
        const double local = 0.5 * r.dot(devices_[m].curvature * r) + spread_[m];
        total += static_cast<double>(devices_[m].centers.size()) / n * local;
    }
    return total;
}

Vector QuadraticTask::gradient(const Vector& w) const {
    Vector g = Vector::Zero(w.size());
    for (std::size_t m = 0; m < devices_.size(); ++m) g += weight(m) * local_gradient(m, w);
    return g;
}

Vector QuadraticTask::batch_gradient(std::size_t device, const Vector& w,
                                     std::span<const std::size_t> samples) const {
    check_device(device, devices_.size());
    if (samples.empty()) throw InvalidArgument("empty batch");
    const auto& d = devices_[device];
    Vector mean = Vector::Zero(w.size());
    for (std::size_t j : samples) {
        if (j >= d.centers.size()) throw InvalidArgument("sample index out of range");
        mean += d.centers[j];
    }
    mean /= static_cast<double>(samples.size());
    return d.curvature * (w - mean);
}

Vector QuadraticTask::local_gradient(std::size_t device, const Vector& w) const {
    check_device(device, devices_.size());
    return devices_[device].curvature * (w - mean_center_[device]);
}

std::shared_ptr<const QuadraticTask> make_quadratic_task(std::size_t dim,
                                                        std::span<const std::size_t> sizes,
                                                        double heterogeneity, Rng& rng) {
    if (dim == 0) throw InvalidArgument("dim must be >= 1");
    if (sizes.empty()) throw InvalidArgument("at least one device");
    if (!(heterogeneity >= 0.0)) throw InvalidArgument("heterogeneity must be >= 0");

    const Eigen::Index d = static_cast<Eigen::Index>(dim);
    std::vector<QuadraticDevice> devices;
    devices.reserve(sizes.size());
    for (std::size_t size : sizes) {
        if (size == 0) throw InvalidArgument("dataset sizes must be >= 1");
        const Matrix rot = random_rotation(dim, rng);
        Vector spectrum(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            // log-uniform in [1/(1+h), 1+h]
            const double span = std::log1p(heterogeneity);
            spectrum(i) = std::exp(span * (2.0 * uniform01(rng) - 1.0));
        }
        QuadraticDevice dev;
        dev.curvature = rot * spectrum.asDiagonal() * rot.transpose();
        dev.curvature = 0.5 * (dev.curvature + dev.curvature.transpose());
        const Vector drift = heterogeneity * gaussian_vector(dim, rng);
        dev.centers.reserve(size);
        for (std::size_t j = 0; j < size; ++j) dev.centers.push_back(drift + gaussian_vector(dim, rng));
        devices.push_back(std::move(dev));
    }
    return std::make_shared<const QuadraticTask>(std::move(devices));
}

// ---------------------------------------------------------------------------
// LogisticTask

LogisticTask::LogisticTask(std::vector<std::vector<LabeledSample>> devices, double l2_reg)
    : l2_reg_(l2_reg), devices_(std::move(devices)) {
    if (!(l2_reg_ > 0.0)) throw InvalidArgument("l2_reg must be > 0");
    if (devices_.empty()) throw ConstructionError("logistic task needs at least one device");
    dim_ = 0;
    for (const auto& d : devices_) {
        if (d.empty()) throw ConstructionError("every device needs at least one sample");
        for (const auto& s : d) {
            if (dim_ == 0) dim_ = static_cast<std::size_t>(s.x.size());
            if (s.x.size() != static_cast<Eigen::Index>(dim_) || dim_ == 0) {
                throw ConstructionError("inconsistent feature dimension");
            }
            if (s.y != 1.0 && s.y != -1.0) throw ConstructionError("labels must be +1 or -1");
        }
    }

    // Hessian is (1/n) sum s'(.) x x^T + l2 I with s' <= 1/4.
    const Eigen::Index d = static_cast<Eigen::Index>(dim_);
    Matrix second_moment = Matrix::Zero(d, d);
    std::size_t n = 0;
    for (const auto& dev : devices_) {
        for (const auto& s : dev) second_moment.noalias() += s.x * s.x.transpose();
        n += dev.size();
    }
    second_moment /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(second_moment, Eigen::EigenvaluesOnly);
    smoothness_ = eig.eigenvalues().maxCoeff() / 4.0 + l2_reg_;
    strong_convexity_ = l2_reg_;

    Vector w = Vector::Zero(d);
    const double step = 1.0 / smoothness_;
    std::size_t it = 0;
    for (Vector g = gradient(w); g.norm() >= kOptimumGradTol; g = gradient(w)) {
        if (++it > kMaxDescentIters) {
            throw ConstructionError("gradient descent for the optimum did not reach tolerance");
        }
        w -= step * g;
    }
    optimum_ = std::move(w);
    optimum_loss_ = loss(optimum_);
}

std::size_t LogisticTask::dataset_size(std::size_t device) const {
    check_device(device, devices_.size());
    return devices_[device].size();
}

const std::vector<LabeledSample>& LogisticTask::samples(std::size_t device) const {
    check_device(device, devices_.size());
    return devices_[device];
}

double LogisticTask::sample_loss(const Vector& w, const LabeledSample& s) const {
    return softplus(-s.y * w.dot(s.x));
}

void LogisticTask::accumulate_gradient(const Vector& w, const LabeledSample& s, Vector& out) const {
    out += (-s.y * sigmoid(-s.y * w.dot(s.x))) * s.x;
}

double LogisticTask::loss(const Vector& w) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& dev : devices_) {
        for (const auto& s : dev) total += sample_loss(w, s);
        n += dev.size();
    }
    return total / static_cast<double>(n) + 0.5 * l2_reg_ * w.squaredNorm();
}

Vector LogisticTask::gradient(const Vector& w) const {
    Vector g = Vector::Zero(w.size());
    std::size_t n = 0;
    for (const auto& dev : devices_) {
        for (const auto& s : dev) accumulate_gradient(w, s, g);
        n += dev.size();
    }
    return g / static_cast<double>(n) + l2_reg_ * w;
}

Vector LogisticTask::batch_gradient(std::size_t device, const Vector& w,
                                    std::span<const std::size_t> samples) const {
    check_device(device, devices_.size());
    if (samples.empty()) throw InvalidArgument("empty batch");
    const auto& dev = devices_[device];
    Vector g = Vector::Zero(w.size());
    for (std::size_t j : samples) {
        if (j >= dev.size()) throw InvalidArgument("sample index out of range");
        accumulate_gradient(w, dev[j], g);
    }
    return g / static_cast<double>(samples.size()) + l2_reg_ * w;
}

Vector LogisticTask::local_gradient(std::size_t device, const Vector& w) const {
    check_device(device, devices_.size());
    Vector g = Vector::Zero(w.size());
    for (const auto& s : devices_[device]) accumulate_gradient(w, s, g);
    return g / static_cast<double>(devices_[device].size()) + l2_reg_ * w;
}

std::shared_ptr<const LogisticTask> make_logistic_task(std::size_t dim,
                                                      std::span<const std::size_t> sizes,
                                                      double label_skew, double l2_reg, Rng& rng) {
    if (dim == 0) throw InvalidArgument("dim must be >= 1");
    if (sizes.empty()) throw InvalidArgument("at least one device");
    if (!(label_skew >= 0.0 && label_skew <= 1.0)) throw InvalidArgument("label_skew must be in [0, 1]");
    if (!(l2_reg > 0.0)) throw InvalidArgument("l2_reg must be > 0");

    Vector direction = gaussian_vector(dim, rng);
    direction /= direction.norm();

    const std::size_t m_count = sizes.size();
    std::vector<std::vector<LabeledSample>> devices(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        if (sizes[m] == 0) throw InvalidArgument("dataset sizes must be >= 1");
        const double position =
            m_count > 1 ? 2.0 * static_cast<double>(m) / static_cast<double>(m_count - 1) - 1.0 : 0.0;
        const double positive_rate = 0.5 + 0.5 * label_skew * position;
        devices[m].reserve(sizes[m]);
        for (std::size_t j = 0; j < sizes[m]; ++j) {
            LabeledSample s;
            s.y = uniform01(rng) < positive_rate ? 1.0 : -1.0;
            s.x = s.y * direction + gaussian_vector(dim, rng);
            devices[m].push_back(std::move(s));
        }
    }
    return std::make_shared<const LogisticTask>(std::move(devices), l2_reg);
}

// ---------------------------------------------------------------------------
// SGD plumbing

Vector local_gradient(const LearningTask& task, std::size_t device, const Vector& w,
                      std::size_t batch_size, Rng& rng) {
    const std::size_t n_m = task.dataset_size(device);
    if (batch_size == 0 || batch_size > n_m) {
        throw InvalidArgument("batch_size must be in [1, n_m]");
    }
    if (batch_size == n_m) return task.local_gradient(device, w);

    // Partial Fisher-Yates: the first batch_size slots are a uniform subset.
    std::vector<std::size_t> idx(n_m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t j = i + uniform_index(rng, n_m - i);
        std::swap(idx[i], idx[j]);
    }
    return task.batch_gradient(device, w, std::span<const std::size_t>(idx.data(), batch_size));
}

Vector scaled_upload(const Vector& gradient, std::size_t n_m, std::size_t n, double p_m) {
    if (!(p_m > 0.0)) {
        throw SchedulingError("scaled_upload from a device with scheduling probability " +
                              std::to_string(p_m));
    }
    if (n == 0) throw InvalidArgument("total dataset size must be >= 1");
    return (static_cast<double>(n_m) / (static_cast<double>(n) * p_m)) * gradient;
}

double StepSchedule::eta(std::size_t t) const {
    const double denom = static_cast<double>(t) + nu;
    if (!(denom > 0.0)) throw InvalidArgument("t + nu must be > 0");
    return chi / denom;
}

void StepSchedule::validate() const {
    if (!(chi > 0.0)) throw InvalidArgument("chi must be > 0");
    if (!(nu >= 0.0)) throw InvalidArgument("nu must be >= 0");
}

void StepSchedule::require_contraction(double strong_convexity) const {
    if (!(2.0 * strong_convexity * chi > 1.0)) {
        throw AssumptionViolation("step schedule needs 2*mu*chi > 1 (mu=" +
                                  std::to_string(strong_convexity) + ", chi=" + std::to_string(chi) +
                                  ")");
    }
}

Vector apply_update(const Vector& w, std::size_t t, const StepSchedule& schedule,
                    const Vector& scaled_gradient) {
    return w - schedule.eta(t) * scaled_gradient;
}

}  // namespace feel::learning
