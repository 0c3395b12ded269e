#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpl/error.hpp"

namespace hpl {

/// Time-stamped vector samples with linear interpolation between them.
/// Times are strictly increasing; when they are also evenly spaced lookups are O(1),
/// otherwise they fall back to binary search.
class HistoryBuffer {
public:
    explicit HistoryBuffer(Eigen::Index dim) : dim_(dim) {}

    void append(double t, const Eigen::Ref<const Eigen::VectorXd>& v) {
        if (v.size() != dim_) throw Error(Errc::invalid_argument, "history sample has wrong dimension");
        if (!times_.empty() && !(t > times_.back())) {
            throw Error(Errc::invalid_argument, "history times must be strictly increasing");
        }
        if (times_.size() == 1) {
            spacing_ = t - times_.back();
        } else if (times_.size() > 1 && uniform_ &&
                   std::abs((t - times_.back()) - spacing_) > 1e-9 * std::max(spacing_, 1e-300)) {
            uniform_ = false;
        }
        times_.push_back(t);
        data_.insert(data_.end(), v.data(), v.data() + dim_);
    }

    [[nodiscard]] bool empty() const noexcept { return times_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return dim_; }
    [[nodiscard]] double front_time() const { return times_.front(); }
    [[nodiscard]] double back_time() const { return times_.back(); }
    [[nodiscard]] double time(std::size_t i) const { return times_[i]; }
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> sample(std::size_t i) const {
        return {data_.data() + i * static_cast<std::size_t>(dim_), dim_};
    }
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> back() const { return sample(times_.size() - 1); }

    /// Linear interpolation at t. Queries before the first sample throw
    /// HistoryUnderflow; queries after the last sample return the last sample.
    void interpolate(double t, Eigen::Ref<Eigen::VectorXd> out) const {
        if (times_.empty()) throw Error(Errc::history_underflow, "empty history");
        if (t < times_.front() - 1e-12) {
            throw Error(Errc::history_underflow,
                        "lookup at t=" + std::to_string(t) + " precedes history start " + std::to_string(times_.front()));
        }
        if (t >= times_.back()) {
            out = back();
            return;
        }
        if (t <= times_.front()) {
            out = sample(0);
            return;
        }
        const std::size_t i = segment(t);
        const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
        out = (1.0 - w) * sample(i) + w * sample(i + 1);
    }

    [[nodiscard]] Eigen::VectorXd at(double t) const {
        Eigen::VectorXd v(dim_);
        interpolate(t, v);
        return v;
    }

    /// max |v(tau)|^2 over tau in [t0, t1]: interpolated end points plus every
    /// stored sample in between.
    [[nodiscard]] double sup_norm_sq(double t0, double t1) const {
        Eigen::VectorXd v(dim_);
        interpolate(t0, v);
        double best = v.squaredNorm();
        interpolate(t1, v);
        best = std::max(best, v.squaredNorm());
        const auto first = std::lower_bound(times_.begin(), times_.end(), t0);
        for (auto it = first; it != times_.end() && *it <= t1; ++it) {
            best = std::max(best, sample(static_cast<std::size_t>(it - times_.begin())).squaredNorm());
        }
        return best;
    }

private:
    /// Index i with times_[i] <= t < times_[i+1]; requires front < t < back.
    [[nodiscard]] std::size_t segment(double t) const {
        if (uniform_ && spacing_ > 0.0) {
            auto i = static_cast<std::size_t>((t - times_.front()) / spacing_);
            i = std::min(i, times_.size() - 2);
            while (i > 0 && times_[i] > t) --i;
            while (i + 2 < times_.size() && times_[i + 1] <= t) ++i;
            return i;
        }
        return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) - 1;
    }

    Eigen::Index dim_;
    std::vector<double> times_;
    std::vector<double> data_;
    double spacing_ = 0.0;
    bool uniform_ = true;
};

}  // namespace hpl
