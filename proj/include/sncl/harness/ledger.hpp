#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sncl/errors.hpp"

namespace sncl::harness {

using Matrix = std::vector<std::vector<double>>;

struct AccBwt {
    double acc = 0.0;
    double bwt = 0.0;
    bool bwt_defined = false;  // false for a single session, where bwt is reported as 0
};

/// ACC = mean of the last row; BWT = mean of A[T-1][i] - A[i][i] over i < T-1.
inline AccBwt acc_bwt(const Matrix& a) {
    if (a.empty()) throw UsageError("acc_bwt needs at least one session");
    const std::size_t t = a.size();
    for (std::size_t j = 0; j < t; ++j)
        if (a[j].size() < j + 1)
            throw UsageError("acc_bwt: row " + std::to_string(j) + " has " + std::to_string(a[j].size()) +
                             " entries, needs " + std::to_string(j + 1));
    AccBwt r;
    const auto& last = a.back();
    for (std::size_t i = 0; i < t; ++i) r.acc += last[i];
    r.acc /= static_cast<double>(t);
    if (t == 1) return r;
    for (std::size_t i = 0; i + 1 < t; ++i) r.bwt += last[i] - a[i][i];
    r.bwt /= static_cast<double>(t - 1);
    r.bwt_defined = true;
    return r;
}

/// Full S x S matrix with entry (j, i) = eval(session i, subnetwork of session
/// min(i, j)); sessions are numbered from 1 in the callback.
inline Matrix transfer_matrix(int sessions, const std::function<double(int data_session, int mask_session)>& eval) {
    if (sessions < 1) throw UsageError("transfer_matrix needs at least one session");
    Matrix m(static_cast<std::size_t>(sessions), std::vector<double>(static_cast<std::size_t>(sessions)));
    for (int j = 1; j <= sessions; ++j)
        for (int i = 1; i <= sessions; ++i)
            m[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(i - 1)] = eval(i, std::min(i, j));
    return m;
}

/// One point of a per-epoch training curve.
struct CurvePoint {
    int session = 0;
    int epoch = 0;
    double loss = 0.0;
    std::optional<double> metric;  // PSNR for video runs, filled every few epochs
};

/// Capacity and reuse of the subnetwork chosen in one session.
struct CapacityPoint {
    int session = 0;
    double capacity = 0.0;
    double cumulative = 0.0;
    double reuse = 0.0;
};

/// Metric matrix A[j][i] (session i evaluated after training session j) built
/// one row per session, plus per-epoch curves and capacity series.
class RunLedger {
public:
    explicit RunLedger(std::string metric = "accuracy") : metric_(std::move(metric)) {}

    const std::string& metric() const noexcept { return metric_; }
    const Matrix& matrix() const noexcept { return a_; }
    std::size_t sessions() const noexcept { return a_.size(); }

    /// Appends row j = sessions(); it must hold exactly j + 1 values.
    void append_row(std::vector<double> row) {
        if (row.size() != a_.size() + 1)
            throw UsageError("ledger row " + std::to_string(a_.size()) + " needs " + std::to_string(a_.size() + 1) +
                             " values, got " + std::to_string(row.size()));
        a_.push_back(std::move(row));
    }

    double at(std::size_t j, std::size_t i) const {
        if (j >= a_.size() || i > j) throw LookupError("ledger entry (" + std::to_string(j) + ", " + std::to_string(i) + ") is undefined");
        return a_[j][i];
    }

    AccBwt summary() const { return acc_bwt(a_); }

    std::vector<CurvePoint>& curves() noexcept { return curves_; }
    const std::vector<CurvePoint>& curves() const noexcept { return curves_; }
    std::vector<CapacityPoint>& capacity() noexcept { return capacity_; }
    const std::vector<CapacityPoint>& capacity() const noexcept { return capacity_; }

    /// Extra scalar results (e.g. all-class accuracy), keyed by name.
    std::map<std::string, double>& extras() noexcept { return extras_; }
    const std::map<std::string, double>& extras() const noexcept { return extras_; }

private:
    std::string metric_;
    Matrix a_;
    std::vector<CurvePoint> curves_;
    std::vector<CapacityPoint> capacity_;
    std::map<std::string, double> extras_;
};

}  // namespace sncl::harness
