#pragma once

#include <cstddef>
#include <vector>

#include "sncl/tensor.hpp"

namespace sncl {

/// Training and held-out data for one classification session. Labels are
/// session-local (0 .. num_classes-1) for task-incremental streams and global
/// class ids for class-incremental ones.
struct SessionDataset {
    int session = 0;
    std::size_t num_classes = 0;
    Tensor train_x;
    std::vector<int> train_y;
    Tensor test_x;
    std::vector<int> test_y;

    std::size_t train_size() const { return train_y.size(); }
    std::size_t test_size() const { return test_y.size(); }
};

/// Rows `idx` of a (N, ...) tensor.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    const std::size_t row = x.size() / x.dim(0);
    Shape s = x.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(x.data() + idx[i] * row, row, out.data() + i * row);
    return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

}  // namespace sncl
