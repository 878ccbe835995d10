#include <vector>
#include <algorithm>

std::vector<int> keep_small(const std::vector<int> &in, int limit)
{
    std::vector<int> out;
    std::copy_if(in.begin(), in.end(), std::back_inserter(out),
                 [limit](int v) {
                     return v < limit;
                 });
    return out;
}

int Matrix::at(int r, int c) const
{
    if (r < 0 || c < 0 || r >= rows_ || c >= cols_)
        throw std::out_of_range("Matrix::at");
    return data_[r * cols_ + c];
}
