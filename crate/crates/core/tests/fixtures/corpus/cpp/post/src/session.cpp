#include <string>
#include <vector>
#include <algorithm>

namespace net {

class Session {
public:
    explicit Session(int fd) : fd_(fd) {}
    ~Session() { close(); }

    void close() {
        delete[] buffer_;
        buffer_ = nullptr;
    }

    std::string read(size_t n) {
        n = std::min(n, size_);
        return std::string(buffer_, buffer_ + n);
    }

private:
    int fd_;
    char *buffer_ = nullptr;
    size_t size_ = 0;
};

}  // namespace net
