#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include "vasg/serialize.hpp"

namespace vasg::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vasg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& text) const {
        write_text(path_ / name, text);
        return path_ / name;
    }

private:
    std::filesystem::path path_;
};

inline bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
    return read_bytes(a) == read_bytes(b);
}

}  // namespace vasg::test
