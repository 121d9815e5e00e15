#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "cowal/error.hpp"
#include "cowal/matrix.hpp"
#include "cowal/rng.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "cowal";
        path_ = fs::temp_directory_path() / ("cowal_" + name + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    fs::path path_;
};

inline cowal::Matrix<double> gaussian(std::size_t rows, std::size_t cols, cowal::Rng& rng, double sd = 1.0) {
    cowal::Matrix<double> m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

} // namespace testing_support

// Asserts that `stmt` throws cowal::Error carrying `code`.
#define EXPECT_COWAL_ERROR(stmt, want)                                                    \
    do {                                                                                  \
        try {                                                                             \
            stmt;                                                                         \
            ADD_FAILURE() << "expected " << cowal::errc_name(want) << ", nothing thrown"; \
        } catch (const cowal::Error& e_) {                                                \
            EXPECT_EQ(e_.code(), want) << e_.what();                                      \
        }                                                                                 \
    } while (0)
