#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace llmrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixRef = Eigen::Ref<Matrix>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;

// Internal ids are contiguous indices into the dataset's user/item tables.
using UserId = std::int32_t;
using ItemId = std::int32_t;

inline constexpr UserId kNoUser = -1;
inline constexpr ItemId kNoItem = -1;

/// Bad input from the outside world (files, config, CLI). Maps to exit code 2.
class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace llmrank
