#pragma once

#include <array>

namespace lungcadex::eval::reference {

// Published LIDC/LUNGx results. They need the original datasets and pretrained
// weights, so they are kept for comparison only.

struct Table1Row {
  const char* network;
  double auc, accuracy, sensitivity, specificity;
};

inline constexpr int kLidcTestNodules = 264;
inline constexpr Table1Row kLidcOurs{"Ours(N=264)", 0.69, 0.71, 0.86, 0.56};
inline constexpr Table1Row kLungxOurs{"Ours", 0.656, 70.59, 66.67, 73.33};

/// Columns k = 1..9.
inline constexpr std::array<double, 9> kAblationAuc{0.621, 0.721, 0.765, 0.698, 0.698, 0.748, 0.763, 0.792, 0.810};
inline constexpr std::array<double, 9> kAblationSensitivity{86.67, 73.33, 66.67, 100.00, 86.77,
                                                            80.00, 66.67, 66.67, 66.67};
inline constexpr std::array<double, 9> kAblationSpecificity{37.50, 68.62, 75.00, 50.00, 56.33,
                                                            56.33, 62.50, 62.50, 62.50};
inline constexpr std::array<double, 9> kAblationF1{68.40, 70.96, 68.95, 78.94, 74.25, 70.58, 64.50, 64.50, 64.50};
inline constexpr std::array<double, 9> kAblationAccuracy{61.29, 70.96, 70.96, 74.16, 70.96,
                                                         67.74, 64.51, 64.50, 64.50};
inline constexpr int kPickedK = 5;

}  // namespace lungcadex::eval::reference
