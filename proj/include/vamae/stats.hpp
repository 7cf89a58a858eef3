#pragma once

#include <vector>

namespace vamae::stats {

double mean(const std::vector<double>& v);
/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double stddev(const std::vector<double>& v);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// Student t cumulative distribution.
double student_t_cdf(double t, double df);

struct TTestResult {
    double t = 0.0;
    double p_value = 1.0;
    int df = 0;
    /// Differences have zero variance; p is 1 when they are all zero and 0 otherwise.
    bool degenerate = false;
};

/// Two-sided paired t-test, df = n - 1.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// (mean(a) - mean(b)) / pooled SD. Throws when the pooled variance is zero
/// and the means differ.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

/// p < alpha / comparisons.
bool bonferroni_significant(double p_value, int comparisons, double alpha = 0.01);

}  // namespace vamae::stats
