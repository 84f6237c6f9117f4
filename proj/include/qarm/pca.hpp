#pragma once

#include "qarm/mat.hpp"

namespace qarm {

// Projects mean-centered rows of X onto the top-2 principal components.
// Component signs are fixed so the largest-magnitude loading is positive,
// making the output deterministic. Requires N >= 2.
Mat pca_project_2d(const Mat& X);

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// eigenvalues (ascending-index order matching columns of the returned
// eigenvector matrix). Exposed for tests.
void jacobi_eigen(const Mat& sym, std::vector<double>& eigenvalues,
                  Mat& eigenvectors);

}  // namespace qarm
