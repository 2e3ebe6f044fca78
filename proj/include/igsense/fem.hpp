#pragma once

// P1 Lagrange finite elements on a uniform triangulation of the unit square.
// Each grid square is split along its lower-left to upper-right diagonal into
// two positively oriented right triangles. Local matrices are closed-form
// (exact quadrature for P1 products).

#include <cmath>
#include <functional>
#include <vector>

#include "igsense/core.hpp"

namespace igsense {

struct UnitSquareMesh {
  int n = 0;                     // cells per side
  Mat nodes;                     // (n+1)^2 x 2 coordinates, lexicographic by (i, j)
  Eigen::MatrixX3i triangles;    // 2 n^2 rows
  Eigen::MatrixX2i boundary_edges;

  int node_index(int i, int j) const { return j * (n + 1) + i; }
  int n_nodes() const { return (n + 1) * (n + 1); }

  static UnitSquareMesh uniform(int n) {
    if (n < 1) throw ConfigError("UnitSquareMesh: need at least one cell per side");
    UnitSquareMesh mesh;
    mesh.n = n;
    const int nn = (n + 1) * (n + 1);
    mesh.nodes.resize(nn, 2);
    const double h = 1.0 / n;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        mesh.nodes(mesh.node_index(i, j), 0) = i * h;
        mesh.nodes(mesh.node_index(i, j), 1) = j * h;
      }

    mesh.triangles.resize(2 * n * n, 3);
    int t = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int v00 = mesh.node_index(i, j);
        const int v10 = mesh.node_index(i + 1, j);
        const int v01 = mesh.node_index(i, j + 1);
        const int v11 = mesh.node_index(i + 1, j + 1);
        mesh.triangles.row(t++) << v00, v10, v11;  // lower triangle
        mesh.triangles.row(t++) << v00, v11, v01;  // upper triangle
      }

    mesh.boundary_edges.resize(4 * n, 2);
    int e = 0;
    for (int i = 0; i < n; ++i) mesh.boundary_edges.row(e++) << mesh.node_index(i, 0), mesh.node_index(i + 1, 0);
    for (int j = 0; j < n; ++j) mesh.boundary_edges.row(e++) << mesh.node_index(n, j), mesh.node_index(n, j + 1);
    for (int i = 0; i < n; ++i) mesh.boundary_edges.row(e++) << mesh.node_index(i + 1, n), mesh.node_index(i, n);
    for (int j = 0; j < n; ++j) mesh.boundary_edges.row(e++) << mesh.node_index(0, j + 1), mesh.node_index(0, j);
    return mesh;
  }
};

struct P1Assembly {
  SpMat stiffness;      // K_ij = int grad(phi_i) . grad(phi_j)
  SpMat mass;           // M_ij = int phi_i phi_j
  SpMat boundary_mass;  // Mb_ij = int_{boundary} phi_i phi_j

  static P1Assembly assemble(const UnitSquareMesh& mesh) {
    const int nn = mesh.n_nodes();
    std::vector<Eigen::Triplet<double>> tk, tm, tb;
    tk.reserve(9 * mesh.triangles.rows());
    tm.reserve(9 * mesh.triangles.rows());

    for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
      const int v[3] = {mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
      const double x[3] = {mesh.nodes(v[0], 0), mesh.nodes(v[1], 0), mesh.nodes(v[2], 0)};
      const double y[3] = {mesh.nodes(v[0], 1), mesh.nodes(v[1], 1), mesh.nodes(v[2], 1)};
      const double area =
          0.5 * ((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]));
      // grad(phi_i) = (b_i, c_i) / (2 area), indices cyclic
      double b[3], c[3];
      for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3, k = (i + 2) % 3;
        b[i] = y[j] - y[k];
        c[i] = x[k] - x[j];
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          tk.emplace_back(v[i], v[j], (b[i] * b[j] + c[i] * c[j]) / (4.0 * area));
          tm.emplace_back(v[i], v[j], area / 12.0 * (i == j ? 2.0 : 1.0));
        }
    }

    for (Eigen::Index e = 0; e < mesh.boundary_edges.rows(); ++e) {
      const int a = mesh.boundary_edges(e, 0), b2 = mesh.boundary_edges(e, 1);
      const double len = (mesh.nodes.row(a) - mesh.nodes.row(b2)).norm();
      tb.emplace_back(a, a, len / 3.0);
      tb.emplace_back(b2, b2, len / 3.0);
      tb.emplace_back(a, b2, len / 6.0);
      tb.emplace_back(b2, a, len / 6.0);
    }

    P1Assembly out;
    out.stiffness.resize(nn, nn);
    out.mass.resize(nn, nn);
    out.boundary_mass.resize(nn, nn);
    out.stiffness.setFromTriplets(tk.begin(), tk.end());
    out.mass.setFromTriplets(tm.begin(), tm.end());
    out.boundary_mass.setFromTriplets(tb.begin(), tb.end());
    return out;
  }
};

// Point evaluation by barycentric interpolation within the containing
// triangle; each row has at most three nonnegative weights summing to one.
// Points must lie strictly inside the domain.
inline SpMat interpolation_matrix(const UnitSquareMesh& mesh, const Mat& points) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const double px = points(r, 0), py = points(r, 1);
    if (!(px > 0.0 && px < 1.0 && py > 0.0 && py < 1.0))
      throw InvalidObservationPoint("observation point (" + std::to_string(px) + ", " +
                                    std::to_string(py) + ") is not strictly inside the unit square");
    const int ci = std::min(static_cast<int>(px * mesh.n), mesh.n - 1);
    const int cj = std::min(static_cast<int>(py * mesh.n), mesh.n - 1);
    const double fx = px * mesh.n - ci;
    const double fy = py * mesh.n - cj;
    const int v00 = mesh.node_index(ci, cj);
    const int v10 = mesh.node_index(ci + 1, cj);
    const int v01 = mesh.node_index(ci, cj + 1);
    const int v11 = mesh.node_index(ci + 1, cj + 1);
    if (fx >= fy) {  // lower triangle (v00, v10, v11)
      trip.emplace_back(r, v00, 1.0 - fx);
      trip.emplace_back(r, v10, fx - fy);
      trip.emplace_back(r, v11, fy);
    } else {  // upper triangle (v00, v11, v01)
      trip.emplace_back(r, v00, 1.0 - fy);
      trip.emplace_back(r, v11, fx);
      trip.emplace_back(r, v01, fy - fx);
    }
  }
  SpMat q(points.rows(), mesh.n_nodes());
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

inline Vec nodal_interpolate(const UnitSquareMesh& mesh,
                             const std::function<double(double, double)>& f) {
  Vec v(mesh.n_nodes());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f(mesh.nodes(i, 0), mesh.nodes(i, 1));
  return v;
}

}  // namespace igsense
