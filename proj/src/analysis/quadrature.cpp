#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "benn/analysis/analysis.hpp"
#include "benn/common/error.hpp"

namespace benn {
namespace {

// Kronrod abscissae (descending, last is the centre) and weights; Gauss
// weights belong to the odd-indexed abscissae.
constexpr std::array<double, 8> kXgk = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                        0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kWgk = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Piece {
  double a, b, value, error;
};

Piece gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = kWgk[7] * fc;
  double gauss = kWg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const double s = f(c - dx) + f(c + dx);
    kron += kWgk[j] * s;
    if (j % 2 == 1) gauss += kWg[j / 2] * s;
  }
  return {a, b, kron * h, std::abs((kron - gauss) * h)};
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, std::span<const double> breakpoints,
                 double abs_tol, double rel_tol) {
  if (a == b) return 0.0;
  if (!(a < b)) throw UsageError("integrate: need a < b");
  std::vector<double> cuts{a};
  for (double p : breakpoints) {
    if (p > a && p < b) cuts.push_back(p);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Global adaptive scheme: repeatedly bisect the piece with the largest
  // error estimate.
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) pieces.push_back(gk15(f, cuts[i], cuts[i + 1]));
  auto by_error = [](const Piece& x, const Piece& y) { return x.error < y.error; };
  std::make_heap(pieces.begin(), pieces.end(), by_error);
  constexpr std::size_t kMaxPieces = 20000;
  for (;;) {
    double value = 0.0, error = 0.0;
    for (const auto& p : pieces) {
      value += p.value;
      error += p.error;
    }
    if (error <= std::max(abs_tol, rel_tol * std::abs(value))) return value;
    if (pieces.size() >= kMaxPieces) {
      throw NumericalError("integrate: tolerance not reached (error estimate " + std::to_string(error) + ")");
    }
    std::pop_heap(pieces.begin(), pieces.end(), by_error);
    const Piece worst = pieces.back();
    pieces.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    pieces.push_back(gk15(f, worst.a, mid));
    std::push_heap(pieces.begin(), pieces.end(), by_error);
    pieces.push_back(gk15(f, mid, worst.b));
    std::push_heap(pieces.begin(), pieces.end(), by_error);
  }
}

}  // namespace benn
