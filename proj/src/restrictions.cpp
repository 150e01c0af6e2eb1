#include "rvar/restrictions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "rvar/rng.hpp"

namespace rvar {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Provisional labelling of beta entries; turned into a ParameterLayout by
// renumbering labels in order of their smallest member index.
struct Labelling {
  ModelShape shape;
  std::vector<long long> label;  // < 0 means fixed
  std::vector<double> fixed_value;

  explicit Labelling(ModelShape s)
      : shape(s), label(static_cast<std::size_t>(s.N()), -1), fixed_value(static_cast<std::size_t>(s.N()), 0.0) {}

  void set_free(int idx, long long l) { label[idx] = l; }
  void set_fixed(int idx, double v) {
    label[idx] = -1;
    fixed_value[idx] = v;
  }

  ParameterLayout finish() const {
    ParameterLayout out;
    out.shape = shape;
    out.column.assign(label.size(), -1);
    out.gamma = Eigen::VectorXd::Zero(shape.N());
    std::unordered_map<long long, int> renumber;
    for (std::size_t j = 0; j < label.size(); ++j) {
      if (label[j] < 0) {
        out.gamma[static_cast<Eigen::Index>(j)] = fixed_value[j];
        continue;
      }
      auto [it, inserted] = renumber.try_emplace(label[j], static_cast<int>(renumber.size()));
      out.column[j] = it->second;
    }
    out.m = static_cast<int>(renumber.size());
    return out;
  }
};

ParameterLayout compile_impl(const RestrictionPattern& pattern);

ParameterLayout compile_companion(const CompanionVarP& p) {
  const int d0 = p.d0;
  const int d = d0 * p.p;
  ParameterLayout inner = p.inner ? compile_impl(*p.inner) : compile_impl(Unrestricted{d0});
  Labelling lab({d, d});
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const int idx = beta_index(r, c, d);
      if (r < d0) {
        const int lag = c / d0;
        const int inner_idx = beta_index(r, c % d0, d0);
        const int col = inner.column[inner_idx];
        if (col >= 0) {
          lab.set_free(idx, static_cast<long long>(lag) * inner.m + col);
        } else {
          lab.set_fixed(idx, inner.gamma[inner_idx]);
        }
      } else {
        lab.set_fixed(idx, c == r - d0 ? 1.0 : 0.0);
      }
    }
  }
  return lab.finish();
}

ParameterLayout compile_impl(const RestrictionPattern& pattern) {
  validate(pattern);
  return std::visit(
      overloaded{
          [](const Unrestricted& p) {
            Labelling lab({p.d, p.d});
            for (int j = 0; j < p.d * p.d; ++j) lab.set_free(j, j);
            return lab.finish();
          },
          [](const Banded& p) {
            Labelling lab({p.d, p.d});
            for (int r = 0; r < p.d; ++r)
              for (int c = 0; c < p.d; ++c) {
                const int idx = beta_index(r, c, p.d);
                if (std::abs(r - c) <= p.k0) lab.set_free(idx, idx);
                else lab.set_fixed(idx, 0.0);
              }
            return lab.finish();
          },
          [](const Network& p) {
            Labelling lab({p.d, p.d});
            for (int r = 0; r < p.d; ++r)
              for (int c = 0; c < p.d; ++c) {
                const int idx = beta_index(r, c, p.d);
                if (r == c) lab.set_free(idx, 0);
                else if (p.adjacency(r, c) != 0) lab.set_free(idx, 1);
                else lab.set_fixed(idx, 0.0);
              }
            return lab.finish();
          },
          [](const Grouped& p) {
            const int b = p.d / p.K;
            Labelling lab({p.d, p.d});
            for (int r = 0; r < p.d; ++r)
              for (int c = 0; c < p.d; ++c) {
                const long long base = static_cast<long long>(r) * (p.K + 1);
                lab.set_free(beta_index(r, c, p.d), r == c ? base + p.K : base + c / b);
              }
            return lab.finish();
          },
          [](const ScaledIdentity& p) {
            Labelling lab({p.d, p.d});
            for (int r = 0; r < p.d; ++r)
              for (int c = 0; c < p.d; ++c) {
                const int idx = beta_index(r, c, p.d);
                if (r == c) lab.set_free(idx, 0);
                else lab.set_fixed(idx, 0.0);
              }
            return lab.finish();
          },
          [](const CompanionVarP& p) { return compile_companion(p); },
          [](const Custom& p) {
            const ModelShape shape{p.q == 0 ? p.d : p.q, p.d};
            const long long N = shape.N();
            Labelling lab(shape);
            for (int j = 0; j < N; ++j) lab.set_free(j, j);
            for (int j : p.zeros) lab.set_fixed(j, 0.0);
            for (const auto& [j, v] : p.fixed) lab.set_fixed(j, v);
            for (std::size_t k = 0; k < p.equal.size(); ++k)
              for (int j : p.equal[k]) lab.set_free(j, N + static_cast<long long>(k));
            return lab.finish();
          },
      },
      pattern.kind);
}

Eigen::VectorXd symmetric_singular_values(const Eigen::MatrixXd& RtR) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(RtR, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().reverse();
}

}  // namespace

std::string pattern_name(const RestrictionPattern& pattern) {
  return std::visit(overloaded{
                        [](const Unrestricted&) { return std::string("unrestricted"); },
                        [](const Banded&) { return std::string("banded"); },
                        [](const Network&) { return std::string("network"); },
                        [](const Grouped&) { return std::string("grouped"); },
                        [](const ScaledIdentity&) { return std::string("scaled_identity"); },
                        [](const CompanionVarP&) { return std::string("companion"); },
                        [](const Custom&) { return std::string("custom"); },
                    },
                    pattern.kind);
}

ModelShape pattern_shape(const RestrictionPattern& pattern) {
  return std::visit(overloaded{
                        [](const CompanionVarP& p) { return ModelShape{p.d0 * p.p, p.d0 * p.p}; },
                        [](const Custom& p) { return ModelShape{p.q == 0 ? p.d : p.q, p.d}; },
                        [](const auto& p) { return ModelShape{p.d, p.d}; },
                    },
                    pattern.kind);
}

void validate(const RestrictionPattern& pattern) {
  std::visit(
      overloaded{
          [](const Unrestricted& p) {
            if (p.d < 1) fail("unrestricted: d must be positive");
          },
          [](const Banded& p) {
            if (p.d < 1) fail("banded: d must be positive");
            if (p.k0 < 1 || p.k0 > (p.d - 1) / 2)
              fail("banded: bandwidth k0=" + std::to_string(p.k0) + " outside [1, floor((d-1)/2)] for d=" +
                   std::to_string(p.d));
          },
          [](const Network& p) {
            if (p.d < 1) fail("network: d must be positive");
            if (p.adjacency.rows() != p.d || p.adjacency.cols() != p.d) fail("network: adjacency must be d x d");
            bool any_edge = false;
            for (int i = 0; i < p.d; ++i)
              for (int j = 0; j < p.d; ++j) {
                const int a = p.adjacency(i, j);
                if (a != 0 && a != 1) fail("network: adjacency entries must be 0 or 1");
                if (i == j && a != 0) fail("network: adjacency has a nonzero diagonal at node " + std::to_string(i));
                any_edge = any_edge || (i != j && a != 0);
              }
            if (!any_edge) fail("network: adjacency has no edges, off-diagonal parameter is unidentified");
          },
          [](const Grouped& p) {
            if (p.d < 1 || p.K < 1) fail("grouped: d and K must be positive");
            if (p.d % p.K != 0)
              fail("grouped: K=" + std::to_string(p.K) + " does not divide d=" + std::to_string(p.d));
          },
          [](const ScaledIdentity& p) {
            if (p.d < 1) fail("scaled_identity: d must be positive");
          },
          [](const CompanionVarP& p) {
            if (p.d0 < 1 || p.p < 1) fail("companion: d0 and p must be positive");
            if (p.inner) {
              if (std::holds_alternative<CompanionVarP>(p.inner->kind)) fail("companion: nested companion pattern");
              const ModelShape s = pattern_shape(*p.inner);
              if (s.q != p.d0 || s.d != p.d0) fail("companion: inner pattern must be d0 x d0");
              validate(*p.inner);
            }
          },
          [](const Custom& p) {
            const int q = p.q == 0 ? p.d : p.q;
            if (p.d < 1 || q < 1) fail("custom: shape must be positive");
            const int N = q * p.d;
            std::vector<char> seen(static_cast<std::size_t>(N), 0);
            auto mark = [&](int j, const char* what) {
              if (j < 0 || j >= N) fail(std::string("custom: ") + what + " index " + std::to_string(j) + " out of range");
              if (seen[j]) fail("custom: index " + std::to_string(j) + " appears in more than one set");
              seen[j] = 1;
            };
            for (int j : p.zeros) mark(j, "zero");
            for (const auto& f : p.fixed) mark(f.first, "fixed");
            for (const auto& cls : p.equal) {
              if (cls.empty()) fail("custom: empty equality class");
              for (int j : cls) mark(j, "equality");
            }
          },
      },
      pattern.kind);
}

ParameterLayout compile(const RestrictionPattern& pattern) { return compile_impl(pattern); }

int free_parameter_count(const RestrictionPattern& pattern) { return compile(pattern).m; }

int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index rows, Eigen::Index cols) {
  if (singular_values.size() == 0) return 0;
  const double smax = singular_values.maxCoeff();
  const double tol = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * smax;
  return static_cast<int>((singular_values.array() > tol).count());
}

// ---------------------------------------------------------------------------

RestrictionBasis::RestrictionBasis(Eigen::MatrixXd R, Eigen::VectorXd gamma, ModelShape shape)
    : R_(std::move(R)), gamma_(std::move(gamma)), shape_(shape) {
  if (shape_.q < 1 || shape_.d < 1) fail("basis: shape must be positive");
  if (R_.rows() != shape_.N()) fail("basis: R has " + std::to_string(R_.rows()) + " rows, expected N=" + std::to_string(shape_.N()));
  if (gamma_.size() != shape_.N()) fail("basis: gamma length does not match N");
  if (R_.cols() > R_.rows()) fail("basis: more columns than rows");
  index_structure();
  if (selector_) {
    for (int c = 0; c < m(); ++c)
      if (RtR_(c, c) == 0.0) fail("basis: column " + std::to_string(c) + " of R is zero");
  } else if (m() > 0) {
    const int rank = numerical_rank(symmetric_singular_values(RtR_), R_.rows(), R_.cols());
    if (rank != m()) fail("basis: R is rank deficient (effective rank " + std::to_string(rank) + " of " + std::to_string(m()) + ")");
  }
}

RestrictionBasis RestrictionBasis::from_layout(const ParameterLayout& layout) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(layout.shape.N(), layout.m);
  for (std::size_t j = 0; j < layout.column.size(); ++j)
    if (layout.column[j] >= 0) R(static_cast<Eigen::Index>(j), layout.column[j]) = 1.0;
  return RestrictionBasis(std::move(R), layout.gamma, layout.shape);
}

void RestrictionBasis::index_structure() {
  const int N = shape_.N();
  const int d = shape_.d;
  const int mm = m();
  has_offset_ = gamma_.size() > 0 && gamma_.cwiseAbs().maxCoeff() > 0.0;

  std::vector<int> sel(static_cast<std::size_t>(N), -1);
  bool selection = true;
  for (int j = 0; j < N && selection; ++j) {
    for (int c = 0; c < mm; ++c) {
      const double v = R_(j, c);
      if (v == 0.0) continue;
      if (v != 1.0 || sel[j] >= 0) {
        selection = false;
        break;
      }
      sel[j] = c;
    }
  }

  column_block_.assign(static_cast<std::size_t>(mm), -2);
  active_blocks_.clear();
  for (int i = 0; i < shape_.q; ++i) {
    const auto Ri = block(i);
    bool active = false;
    for (int c = 0; c < mm; ++c) {
      if (Ri.col(c).cwiseAbs().maxCoeff() == 0.0) continue;
      active = true;
      column_block_[c] = column_block_[c] == -2 ? i : -1;
    }
    if (active) active_blocks_.push_back(i);
  }
  for (int& b : column_block_)
    if (b == -2) b = -1;

  if (selection) {
    selector_ = std::move(sel);
    row_entries_.assign(static_cast<std::size_t>(shape_.q), {});
    RtR_ = Eigen::MatrixXd::Zero(mm, mm);
    for (int j = 0; j < N; ++j) {
      const int c = (*selector_)[j];
      if (c < 0) continue;
      row_entries_[j / d].emplace_back(j % d, c);
      RtR_(c, c) += 1.0;
    }
  } else {
    selector_.reset();
    row_entries_.clear();
    RtR_ = R_.transpose() * R_;
  }
}

bool RestrictionBasis::block_diagonal() const {
  return std::all_of(column_block_.begin(), column_block_.end(), [](int b) { return b >= 0; });
}

Eigen::MatrixXd RestrictionBasis::block_congruence(const Eigen::MatrixXd& S) const {
  const int mm = m();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(mm, mm);
  if (selector_) {
    for (const auto& entries : row_entries_)
      for (const auto& [ja, ca] : entries)
        for (const auto& [jb, cb] : entries) out(ca, cb) += S(ja, jb);
    return out;
  }
  for (int i : active_blocks_) {
    const auto Ri = block(i);
    out.noalias() += Ri.transpose() * (S * Ri);
  }
  return out;
}

Eigen::VectorXd RestrictionBasis::block_transpose_apply(const Eigen::MatrixXd& H) const {
  if (H.rows() != shape_.d || H.cols() != shape_.q) fail("basis: block_transpose_apply expects a d x q matrix");
  if (selector_) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m());
    for (int i = 0; i < shape_.q; ++i)
      for (const auto& [j, c] : row_entries_[i]) out[c] += H(j, i);
    return out;
  }
  return R_.transpose() * Eigen::Map<const Eigen::VectorXd>(H.data(), H.size());
}

Eigen::MatrixXd RestrictionBasis::block_outer(const Eigen::MatrixXd& W) const {
  const int d = shape_.d;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  if (selector_) {
    for (const auto& entries : row_entries_)
      for (const auto& [ja, ca] : entries)
        for (const auto& [jb, cb] : entries) out(ja, jb) += W(ca, cb);
    return out;
  }
  for (int i : active_blocks_) {
    const auto Ri = block(i);
    out.noalias() += Ri * W * Ri.transpose();
  }
  return out;
}

Eigen::VectorXd RestrictionBasis::beta(const Eigen::VectorXd& theta) const {
  if (theta.size() != m()) fail("basis: theta has wrong length");
  if (selector_) {
    Eigen::VectorXd out = gamma_;
    for (int j = 0; j < N(); ++j) {
      const int c = (*selector_)[j];
      if (c >= 0) out[j] += theta[c];
    }
    return out;
  }
  return R_ * theta + gamma_;
}

Eigen::MatrixXd RestrictionBasis::coefficients(const Eigen::VectorXd& theta) const {
  return coefficients_from_beta(beta(theta), shape_);
}

Eigen::MatrixXd coefficients_from_beta(const Eigen::VectorXd& beta, ModelShape shape) {
  if (beta.size() != shape.N()) fail("beta length does not match shape");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(beta.data(), shape.q, shape.d);
}

Eigen::VectorXd beta_from_coefficients(const Eigen::MatrixXd& A) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rm = A;
  return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

// ---------------------------------------------------------------------------

RestrictionBasis build_basis(const RestrictionPattern& pattern) {
  return RestrictionBasis::from_layout(compile(pattern));
}

RestrictionBasis build_basis(const RestrictionPattern& pattern, ModelShape shape) {
  const ModelShape own = pattern_shape(pattern);
  if (!(own == shape))
    fail(pattern_name(pattern) + " pattern has shape " + std::to_string(own.q) + "x" + std::to_string(own.d) +
         ", requested " + std::to_string(shape.q) + "x" + std::to_string(shape.d));
  return build_basis(pattern);
}

RestrictionBasis basis_from_constraints(const ConstraintForm& cf) {
  const int N = cf.shape.N();
  const auto r = static_cast<int>(cf.C.rows());
  if (cf.C.cols() != N) fail("constraints: C must have N columns");
  if (cf.mu.size() != r) fail("constraints: mu length must equal the number of constraints");
  if (r > N) fail("constraints: more constraints than parameters");
  if (r == 0) return RestrictionBasis(Eigen::MatrixXd::Identity(N, N), Eigen::VectorXd::Zero(N), cf.shape);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cf.C, Eigen::ComputeFullV);
  const int rank = numerical_rank(svd.singularValues(), N, r);
  if (rank < r)
    throw std::invalid_argument("constraints: C is rank deficient (effective rank " + std::to_string(rank) + " of " +
                                std::to_string(r) + ")");
  const int m = N - r;
  Eigen::MatrixXd full(N, N);
  full.topRows(m) = svd.matrixV().rightCols(m).transpose();
  full.bottomRows(r) = cf.C;
  const Eigen::MatrixXd inv = full.partialPivLu().inverse();
  Eigen::MatrixXd R = inv.leftCols(m);
  Eigen::VectorXd gamma = inv.rightCols(r) * cf.mu;
  return RestrictionBasis(std::move(R), std::move(gamma), cf.shape);
}

ConstraintForm constraints_from_basis(const RestrictionBasis& rb) {
  const int N = rb.N();
  const int m = rb.m();
  ConstraintForm cf;
  cf.shape = rb.shape();
  if (m == N) {
    cf.C.resize(0, N);
    cf.mu.resize(0);
    return cf;
  }
  if (m == 0) {
    cf.C = Eigen::MatrixXd::Identity(N, N);
    cf.mu = rb.gamma();
    return cf;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rb.R(), Eigen::ComputeFullU);
  const int rank = numerical_rank(svd.singularValues(), N, m);
  if (rank < m) fail("basis: R is rank deficient (effective rank " + std::to_string(rank) + ")");
  cf.C = svd.matrixU().rightCols(N - m).transpose();
  cf.mu = cf.C * rb.gamma();
  return cf;
}

Eigen::MatrixXd column_projector(const Eigen::MatrixXd& R) {
  if (R.cols() == 0) return Eigen::MatrixXd::Zero(R.rows(), R.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeThinU);
  const int rank = numerical_rank(svd.singularValues(), R.rows(), R.cols());
  const Eigen::MatrixXd U = svd.matrixU().leftCols(rank);
  return U * U.transpose();
}

NestingReport nest_check(const RestrictionBasis& coarse, const RestrictionBasis& fine, double tol) {
  if (!(coarse.shape() == fine.shape())) fail("nest_check: bases have different shapes");
  NestingReport rep;
  const auto qr = coarse.R().colPivHouseholderQr();
  rep.factor = qr.solve(fine.R());
  const double span_scale = std::max(fine.R().norm(), std::numeric_limits<double>::min());
  const double span_res = fine.m() == 0 ? 0.0 : (fine.R() - coarse.R() * rep.factor).norm() / span_scale;
  const Eigen::VectorXd gap = fine.gamma() - coarse.gamma();
  double gap_res = 0.0;
  if (gap.norm() > 0.0) {
    const Eigen::VectorXd g = coarse.m() == 0 ? Eigen::VectorXd(gap) : Eigen::VectorXd(gap - coarse.R() * qr.solve(gap));
    gap_res = g.norm() / std::max(1.0, gap.norm());
  }
  rep.residual = std::max(span_res, gap_res);
  rep.nested = rep.residual <= tol;
  return rep;
}

Custom sparse_offdiagonal_pattern(int d, int count, std::uint64_t seed) {
  if (d < 2) fail("sparse pattern: d must be at least 2");
  const int offdiag = d * (d - 1);
  if (count < 0 || count > offdiag) fail("sparse pattern: count out of range");
  std::vector<int> positions;
  positions.reserve(static_cast<std::size_t>(offdiag));
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      if (r != c) positions.push_back(beta_index(r, c, d));
  Engine eng = make_engine(seed);
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<int> pick(k, offdiag - 1);
    std::swap(positions[k], positions[pick(eng)]);
  }
  Custom out;
  out.q = d;
  out.d = d;
  std::vector<int> diag(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) diag[i] = beta_index(i, i, d);
  out.equal.push_back(std::move(diag));
  out.zeros.assign(positions.begin() + count, positions.end());
  std::sort(out.zeros.begin(), out.zeros.end());
  return out;
}

}  // namespace rvar
