#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bgv/errors.hpp"
#include "bgv/rational.hpp"

namespace bgv {

// ---------------------------------------------------------------------------
// Symbols
// ---------------------------------------------------------------------------

enum class GenKind : uint8_t {
  DynField,
  Antifield,
  BackgroundField,
  BackgroundVariation,
  ExternalParam,
};

struct Grading {
  int ghost = 0;
  Rat mass_dim = 0;
  int parity = 0; // 0 even, 1 odd
  int deg_field = 0;
  int deg_hbar = 0;
  int deg() const { return 2 * deg_hbar + deg_field; }
  bool operator==(const Grading& o) const {
    return ghost == o.ghost && mass_dim == o.mass_dim && parity == o.parity &&
           deg_field == o.deg_field && deg_hbar == o.deg_hbar;
  }
};

enum class SlotSymmetry : uint8_t { None, SymmetricPair, AntisymmetricPair, TotallyAntisym };

struct GenSpec {
  std::string name;
  GenKind kind = GenKind::ExternalParam;
  int lie_count = 0;     // adjoint indices
  int st_count = 0;      // spacetime slots
  int ghost = 0;
  Rat mass_dim = 0;
  int parity = 0;
  int density_weight = 0;      // antifields are densities
  bool counts_deg_field = false;
  SlotSymmetry st_sym = SlotSymmetry::None;   // e.g. Fbar antisymmetric
  SlotSymmetry lie_sym = SlotSymmetry::None;  // e.g. f totally antisymmetric
};

using SymId = uint16_t;

// The generator set of the two model theories is closed, so the symbol table
// is a fixed process-wide registry.
class Symbols {
public:
  static const Symbols& instance();
  const GenSpec& spec(SymId id) const { return specs_[id]; }
  SymId id(const std::string& name) const; // throws UnknownGenerator
  std::optional<SymId> find(const std::string& name) const;
  size_t size() const { return specs_.size(); }

  // well-known ids
  SymId metric, fconst, lie_delta;
  SymId phi, phibar, phibar_var, phibar_var2;
  SymId A, B, C, Cbar, Adag, Bdag, Cdag, Cbardag;
  SymId Abar, Fbar, lam;
  SymId a_var, a_var2, k_var;
  SymId Xs, Xv, Xa; // generic test tensors

private:
  Symbols();
  std::vector<GenSpec> specs_;
};

// Formal parameters appearing in coefficients.
enum class Param : uint8_t { m = 0, lambda0 = 1, hbar = 2 };
constexpr int kParamCount = 3;
const char* param_name(Param p);
Rat param_mass_dim(Param p);

// ---------------------------------------------------------------------------
// Indices
// ---------------------------------------------------------------------------

// An index is either an abstract label (id >= 0) or a concrete component
// value (encoded negative).  Lie components run over 0..2 (su(2)), spacetime
// components over 0..3.
struct Idx {
  int32_t v = 0;
  static Idx label(int32_t id) { return Idx{id}; }
  static Idx concrete(int32_t c) { return Idx{-1 - c}; }
  bool is_label() const { return v >= 0; }
  bool is_concrete() const { return v < 0; }
  int32_t label_id() const { return v; }
  int32_t value() const { return -1 - v; }
  bool operator==(const Idx& o) const { return v == o.v; }
  bool operator<(const Idx& o) const { return v < o.v; }
};

struct StSlot {
  Idx idx;
  bool up = false;
  bool operator==(const StSlot& o) const { return idx == o.idx && up == o.up; }
};

// Printable index labels form a stateless bijection id <-> name.
std::string label_name(int32_t id);
int32_t label_id_from_name(const std::string& name); // throws ParseError

// ---------------------------------------------------------------------------
// Monomials and expressions
// ---------------------------------------------------------------------------

// One generator occurrence: nabla_{d1} ... nabla_{dk} Gen^{lie...}_{st...}.
// Derivative indices are stored outermost first and do not commute.
struct GenOcc {
  SymId sym = 0;
  std::vector<Idx> lie;
  std::vector<StSlot> st;
  std::vector<StSlot> deriv;
};

struct Monomial {
  int vol = 0;                             // explicit volume-density power
  int param_exp[kParamCount] = {0, 0, 0};  // exponents of m, lambda0, hbar
  std::vector<GenOcc> gens;                // order is Koszul-significant
};

struct Term {
  Rat coeff;
  Monomial mono;
};

// A graded expression: a normalized sum of canonical monomials with exact
// rational coefficients.  All terms share ghost number and parity; free
// indices must match across terms.
class Expr {
public:
  Expr() = default;
  explicit Expr(Rat constant);
  static Expr zero() { return Expr(); }

  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  size_t size() const { return terms_.size(); }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator*(const Rat& c, const Expr& e);
  Expr operator-() const;
  bool operator==(const Expr& o) const;

  // Raw constructor used by builders; normalizes.
  static Expr from_terms(std::vector<Term> ts);

private:
  std::vector<Term> terms_; // canonical and sorted
  friend Expr normalize(const Expr&);
};

// Convenience builders.
Expr make_gen(SymId sym, std::vector<Idx> lie = {}, std::vector<StSlot> st = {},
              std::vector<StSlot> deriv = {});
Expr make_vol(int power = 1);
Expr make_param(Param p, int exp = 1);
Expr make_metric(StSlot a, StSlot b);
Expr make_f(Idx i, Idx j, Idx k);
Expr make_lie_delta(Idx i, Idx j);

// [x, y]^I for adjoint-valued expressions x^J, y^K carrying a designated free
// lie label each: returns f^{IJK} x^J y^K with I = out.
Expr lie_bracket_adj(const Expr& x, Idx xfree, const Expr& y, Idx yfree, Idx out);

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

// Deterministic canonical form: metric contraction, Koszul-ordered generator
// products, canonical dummy labels, slot-symmetry signs absorbed into
// coefficients.  Idempotent.  Throws MalformedIndex / MixedGrade.
Expr normalize(const Expr& e);

Grading grade_of(const Expr& e); // throws MixedGrade on mixed input, UnknownGenerator never

// Free indices of an expression (consistent across terms after normalize).
struct FreeIndex {
  Idx idx;
  bool spacetime = true;
  bool up = false;
  bool operator==(const FreeIndex& o) const {
    return idx == o.idx && spacetime == o.spacetime && up == o.up;
  }
  bool operator<(const FreeIndex& o) const;
};
std::vector<FreeIndex> free_indices(const Expr& e);

// Covariant derivative as a graded-even derivation; metric, f, vol and
// structure constants are covariantly constant.
Expr nabla(StSlot d, const Expr& e);
// Apply a whole multi-index, outermost first.
Expr nabla_multi(const std::vector<StSlot>& d, const Expr& e);

// Relabel an abstract index label throughout (used to stitch kernels).
Expr rename_label(const Expr& e, int32_t from, int32_t to);

// Substitute a formal parameter by a rational value (lambda0 -> 0 etc).
Expr substitute_param(const Expr& e, Param p, const Rat& value);

// Expand all abstract lie labels over su(2) components, replacing f by the
// Levi-Civita values and lie deltas by Kronecker values.  Free lie labels are
// enumerated as well (the caller receives one expression per assignment via
// the all-components collection below, or a single expression when none are
// free).
Expr expand_su2(const Expr& e);
std::vector<Expr> expand_su2_components(const Expr& e); // one per free-lie assignment

// Full enumeration oracle: expand lie labels over {0,1,2} with f = epsilon and
// spacetime labels over {0..3} with metric diag(-1,1,1,1).  Equality of the
// resulting component expansions is the ground truth that canonical-form
// equality is checked against in the tests.
Expr enumerate_all_indices(const Expr& e);

// A fresh label id guaranteed not to occur in the given expressions.
int32_t fresh_label(std::initializer_list<const Expr*> exprs, int32_t hint = 0);

// Encoded comparison key of a term's monomial (stable across runs).
std::vector<int64_t> encode_monomial(const Monomial& m);

} // namespace bgv
