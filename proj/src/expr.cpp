#include "bgv/expr.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <map>
#include <set>
#include <sstream>

namespace bgv {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedIndex: return "MalformedIndex";
    case Errc::MixedGrade: return "MixedGrade";
    case Errc::OrderExceeded: return "OrderExceeded";
    case Errc::BasisOverflow: return "BasisOverflow";
    case Errc::RuleNotValidOnRegion: return "RuleNotValidOnRegion";
    case Errc::UnknownGenerator: return "UnknownGenerator";
    case Errc::PsiContainsAntifields: return "PsiContainsAntifields";
    case Errc::TargetMismatch: return "TargetMismatch";
    case Errc::FieldDependentVariationUnsupported: return "FieldDependentVariationUnsupported";
    case Errc::InvalidAlgebra: return "InvalidAlgebra";
    case Errc::SpaceMismatch: return "SpaceMismatch";
    case Errc::GradingMismatch: return "GradingMismatch";
    case Errc::UnknownSuite: return "UnknownSuite";
    case Errc::IncompatibleTheory: return "IncompatibleTheory";
    case Errc::ConfigParse: return "ConfigParse";
    case Errc::ParseError: return "ParseError";
    case Errc::CFLViolation: return "CFLViolation";
    case Errc::NonFinite: return "NonFinite";
    case Errc::SupportMismatch: return "SupportMismatch";
    case Errc::StepTooLarge: return "StepTooLarge";
    case Errc::IOError: return "IOError";
  }
  return "Error";
}

// ---------------------------------------------------------------------------
// Symbol registry
// ---------------------------------------------------------------------------

namespace {
constexpr int kSpacetimeDim = 4;
constexpr int kSu2Dim = 3;
constexpr int32_t kDummyBase = 1 << 20;
} // namespace

Symbols::Symbols() {
  auto add = [&](GenSpec s) {
    specs_.push_back(std::move(s));
    return static_cast<SymId>(specs_.size() - 1);
  };
  // structural symbols first so they sort to the front of monomials
  metric = add({"g", GenKind::ExternalParam, 0, 2, 0, 0, 0, 0, false, SlotSymmetry::SymmetricPair,
                SlotSymmetry::None});
  fconst = add({"f", GenKind::ExternalParam, 3, 0, 0, 0, 0, 0, false, SlotSymmetry::None,
                SlotSymmetry::TotallyAntisym});
  lie_delta = add({"kd", GenKind::ExternalParam, 2, 0, 0, 0, 0, 0, false, SlotSymmetry::None,
                   SlotSymmetry::SymmetricPair});
  lam = add({"lam", GenKind::ExternalParam, 0, 0, 0, 0, 0, 0, false});
  Fbar = add({"Fbar", GenKind::BackgroundField, 1, 2, 0, 2, 0, 0, false,
              SlotSymmetry::AntisymmetricPair, SlotSymmetry::None});
  Abar = add({"Abar", GenKind::BackgroundField, 1, 1, 0, 1, 0, 0, false});
  phibar = add({"phibar", GenKind::BackgroundField, 0, 0, 0, 1, 0, 0, false});
  a_var = add({"avar", GenKind::BackgroundVariation, 1, 1, 0, 1, 0, 0, false});
  a_var2 = add({"avar2", GenKind::BackgroundVariation, 1, 1, 0, 1, 0, 0, false});
  k_var = add({"kvar", GenKind::BackgroundVariation, 1, 1, 0, 1, 0, 0, false});
  phibar_var = add({"pvar", GenKind::BackgroundVariation, 0, 0, 0, 1, 0, 0, false});
  phibar_var2 = add({"pvar2", GenKind::BackgroundVariation, 0, 0, 0, 1, 0, 0, false});
  phi = add({"phi", GenKind::DynField, 0, 0, 0, 1, 0, 0, true});
  A = add({"A", GenKind::DynField, 1, 1, 0, 1, 0, 0, true});
  B = add({"B", GenKind::DynField, 1, 0, 0, 2, 0, 0, true});
  C = add({"C", GenKind::DynField, 1, 0, 1, 0, 1, 0, true});
  Cbar = add({"Cbar", GenKind::DynField, 1, 0, -1, 2, 1, 0, true});
  Adag = add({"Adag", GenKind::Antifield, 1, 1, -1, 3, 1, 1, true});
  Bdag = add({"Bdag", GenKind::Antifield, 1, 0, -1, 2, 1, 1, true});
  Cdag = add({"Cdag", GenKind::Antifield, 1, 0, -2, 4, 0, 1, true});
  Cbardag = add({"Cbardag", GenKind::Antifield, 1, 0, 0, 2, 0, 1, true});
  Xs = add({"Xs", GenKind::ExternalParam, 0, 0, 0, 0, 0, 0, false});
  Xv = add({"Xv", GenKind::ExternalParam, 1, 1, 0, 0, 0, 0, false});
  Xa = add({"Xa", GenKind::ExternalParam, 1, 0, 0, 0, 0, 0, false});
}

const Symbols& Symbols::instance() {
  static const Symbols table;
  return table;
}

std::optional<SymId> Symbols::find(const std::string& name) const {
  for (size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return static_cast<SymId>(i);
  return std::nullopt;
}

SymId Symbols::id(const std::string& name) const {
  if (auto s = find(name)) return *s;
  fail(Errc::UnknownGenerator, "no generator named '" + name + "'");
}

const char* param_name(Param p) {
  switch (p) {
    case Param::m: return "m";
    case Param::lambda0: return "lambda0";
    case Param::hbar: return "hbar";
  }
  return "?";
}

Rat param_mass_dim(Param p) { return p == Param::m ? Rat(1) : Rat(0); }

// ---------------------------------------------------------------------------
// Index labels
// ---------------------------------------------------------------------------

namespace {
const std::array<const char*, 20> kLabelNames = {
    "mu", "nu", "rho", "sig", "tau", "alp", "bet", "gam", "del", "eta",
    "I",  "J",  "K",   "L",   "M",   "N",   "O",   "P",   "Q",   "R"};
}

std::string label_name(int32_t id) {
  if (id >= kDummyBase) return "i" + std::to_string(id - kDummyBase);
  if (id >= 0 && id < static_cast<int32_t>(kLabelNames.size())) return kLabelNames[id];
  return "x" + std::to_string(id);
}

int32_t label_id_from_name(const std::string& name) {
  for (size_t i = 0; i < kLabelNames.size(); ++i)
    if (name == kLabelNames[i]) return static_cast<int32_t>(i);
  auto numeric_tail = [&](size_t off) -> std::optional<int32_t> {
    if (name.size() <= off) return std::nullopt;
    int32_t v = 0;
    for (size_t i = off; i < name.size(); ++i) {
      if (!isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
      v = v * 10 + (name[i] - '0');
    }
    return v;
  };
  if (name[0] == 'i')
    if (auto v = numeric_tail(1)) return kDummyBase + *v;
  if (name[0] == 'x')
    if (auto v = numeric_tail(1)) return *v;
  fail(Errc::ParseError, "unknown index label '" + name + "'");
}

bool FreeIndex::operator<(const FreeIndex& o) const {
  if (spacetime != o.spacetime) return spacetime < o.spacetime;
  if (!(idx == o.idx)) return idx < o.idx;
  return up < o.up;
}

// ---------------------------------------------------------------------------
// Monomial canonicalization
// ---------------------------------------------------------------------------

namespace {

const GenSpec& spec_of(const GenOcc& o) { return Symbols::instance().spec(o.sym); }

int occ_parity(const GenOcc& o) { return spec_of(o).parity; }

struct SlotRef {
  int occ;
  int kind; // 0 lie, 1 st, 2 deriv
  int pos;
};

template <typename Fn>
void for_each_slot(Monomial& m, Fn&& fn) {
  for (int oi = 0; oi < static_cast<int>(m.gens.size()); ++oi) {
    auto& o = m.gens[oi];
    for (int p = 0; p < static_cast<int>(o.lie.size()); ++p) fn(SlotRef{oi, 0, p});
    for (int p = 0; p < static_cast<int>(o.st.size()); ++p) fn(SlotRef{oi, 1, p});
    for (int p = 0; p < static_cast<int>(o.deriv.size()); ++p) fn(SlotRef{oi, 2, p});
  }
}

Idx slot_idx(const Monomial& m, const SlotRef& s) {
  const auto& o = m.gens[s.occ];
  if (s.kind == 0) return o.lie[s.pos];
  if (s.kind == 1) return o.st[s.pos].idx;
  return o.deriv[s.pos].idx;
}

bool slot_up(const Monomial& m, const SlotRef& s) {
  const auto& o = m.gens[s.occ];
  if (s.kind == 1) return o.st[s.pos].up;
  if (s.kind == 2) return o.deriv[s.pos].up;
  return false;
}

void set_slot(Monomial& m, const SlotRef& s, Idx idx, bool up) {
  auto& o = m.gens[s.occ];
  if (s.kind == 0) {
    o.lie[s.pos] = idx;
  } else if (s.kind == 1) {
    o.st[s.pos] = {idx, up};
  } else {
    o.deriv[s.pos] = {idx, up};
  }
}

// Contract away metric factors and Kronecker lie deltas.  A self-contracted
// metric is the spacetime-dimension trace.
bool absorb_contractions(Monomial& m, Rat& coeff) {
  const auto& sy = Symbols::instance();
  for (size_t gi = 0; gi < m.gens.size(); ++gi) {
    auto& occ = m.gens[gi];
    const bool is_g = occ.sym == sy.metric;
    const bool is_kd = occ.sym == sy.lie_delta;
    if (!is_g && !is_kd) continue;

    auto idx0 = is_g ? occ.st[0].idx : occ.lie[0];
    auto idx1 = is_g ? occ.st[1].idx : occ.lie[1];
    if (idx0.is_label() && idx0 == idx1) {
      if (is_g && occ.st[0].up == occ.st[1].up)
        fail(Errc::MalformedIndex, "metric trace with equal variance");
      coeff *= is_g ? kSpacetimeDim : kSu2Dim;
      m.gens.erase(m.gens.begin() + gi);
      return true;
    }
    for (int side = 0; side < 2; ++side) {
      Idx mine = side == 0 ? idx0 : idx1;
      Idx other = side == 0 ? idx1 : idx0;
      bool other_up = is_g ? occ.st[1 - side].up : false;
      if (!mine.is_label()) continue;
      // find the partner slot elsewhere
      SlotRef partner{-1, 0, 0};
      bool found = false;
      for_each_slot(m, [&](SlotRef s) {
        if (found) return;
        if (s.occ == static_cast<int>(gi)) return;
        if ((s.kind == 0) != is_kd) return;
        if (slot_idx(m, s) == mine) {
          partner = s;
          found = true;
        }
      });
      if (!found) continue;
      if (is_g && slot_up(m, partner) == occ.st[side].up)
        fail(Errc::MalformedIndex,
             "contraction of equal-variance spacetime indices '" + label_name(mine.v) + "'");
      set_slot(m, partner, other, other_up);
      m.gens.erase(m.gens.begin() + gi);
      return true;
    }
  }
  return false;
}

struct LabelUse {
  std::vector<SlotRef> slots;
  bool lie = false;
};

std::map<int32_t, LabelUse> label_uses(Monomial& m) {
  std::map<int32_t, LabelUse> uses;
  for_each_slot(m, [&](SlotRef s) {
    Idx i = slot_idx(m, s);
    if (!i.is_label()) return;
    auto& u = uses[i.label_id()];
    u.slots.push_back(s);
    if (s.kind == 0) u.lie = true;
  });
  return uses;
}

void validate_labels(Monomial& m) {
  auto uses = label_uses(m);
  for (auto& [id, u] : uses) {
    if (u.slots.size() > 2)
      fail(Errc::MalformedIndex, "index '" + label_name(id) + "' appears more than twice");
    bool any_lie = false, any_st = false;
    for (auto& s : u.slots) (s.kind == 0 ? any_lie : any_st) = true;
    if (any_lie && any_st)
      fail(Errc::MalformedIndex, "index '" + label_name(id) + "' mixes lie and spacetime slots");
    if (u.slots.size() == 2 && any_st) {
      if (slot_up(m, u.slots[0]) == slot_up(m, u.slots[1]))
        fail(Errc::MalformedIndex,
             "contracted index '" + label_name(id) + "' has equal variance on both slots");
    }
  }
}

// Dummy-blind sort key used for the coarse Koszul ordering.
std::vector<int64_t> coarse_key(const Monomial& m, const GenOcc& o,
                                const std::map<int32_t, LabelUse>& uses) {
  std::vector<int64_t> k;
  k.push_back(o.sym);
  k.push_back(static_cast<int64_t>(o.deriv.size()));
  auto push_idx = [&](Idx i, bool up, bool has_var) {
    if (i.is_concrete()) {
      k.push_back(0);
      k.push_back(i.value());
    } else if (uses.at(i.label_id()).slots.size() == 1) {
      k.push_back(1);
      k.push_back(i.label_id());
    } else {
      k.push_back(2);
      k.push_back(0);
      return; // dummy: blind to name and variance
    }
    if (has_var) k.push_back(up ? 1 : 0);
  };
  for (auto& i : o.lie) push_idx(i, false, false);
  for (auto& s : o.st) push_idx(s.idx, s.up, true);
  for (auto& s : o.deriv) push_idx(s.idx, s.up, true);
  return k;
}

std::vector<int64_t> encode_occ(const GenOcc& o) {
  std::vector<int64_t> k;
  k.push_back(o.sym);
  k.push_back(static_cast<int64_t>(o.lie.size()));
  for (auto& i : o.lie) k.push_back(i.v);
  k.push_back(static_cast<int64_t>(o.st.size()));
  for (auto& s : o.st) {
    k.push_back(s.idx.v);
    k.push_back(s.up ? 1 : 0);
  }
  k.push_back(static_cast<int64_t>(o.deriv.size()));
  for (auto& s : o.deriv) {
    k.push_back(s.idx.v);
    k.push_back(s.up ? 1 : 0);
  }
  return k;
}

// Rename dummies in traversal order, sort symmetric slot groups (tracking
// signs), and orient each contracted spacetime pair so its first slot is
// covariant.  Returns 0 if the monomial vanishes by antisymmetry.
int refine(Monomial& m) {
  int sign = 1;
  std::vector<int64_t> prev;
  for (int iter = 0; iter < 12; ++iter) {
    // canonical dummy names
    auto uses = label_uses(m);
    std::map<int32_t, int32_t> ren;
    int32_t next = kDummyBase;
    for_each_slot(m, [&](SlotRef s) {
      Idx i = slot_idx(m, s);
      if (!i.is_label()) return;
      if (uses[i.label_id()].slots.size() != 2) return;
      if (!ren.count(i.label_id())) ren[i.label_id()] = next++;
    });
    for_each_slot(m, [&](SlotRef s) {
      Idx i = slot_idx(m, s);
      if (i.is_label() && ren.count(i.label_id()))
        set_slot(m, s, Idx::label(ren[i.label_id()]), slot_up(m, s));
    });

    // slot symmetries
    for (auto& o : m.gens) {
      const auto& sp = spec_of(o);
      if (sp.lie_sym == SlotSymmetry::TotallyAntisym) {
        for (size_t a = 0; a < o.lie.size(); ++a)
          for (size_t b = a + 1; b < o.lie.size(); ++b) {
            if (o.lie[a] == o.lie[b]) return 0;
            if (o.lie[b] < o.lie[a]) {
              std::swap(o.lie[a], o.lie[b]);
              sign = -sign;
            }
          }
      } else if (sp.lie_sym == SlotSymmetry::SymmetricPair && o.lie.size() == 2) {
        if (o.lie[1] < o.lie[0]) std::swap(o.lie[0], o.lie[1]);
      }
      if (sp.st_sym == SlotSymmetry::AntisymmetricPair && o.st.size() == 2) {
        if (o.st[0].idx == o.st[1].idx) return 0;
        if (o.st[1].idx < o.st[0].idx) {
          std::swap(o.st[0], o.st[1]);
          sign = -sign;
        }
      } else if (sp.st_sym == SlotSymmetry::SymmetricPair && o.st.size() == 2) {
        if (o.st[1].idx < o.st[0].idx) std::swap(o.st[0], o.st[1]);
      }
    }

    // orient contracted spacetime pairs: first slot down
    uses = label_uses(m);
    for (auto& [id, u] : uses) {
      if (u.lie || u.slots.size() != 2) continue;
      if (slot_up(m, u.slots[0])) {
        set_slot(m, u.slots[0], slot_idx(m, u.slots[0]), false);
        set_slot(m, u.slots[1], slot_idx(m, u.slots[1]), true);
      }
    }

    std::vector<int64_t> enc;
    for (auto& o : m.gens) {
      auto e = encode_occ(o);
      enc.insert(enc.end(), e.begin(), e.end());
    }
    if (enc == prev) break;
    prev = std::move(enc);
  }
  return sign;
}

int koszul_sign_of_permutation(const std::vector<int>& perm, const std::vector<int>& parities) {
  int sign = 1;
  for (size_t i = 0; i < perm.size(); ++i)
    for (size_t j = i + 1; j < perm.size(); ++j)
      if (perm[i] > perm[j] && parities[perm[i]] && parities[perm[j]]) sign = -sign;
  return sign;
}

// Canonicalize one term.  Returns std::nullopt if it vanishes.
std::optional<Term> canonicalize_term(Term t) {
  if (t.coeff == 0) return std::nullopt;
  Monomial& m = t.mono;
  while (absorb_contractions(m, t.coeff)) {}
  validate_labels(m);

  // coarse stable sort, dummy-blind
  auto uses = label_uses(m);
  std::vector<std::vector<int64_t>> keys;
  keys.reserve(m.gens.size());
  for (auto& o : m.gens) keys.push_back(coarse_key(m, o, uses));
  std::vector<int> order(m.gens.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<int> parities(m.gens.size());
  for (size_t i = 0; i < m.gens.size(); ++i) parities[i] = occ_parity(m.gens[i]);
  int base_sign = koszul_sign_of_permutation(order, parities);
  Monomial sorted = m;
  sorted.gens.clear();
  for (int i : order) sorted.gens.push_back(m.gens[i]);

  // tie groups of equal coarse keys
  std::vector<std::pair<int, int>> groups;
  {
    size_t i = 0;
    while (i < order.size()) {
      size_t j = i + 1;
      while (j < order.size() && keys[order[j]] == keys[order[i]]) ++j;
      if (j - i > 1) groups.emplace_back(static_cast<int>(i), static_cast<int>(j));
      i = j;
    }
  }

  // jointly enumerate permutations of tie groups, take the minimal refined
  // encoding; an encoding met with both signs means the term is zero
  std::map<std::vector<int64_t>, int> seen;
  bool vanishes = false;
  std::optional<std::pair<std::vector<int64_t>, std::pair<int, Monomial>>> best;

  std::vector<std::vector<int>> group_perms(groups.size());
  long total = 1;
  for (size_t g = 0; g < groups.size(); ++g) {
    int len = groups[g].second - groups[g].first;
    long f = 1;
    for (int k = 2; k <= len; ++k) f *= k;
    total *= f;
    if (total > 20000) fail(Errc::BasisOverflow, "canonicalization tie-group explosion");
  }

  std::vector<int> arrangement(sorted.gens.size());
  for (size_t i = 0; i < arrangement.size(); ++i) arrangement[i] = static_cast<int>(i);

  std::function<void(size_t)> rec = [&](size_t g) {
    if (g == groups.size()) {
      Monomial cand = sorted;
      std::vector<GenOcc> permuted(cand.gens.size());
      for (size_t i = 0; i < arrangement.size(); ++i) permuted[i] = sorted.gens[arrangement[i]];
      cand.gens = std::move(permuted);
      std::vector<int> par2(cand.gens.size());
      for (size_t i = 0; i < cand.gens.size(); ++i) par2[i] = occ_parity(sorted.gens[i]);
      int s = koszul_sign_of_permutation(arrangement, par2);
      int rs = refine(cand);
      if (rs == 0) return;
      s *= rs;
      std::vector<int64_t> enc;
      for (auto& o : cand.gens) {
        auto e = encode_occ(o);
        enc.insert(enc.end(), e.begin(), e.end());
      }
      auto it = seen.find(enc);
      if (it != seen.end()) {
        if (it->second != s) vanishes = true; // m = -m
        return;
      }
      seen[enc] = s;
      if (!best || enc < best->first) best = {enc, {s, cand}};
      return;
    }
    auto [lo, hi] = groups[g];
    std::vector<int> idx(arrangement.begin() + lo, arrangement.begin() + hi);
    std::sort(idx.begin(), idx.end());
    do {
      for (int i = lo; i < hi; ++i) arrangement[i] = idx[i - lo];
      rec(g + 1);
    } while (std::next_permutation(idx.begin(), idx.end()));
    std::sort(idx.begin(), idx.end());
    for (int i = lo; i < hi; ++i) arrangement[i] = idx[i - lo];
  };
  rec(0);

  if (!best) return std::nullopt;
  if (seen[best->first] == 0) return std::nullopt;
  t.coeff *= base_sign * best->second.first;
  t.mono = best->second.second;
  return t;
}

Grading occ_grading(const GenOcc& o) {
  const auto& sp = spec_of(o);
  Grading g;
  g.ghost = sp.ghost;
  g.mass_dim = sp.mass_dim + Rat(static_cast<int>(o.deriv.size()));
  g.parity = sp.parity;
  g.deg_field = sp.counts_deg_field ? 1 : 0;
  return g;
}

Grading term_grading(const Term& t) {
  Grading g;
  for (auto& o : t.mono.gens) {
    Grading go = occ_grading(o);
    g.ghost += go.ghost;
    g.mass_dim += go.mass_dim;
    g.parity = (g.parity + go.parity) % 2;
    g.deg_field += go.deg_field;
  }
  for (int p = 0; p < kParamCount; ++p)
    g.mass_dim += param_mass_dim(static_cast<Param>(p)) * t.mono.param_exp[p];
  g.deg_hbar = t.mono.param_exp[static_cast<int>(Param::hbar)];
  return g;
}

std::vector<FreeIndex> term_free_indices(const Monomial& m) {
  std::map<int32_t, std::vector<std::pair<bool, bool>>> uses; // id -> (is_st, up)
  Monomial copy = m;
  for_each_slot(copy, [&](SlotRef s) {
    Idx i = slot_idx(copy, s);
    if (!i.is_label()) return;
    uses[i.label_id()].push_back({s.kind != 0, slot_up(copy, s)});
  });
  std::vector<FreeIndex> out;
  for (auto& [id, v] : uses)
    if (v.size() == 1) out.push_back({Idx::label(id), v[0].first, v[0].second});
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Expr
// ---------------------------------------------------------------------------

std::vector<int64_t> encode_monomial(const Monomial& m) {
  std::vector<int64_t> k;
  k.push_back(m.vol);
  for (int p = 0; p < kParamCount; ++p) k.push_back(m.param_exp[p]);
  for (auto& o : m.gens) {
    auto e = encode_occ(o);
    k.insert(k.end(), e.begin(), e.end());
  }
  return k;
}

Expr::Expr(Rat constant) {
  if (constant != 0) terms_.push_back({std::move(constant), Monomial{}});
}

Expr normalize(const Expr& e) {
  std::map<std::vector<int64_t>, Term> acc;
  for (const auto& t : e.terms_) {
    auto ct = canonicalize_term(t);
    if (!ct) continue;
    auto key = encode_monomial(ct->mono);
    auto it = acc.find(key);
    if (it == acc.end()) {
      acc.emplace(std::move(key), std::move(*ct));
    } else {
      it->second.coeff += ct->coeff;
    }
  }
  Expr out;
  for (auto& [k, t] : acc)
    if (t.coeff != 0) out.terms_.push_back(std::move(t));

  if (out.terms_.size() > 1) {
    Grading g0 = term_grading(out.terms_[0]);
    auto f0 = term_free_indices(out.terms_[0].mono);
    for (size_t i = 1; i < out.terms_.size(); ++i) {
      Grading gi = term_grading(out.terms_[i]);
      if (gi.ghost != g0.ghost || gi.parity != g0.parity)
        fail(Errc::MixedGrade, "sum mixes ghost number or parity");
      if (term_free_indices(out.terms_[i].mono) != f0)
        fail(Errc::MalformedIndex, "free indices differ across terms of a sum");
    }
  }
  return out;
}

Expr Expr::from_terms(std::vector<Term> ts) {
  Expr e;
  e.terms_ = std::move(ts);
  return normalize(e);
}

Expr operator+(const Expr& a, const Expr& b) {
  Expr e;
  e.terms_ = a.terms_;
  e.terms_.insert(e.terms_.end(), b.terms_.begin(), b.terms_.end());
  return normalize(e);
}

Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

Expr Expr::operator-() const {
  Expr e = *this;
  for (auto& t : e.terms_) t.coeff = -t.coeff;
  return e;
}

Expr operator*(const Rat& c, const Expr& e) {
  if (c == 0) return Expr();
  Expr out = e;
  for (auto& t : out.terms_) t.coeff *= c;
  return out;
}

namespace {

// shift the dummy labels of b's monomial clear of a's labels
Monomial shift_dummies(const Monomial& mb, int32_t offset) {
  Monomial m = mb;
  auto uses = label_uses(m);
  for_each_slot(m, [&](SlotRef s) {
    Idx i = slot_idx(m, s);
    if (!i.is_label()) return;
    if (uses[i.label_id()].slots.size() == 2)
      set_slot(m, s, Idx::label(i.label_id() + offset), slot_up(m, s));
  });
  return m;
}

} // namespace

Expr operator*(const Expr& a, const Expr& b) {
  std::vector<Term> ts;
  for (const auto& ta : a.terms()) {
    for (const auto& tb : b.terms()) {
      Term t;
      t.coeff = ta.coeff * tb.coeff;
      t.mono = ta.mono;
      Monomial mb = shift_dummies(tb.mono, 1 << 10);
      t.mono.vol += mb.vol;
      for (int p = 0; p < kParamCount; ++p) t.mono.param_exp[p] += mb.param_exp[p];
      t.mono.gens.insert(t.mono.gens.end(), mb.gens.begin(), mb.gens.end());
      ts.push_back(std::move(t));
    }
  }
  return Expr::from_terms(std::move(ts));
}

bool Expr::operator==(const Expr& o) const {
  if (terms_.size() != o.terms_.size()) return false;
  for (size_t i = 0; i < terms_.size(); ++i) {
    if (terms_[i].coeff != o.terms_[i].coeff) return false;
    if (encode_monomial(terms_[i].mono) != encode_monomial(o.terms_[i].mono)) return false;
  }
  return true;
}

Expr make_gen(SymId sym, std::vector<Idx> lie, std::vector<StSlot> st, std::vector<StSlot> deriv) {
  const auto& sp = Symbols::instance().spec(sym);
  if (static_cast<int>(lie.size()) != sp.lie_count || static_cast<int>(st.size()) != sp.st_count)
    fail(Errc::MalformedIndex, "index arity mismatch for generator '" + sp.name + "'");
  Term t;
  t.coeff = 1;
  t.mono.gens.push_back({sym, std::move(lie), std::move(st), std::move(deriv)});
  return Expr::from_terms({std::move(t)});
}

Expr make_vol(int power) {
  Term t;
  t.coeff = 1;
  t.mono.vol = power;
  return Expr::from_terms({std::move(t)});
}

Expr make_param(Param p, int exp) {
  Term t;
  t.coeff = 1;
  t.mono.param_exp[static_cast<int>(p)] = exp;
  return Expr::from_terms({std::move(t)});
}

Expr make_metric(StSlot a, StSlot b) {
  return make_gen(Symbols::instance().metric, {}, {a, b});
}

Expr make_f(Idx i, Idx j, Idx k) { return make_gen(Symbols::instance().fconst, {i, j, k}, {}); }

Expr make_lie_delta(Idx i, Idx j) { return make_gen(Symbols::instance().lie_delta, {i, j}, {}); }

Expr lie_bracket_adj(const Expr& x, Idx xfree, const Expr& y, Idx yfree, Idx out) {
  int32_t j = fresh_label({&x, &y});
  int32_t k = j + 1;
  Expr xr = rename_label(x, xfree.label_id(), j);
  Expr yr = rename_label(y, yfree.label_id(), k);
  return make_f(out, Idx::label(j), Idx::label(k)) * xr * yr;
}

Grading grade_of(const Expr& e) {
  if (e.is_zero()) fail(Errc::MixedGrade, "zero expression carries no grading");
  Grading g = term_grading(e.terms()[0]);
  for (size_t i = 1; i < e.terms().size(); ++i) {
    Grading gi = term_grading(e.terms()[i]);
    if (!(gi == g)) fail(Errc::MixedGrade, "expression is not grade-homogeneous");
  }
  return g;
}

std::vector<FreeIndex> free_indices(const Expr& e) {
  if (e.is_zero()) return {};
  return term_free_indices(e.terms()[0].mono);
}

Expr nabla(StSlot d, const Expr& e) {
  const auto& sy = Symbols::instance();
  std::vector<Term> ts;
  for (const auto& t : e.terms()) {
    for (size_t gi = 0; gi < t.mono.gens.size(); ++gi) {
      const auto& o = t.mono.gens[gi];
      if (o.sym == sy.metric || o.sym == sy.fconst || o.sym == sy.lie_delta) continue;
      Term nt = t;
      nt.mono.gens[gi].deriv.insert(nt.mono.gens[gi].deriv.begin(), d);
      ts.push_back(std::move(nt));
    }
  }
  return Expr::from_terms(std::move(ts));
}

Expr nabla_multi(const std::vector<StSlot>& d, const Expr& e) {
  Expr out = e;
  for (auto it = d.rbegin(); it != d.rend(); ++it) out = nabla(*it, out);
  return out;
}

Expr rename_label(const Expr& e, int32_t from, int32_t to) {
  std::vector<Term> ts = e.terms();
  for (auto& t : ts) {
    for_each_slot(t.mono, [&](SlotRef s) {
      Idx i = slot_idx(t.mono, s);
      if (i.is_label() && i.label_id() == from)
        set_slot(t.mono, s, Idx::label(to), slot_up(t.mono, s));
    });
  }
  return Expr::from_terms(std::move(ts));
}

Expr substitute_param(const Expr& e, Param p, const Rat& value) {
  std::vector<Term> ts;
  for (auto t : e.terms()) {
    int exp = t.mono.param_exp[static_cast<int>(p)];
    if (exp != 0) {
      Rat v = 1;
      for (int k = 0; k < exp; ++k) v *= value;
      t.coeff *= v;
      t.mono.param_exp[static_cast<int>(p)] = 0;
    }
    if (t.coeff != 0) ts.push_back(std::move(t));
  }
  return Expr::from_terms(std::move(ts));
}

namespace {

int epsilon3(int a, int b, int c) {
  if (a == b || b == c || a == c) return 0;
  int sign = 1;
  int v[3] = {a, b, c};
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (v[i] > v[j]) {
        std::swap(v[i], v[j]);
        sign = -sign;
      }
  return sign;
}

std::vector<int32_t> collect_labels(const Monomial& m, bool lie, bool dummies_only) {
  Monomial c = m;
  std::map<int32_t, int> count;
  std::vector<int32_t> order;
  for_each_slot(c, [&](SlotRef s) {
    if ((s.kind == 0) != lie) return;
    Idx i = slot_idx(c, s);
    if (!i.is_label()) return;
    if (!count.count(i.label_id())) order.push_back(i.label_id());
    count[i.label_id()]++;
  });
  std::vector<int32_t> out;
  for (auto id : order)
    if (!dummies_only || count[id] == 2) out.push_back(id);
  return out;
}

// substitute one lie label by a concrete value
void subst_lie(Monomial& m, int32_t id, int val) {
  for_each_slot(m, [&](SlotRef s) {
    if (s.kind != 0) return;
    Idx i = slot_idx(m, s);
    if (i.is_label() && i.label_id() == id) set_slot(m, s, Idx::concrete(val), false);
  });
}

void subst_st(Monomial& m, int32_t id, int val, bool force_down) {
  for_each_slot(m, [&](SlotRef s) {
    if (s.kind == 0) return;
    Idx i = slot_idx(m, s);
    if (i.is_label() && i.label_id() == id)
      set_slot(m, s, Idx::concrete(val), force_down ? false : slot_up(m, s));
  });
}

std::vector<Term> expand_su2_term(const Term& t, bool allow_free) {
  std::vector<Term> work{t};
  // dummies first
  for (;;) {
    auto dummies = collect_labels(work.front().mono, true, true);
    if (dummies.empty()) break;
    int32_t id = dummies.front();
    std::vector<Term> next;
    for (auto& w : work)
      for (int v = 0; v < kSu2Dim; ++v) {
        Term nt = w;
        subst_lie(nt.mono, id, v);
        next.push_back(std::move(nt));
      }
    work = std::move(next);
  }
  auto frees = collect_labels(t.mono, true, false);
  if (!allow_free) {
    for (auto& w : work) {
      if (!collect_labels(w.mono, true, false).empty())
        fail(Errc::MalformedIndex, "free lie index in su(2) expansion");
    }
  }
  // evaluate f and kd occurrences with concrete entries
  const auto& sy = Symbols::instance();
  std::vector<Term> out;
  for (auto& w : work) {
    Term nt = w;
    std::vector<GenOcc> kept;
    bool zero = false;
    for (auto& o : nt.mono.gens) {
      if (o.sym == sy.fconst && o.lie[0].is_concrete() && o.lie[1].is_concrete() &&
          o.lie[2].is_concrete()) {
        int e = epsilon3(o.lie[0].value(), o.lie[1].value(), o.lie[2].value());
        if (e == 0) {
          zero = true;
          break;
        }
        nt.coeff *= e;
      } else if (o.sym == sy.lie_delta && o.lie[0].is_concrete() && o.lie[1].is_concrete()) {
        if (o.lie[0].value() != o.lie[1].value()) {
          zero = true;
          break;
        }
      } else {
        kept.push_back(o);
      }
    }
    if (zero) continue;
    nt.mono.gens = std::move(kept);
    out.push_back(std::move(nt));
  }
  (void)frees;
  return out;
}

} // namespace

Expr expand_su2(const Expr& e) {
  std::vector<Term> ts;
  for (auto& t : e.terms()) {
    auto ex = expand_su2_term(t, false);
    ts.insert(ts.end(), ex.begin(), ex.end());
  }
  return Expr::from_terms(std::move(ts));
}

std::vector<Expr> expand_su2_components(const Expr& e) {
  // expand with free lie labels enumerated; returns one expression per
  // assignment of the free labels (sorted by label then value)
  std::vector<int32_t> frees;
  if (!e.is_zero()) {
    frees = collect_labels(e.terms()[0].mono, true, false);
    auto dummies = collect_labels(e.terms()[0].mono, true, true);
    std::vector<int32_t> pure;
    for (auto f : frees) {
      if (std::find(dummies.begin(), dummies.end(), f) == dummies.end()) pure.push_back(f);
    }
    frees = pure;
  }
  if (frees.empty()) return {expand_su2(e)};
  std::vector<Expr> out;
  std::vector<int> assign(frees.size(), 0);
  for (;;) {
    Expr cur = e;
    std::vector<Term> ts = cur.terms();
    for (auto& t : ts)
      for (size_t i = 0; i < frees.size(); ++i) subst_lie(t.mono, frees[i], assign[i]);
    out.push_back(expand_su2(Expr::from_terms(std::move(ts))));
    size_t k = 0;
    while (k < assign.size() && ++assign[k] == kSu2Dim) assign[k++] = 0;
    if (k == assign.size()) break;
  }
  return out;
}

Expr enumerate_all_indices(const Expr& e) {
  Expr su2;
  {
    std::vector<Term> ts;
    for (auto& t : e.terms()) {
      auto ex = expand_su2_term(t, true);
      ts.insert(ts.end(), ex.begin(), ex.end());
    }
    su2 = Expr::from_terms(std::move(ts));
  }
  std::vector<Term> work = su2.terms();
  std::vector<Term> done;
  const Rat eta[4] = {Rat(-1), Rat(1), Rat(1), Rat(1)};
  while (!work.empty()) {
    Term t = work.back();
    work.pop_back();
    auto st_labels = collect_labels(t.mono, false, false);
    if (st_labels.empty()) {
      done.push_back(std::move(t));
      continue;
    }
    int32_t id = st_labels.front();
    auto dummies = collect_labels(t.mono, false, true);
    bool dummy = std::find(dummies.begin(), dummies.end(), id) != dummies.end();
    for (int v = 0; v < kSpacetimeDim; ++v) {
      Term nt = t;
      if (dummy) nt.coeff *= eta[v];
      subst_st(nt.mono, id, v, dummy);
      work.push_back(std::move(nt));
    }
  }
  // metric occurrences with concrete entries evaluate to eta components
  const auto& sy = Symbols::instance();
  std::vector<Term> out;
  for (auto& t : done) {
    Term nt = t;
    std::vector<GenOcc> kept;
    bool zero = false;
    for (auto& o : nt.mono.gens) {
      if (o.sym == sy.metric && o.st[0].idx.is_concrete() && o.st[1].idx.is_concrete()) {
        if (o.st[0].idx.value() != o.st[1].idx.value()) {
          zero = true;
          break;
        }
        nt.coeff *= eta[o.st[0].idx.value()];
      } else {
        kept.push_back(o);
      }
    }
    if (zero) continue;
    nt.mono.gens = std::move(kept);
    out.push_back(std::move(nt));
  }
  return Expr::from_terms(std::move(out));
}

int32_t fresh_label(std::initializer_list<const Expr*> exprs, int32_t hint) {
  int32_t mx = std::max(hint, 100);
  for (const Expr* e : exprs) {
    for (const auto& t : e->terms()) {
      Monomial m = t.mono;
      for_each_slot(m, [&](SlotRef s) {
        Idx i = slot_idx(m, s);
        if (i.is_label() && i.label_id() < kDummyBase) mx = std::max(mx, i.label_id());
      });
    }
  }
  return mx + 1;
}

} // namespace bgv
