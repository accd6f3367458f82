// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/smiles.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>

namespace molalign::smiles {

const char *error_name(SmilesErrorKind kind) {
  switch (kind) {
    case SmilesErrorKind::kEmptyInput: return "EmptyInput";
    case SmilesErrorKind::kUnexpectedCharacter: return "UnexpectedCharacter";
    case SmilesErrorKind::kUnterminatedBracket: return "UnterminatedBracket";
    case SmilesErrorKind::kInvalidBracketAtom: return "InvalidBracketAtom";
    case SmilesErrorKind::kUnexpectedToken: return "UnexpectedToken";
    case SmilesErrorKind::kUnclosedBranch: return "UnclosedBranch";
    case SmilesErrorKind::kUnmatchedRingBond: return "UnmatchedRingBond";
    case SmilesErrorKind::kDuplicateBond: return "DuplicateBond";
    case SmilesErrorKind::kStereoUnsupported: return "StereoUnsupported";
  }
  return "SmilesError";
}

SmilesError::SmilesError(SmilesErrorKind kind, std::size_t position, std::string detail)
    : std::runtime_error(std::string(error_name(kind)) + " at column " +
                         std::to_string(position + 1) + (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      position_(position),
      detail_(std::move(detail)) {}

CorpusError::CorpusError(const SmilesError &cause, std::size_t index)
    : SmilesError(cause), index_(index) {}

namespace {

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

bool is_element(std::string_view s) {
  return std::find(kElements.begin(), kElements.end(), s) != kElements.end();
}

// Organic subset written without brackets.
bool is_organic(std::string_view element) {
  static constexpr std::array<std::string_view, 10> kOrganic = {"B", "C", "N", "O",  "P",
                                                                "S", "F", "Cl", "Br", "I"};
  return std::find(kOrganic.begin(), kOrganic.end(), element) != kOrganic.end();
}

bool is_aromatic_organic(std::string_view element) {
  static constexpr std::array<std::string_view, 6> kAromatic = {"B", "C", "N", "O", "P", "S"};
  return std::find(kAromatic.begin(), kAromatic.end(), element) != kAromatic.end();
}

// Aromatic symbols accepted inside brackets.
bool is_aromatic_bracket(std::string_view element) {
  return is_aromatic_organic(element) || element == "Se" || element == "As";
}

std::string capitalize(std::string_view lower) {
  std::string s(lower);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<Token> tokenize(std::string_view smiles) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = smiles.size();
  while (i < n) {
    const char c = smiles[i];
    const std::size_t start = i;
    auto push = [&](std::size_t len, TokenKind kind) {
      tokens.push_back(Token{std::string(smiles.substr(start, len)), kind, start});
      i += len;
    };
    if (static_cast<unsigned char>(c) > 127) {
      throw SmilesError(SmilesErrorKind::kUnexpectedCharacter, i, "non-ASCII byte");
    }
    if (c == '[') {
      std::size_t j = i + 1;
      while (j < n && smiles[j] != ']' && smiles[j] != '[') ++j;
      if (j >= n || smiles[j] != ']') {
        throw SmilesError(SmilesErrorKind::kUnterminatedBracket, i, "no closing ']'");
      }
      push(j - i + 1, TokenKind::kBracketAtom);
      continue;
    }
    if ((c == 'C' && i + 1 < n && smiles[i + 1] == 'l') ||
        (c == 'B' && i + 1 < n && smiles[i + 1] == 'r')) {
      push(2, TokenKind::kAtom);
      continue;
    }
    switch (c) {
      case 'B': case 'C': case 'N': case 'O': case 'P': case 'S': case 'F': case 'I':
      case 'b': case 'c': case 'n': case 'o': case 'p': case 's':
        push(1, TokenKind::kAtom);
        continue;
      case '-': case '=': case '#': case ':': case '/': case '\\':
        push(1, TokenKind::kBond);
        continue;
      case '(':
        push(1, TokenKind::kBranchOpen);
        continue;
      case ')':
        push(1, TokenKind::kBranchClose);
        continue;
      case '.':
        push(1, TokenKind::kDot);
        continue;
      case '%':
        if (i + 2 < n && is_digit(smiles[i + 1]) && is_digit(smiles[i + 2])) {
          push(3, TokenKind::kRingBond);
          continue;
        }
        throw SmilesError(SmilesErrorKind::kUnexpectedCharacter, i, "'%' needs two digits");
      default:
        break;
    }
    if (is_digit(c)) {
      push(1, TokenKind::kRingBond);
      continue;
    }
    throw SmilesError(SmilesErrorKind::kUnexpectedCharacter, i,
                      std::string("unexpected '") + c + "'");
  }
  return tokens;
}

namespace {

Atom parse_bracket(const Token &tok) {
  const std::string_view body = std::string_view(tok.text).substr(1, tok.text.size() - 2);
  const std::size_t base = tok.position + 1;
  std::size_t i = 0;
  auto fail = [&](SmilesErrorKind kind, const std::string &what) -> Atom {
    throw SmilesError(kind, base + i, what);
  };
  if (body.find('@') != std::string_view::npos) {
    i = body.find('@');
    fail(SmilesErrorKind::kStereoUnsupported, "chirality marker");
  }
  if (i < body.size() && is_digit(body[i])) fail(SmilesErrorKind::kStereoUnsupported, "isotope");

  Atom atom;
  if (i >= body.size()) fail(SmilesErrorKind::kInvalidBracketAtom, "empty bracket atom");
  const char c0 = body[i];
  if (std::islower(static_cast<unsigned char>(c0))) {
    std::string_view two = body.substr(i, 2);
    if (two.size() == 2 && std::islower(static_cast<unsigned char>(two[1])) &&
        is_aromatic_bracket(capitalize(two))) {
      atom.element = capitalize(two);
      i += 2;
    } else if (is_aromatic_bracket(capitalize(body.substr(i, 1)))) {
      atom.element = capitalize(body.substr(i, 1));
      i += 1;
    } else {
      fail(SmilesErrorKind::kInvalidBracketAtom, "unknown aromatic symbol");
    }
    atom.aromatic = true;
  } else if (std::isupper(static_cast<unsigned char>(c0))) {
    std::string_view two = body.substr(i, 2);
    if (two.size() == 2 && std::islower(static_cast<unsigned char>(two[1])) && is_element(two)) {
      atom.element = std::string(two);
      i += 2;
    } else if (is_element(body.substr(i, 1))) {
      atom.element = std::string(body.substr(i, 1));
      i += 1;
    } else {
      fail(SmilesErrorKind::kInvalidBracketAtom, "unknown element");
    }
  } else {
    fail(SmilesErrorKind::kInvalidBracketAtom, "expected element symbol");
  }

  atom.h_count = 0;
  if (i < body.size() && body[i] == 'H') {
    ++i;
    int h = 1;
    if (i < body.size() && is_digit(body[i])) {
      h = body[i] - '0';
      ++i;
    }
    atom.h_count = h;
  }
  if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
    const char sign = body[i];
    int magnitude = 1;
    ++i;
    if (i < body.size() && is_digit(body[i])) {
      magnitude = 0;
      while (i < body.size() && is_digit(body[i])) magnitude = magnitude * 10 + (body[i++] - '0');
    } else {
      while (i < body.size() && body[i] == sign) {
        ++magnitude;
        ++i;
      }
    }
    atom.charge = sign == '+' ? magnitude : -magnitude;
  }
  if (i != body.size()) fail(SmilesErrorKind::kInvalidBracketAtom, "trailing characters");
  return atom;
}

Atom organic_atom(const Token &tok) {
  Atom atom;
  if (std::islower(static_cast<unsigned char>(tok.text[0]))) {
    atom.element = capitalize(tok.text);
    atom.aromatic = true;
  } else {
    atom.element = tok.text;
  }
  return atom;
}

std::optional<BondOrder> bond_from_symbol(const Token &tok) {
  switch (tok.text[0]) {
    case '-': return BondOrder::kSingle;
    case '=': return BondOrder::kDouble;
    case '#': return BondOrder::kTriple;
    case ':': return BondOrder::kAromatic;
    default: return std::nullopt;
  }
}

int ring_number(const Token &tok) {
  if (tok.text[0] == '%') return (tok.text[1] - '0') * 10 + (tok.text[2] - '0');
  return tok.text[0] - '0';
}

class GraphBuilder {
 public:
  std::size_t add_atom(Atom atom) {
    graph_.atoms.push_back(std::move(atom));
    return graph_.atoms.size() - 1;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> explicit_order,
                std::size_t position) {
    if (a == b) throw SmilesError(SmilesErrorKind::kDuplicateBond, position, "atom bonded to itself");
    const auto key = std::minmax(a, b);
    if (!seen_.insert(key).second) {
      throw SmilesError(SmilesErrorKind::kDuplicateBond, position, "atoms already bonded");
    }
    BondOrder order = explicit_order.value_or(
        graph_.atoms[a].aromatic && graph_.atoms[b].aromatic ? BondOrder::kAromatic
                                                             : BondOrder::kSingle);
    graph_.bonds.push_back(Bond{a, b, order});
  }

  MolGraph take() { return std::move(graph_); }

 private:
  MolGraph graph_;
  std::set<std::pair<std::size_t, std::size_t>> seen_;
};

}  // namespace

MolGraph parse(std::string_view smiles) {
  if (smiles.empty()) throw SmilesError(SmilesErrorKind::kEmptyInput, 0, "empty SMILES");
  const std::vector<Token> tokens = tokenize(smiles);

  struct PendingBond {
    std::optional<BondOrder> order;
    std::size_t position;
  };
  struct OpenRing {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t position;
  };

  GraphBuilder builder;
  std::optional<std::size_t> prev;
  std::optional<PendingBond> pending;
  std::vector<std::size_t> branches;
  std::map<int, OpenRing> rings;
  const Token *last = nullptr;

  auto unexpected = [](const Token &tok, const std::string &why) {
    throw SmilesError(SmilesErrorKind::kUnexpectedToken, tok.position,
                      "'" + tok.text + "' " + why);
  };

  for (const Token &tok : tokens) {
    switch (tok.kind) {
      case TokenKind::kAtom:
      case TokenKind::kBracketAtom: {
        Atom atom = tok.kind == TokenKind::kAtom ? organic_atom(tok) : parse_bracket(tok);
        const std::size_t idx = builder.add_atom(std::move(atom));
        if (prev) {
          builder.add_bond(*prev, idx, pending ? pending->order : std::nullopt, tok.position);
        } else if (pending) {
          unexpected(tok, "follows a bond with no preceding atom");
        }
        pending.reset();
        prev = idx;
        break;
      }
      case TokenKind::kBond:
        if (tok.text == "/" || tok.text == "\\") {
          throw SmilesError(SmilesErrorKind::kStereoUnsupported, tok.position,
                            "directional bond '" + tok.text + "'");
        }
        if (!prev) unexpected(tok, "has no preceding atom");
        if (pending) unexpected(tok, "follows another bond");
        pending = PendingBond{bond_from_symbol(tok), tok.position};
        break;
      case TokenKind::kRingBond: {
        if (!prev) unexpected(tok, "has no preceding atom");
        const int number = ring_number(tok);
        const std::optional<BondOrder> order = pending ? pending->order : std::nullopt;
        auto it = rings.find(number);
        if (it == rings.end()) {
          rings.emplace(number, OpenRing{*prev, order, tok.position});
        } else {
          if (order && it->second.order && *order != *it->second.order) {
            unexpected(tok, "closes a ring with a conflicting bond order");
          }
          builder.add_bond(it->second.atom, *prev, order ? order : it->second.order, tok.position);
          rings.erase(it);
        }
        pending.reset();
        break;
      }
      case TokenKind::kBranchOpen:
        if (!prev) unexpected(tok, "has no preceding atom");
        if (pending) unexpected(tok, "follows a bond");
        branches.push_back(*prev);
        break;
      case TokenKind::kBranchClose:
        if (branches.empty()) unexpected(tok, "closes no open branch");
        if (pending) unexpected(tok, "follows a bond");
        if (last && last->kind == TokenKind::kBranchOpen) unexpected(tok, "closes an empty branch");
        prev = branches.back();
        branches.pop_back();
        break;
      case TokenKind::kDot:
        if (pending) unexpected(tok, "follows a bond");
        if (!prev) unexpected(tok, "has no preceding atom");
        if (!branches.empty()) unexpected(tok, "appears inside a branch");
        prev.reset();
        break;
    }
    last = &tok;
  }

  if (pending) {
    throw SmilesError(SmilesErrorKind::kUnexpectedToken, pending->position, "dangling bond");
  }
  if (!prev) {
    throw SmilesError(SmilesErrorKind::kUnexpectedToken, smiles.size() - 1, "ends without an atom");
  }
  if (!branches.empty()) {
    throw SmilesError(SmilesErrorKind::kUnclosedBranch, smiles.size(), "missing ')'");
  }
  if (!rings.empty()) {
    const auto &[number, open] = *rings.begin();
    throw SmilesError(SmilesErrorKind::kUnmatchedRingBond, open.position,
                      "ring bond " + std::to_string(number) + " never closed");
  }
  return builder.take();
}

std::vector<std::vector<MolGraph::Neighbor>> MolGraph::adjacency() const {
  std::vector<std::vector<Neighbor>> adj(atoms.size());
  for (const Bond &b : bonds) {
    adj[b.a].push_back({b.b, b.order});
    adj[b.b].push_back({b.a, b.order});
  }
  return adj;
}

int MolGraph::hydrogen_count(std::size_t i) const {
  const Atom &atom = atoms[i];
  if (atom.h_count) return *atom.h_count;
  int valence = 0;
  bool any_aromatic = false;
  for (const Bond &b : bonds) {
    if (b.a != i && b.b != i) continue;
    if (b.order == BondOrder::kAromatic) {
      valence += 1;
      any_aromatic = true;
    } else {
      valence += static_cast<int>(b.order);
    }
  }
  if (atom.aromatic || any_aromatic) valence += 1;

  static const std::unordered_map<std::string, std::vector<int>> kDefault = {
      {"B", {3}},    {"C", {4}},     {"N", {3, 5}}, {"O", {2}},  {"P", {3, 5}},
      {"S", {2, 4, 6}}, {"F", {1}}, {"Cl", {1}},   {"Br", {1}}, {"I", {1}}};
  auto it = kDefault.find(atom.element);
  if (it == kDefault.end()) return 0;
  for (int v : it->second) {
    if (v >= valence) return v - valence;
  }
  return 0;
}

std::vector<std::vector<std::size_t>> MolGraph::components() const {
  const auto adj = adjacency();
  std::vector<int> comp(atoms.size(), -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < atoms.size(); ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      out.back().push_back(u);
      for (const auto &nb : adj[u]) {
        if (comp[nb.atom] < 0) {
          comp[nb.atom] = id;
          stack.push_back(nb.atom);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

MolGraph MolGraph::subgraph(std::span<const std::size_t> keep) const {
  std::vector<std::ptrdiff_t> remap(atoms.size(), -1);
  MolGraph g;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    remap[keep[i]] = static_cast<std::ptrdiff_t>(i);
    g.atoms.push_back(atoms[keep[i]]);
  }
  for (const Bond &b : bonds) {
    if (remap[b.a] >= 0 && remap[b.b] >= 0) {
      g.bonds.push_back(Bond{static_cast<std::size_t>(remap[b.a]),
                             static_cast<std::size_t>(remap[b.b]), b.order});
    }
  }
  return g;
}

namespace {

std::string atom_symbol(const MolGraph &g, std::size_t i) {
  const Atom &a = g.atoms[i];
  const bool bare = !a.h_count && a.charge == 0 && is_organic(a.element) &&
                    (!a.aromatic || is_aromatic_organic(a.element));
  std::string sym = a.aromatic ? lowercase(a.element) : a.element;
  if (bare) return sym;
  std::string out = "[" + sym;
  const int h = a.h_count.value_or(0);
  if (h > 0) {
    out += 'H';
    if (h > 1) out += std::to_string(h);
  }
  if (a.charge != 0) {
    out += a.charge > 0 ? '+' : '-';
    if (std::abs(a.charge) > 1) out += std::to_string(std::abs(a.charge));
  }
  out += ']';
  return out;
}

std::string bond_symbol(const MolGraph &g, std::size_t a, std::size_t b, BondOrder order) {
  const bool both_aromatic = g.atoms[a].aromatic && g.atoms[b].aromatic;
  switch (order) {
    case BondOrder::kSingle: return both_aromatic ? "-" : "";
    case BondOrder::kDouble: return "=";
    case BondOrder::kTriple: return "#";
    case BondOrder::kAromatic: return both_aromatic ? "" : ":";
  }
  return "";
}

std::string ring_label(int n) { return n < 10 ? std::to_string(n) : "%" + std::to_string(n); }

}  // namespace

std::string write_smiles(const MolGraph &graph, std::span<const std::size_t> ranks) {
  const std::size_t n = graph.atoms.size();
  if (n == 0) return "";
  const auto adj = graph.adjacency();

  std::vector<std::vector<MolGraph::Neighbor>> sorted = adj;
  for (auto &list : sorted) {
    std::sort(list.begin(), list.end(),
              [&](const auto &x, const auto &y) { return ranks[x.atom] < ranks[y.atom]; });
  }
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (ranks[i] < ranks[start]) start = i;

  // Pass 1: DFS to classify edges into tree edges and ring closures.
  std::vector<int> visit(n, -1);
  std::vector<std::vector<std::size_t>> children(n);
  struct Closure {
    std::size_t partner;
    BondOrder order;
    bool opening;
  };
  std::vector<std::vector<Closure>> closures(n);
  int counter = 0;
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::function<void(std::size_t, std::ptrdiff_t)> dfs = [&](std::size_t u, std::ptrdiff_t parent) {
    visit[u] = counter++;
    for (const auto &nb : sorted[u]) {
      const std::size_t v = nb.atom;
      if (static_cast<std::ptrdiff_t>(v) == parent) continue;
      const auto key = std::minmax(u, v);
      if (used.count(key)) continue;
      used.insert(key);
      if (visit[v] < 0) {
        children[u].push_back(v);
        dfs(v, static_cast<std::ptrdiff_t>(u));
      } else {
        closures[v].push_back({u, nb.order, true});
        closures[u].push_back({v, nb.order, false});
      }
    }
  };
  dfs(start, -1);

  // Closures at an atom: closings first, then openings, each by partner visit order.
  for (auto &list : closures) {
    std::stable_sort(list.begin(), list.end(), [&](const Closure &x, const Closure &y) {
      if (x.opening != y.opening) return !x.opening;
      return visit[x.partner] < visit[y.partner];
    });
  }

  // Pass 2: emit.
  std::string out;
  std::vector<bool> digit_used(100, false);
  std::map<std::pair<std::size_t, std::size_t>, int> open_digits;
  std::function<void(std::size_t)> emit = [&](std::size_t u) {
    out += atom_symbol(graph, u);
    for (const Closure &c : closures[u]) {
      const auto key = std::minmax(u, c.partner);
      if (c.opening) {
        int d = 1;
        while (d < 100 && digit_used[d]) ++d;
        if (d == 100) {
          d = 0;
          while (digit_used[d]) ++d;
        }
        digit_used[d] = true;
        open_digits[key] = d;
        out += bond_symbol(graph, u, c.partner, c.order);
        out += ring_label(d);
      } else {
        const int d = open_digits.at(key);
        digit_used[d] = false;
        open_digits.erase(key);
        out += ring_label(d);
      }
    }
    const auto &kids = children[u];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const std::size_t v = kids[k];
      BondOrder order = BondOrder::kSingle;
      for (const auto &nb : adj[u])
        if (nb.atom == v) order = nb.order;
      const bool last = k + 1 == kids.size();
      if (!last) out += '(';
      out += bond_symbol(graph, u, v, order);
      emit(v);
      if (!last) out += ')';
    }
  };
  emit(start);
  return out;
}

namespace {

using Ranks = std::vector<std::size_t>;

// Dense ranks of `keys` (equal keys share a rank, ordered ascending).
template <typename Key>
Ranks dense_ranks(const std::vector<Key> &keys) {
  std::vector<Key> uniq = keys;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  Ranks r(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    r[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), keys[i]) -
                                    uniq.begin());
  }
  return r;
}

std::size_t class_count(const Ranks &r) {
  return r.empty() ? 0 : *std::max_element(r.begin(), r.end()) + 1;
}

class Canonicalizer {
 public:
  explicit Canonicalizer(const MolGraph &g) : graph_(g), adj_(g.adjacency()) {}

  std::string run() {
    using Invariant = std::tuple<std::string, int, int, std::size_t, int>;
    std::vector<Invariant> init;
    for (std::size_t i = 0; i < graph_.atoms.size(); ++i) {
      const Atom &a = graph_.atoms[i];
      init.emplace_back(a.element, a.aromatic ? 1 : 0, a.charge, adj_[i].size(),
                        graph_.hydrogen_count(i));
    }
    search(refine(dense_ranks(init)));
    return best_;
  }

 private:
  // Morgan-style refinement: re-rank by (rank, sorted neighbor (rank, order))
  // until the partition stops splitting.
  Ranks refine(Ranks ranks) const {
    using Key = std::pair<std::size_t, std::vector<std::pair<std::size_t, int>>>;
    std::size_t classes = class_count(ranks);
    while (true) {
      std::vector<Key> keys(ranks.size());
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        keys[i].first = ranks[i];
        for (const auto &nb : adj_[i]) {
          keys[i].second.emplace_back(ranks[nb.atom], static_cast<int>(nb.order));
        }
        std::sort(keys[i].second.begin(), keys[i].second.end());
      }
      Ranks next = dense_ranks(keys);
      const std::size_t next_classes = class_count(next);
      ranks = std::move(next);
      if (next_classes == classes) return ranks;
      classes = next_classes;
    }
  }

  // Breaks the lowest tied class one candidate at a time and keeps the
  // lexicographically smallest string. Past the leaf budget only the first
  // candidate (lowest input index) is followed.
  void search(const Ranks &ranks) {
    const std::size_t n = ranks.size();
    if (class_count(ranks) == n) {
      ++leaves_;
      std::string s = write_smiles(graph_, ranks);
      if (best_.empty() || s < best_) best_ = std::move(s);
      return;
    }
    std::vector<std::size_t> size(n, 0);
    for (std::size_t r : ranks) ++size[r];
    std::size_t tied = 0;
    while (size[tied] < 2) ++tied;
    for (std::size_t i = 0; i < n; ++i) {
      if (ranks[i] != tied) continue;
      std::vector<std::pair<std::size_t, int>> keys(n);
      for (std::size_t j = 0; j < n; ++j) keys[j] = {ranks[j], (ranks[j] == tied && j != i) ? 1 : 0};
      search(refine(dense_ranks(keys)));
      if (leaves_ >= kLeafBudget) return;
    }
  }

  static constexpr std::size_t kLeafBudget = 1024;

  const MolGraph &graph_;
  std::vector<std::vector<MolGraph::Neighbor>> adj_;
  std::string best_;
  std::size_t leaves_ = 0;
};

}  // namespace

std::string canonicalize(const MolGraph &graph) {
  std::vector<std::string> parts;
  for (const auto &comp : graph.components()) {
    parts.push_back(Canonicalizer(graph.subgraph(comp)).run());
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '.';
    out += parts[i];
  }
  return out;
}

Vocabulary::Vocabulary() : id_to_token_{kPadText, kUnkText} {
  token_to_id_[kPadText] = kPad;
  token_to_id_[kUnkText] = kUnk;
}

Vocabulary::Vocabulary(const std::vector<std::string> &tokens) : Vocabulary() {
  for (const auto &t : tokens) {
    if (!token_to_id_.emplace(t, static_cast<int>(id_to_token_.size())).second) {
      throw std::invalid_argument("Vocabulary: duplicate token '" + t + "'");
    }
    id_to_token_.push_back(t);
  }
}

int Vocabulary::id(const std::string &token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<std::string> Vocabulary::tokens() const {
  return std::vector<std::string>(id_to_token_.begin() + 2, id_to_token_.end());
}

Vocabulary build_vocabulary(std::span<const std::string> corpus) {
  std::set<std::string> distinct;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      for (auto &tok : tokenize(corpus[i])) distinct.insert(std::move(tok.text));
    } catch (const SmilesError &e) {
      throw CorpusError(e, i);
    }
  }
  distinct.erase(Vocabulary::kPadText);
  distinct.erase(Vocabulary::kUnkText);
  return Vocabulary(std::vector<std::string>(distinct.begin(), distinct.end()));
}

std::vector<int> encode_tokens(std::string_view smiles, const Vocabulary &vocab,
                               std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("encode_tokens: max_len must be >= 1");
  std::vector<int> ids;
  ids.reserve(max_len);
  for (const auto &tok : tokenize(smiles)) {
    if (ids.size() == max_len) break;
    ids.push_back(vocab.id(tok.text));
  }
  ids.resize(max_len, Vocabulary::kPad);
  return ids;
}

}  // namespace molalign::smiles
