// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

// SMILES lexing, parsing into a molecular graph, canonical writing, and the
// token vocabulary used by the molecule encoder.
//
// Supported: organic-subset and bracket atoms, explicit bonds (- = # :),
// ring closures (0-9, %nn), branches, and dot-separated fragments.
// Stereochemistry and isotopes are rejected rather than stripped.

#ifndef MOLALIGN_SMILES_H_
#define MOLALIGN_SMILES_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace molalign::smiles {

enum class TokenKind {
  kAtom,
  kBracketAtom,
  kBond,
  kRingBond,
  kBranchOpen,
  kBranchClose,
  kDot,
};

struct Token {
  std::string text;
  TokenKind kind;
  std::size_t position;  // byte offset of the first character

  bool operator==(const Token &) const = default;
};

enum class SmilesErrorKind {
  kEmptyInput,
  kUnexpectedCharacter,
  kUnterminatedBracket,
  kInvalidBracketAtom,
  kUnexpectedToken,
  kUnclosedBranch,
  kUnmatchedRingBond,
  kDuplicateBond,
  kStereoUnsupported,
};

const char *error_name(SmilesErrorKind kind);

class SmilesError : public std::runtime_error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t position, std::string detail);

  SmilesErrorKind kind() const { return kind_; }
  std::size_t position() const { return position_; }
  const std::string &detail() const { return detail_; }

 private:
  SmilesErrorKind kind_;
  std::size_t position_;
  std::string detail_;
};

// A tokenize failure inside a corpus, tagged with the entry index.
class CorpusError : public SmilesError {
 public:
  CorpusError(const SmilesError &cause, std::size_t index);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

enum class BondOrder { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Atom {
  std::string element;  // capitalized symbol, e.g. "C", "Cl"
  bool aromatic = false;
  int charge = 0;
  std::optional<int> h_count;  // set for bracket atoms only

  bool operator==(const Atom &) const = default;
};

struct Bond {
  std::size_t a;
  std::size_t b;
  BondOrder order;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  struct Neighbor {
    std::size_t atom;
    BondOrder order;
  };
  // Adjacency lists in bond insertion order.
  std::vector<std::vector<Neighbor>> adjacency() const;
  // Hydrogens attached to atom i: explicit for bracket atoms, otherwise the
  // implicit count from default valences (no valence validation).
  int hydrogen_count(std::size_t i) const;
  // Connected components as sorted atom index lists, ordered by first atom.
  std::vector<std::vector<std::size_t>> components() const;
  MolGraph subgraph(std::span<const std::size_t> atoms) const;
};

std::vector<Token> tokenize(std::string_view smiles);
MolGraph parse(std::string_view smiles);

// Writes `graph` by depth-first traversal in the order given by `ranks`
// (lower rank first). `ranks` must be a permutation of 0..n-1 and the graph
// must be connected.
std::string write_smiles(const MolGraph &graph, std::span<const std::size_t> ranks);

// Canonical SMILES: a function of the graph's isomorphism class only.
// Fragments are canonicalized independently and joined by "." in sorted order.
std::string canonicalize(const MolGraph &graph);
inline std::string canonical_smiles(std::string_view smiles) { return canonicalize(parse(smiles)); }

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char *kPadText = "<pad>";
  static constexpr const char *kUnkText = "<unk>";

  Vocabulary();
  // Ids are assigned in `tokens` order starting at 2; duplicates rejected.
  explicit Vocabulary(const std::vector<std::string> &tokens);

  int id(const std::string &token) const;  // kUnk when absent
  bool contains(const std::string &token) const { return token_to_id_.count(token) > 0; }
  const std::string &token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return id_to_token_.size(); }
  // Non-reserved tokens in id order.
  std::vector<std::string> tokens() const;
  const std::map<std::string, int> &token_to_id() const { return token_to_id_; }

  bool operator==(const Vocabulary &) const = default;

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

Vocabulary build_vocabulary(std::span<const std::string> corpus);
std::vector<int> encode_tokens(std::string_view smiles, const Vocabulary &vocab,
                               std::size_t max_len);

}  // namespace molalign::smiles

#endif  // MOLALIGN_SMILES_H_
