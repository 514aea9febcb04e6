#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hdmcts/json_io.hpp"
#include "hdmcts/problem.hpp"

namespace hdmcts {

namespace {

SymbolClass parse_class(const std::string &name) {
  if (name == "atom") return SymbolClass::Atom;
  if (name == "bond") return SymbolClass::Bond;
  if (name == "open") return SymbolClass::Open;
  if (name == "close") return SymbolClass::Close;
  if (name == "ring") return SymbolClass::Ring;
  if (name == "end") return SymbolClass::End;
  throw std::invalid_argument("unknown symbol class '" + name + "'");
}

const char *class_name(SymbolClass c) {
  switch (c) {
    case SymbolClass::Atom: return "atom";
    case SymbolClass::Bond: return "bond";
    case SymbolClass::Open: return "open";
    case SymbolClass::Close: return "close";
    case SymbolClass::Ring: return "ring";
    case SymbolClass::End: return "end";
  }
  return "atom";
}

std::size_t count_nonoverlapping(const std::string &text, const std::string &pattern) {
  if (pattern.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t pos = text.find(pattern); pos != std::string::npos;
       pos = text.find(pattern, pos + pattern.size())) {
    ++count;
  }
  return count;
}

}  // namespace

GrammarSpec GrammarSpec::builtin() {
  GrammarSpec s;
  s.symbols = {"C", "N", "O", "=", "(", ")", "1", "\n"};
  s.classes = {SymbolClass::Atom, SymbolClass::Atom,  SymbolClass::Atom, SymbolClass::Bond,
               SymbolClass::Open, SymbolClass::Close, SymbolClass::Ring, SymbolClass::End};
  //                 C     N     O     =     (     )     1     end
  s.start_weights = {0.60, 0.25, 0.15, 0.00, 0.00, 0.00, 0.00, 0.00};
  s.weights = {
      {0.30, 0.12, 0.10, 0.08, 0.14, 0.10, 0.06, 0.10},  // after C
      {0.40, 0.05, 0.08, 0.05, 0.10, 0.12, 0.08, 0.12},  // after N
      {0.40, 0.10, 0.05, 0.05, 0.10, 0.14, 0.04, 0.12},  // after O
      {0.45, 0.20, 0.35, 0.00, 0.00, 0.00, 0.00, 0.00},  // after =
      {0.45, 0.20, 0.15, 0.20, 0.00, 0.00, 0.00, 0.00},  // after (
      {0.40, 0.20, 0.10, 0.05, 0.00, 0.10, 0.00, 0.15},  // after )
      {0.45, 0.15, 0.10, 0.05, 0.10, 0.05, 0.00, 0.10},  // after 1
      {0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00},  // after end
  };
  s.max_length = 24;
  s.min_length = 3;
  s.max_open = 2;
  s.motifs = {{"C(=O)N", 6.0}, {"C(=O)", 2.0}, {"C1CC1", 3.0}, {"NC", 0.5}};
  //                 C     N    O     =    (    )    1     end
  s.symbol_scores = {0.0, 0.5, 0.25, 0.0, 0.0, 0.0, -0.5, 0.0};
  s.length_target = 16.0;
  s.length_penalty = 0.25;
  s.squash = 0.1;
  return s;
}

std::string GrammarSpec::to_text() const {
  Json j;
  j["description"] =
      "Grammar: start->atom; atom->atom|bond|open|close|ring|end; bond->atom; open->atom|bond; "
      "close->atom|bond|close|end; ring->atom|bond|open|close|end. open needs fewer than "
      "max_open unclosed parentheses, close needs one. end needs length>=min_length, no open "
      "parentheses and an even ring count. At max_length only end may follow, and a symbol is "
      "offered only if some continuation can still end within max_length. Priors are the "
      "previous symbol's weights restricted to allowed symbols and renormalised. Surrogate: "
      "sum(motif weight * non-overlapping count, each motif counted independently) + "
      "sum(symbol score) - length_penalty*|length-length_target|; reward = squash*s/(1+squash*|s|); "
      "strings without the end marker score -1.";
  j["symbols"] = symbols;
  Json classes_json = Json::array();
  for (auto c : classes) classes_json.push_back(class_name(c));
  j["classes"] = classes_json;
  j["start_weights"] = start_weights;
  j["weights"] = weights;
  j["max_length"] = max_length;
  j["min_length"] = min_length;
  j["max_open"] = max_open;
  Json motifs_json = Json::array();
  for (const auto &m : motifs) {
    Json mj;
    mj["pattern"] = m.pattern;
    mj["weight"] = m.weight;
    motifs_json.push_back(mj);
  }
  j["motifs"] = motifs_json;
  j["symbol_scores"] = symbol_scores;
  j["length_target"] = length_target;
  j["length_penalty"] = length_penalty;
  j["squash"] = squash;
  return j.dump(2) + "\n";
}

GrammarSpec GrammarSpec::from_text(const std::string &text) {
  const Json j = Json::parse(text);
  expect_fields(j,
                {"description", "symbols", "classes", "start_weights", "weights", "max_length",
                 "min_length", "max_open", "motifs", "symbol_scores", "length_target",
                 "length_penalty", "squash"},
                "grammar fixture");
  GrammarSpec s;
  s.symbols = j["symbols"].get<std::vector<std::string>>();
  for (const auto &c : j["classes"]) s.classes.push_back(parse_class(c.get<std::string>()));
  s.start_weights = j["start_weights"].get<std::vector<double>>();
  s.weights = j["weights"].get<std::vector<std::vector<double>>>();
  s.max_length = j["max_length"].get<std::size_t>();
  s.min_length = j["min_length"].get<std::size_t>();
  s.max_open = j["max_open"].get<std::size_t>();
  for (const auto &m : j["motifs"]) {
    s.motifs.push_back(GrammarMotif{m.at("pattern").get<std::string>(), m.at("weight").get<double>()});
  }
  s.symbol_scores = j["symbol_scores"].get<std::vector<double>>();
  s.length_target = j["length_target"].get<double>();
  s.length_penalty = j["length_penalty"].get<double>();
  s.squash = j["squash"].get<double>();
  return s;
}

GrammarSpec GrammarSpec::load(const std::filesystem::path &fixture) {
  std::ifstream in(fixture);
  if (!in) throw std::runtime_error("cannot read grammar fixture " + fixture.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

GrammarProblem::GrammarProblem(GrammarSpec spec) : spec_(std::move(spec)) {
  const std::size_t n = spec_.symbols.size();
  if (n == 0 || spec_.classes.size() != n || spec_.start_weights.size() != n ||
      spec_.weights.size() != n || spec_.symbol_scores.size() != n) {
    throw std::invalid_argument("grammar fixture: per-symbol tables must all have " +
                                std::to_string(n) + " entries");
  }
  for (const auto &row : spec_.weights) {
    if (row.size() != n) throw std::invalid_argument("grammar fixture: weights must be square");
  }
  for (const auto &sym : spec_.symbols) {
    if (sym.size() != 1) throw std::invalid_argument("grammar symbols must be single characters");
  }
  auto end = std::find(spec_.classes.begin(), spec_.classes.end(), SymbolClass::End);
  if (end == spec_.classes.end()) throw std::invalid_argument("grammar needs an end symbol");
  end_symbol_ = static_cast<Action>(end - spec_.classes.begin());

  // Relax distances over (last, open, parity); lengths are ignored here.
  constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max() / 4;
  const std::size_t opens = spec_.max_open + 1;
  closing_.assign((n + 1) * opens * 2, kFar);
  auto slot = [&](const Cursor &c) {
    return ((c.last ? *c.last + 1 : 0) * opens + c.open) * 2 + c.rings % 2;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t last = 0; last <= n; ++last) {
      for (std::size_t open = 0; open < opens; ++open) {
        for (std::size_t parity = 0; parity < 2; ++parity) {
          Cursor c;
          if (last > 0) c.last = static_cast<Action>(last - 1);
          c.open = open;
          c.rings = parity;
          c.length = spec_.min_length;
          std::size_t best = permitted(c, end_symbol_) ? 0 : kFar;
          for (Action a = 0; a < n; ++a) {
            if (a == end_symbol_ || !permitted(c, a)) continue;
            Cursor next = advance(c, a);
            next.length = spec_.min_length;
            best = std::min(best, closing_[slot(next)] + 1);
          }
          if (best < closing_[slot(c)]) {
            closing_[slot(c)] = best;
            changed = true;
          }
        }
      }
    }
  }
  if (closing_[0] > spec_.max_length) {
    throw std::invalid_argument("grammar fixture: no string fits in max_length");
  }
}

std::string GrammarProblem::render(const State &state) const {
  std::string out;
  for (Action a : state.actions()) out += spec_.symbols.at(a);
  return out;
}

bool GrammarProblem::permitted(const Cursor &at, Action next) const {
  const SymbolClass c = spec_.classes[next];
  const double weight = at.last ? spec_.weights[*at.last][next] : spec_.start_weights[next];
  if (weight <= 0.0) return false;
  if (!at.last) return c == SymbolClass::Atom;
  const SymbolClass last = spec_.classes[*at.last];
  if (c == SymbolClass::End) {
    return at.length >= spec_.min_length && at.open == 0 && at.rings % 2 == 0 &&
           last != SymbolClass::Bond && last != SymbolClass::Open && last != SymbolClass::End;
  }
  if (at.length >= spec_.max_length) return false;
  const bool can_open = at.open < spec_.max_open;
  const bool can_close = at.open > 0;
  switch (last) {
    case SymbolClass::Atom:
      if (c == SymbolClass::Open) return can_open;
      if (c == SymbolClass::Close) return can_close;
      return true;
    case SymbolClass::Bond: return c == SymbolClass::Atom;
    case SymbolClass::Open: return c == SymbolClass::Atom || c == SymbolClass::Bond;
    case SymbolClass::Close:
      return c == SymbolClass::Atom || c == SymbolClass::Bond ||
             (c == SymbolClass::Close && can_close);
    case SymbolClass::Ring:
      return c == SymbolClass::Atom || c == SymbolClass::Bond ||
             (c == SymbolClass::Open && can_open) || (c == SymbolClass::Close && can_close);
    case SymbolClass::End: return false;
  }
  return false;
}

GrammarProblem::Cursor GrammarProblem::advance(Cursor at, Action next) const {
  const SymbolClass c = spec_.classes[next];
  at.last = next;
  if (c == SymbolClass::End) return at;
  ++at.length;
  if (c == SymbolClass::Open) ++at.open;
  if (c == SymbolClass::Close && at.open > 0) --at.open;
  if (c == SymbolClass::Ring) ++at.rings;
  return at;
}

std::size_t GrammarProblem::closing_distance(const Cursor &at) const {
  const std::size_t slot =
      ((at.last ? *at.last + 1 : 0) * (spec_.max_open + 1) + at.open) * 2 + at.rings % 2;
  const std::size_t shortfall =
      at.length < spec_.min_length ? spec_.min_length - at.length : 0;
  return std::max(closing_[slot], shortfall);
}

std::vector<Candidate> GrammarProblem::allowed(const State &state) const {
  Cursor at;
  for (Action a : state.actions()) {
    if (spec_.classes.at(a) == SymbolClass::End) return {};
    at = advance(at, a);
  }
  std::vector<Candidate> out;
  double total = 0.0;
  for (Action a = 0; a < spec_.symbols.size(); ++a) {
    if (!permitted(at, a)) continue;
    // Never step into a prefix that cannot be closed within max_length.
    if (a != end_symbol_) {
      const Cursor next = advance(at, a);
      if (next.length + closing_distance(next) > spec_.max_length) continue;
    }
    const double w = at.last ? spec_.weights[*at.last][a] : spec_.start_weights[a];
    out.push_back(Candidate{a, w});
    total += w;
  }
  for (auto &c : out) c.prior /= total;
  return out;
}

std::vector<Candidate> GrammarProblem::expand_candidates(const State &state) {
  return allowed(state);
}

bool GrammarProblem::is_terminal(const State &state) {
  if (!state.is_root() && state.back() == end_symbol_) return true;
  return allowed(state).empty();
}

Rollout GrammarProblem::rollout(const State &state, Rng &rng) {
  State current = state;
  for (;;) {
    auto candidates = allowed(current);
    if (candidates.empty()) break;
    const double u = unit_real(rng);
    double cumulative = 0.0;
    Action pick = candidates.back().action;
    for (const auto &c : candidates) {
      cumulative += c.prior;
      if (u < cumulative) {
        pick = c.action;
        break;
      }
    }
    current = current.child(pick);
  }
  std::string solution = render(current);
  return Rollout{std::move(current), std::move(solution)};
}

double GrammarProblem::surrogate(const std::string &body) const {
  double s = 0.0;
  for (const auto &m : spec_.motifs) {
    s += m.weight * static_cast<double>(count_nonoverlapping(body, m.pattern));
  }
  for (char ch : body) {
    for (std::size_t a = 0; a < spec_.symbols.size(); ++a) {
      if (spec_.symbols[a][0] == ch) s += spec_.symbol_scores[a];
    }
  }
  s -= spec_.length_penalty * std::abs(static_cast<double>(body.size()) - spec_.length_target);
  return s;
}

double GrammarProblem::score(const std::string &solution) {
  // Re-derive the action sequence and require that every step was permitted.
  State state;
  for (char ch : solution) {
    auto candidates = allowed(state);
    auto it = std::find_if(candidates.begin(), candidates.end(), [&](const Candidate &c) {
      return spec_.symbols[c.action][0] == ch;
    });
    if (it == candidates.end()) return -1.0;
    state = state.child(it->action);
  }
  if (state.is_root() || state.back() != end_symbol_) return -1.0;
  const std::string body = solution.substr(0, solution.size() - 1);
  return squash_score(surrogate(body), spec_.squash);
}

}  // namespace hdmcts
